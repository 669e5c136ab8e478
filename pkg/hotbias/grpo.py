"""Rewards, group-relative advantages and the clipped GRPO loss.

Nothing here updates a model: the loss and its analytic gradient with respect
to the policy log-probabilities are plain functions over arrays, checked
against central finite differences by `check_gradients`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from hotbias.exceptions import ValidationError
from hotbias.textmetrics import TextLike, contains, wer
from hotbias.types import JsonObject

logger = logging.getLogger(__name__)

DEFAULT_GROUP_SIZE = 6
DEFAULT_KL_WEIGHT = 0.04
DEFAULT_CLIP_EPS = 0.2
ADVANTAGE_EPS = 1e-8
MIN_REWARD_STD = 1e-6
UNIT_STD_TOLERANCE = 1e-6

FloatArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class RewardWeights:
    """Weights of the two reward terms in the total reward."""

    match: float = 1.0
    wer: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.match) and math.isfinite(self.wer)):
            raise ValidationError(
                message="Reward weights must be finite.",
                details={"match": self.match, "wer": self.wer},
            )


@dataclass(frozen=True)
class MatchReward:
    """Match reward with its per-candidate indicators."""

    value: float
    per_candidate: Dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class RewardRecord:
    """Reward of one sampled response."""

    match_reward: float
    wer_reward: float
    total: float
    per_candidate: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> JsonObject:
        """Convert to the JSON document emitted by `grpo score`."""

        return {
            "match_reward": self.match_reward,
            "wer_reward": self.wer_reward,
            "total": self.total,
            "per_candidate": {k: v for k, v in sorted(self.per_candidate.items())},
        }


@dataclass(frozen=True)
class AdvantageGroup:
    """Rewards of one group of responses and their normalized advantages."""

    rewards: Tuple[float, ...]
    advantages: Tuple[float, ...]

    @property
    def group_size(self) -> int:
        """Number of responses G."""

        return len(self.rewards)


@dataclass(frozen=True)
class PolicyStep:
    """Token log-probabilities of one response under three models.

    Args:
        logp_policy: Log-probs under the policy being optimized.
        logp_old: Log-probs under the policy that sampled the response.
        logp_ref: Log-probs under the frozen reference model.
        advantage: Sequence-level advantage, broadcast to every token.
        kl_weight: Weight beta of the KL penalty.
        clip_eps: Clip range epsilon of the probability ratio.

    Raises:
        ValidationError: If the lists are empty or misaligned, a log-prob is
            positive, or any value is not finite.
    """

    logp_policy: Tuple[float, ...]
    logp_old: Tuple[float, ...]
    logp_ref: Tuple[float, ...]
    advantage: float
    kl_weight: float = DEFAULT_KL_WEIGHT
    clip_eps: float = DEFAULT_CLIP_EPS

    def __post_init__(self) -> None:
        for name in ("logp_policy", "logp_old", "logp_ref"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        lengths = {len(self.logp_policy), len(self.logp_old), len(self.logp_ref)}
        if len(lengths) != 1 or 0 in lengths:
            raise ValidationError(
                message="PolicyStep log-prob lists must be non-empty and aligned.",
                details={
                    "policy": len(self.logp_policy),
                    "old": len(self.logp_old),
                    "ref": len(self.logp_ref),
                },
            )
        values = self.logp_policy + self.logp_old + self.logp_ref
        scalars = (self.advantage, self.kl_weight, self.clip_eps)
        if not all(math.isfinite(v) for v in values + scalars):
            raise ValidationError(message="PolicyStep inputs must be finite.")
        if any(v > 0 for v in values):
            raise ValidationError(message="Log-probabilities must be <= 0.")
        if self.kl_weight < 0 or not 0 <= self.clip_eps < 1:
            raise ValidationError(
                message="kl_weight must be >= 0 and clip_eps in [0, 1).",
                details={"kl_weight": self.kl_weight, "clip_eps": self.clip_eps},
            )

    def arrays(self) -> Tuple[FloatArray, FloatArray, FloatArray]:
        """The three log-prob lists as float64 arrays."""

        return (
            np.asarray(self.logp_policy, dtype=np.float64),
            np.asarray(self.logp_old, dtype=np.float64),
            np.asarray(self.logp_ref, dtype=np.float64),
        )


def match_reward(output: str, reference: str, candidates: Sequence[str]) -> MatchReward:
    """Agreement between output and reference on which candidates they mention.

    A candidate scores 1 when it occurs in both texts or in neither, else 0.
    The reward is the mean indicator, 1.0 for an empty candidate list.
    """

    per_candidate = {
        c: int(contains(output, c) == contains(reference, c)) for c in candidates
    }
    if not per_candidate:
        return MatchReward(value=1.0)
    value = sum(per_candidate.values()) / len(per_candidate)
    return MatchReward(value=value, per_candidate=per_candidate)


def wer_reward(reference: TextLike, output: TextLike) -> float:
    """`1 - WER`, floored at 0.

    Raises:
        ValidationError: If the reference is empty.
    """

    return max(0.0, 1.0 - wer(reference, output))


def score_response(
    reference: str,
    output: str,
    candidates: Sequence[str],
    weights: RewardWeights = RewardWeights(),
) -> RewardRecord:
    """Combine the match and WER rewards of one response."""

    match = match_reward(output, reference, candidates)
    wer_value = wer_reward(reference, output)
    return RewardRecord(
        match_reward=match.value,
        wer_reward=wer_value,
        total=weights.match * match.value + weights.wer * wer_value,
        per_candidate=match.per_candidate,
    )


def group_advantages(rewards: Sequence[float]) -> List[float]:
    """Normalize a group of rewards to zero mean and unit population std.

    Args:
        rewards: Rewards of the G responses of one prompt.

    Returns:
        `(r - mean) / (std + 1e-8)` per response. When the 1e-8 offset would
        pull the advantage std more than 1e-6 away from 1 the divisor is the
        bare std. Groups whose reward std is at most 1e-6 get exact zeros.

    Raises:
        ValidationError: If G < 2 or a reward is not finite.
    """

    values = np.asarray(rewards, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] < 2:
        raise ValidationError(
            message="A reward group needs at least two responses.",
            details={"size": int(values.size)},
        )
    if not np.all(np.isfinite(values)):
        raise ValidationError(message="Rewards must be finite.")
    std = float(values.std())
    if std <= MIN_REWARD_STD:
        return [0.0] * values.shape[0]
    divisor = std + ADVANTAGE_EPS if ADVANTAGE_EPS / std <= UNIT_STD_TOLERANCE else std
    centered = values - values.mean()
    return [float(v) for v in centered / divisor]


def advantage_group(rewards: Sequence[float]) -> AdvantageGroup:
    """Wrap `group_advantages` into an `AdvantageGroup`."""

    return AdvantageGroup(
        rewards=tuple(float(r) for r in rewards),
        advantages=tuple(group_advantages(rewards)),
    )


def _loss(
    policy: FloatArray,
    old: FloatArray,
    ref: FloatArray,
    advantage: float,
    kl_weight: float,
    clip_eps: float,
) -> float:
    ratio = np.exp(policy - old)
    surrogate = np.minimum(
        ratio * advantage, np.clip(ratio, 1 - clip_eps, 1 + clip_eps) * advantage
    )
    delta = ref - policy
    k3 = np.exp(delta) - delta - 1.0
    return float(np.mean(-surrogate + kl_weight * k3))


def kl_k3(logp_policy: Sequence[float], logp_ref: Sequence[float]) -> List[float]:
    """Per-token k3 estimate of KL(policy || reference); always >= 0."""

    delta = np.asarray(logp_ref, dtype=np.float64) - np.asarray(
        logp_policy, dtype=np.float64
    )
    return [float(v) for v in np.exp(delta) - delta - 1.0]


def grpo_loss(step: PolicyStep) -> float:
    """Clipped-surrogate GRPO loss with the k3 KL penalty, averaged over tokens."""

    policy, old, ref = step.arrays()
    return _loss(policy, old, ref, step.advantage, step.kl_weight, step.clip_eps)


def grpo_loss_grad(step: PolicyStep) -> List[float]:
    """Gradient of `grpo_loss` with respect to each policy log-prob.

    The surrogate contributes `-rho * A` where the unclipped branch is active
    and nothing where clipping holds the ratio; the KL term contributes
    `beta * (1 - exp(logp_ref - logp_policy))`.
    """

    policy, old, ref = step.arrays()
    ratio = np.exp(policy - old)
    advantage = step.advantage
    unclipped = ratio * advantage
    clipped = np.clip(ratio, 1 - step.clip_eps, 1 + step.clip_eps) * advantage
    surrogate_grad = np.where(unclipped <= clipped, -unclipped, 0.0)
    kl_grad = step.kl_weight * (1.0 - np.exp(ref - policy))
    grad = (surrogate_grad + kl_grad) / policy.shape[0]
    return [float(g) for g in grad]


def numeric_loss_grad(step: PolicyStep, h: float = 1e-5) -> List[float]:
    """Central finite-difference gradient of `grpo_loss` over policy log-probs."""

    policy, old, ref = step.arrays()
    grad = []
    for t in range(policy.shape[0]):
        up = policy.copy()
        down = policy.copy()
        up[t] += h
        down[t] -= h
        args = (old, ref, step.advantage, step.kl_weight, step.clip_eps)
        grad.append((_loss(up, *args) - _loss(down, *args)) / (2 * h))
    return grad


def random_policy_step(
    rng: np.random.Generator,
    n_tokens: int = 8,
    *,
    kl_weight: float = DEFAULT_KL_WEIGHT,
    clip_eps: float = DEFAULT_CLIP_EPS,
    margin: float = 1e-3,
) -> PolicyStep:
    """Draw a random step whose ratios stay `margin` away from the clip edges.

    The loss is not differentiable where a ratio sits exactly on a clip edge.
    """

    old = -rng.uniform(0.05, 4.0, size=n_tokens)
    ref = -rng.uniform(0.05, 4.0, size=n_tokens)
    log_ratio = rng.uniform(-0.5, 0.5, size=n_tokens)
    edges = np.array([1 - clip_eps, 1 + clip_eps])
    for t in range(n_tokens):
        while (
            np.min(np.abs(np.exp(log_ratio[t]) - edges)) < margin
            or old[t] + log_ratio[t] > 0
        ):
            log_ratio[t] = rng.uniform(-0.5, 0.5)
    return PolicyStep(
        logp_policy=tuple(old + log_ratio),
        logp_old=tuple(old),
        logp_ref=tuple(ref),
        advantage=float(rng.normal()),
        kl_weight=kl_weight,
        clip_eps=clip_eps,
    )


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of a finite-difference gradient check."""

    steps: int
    tokens: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        """True when every gradient entry is within tolerance."""

        return self.max_rel_error <= self.tolerance

    def to_dict(self) -> JsonObject:
        """Convert to the JSON document emitted by `grpo check-grad`."""

        return {
            "steps": self.steps,
            "tokens": self.tokens,
            "max_rel_error": self.max_rel_error,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def check_gradients(
    n_steps: int = 100,
    n_tokens: int = 8,
    *,
    seed: int = 0,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    kl_weight: float = DEFAULT_KL_WEIGHT,
) -> GradCheckReport:
    """Compare analytic and central-difference gradients on random steps.

    Relative error is `|a - n| / max(|a|, |n|, 1e-6)` per token.
    """

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_steps):
        step = random_policy_step(rng, n_tokens, kl_weight=kl_weight)
        analytic = grpo_loss_grad(step)
        numeric = numeric_loss_grad(step, h=h)
        for a, n in zip(analytic, numeric):
            worst = max(worst, abs(a - n) / max(abs(a), abs(n), 1e-6))
    logger.info("gradient check: %d steps, max relative error %.3e", n_steps, worst)
    return GradCheckReport(
        steps=n_steps, tokens=n_tokens, max_rel_error=worst, tolerance=tolerance
    )


def score_rows(
    rows: Sequence[JsonObject],
    weights: RewardWeights = RewardWeights(),
) -> List[JsonObject]:
    """Score `grpo score` input rows.

    Each row carries `reference`, `output` and `candidates`. Rows sharing a
    `group` value additionally receive the group-normalized `advantage` of
    their total reward.

    Raises:
        ValidationError: If a row is malformed or a group has fewer than two
            rows.
    """

    records: List[RewardRecord] = []
    groups: Dict[str, List[int]] = {}
    for position, row in enumerate(rows):
        reference = row.get("reference")
        output = row.get("output")
        candidates = row.get("candidates", [])
        if not isinstance(reference, str) or not isinstance(output, str):
            raise ValidationError(
                message="Expected string 'reference' and 'output'.", details=dict(row)
            )
        if not isinstance(candidates, list) or not all(
            isinstance(c, str) for c in candidates
        ):
            raise ValidationError(
                message="Expected 'candidates' to be a list of strings.",
                details=dict(row),
            )
        records.append(
            score_response(reference, output, [str(c) for c in candidates], weights)
        )
        group: Optional[object] = row.get("group")
        if group is not None:
            groups.setdefault(str(group), []).append(position)

    payloads = [record.to_dict() for record in records]
    for members in groups.values():
        advantages = group_advantages([records[i].total for i in members])
        for i, value in zip(members, advantages):
            payloads[i]["advantage"] = value
    return payloads
