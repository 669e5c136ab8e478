"""Tests for hotbias.grpo."""

from __future__ import annotations

import numpy as np
import pytest

from hotbias.exceptions import ValidationError
from hotbias.grpo import (
    PolicyStep,
    RewardWeights,
    advantage_group,
    check_gradients,
    grpo_loss,
    grpo_loss_grad,
    group_advantages,
    kl_k3,
    match_reward,
    numeric_loss_grad,
    random_policy_step,
    score_response,
    score_rows,
    wer_reward,
)


@pytest.mark.parametrize(
    ("output", "reference", "expected"),
    [
        ("we use qwen", "we use qwen", 1),
        ("we use it", "we use it", 1),
        ("we use qwen", "we use it", 0),
        ("we use it", "we use qwen", 0),
    ],
)
def test_match_reward_truth_table(output: str, reference: str, expected: int) -> None:
    """A candidate agrees when it is in both texts or in neither."""

    reward = match_reward(output, reference, ["qwen"])
    assert reward.per_candidate == {"qwen": expected}
    assert reward.value == float(expected)


def test_match_reward_averages_candidates() -> None:
    """The reward is the mean indicator; no candidates means full reward."""

    reward = match_reward("open qwen now", "open tongyi now", ["qwen", "tongyi", "x"])
    assert reward.per_candidate == {"qwen": 0, "tongyi": 0, "x": 1}
    assert reward.value == pytest.approx(1 / 3)
    assert match_reward("a", "b", []).value == 1.0


def test_wer_reward_contract() -> None:
    """1 for a perfect output, in [0, 1], and 0 when WER exceeds one."""

    assert wer_reward("a b c", "a b c") == 1.0
    assert wer_reward("a b c", "a x c") == pytest.approx(2 / 3)
    assert wer_reward("a", "x y z") == 0.0
    with pytest.raises(ValidationError):
        wer_reward("", "a")


def test_score_response_weights_terms() -> None:
    """The total is the weighted sum of the two rewards."""

    record = score_response(
        "we use qwen", "we use qwin", ["qwen"], RewardWeights(match=2.0, wer=0.5)
    )
    assert record.match_reward == 0.0
    assert record.wer_reward == pytest.approx(2 / 3)
    assert record.total == pytest.approx(0.5 * 2 / 3)
    assert record.to_dict()["per_candidate"] == {"qwen": 0}


def test_reward_weights_must_be_finite() -> None:
    """Infinite or NaN weights are rejected."""

    with pytest.raises(ValidationError):
        RewardWeights(match=float("inf"))
    with pytest.raises(ValidationError):
        RewardWeights(wer=float("nan"))


def test_group_advantages_are_standardized() -> None:
    """Random groups of six have zero mean and unit population std."""

    rng = np.random.default_rng(0)
    for _ in range(1000):
        rewards = rng.normal(size=6) * rng.uniform(0.1, 5.0)
        advantages = np.array(group_advantages(list(rewards)))
        assert abs(advantages.mean()) < 1e-9
        assert advantages.std() == pytest.approx(1.0, abs=1e-6)


def test_group_advantages_constant_group_is_zero() -> None:
    """Equal rewards carry no signal."""

    assert group_advantages([0.7] * 6) == [0.0] * 6
    group = advantage_group([1.0, 1.0])
    assert group.group_size == 2
    assert group.advantages == (0.0, 0.0)


@pytest.mark.parametrize("scale", [1.1e-6, 1e-5, 1e-4, 1e-3, 5e-3])
def test_group_advantages_stay_unit_std_for_tiny_spreads(scale: float) -> None:
    """Reward spreads just above the zero threshold still standardize exactly."""

    advantages = np.array(group_advantages([0.0, 2.0 * scale] * 3))
    assert abs(advantages.mean()) < 1e-9
    assert advantages.std() == pytest.approx(1.0, abs=1e-6)


def test_group_advantages_zero_for_near_constant_groups() -> None:
    """A reward std at or below 1e-6 yields exact zeros."""

    assert group_advantages([1.0, 1.0 + 1e-12] * 3) == [0.0] * 6
    assert group_advantages([0.0, 1.8e-6] * 3) == [0.0] * 6


@pytest.mark.parametrize("rewards", [[1.0], [], [1.0, float("nan")]])
def test_group_advantages_rejects_bad_groups(rewards: list) -> None:
    """Singleton, empty and non-finite groups are errors."""

    with pytest.raises(ValidationError):
        group_advantages(rewards)


def test_kl_k3_is_non_negative_and_zero_at_equality() -> None:
    """The k3 estimator is zero iff the log-probs agree."""

    assert kl_k3([-1.0, -2.0], [-1.0, -2.0]) == [0.0, 0.0]
    assert all(v > 0 for v in kl_k3([-1.0, -0.5], [-2.0, -0.1]))


def test_loss_without_kl_at_unit_ratio() -> None:
    """With policy equal to old and no KL, the loss is minus the advantage."""

    step = PolicyStep(
        logp_policy=(-1.0, -2.0),
        logp_old=(-1.0, -2.0),
        logp_ref=(-0.5, -0.5),
        advantage=0.8,
        kl_weight=0.0,
    )
    assert grpo_loss(step) == pytest.approx(-0.8)
    assert grpo_loss_grad(step) == pytest.approx([-0.4, -0.4])


def test_clipped_ratio_has_no_surrogate_gradient() -> None:
    """A positive advantage above the clip range stops pushing the ratio up."""

    step = PolicyStep(
        logp_policy=(-0.5,),
        logp_old=(-1.0,),
        logp_ref=(-0.5,),
        advantage=1.0,
        kl_weight=0.0,
    )
    assert grpo_loss_grad(step) == [0.0]
    assert grpo_loss(step) == pytest.approx(-1.2)


def test_analytic_gradient_matches_finite_differences() -> None:
    """One hundred random steps agree with central differences."""

    report = check_gradients(100, 8, seed=42)
    assert report.passed
    assert report.max_rel_error <= 1e-4
    assert report.to_dict()["passed"] is True


def test_random_step_gradient_pointwise() -> None:
    """Entry-by-entry comparison on a single step."""

    step = random_policy_step(np.random.default_rng(9), 5)
    assert grpo_loss_grad(step) == pytest.approx(
        numeric_loss_grad(step), rel=1e-4, abs=1e-8
    )


def test_policy_step_validation() -> None:
    """Misaligned, positive or non-finite log-probs are rejected."""

    with pytest.raises(ValidationError):
        PolicyStep((-1.0,), (-1.0, -2.0), (-1.0,), 0.0)
    with pytest.raises(ValidationError):
        PolicyStep((0.5,), (-1.0,), (-1.0,), 0.0)
    with pytest.raises(ValidationError):
        PolicyStep((-1.0,), (-1.0,), (-1.0,), float("nan"))
    with pytest.raises(ValidationError):
        PolicyStep((-1.0,), (-1.0,), (-1.0,), 0.0, clip_eps=1.0)


def test_score_rows_adds_group_advantages() -> None:
    """Rows sharing a group get normalized advantages of their totals."""

    rows = [
        {"reference": "a b", "output": "a b", "candidates": [], "group": "g"},
        {"reference": "a b", "output": "a x", "candidates": [], "group": "g"},
        {"reference": "a b", "output": "a b", "candidates": ["b"]},
    ]
    scored = score_rows(rows)
    assert scored[0]["advantage"] == pytest.approx(1.0)
    assert scored[1]["advantage"] == pytest.approx(-1.0)
    assert "advantage" not in scored[2]
    assert scored[2]["total"] == 2.0


def test_score_rows_rejects_malformed_rows() -> None:
    """Missing text fields and non-list candidates are errors."""

    with pytest.raises(ValidationError):
        score_rows([{"reference": "a"}])
    with pytest.raises(ValidationError):
        score_rows([{"reference": "a", "output": "a", "candidates": "a"}])
    with pytest.raises(ValidationError):
        score_rows([{"reference": "a", "output": "a", "group": 1}])
