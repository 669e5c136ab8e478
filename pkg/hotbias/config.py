"""Run configuration: YAML loading, validation and environment fallbacks."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import yaml

from hotbias.datasets import DatasetPaths
from hotbias.decoder import BeamConfig
from hotbias.exceptions import ConfigError, HotbiasError
from hotbias.grpo import RewardWeights
from hotbias.prompt import DEFAULT_TEMPLATE, PromptTemplate
from hotbias.types import JsonObject

logger = logging.getLogger(__name__)

DEFAULT_K_VALUES: Tuple[int, ...] = (1, 2, 5, 10)
DEFAULT_OPERATING_K = 2
DEFAULT_SEED = 1234
DEFAULT_FRAME_SUBSAMPLE = 8
DEFAULT_REPORT_DIR = "reports"

ORACLE_NAMES = ("lookup", "echo", "null", "dropout", "remote")

_ENV_PREFIX = "HOTBIAS"


def _get_env_int(suffix: str, *, default: int) -> int:
    """Read and parse an int from an env var, with safe fallback."""

    raw = os.getenv(f"{_ENV_PREFIX}_{suffix}")
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning("ignoring unparsable %s_%s=%r", _ENV_PREFIX, suffix, raw)
        return default


def _check_keys(section: str, data: Mapping[str, Any], allowed: Sequence[str]) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(
            message=f"Unknown key(s) in {section}: {', '.join(unknown)}.",
            stage="config",
            details={"section": section, "unknown": list(unknown)},
        )


def _section(data: Mapping[str, Any], key: str) -> Dict[str, Any]:
    value = data.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(
            message=f"'{key}' must be a mapping.", stage="config", details={key: value}
        )
    return value


@dataclass(frozen=True)
class RadaOptions:
    """Vocabulary-filtering options.

    Attributes:
        enabled: Whether the RADA arm runs.
        oracle: One of `lookup`, `echo`, `null`, `dropout`, `remote`.
        min_correct_fraction: Share of carriers that must come back correct
            for a hotword to count as recognized.
        carriers_per_word: Carrier sentences checked per hotword.
        dropout_rate: Character-drop rate of the `dropout` oracle.
    """

    enabled: bool = False
    oracle: str = "lookup"
    min_correct_fraction: float = 1.0
    carriers_per_word: int = 3
    dropout_rate: float = 0.1

    def __post_init__(self) -> None:
        if self.oracle not in ORACLE_NAMES:
            raise ConfigError(
                message=f"Unknown oracle {self.oracle!r}.",
                stage="config",
                details={"oracle": self.oracle, "choices": list(ORACLE_NAMES)},
            )
        if not 0.0 < self.min_correct_fraction <= 1.0:
            raise ConfigError(
                message="rada.min_correct_fraction must be in (0, 1].",
                stage="config",
                details={"min_correct_fraction": self.min_correct_fraction},
            )
        if self.carriers_per_word < 1:
            raise ConfigError(
                message="rada.carriers_per_word must be >= 1.",
                stage="config",
                details={"carriers_per_word": self.carriers_per_word},
            )
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise ConfigError(
                message="rada.dropout_rate must be in [0, 1].",
                stage="config",
                details={"dropout_rate": self.dropout_rate},
            )


@dataclass(frozen=True)
class FuzzyOptions:
    """Alias-index options of the fuzzy retrieval arm."""

    enabled: bool = False
    variants_per_word: int = 4
    include_carriers: bool = True

    def __post_init__(self) -> None:
        if self.variants_per_word < 0:
            raise ConfigError(
                message="fuzzy.variants_per_word must be >= 0.",
                stage="config",
                details={"variants_per_word": self.variants_per_word},
            )


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on besides the data files.

    Values resolve as explicit config key > environment variable > default for
    `seed` (`HOTBIAS_SEED`), `workers` (`HOTBIAS_WORKERS`) and `report_dir`
    (`HOTBIAS_REPORT_DIR`).

    Attributes:
        k_values: Retrieval depths swept in the reports.
        operating_k: Depth used by `decode`.
        beam: Beam search settings.
        joint: Decode jointly with and without the bias prompt.
        reward: GRPO reward weights.
        rada: Vocabulary-filtering options.
        fuzzy: Fuzzy retrieval options.
        seed: Master seed.
        dimension: Embedding dimension.
        frame_subsample: Frame subsampling factor of the audio proxy.
        workers: Thread count for per-utterance work.
        dataset: Data files; `None` selects the bundled toy dataset.
        report_dir: Output directory of `run`.
        prompt_template: Instruction and lead-in of the bias prompt.

    Raises:
        ConfigError: If a value is invalid.
    """

    k_values: Tuple[int, ...] = DEFAULT_K_VALUES
    operating_k: int = DEFAULT_OPERATING_K
    beam: BeamConfig = field(default_factory=BeamConfig)
    joint: bool = True
    reward: RewardWeights = field(default_factory=RewardWeights)
    rada: RadaOptions = field(default_factory=RadaOptions)
    fuzzy: FuzzyOptions = field(default_factory=FuzzyOptions)
    seed: int = DEFAULT_SEED
    dimension: int = 256
    frame_subsample: int = DEFAULT_FRAME_SUBSAMPLE
    workers: int = 1
    dataset: Optional[DatasetPaths] = None
    report_dir: Path = Path(DEFAULT_REPORT_DIR)
    prompt_template: PromptTemplate = DEFAULT_TEMPLATE

    def __post_init__(self) -> None:
        ks = list(self.k_values)
        if not ks or ks[0] < 1 or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ConfigError(
                message="k_values must be non-empty, positive and strictly "
                "increasing.",
                stage="config",
                details={"k_values": ks},
            )
        checks = {
            "operating_k": self.operating_k >= 0,
            "dimension": self.dimension >= 1,
            "frame_subsample": self.frame_subsample >= 1,
            "workers": self.workers >= 1,
        }
        for name, ok in checks.items():
            if not ok:
                raise ConfigError(
                    message=f"Invalid {name}: {getattr(self, name)!r}.",
                    stage="config",
                    details={name: getattr(self, name)},
                )

    @property
    def uses_toy_dataset(self) -> bool:
        """Whether the bundled toy dataset is selected."""

        return self.dataset is None

    @classmethod
    def from_dict(
        cls, data: Mapping[str, Any], *, base_dir: Union[str, Path, None] = None
    ) -> "RunConfig":
        """Build a config from parsed YAML.

        Relative dataset paths resolve against `base_dir`.

        Raises:
            ConfigError: On unknown keys or invalid values.
        """

        _check_keys("config", data, _TOP_LEVEL_KEYS)
        try:
            return cls._from_dict(data, Path(base_dir or "."))
        except ConfigError:
            raise
        except HotbiasError as exc:
            raise ConfigError(
                message=exc.message, stage="config", details=exc.details
            ) from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(message=f"Invalid config: {exc}", stage="config") from exc

    @classmethod
    def _from_dict(cls, data: Mapping[str, Any], base_dir: Path) -> "RunConfig":
        beam = _section(data, "beam")
        _check_keys("beam", beam, ("beam_width", "max_len", "length_penalty"))
        reward = _section(data, "reward")
        _check_keys("reward", reward, ("match", "wer"))
        rada = _section(data, "rada")
        _check_keys(
            "rada",
            rada,
            (
                "enabled",
                "oracle",
                "min_correct_fraction",
                "carriers_per_word",
                "dropout_rate",
            ),
        )
        fuzzy = _section(data, "fuzzy")
        _check_keys(
            "fuzzy", fuzzy, ("enabled", "variants_per_word", "include_carriers")
        )
        template = _section(data, "prompt_template")
        _check_keys("prompt_template", template, ("instruction", "bias_lead"))

        seed = data.get("seed")
        workers = data.get("workers")
        report_dir = data.get("report_dir") or os.getenv(
            f"{_ENV_PREFIX}_REPORT_DIR", DEFAULT_REPORT_DIR
        )
        return cls(
            k_values=tuple(int(k) for k in data.get("k_values", DEFAULT_K_VALUES)),
            operating_k=int(data.get("operating_k", DEFAULT_OPERATING_K)),
            beam=BeamConfig(**beam),
            joint=bool(data.get("joint", True)),
            reward=RewardWeights(**reward),
            rada=RadaOptions(**rada),
            fuzzy=FuzzyOptions(**fuzzy),
            seed=(
                int(seed)
                if seed is not None
                else _get_env_int("SEED", default=DEFAULT_SEED)
            ),
            dimension=int(data.get("dimension", 256)),
            frame_subsample=int(
                data.get("frame_subsample", DEFAULT_FRAME_SUBSAMPLE)
            ),
            workers=(
                int(workers)
                if workers is not None
                else _get_env_int("WORKERS", default=1)
            ),
            dataset=_dataset_paths(data.get("dataset", "toy"), base_dir),
            report_dir=Path(report_dir),
            prompt_template=(
                PromptTemplate(**template) if template else DEFAULT_TEMPLATE
            ),
        )

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RunConfig":
        """Load a YAML config file.

        Raises:
            ConfigError: If the file cannot be read or parsed, or is invalid.
        """

        source = Path(path)
        try:
            data = yaml.safe_load(source.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(
                message=f"Cannot read config {source}: {exc.strerror}",
                stage="config",
                details={"path": str(source)},
            ) from exc
        except yaml.YAMLError as exc:
            raise ConfigError(
                message=f"Invalid YAML in {source}: {exc}",
                stage="config",
                details={"path": str(source)},
            ) from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(
                message=f"Config {source} must be a mapping.",
                stage="config",
                details={"path": str(source)},
            )
        logger.debug("loaded config %s", source)
        return cls.from_dict(data, base_dir=source.parent)

    def with_overrides(
        self,
        *,
        seed: Optional[int] = None,
        report_dir: Union[str, Path, None] = None,
        k_values: Optional[Sequence[int]] = None,
        operating_k: Optional[int] = None,
        beam_width: Optional[int] = None,
        joint: Optional[bool] = None,
        workers: Optional[int] = None,
    ) -> "RunConfig":
        """Return a copy with command-line overrides applied."""

        changes: Dict[str, Any] = {
            "seed": seed,
            "k_values": tuple(k_values) if k_values is not None else None,
            "operating_k": operating_k,
            "joint": joint,
            "workers": workers,
            "report_dir": Path(report_dir) if report_dir is not None else None,
        }
        changes = {k: v for k, v in changes.items() if v is not None}
        try:
            if beam_width is not None:
                changes["beam"] = replace(self.beam, beam_width=beam_width)
            return replace(self, **changes)
        except ConfigError:
            raise
        except HotbiasError as exc:
            raise ConfigError(
                message=exc.message, stage="config", details=exc.details
            ) from exc

    def to_dict(self) -> JsonObject:
        """Config echo embedded in reports; excludes machine-local settings."""

        return {
            "k_values": list(self.k_values),
            "operating_k": self.operating_k,
            "beam": {
                "beam_width": self.beam.beam_width,
                "max_len": self.beam.max_len,
                "length_penalty": self.beam.length_penalty,
            },
            "joint": self.joint,
            "reward": {"match": self.reward.match, "wer": self.reward.wer},
            "rada": {
                "enabled": self.rada.enabled,
                "oracle": self.rada.oracle,
                "min_correct_fraction": self.rada.min_correct_fraction,
                "carriers_per_word": self.rada.carriers_per_word,
                "dropout_rate": self.rada.dropout_rate,
            },
            "fuzzy": {
                "enabled": self.fuzzy.enabled,
                "variants_per_word": self.fuzzy.variants_per_word,
                "include_carriers": self.fuzzy.include_carriers,
            },
            "seed": self.seed,
            "dimension": self.dimension,
            "frame_subsample": self.frame_subsample,
            "dataset": "toy" if self.dataset is None else self.dataset.to_dict(),
            "prompt_template": {
                "instruction": self.prompt_template.instruction,
                "bias_lead": self.prompt_template.bias_lead,
            },
        }


_TOP_LEVEL_KEYS = (
    "k_values",
    "operating_k",
    "beam",
    "joint",
    "reward",
    "rada",
    "fuzzy",
    "seed",
    "dimension",
    "frame_subsample",
    "workers",
    "dataset",
    "report_dir",
    "prompt_template",
)


def _dataset_paths(value: Any, base_dir: Path) -> Optional[DatasetPaths]:
    if value in (None, "toy"):
        return None
    if not isinstance(value, dict):
        raise ConfigError(
            message="'dataset' must be 'toy' or a mapping of paths.",
            stage="config",
            details={"dataset": str(value)},
        )
    _check_keys(
        "dataset",
        value,
        ("vocab", "manifests", "general_sets", "specs", "oracle_table", "confusions"),
    )
    manifests = value.get("manifests")
    if "vocab" not in value or not isinstance(manifests, dict) or not manifests:
        raise ConfigError(
            message="'dataset' needs 'vocab' and a non-empty 'manifests' mapping.",
            stage="config",
        )

    def resolve(raw: Any) -> Path:
        path = Path(str(raw))
        return path if path.is_absolute() else base_dir / path

    optional = {
        key: resolve(value[key]) if value.get(key) else None
        for key in ("specs", "oracle_table", "confusions")
    }
    return DatasetPaths(
        vocab=resolve(value["vocab"]),
        manifests={str(name): resolve(p) for name, p in manifests.items()},
        general_sets=tuple(str(s) for s in value.get("general_sets") or ()),
        specs=optional["specs"],
        oracle_table=optional["oracle_table"],
        confusions=optional["confusions"],
    )
