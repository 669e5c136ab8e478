"""Tests for hotbias.config."""

from __future__ import annotations

from pathlib import Path

import pytest

from hotbias.config import (
    DEFAULT_K_VALUES,
    DEFAULT_SEED,
    FuzzyOptions,
    RadaOptions,
    RunConfig,
)
from hotbias.exceptions import ConfigError


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    """Keep host environment variables out of config resolution."""

    for name in ("HOTBIAS_SEED", "HOTBIAS_WORKERS", "HOTBIAS_REPORT_DIR"):
        monkeypatch.delenv(name, raising=False)


def test_defaults() -> None:
    """An empty mapping selects the toy dataset and default settings."""

    cfg = RunConfig.from_dict({})
    assert cfg.k_values == DEFAULT_K_VALUES
    assert cfg.operating_k == 2
    assert cfg.seed == DEFAULT_SEED
    assert cfg.uses_toy_dataset
    assert cfg.report_dir == Path("reports")
    assert cfg.beam.beam_width == 4
    assert not cfg.rada.enabled and not cfg.fuzzy.enabled


def test_env_fallbacks(monkeypatch: pytest.MonkeyPatch) -> None:
    """Environment values apply only where the config is silent."""

    monkeypatch.setenv("HOTBIAS_SEED", "77")
    monkeypatch.setenv("HOTBIAS_WORKERS", "3")
    monkeypatch.setenv("HOTBIAS_REPORT_DIR", "/tmp/hotbias-out")
    cfg = RunConfig.from_dict({})
    assert (cfg.seed, cfg.workers, cfg.report_dir) == (
        77,
        3,
        Path("/tmp/hotbias-out"),
    )
    assert RunConfig.from_dict({"seed": 5, "workers": 1}).seed == 5


def test_unparsable_env_value_falls_back(monkeypatch: pytest.MonkeyPatch) -> None:
    """A malformed env integer is ignored."""

    monkeypatch.setenv("HOTBIAS_SEED", "lots")
    assert RunConfig.from_dict({}).seed == DEFAULT_SEED


def test_from_file_resolves_dataset_paths(tmp_path: Path) -> None:
    """Relative dataset paths resolve against the config file's directory."""

    path = tmp_path / "run.yaml"
    path.write_text(
        "k_values: [1, 3]\n"
        "operating_k: 3\n"
        "beam: {beam_width: 2}\n"
        "rada: {enabled: true, oracle: echo}\n"
        "dataset:\n"
        "  vocab: vocab.tsv\n"
        "  manifests: {media: manifest_media.jsonl}\n"
        "  specs: specs.jsonl\n",
        encoding="utf-8",
    )
    cfg = RunConfig.from_file(path)
    assert cfg.k_values == (1, 3)
    assert cfg.beam.beam_width == 2
    assert cfg.rada == RadaOptions(enabled=True, oracle="echo")
    assert cfg.dataset is not None
    assert cfg.dataset.vocab == tmp_path / "vocab.tsv"
    assert cfg.dataset.manifests == {"media": tmp_path / "manifest_media.jsonl"}
    assert cfg.dataset.oracle_table is None


@pytest.mark.parametrize(
    "data",
    [
        {"k_values": []},
        {"k_values": [2, 1]},
        {"k_values": [0, 1]},
        {"operating_k": -1},
        {"workers": 0},
        {"dimension": 0},
        {"bogus": 1},
        {"beam": {"beam_width": 0}},
        {"beam": {"width": 3}},
        {"rada": {"oracle": "psychic"}},
        {"rada": {"min_correct_fraction": 0}},
        {"fuzzy": {"variants_per_word": -1}},
        {"reward": {"match": float("inf")}},
        {"prompt_template": {"instruction": " "}},
        {"dataset": {"vocab": "v.tsv"}},
        {"dataset": 3},
        {"k_values": 5},
    ],
)
def test_invalid_values_raise_config_error(data: dict) -> None:
    """Every invalid value surfaces as a ConfigError tagged with its stage."""

    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict(data)
    assert exc.value.stage == "config"


def test_from_file_errors(tmp_path: Path) -> None:
    """Missing files, bad YAML and non-mapping documents are config errors."""

    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("k_values: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.from_file(bad)
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.from_file(listing)
    empty = tmp_path / "empty.yaml"
    empty.write_text("", encoding="utf-8")
    assert RunConfig.from_file(empty).uses_toy_dataset


def test_with_overrides() -> None:
    """Command-line overrides replace only the given values."""

    cfg = RunConfig()
    changed = cfg.with_overrides(
        seed=9, k_values=[1, 2], beam_width=8, joint=False, report_dir="out"
    )
    assert changed.seed == 9
    assert changed.k_values == (1, 2)
    assert changed.beam.beam_width == 8
    assert changed.beam.max_len == cfg.beam.max_len
    assert changed.joint is False
    assert changed.report_dir == Path("out")
    assert cfg.with_overrides() == cfg
    with pytest.raises(ConfigError):
        cfg.with_overrides(beam_width=0)
    with pytest.raises(ConfigError):
        cfg.with_overrides(k_values=[3, 3])


def test_to_dict_excludes_machine_settings() -> None:
    """The echo omits workers and the report directory."""

    echo = RunConfig(workers=8, report_dir=Path("/somewhere")).to_dict()
    assert "workers" not in echo and "report_dir" not in echo
    assert echo["dataset"] == "toy"
    assert echo["k_values"] == [1, 2, 5, 10]
    assert RunConfig.from_dict(echo).to_dict() == echo


def test_option_validation() -> None:
    """Option sections validate on construction."""

    with pytest.raises(ConfigError):
        RadaOptions(carriers_per_word=0)
    with pytest.raises(ConfigError):
        RadaOptions(dropout_rate=2.0)
    assert FuzzyOptions(variants_per_word=0).variants_per_word == 0
