"""Tests for hotbias.pipeline."""

from __future__ import annotations

import json
import math
from dataclasses import replace
from pathlib import Path
from typing import Dict

import numpy as np
import pytest

from hotbias.config import RadaOptions, RunConfig
from hotbias.datasets import (
    MEDIA_KEYWORDS,
    DatasetBundle,
    DatasetPaths,
    confusable,
    toy_dataset,
)
from hotbias.decoder import BiasSensitiveScorer
from hotbias.embedder import NgramTextEncoder, cosine, embed_audio, embed_text
from hotbias.enums import HypothesisSource, RetrievalArm
from hotbias.exceptions import DimensionMismatchError, StageError, ValidationError
from hotbias.models import Hotword, SynthSpec, Utterance, Vocabulary
from hotbias.pipeline import (
    INDEX_FILE,
    PROVENANCE_FILE,
    RETRIEVAL_REPORT,
    Pipeline,
    arm_name,
    asr_report_name,
    decode_utterance,
    eval_asr,
    eval_retrieval,
    recall_at_k,
    retrieve,
    run_full,
    stage,
    synth_audio_proxy,
)
from hotbias.retriever import FuzzyHotwordIndex, build_index
from hotbias.textmetrics import KeywordAnnotation

ENCODER = NgramTextEncoder()
KEYWORDS = MEDIA_KEYWORDS[:10]
DISTRACTORS = ("bakori", "senmo", "talvi", "derlun", "pazofen")


def _utterance(uid: str, text: str, *keywords: str, noise: float = 0.0) -> Utterance:
    return Utterance(
        id=uid,
        text=text,
        keywords=KeywordAnnotation(uid, frozenset(keywords)),
        audio_seed=len(uid),
        noise_level=noise,
    )


def _small_bundle() -> DatasetBundle:
    """Ten keyword utterances, five general ones and a 15-entry vocabulary."""

    entries = [Hotword(f"kw-{i}", w, "media") for i, w in enumerate(KEYWORDS)]
    entries += [Hotword(f"dx-{i}", w, "media") for i, w in enumerate(DISTRACTORS)]
    vocab = Vocabulary.of(entries)
    media = tuple(
        _utterance(f"media-{i}", f"can you open {w} on my phone", w, noise=0.1)
        for i, w in enumerate(KEYWORDS)
    )
    general = tuple(
        _utterance(f"general-{i}", text, noise=0.1)
        for i, text in enumerate(
            [
                "my neighbor cooked dinner after work",
                "the coach walked home in the rain",
                "our team read a book on sunday",
                "the driver fixed the door at the park",
                "my father called a friend before sunrise",
            ]
        )
    )
    specs = {
        e.id: SynthSpec(e, (f"please say {e.surface} clearly",), seed=1) for e in vocab
    }
    return DatasetBundle(
        vocab=vocab,
        manifests={"media": media, "general": general},
        general_sets=("general",),
        specs=specs,
        oracle_table={},
        confusions={w: confusable(w) for w in KEYWORDS},
    )


def _scorer(bundle: DatasetBundle) -> BiasSensitiveScorer:
    return BiasSensitiveScorer(bundle.transcripts(), bundle.confusions)


def _read(path: Path) -> Dict[str, object]:
    data = json.loads(path.read_text(encoding="utf-8"))
    assert isinstance(data, dict)
    return data


def test_noiseless_proxy_pools_back_to_text_embedding() -> None:
    """Without noise the pooled proxy equals the text embedding."""

    utterance = _utterance("u1", "can you open qwen on my phone", "qwen")
    frames = synth_audio_proxy(utterance, ENCODER)
    assert len(frames) == math.ceil(len(utterance.text) / 4)
    pooled = embed_audio(frames)
    np.testing.assert_allclose(pooled, embed_text(utterance.text), atol=1e-6)


def test_noisy_proxy_is_seeded() -> None:
    """The same audio seed reproduces the same noisy frames."""

    utterance = _utterance("u1", "open qwen now", "qwen", noise=0.3)
    first = synth_audio_proxy(utterance, ENCODER).frames
    second = synth_audio_proxy(utterance, ENCODER).frames
    assert np.array_equal(first, second)
    other = replace(utterance, audio_seed=99)
    assert not np.array_equal(first, synth_audio_proxy(other, ENCODER).frames)
    pooled = embed_audio(synth_audio_proxy(utterance, ENCODER))
    assert cosine(pooled, embed_text(utterance.text)) > 0.9


def test_self_retrieval_recall_at_one() -> None:
    """Utterances that are exactly a hotword retrieve it first."""

    vocab = Vocabulary.of(Hotword(f"kw-{i}", w) for i, w in enumerate(MEDIA_KEYWORDS))
    manifest = [_utterance(f"u{i}", w, w) for i, w in enumerate(MEDIA_KEYWORDS)]
    index = build_index(vocab, ENCODER)
    assert recall_at_k(manifest, index, ENCODER, [1]) == {1: 100.0}


def test_recall_is_monotone_in_k() -> None:
    """Deeper retrieval never recalls fewer keywords."""

    bundle = toy_dataset()
    manifest = bundle.manifests["media"][:60]
    index = build_index(bundle.vocab, ENCODER)
    recall = recall_at_k(manifest, index, ENCODER, [10, 1, 5, 2], workers=2)
    assert list(recall) == [1, 2, 5, 10]
    values = list(recall.values())
    assert values == sorted(values)
    assert values[-1] > 0.0


def test_recall_rejects_keywordless_and_empty_sets() -> None:
    """Retrieval evaluation needs keyword-annotated utterances."""

    bundle = _small_bundle()
    index = build_index(bundle.vocab, ENCODER)
    with pytest.raises(ValidationError):
        recall_at_k(bundle.manifests["general"], index, ENCODER, [1])
    with pytest.raises(ValidationError):
        recall_at_k([], index, ENCODER, [1])


def test_retrieve_checks_encoder() -> None:
    """An index from another encoder is rejected."""

    bundle = _small_bundle()
    index = build_index(bundle.vocab, NgramTextEncoder(64))
    with pytest.raises(DimensionMismatchError):
        retrieve(bundle.manifests["media"], index, ENCODER, 2)


def test_eval_retrieval_defaults_to_base_arm() -> None:
    """Without prebuilt indexes one base row is produced per set."""

    bundle = _small_bundle()
    cfg = RunConfig(k_values=(1, 20))
    table = eval_retrieval({"media": bundle.manifests["media"]}, bundle.vocab, cfg)
    (row,) = table.rows["media"]
    assert row.arm is RetrievalArm.BASE
    assert row.vocab_size == 15
    assert row.recall[20] == 100.0
    assert table.to_dict()["sets"] == {
        "media": {"base": {"vocab_size": 15, "recall": row.to_dict()["recall"]}}
    }


def test_decode_utterance_context_free_and_joint() -> None:
    """No candidates keeps the confusion; listing the keyword fixes it."""

    bundle = _small_bundle()
    utterance = bundle.manifests["media"][0]
    scorer = _scorer(bundle)
    cfg = RunConfig()
    free = decode_utterance(utterance, [], scorer, cfg)
    assert free.hypothesis == "can you open qwin on my phone"
    assert free.source is HypothesisSource.CONTEXT_FREE
    assert free.prompt_hotwords == []
    biased = decode_utterance(utterance, ["qwen", "bakori"], scorer, cfg)
    assert biased.hypothesis == utterance.text
    assert biased.prompt_hotwords == ["qwen", "bakori"]
    plain = decode_utterance(
        utterance, ["qwen"], scorer, replace(cfg, joint=False)
    )
    assert plain.hypothesis == utterance.text
    assert plain.source is HypothesisSource.BIASED
    assert plain.to_dict()["source"] == "biased"


def test_eval_asr_biasing_fixes_keywords_without_harming_general_set() -> None:
    """Full-vocabulary prompts remove keyword errors; general SACC is unchanged."""

    bundle = _small_bundle()
    scorer = _scorer(bundle)
    cfg = RunConfig(k_values=(1, 20))
    index = build_index(bundle.vocab, ENCODER)
    media = eval_asr(bundle.manifests["media"], index, scorer, cfg, set_name="media")
    assert list(media.arms) == ["base", "top1", "top20"]
    assert media.arms["base"].ker_percent == 100.0
    assert media.arms["top20"].ker_percent == 0.0
    assert media.arms["top20"].wer == 0.0
    assert media.arms["top20"].per_k_recall == {20: 100.0}
    assert media.arms["base"].per_k_recall == {}
    general = eval_asr(
        bundle.manifests["general"],
        index,
        scorer,
        cfg,
        set_name="general",
        general=True,
    )
    assert general.arms["base"].ker_percent is None
    base_sacc = general.arms["base"].sacc_percent
    assert base_sacc == 100.0
    assert all(abs(r.sacc_percent - base_sacc) <= 1.0 for r in general.arms.values())
    assert general.to_dict()["general"] is True


def test_joint_decoding_keeps_general_sacc_when_prompt_invites_hallucination() -> None:
    """A near-keyword word survives joint decoding but not biased-only decoding."""

    bundle = _small_bundle()
    near = _utterance("general-near", "the sign outside said qwin", noise=0.1)
    general = bundle.manifests["general"] + (near,)
    bundle = replace(bundle, manifests={**bundle.manifests, "general": general})
    scorer = _scorer(bundle)
    index = build_index(bundle.vocab, ENCODER)
    cfg = RunConfig(k_values=(20,))

    joint = eval_asr(general, index, scorer, cfg, set_name="general", general=True)
    assert joint.arms["base"].sacc_percent == 100.0
    assert joint.arms["top20"].sacc_percent == 100.0

    biased_only = eval_asr(
        general,
        index,
        scorer,
        replace(cfg, joint=False),
        set_name="general",
        general=True,
    )
    assert biased_only.arms["base"].sacc_percent == 100.0
    assert biased_only.arms["top20"].sacc_percent == pytest.approx(500 / 6)


def test_eval_asr_rejects_empty_set() -> None:
    """An empty evaluation set is an error."""

    bundle = _small_bundle()
    index = build_index(bundle.vocab, ENCODER)
    with pytest.raises(ValidationError):
        eval_asr([], index, _scorer(bundle), RunConfig(), set_name="empty")


def test_toy_biasing_lowers_keyword_error_rate() -> None:
    """On toy media utterances, top-2 biasing beats the unbiased baseline."""

    bundle = toy_dataset()
    manifests = {
        "media": bundle.manifests["media"][:40],
        "general": bundle.manifests["general"][:40],
    }
    pipeline = Pipeline(
        RunConfig(k_values=(2,)), bundle=replace(bundle, manifests=manifests)
    )
    reports = pipeline.eval_asr()
    media = reports["media"].arms
    assert media["top2"].ker_percent is not None
    assert media["base"].ker_percent is not None
    assert media["top2"].ker_percent < media["base"].ker_percent
    general = reports["general"].arms
    assert general["base"].sacc_percent - general["top2"].sacc_percent <= 1.0


def test_rada_echo_oracle_empties_filtered_arm() -> None:
    """Removing every hotword leaves nothing to recall."""

    cfg = RunConfig(k_values=(1, 20), rada=RadaOptions(enabled=True, oracle="echo"))
    pipeline = Pipeline(cfg, bundle=_small_bundle())
    table = pipeline.eval_retrieval()
    base, rada = table.rows["media"]
    assert (base.arm, rada.arm) == (RetrievalArm.BASE, RetrievalArm.RADA)
    assert rada.vocab_size == 0
    assert rada.recall == {1: 0.0, 20: 0.0}
    assert pipeline.filter_result().stats.removal_rate == 1.0
    assert len(pipeline.operating_index()) == 0


def test_fuzzy_arm_follows_filtered_vocabulary() -> None:
    """The fuzzy arm indexes the RADA-kept vocabulary with aliases."""

    cfg = replace(
        RunConfig(k_values=(1, 20)),
        rada=RadaOptions(enabled=True, oracle="null"),
        fuzzy=replace(RunConfig().fuzzy, enabled=True),
    )
    pipeline = Pipeline(cfg, bundle=_small_bundle())
    indexes = pipeline.indexes()
    assert list(indexes) == [RetrievalArm.BASE, RetrievalArm.RADA, RetrievalArm.FUZZY]
    assert len(indexes[RetrievalArm.FUZZY]) == 15
    assert pipeline.operating_index() is indexes[RetrievalArm.FUZZY]


def test_fuzzy_aliases_use_the_filtering_carriers_only() -> None:
    """Carriers beyond carriers_per_word stay out of the alias rows."""

    bundle = _small_bundle()
    specs = {
        key: SynthSpec(
            spec.hotword,
            (f"please say {spec.hotword.surface} clearly", f"extra {spec.hotword.id}"),
            seed=1,
        )
        for key, spec in bundle.specs.items()
    }
    cfg = replace(
        RunConfig(k_values=(1,)),
        rada=RadaOptions(enabled=True, oracle="null", carriers_per_word=1),
        fuzzy=replace(RunConfig().fuzzy, enabled=True, variants_per_word=0),
    )
    pipeline = Pipeline(cfg, bundle=replace(bundle, specs=specs))
    fuzzy = pipeline.indexes()[RetrievalArm.FUZZY]
    assert isinstance(fuzzy, FuzzyHotwordIndex)
    surfaces = fuzzy.aliases.vocabulary.surfaces()
    assert "please say qwen clearly" in surfaces
    assert not any(s.startswith("extra") for s in surfaces)
    assert len(surfaces) == 30


def test_decode_defaults_to_operating_k() -> None:
    """decode() retrieves operating_k candidates per utterance."""

    pipeline = Pipeline(RunConfig(operating_k=3), bundle=_small_bundle())
    records = pipeline.decode("media")
    assert len(records) == 10
    assert all(len(r.prompt_hotwords) == 3 for r in records)
    unbiased = pipeline.decode("media", k=0)
    assert all(r.prompt_hotwords == [] for r in unbiased)
    with pytest.raises(StageError) as exc:
        pipeline.decode("missing")
    assert exc.value.stage == "dataset"


def _run(tmp_path: Path, name: str, cfg: RunConfig) -> Path:
    result = Pipeline(cfg, bundle=_small_bundle()).run(tmp_path / name)
    return result.report_dir


def test_run_writes_report_bundle(tmp_path: Path) -> None:
    """The run writes the index, one report per set and provenance."""

    cfg = RunConfig(k_values=(1, 20), rada=RadaOptions(enabled=True, oracle="null"))
    result = Pipeline(cfg, bundle=_small_bundle()).run(tmp_path / "out")
    names = sorted(p.name for p in result.report_dir.iterdir())
    assert names == sorted(
        [
            INDEX_FILE,
            RETRIEVAL_REPORT,
            PROVENANCE_FILE,
            asr_report_name("media"),
            asr_report_name("general"),
        ]
    )
    retrieval = _read(result.retrieval_report)
    assert retrieval["config"] == cfg.to_dict()
    assert retrieval["k_values"] == [1, 20]
    provenance = _read(result.provenance)
    outputs = provenance["outputs"]
    assert isinstance(outputs, dict)
    assert set(outputs) == {p.name for p in result.report_files()[:-1]} | {INDEX_FILE}
    assert provenance["stages"] == {
        "rada": {"total": 15, "kept": 15, "removed": 0, "removal_rate": 0.0}
    }
    asr = _read(result.asr_reports["media"])
    assert asr["set"] == "media"
    arms = asr["arms"]
    assert isinstance(arms, dict)
    assert set(arms) == {arm_name(0), "top1", "top20"}


def test_run_is_byte_identical_across_reruns(tmp_path: Path) -> None:
    """Two runs with the same config write identical files."""

    cfg = RunConfig(k_values=(1, 2))
    first = _run(tmp_path, "a", cfg)
    second = _run(tmp_path, "b", cfg)
    for path in sorted(first.iterdir()):
        assert path.read_bytes() == (second / path.name).read_bytes(), path.name


def test_index_does_not_depend_on_k_values(tmp_path: Path) -> None:
    """Changing the swept depths leaves the index bytes unchanged."""

    first = _run(tmp_path, "a", RunConfig(k_values=(1, 2)))
    second = _run(tmp_path, "b", RunConfig(k_values=(1, 5)))
    assert (first / INDEX_FILE).read_bytes() == (second / INDEX_FILE).read_bytes()
    assert (first / RETRIEVAL_REPORT).read_bytes() != (
        second / RETRIEVAL_REPORT
    ).read_bytes()


def test_stage_errors_name_the_failing_stage(tmp_path: Path) -> None:
    """Missing data and config files surface as stage errors."""

    paths = DatasetPaths(
        vocab=tmp_path / "missing.tsv", manifests={"a": tmp_path / "a.jsonl"}
    )
    with pytest.raises(StageError) as exc:
        Pipeline(RunConfig(dataset=paths)).run(tmp_path / "out")
    assert exc.value.stage == "dataset"
    with pytest.raises(StageError) as exc:
        run_full(tmp_path / "missing.yaml")
    assert exc.value.stage == "config"


def test_stage_wraps_library_errors() -> None:
    """Library errors inside a stage are re-raised with the stage name."""

    with pytest.raises(StageError) as exc:
        with stage("retrieval"):
            raise ValidationError(message="bad", details={"x": 1})
    assert (exc.value.stage, exc.value.message) == ("retrieval", "bad")
    assert exc.value.details == {"x": 1}


def test_run_full_on_written_config(tmp_path: Path) -> None:
    """run_full loads a YAML config and applies overrides."""

    config = tmp_path / "run.yaml"
    config.write_text("k_values: [1]\nseed: 3\n", encoding="utf-8")
    result = run_full(config, report_dir=tmp_path / "reports", seed=11)
    assert result.report_dir == tmp_path / "reports"
    provenance = _read(result.provenance)
    assert provenance["seeds"] == {"run": 11}
    echo = provenance["config"]
    assert isinstance(echo, dict)
    assert echo["k_values"] == [1]
