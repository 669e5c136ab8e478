"""End-to-end runners: audio proxies, retrieval and ASR evaluation, reports.

The `Pipeline` facade wires a `RunConfig` to a dataset, an encoder, a token
scorer and an ASR oracle, builds the retrieval arms lazily and writes the
report bundle. `run_full` is the one-call entry point behind `hotbias run`.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import (
    Callable,
    Dict,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    TypeVar,
    Union,
)

import numpy as np

from hotbias.config import RunConfig
from hotbias.datasets import DatasetBundle, load_dataset, toy_dataset
from hotbias.decoder import (
    BiasSensitiveScorer,
    Hypothesis,
    TokenScorer,
    beam_search,
    joint_beam_search,
)
from hotbias.embedder import (
    DEFAULT_FRAME_RATE_HZ,
    EmbeddingVector,
    FrameMatrix,
    NgramTextEncoder,
    TextEncoder,
    embed_audio,
    embed_text,
    subsample_frames,
)
from hotbias.enums import HypothesisSource, RetrievalArm
from hotbias.exceptions import (
    DimensionMismatchError,
    HotbiasError,
    StageError,
    ValidationError,
)
from hotbias.models import SynthSpec, Utterance, Vocabulary
from hotbias.prompt import build_prompt, context_free_prompt
from hotbias.provenance import (
    build_provenance,
    canonical_json,
    sha256_bytes,
    sha256_json,
)
from hotbias.rada import (
    AsrOracle,
    CharDropoutOracle,
    EchoOracle,
    FilterResult,
    LookupOracle,
    NullOracle,
    filter_vocabulary,
    fuzzy_aliases,
)
from hotbias.retriever import (
    FuzzyHotwordIndex,
    HotwordIndex,
    RetrievalResult,
    build_fuzzy_index,
    build_index,
    empty_index,
    index_to_bytes,
    query_batch,
)
from hotbias.textmetrics import EvalReport, build_eval_report, is_recalled
from hotbias.types import JsonObject

logger = logging.getLogger(__name__)

CHARS_PER_FRAME = 4
BASE_ARM = "base"
INDEX_FILE = "index.hbix"
RETRIEVAL_REPORT = "retrieval_report.json"
PROVENANCE_FILE = "provenance.json"

AnyIndex = Union[HotwordIndex, FuzzyHotwordIndex]

T = TypeVar("T")
R = TypeVar("R")


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Re-raise library and I/O failures inside the block as `StageError`."""

    try:
        yield
    except StageError:
        raise
    except HotbiasError as exc:
        raise StageError(message=exc.message, stage=name, details=exc.details) from exc
    except OSError as exc:
        raise StageError(
            message=f"{exc.strerror or exc}: {exc.filename}", stage=name
        ) from exc


def _ordered_map(func: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    if workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def asr_report_name(set_name: str) -> str:
    """File name of the ASR report of one evaluation set."""

    return f"asr_report_{set_name}.json"


def synth_audio_proxy(
    utterance: Utterance,
    encoder: TextEncoder,
    *,
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ,
) -> FrameMatrix:
    """Stand-in acoustic frames for an utterance.

    The text embedding is repeated over `ceil(len(text) / 4)` frames and
    Gaussian noise with expected per-frame L2 norm `noise_level` is added,
    seeded by `audio_seed`.
    """

    base = embed_text(utterance.text, encoder)
    n_frames = max(1, math.ceil(len(utterance.text) / CHARS_PER_FRAME))
    frames = np.tile(np.asarray(base, dtype=np.float64), (n_frames, 1))
    if utterance.noise_level > 0:
        rng = np.random.default_rng(utterance.audio_seed)
        scale = utterance.noise_level / math.sqrt(frames.shape[1])
        frames = frames + rng.normal(0.0, scale, size=frames.shape)
    return FrameMatrix(frames=frames, frame_rate_hz=frame_rate_hz)


def proxy_query(
    utterance: Utterance, encoder: TextEncoder, frame_subsample: int
) -> EmbeddingVector:
    """Pooled query embedding of an utterance's subsampled audio proxy."""

    frames = synth_audio_proxy(utterance, encoder)
    return embed_audio(subsample_frames(frames, frame_subsample))


def _check_encoder(index: AnyIndex, encoder: TextEncoder) -> None:
    if index.fingerprint != encoder.fingerprint():
        raise DimensionMismatchError(
            message="Index was built with a different encoder.",
            details={
                "index": index.fingerprint,
                "encoder": encoder.fingerprint(),
            },
        )


def retrieve(
    manifest: Sequence[Utterance],
    index: AnyIndex,
    encoder: TextEncoder,
    k: int,
    *,
    frame_subsample: int = 8,
    workers: int = 1,
) -> List[RetrievalResult]:
    """Top-`k` candidates for every utterance, in manifest order."""

    _check_encoder(index, encoder)
    queries = _ordered_map(
        lambda u: proxy_query(u, encoder, frame_subsample), manifest, workers
    )
    return query_batch(index, queries, k, workers=workers)


def recall_at_k(
    manifest: Sequence[Utterance],
    index: AnyIndex,
    encoder: TextEncoder,
    k_values: Sequence[int],
    *,
    frame_subsample: int = 8,
    workers: int = 1,
) -> Dict[int, float]:
    """Percentage of annotated keywords recalled within the top-k, per k.

    Each utterance is queried once at the largest k; smaller depths read a
    prefix of that ranking.

    Raises:
        ValidationError: If the manifest is empty or an utterance has no
            keywords.
    """

    if not manifest:
        raise ValidationError(message="Retrieval evaluation needs utterances.")
    keywordless = [u.id for u in manifest if not u.is_positive]
    if keywordless:
        raise ValidationError(
            message=f"Retrieval evaluation needs keywords; {len(keywordless)} "
            "utterance(s) have none.",
            details={"ids": keywordless[:10]},
        )
    ks = sorted(k_values)
    results = retrieve(
        manifest,
        index,
        encoder,
        ks[-1],
        frame_subsample=frame_subsample,
        workers=workers,
    )
    total = sum(len(u.keywords.keywords) for u in manifest)
    recall: Dict[int, float] = {}
    for k in ks:
        hits = 0
        for utterance, result in zip(manifest, results):
            surfaces = result.surfaces()[:k]
            hits += sum(
                1 for kw in utterance.keywords.keywords if is_recalled(kw, surfaces)
            )
        recall[k] = 100.0 * hits / total
    return recall


@dataclass(frozen=True)
class RecallRow:
    """Recall per k of one retrieval arm on one set."""

    arm: RetrievalArm
    vocab_size: int
    recall: Dict[int, float]

    def to_dict(self) -> JsonObject:
        """Convert to JSON."""

        return {
            "vocab_size": self.vocab_size,
            "recall": {str(k): v for k, v in sorted(self.recall.items())},
        }


@dataclass(frozen=True)
class RecallTable:
    """Retrieval recall rows, one per (set, arm), cumulative in arm order."""

    k_values: List[int]
    rows: Dict[str, List[RecallRow]] = field(default_factory=dict)

    def to_dict(self) -> JsonObject:
        """Convert to the JSON body of `retrieval_report.json`."""

        return {
            "k_values": list(self.k_values),
            "sets": {
                name: {row.arm.value: row.to_dict() for row in rows}
                for name, rows in self.rows.items()
            },
        }


def eval_retrieval(
    manifests: Mapping[str, Sequence[Utterance]],
    vocab: Vocabulary,
    cfg: RunConfig,
    *,
    encoder: Optional[TextEncoder] = None,
    indexes: Optional[Mapping[RetrievalArm, AnyIndex]] = None,
) -> RecallTable:
    """Recall@k of each retrieval arm on each keyword set.

    Args:
        manifests: Keyword-annotated utterances per set name.
        vocab: Candidate vocabulary of the base arm.
        cfg: Run configuration (`k_values`, `frame_subsample`, `workers`).
        encoder: Text encoder; defaults to an n-gram encoder of `cfg.dimension`.
        indexes: Prebuilt index per arm; defaults to a base-arm index of `vocab`.

    Raises:
        ValidationError: If a set is empty or holds a keywordless utterance.
        DimensionMismatchError: If an index was built with another encoder.
    """

    encoder = encoder or NgramTextEncoder(cfg.dimension)
    if indexes is None:
        indexes = {RetrievalArm.BASE: build_index(vocab, encoder)}
    table = RecallTable(k_values=list(cfg.k_values))
    for name, manifest in manifests.items():
        rows = []
        for arm, index in indexes.items():
            recall = recall_at_k(
                manifest,
                index,
                encoder,
                cfg.k_values,
                frame_subsample=cfg.frame_subsample,
                workers=cfg.workers,
            )
            logger.info("retrieval %s/%s: %s", name, arm.value, recall)
            rows.append(RecallRow(arm=arm, vocab_size=len(index), recall=recall))
        table.rows[name] = rows
    return table


@dataclass(frozen=True)
class DecodeRecord:
    """Decoded hypothesis of one utterance."""

    utterance_id: str
    hypothesis: str
    source: HypothesisSource
    score: float
    prompt_hotwords: List[str]

    def to_dict(self) -> JsonObject:
        """Convert to a JSONL row."""

        return {
            "utterance_id": self.utterance_id,
            "hypothesis": self.hypothesis,
            "source": self.source.value,
            "score": self.score,
            "prompt_hotwords": list(self.prompt_hotwords),
        }


def decode_utterance(
    utterance: Utterance,
    candidates: Union[RetrievalResult, Sequence[str]],
    scorer: TokenScorer,
    cfg: RunConfig,
) -> DecodeRecord:
    """Decode one utterance with a bias prompt built from `candidates`.

    An empty candidate list decodes with the context-free prompt alone.
    """

    prompt = build_prompt(candidates, cfg.prompt_template)
    free = context_free_prompt(cfg.prompt_template)
    best: Hypothesis
    if prompt.is_context_free:
        best = beam_search(scorer, free, utterance.id, cfg.beam)[0]
    elif cfg.joint:
        best = joint_beam_search(scorer, free, prompt.rendered, utterance.id, cfg.beam)
    else:
        best = beam_search(
            scorer,
            prompt.rendered,
            utterance.id,
            cfg.beam,
            source=HypothesisSource.BIASED,
        )[0]
    logger.debug("decoded %s: %r", utterance.id, best.text)
    return DecodeRecord(
        utterance_id=utterance.id,
        hypothesis=best.text,
        source=best.source,
        score=best.log_score,
        prompt_hotwords=list(prompt.hotwords),
    )


def decode_manifest(
    manifest: Sequence[Utterance],
    index: Optional[AnyIndex],
    encoder: TextEncoder,
    scorer: TokenScorer,
    cfg: RunConfig,
    k: int,
) -> List[DecodeRecord]:
    """Retrieve top-`k` and decode every utterance; `k` = 0 skips retrieval."""

    candidates: List[RetrievalResult]
    if k == 0 or index is None:
        candidates = [RetrievalResult() for _ in manifest]
    else:
        candidates = retrieve(
            manifest,
            index,
            encoder,
            k,
            frame_subsample=cfg.frame_subsample,
            workers=cfg.workers,
        )
    pairs = list(zip(manifest, candidates))
    return _ordered_map(
        lambda pair: decode_utterance(pair[0], pair[1], scorer, cfg),
        pairs,
        cfg.workers,
    )


@dataclass(frozen=True)
class AsrSetReport:
    """ASR metrics of one evaluation set, per arm (`base`, `top1`, ...)."""

    set_name: str
    general: bool
    arms: Dict[str, EvalReport]

    def to_dict(self) -> JsonObject:
        """Convert to the JSON body of `asr_report_<set>.json`."""

        return {
            "set": self.set_name,
            "general": self.general,
            "arms": {name: report.to_dict() for name, report in self.arms.items()},
        }


def arm_name(k: int) -> str:
    """Report key of an ASR arm: `base` for k = 0, else `top<k>`."""

    return BASE_ARM if k == 0 else f"top{k}"


def eval_asr(
    manifest: Sequence[Utterance],
    index: AnyIndex,
    scorer: TokenScorer,
    cfg: RunConfig,
    *,
    set_name: str,
    general: bool = False,
    encoder: Optional[TextEncoder] = None,
) -> AsrSetReport:
    """Decode a set without a bias prompt and at every k, then score it.

    Keyword sets carry recall@k in each biased arm; general sets report SACC
    and WER only.

    Raises:
        ValidationError: If the manifest is empty.
        DimensionMismatchError: If the index was built with another encoder.
    """

    if not manifest:
        raise ValidationError(
            message=f"Evaluation set {set_name!r} is empty.",
            details={"set": set_name},
        )
    encoder = encoder or NgramTextEncoder(cfg.dimension)
    _check_encoder(index, encoder)
    refs = [u.text for u in manifest]
    annotations = [u.keywords for u in manifest]
    recall: Dict[int, float] = {}
    if not general:
        recall = recall_at_k(
            manifest,
            index,
            encoder,
            cfg.k_values,
            frame_subsample=cfg.frame_subsample,
            workers=cfg.workers,
        )

    arms: Dict[str, EvalReport] = {}
    for k in (0, *cfg.k_values):
        records = decode_manifest(manifest, index, encoder, scorer, cfg, k)
        report = build_eval_report(
            refs,
            [r.hypothesis for r in records],
            annotations,
            per_k_recall={k: recall[k]} if k in recall else None,
        )
        logger.info(
            "asr %s/%s: ker=%s sacc=%.2f",
            set_name,
            arm_name(k),
            report.ker_percent,
            report.sacc_percent,
        )
        arms[arm_name(k)] = report
    return AsrSetReport(set_name=set_name, general=general, arms=arms)


def make_oracle(cfg: RunConfig, bundle: DatasetBundle) -> AsrOracle:
    """Instantiate the oracle named by `cfg.rada.oracle`."""

    name = cfg.rada.oracle
    if name == "echo":
        return EchoOracle()
    if name == "null":
        return NullOracle()
    if name == "dropout":
        return CharDropoutOracle(cfg.rada.dropout_rate)
    if name == "remote":
        from hotbias.remote_oracle import RemoteAsrOracle

        return RemoteAsrOracle()
    return LookupOracle(bundle.oracle_table, fallback=EchoOracle())


def _trim_specs(specs: Mapping[str, SynthSpec], carriers: int) -> Dict[str, SynthSpec]:
    return {
        key: replace(spec, carrier_sentences=spec.carrier_sentences[:carriers])
        for key, spec in specs.items()
    }


@dataclass(frozen=True)
class RunResult:
    """Paths written by `Pipeline.run`."""

    report_dir: Path
    retrieval_report: Path
    asr_reports: Dict[str, Path]
    provenance: Path
    index: Path

    def report_files(self) -> List[Path]:
        """Every JSON report, retrieval first."""

        return [self.retrieval_report, *self.asr_reports.values(), self.provenance]


class Pipeline:
    """Facade over one configured run.

    Example:
        ```python
        from hotbias import Pipeline, RunConfig

        pipeline = Pipeline(RunConfig())
        table = pipeline.eval_retrieval()
        ```

    Args:
        config: Run configuration.
        bundle: Dataset; loaded from `config.dataset` (or generated) when omitted.
        encoder: Text encoder; an n-gram encoder of `config.dimension` by default.
        scorer: Token scorer; a `BiasSensitiveScorer` over the dataset
            transcripts and confusions by default.
        oracle: RADA oracle; chosen by `config.rada.oracle` by default.
        load_dotenv: If True, load a `.env` file with `python-dotenv` first
            (install `hotbias[dotenv]`).
    """

    def __init__(
        self,
        config: RunConfig,
        *,
        bundle: Optional[DatasetBundle] = None,
        encoder: Optional[TextEncoder] = None,
        scorer: Optional[TokenScorer] = None,
        oracle: Optional[AsrOracle] = None,
        load_dotenv: bool = False,
    ) -> None:
        if load_dotenv:
            try:
                from dotenv import load_dotenv as _load_dotenv
            except ImportError as exc:  # pragma: no cover
                raise ImportError(
                    "python-dotenv is not installed. Install with: "
                    "pip install 'hotbias[dotenv]'"
                ) from exc
            _load_dotenv()

        self.config = config
        self._bundle = bundle
        self._encoder = encoder
        self._scorer = scorer
        self._oracle = oracle
        self._base_index: Optional[HotwordIndex] = None
        self._filter: Optional[FilterResult] = None
        self._indexes: Optional[Dict[RetrievalArm, AnyIndex]] = None

    @property
    def bundle(self) -> DatasetBundle:
        """The dataset (lazy-loaded)."""

        if self._bundle is None:
            with stage("dataset"):
                if self.config.dataset is None:
                    self._bundle = toy_dataset()
                else:
                    self._bundle = load_dataset(self.config.dataset)
        return self._bundle

    @property
    def encoder(self) -> TextEncoder:
        """The text encoder (lazy-loaded)."""

        if self._encoder is None:
            self._encoder = NgramTextEncoder(self.config.dimension)
        return self._encoder

    @property
    def scorer(self) -> TokenScorer:
        """The token scorer (lazy-loaded)."""

        if self._scorer is None:
            self._scorer = BiasSensitiveScorer(
                self.bundle.transcripts(), self.bundle.confusions
            )
        return self._scorer

    @property
    def oracle(self) -> AsrOracle:
        """The RADA oracle (lazy-loaded)."""

        if self._oracle is None:
            with stage("rada"):
                self._oracle = make_oracle(self.config, self.bundle)
        return self._oracle

    def base_index(self) -> HotwordIndex:
        """Index over the full vocabulary."""

        if self._base_index is None:
            with stage("index"):
                self._base_index = build_index(self.bundle.vocab, self.encoder)
        return self._base_index

    def filter_result(self) -> FilterResult:
        """RADA partition of the vocabulary."""

        if self._filter is None:
            with stage("rada"):
                self._filter = filter_vocabulary(
                    self.bundle.vocab,
                    self.oracle,
                    self._trimmed_specs(),
                    min_correct_fraction=self.config.rada.min_correct_fraction,
                    workers=self.config.workers,
                )
            stats = self._filter.stats
            logger.info("rada kept %d of %d hotwords", stats.kept, stats.total)
        return self._filter

    def _trimmed_specs(self) -> Dict[str, SynthSpec]:
        return _trim_specs(self.bundle.specs, self.config.rada.carriers_per_word)

    def _filtered_index(self, vocab: Vocabulary) -> HotwordIndex:
        if not len(vocab):
            return empty_index(self.encoder)
        return build_index(vocab, self.encoder)

    def _fuzzy_index(self, vocab: Vocabulary) -> AnyIndex:
        if not len(vocab):
            return empty_index(self.encoder)
        fuzzy = self.config.fuzzy
        aliases = fuzzy_aliases(
            vocab,
            fuzzy.variants_per_word,
            self.config.seed,
            specs=self._trimmed_specs() if fuzzy.include_carriers else None,
        )
        return build_fuzzy_index(vocab, aliases, self.encoder)

    def indexes(self) -> Dict[RetrievalArm, AnyIndex]:
        """Index per enabled retrieval arm; arms are cumulative."""

        if self._indexes is None:
            arms: Dict[RetrievalArm, AnyIndex] = {RetrievalArm.BASE: self.base_index()}
            vocab = self.bundle.vocab
            if self.config.rada.enabled:
                vocab = self.filter_result().kept
                with stage("index"):
                    arms[RetrievalArm.RADA] = self._filtered_index(vocab)
            if self.config.fuzzy.enabled:
                with stage("index"):
                    arms[RetrievalArm.FUZZY] = self._fuzzy_index(vocab)
            self._indexes = arms
        return self._indexes

    def operating_index(self) -> AnyIndex:
        """Index of the most refined enabled arm; used for ASR evaluation."""

        return list(self.indexes().values())[-1]

    def eval_retrieval(self) -> RecallTable:
        """Recall table over every keyword set and enabled arm."""

        bundle = self.bundle
        manifests = {name: bundle.manifests[name] for name in bundle.keyword_sets()}
        with stage("retrieval"):
            return eval_retrieval(
                manifests,
                bundle.vocab,
                self.config,
                encoder=self.encoder,
                indexes=self.indexes(),
            )

    def eval_asr(self, set_name: Optional[str] = None) -> Dict[str, AsrSetReport]:
        """ASR reports for one set, or every set when `set_name` is None."""

        bundle = self.bundle
        names = list(bundle.manifests) if set_name is None else [set_name]
        index = self.operating_index()
        reports: Dict[str, AsrSetReport] = {}
        with stage("asr"):
            for name in names:
                manifest = self._manifest(name)
                reports[name] = eval_asr(
                    manifest,
                    index,
                    self.scorer,
                    self.config,
                    set_name=name,
                    general=name in bundle.general_sets,
                    encoder=self.encoder,
                )
        return reports

    def decode(
        self, set_name: Optional[str] = None, k: Optional[int] = None
    ) -> List[DecodeRecord]:
        """Decode a set (the first one by default) at depth `k`."""

        name = set_name or next(iter(self.bundle.manifests))
        depth = self.config.operating_k if k is None else k
        manifest = self._manifest(name)
        index = self.operating_index() if depth else None
        with stage("decode"):
            return decode_manifest(
                manifest, index, self.encoder, self.scorer, self.config, depth
            )

    def _manifest(self, name: str) -> Sequence[Utterance]:
        try:
            return self.bundle.manifests[name]
        except KeyError:
            raise StageError(
                message=f"Unknown evaluation set {name!r}.",
                stage="dataset",
                details={"set": name, "known": sorted(self.bundle.manifests)},
            ) from None

    def run(self, report_dir: Union[str, Path, None] = None) -> RunResult:
        """Build indexes, filter, evaluate and write the report bundle.

        Raises:
            StageError: If any stage fails; `stage` names it.
        """

        out = Path(report_dir or self.config.report_dir)
        with stage("report"):
            out.mkdir(parents=True, exist_ok=True)

        index_bytes = index_to_bytes(self.base_index())
        with stage("index"):
            (out / INDEX_FILE).write_bytes(index_bytes)

        table = self.eval_retrieval()
        asr = self.eval_asr()

        echo = self.config.to_dict()
        outputs: Dict[str, str] = {INDEX_FILE: sha256_bytes(index_bytes)}
        with stage("report"):
            retrieval_doc: JsonObject = {"config": echo, **table.to_dict()}
            outputs[RETRIEVAL_REPORT] = _write_json(
                out / RETRIEVAL_REPORT, retrieval_doc
            )
            asr_paths: Dict[str, Path] = {}
            for name, report in asr.items():
                path = out / asr_report_name(name)
                outputs[path.name] = _write_json(
                    path, {"config": echo, **report.to_dict()}
                )
                asr_paths[name] = path

            extra: JsonObject = {}
            if self.config.rada.enabled:
                extra["rada"] = self.filter_result().stats.to_dict()
            provenance = build_provenance(
                config=echo,
                seeds={"run": self.config.seed},
                inputs=self._input_digests(),
                outputs=outputs,
                extra=extra,
            )
            _write_json(out / PROVENANCE_FILE, provenance)
        logger.info("wrote reports to %s", out)
        return RunResult(
            report_dir=out,
            retrieval_report=out / RETRIEVAL_REPORT,
            asr_reports=asr_paths,
            provenance=out / PROVENANCE_FILE,
            index=out / INDEX_FILE,
        )

    def _input_digests(self) -> Dict[str, str]:
        bundle = self.bundle
        digests = {
            "vocab": sha256_json([entry.to_dict() for entry in bundle.vocab]),
            "specs": sha256_json([s.to_dict() for s in bundle.specs.values()]),
        }
        for name, manifest in bundle.manifests.items():
            digests[f"manifest:{name}"] = sha256_json([u.to_dict() for u in manifest])
        return digests


def _write_json(path: Path, payload: JsonObject) -> str:
    text = canonical_json(payload)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)
    return sha256_bytes(text.encode("utf-8"))


def run_full(
    config: Union[str, Path, RunConfig],
    *,
    report_dir: Union[str, Path, None] = None,
    seed: Optional[int] = None,
) -> RunResult:
    """Load `config` (a path or a `RunConfig`) and run every stage.

    Raises:
        StageError: If any stage fails; `stage` names it.
    """

    with stage("config"):
        cfg = config if isinstance(config, RunConfig) else RunConfig.from_file(config)
        cfg = cfg.with_overrides(seed=seed, report_dir=report_dir)
    return Pipeline(cfg).run()
