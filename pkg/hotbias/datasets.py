"""Vocabulary, manifest and spec files, plus the bundled toy dataset.

File formats (UTF-8):

- vocabulary: TSV `id<TAB>surface<TAB>domain` or JSONL rows
  `{"id", "surface", "domain"}`, chosen by file suffix
- manifest: JSONL `{"id", "text", "keywords", "audio_seed", "noise_level"}`
- synthesis specs: JSONL `{"hotword_id", "carriers", "seed"}`
- oracle table: JSONL `{"text", "hypothesis"}`
- confusions: JSONL `{"token", "substitute"}`

The toy dataset is generated from templates with a fixed seed. It has two
keyword sets (`media`, `medical`) and one keywordless set (`general`) of 240
utterances each (every eighth general utterance holds a word that sounds like a
keyword), a vocabulary of the keywords plus syllable-built
distractors, three carrier sentences per hotword, an oracle table under which
keywords are misrecognized and most distractors are recognized, and the
keyword confusions used by `BiasSensitiveScorer`.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    Dict,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from hotbias.exceptions import ValidationError
from hotbias.models import Hotword, SynthSpec, Utterance, Vocabulary
from hotbias.textmetrics import KeywordAnnotation
from hotbias.types import JsonObject

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TOY_SEED = 20240917
TOY_SET_SIZE = 240
TOY_DISTRACTORS_PER_DOMAIN = 200


def read_jsonl(path: PathLike) -> Iterator[JsonObject]:
    """Yield the JSON objects of a JSONL file, skipping blank lines.

    Raises:
        ValidationError: If a line is not a JSON object.
    """

    with Path(path).open("r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(
                    message=f"{path}:{number}: invalid JSON ({exc.msg}).",
                    details={"path": str(path), "line": number},
                ) from exc
            if not isinstance(row, dict):
                raise ValidationError(
                    message=f"{path}:{number}: expected a JSON object.",
                    details={"path": str(path), "line": number},
                )
            yield row


def write_jsonl(path: PathLike, rows: Iterable[JsonObject]) -> None:
    """Write rows as JSONL with sorted keys and a trailing newline."""

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="\n") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
            handle.write("\n")


def _is_tsv(path: PathLike) -> bool:
    return Path(path).suffix.lower() in {".tsv", ".txt"}


def read_vocab(path: PathLike) -> Vocabulary:
    """Read a TSV or JSONL vocabulary.

    TSV lines starting with `#` are comments; the domain column is optional.

    Raises:
        ValidationError: If a row is malformed or ids / surfaces repeat.
    """

    if not _is_tsv(path):
        return Vocabulary.of(Hotword.from_dict(row) for row in read_jsonl(path))
    entries = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) not in (2, 3):
                raise ValidationError(
                    message=f"{path}:{number}: expected id, surface and domain "
                    "columns.",
                    details={"path": str(path), "line": number},
                )
            domain = fields[2] if len(fields) == 3 else ""
            entries.append(
                Hotword(id=fields[0], surface=fields[1], domain=domain or None)
            )
    return Vocabulary.of(entries)


def write_vocab(vocab: Vocabulary, path: PathLike) -> None:
    """Write `vocab` as TSV or JSONL depending on the file suffix."""

    if not _is_tsv(path):
        write_jsonl(path, (entry.to_dict() for entry in vocab))
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="\n") as handle:
        for entry in vocab:
            handle.write(f"{entry.id}\t{entry.surface}\t{entry.domain or ''}\n")


def read_manifest(path: PathLike) -> List[Utterance]:
    """Read a JSONL manifest.

    Raises:
        ValidationError: If a row is malformed or an id repeats.
    """

    utterances = [Utterance.from_dict(row) for row in read_jsonl(path)]
    seen = set()
    for utterance in utterances:
        if utterance.id in seen:
            raise ValidationError(
                message=f"{path}: duplicate utterance id {utterance.id!r}.",
                details={"path": str(path), "id": utterance.id},
            )
        seen.add(utterance.id)
    return utterances


def write_manifest(utterances: Iterable[Utterance], path: PathLike) -> None:
    """Write utterances as a JSONL manifest."""

    write_jsonl(path, (u.to_dict() for u in utterances))


def read_specs(path: PathLike, vocab: Vocabulary) -> Dict[str, SynthSpec]:
    """Read synthesis specs keyed by hotword id.

    Raises:
        ValidationError: If a row is malformed, names an unknown hotword or
            repeats a hotword.
    """

    specs: Dict[str, SynthSpec] = {}
    for row in read_jsonl(path):
        spec = SynthSpec.from_dict(row, vocab)
        if spec.hotword.id in specs:
            raise ValidationError(
                message=f"{path}: duplicate spec for {spec.hotword.id!r}.",
                details={"path": str(path), "hotword_id": spec.hotword.id},
            )
        specs[spec.hotword.id] = spec
    return specs


def write_specs(specs: Iterable[SynthSpec], path: PathLike) -> None:
    """Write synthesis specs as JSONL."""

    write_jsonl(path, (spec.to_dict() for spec in specs))


def _read_pairs(path: PathLike, key: str, value: str) -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    for row in read_jsonl(path):
        k = row.get(key)
        v = row.get(value)
        if not isinstance(k, str) or not isinstance(v, str):
            raise ValidationError(
                message=f"{path}: expected string '{key}' and '{value}'.",
                details=dict(row),
            )
        pairs[k] = v
    return pairs


def read_oracle_table(path: PathLike) -> Dict[str, str]:
    """Read an oracle table (`text` -> `hypothesis`)."""

    return _read_pairs(path, "text", "hypothesis")


def write_oracle_table(table: Mapping[str, str], path: PathLike) -> None:
    """Write an oracle table as JSONL."""

    write_jsonl(path, ({"text": k, "hypothesis": v} for k, v in sorted(table.items())))


def read_confusions(path: PathLike) -> Dict[str, str]:
    """Read keyword confusions (`token` -> `substitute`)."""

    return _read_pairs(path, "token", "substitute")


def write_confusions(confusions: Mapping[str, str], path: PathLike) -> None:
    """Write keyword confusions as JSONL."""

    write_jsonl(
        path, ({"token": k, "substitute": v} for k, v in sorted(confusions.items()))
    )


@dataclass(frozen=True)
class DatasetBundle:
    """Everything an end-to-end run reads.

    Attributes:
        vocab: Candidate hotwords.
        manifests: Utterances per evaluation-set name.
        general_sets: Names of keywordless sets (SACC only).
        specs: Carrier sentences per hotword id.
        oracle_table: Lookup-oracle hypotheses keyed by carrier sentence.
        confusions: Rare token -> confusable substitute.
    """

    vocab: Vocabulary
    manifests: Dict[str, Tuple[Utterance, ...]]
    general_sets: Tuple[str, ...] = ()
    specs: Dict[str, SynthSpec] = field(default_factory=dict)
    oracle_table: Dict[str, str] = field(default_factory=dict)
    confusions: Dict[str, str] = field(default_factory=dict)

    def keyword_sets(self) -> List[str]:
        """Names of the keyword-annotated sets, in manifest order."""

        return [name for name in self.manifests if name not in self.general_sets]

    def transcripts(self) -> Dict[str, str]:
        """Reference text per utterance id across every set."""

        return {u.id: u.text for utts in self.manifests.values() for u in utts}


MEDIA_KEYWORDS: Tuple[str, ...] = (
    "qwen", "tongyi", "doubao", "hunyuan", "wenxin", "pangu", "yuanbao",
    "kimichat", "minimax", "baichuan", "zhipu", "deepseek", "moonshot",
    "stepfun", "sensenova", "xinghuo", "tiangong", "chatglm", "lingyi",
    "skywork", "bilibili", "douyin", "kuaishou", "xiaohongshu", "weibo",
    "zhihu", "youku", "iqiyi", "mango", "tencentvideo", "netease", "huya",
    "douyu", "taobao", "pinduoduo", "meituan", "eleme", "ximalaya", "lizhi",
    "qingting",
)  # fmt: skip

MEDICAL_KEYWORDS: Tuple[str, ...] = (
    "amoxicillin", "metformin", "atorvastatin", "lisinopril", "omeprazole",
    "amlodipine", "levothyroxine", "azithromycin", "ibuprofen", "paracetamol",
    "warfarin", "clopidogrel", "insulin", "heparin", "prednisone",
    "gabapentin", "sertraline", "fluoxetine", "losartan", "simvastatin",
    "ceftriaxone", "vancomycin", "doxycycline", "cetirizine", "loratadine",
    "montelukast", "salbutamol", "budesonide", "tamsulosin", "finasteride",
    "allopurinol", "colchicine", "furosemide", "spironolactone", "digoxin",
    "nitroglycerin", "morphine", "tramadol", "ondansetron", "pantoprazole",
)  # fmt: skip

_SINGLE_TEMPLATES: Dict[str, Tuple[str, ...]] = {
    "media": (
        "i watched the new {0} launch video yesterday",
        "can you open {0} on my phone",
        "my sister keeps talking about {0} these days",
        "the {0} update arrived this morning",
        "please search for {0} reviews online",
        "we compared {0} with two other apps last week",
        "is {0} free to use at home",
        "he posted a clip about {0} last night",
    ),
    "medical": (
        "the patient was prescribed {0} twice a day",
        "please check the dosage of {0} before surgery",
        "she stopped taking {0} after the rash appeared",
        "the nurse gave him {0} at noon",
        "do not combine {0} with alcohol",
        "the doctor increased the {0} dose last week",
        "we ran out of {0} in the ward",
        "record any side effects of {0} in the chart",
    ),
}

_PAIR_TEMPLATES: Dict[str, Tuple[str, ...]] = {
    "media": (
        "she switched from {0} to {1} for her videos",
        "both {0} and {1} were trending today",
    ),
    "medical": (
        "the plan replaces {0} with {1} next month",
        "he takes {0} in the morning and {1} at night",
    ),
}

_GENERAL_SUBJECTS = (
    "my neighbor", "the coach", "our team", "the driver", "my father",
    "the old man", "a young girl", "the manager",
)  # fmt: skip
_GENERAL_VERBS = (
    "cooked dinner", "walked home", "read a book", "fixed the door",
    "painted the wall", "called a friend",
)  # fmt: skip
_GENERAL_TAILS = (
    "after work", "before sunrise", "on sunday", "in the rain", "at the park",
)  # fmt: skip

# Every eighth general utterance names something that sounds like a keyword.
_NEAR_WORD_EVERY = 8
_NEAR_WORD_TEMPLATES = (
    "my neighbor named the puppy {0}",
    "the sign outside said {0}",
    "we met a man called {0} at the park",
)

_CARRIER_TEMPLATES = (
    "please say {0} clearly",
    "i heard the word {0} today",
    "{0} was mentioned in the meeting",
)

_SYLLABLES = (
    "ba", "ko", "ri", "sen", "tal", "mo", "vi", "der", "lun", "pa",
    "zo", "fen", "gri", "hal", "jo", "ne", "qua", "ros", "tem", "wu",
)  # fmt: skip

_VOWEL_SHIFT = {"a": "e", "e": "i", "i": "o", "o": "u", "u": "a"}


def confusable(word: str) -> str:
    """Shift the first vowel after the first letter (`qwen` -> `qwin`)."""

    for position in range(1, len(word)):
        shifted = _VOWEL_SHIFT.get(word[position])
        if shifted is not None:
            return word[:position] + shifted + word[position + 1 :]
    return word + "h"


def _distractors(
    rng: np.random.Generator, count: int, keywords: Sequence[str], taken: set
) -> List[str]:
    words: List[str] = []
    while len(words) < count:
        n = int(rng.integers(2, 4))
        picks = rng.integers(len(_SYLLABLES), size=n)
        word = "".join(_SYLLABLES[int(i)] for i in picks)
        if word in taken or any(k in word or word in k for k in keywords):
            continue
        taken.add(word)
        words.append(word)
    return words


def _keyword_set(
    domain: str, keywords: Sequence[str], rng: np.random.Generator
) -> List[Utterance]:
    singles = _SINGLE_TEMPLATES[domain]
    pairs = _PAIR_TEMPLATES[domain]
    utterances = []
    for i in range(TOY_SET_SIZE):
        first = keywords[i % len(keywords)]
        if i % 5 == 4:
            second = keywords[(i * 7 + 3) % len(keywords)]
            if second == first:
                second = keywords[(i + 1) % len(keywords)]
            text = pairs[i % len(pairs)].format(first, second)
            found = frozenset({first, second})
        else:
            text = singles[(i // len(keywords) + i) % len(singles)].format(first)
            found = frozenset({first})
        utterance_id = f"{domain}-{i:03d}"
        utterances.append(
            Utterance(
                id=utterance_id,
                text=text,
                keywords=KeywordAnnotation(utterance_id=utterance_id, keywords=found),
                audio_seed=int(rng.integers(2**31)),
                noise_level=round(float(rng.uniform(0.05, 0.3)), 3),
            )
        )
    return utterances


def _general_set(
    rng: np.random.Generator, keywords: Sequence[str]
) -> List[Utterance]:
    sentences = [
        f"{s} {v} {t}"
        for s in _GENERAL_SUBJECTS
        for v in _GENERAL_VERBS
        for t in _GENERAL_TAILS
    ]
    order = rng.permutation(len(sentences))[:TOY_SET_SIZE]
    utterances = []
    for i, index in enumerate(order):
        utterance_id = f"general-{i:03d}"
        text = sentences[int(index)]
        if i % _NEAR_WORD_EVERY == _NEAR_WORD_EVERY - 1:
            slot = i // _NEAR_WORD_EVERY
            template = _NEAR_WORD_TEMPLATES[slot % len(_NEAR_WORD_TEMPLATES)]
            text = template.format(confusable(keywords[slot % len(keywords)]))
        utterances.append(
            Utterance(
                id=utterance_id,
                text=text,
                keywords=KeywordAnnotation(utterance_id=utterance_id),
                audio_seed=int(rng.integers(2**31)),
                noise_level=round(float(rng.uniform(0.05, 0.3)), 3),
            )
        )
    return utterances


def toy_dataset(seed: int = TOY_SEED) -> DatasetBundle:
    """Generate the bundled toy dataset; identical for identical seeds."""

    rng = np.random.default_rng(seed)
    keywords = {"media": MEDIA_KEYWORDS, "medical": MEDICAL_KEYWORDS}
    all_keywords = MEDIA_KEYWORDS + MEDICAL_KEYWORDS

    entries: List[Hotword] = []
    taken = set(all_keywords)
    distractors: List[Hotword] = []
    for domain, words in keywords.items():
        entries.extend(
            Hotword(id=f"{domain}-kw-{i:03d}", surface=w, domain=domain)
            for i, w in enumerate(words)
        )
        distractors.extend(
            Hotword(id=f"{domain}-dx-{i:03d}", surface=w, domain=domain)
            for i, w in enumerate(
                _distractors(rng, TOY_DISTRACTORS_PER_DOMAIN, all_keywords, taken)
            )
        )
    vocab = Vocabulary.of(entries + distractors)

    confusions = {k: confusable(k) for k in all_keywords}
    specs: Dict[str, SynthSpec] = {}
    table: Dict[str, str] = {}
    for entry in vocab:
        carriers = tuple(t.format(entry.surface) for t in _CARRIER_TEMPLATES)
        specs[entry.id] = SynthSpec(
            hotword=entry, carrier_sentences=carriers, seed=int(rng.integers(2**31))
        )
        substitute = confusions.get(entry.surface)
        if substitute is not None:
            for carrier in carriers:
                table[carrier] = carrier.replace(entry.surface, substitute)
        elif rng.random() < 0.3:
            carrier = carriers[int(rng.integers(len(carriers)))]
            table[carrier] = carrier.replace(entry.surface, entry.surface[:-1])

    manifests = {
        "media": tuple(_keyword_set("media", MEDIA_KEYWORDS, rng)),
        "medical": tuple(_keyword_set("medical", MEDICAL_KEYWORDS, rng)),
        "general": tuple(_general_set(rng, all_keywords)),
    }
    logger.debug(
        "toy dataset: %d hotwords, %d oracle overrides", len(vocab), len(table)
    )
    return DatasetBundle(
        vocab=vocab,
        manifests=manifests,
        general_sets=("general",),
        specs=specs,
        oracle_table=table,
        confusions=confusions,
    )


@dataclass(frozen=True)
class DatasetPaths:
    """Files of a dataset on disk."""

    vocab: Path
    manifests: Dict[str, Path]
    general_sets: Tuple[str, ...] = ()
    specs: Optional[Path] = None
    oracle_table: Optional[Path] = None
    confusions: Optional[Path] = None

    def to_dict(self) -> JsonObject:
        """Convert to the `dataset` section of a run config."""

        payload: JsonObject = {
            "vocab": str(self.vocab),
            "manifests": {name: str(p) for name, p in self.manifests.items()},
            "general_sets": list(self.general_sets),
        }
        for key in ("specs", "oracle_table", "confusions"):
            value = getattr(self, key)
            if value is not None:
                payload[key] = str(value)
        return payload


def load_dataset(paths: DatasetPaths) -> DatasetBundle:
    """Read every file named by `paths`.

    Raises:
        ValidationError: If a file is malformed or a general set is unknown.
    """

    unknown = sorted(set(paths.general_sets) - set(paths.manifests))
    if unknown:
        raise ValidationError(
            message=f"General sets without a manifest: {', '.join(unknown)}.",
            details={"general_sets": list(unknown)},
        )
    vocab = read_vocab(paths.vocab)
    return DatasetBundle(
        vocab=vocab,
        manifests={
            name: tuple(read_manifest(p)) for name, p in paths.manifests.items()
        },
        general_sets=tuple(paths.general_sets),
        specs=read_specs(paths.specs, vocab) if paths.specs else {},
        oracle_table=(
            read_oracle_table(paths.oracle_table) if paths.oracle_table else {}
        ),
        confusions=read_confusions(paths.confusions) if paths.confusions else {},
    )


def write_dataset(bundle: DatasetBundle, out_dir: PathLike) -> DatasetPaths:
    """Materialize `bundle` under `out_dir` and return the written paths."""

    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    paths = DatasetPaths(
        vocab=root / "vocab.tsv",
        manifests={name: root / f"manifest_{name}.jsonl" for name in bundle.manifests},
        general_sets=bundle.general_sets,
        specs=root / "specs.jsonl",
        oracle_table=root / "oracle_table.jsonl",
        confusions=root / "confusions.jsonl",
    )
    write_vocab(bundle.vocab, paths.vocab)
    for name, utterances in bundle.manifests.items():
        write_manifest(utterances, paths.manifests[name])
    write_specs(bundle.specs.values(), root / "specs.jsonl")
    write_oracle_table(bundle.oracle_table, root / "oracle_table.jsonl")
    write_confusions(bundle.confusions, root / "confusions.jsonl")
    logger.info("wrote dataset to %s", root)
    return paths
