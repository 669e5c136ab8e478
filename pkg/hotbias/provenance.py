"""Content digests and the provenance block written next to run reports."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Union

import Levenshtein
import numpy as np
import yaml

from hotbias.types import JsonObject, JsonValue


def sha256_bytes(data: bytes) -> str:
    """Hex SHA-256 of `data`."""

    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Union[str, Path], *, chunk_size: int = 1 << 16) -> str:
    """Hex SHA-256 of a file's contents, read in chunks."""

    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_json(payload: JsonValue) -> str:
    """Hex SHA-256 of the canonical JSON encoding of `payload`."""

    return sha256_bytes(canonical_json(payload).encode("utf-8"))


def canonical_json(payload: JsonValue) -> str:
    """Stable JSON text: sorted keys, two-space indent, trailing newline."""

    return json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def package_versions() -> Dict[str, str]:
    """Versions of hotbias and the numeric libraries behind report values."""

    from hotbias import __version__

    return {
        "hotbias": __version__,
        "numpy": np.__version__,
        "levenshtein": Levenshtein.__version__,
        "pyyaml": yaml.__version__,
    }


def file_digests(paths: Iterable[Union[str, Path]]) -> Dict[str, str]:
    """Digest per file, keyed by file name in the order given."""

    return {Path(p).name: sha256_file(p) for p in paths}


def _sorted_object(values: Mapping[str, Union[str, int]]) -> JsonObject:
    return {key: values[key] for key in sorted(values)}


def build_provenance(
    *,
    config: JsonObject,
    seeds: Mapping[str, int],
    inputs: Mapping[str, str],
    outputs: Mapping[str, str],
    extra: Optional[JsonObject] = None,
) -> JsonObject:
    """Assemble the provenance document of a run.

    The document holds no timestamps or host details, so identical runs
    produce identical provenance.

    Args:
        config: Config echo.
        seeds: Named seeds used by the run.
        inputs: Digests of input data, keyed by name.
        outputs: Digests of written artifacts, keyed by file name.
        extra: Additional stage facts (e.g. RADA filter statistics).
    """

    payload: JsonObject = {
        "config": config,
        "config_sha256": sha256_json(config),
        "seeds": _sorted_object(seeds),
        "inputs": _sorted_object(inputs),
        "outputs": _sorted_object(outputs),
        "versions": _sorted_object(package_versions()),
    }
    if extra:
        payload["stages"] = extra
    return payload
