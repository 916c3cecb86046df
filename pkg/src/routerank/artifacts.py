"""Canonical file IO: deterministic JSON/JSONL/CSV writers, digests, manifests.

Every artifact the pipeline emits goes through these helpers so that a rerun
with the same config and seed produces byte-identical files.  No wall-clock
values are ever written here.
"""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np

TOOL_VERSION = "routerank 0.1.0"


class ArtifactError(Exception):
    """Raised on schema violations or digest mismatches in pipeline files."""


class MissingInputError(ArtifactError):
    """Raised when a required upstream artifact does not exist."""


def _plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays into plain Python for JSON emission."""
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and no whitespace; floats use repr round-trip."""
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_json(path: Path | str, obj: Any) -> None:
    Path(path).write_text(canonical_json(obj) + "\n", encoding="utf-8")


def read_json(path: Path | str) -> Any:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"missing input file: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"invalid JSON in {p}: {exc}") from exc


def write_jsonl(path: Path | str, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(canonical_json(rec))
            fh.write("\n")


def read_jsonl(path: Path | str) -> Iterator[dict]:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"missing input file: {p}")
    with open(p, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ArtifactError(f"{p}:{lineno}: invalid JSON line: {exc}") from exc


def write_csv(path: Path | str, header: list[str], rows: Iterable[list]) -> None:
    """Minimal CSV writer with deterministic float formatting (repr round-trip)."""

    def fmt(v: Any) -> str:
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def encode_array(a: np.ndarray) -> dict:
    """Lossless array encoding: shape + dtype + base64 of little-endian bytes."""
    contiguous = np.ascontiguousarray(a)
    le = contiguous.astype(contiguous.dtype.newbyteorder("<"), copy=False)
    return {
        "shape": list(a.shape),
        "dtype": str(a.dtype),
        "data": base64.b64encode(le.tobytes()).decode("ascii"),
    }


def decode_array(spec: dict) -> np.ndarray:
    dtype = np.dtype(spec["dtype"]).newbyteorder("<")
    raw = base64.b64decode(spec["data"])
    a = np.frombuffer(raw, dtype=dtype).reshape(spec["shape"])
    return a.astype(np.dtype(spec["dtype"]), copy=True)


def sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path | str, command: str, config: dict, seed: int,
                   inputs: dict[str, str], outputs: list[str]) -> Path:
    """Record a command run: config snapshot, seed, input digests, output digests.

    `inputs` maps path -> expected digest (already verified by the caller);
    output digests are computed here after the files are written.
    """
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "tool_version": TOOL_VERSION,
        "seed": seed,
        "config": config,
        "inputs": inputs,
        "outputs": {name: sha256_file(out_dir / name) for name in sorted(outputs)},
    }
    path = out_dir / f"{command}.manifest.json"
    write_json(path, manifest)
    return path


def verify_inputs(manifest_path: Path | str, names: list[str]) -> dict[str, str]:
    """Check that files recorded in an upstream manifest still match their digests.

    Returns {path: digest} for the verified files, keyed relative to the
    manifest's directory.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingInputError(f"missing upstream manifest: {manifest_path}")
    manifest = read_json(manifest_path)
    recorded = manifest.get("outputs", {})
    base = manifest_path.parent
    verified: dict[str, str] = {}
    for name in names:
        if name not in recorded:
            raise ArtifactError(f"{manifest_path}: no digest recorded for {name}")
        p = base / name
        if not p.exists():
            raise MissingInputError(f"missing input file: {p}")
        actual = sha256_file(p)
        if actual != recorded[name]:
            raise ArtifactError(
                f"digest mismatch for {p}: manifest {recorded[name][:12]}.., file {actual[:12]}.."
            )
        verified[str(p)] = actual
    return verified
