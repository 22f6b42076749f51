"""Low-rank adapter checkpoints: representation, weighted merging, disk format.

On disk a run is a directory holding ``checkpoint-<stage>.json`` metadata
plus one flat binary file of little-endian float32 per tensor, named by
sanitized key. Read/write round trips are bit-exact.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AllZeroWeights, KeyMismatch, ShapeMismatch


@dataclass(frozen=True, eq=False)
class LoraCheckpoint:
    checkpoint_id: str
    stage: int
    tensors: dict[str, np.ndarray]

    def __post_init__(self):
        if not self.tensors:
            raise ValueError("checkpoint tensor map must be non-empty")
        fixed = {
            k: np.ascontiguousarray(v, dtype=np.float32)
            for k, v in self.tensors.items()
        }
        object.__setattr__(self, "tensors", fixed)


@dataclass(frozen=True, eq=False)
class MergedLora:
    tensors: dict[str, np.ndarray]
    provenance: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self):
        fixed = {
            k: np.ascontiguousarray(v, dtype=np.float32)
            for k, v in self.tensors.items()
        }
        object.__setattr__(self, "tensors", fixed)
        total = sum(w for _, w in self.provenance)
        if self.provenance and abs(total - 1.0) > 1e-9:
            raise ValueError(f"provenance weights must sum to 1, got {total}")

    def mean_value(self) -> float:
        """Mean over every tensor element; the mock backend's observable."""
        total = 0.0
        count = 0
        for t in self.tensors.values():
            total += float(t.astype(np.float64).sum())
            count += t.size
        return total / count if count else 0.0


def normalized_weights(weights: list[float]) -> list[float]:
    """Scale to sum exactly 1.0: the last entry absorbs rounding residue."""
    total = float(sum(weights))
    out = [w / total for w in weights[:-1]]
    out.append(1.0 - sum(out))
    return out


def merge_lora(checkpoints: list[LoraCheckpoint], weights: list[float]) -> MergedLora:
    """Per-key weighted mean of the checkpoints.

    Weights need not be normalized (the result is invariant to scaling);
    provenance records the normalized weights.
    """
    if not checkpoints:
        raise ValueError("need at least one checkpoint")
    if len(checkpoints) != len(weights):
        raise ValueError("checkpoints and weights must have equal length")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be >= 0")
    total = float(sum(weights))
    if total <= 0.0:
        raise AllZeroWeights("weights sum to zero")

    keys = set(checkpoints[0].tensors)
    for ck in checkpoints[1:]:
        if set(ck.tensors) != keys:
            raise KeyMismatch(
                f"checkpoint {ck.checkpoint_id} keys differ from {checkpoints[0].checkpoint_id}"
            )
        for k in keys:
            if ck.tensors[k].shape != checkpoints[0].tensors[k].shape:
                raise ShapeMismatch(f"tensor {k!r} shape differs in {ck.checkpoint_id}")

    merged: dict[str, np.ndarray] = {}
    for k in sorted(keys):
        acc = np.zeros(checkpoints[0].tensors[k].shape, dtype=np.float64)
        for ck, w in zip(checkpoints, weights):
            acc += float(w) * ck.tensors[k].astype(np.float64)
        merged[k] = (acc / total).astype(np.float32)

    prov = list(zip([ck.checkpoint_id for ck in checkpoints], normalized_weights(list(map(float, weights)))))
    return MergedLora(tensors=merged, provenance=prov)


# ---------------------------------------------------------------------------
# disk format


def sanitize_key(key: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", key)


def _tensor_files(tensors: dict[str, np.ndarray]) -> dict[str, str]:
    """Stable key -> filename map; collisions get ordinal suffixes."""
    used: dict[str, int] = {}
    out = {}
    for key in sorted(tensors):
        base = sanitize_key(key)
        n = used.get(base, 0)
        used[base] = n + 1
        out[key] = f"{base}.bin" if n == 0 else f"{base}-{n}.bin"
    return out


def _write_tensors(dirpath: Path, tensors: dict[str, np.ndarray]) -> dict:
    files = _tensor_files(tensors)
    index = {}
    for key, fname in files.items():
        arr = np.ascontiguousarray(tensors[key], dtype="<f4")
        (dirpath / fname).write_bytes(arr.tobytes())
        index[key] = {"file": fname, "shape": list(tensors[key].shape)}
    return index


def _read_tensors(dirpath: Path, index: dict) -> dict[str, np.ndarray]:
    tensors = {}
    for key, meta in index.items():
        raw = (dirpath / meta["file"]).read_bytes()
        arr = np.frombuffer(raw, dtype="<f4").reshape(meta["shape"])
        tensors[key] = arr.astype(np.float32)
    return tensors


def save_checkpoint(dirpath: str | Path, ckpt: LoraCheckpoint) -> Path:
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    index = _write_tensors(dirpath, ckpt.tensors)
    meta = {
        "v": 1,
        "checkpoint_id": ckpt.checkpoint_id,
        "stage": ckpt.stage,
        "tensors": index,
    }
    path = dirpath / f"checkpoint-{ckpt.stage}.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(dirpath: str | Path, stage: int) -> LoraCheckpoint:
    dirpath = Path(dirpath)
    meta = json.loads((dirpath / f"checkpoint-{stage}.json").read_text())
    return LoraCheckpoint(
        checkpoint_id=meta["checkpoint_id"],
        stage=int(meta["stage"]),
        tensors=_read_tensors(dirpath, meta["tensors"]),
    )


def load_run(dirpath: str | Path) -> list[LoraCheckpoint]:
    dirpath = Path(dirpath)
    stages = sorted(
        int(p.stem.split("-")[1]) for p in dirpath.glob("checkpoint-*.json")
    )
    return [load_checkpoint(dirpath, s) for s in stages]


def save_merged(dirpath: str | Path, merged: MergedLora) -> Path:
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    index = _write_tensors(dirpath, merged.tensors)
    meta = {
        "v": 1,
        "provenance": [[cid, w] for cid, w in merged.provenance],
        "tensors": index,
    }
    path = dirpath / "merged.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_merged(dirpath: str | Path) -> MergedLora:
    dirpath = Path(dirpath)
    meta = json.loads((dirpath / "merged.json").read_text())
    return MergedLora(
        tensors=_read_tensors(dirpath, meta["tensors"]),
        provenance=[(cid, float(w)) for cid, w in meta["provenance"]],
    )
