"""Bit-exact checkpoint archives.

A checkpoint is a zip file holding a JSON manifest plus one raw
little-endian binary blob per tensor.  The manifest records dtype, shape,
and a sha256 digest for every blob, so loads detect corruption, and the
write goes through a temp file + atomic rename so a crash never leaves a
half-written archive at the target path.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import zipfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import NetConfig

FORMAT_VERSION = 1

_SUPPORTED_DTYPES = {"<f4", "<f8", "<i8"}


class CheckpointError(RuntimeError):
    """Raised for unreadable, corrupt, or incompatible archives."""


@dataclass
class Checkpoint:
    """Everything needed to resume: config, stage, tensors, counters."""

    config: NetConfig
    stage: int
    tensors: dict[str, np.ndarray]
    train_state: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        """Tensors under ``prefix.`` with the prefix stripped."""
        cut = len(prefix) + 1
        return {k[cut:]: v for k, v in self.tensors.items() if k.startswith(prefix + ".")}


def _normalize_dtype(arr: np.ndarray) -> np.ndarray:
    dtype = arr.dtype.newbyteorder("<")
    if dtype.str not in _SUPPORTED_DTYPES:
        raise CheckpointError(f"unsupported tensor dtype {arr.dtype}")
    arr = arr.astype(dtype, copy=False)
    # ascontiguousarray would promote 0-d scalars to shape (1,)
    return np.ascontiguousarray(arr) if arr.ndim else arr


def save_checkpoint(path: str, checkpoint: Checkpoint) -> None:
    """Write the archive atomically (temp file + rename)."""
    entries = {}
    blobs = {}
    for name, arr in checkpoint.tensors.items():
        arr = _normalize_dtype(np.asarray(arr))
        raw = arr.tobytes()
        entries[name] = {
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "sha256": hashlib.sha256(raw).hexdigest(),
        }
        blobs[name] = raw
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": checkpoint.config.to_json_obj(),
        "stage": checkpoint.stage,
        "train_state": checkpoint.train_state,
        "metadata": checkpoint.metadata,
        "tensors": entries,
    }
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            with zipfile.ZipFile(fh, "w", compression=zipfile.ZIP_STORED) as zf:
                zf.writestr("manifest.json", json.dumps(manifest, indent=2))
                for name, raw in blobs.items():
                    zf.writestr(f"tensors/{name}.bin", raw)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def load_checkpoint(path: str) -> Checkpoint:
    """Read and verify an archive; any checksum or version mismatch raises."""
    if not os.path.exists(path):
        raise CheckpointError(f"no checkpoint at {path!r}")
    try:
        with zipfile.ZipFile(path, "r") as zf:
            manifest = json.loads(zf.read("manifest.json"))
            version = manifest.get("format_version")
            if version != FORMAT_VERSION:
                raise CheckpointError(
                    f"checkpoint format {version} is not supported (expected {FORMAT_VERSION})"
                )
            tensors = {}
            for name, entry in manifest["tensors"].items():
                raw = zf.read(f"tensors/{name}.bin")
                digest = hashlib.sha256(raw).hexdigest()
                if digest != entry["sha256"]:
                    raise CheckpointError(f"checksum mismatch for tensor {name!r}")
                arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]))
                tensors[name] = arr.reshape(entry["shape"]).copy()
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path!r}: {exc}") from exc
    return Checkpoint(
        config=NetConfig.from_json_obj(manifest["config"]),
        stage=int(manifest["stage"]),
        tensors=tensors,
        train_state=manifest.get("train_state", {}),
        metadata=manifest.get("metadata", {}),
    )
