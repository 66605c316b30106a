"""Branched latent codes and the pure operations on them.

A latent code is an ordered tuple of sub-vectors, one per generator branch,
every entry inside [-1, 1].  All sampling is driven by an explicit seed so
any draw can be reproduced exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .config import NetConfig


class LatentError(ValueError):
    """Raised when a latent code or sampling policy violates its contracts."""


def _as_subvector(values, index: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 1 or arr.size == 0:
        raise LatentError(f"sub-vector {index} must be a non-empty 1-D array")
    if not np.all(np.isfinite(arr)):
        raise LatentError(f"sub-vector {index} contains non-finite values")
    if np.any(np.abs(arr) > 1.0):
        raise LatentError(f"sub-vector {index} has entries outside [-1, 1]")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class BranchedLatent:
    """Immutable latent code: one float32 sub-vector per branch."""

    subvectors: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.subvectors) == 0:
            raise LatentError("a latent needs at least one sub-vector")
        fixed = tuple(_as_subvector(v, i) for i, v in enumerate(self.subvectors))
        object.__setattr__(self, "subvectors", fixed)

    @classmethod
    def from_flat(cls, flat, dims: Sequence[int]) -> "BranchedLatent":
        flat = np.asarray(flat, dtype=np.float32)
        if flat.ndim != 1 or flat.size != sum(dims):
            raise LatentError(f"flat latent must have {sum(dims)} entries, got shape {flat.shape}")
        parts, start = [], 0
        for d in dims:
            parts.append(flat[start : start + d])
            start += d
        return cls(tuple(parts))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(v.size for v in self.subvectors)

    @property
    def n_subvectors(self) -> int:
        return len(self.subvectors)

    def flat(self) -> np.ndarray:
        """Concatenation in branch order (coarse first)."""
        return np.concatenate(self.subvectors)

    def replace(self, index: int, values) -> "BranchedLatent":
        """New latent with sub-vector ``index`` swapped out."""
        if not 0 <= index < self.n_subvectors:
            raise LatentError(f"sub-vector index {index} out of range")
        parts = list(self.subvectors)
        parts[index] = np.asarray(values, dtype=np.float32)
        return BranchedLatent(tuple(parts))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BranchedLatent):
            return NotImplemented
        return self.dims == other.dims and all(
            np.array_equal(a, b) for a, b in zip(self.subvectors, other.subvectors)
        )

    def __repr__(self) -> str:
        return f"BranchedLatent(dims={self.dims})"

    def to_json_obj(self) -> dict:
        return {"subvectors": [v.tolist() for v in self.subvectors]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj: dict) -> "BranchedLatent":
        if "subvectors" not in obj:
            raise LatentError("latent JSON must have a 'subvectors' key")
        return cls(tuple(np.asarray(v, dtype=np.float32) for v in obj["subvectors"]))

    @classmethod
    def from_json(cls, text: str) -> "BranchedLatent":
        return cls.from_json_obj(json.loads(text))


def check_matches(latent: BranchedLatent, config: NetConfig) -> None:
    if latent.dims != config.subvector_dims:
        raise LatentError(
            f"latent dims {latent.dims} do not match model dims {config.subvector_dims}"
        )


# --------------------------------------------------------------------------
# Sampling policies


@dataclass(frozen=True)
class LatentSource:
    """How one sub-vector is produced: frozen zeros, a uniform draw of given
    half-width, a fixed constant vector, or a scalar broadcast fill."""

    kind: str
    alpha: float = 1.0
    constant: Optional[np.ndarray] = None
    fill_value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("frozen", "uniform", "constant", "fill"):
            raise LatentError(f"unknown latent source kind {self.kind!r}")
        if self.kind == "uniform" and not 0.0 <= self.alpha <= 1.0:
            raise LatentError(f"uniform half-width must be in [0, 1], got {self.alpha}")
        if self.kind == "constant":
            if self.constant is None:
                raise LatentError("constant source needs a vector")
            arr = _as_subvector(self.constant, -1)
            object.__setattr__(self, "constant", arr)
        if self.kind == "fill" and abs(self.fill_value) > 1.0:
            raise LatentError(f"fill value must be in [-1, 1], got {self.fill_value}")

    @staticmethod
    def frozen() -> "LatentSource":
        return LatentSource("frozen")

    @staticmethod
    def uniform(alpha: float = 1.0) -> "LatentSource":
        return LatentSource("uniform", alpha=float(alpha))

    @staticmethod
    def const(values) -> "LatentSource":
        return LatentSource("constant", constant=np.asarray(values, dtype=np.float32))

    @staticmethod
    def fill(value: float) -> "LatentSource":
        return LatentSource("fill", fill_value=float(value))

    def draw(self, rng: np.random.Generator, dim: int, n: int) -> np.ndarray:
        """Draw ``n`` samples of this sub-vector as an (n, dim) float32 block.

        Only the uniform kind consumes randomness, so deterministic sources
        never perturb the stream used by other sub-vectors.
        """
        if self.kind == "frozen":
            return np.zeros((n, dim), dtype=np.float32)
        if self.kind == "uniform":
            block = rng.uniform(-self.alpha, self.alpha, size=(n, dim))
            return block.astype(np.float32)
        if self.kind == "constant":
            if self.constant.size != dim:
                raise LatentError(
                    f"constant vector has {self.constant.size} entries, sub-vector needs {dim}"
                )
            return np.tile(self.constant, (n, 1))
        return np.full((n, dim), self.fill_value, dtype=np.float32)


@dataclass(frozen=True)
class SamplePolicy:
    """One LatentSource per sub-vector."""

    sources: tuple[LatentSource, ...]

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if len(self.sources) == 0:
            raise LatentError("a policy needs at least one source")

    @staticmethod
    def all_uniform(n_subvectors: int, alpha: float = 1.0) -> "SamplePolicy":
        return SamplePolicy(tuple(LatentSource.uniform(alpha) for _ in range(n_subvectors)))

    @staticmethod
    def active_prefix(
        n_subvectors: int, n_active: int, last_alpha: float = 1.0
    ) -> "SamplePolicy":
        """First ``n_active`` sub-vectors live, the newest at ``last_alpha``
        half-width, the rest frozen to zero."""
        if not 1 <= n_active <= n_subvectors:
            raise LatentError(f"n_active {n_active} out of range 1..{n_subvectors}")
        sources = []
        for t in range(n_subvectors):
            if t < n_active - 1:
                sources.append(LatentSource.uniform(1.0))
            elif t == n_active - 1:
                sources.append(LatentSource.uniform(last_alpha))
            else:
                sources.append(LatentSource.frozen())
        return SamplePolicy(tuple(sources))


def sample_latent(config: NetConfig, policy: SamplePolicy, seed: int) -> BranchedLatent:
    """Draw one latent.  A pure function of (config, policy, seed)."""
    batch = sample_latent_batch(config, policy, seed, 1)
    return BranchedLatent.from_flat(batch[0], config.subvector_dims)


def sample_latent_batch(
    config: NetConfig, policy: SamplePolicy, seed: int, n: int
) -> np.ndarray:
    """Draw ``n`` flat latents as an (n, total_dims) float32 array."""
    if len(policy.sources) != config.branches:
        raise LatentError(
            f"policy covers {len(policy.sources)} sub-vectors, model has {config.branches}"
        )
    rng = np.random.default_rng(seed)
    blocks = [
        src.draw(rng, dim, n) for src, dim in zip(policy.sources, config.subvector_dims)
    ]
    return np.concatenate(blocks, axis=1)


# --------------------------------------------------------------------------
# Pure latent operations


def fuse(a: BranchedLatent, b: BranchedLatent, take_from_a: Iterable[int]) -> BranchedLatent:
    """Combine two codes: sub-vectors listed in ``take_from_a`` come from
    ``a``, everything else from ``b``."""
    if a.dims != b.dims:
        raise LatentError(f"cannot fuse latents with dims {a.dims} and {b.dims}")
    chosen = set(int(t) for t in take_from_a)
    for t in chosen:
        if not 0 <= t < a.n_subvectors:
            raise LatentError(f"fuse index {t} out of range 0..{a.n_subvectors - 1}")
    parts = tuple(
        a.subvectors[t] if t in chosen else b.subvectors[t] for t in range(a.n_subvectors)
    )
    return BranchedLatent(parts)


def constant_sweep(
    base: BranchedLatent, index: int, values: Sequence[float]
) -> list[BranchedLatent]:
    """Latents identical to ``base`` except sub-vector ``index`` is swept
    through constant fills ``values``."""
    if not 0 <= index < base.n_subvectors:
        raise LatentError(f"sweep index {index} out of range")
    out = []
    dim = base.dims[index]
    for p in values:
        p = float(p)
        if abs(p) > 1.0:
            raise LatentError(f"sweep value {p} outside [-1, 1]")
        out.append(base.replace(index, np.full(dim, p, dtype=np.float32)))
    return out
