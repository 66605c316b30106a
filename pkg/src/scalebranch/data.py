"""Training data: image loading, exact area-average pyramids, and a
band-limited synthetic corpus.

The synthetic corpus composes three layers with known spectral placement —
a smooth two-color gradient (coarse band), a few soft shapes band-limited to
the mid bands, and a high-frequency sinusoidal texture — so scale
attribution tests have ground truth.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .spectral import band_filter


class DataError(ValueError):
    """Raised for unreadable datasets or invalid recipes."""


# --------------------------------------------------------------------------
# Exact area-average resampling


def _box_weights(n_src: int, n_dst: int) -> np.ndarray:
    """(n_dst, n_src) matrix averaging fractional source boxes.

    Destination cell i covers [i*s, (i+1)*s) in source coordinates with
    s = n_src / n_dst; each source pixel contributes its overlap with the
    box, normalized by the (constant) box length, so every row sums to 1
    and the global mean is preserved exactly.
    """
    if n_dst > n_src:
        raise DataError(f"area resampling only reduces: {n_src} -> {n_dst}")
    s = n_src / n_dst
    weights = np.zeros((n_dst, n_src), dtype=np.float64)
    for i in range(n_dst):
        lo, hi = i * s, (i + 1) * s
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_src)):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                weights[i, j] = overlap / s
    return weights


def area_downsample(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Downsample [H,W,C] (or [H,W]) by exact box averaging; fractional
    ratios are handled, and ``size == image size`` returns a copy."""
    image = np.asarray(image)
    if image.ndim not in (2, 3):
        raise DataError(f"expected [H,W] or [H,W,C], got shape {image.shape}")
    th, tw = int(size[0]), int(size[1])
    h, w = image.shape[:2]
    if (th, tw) == (h, w):
        return image.copy()
    work = image.astype(np.float64, copy=False)
    ah = _box_weights(h, th)
    aw = _box_weights(w, tw)
    if work.ndim == 2:
        out = ah @ work @ aw.T
    else:
        out = np.einsum("ih,hwc,jw->ijc", ah, work, aw)
    return out.astype(np.float32)


def make_pyramid(
    image: np.ndarray, resolutions: Sequence[tuple[int, int]]
) -> list[np.ndarray]:
    """The image at every requested resolution, each computed directly from
    the original by area averaging."""
    return [area_downsample(image, r) for r in resolutions]


# --------------------------------------------------------------------------
# Synthetic corpus


@dataclass(frozen=True)
class SyntheticRecipe:
    """Parameters of the three-layer synthetic corpus."""

    n_samples: int = 512
    size: tuple[int, int] = (32, 32)
    palette_low: float = 0.30
    palette_high: float = 0.70
    mid_band: tuple[float, float] = (1.0 / 16.0, 1.0 / 4.0)
    fine_band: tuple[float, float] = (1.0 / 2.0, 1.0)
    mid_weight: float = 0.16
    fine_weight: float = 0.10
    max_shapes: int = 3

    def __post_init__(self):
        if self.n_samples < 1:
            raise DataError("n_samples must be positive")
        if min(self.size) < 8:
            raise DataError("corpus images must be at least 8x8")
        if not 0.0 <= self.palette_low < self.palette_high <= 1.0:
            raise DataError("palette endpoints must satisfy 0 <= low < high <= 1")
        margin = min(self.palette_low, 1.0 - self.palette_high)
        if self.mid_weight + self.fine_weight > margin:
            raise DataError(
                "layer weights exceed the palette margin; composite would clip"
            )
        if self.max_shapes < 1:
            raise DataError("max_shapes must be >= 1")

    def to_json_obj(self) -> dict:
        obj = asdict(self)
        obj["size"] = list(self.size)
        obj["mid_band"] = list(self.mid_band)
        obj["fine_band"] = list(self.fine_band)
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SyntheticRecipe":
        kwargs = dict(obj)
        for key in ("size", "mid_band", "fine_band"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticRecipe":
        return cls.from_json_obj(json.loads(text))


def _coarse_layer(recipe: SyntheticRecipe, rng: np.random.Generator) -> np.ndarray:
    """Two-color gradient whose spatial field mixes only the two axis
    fundamentals, i.e. the lowest representable nonzero frequencies."""
    h, w = recipe.size
    y = np.arange(h)[:, None]
    x = np.arange(w)[None, :]
    ay, ax = rng.uniform(0.35, 1.0, size=2)
    py, px = rng.uniform(0.0, 2.0 * np.pi, size=2)
    fld = ay * np.cos(2.0 * np.pi * y / h + py) + ax * np.cos(2.0 * np.pi * x / w + px)
    lo, hi = fld.min(), fld.max()
    fld = (fld - lo) / (hi - lo)  # affine into [0, 1]; band content unchanged
    c1 = rng.uniform(recipe.palette_low, recipe.palette_high, size=3)
    c2 = rng.uniform(recipe.palette_low, recipe.palette_high, size=3)
    return c1[None, None, :] + (c2 - c1)[None, None, :] * fld[..., None]


def _shape_canvas(recipe: SyntheticRecipe, rng: np.random.Generator) -> np.ndarray:
    """A few soft-edged ellipses/rectangles on a zero canvas."""
    h, w = recipe.size
    y = np.arange(h)[:, None].astype(np.float64)
    x = np.arange(w)[None, :].astype(np.float64)
    canvas = np.zeros((h, w), dtype=np.float64)
    n_shapes = rng.integers(1, recipe.max_shapes + 1)
    for _ in range(n_shapes):
        cy = rng.uniform(0.2 * h, 0.8 * h)
        cx = rng.uniform(0.2 * w, 0.8 * w)
        ry = rng.uniform(0.10 * h, 0.25 * h)
        rx = rng.uniform(0.10 * w, 0.25 * w)
        theta = rng.uniform(0.0, np.pi)
        value = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0)
        ct, st = np.cos(theta), np.sin(theta)
        u = (x - cx) * ct + (y - cy) * st
        v = -(x - cx) * st + (y - cy) * ct
        if rng.uniform() < 0.5:
            dist = np.sqrt((u / rx) ** 2 + (v / ry) ** 2) - 1.0
            dist = dist * min(rx, ry)
        else:
            dist = np.maximum(np.abs(u) - rx, np.abs(v) - ry)
        edge = np.clip(0.5 - dist, 0.0, 1.0)  # one-pixel soft edge
        canvas += value * edge
    return canvas


def _mid_layer(recipe: SyntheticRecipe, rng: np.random.Generator) -> np.ndarray:
    canvas = _shape_canvas(recipe, rng)
    lo, hi = recipe.mid_band
    limited = band_filter(canvas, lo, hi)
    peak = np.abs(limited).max()
    if peak > 0:
        limited = limited / peak
    return limited


def _fine_layer(recipe: SyntheticRecipe, rng: np.random.Generator) -> np.ndarray:
    """A single on-grid sinusoid whose radial frequency lies in the fine band."""
    h, w = recipe.size
    lo, hi = recipe.fine_band
    candidates = []
    for u in range(0, h // 2 + 1):
        for v in range(0, w // 2 + 1):
            r = 2.0 * np.sqrt((u / h) ** 2 + (v / w) ** 2)
            if lo < r <= hi:
                candidates.append((u, v))
    if not candidates:
        raise DataError(f"no grid frequency falls in the band ({lo}, {hi}]")
    u, v = candidates[rng.integers(0, len(candidates))]
    phase = rng.uniform(0.0, 2.0 * np.pi)
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    y = np.arange(h)[:, None]
    x = np.arange(w)[None, :]
    return np.cos(2.0 * np.pi * (u * y / h + sign * v * x / w) + phase)


def synthesize_sample(
    recipe: SyntheticRecipe, seed: int
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """One corpus image plus its constituent layers (for inspection/tests)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    coarse = _coarse_layer(recipe, rng)
    mid = _mid_layer(recipe, rng)
    fine = _fine_layer(recipe, rng)
    image = coarse + recipe.mid_weight * mid[..., None] + recipe.fine_weight * fine[..., None]
    # The palette margin guarantees [0, 1] by construction; clip only guards
    # against float round-off at the boundary.
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return image, {"coarse": coarse, "mid": mid, "fine": fine}


def generate_synthetic(recipe: SyntheticRecipe, seed: int = 0) -> np.ndarray:
    """The full corpus as an (n, H, W, 3) float32 array in [0, 1]."""
    root = np.random.SeedSequence([seed])
    child_seeds = root.generate_state(recipe.n_samples)
    images = [synthesize_sample(recipe, int(s))[0] for s in child_seeds]
    return np.stack(images)


# --------------------------------------------------------------------------
# Dataset specs, loading, iteration


@dataclass(frozen=True)
class DatasetSpec:
    """Where training images come from: a directory of PNG/JPEG files or a
    synthetic recipe.  Exactly one source must be set."""

    directory: Optional[str] = None
    recipe: Optional[SyntheticRecipe] = None
    synthetic_seed: int = 0

    def __post_init__(self):
        if (self.directory is None) == (self.recipe is None):
            raise DataError("set exactly one of directory / recipe")

    def to_json_obj(self) -> dict:
        return {
            "directory": self.directory,
            "recipe": self.recipe.to_json_obj() if self.recipe else None,
            "synthetic_seed": self.synthetic_seed,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DatasetSpec":
        recipe = obj.get("recipe")
        return cls(
            directory=obj.get("directory"),
            recipe=SyntheticRecipe.from_json_obj(recipe) if recipe else None,
            synthetic_seed=int(obj.get("synthetic_seed", 0)),
        )


_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


def _load_directory(directory: str) -> np.ndarray:
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"dataset directory {directory!r} does not exist")
    paths = sorted(p for p in root.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    if not paths:
        raise DataError(f"no PNG/JPEG files in {directory!r}")
    images = []
    shape = None
    for p in paths:
        try:
            with Image.open(p) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        except Exception as exc:
            raise DataError(f"cannot read image {p}: {exc}") from exc
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise DataError(
                f"mixed resolutions in {directory!r}: {p.name} is "
                f"{arr.shape[:2]}, expected {shape[:2]}"
            )
        images.append(arr)
    return np.stack(images)


def load_dataset(spec: DatasetSpec) -> np.ndarray:
    """Materialize the dataset as (n, H, W, 3) float32 in [0, 1]."""
    if spec.directory is not None:
        return _load_directory(spec.directory)
    return generate_synthetic(spec.recipe, spec.synthetic_seed)


class Pyramid:
    """Every dataset image at every training resolution, precomputed."""

    def __init__(self, images: np.ndarray, resolutions: Sequence[tuple[int, int]]):
        images = np.asarray(images, dtype=np.float32)
        if images.ndim != 4:
            raise DataError(f"expected (n, H, W, C) images, got shape {images.shape}")
        self.n_images = images.shape[0]
        self.resolutions = [tuple(int(v) for v in r) for r in resolutions]
        self._levels: dict[tuple[int, int], np.ndarray] = {}
        for res in self.resolutions:
            self._levels[res] = np.stack([area_downsample(im, res) for im in images])

    def at(self, resolution: tuple[int, int]) -> np.ndarray:
        res = tuple(int(v) for v in resolution)
        if res not in self._levels:
            raise DataError(f"resolution {res} not in pyramid {self.resolutions}")
        return self._levels[res]


def epoch_order(n_images: int, epoch: int, seed: int) -> np.ndarray:
    """Deterministic shuffle of image indices for one epoch — a pure
    function of (n_images, epoch, seed)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xDA7A, epoch]))
    return rng.permutation(n_images)


def save_images(images: np.ndarray, directory: str, prefix: str = "img") -> list[str]:
    """Write (n, H, W, 3) float images in [0, 1] as PNG files."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, im in enumerate(np.asarray(images)):
        arr = np.clip(np.asarray(im, dtype=np.float64) * 255.0, 0, 255).round().astype(np.uint8)
        path = os.path.join(directory, f"{prefix}_{i:05d}.png")
        Image.fromarray(arr).save(path)
        paths.append(path)
    return paths
