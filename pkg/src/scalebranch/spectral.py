"""Frequency-band filtering and the variance-by-scale attribution metric.

Bands are intervals of normalized radial frequency r in (0, 1], where
r = 2 * sqrt((u/H)^2 + (v/W)^2) for integer DFT frequencies (u, v); r = 1 is
the axis Nyquist and diagonal frequencies with r > 1 are folded into the
last band.  The first band additionally owns the DC term, so the bands
partition the full spectrum.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class SpectralError(ValueError):
    """Raised on invalid band layouts or undefined normalized values."""


DEFAULT_BAND_EDGES: tuple[tuple[float, float], ...] = (
    (0.0, 1.0 / 16.0),
    (1.0 / 16.0, 1.0 / 8.0),
    (1.0 / 8.0, 1.0 / 4.0),
    (1.0 / 4.0, 1.0 / 2.0),
    (1.0 / 2.0, 1.0),
)


@dataclass(frozen=True)
class BandSpec:
    """An ordered, disjoint set of half-open bands (lo, hi] covering (0, 1]."""

    edges: tuple[tuple[float, float], ...] = DEFAULT_BAND_EDGES

    def __post_init__(self):
        edges = tuple((float(lo), float(hi)) for lo, hi in self.edges)
        object.__setattr__(self, "edges", edges)
        if len(edges) == 0:
            raise SpectralError("need at least one band")
        if edges[0][0] != 0.0:
            raise SpectralError("first band must start at 0")
        if edges[-1][1] != 1.0:
            raise SpectralError("last band must end at 1")
        for (lo, hi) in edges:
            if not lo < hi:
                raise SpectralError(f"band ({lo}, {hi}] is empty")
        for (_, hi_prev), (lo_cur, _) in zip(edges, edges[1:]):
            if hi_prev != lo_cur:
                raise SpectralError("bands must be contiguous")

    @property
    def n_bands(self) -> int:
        return len(self.edges)

    def labels(self) -> list[str]:
        return [f"({lo:g},{hi:g}]" for lo, hi in self.edges]


def radial_frequency(shape: tuple[int, int]) -> np.ndarray:
    """Normalized radial frequency map for an H x W DFT, clipped to 1."""
    h, w = shape
    fu = np.fft.fftfreq(h)[:, None]  # cycles per pixel, in [-0.5, 0.5)
    fv = np.fft.fftfreq(w)[None, :]
    r = 2.0 * np.sqrt(fu * fu + fv * fv)
    return np.minimum(r, 1.0)


def band_mask(shape: tuple[int, int], lo: float, hi: float) -> np.ndarray:
    """Boolean DFT-bin mask for the band (lo, hi]; DC included iff lo == 0."""
    r = radial_frequency(shape)
    mask = (r > lo) & (r <= hi)
    if lo == 0.0:
        mask[0, 0] = True
    return mask


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim not in (2, 3):
        raise SpectralError(f"expected [H,W] or [H,W,C] image, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise SpectralError("image contains non-finite values")
    return image


def band_filter(image: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Keep only the (lo, hi] band of an image; returns a real array of the
    same shape.  Channels are filtered independently."""
    image = _check_image(image)
    squeeze = image.ndim == 2
    if squeeze:
        image = image[..., None]
    mask = band_mask(image.shape[:2], lo, hi)
    spectrum = np.fft.fft2(image, axes=(0, 1))
    filtered = np.fft.ifft2(spectrum * mask[..., None], axes=(0, 1)).real
    return filtered[..., 0] if squeeze else filtered


def band_energies(image: np.ndarray, bands: BandSpec = BandSpec()) -> np.ndarray:
    """Per-band sum of squared pixel values of the band-filtered image."""
    image = _check_image(image)
    return np.array(
        [float(np.sum(band_filter(image, lo, hi) ** 2)) for lo, hi in bands.edges]
    )


def _band_stack_stds(images: np.ndarray, bands: BandSpec) -> np.ndarray:
    """Summed per-element std across a sample stack, for every band.

    images: (n, H, W, C).  Returns (n_bands,) float64.  The FFT of the stack
    is computed once and re-masked per band.
    """
    n = images.shape[0]
    spectrum = np.fft.fft2(images, axes=(1, 2))
    out = np.empty(bands.n_bands, dtype=np.float64)
    for b, (lo, hi) in enumerate(bands.edges):
        mask = band_mask(images.shape[1:3], lo, hi)
        filtered = np.fft.ifft2(spectrum * mask[None, :, :, None], axes=(1, 2)).real
        out[b] = float(np.sum(np.std(filtered, axis=0)))
    return out


# --------------------------------------------------------------------------
# Variance by scale


@dataclass(frozen=True)
class VbsTarget:
    """What is varied: a whole sub-vector or a single latent dimension."""

    kind: str  # "subvector" | "dimension"
    index: int

    def __post_init__(self):
        if self.kind not in ("subvector", "dimension"):
            raise SpectralError(f"unknown target kind {self.kind!r}")
        if self.index < 0:
            raise SpectralError("target index must be >= 0")

    def label(self) -> str:
        return f"{self.kind}:{self.index}"

    def flat_indices(self, subvector_dims: Sequence[int]) -> np.ndarray:
        total = sum(subvector_dims)
        if self.kind == "dimension":
            if self.index >= total:
                raise SpectralError(f"dimension {self.index} out of range 0..{total - 1}")
            return np.array([self.index])
        if self.index >= len(subvector_dims):
            raise SpectralError(
                f"sub-vector {self.index} out of range 0..{len(subvector_dims) - 1}"
            )
        start = sum(subvector_dims[: self.index])
        return np.arange(start, start + subvector_dims[self.index])


def subvector_targets(n: int) -> list[VbsTarget]:
    return [VbsTarget("subvector", t) for t in range(n)]


def dimension_targets(total_dims: int) -> list[VbsTarget]:
    return [VbsTarget("dimension", i) for i in range(total_dims)]


GenerateFn = Callable[[np.ndarray], np.ndarray]
"""Maps a (n, total_dims) float array of flat latents to (n, H, W, C) images."""


def vbs_raw(
    generate: GenerateFn,
    subvector_dims: Sequence[int],
    target: VbsTarget,
    constant: np.ndarray,
    band: tuple[float, float],
    n_samples: int = 256,
    seed: int = 0,
) -> float:
    """Un-normalized variance by scale for one target/constant/band.

    The target entries of the latent are redrawn uniformly from [-1, 1] while
    every other entry stays pinned to ``constant``; the population standard
    deviation of the band-filtered output is summed over pixels and channels.
    """
    if not 0.0 <= band[0] < band[1] <= 1.0:
        raise SpectralError(f"band ({band[0]}, {band[1]}] is not a sub-interval of (0, 1]")
    if n_samples < 2:
        raise SpectralError("variance needs at least 2 samples")
    images = _vbs_sample_images(generate, subvector_dims, target, constant, n_samples, seed)
    spectrum = np.fft.fft2(images, axes=(1, 2))
    mask = band_mask(images.shape[1:3], band[0], band[1])
    filtered = np.fft.ifft2(spectrum * mask[None, :, :, None], axes=(1, 2)).real
    return float(np.sum(np.std(filtered, axis=0)))


def _vbs_sample_images(
    generate: GenerateFn,
    subvector_dims: Sequence[int],
    target: VbsTarget,
    constant: np.ndarray,
    n_samples: int,
    seed: int,
) -> np.ndarray:
    total = sum(subvector_dims)
    constant = np.asarray(constant, dtype=np.float32)
    if constant.shape != (total,):
        raise SpectralError(f"constant latent must have shape ({total},), got {constant.shape}")
    idx = target.flat_indices(subvector_dims)
    rng = np.random.default_rng(seed)
    z = np.tile(constant, (n_samples, 1))
    z[:, idx] = rng.uniform(-1.0, 1.0, size=(n_samples, idx.size)).astype(np.float32)
    images = np.asarray(generate(z), dtype=np.float64)
    if images.ndim != 4 or images.shape[0] != n_samples:
        raise SpectralError(f"generate must return (n, H, W, C) images, got {images.shape}")
    if not np.all(np.isfinite(images)):
        raise SpectralError("generator produced non-finite pixels")
    return images


@dataclass
class VbsReport:
    """Raw and cohort-normalized variance-by-scale values.

    raw[t, c, b] is the un-normalized value for target t under constant
    context c in band b.  Normalization divides by the cohort mean of the
    band (mean over all targets and constants); bands whose cohort mean is
    zero are flagged undefined rather than divided.
    """

    target_labels: list[str]
    bands: BandSpec
    raw: np.ndarray  # (T, C, B) float64
    n_samples: int
    seed: int
    undefined_bands: list[int] = field(default_factory=list)
    normalized: Optional[np.ndarray] = None  # (T, B); NaN in undefined bands
    cell_normalized: Optional[np.ndarray] = None  # (T, C, B)

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64)
        if self.raw.ndim != 3:
            raise SpectralError("raw values must be a (targets, constants, bands) array")
        if self.raw.shape[0] != len(self.target_labels):
            raise SpectralError("one raw row per target required")
        if self.raw.shape[2] != self.bands.n_bands:
            raise SpectralError("one raw column per band required")
        if self.normalized is None:
            self._normalize()

    def _normalize(self):
        band_means = self.raw.mean(axis=(0, 1))  # (B,)
        undefined = [b for b, m in enumerate(band_means) if not (np.isfinite(m) and m > 0)]
        self.undefined_bands = undefined
        raw_mean = self.raw.mean(axis=1)  # (T, B)
        normalized = np.full_like(raw_mean, np.nan)
        cells = np.full_like(self.raw, np.nan)
        for b in range(self.bands.n_bands):
            if b in undefined:
                continue
            normalized[:, b] = raw_mean[:, b] / band_means[b]
            cells[:, :, b] = self.raw[:, :, b] / band_means[b]
        self.normalized = normalized
        self.cell_normalized = cells

    @property
    def n_constants(self) -> int:
        return self.raw.shape[1]

    def raw_mean(self) -> np.ndarray:
        return self.raw.mean(axis=1)

    def histogram_values(self, band: int) -> np.ndarray:
        """Per-(target, constant) normalized values for one band, flattened —
        the population a per-band histogram is drawn from."""
        if band in self.undefined_bands:
            raise SpectralError(f"band {band} is undefined for this cohort")
        return self.cell_normalized[:, :, band].ravel()

    def to_json_obj(self) -> dict:
        return {
            "target_labels": self.target_labels,
            "band_edges": [list(e) for e in self.bands.edges],
            "raw": self.raw.tolist(),
            "normalized": np.where(np.isfinite(self.normalized), self.normalized, None).tolist(),
            "undefined_bands": self.undefined_bands,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj: dict) -> "VbsReport":
        report = cls(
            target_labels=list(obj["target_labels"]),
            bands=BandSpec(tuple(tuple(e) for e in obj["band_edges"])),
            raw=np.asarray(obj["raw"], dtype=np.float64),
            n_samples=int(obj["n_samples"]),
            seed=int(obj["seed"]),
        )
        return report

    @classmethod
    def from_json(cls, text: str) -> "VbsReport":
        return cls.from_json_obj(json.loads(text))

    def to_csv(self) -> str:
        """Normalized values, one row per target, one column per band."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["target"] + self.bands.labels())
        for t, label in enumerate(self.target_labels):
            row = [label]
            for b in range(self.bands.n_bands):
                v = self.normalized[t, b]
                row.append("" if not np.isfinite(v) else f"{v:.6g}")
            writer.writerow(row)
        return buf.getvalue()


def vbs_report(
    generate: GenerateFn,
    subvector_dims: Sequence[int],
    targets: Sequence[VbsTarget],
    bands: BandSpec = BandSpec(),
    n_constants: int = 4,
    n_samples: int = 64,
    seed: int = 0,
) -> VbsReport:
    """Full variance-by-scale sweep over targets x constant contexts x bands.

    Constant contexts are drawn uniformly from [-1, 1]^D once and shared by
    every target, so normalized values are comparable across the cohort.
    """
    if len(targets) == 0:
        raise SpectralError("need at least one target")
    if n_constants < 1:
        raise SpectralError("need at least one constant context")
    total = sum(subvector_dims)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    constants = rng.uniform(-1.0, 1.0, size=(n_constants, total)).astype(np.float32)
    raw = np.empty((len(targets), n_constants, bands.n_bands), dtype=np.float64)
    for ti, target in enumerate(targets):
        for ci in range(n_constants):
            sample_seed = int(
                np.random.SeedSequence([seed, 1, ti, ci]).generate_state(1)[0]
            )
            images = _vbs_sample_images(
                generate, subvector_dims, target, constants[ci], n_samples, sample_seed
            )
            raw[ti, ci] = _band_stack_stds(images, bands)
    return VbsReport(
        target_labels=[t.label() for t in targets],
        bands=bands,
        raw=raw,
        n_samples=n_samples,
        seed=seed,
    )


def dominant_scale(report: VbsReport, target_label: str) -> int:
    """Band index where the target's normalized value peaks; ties resolve to
    the lower (coarser) band."""
    try:
        t = report.target_labels.index(target_label)
    except ValueError:
        raise SpectralError(f"unknown target {target_label!r}") from None
    if report.undefined_bands:
        raise SpectralError(
            f"cohort has undefined bands {report.undefined_bands}; dominant scale is ambiguous"
        )
    row = report.normalized[t]
    return int(np.argmax(row))  # argmax returns the first (lowest) maximizer


# --------------------------------------------------------------------------
# Variance images


@dataclass(frozen=True)
class VarianceImage:
    """Per-pixel variance across a sample set, channel-averaged."""

    values: np.ndarray  # (H, W) float64
    total: float

    def display(self) -> np.ndarray:
        """uint8 rendering, max-normalized (all-zero maps stay black)."""
        peak = float(self.values.max())
        if peak <= 0:
            return np.zeros(self.values.shape, dtype=np.uint8)
        scaled = np.clip(self.values / peak, 0.0, 1.0)
        return np.round(scaled * 255.0).astype(np.uint8)


def variance_image(images: np.ndarray) -> VarianceImage:
    """Pixel-wise population variance over a stack of (n, H, W, C) images."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4:
        raise SpectralError(f"expected (n, H, W, C) stack, got shape {images.shape}")
    if images.shape[0] < 2:
        raise SpectralError("variance image needs at least 2 samples")
    if not np.all(np.isfinite(images)):
        raise SpectralError("image stack contains non-finite values")
    per_channel = np.var(images, axis=0)
    values = per_channel.mean(axis=-1)
    return VarianceImage(values=values, total=float(values.sum()))
