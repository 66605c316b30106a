"""Differentiable histogram-of-oriented-gradients descriptor.

Orientation binning uses a smooth angular window instead of hard or
piecewise-linear assignment: each unsigned bin direction u_b receives

    w_b = (g . u_b)^k / (|g| + eps)^(k-1),   k even,

which is infinitely differentiable in the image, magnitude-weighted
(sum_b w_b is proportional to |g|), and concentrates around the bin
direction as k grows.  Cells sum these maps, blocks of cells are
L2-normalized with an epsilon, and the result is flattened.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
import torch
import torch.nn.functional as F


class HogError(ValueError):
    """Raised for images too small for the cell grid or bad parameters."""


@dataclass(frozen=True)
class HogSpec:
    cell_size: int = 8
    n_bins: int = 9
    block_size: int = 2
    block_epsilon: float = 1e-3
    magnitude_epsilon: float = 1e-6
    angular_power: int = 8

    def __post_init__(self):
        if self.cell_size < 2:
            raise HogError("cell_size must be >= 2")
        if self.n_bins < 2:
            raise HogError("n_bins must be >= 2")
        if self.block_size < 1:
            raise HogError("block_size must be >= 1")
        if self.block_epsilon <= 0 or self.magnitude_epsilon <= 0:
            raise HogError("epsilons must be positive")
        if self.angular_power < 2 or self.angular_power % 2 != 0:
            raise HogError("angular_power must be an even integer >= 2")

    def descriptor_length(self, shape: tuple[int, int]) -> int:
        ch, cw = shape[0] // self.cell_size, shape[1] // self.cell_size
        bh, bw = ch - self.block_size + 1, cw - self.block_size + 1
        if bh < 1 or bw < 1:
            raise HogError(
                f"image {shape} too small for {self.block_size}x{self.block_size} "
                f"blocks of {self.cell_size}px cells"
            )
        return bh * bw * self.block_size * self.block_size * self.n_bins


def hog(image: torch.Tensor, spec: HogSpec = HogSpec()) -> torch.Tensor:
    """Descriptor of a single-channel image tensor [H, W]; differentiable.

    Multi-channel input is averaged to one channel first.  Gradients are
    centered differences with replicated borders, so a constant image has an
    identically zero descriptor.
    """
    if image.ndim == 3:
        image = image.mean(dim=-1) if image.shape[-1] <= 4 else image.mean(dim=0)
    if image.ndim != 2:
        raise HogError(f"expected a 2-D image, got shape {tuple(image.shape)}")
    h, w = image.shape
    spec.descriptor_length((h, w))  # validates size

    padded = F.pad(image[None, None], (1, 1, 1, 1), mode="replicate")[0, 0]
    gx = 0.5 * (padded[1:-1, 2:] - padded[1:-1, :-2])
    gy = 0.5 * (padded[2:, 1:-1] - padded[:-2, 1:-1])

    k = spec.angular_power
    mag = torch.sqrt(gx * gx + gy * gy + spec.magnitude_epsilon**2)
    angles = torch.arange(spec.n_bins, dtype=image.dtype) * (math.pi / spec.n_bins)
    cos_b = torch.cos(angles)[:, None, None]
    sin_b = torch.sin(angles)[:, None, None]
    # (g . u_b)^k / |g|^(k-1): smooth, magnitude-weighted orientation window.
    proj = gx[None] * cos_b + gy[None] * sin_b
    weights = proj**k / mag[None] ** (k - 1)

    c = spec.cell_size
    cells = F.avg_pool2d(weights[None], c, stride=c)[0] * (c * c)  # sum pool
    # cells: (n_bins, ch, cw) -> overlapping block windows of block_size^2 cells
    b = spec.block_size
    blocks = cells.unfold(1, b, 1).unfold(2, b, 1)  # (bins, bh, bw, b, b)
    # layout: block row, block col, cell row, cell col, bin (bin fastest)
    blocks = blocks.permute(1, 2, 3, 4, 0).reshape(blocks.shape[1], blocks.shape[2], -1)
    norm = torch.sqrt((blocks * blocks).sum(dim=-1, keepdim=True) + spec.block_epsilon**2)
    return (blocks / norm).reshape(-1)


def hog_descriptor(image: np.ndarray, spec: HogSpec = HogSpec()) -> np.ndarray:
    """numpy convenience wrapper (computed in float64)."""
    tensor = torch.from_numpy(np.asarray(image, dtype=np.float64))
    return hog(tensor, spec).numpy()


def dominant_bin(descriptor: np.ndarray, spec: HogSpec = HogSpec()) -> int:
    """Orientation bin with the largest total mass in a descriptor."""
    per_bin = np.asarray(descriptor).reshape(-1, spec.n_bins).sum(axis=0)
    return int(np.argmax(per_bin))
