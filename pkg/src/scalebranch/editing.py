"""Constraint-driven latent-space editing.

An edit searches the latent box for a code whose rendering matches user
constraints: a color map active under a binary mask (per-pixel absolute
difference, channel-averaged, normalized by the count of masked-on pixels)
plus an optional edge map matched through the differentiable
histogram-of-oriented-gradients descriptor, weighted by ``edge_weight``.
Optimization is Adam on the latent with box clipping, multiple restarts,
and best-iterate tracking, so the final loss never exceeds the loss of the
starting point.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from PIL import Image

from .config import NetConfig
from .hog import HogSpec, hog
from .latent import BranchedLatent, LatentError, sample_latent_batch, SamplePolicy
from .networks import Encoder, Generator, encode


class EditError(ValueError):
    """Raised for invalid constraint sets or optimizer settings."""


@dataclass(frozen=True)
class EditConstraints:
    """What the edited image should look like.

    color: (H, W, 3) map in [0, 1], compared only where ``mask`` is 1.
    mask: (H, W) binary; defaults to all-ones when a color map is given.
    edge: (H, W) map whose gradient-orientation statistics the output
    should match; optional.
    """

    color: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    edge: Optional[np.ndarray] = None

    def __post_init__(self):
        color, mask, edge = self.color, self.mask, self.edge
        if color is not None:
            color = np.asarray(color, dtype=np.float32)
            if color.ndim != 3 or color.shape[2] != 3:
                raise EditError(f"color map must be (H, W, 3), got {color.shape}")
            if not np.all(np.isfinite(color)) or color.min() < 0 or color.max() > 1:
                raise EditError("color map must be finite and inside [0, 1]")
            if mask is None:
                mask = np.ones(color.shape[:2], dtype=np.float32)
        if mask is not None:
            if color is None:
                raise EditError("a mask without a color map constrains nothing")
            mask = np.asarray(mask, dtype=np.float32)
            if mask.shape != color.shape[:2]:
                raise EditError(f"mask shape {mask.shape} does not match color map")
            if not np.all((mask == 0.0) | (mask == 1.0)):
                raise EditError("mask must be binary")
        if edge is not None:
            edge = np.asarray(edge, dtype=np.float32)
            if edge.ndim != 2:
                raise EditError(f"edge map must be 2-D, got shape {edge.shape}")
            if not np.all(np.isfinite(edge)):
                raise EditError("edge map contains non-finite values")
        object.__setattr__(self, "color", color)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "edge", edge)
        if not self.has_color_term and edge is None:
            raise EditError(
                "constraints are empty: need a color map with a nonempty mask "
                "or an edge map"
            )

    @property
    def has_color_term(self) -> bool:
        return self.color is not None and self.mask is not None and float(self.mask.sum()) > 0

    def resolution(self) -> tuple[int, int]:
        if self.color is not None:
            return self.color.shape[:2]
        return self.edge.shape


@dataclass(frozen=True)
class EditConfig:
    edge_weight: float = 10.0
    steps: int = 200
    step_size: float = 0.05
    restarts: int = 3
    init: str = "encoder"  # "encoder" | "latent" | "random"
    hog_spec: HogSpec = field(default_factory=HogSpec)

    def __post_init__(self):
        if self.steps < 1:
            raise EditError("steps must be >= 1")
        if self.step_size <= 0:
            raise EditError("step_size must be positive")
        if self.restarts < 1:
            raise EditError("restarts must be >= 1")
        if self.init not in ("encoder", "latent", "random"):
            raise EditError(f"unknown init mode {self.init!r}")
        if self.edge_weight < 0:
            raise EditError("edge_weight must be >= 0")


class _LossTerms:
    """Constraint tensors pre-staged for repeated loss evaluation."""

    def __init__(self, constraints: EditConstraints, config: EditConfig):
        self.config = config
        self.color = self.mask = self.mask_count = self.edge_hog = None
        if constraints.has_color_term:
            self.color = torch.from_numpy(constraints.color.transpose(2, 0, 1).copy())
            self.mask = torch.from_numpy(constraints.mask.copy())
            self.mask_count = float(constraints.mask.sum())
        if constraints.edge is not None and config.edge_weight > 0:
            edge_t = torch.from_numpy(np.asarray(constraints.edge, dtype=np.float32))
            self.edge_hog = hog(edge_t, config.hog_spec).detach()

    def loss(self, image: torch.Tensor) -> torch.Tensor:
        """image: (3, H, W) in [0, 1]."""
        total = image.new_zeros(())
        if self.color is not None:
            diff = (image - self.color).abs().mean(dim=0)
            total = total + (diff * self.mask).sum() / self.mask_count
        if self.edge_hog is not None:
            gray = image.mean(dim=0)
            descriptor = hog(gray, self.config.hog_spec)
            total = total + self.config.edge_weight * (descriptor - self.edge_hog).abs().mean()
        return total


def edit_loss(
    g: Generator,
    latent: BranchedLatent,
    constraints: EditConstraints,
    config: EditConfig = EditConfig(),
) -> float:
    """The objective value at a specific latent (no optimization)."""
    terms = _prepare(g, constraints, config)
    z = torch.from_numpy(latent.flat())
    with torch.no_grad():
        image = g(z[None])[0]
        return float(terms.loss(image))


def _prepare(g: Generator, constraints: EditConstraints, config: EditConfig) -> _LossTerms:
    expected = g.resolution
    got = constraints.resolution()
    if tuple(got) != tuple(expected):
        raise EditError(f"constraints are {got}, generator renders {expected}")
    return _LossTerms(constraints, config)


@dataclass
class EditResult:
    latent: BranchedLatent
    image: np.ndarray  # (H, W, 3) float32
    loss: float
    trace: list[float]  # best restart: loss at init then after each step
    restart: int
    init_kind: str


def optimize_edit(
    g: Generator,
    constraints: EditConstraints,
    config: EditConfig = EditConfig(),
    encoder: Optional[Encoder] = None,
    init_latent: Optional[BranchedLatent] = None,
    seed: int = 0,
) -> EditResult:
    """Minimize the edit objective over the latent box.

    The first restart starts from the configured init (encoder inversion of
    the color map, a provided latent, or a random draw); remaining restarts
    start from fresh random draws.  Every iterate is clipped to the box and
    the best iterate across all restarts is returned.
    """
    terms = _prepare(g, constraints, config)
    net_config = g.config

    inits: list[tuple[str, np.ndarray]] = []
    if config.init == "encoder":
        if encoder is None:
            raise EditError("encoder init requires an encoder")
        if constraints.color is None:
            raise EditError("encoder init requires a color map to invert")
        inits.append(("encoder", encode(encoder, constraints.color).flat()))
    elif config.init == "latent":
        if init_latent is None:
            raise EditError("latent init requires init_latent")
        if init_latent.dims != net_config.subvector_dims:
            raise LatentError(
                f"init latent dims {init_latent.dims} do not match model "
                f"{net_config.subvector_dims}"
            )
        inits.append(("latent", init_latent.flat()))
    random_needed = config.restarts - len(inits)
    random_draws = sample_latent_batch(
        net_config,
        SamplePolicy.all_uniform(net_config.branches),
        np.random.SeedSequence([seed, 0xED17]).generate_state(1)[0],
        max(random_needed, 1),
    )
    for r in range(random_needed):
        inits.append(("random", random_draws[r]))

    best: Optional[tuple[float, np.ndarray, list[float], int, str]] = None
    for restart, (kind, z0) in enumerate(inits):
        z = torch.from_numpy(np.asarray(z0, dtype=np.float32).copy())
        z.clamp_(-1.0, 1.0)
        z.requires_grad_(True)
        opt = torch.optim.Adam([z], lr=config.step_size)
        with torch.no_grad():
            current = float(terms.loss(g(z[None])[0]))
        trace = [current]
        best_local = (current, z.detach().clone().numpy())
        for _ in range(config.steps):
            opt.zero_grad(set_to_none=True)
            loss = terms.loss(g(z[None])[0])
            loss.backward()
            opt.step()
            with torch.no_grad():
                z.clamp_(-1.0, 1.0)
                current = float(terms.loss(g(z[None])[0]))
            trace.append(current)
            if current < best_local[0]:
                best_local = (current, z.detach().clone().numpy())
        if best is None or best_local[0] < best[0]:
            best = (best_local[0], best_local[1], trace, restart, kind)

    loss_val, z_best, trace, restart, kind = best
    latent = BranchedLatent.from_flat(np.clip(z_best, -1.0, 1.0), net_config.subvector_dims)
    with torch.no_grad():
        image = g(torch.from_numpy(latent.flat())[None])[0]
    return EditResult(
        latent=latent,
        image=image.permute(1, 2, 0).numpy().copy(),
        loss=loss_val,
        trace=trace,
        restart=restart,
        init_kind=kind,
    )


# --------------------------------------------------------------------------
# Benchmark cases


@dataclass(frozen=True)
class EditCase:
    """One benchmark edit: constraints plus (optionally) the latent that
    produced the target, for self-recovery checks."""

    constraints: EditConstraints
    source_latent: Optional[BranchedLatent] = None


def make_benchmark_cases(
    g: Generator, n_cases: int, seed: int = 0, mask: Optional[np.ndarray] = None
) -> list[EditCase]:
    """Self-recovery cases: render random latents and use the renders as
    color targets (full-image mask by default)."""
    flats = sample_latent_batch(
        g.config,
        SamplePolicy.all_uniform(g.config.branches),
        np.random.SeedSequence([seed, 0xCA5E]).generate_state(1)[0],
        n_cases,
    )
    cases = []
    for i in range(n_cases):
        latent = BranchedLatent.from_flat(flats[i], g.config.subvector_dims)
        with torch.no_grad():
            image = g(torch.from_numpy(latent.flat())[None])[0].permute(1, 2, 0).numpy().copy()
        cases.append(
            EditCase(
                constraints=EditConstraints(color=image, mask=mask),
                source_latent=latent,
            )
        )
    return cases


@dataclass
class BenchmarkResult:
    per_model: dict[str, list[float]]

    def mean(self, name: str) -> float:
        return float(np.mean(self.per_model[name]))

    def to_json_obj(self) -> dict:
        return {
            "per_model": self.per_model,
            "means": {name: self.mean(name) for name in self.per_model},
        }


def benchmark_manifold(
    generators: dict[str, Generator],
    cases: Sequence[EditCase],
    config: EditConfig = EditConfig(),
    encoders: Optional[dict[str, Encoder]] = None,
    seed: int = 0,
) -> BenchmarkResult:
    """Optimize every case against every model with identical budgets; the
    mean final loss measures how well each model's manifold reaches the
    targets."""
    encoders = encoders or {}
    per_model: dict[str, list[float]] = {}
    for name, g in generators.items():
        losses = []
        for i, case in enumerate(cases):
            result = optimize_edit(
                g,
                case.constraints,
                config,
                encoder=encoders.get(name),
                seed=int(np.random.SeedSequence([seed, zlib.crc32(name.encode()), i]).generate_state(1)[0]),
            )
            losses.append(result.loss)
        per_model[name] = losses
    return BenchmarkResult(per_model=per_model)


# --------------------------------------------------------------------------
# Case directories


def save_cases(cases: Sequence[EditCase], directory: str) -> None:
    """One sub-directory per case: color.png, mask.png, edge.png (as
    present) plus meta.json with the source latent."""
    os.makedirs(directory, exist_ok=True)
    for i, case in enumerate(cases):
        case_dir = Path(directory) / f"case_{i:03d}"
        case_dir.mkdir(exist_ok=True)
        c = case.constraints
        if c.color is not None:
            arr = np.clip(c.color * 255.0, 0, 255).round().astype(np.uint8)
            Image.fromarray(arr).save(case_dir / "color.png")
        if c.mask is not None:
            Image.fromarray((c.mask * 255).astype(np.uint8)).save(case_dir / "mask.png")
        if c.edge is not None:
            arr = np.clip(c.edge * 255.0, 0, 255).round().astype(np.uint8)
            Image.fromarray(arr).save(case_dir / "edge.png")
        meta = {}
        if case.source_latent is not None:
            meta["source_latent"] = case.source_latent.to_json_obj()
        (case_dir / "meta.json").write_text(json.dumps(meta))


def load_cases(directory: str) -> list[EditCase]:
    root = Path(directory)
    if not root.is_dir():
        raise EditError(f"case directory {directory!r} does not exist")
    cases = []
    for case_dir in sorted(root.glob("case_*")):
        color = mask = edge = None
        if (case_dir / "color.png").exists():
            with Image.open(case_dir / "color.png") as im:
                color = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        if (case_dir / "mask.png").exists():
            with Image.open(case_dir / "mask.png") as im:
                mask = (np.asarray(im.convert("L"), dtype=np.float32) > 127).astype(np.float32)
        if (case_dir / "edge.png").exists():
            with Image.open(case_dir / "edge.png") as im:
                edge = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
        latent = None
        meta_path = case_dir / "meta.json"
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            if "source_latent" in meta:
                latent = BranchedLatent.from_json_obj(meta["source_latent"])
        cases.append(
            EditCase(
                constraints=EditConstraints(color=color, mask=mask, edge=edge),
                source_latent=latent,
            )
        )
    if not cases:
        raise EditError(f"no case_* sub-directories in {directory!r}")
    return cases
