"""Adversarial training: masked Adam, the GAN step, progressive growth over
depth and latent width, joint-baseline training, encoder fitting, and the
branch-suppression experiment.

Freezing a sub-vector means feeding it zeros: the gradient of the first
linear layer's weight with respect to a column whose input is always zero
vanishes identically, so frozen branches stay bit-identical without any
masking of that layer.  Masks exist for the structural phase of a stage
(only the newly added block and head train) and are enforced by the
optimizer skipping non-active parameters entirely, moments included.
"""

from __future__ import annotations

import csv
import json
import math
import os
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, NetConfig, OptimSpec
from .data import Pyramid, epoch_order
from .latent import LatentSource, SamplePolicy, sample_latent_batch
from .networks import (
    Discriminator,
    Encoder,
    Generator,
    _to_torch_images,
    generate_batch,
    load_state_numpy,
    state_numpy,
)
from .spectral import VarianceImage, variance_image


class TrainingDiverged(RuntimeError):
    """Raised when a loss turns non-finite; carries the offending step."""


class FrozenLeakError(RuntimeError):
    """Raised when a zero-fed sub-vector receives a nonzero gradient."""


class TrainingError(RuntimeError):
    """Raised for invalid schedules or resume mismatches."""


def derive_seed(*parts) -> int:
    """Stable child seed from mixed int/str parts."""
    ints = [p if isinstance(p, (int, np.integer)) else zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence([int(i) for i in ints]).generate_state(1)[0])


# --------------------------------------------------------------------------
# Masked Adam


class MaskedAdam:
    """Adam that updates only an explicitly active subset of parameters.

    Parameters outside the active set are not read, not decayed, and keep
    their moments and step counts — bit-identical to never having been seen.
    Moments survive mask changes, so a parameter re-entering the active set
    continues from its own history.
    """

    def __init__(self, module: torch.nn.Module, spec: OptimSpec, eps: float = 1e-8):
        self.spec = spec
        self.eps = eps
        self._params: dict[str, torch.nn.Parameter] = {}
        self.m: dict[str, torch.Tensor] = {}
        self.v: dict[str, torch.Tensor] = {}
        self.t: dict[str, int] = {}
        self.register_module(module)

    def register_module(self, module: torch.nn.Module) -> None:
        """Track any parameters not yet known (idempotent; used after grow)."""
        for name, p in module.named_parameters():
            if name not in self._params:
                self._params[name] = p
                self.m[name] = torch.zeros_like(p)
                self.v[name] = torch.zeros_like(p)
                self.t[name] = 0

    @property
    def param_names(self) -> list[str]:
        return list(self._params)

    def step(self, active: Optional[set[str]] = None) -> None:
        """Apply one Adam update to every active parameter with a gradient.

        ``active=None`` means all tracked parameters.
        """
        lr, b1, b2 = self.spec.learning_rate, self.spec.beta1, self.spec.beta2
        with torch.no_grad():
            for name, p in self._params.items():
                if active is not None and name not in active:
                    continue
                g = p.grad
                if g is None:
                    continue
                t = self.t[name] + 1
                self.t[name] = t
                m, v = self.m[name], self.v[name]
                m.mul_(b1).add_(g, alpha=1.0 - b1)
                v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
                m_hat = m / (1.0 - b1**t)
                denom = (v / (1.0 - b2**t)).sqrt_().add_(self.eps)
                p.addcdiv_(m_hat, denom, value=-lr)

    def state_tensors(self, prefix: str) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name in self._params:
            out[f"{prefix}.m.{name}"] = self.m[name].numpy().copy()
            out[f"{prefix}.v.{name}"] = self.v[name].numpy().copy()
            out[f"{prefix}.t.{name}"] = np.array(self.t[name], dtype=np.int64)
        return out

    def load_state_tensors(self, prefix: str, tensors: dict[str, np.ndarray]) -> None:
        for name in self._params:
            try:
                m = tensors[f"{prefix}.m.{name}"]
                v = tensors[f"{prefix}.v.{name}"]
                t = tensors[f"{prefix}.t.{name}"]
            except KeyError as exc:
                raise CheckpointError(f"optimizer state missing for {name!r}") from exc
            self.m[name] = torch.from_numpy(np.ascontiguousarray(m))
            self.v[name] = torch.from_numpy(np.ascontiguousarray(v))
            self.t[name] = int(t)


# --------------------------------------------------------------------------
# One adversarial step


@dataclass(frozen=True)
class StepResult:
    d_loss: float
    g_loss: float
    frozen_grad_max: Optional[float] = None


def _check_frozen_columns(g: Generator, frozen: Sequence[int]) -> float:
    """Max |grad| over the first-linear columns of frozen sub-vectors; must
    be exactly zero."""
    grad = g.latent_in.weight.grad
    if grad is None or not frozen:
        return 0.0
    worst = 0.0
    for t in frozen:
        cols = g.config.subvector_slice(t)
        peak = float(grad[:, cols].abs().max())
        worst = max(worst, peak)
    if worst != 0.0:
        raise FrozenLeakError(
            f"zero-fed sub-vectors {list(frozen)} received gradient magnitude {worst!r}"
        )
    return worst


def gan_step(
    g: Generator,
    d: Discriminator,
    g_opt: MaskedAdam,
    d_opt: MaskedAdam,
    real: np.ndarray,
    z: np.ndarray,
    g_active: Optional[set[str]] = None,
    d_active: Optional[set[str]] = None,
    frozen_subvectors: Sequence[int] = (),
    check_frozen: bool = False,
    step_tag: str = "",
) -> StepResult:
    """One discriminator update followed by one generator update, both on
    the same latent batch (non-saturating logistic loss)."""
    real_t = _to_torch_images(real)
    z_t = torch.from_numpy(np.ascontiguousarray(z, dtype=np.float32))

    fake = g(z_t)

    # Discriminator: real -> 1, fake -> 0.
    d.zero_grad(set_to_none=True)
    d_real = d(real_t)
    d_fake = d(fake.detach())
    d_loss = F.binary_cross_entropy_with_logits(
        d_real, torch.ones_like(d_real)
    ) + F.binary_cross_entropy_with_logits(d_fake, torch.zeros_like(d_fake))
    if not torch.isfinite(d_loss):
        raise TrainingDiverged(f"discriminator loss is non-finite at {step_tag or 'step'}")
    d_loss.backward()
    d_opt.step(d_active)

    # Generator: drive the updated discriminator's fake logits toward 1.
    g.zero_grad(set_to_none=True)
    d.zero_grad(set_to_none=True)
    g_out = d(fake)
    g_loss = F.binary_cross_entropy_with_logits(g_out, torch.ones_like(g_out))
    if not torch.isfinite(g_loss):
        raise TrainingDiverged(f"generator loss is non-finite at {step_tag or 'step'}")
    g_loss.backward()
    frozen_max = _check_frozen_columns(g, frozen_subvectors) if check_frozen else None
    g_opt.step(g_active)

    return StepResult(float(d_loss.detach()), float(g_loss.detach()), frozen_max)


# --------------------------------------------------------------------------
# Schedules


@dataclass(frozen=True)
class ScheduleStage:
    """One progressive stage: its 1-based index, total optimizer steps, the
    fraction spent training only the new block/head, and the ramp shape for
    the new sub-vector's half-width."""

    index: int
    steps: int
    stage1_fraction: float = 0.25
    alpha_shape: str = "linear"

    def __post_init__(self):
        if self.index < 1:
            raise TrainingError("stage index must be >= 1")
        if self.steps < 1:
            raise TrainingError("a stage needs at least one step")
        if not 0.0 <= self.stage1_fraction < 1.0:
            raise TrainingError("stage1_fraction must be in [0, 1)")
        if self.alpha_shape not in ("linear", "cosine"):
            raise TrainingError(f"unknown alpha shape {self.alpha_shape!r}")

    @property
    def intro_steps(self) -> int:
        """Steps spent with the new sub-vector zero-fed and only the new
        modules training.  The first stage has no structural phase."""
        if self.index == 1:
            return 0
        return int(round(self.steps * self.stage1_fraction))

    def phase(self, k: int) -> tuple[str, float]:
        """(phase name, ramp half-width) at step ``k`` of this stage."""
        if not 0 <= k < self.steps:
            raise TrainingError(f"step {k} outside stage of {self.steps} steps")
        if self.index == 1:
            return "main", 1.0
        n_intro = self.intro_steps
        if k < n_intro:
            return "intro", 0.0
        n_ramp = self.steps - n_intro
        i = k - n_intro
        x = 1.0 if n_ramp <= 1 else i / (n_ramp - 1)
        if self.alpha_shape == "cosine":
            return "ramp", 0.5 * (1.0 - math.cos(math.pi * x))
        return "ramp", x

    def to_json_obj(self) -> dict:
        return {
            "index": self.index,
            "steps": self.steps,
            "stage1_fraction": self.stage1_fraction,
            "alpha_shape": self.alpha_shape,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ScheduleStage":
        return cls(
            index=int(obj["index"]),
            steps=int(obj["steps"]),
            stage1_fraction=float(obj.get("stage1_fraction", 0.25)),
            alpha_shape=obj.get("alpha_shape", "linear"),
        )


def build_schedule(
    config: NetConfig,
    n_images: int,
    optim: OptimSpec,
    epochs_per_stage: int,
    stage1_fraction: float = 0.25,
    alpha_shape: str = "linear",
) -> tuple[ScheduleStage, ...]:
    """Equal-epoch schedule over every stage of the architecture."""
    steps = epochs_per_stage * max(1, n_images // optim.batch_size)
    return tuple(
        ScheduleStage(index=s, steps=steps, stage1_fraction=stage1_fraction, alpha_shape=alpha_shape)
        for s in range(1, config.stages + 1)
    )


def _stage_policy(config: NetConfig, stage: ScheduleStage, k: int) -> tuple[SamplePolicy, str, float]:
    phase, alpha = stage.phase(k)
    if phase == "intro":
        policy = SamplePolicy.active_prefix(config.branches, max(1, stage.index - 1))
    else:
        policy = SamplePolicy.active_prefix(config.branches, stage.index, last_alpha=alpha)
    return policy, phase, alpha


def _new_module_names(g: Generator, stage_index: int) -> set[str]:
    prefixes = (f"blocks.{stage_index - 2}.", f"heads.{stage_index - 1}.")
    return {name for name, _ in g.named_parameters() if name.startswith(prefixes)}


def _frozen_set(config: NetConfig, policy: SamplePolicy) -> list[int]:
    return [t for t, src in enumerate(policy.sources) if src.kind == "frozen"]


# --------------------------------------------------------------------------
# Progressive run


@dataclass
class TrainState:
    stage_pos: int = 0
    step_in_stage: int = 0
    global_step: int = 0

    def to_json_obj(self) -> dict:
        return {
            "stage_pos": self.stage_pos,
            "step_in_stage": self.step_in_stage,
            "global_step": self.global_step,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TrainState":
        return cls(
            stage_pos=int(obj["stage_pos"]),
            step_in_stage=int(obj["step_in_stage"]),
            global_step=int(obj["global_step"]),
        )


@dataclass
class StepRecord:
    global_step: int
    stage: int
    phase: str
    alpha: float
    d_loss: float
    g_loss: float


@dataclass
class RunResult:
    generator: Generator
    discriminator: Discriminator
    g_opt: MaskedAdam
    d_opt: MaskedAdam
    state: TrainState
    records: list[StepRecord]
    final_checkpoint: Optional[str] = None


def make_checkpoint(
    config: NetConfig,
    g: Generator,
    d: Discriminator,
    g_opt: MaskedAdam,
    d_opt: MaskedAdam,
    state: TrainState,
    seed: int,
    schedule: Sequence[ScheduleStage],
    encoder: Optional[Encoder] = None,
    metadata: Optional[dict] = None,
) -> Checkpoint:
    tensors: dict[str, np.ndarray] = {}
    for prefix, module in (("generator", g), ("discriminator", d)):
        for name, arr in state_numpy(module).items():
            tensors[f"{prefix}.{name}"] = arr
    if encoder is not None:
        for name, arr in state_numpy(encoder).items():
            tensors[f"encoder.{name}"] = arr
    tensors.update(g_opt.state_tensors("optim_g"))
    tensors.update(d_opt.state_tensors("optim_d"))
    meta = dict(metadata or {})
    meta["schedule"] = [s.to_json_obj() for s in schedule]
    meta["seed"] = seed
    train_state = state.to_json_obj()
    return Checkpoint(
        config=config,
        stage=g.stage,
        tensors=tensors,
        train_state=train_state,
        metadata=meta,
    )


def nets_from_checkpoint(
    ckpt: Checkpoint, with_encoder: bool = False
) -> tuple[Generator, Discriminator, Optional[Encoder]]:
    g = Generator(ckpt.config, stage=ckpt.stage)
    load_state_numpy(g, ckpt.group("generator"))
    d = Discriminator(ckpt.config, stage=ckpt.stage)
    load_state_numpy(d, ckpt.group("discriminator"))
    e = None
    enc_state = ckpt.group("encoder")
    if with_encoder and enc_state:
        e = Encoder(ckpt.config, stage=ckpt.stage)
        load_state_numpy(e, enc_state)
    return g, d, e


def generator_from_checkpoint(path: str) -> Generator:
    g, _, _ = nets_from_checkpoint(load_checkpoint(path))
    return g


class _RunLog:
    """Loss CSV + event JSONL streams under an output directory."""

    def __init__(self, out_dir: Optional[str]):
        self.out_dir = out_dir
        if out_dir is None:
            return
        os.makedirs(out_dir, exist_ok=True)
        self.loss_path = os.path.join(out_dir, "losses.csv")
        self.event_path = os.path.join(out_dir, "events.jsonl")
        if not os.path.exists(self.loss_path):
            with open(self.loss_path, "w", newline="") as fh:
                csv.writer(fh).writerow(
                    ["global_step", "stage", "phase", "alpha", "d_loss", "g_loss"]
                )

    def record(self, rec: StepRecord) -> None:
        if self.out_dir is None:
            return
        with open(self.loss_path, "a", newline="") as fh:
            csv.writer(fh).writerow(
                [rec.global_step, rec.stage, rec.phase, f"{rec.alpha:.8f}",
                 f"{rec.d_loss:.8f}", f"{rec.g_loss:.8f}"]
            )

    def event(self, kind: str, **payload) -> None:
        if self.out_dir is None:
            return
        with open(self.event_path, "a") as fh:
            fh.write(json.dumps({"event": kind, **payload}) + "\n")


def run_progressive(
    config: NetConfig,
    schedule: Sequence[ScheduleStage],
    pyramid: Pyramid,
    optim: OptimSpec,
    seed: int = 0,
    out_dir: Optional[str] = None,
    resume_from: Optional[str] = None,
    checkpoint_every: Optional[int] = None,
    check_frozen: bool = False,
    keep_records: bool = True,
    progress: Optional[Callable[[StepRecord], None]] = None,
) -> RunResult:
    """Train through the progressive schedule, growing depth and latent
    width together; optionally resume bit-exactly from a checkpoint."""
    schedule = tuple(schedule)
    for pos, spec in enumerate(schedule):
        if spec.index != pos + 1:
            raise TrainingError(f"schedule stages must be 1..{len(schedule)} in order")
        if spec.index > config.stages:
            raise TrainingError(f"stage {spec.index} exceeds architecture stages {config.stages}")

    log = _RunLog(out_dir)
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if ckpt.config != config:
            raise TrainingError("resume checkpoint was produced by a different architecture")
        saved = ckpt.metadata.get("schedule")
        if saved is not None and saved != [s.to_json_obj() for s in schedule]:
            raise TrainingError("resume checkpoint was produced by a different schedule")
        if ckpt.metadata.get("seed") != seed:
            raise TrainingError("resume checkpoint was produced with a different seed")
        g, d, _ = nets_from_checkpoint(ckpt)
        g_opt = MaskedAdam(g, optim)
        d_opt = MaskedAdam(d, optim)
        g_opt.load_state_tensors("optim_g", ckpt.tensors)
        d_opt.load_state_tensors("optim_d", ckpt.tensors)
        state = TrainState.from_json_obj(ckpt.train_state)
        log.event("resume", path=resume_from, **state.to_json_obj())
    else:
        g = Generator(config, stage=1, seed=derive_seed(seed, "init-g", 1))
        d = Discriminator(config, stage=1, seed=derive_seed(seed, "init-d", 1))
        g_opt = MaskedAdam(g, optim)
        d_opt = MaskedAdam(d, optim)
        state = TrainState()
        log.event("start", seed=seed, stages=len(schedule))

    records: list[StepRecord] = []

    def _save(tag: str) -> str:
        path = os.path.join(out_dir, f"{tag}.ckpt")
        save_checkpoint(
            path,
            make_checkpoint(config, g, d, g_opt, d_opt, state, seed, schedule),
        )
        log.event("checkpoint", path=path, global_step=state.global_step)
        return path

    final_path = None
    while state.stage_pos < len(schedule):
        spec = schedule[state.stage_pos]
        if g.stage < spec.index:
            g.grow(seed=derive_seed(seed, "init-g", spec.index))
            d.grow(seed=derive_seed(seed, "init-d", spec.index))
            g_opt.register_module(g)
            d_opt.register_module(d)
            log.event("grow", stage=spec.index)
        if g.stage != spec.index:
            raise TrainingError(
                f"network is at stage {g.stage} but schedule expects {spec.index}"
            )
        images = pyramid.at(config.resolution(spec.index))
        n = images.shape[0]
        steps_per_epoch = max(1, n // optim.batch_size)
        data_seed = derive_seed(seed, "data", spec.index)
        intro_names = _new_module_names(g, spec.index) if spec.index > 1 else None
        if state.step_in_stage == 0:
            log.event("stage_start", stage=spec.index, steps=spec.steps,
                      resolution=list(config.resolution(spec.index)))

        for k in range(state.step_in_stage, spec.steps):
            policy, phase, alpha = _stage_policy(config, spec, k)
            epoch = k // steps_per_epoch
            pos = k % steps_per_epoch
            order = epoch_order(n, epoch, data_seed)
            idx = order[pos * optim.batch_size : (pos + 1) * optim.batch_size]
            if idx.size == 0:
                idx = order[: optim.batch_size]
            batch = images[idx]
            z = sample_latent_batch(config, policy, derive_seed(seed, "z", state.global_step), idx.size)
            result = gan_step(
                g, d, g_opt, d_opt, batch, z,
                g_active=intro_names if phase == "intro" else None,
                frozen_subvectors=_frozen_set(config, policy),
                check_frozen=check_frozen,
                step_tag=f"stage {spec.index} step {k}",
            )
            state.step_in_stage = k + 1
            state.global_step += 1
            rec = StepRecord(state.global_step, spec.index, phase, alpha, result.d_loss, result.g_loss)
            if keep_records:
                records.append(rec)
            log.record(rec)
            if progress is not None:
                progress(rec)
            if (
                out_dir is not None
                and checkpoint_every is not None
                and state.global_step % checkpoint_every == 0
            ):
                _save(f"step_{state.global_step:07d}")

        log.event("stage_end", stage=spec.index, global_step=state.global_step)
        state.stage_pos += 1
        state.step_in_stage = 0
        if out_dir is not None:
            _save(f"stage_{spec.index:02d}")

    if out_dir is not None:
        final_path = _save("final")
    return RunResult(g, d, g_opt, d_opt, state, records, final_path)


def run_joint(
    config: NetConfig,
    images: np.ndarray,
    optim: OptimSpec,
    steps: int,
    seed: int = 0,
    out_dir: Optional[str] = None,
    keep_records: bool = True,
    progress: Optional[Callable[[StepRecord], None]] = None,
) -> RunResult:
    """Non-progressive baseline: final-stage nets from scratch, every
    sub-vector uniform from the start, all parameters trainable."""
    g = Generator(config, stage=config.stages, seed=derive_seed(seed, "init-g", "joint"))
    d = Discriminator(config, stage=config.stages, seed=derive_seed(seed, "init-d", "joint"))
    g_opt = MaskedAdam(g, optim)
    d_opt = MaskedAdam(d, optim)
    expected = config.resolution(config.stages)
    if tuple(images.shape[1:3]) != expected:
        raise TrainingError(f"joint training needs {expected} images, got {images.shape[1:3]}")
    n = images.shape[0]
    steps_per_epoch = max(1, n // optim.batch_size)
    policy = SamplePolicy.all_uniform(config.branches)
    data_seed = derive_seed(seed, "data", "joint")
    log = _RunLog(out_dir)
    state = TrainState()
    records: list[StepRecord] = []
    for k in range(steps):
        epoch = k // steps_per_epoch
        order = epoch_order(n, epoch, data_seed)
        idx = order[(k % steps_per_epoch) * optim.batch_size :][: optim.batch_size]
        if idx.size == 0:
            idx = order[: optim.batch_size]
        z = sample_latent_batch(config, policy, derive_seed(seed, "z", k), idx.size)
        result = gan_step(g, d, g_opt, d_opt, images[idx], z, step_tag=f"joint step {k}")
        state.global_step = k + 1
        rec = StepRecord(k + 1, config.stages, "joint", 1.0, result.d_loss, result.g_loss)
        if keep_records:
            records.append(rec)
        log.record(rec)
        if progress is not None:
            progress(rec)
    final_path = None
    if out_dir is not None:
        final_path = os.path.join(out_dir, "final.ckpt")
        save_checkpoint(
            final_path,
            make_checkpoint(config, g, d, g_opt, d_opt, state, seed, schedule=()),
        )
    return RunResult(g, d, g_opt, d_opt, state, records, final_path)


# --------------------------------------------------------------------------
# Encoder training


def train_encoder(
    g: Generator,
    optim: OptimSpec,
    steps: int,
    seed: int = 0,
    eval_every: Optional[int] = None,
    n_eval: int = 256,
) -> tuple[Encoder, list[tuple[int, float]]]:
    """Fit an encoder to invert the (fixed) generator by L1 latent recovery
    on generated pairs; returns the encoder and held-out eval history."""
    config = g.config
    e = Encoder(config, stage=g.stage, seed=derive_seed(seed, "init-e"))
    opt = MaskedAdam(e, optim)
    policy = SamplePolicy.all_uniform(config.branches)
    z_eval = sample_latent_batch(config, policy, derive_seed(seed, "e-eval"), n_eval)
    eval_images = torch.from_numpy(
        generate_batch(g, z_eval).transpose(0, 3, 1, 2).copy()
    )
    z_eval_t = torch.from_numpy(z_eval)
    if eval_every is None:
        eval_every = max(1, steps // 5)

    def _eval(step: int) -> tuple[int, float]:
        with torch.no_grad():
            return step, float(F.l1_loss(e(eval_images), z_eval_t))

    history = [_eval(0)]
    for k in range(steps):
        z = sample_latent_batch(config, policy, derive_seed(seed, "e-z", k), optim.batch_size)
        z_t = torch.from_numpy(z)
        with torch.no_grad():
            imgs = g(z_t)
        e.zero_grad(set_to_none=True)
        loss = F.l1_loss(e(imgs), z_t)
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"encoder loss is non-finite at step {k}")
        loss.backward()
        opt.step()
        if (k + 1) % eval_every == 0 or k + 1 == steps:
            history.append(_eval(k + 1))
    return e, history


# --------------------------------------------------------------------------
# Branch suppression


@dataclass
class SuppressionPhase:
    active: list[int]
    steps: int
    mean_d_loss: float
    mean_g_loss: float


@dataclass
class SuppressionReport:
    """Per-branch attributed variance after a phased training run.

    ``branch_ranges[t]`` is the half-width each branch was trained with by
    the end of the run (0 for branches never activated); attribution varies
    each branch over its own training-time range, so a branch that never
    left zero reports exactly zero variance.
    """

    kind: str
    branch_ranges: list[float]
    totals: np.ndarray  # (T,) mean over contexts
    per_context: np.ndarray  # (T, C)
    variance_maps: list[np.ndarray]  # (H, W) per branch, context-averaged
    phases: list[SuppressionPhase]
    n_samples: int
    seed: int

    def dominance_ratio(self, i: int, j: int) -> Optional[float]:
        """totals[i] / totals[j]; None when the denominator is zero."""
        denom = float(self.totals[j])
        if denom <= 0.0:
            return None
        return float(self.totals[i]) / denom

    def to_json_obj(self) -> dict:
        return {
            "kind": self.kind,
            "branch_ranges": self.branch_ranges,
            "totals": self.totals.tolist(),
            "per_context": self.per_context.tolist(),
            "variance_maps": [m.tolist() for m in self.variance_maps],
            "phases": [
                {
                    "active": p.active,
                    "steps": p.steps,
                    "mean_d_loss": p.mean_d_loss,
                    "mean_g_loss": p.mean_g_loss,
                }
                for p in self.phases
            ],
            "n_samples": self.n_samples,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())


def attribute_branch_variance(
    g: Generator,
    branch_ranges: Sequence[float],
    n_contexts: int = 4,
    n_samples: int = 64,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Variance each branch contributes when varied over its own range while
    the others hold a range-respecting constant context.

    Returns (totals (T,), per_context (T, C), variance maps [T x (H, W)]).
    A branch whose range is zero has an empty variation set: its variance is
    identically zero, reported without sampling.
    """
    config = g.config
    T = config.branches
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B]))
    h, w = config.resolution(g.stage)
    per_context = np.zeros((T, n_contexts), dtype=np.float64)
    maps = [np.zeros((h, w), dtype=np.float64) for _ in range(T)]
    for ci in range(n_contexts):
        context = np.concatenate(
            [
                rng.uniform(-r, r, size=d).astype(np.float32)
                for r, d in zip(branch_ranges, config.subvector_dims)
            ]
        )
        for t in range(T):
            r = float(branch_ranges[t])
            if r == 0.0:
                continue  # no variation -> exactly zero, maps stay zero
            z = np.tile(context, (n_samples, 1))
            sl = config.subvector_slice(t)
            z[:, sl] = rng.uniform(-r, r, size=(n_samples, config.subvector_dims[t])).astype(
                np.float32
            )
            vi = variance_image(generate_batch(g, z))
            per_context[t, ci] = vi.total
            maps[t] += vi.values / n_contexts
    totals = per_context.mean(axis=1)
    return totals, per_context, maps


def suppression_experiment(
    config: NetConfig,
    images: np.ndarray,
    optim: OptimSpec,
    steps_per_phase: int,
    kind: str = "pretrained",
    n_phases: Optional[int] = None,
    seed: int = 0,
    n_contexts: int = 4,
    n_samples: int = 64,
    check_frozen: bool = False,
    progress: Optional[Callable[[StepRecord], None]] = None,
) -> SuppressionReport:
    """Train a fixed final-stage model through phases that activate
    sub-vectors at different times, then attribute output variance per
    branch over each branch's training-time range.

    kind "pretrained": one phase with only the first sub-vector live, then
    one phase with all of them.  kind "sequential": one phase per branch,
    activating them first-to-last, equal step budgets; ``n_phases`` can stop
    early, leaving later branches untrained.
    """
    if kind not in ("pretrained", "sequential"):
        raise TrainingError(f"unknown suppression kind {kind!r}")
    T = config.branches
    if kind == "pretrained":
        actives = [[0], list(range(T))]
    else:
        n_phases = T if n_phases is None else n_phases
        if not 1 <= n_phases <= T:
            raise TrainingError(f"n_phases must be in 1..{T}")
        actives = [list(range(p + 1)) for p in range(n_phases)]

    expected = config.resolution(config.stages)
    if tuple(images.shape[1:3]) != expected:
        raise TrainingError(f"suppression needs {expected} images, got {images.shape[1:3]}")
    g = Generator(config, stage=config.stages, seed=derive_seed(seed, "init-g", "supp"))
    d = Discriminator(config, stage=config.stages, seed=derive_seed(seed, "init-d", "supp"))
    g_opt = MaskedAdam(g, optim)
    d_opt = MaskedAdam(d, optim)
    n = images.shape[0]
    steps_per_epoch = max(1, n // optim.batch_size)
    phases: list[SuppressionPhase] = []
    global_step = 0
    for p, active in enumerate(actives):
        policy = SamplePolicy(
            tuple(
                LatentSource.uniform(1.0) if t in active else LatentSource.frozen()
                for t in range(T)
            )
        )
        frozen = _frozen_set(config, policy)
        d_losses, g_losses = [], []
        data_seed = derive_seed(seed, "data", "supp", p)
        for k in range(steps_per_phase):
            epoch = k // steps_per_epoch
            order = epoch_order(n, epoch, data_seed)
            idx = order[(k % steps_per_epoch) * optim.batch_size :][: optim.batch_size]
            if idx.size == 0:
                idx = order[: optim.batch_size]
            z = sample_latent_batch(config, policy, derive_seed(seed, "z", global_step), idx.size)
            result = gan_step(
                g, d, g_opt, d_opt, images[idx], z,
                frozen_subvectors=frozen,
                check_frozen=check_frozen,
                step_tag=f"suppression phase {p} step {k}",
            )
            global_step += 1
            d_losses.append(result.d_loss)
            g_losses.append(result.g_loss)
            if progress is not None:
                progress(StepRecord(global_step, config.stages, f"phase{p}", 1.0,
                                    result.d_loss, result.g_loss))
        phases.append(
            SuppressionPhase(
                active=active,
                steps=steps_per_phase,
                mean_d_loss=float(np.mean(d_losses)),
                mean_g_loss=float(np.mean(g_losses)),
            )
        )

    ever_active = set()
    for phase in phases:
        ever_active.update(phase.active)
    ranges = [1.0 if t in ever_active else 0.0 for t in range(T)]
    totals, per_context, maps = attribute_branch_variance(
        g, ranges, n_contexts=n_contexts, n_samples=n_samples, seed=derive_seed(seed, "attr")
    )
    return SuppressionReport(
        kind=kind,
        branch_ranges=ranges,
        totals=totals,
        per_context=per_context,
        variance_maps=maps,
        phases=phases,
        n_samples=n_samples,
        seed=seed,
    )
