"""Command-line interface.

Subcommands cover the full workflow: synthesize a corpus, train
(progressive or joint baseline), measure variance by scale, render sweeps
and fusions, run constraint edits, reproduce the branch-suppression
experiment, and serve models over HTTP.

Configuration is layered: profile defaults, then an optional JSON config
file, then explicit flags.  Every command that writes artifacts drops a
``run.json`` manifest (arguments, effective config, seed, outputs) into its
output directory.  Exit codes: 0 success, 2 bad configuration or inputs,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, NetConfig, OptimSpec, get_profile, PROFILES
from .data import (
    DataError,
    DatasetSpec,
    Pyramid,
    SyntheticRecipe,
    load_dataset,
    save_images,
)
from .editing import EditConfig, EditConstraints, EditError, optimize_edit
from .hog import HogError
from .latent import BranchedLatent, LatentError, SamplePolicy, constant_sweep, fuse, sample_latent
from .networks import NetworkError, generate, generate_batch
from .spectral import (
    BandSpec,
    SpectralError,
    dimension_targets,
    dominant_scale,
    subvector_targets,
    vbs_report,
)
from .training import (
    ScheduleStage,
    TrainingDiverged,
    TrainingError,
    build_schedule,
    make_checkpoint,
    nets_from_checkpoint,
    run_joint,
    run_progressive,
    suppression_experiment,
    train_encoder,
)

_CONFIG_ERRORS = (
    ConfigError,
    DataError,
    LatentError,
    EditError,
    SpectralError,
    TrainingError,
    HogError,
    CheckpointError,
)
_RUNTIME_ERRORS = (TrainingDiverged, NetworkError, OSError)


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _write_manifest(out_dir: str, command: str, args: argparse.Namespace, extra: dict) -> None:
    manifest = {
        "tool": "scalebranch",
        "version": __version__,
        "command": command,
        "argv": {k: v for k, v in vars(args).items() if k != "func"},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    manifest.update(extra)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)


def _save_png(image: np.ndarray, path: str) -> None:
    from PIL import Image

    arr = np.clip(np.asarray(image, dtype=np.float64) * 255.0, 0, 255).round().astype(np.uint8)
    Image.fromarray(arr).save(path)


def _load_png(path: str, gray: bool = False) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        if gray:
            return np.asarray(im.convert("L"), dtype=np.float32) / 255.0
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def _load_latent_file(path: str) -> BranchedLatent:
    return BranchedLatent.from_json(Path(path).read_text())


# --------------------------------------------------------------------------
# train


def _effective_train_config(args) -> dict:
    """profile defaults <- config file <- explicit flags."""
    profile = get_profile(args.profile)
    cfg: dict = {
        "net": profile.net.to_json_obj(),
        "optim": profile.optim.to_json_obj(),
        "epochs_per_stage": profile.epochs_per_stage,
        "stage1_fraction": 0.25,
        "alpha_shape": "linear",
        "seed": 0,
    }
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config!r}: {exc}")
        for key, value in overrides.items():
            if key in ("net", "optim"):
                cfg[key].update(value)
            elif key in cfg:
                cfg[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.epochs is not None:
        cfg["epochs_per_stage"] = args.epochs
    if args.batch is not None:
        cfg["optim"]["batch_size"] = args.batch
    if args.stage1_fraction is not None:
        cfg["stage1_fraction"] = args.stage1_fraction
    if args.alpha_shape is not None:
        cfg["alpha_shape"] = args.alpha_shape
    return cfg


def _dataset_from_args(args) -> np.ndarray:
    if args.data:
        spec = DatasetSpec(directory=args.data)
    else:
        if args.recipe:
            recipe = SyntheticRecipe.from_json(Path(args.recipe).read_text())
        else:
            recipe = SyntheticRecipe()
        spec = DatasetSpec(recipe=recipe, synthetic_seed=args.data_seed)
    return load_dataset(spec)


def cmd_train(args) -> int:
    cfg = _effective_train_config(args)
    net = NetConfig.from_json_obj(cfg["net"])
    optim = OptimSpec.from_json_obj(cfg["optim"])
    seed = int(cfg["seed"])
    images = _dataset_from_args(args)
    expected = net.resolution(net.stages)
    if tuple(images.shape[1:3]) != expected:
        raise ConfigError(
            f"dataset is {images.shape[1:3]}, architecture renders {expected}"
        )
    out = args.out
    _write_manifest(out, "train", args, {"effective_config": cfg, "n_images": len(images)})

    def progress(rec):
        if rec.global_step % args.log_every == 0:
            print(
                f"step {rec.global_step} stage {rec.stage} {rec.phase} "
                f"alpha={rec.alpha:.3f} d={rec.d_loss:.4f} g={rec.g_loss:.4f}",
                flush=True,
            )

    if args.mode == "joint":
        if args.steps_per_stage is None:
            steps = cfg["epochs_per_stage"] * net.stages * max(1, len(images) // optim.batch_size)
        else:
            steps = args.steps_per_stage * net.stages
        result = run_joint(net, images, optim, steps=steps, seed=seed, out_dir=out,
                           keep_records=False, progress=progress)
    else:
        if args.steps_per_stage is not None:
            schedule = tuple(
                ScheduleStage(index=s, steps=args.steps_per_stage,
                              stage1_fraction=cfg["stage1_fraction"],
                              alpha_shape=cfg["alpha_shape"])
                for s in range(1, net.stages + 1)
            )
        else:
            schedule = build_schedule(
                net, len(images), optim, cfg["epochs_per_stage"],
                stage1_fraction=cfg["stage1_fraction"], alpha_shape=cfg["alpha_shape"],
            )
        pyramid = Pyramid(images, [net.resolution(s) for s in range(1, net.stages + 1)])
        result = run_progressive(
            net, schedule, pyramid, optim, seed=seed, out_dir=out,
            resume_from=args.resume, checkpoint_every=args.checkpoint_every,
            check_frozen=args.check_frozen, keep_records=False, progress=progress,
        )

    if args.encoder_steps > 0:
        print(f"fitting encoder for {args.encoder_steps} steps", flush=True)
        encoder, history = train_encoder(result.generator, optim, args.encoder_steps, seed=seed)
        ckpt = make_checkpoint(
            net, result.generator, result.discriminator, result.g_opt, result.d_opt,
            result.state, seed, schedule=() if args.mode == "joint" else schedule,
            encoder=encoder, metadata={"encoder_eval": history},
        )
        save_checkpoint(os.path.join(out, "final.ckpt"), ckpt)
    print(f"final checkpoint: {result.final_checkpoint or os.path.join(out, 'final.ckpt')}")
    return 0


# --------------------------------------------------------------------------
# synth-data


def cmd_synth_data(args) -> int:
    recipe = SyntheticRecipe(
        n_samples=args.n, size=(args.size, args.size)
    ) if args.recipe is None else SyntheticRecipe.from_json(Path(args.recipe).read_text())
    spec = DatasetSpec(recipe=recipe, synthetic_seed=args.seed)
    images = load_dataset(spec)
    paths = save_images(images, args.out)
    Path(args.out, "recipe.json").write_text(recipe.to_json())
    _write_manifest(args.out, "synth-data", args,
                    {"recipe": recipe.to_json_obj(), "n_images": len(paths)})
    print(f"wrote {len(paths)} images to {args.out}")
    return 0


# --------------------------------------------------------------------------
# vbs


def cmd_vbs(args) -> int:
    ckpt = load_checkpoint(args.model)
    g, _, _ = nets_from_checkpoint(ckpt)
    cfg = g.config
    if args.targets == "dimension":
        targets = dimension_targets(cfg.total_dims)
    else:
        targets = subvector_targets(cfg.branches)
    report = vbs_report(
        lambda z: generate_batch(g, z),
        cfg.subvector_dims,
        targets,
        bands=BandSpec(),
        n_constants=args.constants,
        n_samples=args.samples,
        seed=args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    Path(args.out, "report.json").write_text(report.to_json())
    Path(args.out, "report.csv").write_text(report.to_csv())

    plt = _plt()
    bands = report.bands.labels()
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for t, label in enumerate(report.target_labels):
        ax.plot(range(len(bands)), report.normalized[t], marker="o", label=label)
    ax.set_xticks(range(len(bands)), bands)
    ax.set_xlabel("frequency band")
    ax.set_ylabel("normalized variance by scale")
    if len(report.target_labels) <= 12:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(os.path.join(args.out, "profile.png"), dpi=120)
    plt.close(fig)

    if args.hist:
        fig, axes = plt.subplots(1, report.bands.n_bands, figsize=(3 * report.bands.n_bands, 3))
        for b, ax in enumerate(np.atleast_1d(axes)):
            if b in report.undefined_bands:
                ax.set_title(f"band {b} (undefined)")
                continue
            ax.hist(report.histogram_values(b), bins=30)
            ax.set_title(f"band {b}")
        fig.tight_layout()
        fig.savefig(os.path.join(args.out, "histograms.png"), dpi=120)
        plt.close(fig)

    summary = {
        t: dominant_scale(report, t) for t in report.target_labels
    } if not report.undefined_bands else {}
    _write_manifest(args.out, "vbs", args, {"dominant_scale": summary})
    for label, band in summary.items():
        print(f"{label}: dominant band {band}")
    return 0


# --------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    ckpt = load_checkpoint(args.model)
    g, _, _ = nets_from_checkpoint(ckpt)
    cfg = g.config
    if args.latent:
        base = _load_latent_file(args.latent)
    else:
        base = sample_latent(cfg, SamplePolicy.all_uniform(cfg.branches), args.seed)
    values = args.values
    latents = constant_sweep(base, args.subvector, values)
    images = generate_batch(g, np.stack([l.flat() for l in latents]))
    os.makedirs(args.out, exist_ok=True)
    for i, (value, image) in enumerate(zip(values, images)):
        _save_png(image, os.path.join(args.out, f"frame_{i:02d}.png"))
    strip = np.concatenate(list(images), axis=1)
    _save_png(strip, os.path.join(args.out, "strip.png"))
    Path(args.out, "latents.json").write_text(
        json.dumps({"base": base.to_json_obj(), "values": values,
                    "latents": [l.to_json_obj() for l in latents]})
    )
    _write_manifest(args.out, "sweep", args, {"subvector": args.subvector, "values": values})
    print(f"wrote {len(values)} frames to {args.out}")
    return 0


# --------------------------------------------------------------------------
# fuse


def cmd_fuse(args) -> int:
    ckpt = load_checkpoint(args.model)
    g, _, _ = nets_from_checkpoint(ckpt)
    a = _load_latent_file(args.a)
    b = _load_latent_file(args.b)
    fused = fuse(a, b, args.take)
    os.makedirs(args.out, exist_ok=True)
    _save_png(generate(g, a), os.path.join(args.out, "a.png"))
    _save_png(generate(g, b), os.path.join(args.out, "b.png"))
    _save_png(generate(g, fused), os.path.join(args.out, "fused.png"))
    Path(args.out, "fused.json").write_text(fused.to_json())
    _write_manifest(args.out, "fuse", args, {"take_from_a": args.take})
    print(f"wrote fusion to {args.out}")
    return 0


# --------------------------------------------------------------------------
# edit


def cmd_edit(args) -> int:
    ckpt = load_checkpoint(args.model)
    g, _, encoder = nets_from_checkpoint(ckpt, with_encoder=True)
    color = _load_png(args.color) if args.color else None
    mask = None
    if args.mask:
        mask = (_load_png(args.mask, gray=True) > 0.5).astype(np.float32)
    edge = _load_png(args.edge, gray=True) if args.edge else None
    constraints = EditConstraints(color=color, mask=mask, edge=edge)
    init = args.init
    if init == "encoder" and encoder is None:
        raise ConfigError("checkpoint has no encoder; use --init random or --init latent")
    config = EditConfig(
        steps=args.steps, restarts=args.restarts, step_size=args.step_size,
        edge_weight=args.edge_weight, init=init,
    )
    init_latent = _load_latent_file(args.latent) if args.latent else None
    result = optimize_edit(
        g, constraints, config, encoder=encoder, init_latent=init_latent, seed=args.seed
    )
    os.makedirs(args.out, exist_ok=True)
    _save_png(result.image, os.path.join(args.out, "result.png"))
    Path(args.out, "latent.json").write_text(result.latent.to_json())
    trace_lines = ["iteration,loss"] + [f"{i},{v:.8f}" for i, v in enumerate(result.trace)]
    Path(args.out, "trace.csv").write_text("\n".join(trace_lines) + "\n")
    _write_manifest(args.out, "edit", args, {
        "loss": result.loss, "init_kind": result.init_kind, "restart": result.restart,
    })
    print(f"final loss {result.loss:.6f} (init {result.trace[0]:.6f}) -> {args.out}")
    return 0


# --------------------------------------------------------------------------
# suppress


def cmd_suppress(args) -> int:
    profile = get_profile(args.profile)
    net, optim = profile.net, profile.optim
    if args.batch is not None:
        optim = OptimSpec(
            learning_rate=optim.learning_rate, beta1=optim.beta1,
            beta2=optim.beta2, batch_size=args.batch,
        )
    images = _dataset_from_args(args)
    report = suppression_experiment(
        net, images, optim,
        steps_per_phase=args.steps_per_phase,
        kind=args.kind,
        n_phases=args.phases,
        seed=args.seed,
        n_contexts=args.contexts,
        n_samples=args.samples,
    )
    os.makedirs(args.out, exist_ok=True)
    Path(args.out, "report.json").write_text(report.to_json())

    plt = _plt()
    T = len(report.totals)
    fig, axes = plt.subplots(1, T + 1, figsize=(3 * (T + 1), 3))
    axes[0].bar(range(T), report.totals)
    axes[0].set_xlabel("branch")
    axes[0].set_ylabel("attributed variance")
    for t in range(T):
        axes[t + 1].imshow(report.variance_maps[t], cmap="magma")
        axes[t + 1].set_title(f"branch {t}")
        axes[t + 1].axis("off")
    fig.tight_layout()
    fig.savefig(os.path.join(args.out, "variance_maps.png"), dpi=120)
    plt.close(fig)

    _write_manifest(args.out, "suppress", args, {
        "kind": report.kind,
        "totals": report.totals.tolist(),
        "branch_ranges": report.branch_ranges,
    })
    print("attributed variance per branch:", np.round(report.totals, 6).tolist())
    return 0


# --------------------------------------------------------------------------
# serve


def cmd_serve(args) -> int:
    models = {}
    for item in args.model:
        if "=" not in item:
            raise ConfigError(f"--model expects name=path, got {item!r}")
        name, path = item.split("=", 1)
        if not os.path.exists(path):
            raise ConfigError(f"checkpoint {path!r} does not exist")
        models[name] = path
    from .service import run_service

    print(f"serving {sorted(models)} on {args.host}:{args.port}", flush=True)
    run_service(models, host=args.host, port=args.port)
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scalebranch",
        description="Scale-disentangled branched GAN toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="progressive or joint adversarial training")
    p.add_argument("--profile", default="desk", choices=sorted(PROFILES))
    p.add_argument("--config", help="JSON file overriding profile defaults")
    p.add_argument("--mode", default="progressive", choices=("progressive", "joint"))
    p.add_argument("--data", help="directory of PNG/JPEG images")
    p.add_argument("--recipe", help="synthetic recipe JSON (when no --data)")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None, help="epochs per stage")
    p.add_argument("--steps-per-stage", type=int, default=None,
                   help="override the epoch-derived step count")
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--stage1-fraction", type=float, default=None)
    p.add_argument("--alpha-shape", choices=("linear", "cosine"), default=None)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--check-frozen", action="store_true",
                   help="assert zero-fed gradient nullity every step")
    p.add_argument("--encoder-steps", type=int, default=0)
    p.add_argument("--log-every", type=int, default=50)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth-data", help="write the synthetic corpus as PNGs")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--recipe", help="recipe JSON to use instead of defaults")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("vbs", help="variance-by-scale report for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--targets", default="subvector", choices=("subvector", "dimension"))
    p.add_argument("--constants", type=int, default=4)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hist", action="store_true", help="also plot per-band histograms")
    p.set_defaults(func=cmd_vbs)

    p = sub.add_parser("sweep", help="sweep one sub-vector through constants")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--subvector", type=int, required=True)
    p.add_argument("--values", type=float, nargs="+", default=[-1.0, -0.5, 0.0, 0.5, 1.0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latent", help="base latent JSON file (instead of --seed)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fuse", help="combine sub-vectors from two latents")
    p.add_argument("--model", required=True)
    p.add_argument("--a", required=True, help="latent JSON file")
    p.add_argument("--b", required=True, help="latent JSON file")
    p.add_argument("--take", type=int, nargs="+", required=True,
                   help="sub-vector indices taken from --a")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("edit", help="optimize a latent against constraints")
    p.add_argument("--model", required=True)
    p.add_argument("--color", help="color map PNG")
    p.add_argument("--mask", help="binary mask PNG")
    p.add_argument("--edge", help="edge map PNG")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--edge-weight", type=float, default=10.0)
    p.add_argument("--init", default="encoder", choices=("encoder", "latent", "random"))
    p.add_argument("--latent", help="init latent JSON (with --init latent)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("suppress", help="branch-suppression experiment")
    p.add_argument("--profile", default="desk", choices=sorted(PROFILES))
    p.add_argument("--kind", default="pretrained", choices=("pretrained", "sequential"))
    p.add_argument("--data", help="directory of PNG/JPEG images")
    p.add_argument("--recipe", help="synthetic recipe JSON (when no --data)")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--steps-per-phase", type=int, required=True)
    p.add_argument("--phases", type=int, default=None,
                   help="sequential kind: stop after this many phases")
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--contexts", type=int, default=4)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_suppress)

    p = sub.add_parser("serve", help="HTTP service over trained checkpoints")
    p.add_argument("--model", action="append", required=True,
                   help="name=path/to/checkpoint; repeatable")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
