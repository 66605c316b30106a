"""
Latent sub-vector tour
======================

Loads the desk model from demo 00 and walks its branched latent space:
sweeping each sub-vector with the rest held fixed, then fusing two codes
scale by scale (coarse structure from one image, fine texture from another).
"""

import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from scalebranch.latent import SamplePolicy, constant_sweep, fuse, sample_latent
from scalebranch.networks import generate, generate_batch
from scalebranch.training import generator_from_checkpoint

ART = os.path.join(os.path.dirname(__file__), "_artifacts")
CKPT = os.path.join(ART, "desk.ckpt")
if not os.path.exists(CKPT):
    sys.exit("run demos/00_train_desk.py first (no desk.ckpt found)")

g = generator_from_checkpoint(CKPT)
cfg = g.config
VALUES = [-1.0, -0.5, 0.0, 0.5, 1.0]

# ---------------------------------------------------------------------------
# One row per sub-vector: replace that sub-vector with a constant fill and
# step the constant through the box.  Rows differ in the scale of what moves.

base = sample_latent(cfg, SamplePolicy.all_uniform(cfg.branches), seed=42)
fig, axes = plt.subplots(cfg.branches, len(VALUES), figsize=(2 * len(VALUES), 2 * cfg.branches))
for t in range(cfg.branches):
    frames = generate_batch(g, np.stack([l.flat() for l in constant_sweep(base, t, VALUES)]))
    for j, (v, frame) in enumerate(zip(VALUES, frames)):
        ax = axes[t, j]
        ax.imshow(frame)
        ax.set_axis_off()
        if t == 0:
            ax.set_title(f"{v:+.1f}")
    axes[t, 0].set_ylabel(f"z{t}")
fig.suptitle("constant sweeps per sub-vector (row = scale)")
fig.tight_layout()
fig.savefig(os.path.join(ART, "sweeps.png"), dpi=120)

# ---------------------------------------------------------------------------
# Cross-scale fusion: ab pairs along one axis, the set of sub-vectors taken
# from code a along the other.

a = sample_latent(cfg, SamplePolicy.all_uniform(cfg.branches), seed=7)
b = sample_latent(cfg, SamplePolicy.all_uniform(cfg.branches), seed=8)
takes = [(), (0,), (0, 1), (0, 1, 2)]  # nothing, coarse, coarse+mid, everything
fig, axes = plt.subplots(1, len(takes), figsize=(2.4 * len(takes), 2.8))
for ax, take in zip(axes, takes):
    ax.imshow(generate(g, fuse(a, b, take)))
    ax.set_title("b only" if not take else f"a: {','.join(f'z{t}' for t in take)}")
    ax.set_axis_off()
fig.suptitle("fusion: sub-vectors taken from a, rest from b")
fig.tight_layout()
fig.savefig(os.path.join(ART, "fusion.png"), dpi=120)

print(f"wrote {os.path.join(ART, 'sweeps.png')} and {os.path.join(ART, 'fusion.png')}")
