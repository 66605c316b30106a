"""
Constraint-driven editing
=========================

Recreates the interactive editing loop without the UI: paint a color
constraint under a mask, optionally pin image statistics through the
edge-descriptor term, and optimize a latent whose rendering satisfies them.

Three scenarios:
  1. self-recovery — the target is one of the model's own renders, encoder
     initialization; the optimizer should land very close.
  2. local recolor — a region mask forces a color change while the rest of
     the image is unconstrained.
  3. edge-guided — same recolor, plus the edge term anchored to the source
     render's descriptor so texture statistics survive the edit.
"""

import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from scalebranch.checkpoint import load_checkpoint
from scalebranch.editing import EditConfig, EditConstraints, optimize_edit
from scalebranch.hog import hog
from scalebranch.latent import SamplePolicy, sample_latent
from scalebranch.networks import generate
from scalebranch.training import nets_from_checkpoint

ART = os.path.join(os.path.dirname(__file__), "_artifacts")
CKPT = os.path.join(ART, "desk.ckpt")
if not os.path.exists(CKPT):
    sys.exit("run demos/00_train_desk.py first (no desk.ckpt found)")

g, _, encoder = nets_from_checkpoint(load_checkpoint(CKPT), with_encoder=True)
cfg = g.config
H, W = cfg.resolution(cfg.stages)

source_latent = sample_latent(cfg, SamplePolicy.all_uniform(cfg.branches), seed=21)
source = generate(g, source_latent)

rows = []

# -- 1. self-recovery ----------------------------------------------------
constraints = EditConstraints(color=source)
result = optimize_edit(g, constraints, EditConfig(init="encoder", steps=150, restarts=1),
                       encoder=encoder, seed=0)
print(f"self-recovery: init {result.trace[0]:.4f} -> final {result.loss:.4f}")
rows.append(("self-recovery", source, None, result))

# -- 2. local recolor -----------------------------------------------------
mask = np.zeros((H, W), dtype=np.float32)
mask[H // 4: 3 * H // 4, W // 4: 3 * W // 4] = 1.0  # center square
color = source.copy()
color[mask.astype(bool)] = (0.85, 0.25, 0.2)  # push the center toward red
constraints = EditConstraints(color=color, mask=mask)
result = optimize_edit(g, constraints, EditConfig(init="encoder", steps=200, restarts=2),
                       encoder=encoder, seed=1)
print(f"local recolor: init {result.trace[0]:.4f} -> final {result.loss:.4f}")
rows.append(("local recolor", color, mask, result))

# -- 3. edge-guided recolor ------------------------------------------------
# Edge map = the source's own luminance; its descriptor anchors texture
# statistics while the color term moves the palette.
edge = source.mean(axis=2).astype(np.float32)
constraints = EditConstraints(color=color, mask=mask, edge=edge)
result = optimize_edit(g, constraints, EditConfig(init="encoder", steps=200, restarts=2,
                                                  edge_weight=5.0),
                       encoder=encoder, seed=2)
print(f"edge-guided:   init {result.trace[0]:.4f} -> final {result.loss:.4f}")
rows.append(("edge-guided", color, mask, result))

# -- gallery + loss traces --------------------------------------------------
fig, axes = plt.subplots(len(rows), 4, figsize=(10, 2.6 * len(rows)))
for r, (name, target, m, result) in enumerate(rows):
    panels = [
        ("source", source),
        ("constraint", target if m is None else target * m[..., None] + 0.5 * (1 - m[..., None])),
        ("result", result.image),
    ]
    for c, (title, img) in enumerate(panels):
        axes[r, c].imshow(np.clip(img, 0, 1))
        axes[r, c].set_axis_off()
        if r == 0:
            axes[r, c].set_title(title)
    axes[r, 0].set_ylabel(name)
    axes[r, 3].plot(result.trace, lw=0.8)
    axes[r, 3].set_yscale("log")
    if r == 0:
        axes[r, 3].set_title("loss trace")
fig.tight_layout()
out = os.path.join(ART, "edits.png")
fig.savefig(out, dpi=120)
print(f"wrote {out}")
