"""
Train the desk-scale model
==========================

Synthesizes the three-scale toy corpus, trains the desk profile (3 branches,
4x4 base map growing to 32x32) through the progressive depth-and-width
schedule, fits the inversion encoder, and saves everything the other demos
load from ``demos/_artifacts/``.

About 2.5 minutes on one CPU core at the default budget.  STEPS_PER_STAGE =
2000 is the budget the evaluation runs use; structure is visibly cruder
below ~1000.
"""

import os
import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from scalebranch.checkpoint import save_checkpoint
from scalebranch.config import get_profile
from scalebranch.data import DatasetSpec, Pyramid, SyntheticRecipe, load_dataset, save_images
from scalebranch.training import (
    ScheduleStage,
    make_checkpoint,
    run_progressive,
    train_encoder,
)

torch.set_num_threads(max(1, os.cpu_count() or 1))

STEPS_PER_STAGE = 2000
ENCODER_STEPS = 1200
SEED = 0
ART = os.path.join(os.path.dirname(__file__), "_artifacts")
os.makedirs(ART, exist_ok=True)

# ---------------------------------------------------------------------------
# The corpus: flat-color blobs (coarse band), mid-frequency ripples, and
# fine checker texture, composited so each scale carries independent content.

profile = get_profile("desk")
corpus = load_dataset(DatasetSpec(recipe=SyntheticRecipe(n_samples=256), synthetic_seed=100))
print(f"corpus: {corpus.shape[0]} images at {corpus.shape[1]}x{corpus.shape[2]}")
save_images(corpus[:16], os.path.join(ART, "corpus_preview"))

# ---------------------------------------------------------------------------
# Progressive run: each stage introduces one resolution level and one latent
# sub-vector; the new sub-vector is zero-fed during its intro phase, then its
# sampling range ramps up to the full box.

schedule = tuple(ScheduleStage(index=s, steps=STEPS_PER_STAGE) for s in (1, 2, 3))
pyramid = Pyramid(corpus, [profile.net.resolution(s) for s in (1, 2, 3)])

losses = []


def progress(rec):
    losses.append((rec.global_step, rec.stage, rec.d_loss, rec.g_loss))
    if rec.global_step % 500 == 0:
        print(
            f"  step {rec.global_step:5d} stage {rec.stage} {rec.phase:5s} "
            f"alpha={rec.alpha:.2f} d={rec.d_loss:.3f} g={rec.g_loss:.3f}",
            flush=True,
        )


t0 = time.time()
result = run_progressive(
    profile.net, schedule, pyramid, profile.optim,
    seed=SEED, keep_records=False, progress=progress,
)
print(f"progressive training: {time.time() - t0:.0f}s")

t0 = time.time()
encoder, history = train_encoder(result.generator, profile.optim, ENCODER_STEPS, seed=SEED,
                                 eval_every=200)
print(f"encoder: {time.time() - t0:.0f}s, eval loss {history[0][1]:.3f} -> {history[-1][1]:.3f}")

ckpt_path = os.path.join(ART, "desk.ckpt")
save_checkpoint(ckpt_path, make_checkpoint(
    profile.net, result.generator, result.discriminator,
    result.g_opt, result.d_opt, result.state,
    seed=SEED, schedule=schedule, encoder=encoder,
))
print(f"saved {ckpt_path}")

# ---------------------------------------------------------------------------
# Loss curves, with stage boundaries marked.

steps, stages, d_l, g_l = zip(*losses)
fig, ax = plt.subplots(figsize=(8, 4))
ax.plot(steps, d_l, label="discriminator", lw=0.6)
ax.plot(steps, g_l, label="generator", lw=0.6)
for boundary in range(STEPS_PER_STAGE, 3 * STEPS_PER_STAGE, STEPS_PER_STAGE):
    ax.axvline(boundary, color="gray", ls=":", lw=0.8)
ax.set_xlabel("step")
ax.set_ylabel("loss")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(ART, "training_losses.png"), dpi=120)
print(f"wrote {os.path.join(ART, 'training_losses.png')}")
