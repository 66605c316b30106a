"""
Branch suppression
==================

Why does progressive width activation matter?  Because branches compete.
Two small experiments on freshly trained final-stage models:

(a) pretrained: branch 0 trains alone first, then all branches train
    together.  The head start sticks — branch 0 keeps most of the
    attributed output variance.
(b) sequential: branches unfreeze one per phase, first-to-last, equal
    budgets.  Earlier branches end up with more attributed variance than
    later ones; a branch that never unfroze gets exactly zero.

Takes a few minutes; budget set by STEPS_PER_PHASE.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from scalebranch.config import get_profile
from scalebranch.data import DatasetSpec, SyntheticRecipe, load_dataset
from scalebranch.training import suppression_experiment

STEPS_PER_PHASE = 800
ART = os.path.join(os.path.dirname(__file__), "_artifacts")
os.makedirs(ART, exist_ok=True)

profile = get_profile("desk")
corpus = load_dataset(DatasetSpec(recipe=SyntheticRecipe(n_samples=256), synthetic_seed=100))

fig, axes = plt.subplots(2, 4, figsize=(11, 5.2))
for row, kind in enumerate(("pretrained", "sequential")):
    report = suppression_experiment(profile.net, corpus, profile.optim,
                                    steps_per_phase=STEPS_PER_PHASE, kind=kind, seed=0)
    totals = report.totals
    print(f"{kind}: attributed variance per branch {np.round(totals, 4).tolist()}")
    if kind == "pretrained":
        others = max(totals[1:])
        print(f"  branch 0 vs best other: {totals[0] / others:.2f}x")

    axes[row, 0].bar(range(len(totals)), totals, color="tab:orange")
    axes[row, 0].set_title(f"{kind}: variance by branch")
    axes[row, 0].set_xlabel("branch")
    for t in range(len(totals)):
        ax = axes[row, t + 1]
        ax.imshow(report.variance_maps[t], cmap="magma")
        ax.set_title(f"branch {t}")
        ax.set_axis_off()

fig.tight_layout()
out = os.path.join(ART, "suppression.png")
fig.savefig(out, dpi=120)
print(f"wrote {out}")
