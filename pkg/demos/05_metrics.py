"""The four evaluation metrics with closed-form and brute-force sanity checks."""

import numpy as np

from handgen import generate_synthetic, metric_diversity, metric_fhd, metric_l2, metric_mpjre
from handgen.autoencoder import make_autoencoder
from handgen.metrics import frechet_distance
from handgen.nn import ParameterStore

rng = np.random.default_rng(0)

# ---- pose-space metrics ---------------------------------------------------------
a = rng.normal(size=(64, 90))
b = a + 0.1
print("L2 of a uniform 0.1 offset:", metric_l2(a, b), "=", 0.1 * np.sqrt(90))
print("MPJRE of a 0.01 rad offset:", metric_mpjre(a, a + 0.01), "=", np.degrees(0.01))

# ---- Frechet feature distance ------------------------------------------------------
# Two unit Gaussians one unit apart have closed-form distance 1.
fa = rng.normal(size=(50_000, 2))
fb = rng.normal(size=(50_000, 2)) + np.array([1.0, 0.0])
print("\nFrechet distance vs closed form 1.0:", frechet_distance(fa, fb))
print("identical sets:", frechet_distance(fa, fa))

# On sequences the features come from a frozen extractor (frame-mean pooled).
store = ParameterStore()
phi = make_autoencoder(store, "phi", 90, 16, 32, rng)
phi.trained = True
data = generate_synthetic(seed=1, n=8, T=16)
seqs = [r.hands for r in data.records]
print("FHD(real, real):", metric_fhd(seqs, seqs, phi))
print("FHD(first half, second half):", metric_fhd(seqs[:4], seqs[4:], phi))

# ---- diversity -----------------------------------------------------------------------
# Mean pairwise feature distance over sampled pairs; exhaustive pairs for few samples.
mean, ci = metric_diversity(seqs, phi, pairs=None)
print(f"\ndiversity over all pairs: {mean:.4f} +/- {ci:.4f}")
mean, ci = metric_diversity(seqs, phi, pairs=500, seed=7)
print(f"diversity over 500 sampled pairs: {mean:.4f} +/- {ci:.4f}")
print("identical samples:", metric_diversity([seqs[0]] * 3, phi, pairs=None))
