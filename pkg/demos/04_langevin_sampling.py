"""Langevin sampling of the perturbation: prior chains against the reference
Gaussian, and a posterior chain against a conjugate closed form."""

import numpy as np

from handgen import LangevinConfig, SamplingHeader
from handgen.nn import ParameterStore
from handgen.stage2 import GenerationModel, langevin_posterior, langevin_prior, sampling_energy

# ---- the energy ---------------------------------------------------------------
# With a zero-weight head the sampling energy is the pure Gaussian term
# ||w||^2 / (2 sigma_w^2); the learned head tilts it during training.
store = ParameterStore()
header = SamplingHeader(store, dw=2, hidden=8, rng=np.random.default_rng(0))
header.zero_weights()
print("energy at ||w||^2 = 2:", float(sampling_energy(header, np.array([1.0, 1.0])).data))

# ---- prior chains ----------------------------------------------------------------
# w <- w - delta * grad(energy) + sqrt(2 delta) * noise converges to the
# energy's Gibbs distribution: here N(0, 1) per coordinate.
cfg = LangevinConfig(steps=5000, delta_prior=0.01, delta_posterior=0.1)
chains = langevin_prior(header, cfg, seed=1, n_chains=4000)
print(f"prior chains: mean {chains.mean():+.4f} (target 0), var {chains.var():.4f} (target 1)")

# the short-run defaults used in training
short = LangevinConfig()  # 6 steps, delta 0.4 / 0.1
w_minus = langevin_prior(header, short, seed=2, n_chains=5)
print("short-run samples:", np.round(w_minus[:, 0], 3))

# ---- posterior chain vs conjugate closed form ----------------------------------------
# Make the generation model linear: every one of the 90 outputs equals a * w.
# Observing target hands == 1 then gives a Gaussian posterior with
# precision 1 + 90 a^2 and mean 90 a / (1 + 90 a^2).
a, channels = 0.1, 8
store2 = ParameterStore()
header2 = SamplingHeader(store2, dw=1, hidden=4, rng=np.random.default_rng(3))
header2.zero_weights()
gen = GenerationModel(store2, channels, dw=1, hidden=4, rng=np.random.default_rng(4),
                      nonlinearity="identity")
for name in gen.param_names():
    store2[name].data[:] = 0.0
store2[f"{gen.prefix}.w0"].data[90 + channels, 0] = 1.0
store2[f"{gen.prefix}.w1"].data[0, :] = a

n = 4000
hands = np.zeros((n, 1, 90))
target = np.ones((n, 1, 90))
proto = np.zeros((n, 1, channels))
analytic = a * 90 / (1 + 90 * a * a)
post_cfg = LangevinConfig(steps=150, delta_prior=0.4, delta_posterior=0.1)
w_plus = langevin_posterior(header2, gen, hands, target, proto, post_cfg, seed=5)
print(f"posterior mean {w_plus.mean():.4f} vs analytic {analytic:.4f}")
