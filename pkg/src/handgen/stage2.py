"""Stage two: diversifying the initial hand predictions.

A prototype memory of encoded real hand sequences supplies a realistic
reference feature per frame; a learned energy over a perturbation vector w is
sampled with short-run Langevin chains (prior and posterior); the generation
MLP consumes (frame hands, retrieved prototype feature, w) per frame. The
parameter updates follow the alternating scheme: the generation weights
descend the L1 reconstruction with the posterior sample held fixed, and the
header weights move along the prior/posterior contrast of the energy
gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, concatenate, mean_abs, tsum
from .autoencoder import HandAutoencoder
from .config import McmcConfig
from .data import HAND_DIM, HandPoseSequence, wrap_axis_angle
from .memory import MemoryBank, read_soft
from .nn import Adam, MlpSpec, ParameterStore, mlp_forward, mlp_init


@dataclass
class LangevinConfig:
    steps: int = 6
    delta_prior: float = 0.4
    delta_posterior: float = 0.1

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.delta_prior <= 0 or self.delta_posterior <= 0:
            raise ValueError("step sizes must be positive")

    @classmethod
    def from_mcmc(cls, cfg: McmcConfig) -> "LangevinConfig":
        return cls(cfg.steps, cfg.delta_prior, cfg.delta_posterior)


class SamplingHeader:
    """MLP energy head over the perturbation plus the Gaussian reference term."""

    def __init__(self, store: ParameterStore, dw: int, hidden: int,
                 rng: np.random.Generator, sigma_w: float = 1.0, prefix: str = "stage2.header"):
        if sigma_w <= 0:
            raise ValueError("sigma_w must be positive")
        self.store = store
        self.prefix = prefix
        self.spec = MlpSpec((dw, hidden, 1))
        self.sigma_w = sigma_w
        mlp_init(store, prefix, self.spec, rng)

    @property
    def dw(self) -> int:
        return self.spec.in_width

    def param_names(self) -> list[str]:
        return self.store.names(self.prefix)

    def head(self, w) -> Tensor:
        """The learned energy term alone, (..., dw) -> (...,)."""
        out = mlp_forward(self.store, self.prefix, self.spec, w)
        return out.reshape(out.shape[:-1])

    def zero_weights(self) -> None:
        for name in self.param_names():
            self.store[name].data[:] = 0.0


def sampling_energy(header: SamplingHeader, w) -> Tensor:
    """Total sampling energy: learned head plus ||w||^2 / (2 sigma_w^2)."""
    w = as_tensor(w)
    quad = tsum(w * w, axis=-1) * (0.5 / header.sigma_w**2)
    return header.head(w) + quad


def _energy_grad(energy_fn, w_data: np.ndarray, step: int) -> np.ndarray:
    w = Tensor(w_data, requires_grad=True)
    total = tsum(energy_fn(w))
    total.backward()
    if not np.all(np.isfinite(w.grad)):
        raise FloatingPointError(f"non-finite Langevin energy gradient at step {step}")
    return w.grad


def _langevin_chain(
    energy_fn,
    header: SamplingHeader,
    cfg: LangevinConfig,
    delta: float,
    seed: int,
    n_chains: int,
    init: np.ndarray | None,
    noise_scale: float,
) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if init is None:
        w = rng.normal(0.0, header.sigma_w, size=(n_chains, header.dw))
    else:
        w = np.array(init, dtype=np.float64).reshape(n_chains, header.dw).copy()
    step_noise = np.sqrt(2.0 * delta) * noise_scale
    for step in range(cfg.steps):
        grad = _energy_grad(energy_fn, w, step)
        noise = rng.standard_normal(size=w.shape) if noise_scale != 0.0 else 0.0
        w = w - delta * grad + step_noise * noise
    return w


def langevin_prior(
    header: SamplingHeader,
    cfg: LangevinConfig,
    seed: int,
    n_chains: int = 1,
    init: np.ndarray | None = None,
    noise_scale: float = 1.0,
) -> np.ndarray:
    """Short-run chain on the prior energy; returns (n_chains, dw).

    Each step: w <- w - delta * grad(energy) + sqrt(2 delta) * noise, with
    w0 ~ N(0, sigma_w^2 I). Deterministic given `seed`.
    """
    return _langevin_chain(
        lambda w: sampling_energy(header, w), header, cfg, cfg.delta_prior,
        seed, n_chains, init, noise_scale,
    )


def langevin_posterior(
    header: SamplingHeader,
    generator: "GenerationModel",
    hands: np.ndarray,
    hands_target: np.ndarray,
    proto_feats: np.ndarray,
    cfg: LangevinConfig,
    seed: int,
    sigma_eps: float = 1.0,
    init: np.ndarray | None = None,
    noise_scale: float = 1.0,
) -> np.ndarray:
    """Short-run chain on the posterior energy of w given observed hands.

    The posterior energy adds the Gaussian observation term
    ||target - R(hands, proto, w)||^2 / (2 sigma_eps^2), summed over frames,
    to the prior energy; its w-gradient carries the residual-weighted
    generator sensitivity.
    """
    hands = np.asarray(hands, dtype=np.float64)
    target = Tensor(np.asarray(hands_target, dtype=np.float64))
    n_chains = hands.shape[0]

    def energy_fn(w: Tensor) -> Tensor:
        out = generator.frames(hands, proto_feats, w)
        resid = target - out
        obs = tsum(resid * resid, axis=(-2, -1)) * (0.5 / sigma_eps**2)
        return sampling_energy(header, w) + obs

    return _langevin_chain(
        energy_fn, header, cfg, cfg.delta_posterior, seed, n_chains, init, noise_scale
    )


# ----- generation model -------------------------------------------------------


class GenerationModel:
    """Per-frame MLP mapping (hands 90, prototype feature C, perturbation dw) -> 90."""

    def __init__(self, store: ParameterStore, channels: int, dw: int, hidden: int,
                 rng: np.random.Generator, prefix: str = "stage2.r",
                 nonlinearity: str = "leaky_relu"):
        self.store = store
        self.prefix = prefix
        self.channels = channels
        self.dw = dw
        self.spec = MlpSpec((HAND_DIM + channels + dw, hidden, HAND_DIM), nonlinearity)
        mlp_init(store, prefix, self.spec, rng)

    def param_names(self) -> list[str]:
        return self.store.names(self.prefix)

    def frames(self, hands, proto_feats, w) -> Tensor:
        """(N, T, 90), (N, T, C), (N, dw) -> (N, T, 90); w is broadcast per frame."""
        hands = as_tensor(hands)
        proto_feats = as_tensor(proto_feats)
        w = as_tensor(w)
        n, t = hands.shape[0], hands.shape[1]
        w_frames = (w.reshape((n, 1, self.dw)) + Tensor(np.zeros((n, t, self.dw))))
        x = concatenate([hands, proto_feats, w_frames], axis=-1)
        return mlp_forward(self.store, self.prefix, self.spec, x)


def prototype_features(proto_bank: MemoryBank, extractor: HandAutoencoder, hands: np.ndarray) -> np.ndarray:
    """Per-frame soft-read of the prototype bank, queried with encoded hands.

    (N, T, 90) -> (N, T, C), detached (the bank is a buffer).
    """
    if proto_bank.n_slots < 1:
        raise ValueError("prototype bank is empty")
    feats = extractor.encode_np(np.asarray(hands, dtype=np.float64))
    agg, _ = read_soft(proto_bank, feats)
    return agg.data


def stage_two_loss(generator: GenerationModel, hands, proto_feats, w_plus) -> Tensor:
    """Mean absolute difference between observed hands and R(hands, proto, w+)."""
    hands_t = as_tensor(hands)
    out = generator.frames(hands_t, proto_feats, np.asarray(w_plus, dtype=np.float64))
    return mean_abs(hands_t, out)


# ----- hand-coded update gradients (cross-checked against autodiff) -----------


def theta_grad_manual(generator: GenerationModel, hands, proto_feats, w_plus) -> dict[str, np.ndarray]:
    """Generation-model gradient assembled by hand: the L1 residual sign seeds
    a vector-Jacobian product through R, bypassing the loss ops entirely."""
    hands = np.asarray(hands, dtype=np.float64)
    generator.store.zero_grad(generator.prefix)
    out = generator.frames(hands, proto_feats, np.asarray(w_plus, dtype=np.float64))
    seed = -np.sign(hands - out.data) / hands.size
    out.backward(seed)
    return {n: generator.store[n].grad.copy() for n in generator.param_names()}


def alpha_grad_manual(header: SamplingHeader, w_minus: np.ndarray, w_plus: np.ndarray) -> dict[str, np.ndarray]:
    """Header ascent direction: mean grad of the head at prior samples minus
    mean grad at posterior samples; exactly zero when the two sets coincide."""
    store = header.store
    store.zero_grad(header.prefix)
    tsum(header.head(np.asarray(w_minus, dtype=np.float64))).backward()
    n_minus = w_minus.shape[0]
    g_minus = {n: store[n].grad / n_minus for n in header.param_names()}
    store.zero_grad(header.prefix)
    tsum(header.head(np.asarray(w_plus, dtype=np.float64))).backward()
    n_plus = w_plus.shape[0]
    return {n: g_minus[n] - store[n].grad / n_plus for n in header.param_names()}


def stage_two_grad_step(
    generator: GenerationModel,
    header: SamplingHeader,
    opt_theta: Adam,
    opt_alpha: Adam,
    hands: np.ndarray,
    proto_feats: np.ndarray,
    cfg: LangevinConfig,
    seed: int,
    sigma_eps: float = 1.0,
    grad_clip: float = 1.0,
) -> dict[str, float]:
    """One alternating update: draw prior/posterior chains, descend the L1
    reconstruction w.r.t. the generation weights (posterior sample fixed), and
    move the header along the prior/posterior energy contrast."""
    n = hands.shape[0]
    w_minus = langevin_prior(header, cfg, seed, n_chains=n)
    w_plus = langevin_posterior(header, generator, hands, hands, proto_feats, cfg, seed + 1,
                                sigma_eps=sigma_eps)
    store = generator.store

    store.zero_grad(generator.prefix)
    loss = stage_two_loss(generator, hands, proto_feats, w_plus)
    loss.backward()
    store.clip_grad_norm(grad_clip, generator.param_names())
    opt_theta.step()

    header.store.zero_grad(header.prefix)
    contrast = tsum(header.head(w_plus)) * (1.0 / n) - tsum(header.head(w_minus)) * (1.0 / n)
    contrast.backward()
    header.store.clip_grad_norm(grad_clip, header.param_names())
    opt_alpha.step()

    return {"stage2_loss": float(loss.data), "alpha_contrast": float(contrast.data)}


# ----- inference ---------------------------------------------------------------


def generate_diverse(
    generator: GenerationModel,
    initial: HandPoseSequence,
    proto_bank: MemoryBank,
    extractor: HandAutoencoder,
    w: np.ndarray,
) -> HandPoseSequence:
    """Frame-level diversification of an initial prediction with a fixed w."""
    hands = initial.flat[None, :, :]  # (1, T, 90)
    proto = prototype_features(proto_bank, extractor, hands)
    w = np.asarray(w, dtype=np.float64).reshape(1, generator.dw)
    out = generator.frames(hands, proto, w).data[0]
    frames = wrap_axis_angle(out.reshape(out.shape[0], HAND_DIM // 3, 3))
    return HandPoseSequence(frames, initial.fps)


# ----- post-processing -----------------------------------------------------------


def temporal_smooth(hands, window: int):
    """Centered moving average over time with reflected boundaries.

    `window` must be odd; window = 1 is the identity. Accepts a
    HandPoseSequence or a (T, ...) array and returns the same kind.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be an odd positive integer")
    is_seq = isinstance(hands, HandPoseSequence)
    values = hands.flat if is_seq else np.asarray(hands, dtype=np.float64)
    if window == 1:
        out = values.copy()
    else:
        pad = window // 2
        if pad > values.shape[0] - 1:
            raise ValueError(f"window {window} too large for {values.shape[0]} frames")
        padded = np.pad(values, [(pad, pad)] + [(0, 0)] * (values.ndim - 1), mode="reflect")
        kernel_sum = np.cumsum(padded, axis=0)
        head = kernel_sum[window - 1 :][: values.shape[0]]
        tail = np.concatenate([np.zeros((1,) + padded.shape[1:]), kernel_sum[:-window]], axis=0)[: values.shape[0]]
        out = (head - tail) / window
    if is_seq:
        return HandPoseSequence(out.reshape(values.shape[0], HAND_DIM // 3, 3), hands.fps)
    return out
