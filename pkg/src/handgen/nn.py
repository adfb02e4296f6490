"""Differentiable building blocks: parameter store, MLP, multi-head attention,
layer norm, sinusoidal position codes, Adam, and a finite-difference checker.

Everything operates on `autodiff.Tensor` so gradients flow end to end; the
checker compares analytic gradients against central differences and is run
over every learned component in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .autodiff import (
    Tensor,
    as_tensor,
    concatenate,
    leaky_relu,
    matmul,
    softmax,
    sqrt,
    swapaxes,
    tanh,
    tmean,
)


class NondeterministicLossError(RuntimeError):
    """Raised when a loss function returns different values on repeat evaluation."""


LEAKY_SLOPE = 0.2

_NONLINEARITIES: dict[str, Callable[[Tensor], Tensor]] = {
    "leaky_relu": lambda x: leaky_relu(x, LEAKY_SLOPE),
    "tanh": tanh,
    "identity": lambda x: x,
}


class ParameterStore:
    """Named float64 parameter tensors with accumulated gradient buffers."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        values = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"non-finite initial values for parameter {name}")
        t = Tensor(values, requires_grad=True, name=name)
        t.zero_grad()
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def items(self, prefix: str = ""):
        return [(n, t) for n, t in self._params.items() if n.startswith(prefix)]

    def zero_grad(self, prefix: str = "") -> None:
        for _, t in self.items(prefix):
            t.zero_grad()

    def grad_norm(self, names: Iterable[str] | None = None) -> float:
        names = list(names) if names is not None else list(self._params)
        total = 0.0
        for n in names:
            g = self._params[n].grad
            if g is not None:
                total += float((g * g).sum())
        return float(np.sqrt(total))

    def clip_grad_norm(self, max_norm: float, names: Iterable[str] | None = None) -> float:
        """Scale gradients so their global norm is at most `max_norm`; returns the pre-clip norm."""
        names = list(names) if names is not None else list(self._params)
        norm = self.grad_norm(names)
        if max_norm > 0 and norm > max_norm:
            scale = max_norm / norm
            for n in names:
                g = self._params[n].grad
                if g is not None:
                    g *= scale
        return norm

    def state(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        for n, values in state.items():
            if n not in self._params:
                if strict:
                    raise KeyError(f"unknown parameter in state: {n}")
                continue
            t = self._params[n]
            values = np.asarray(values, dtype=np.float64)
            if values.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {n}: {values.shape} vs {t.data.shape}")
            t.data = values.copy()

    def check_finite(self) -> None:
        for n, t in self._params.items():
            if not np.all(np.isfinite(t.data)):
                raise FloatingPointError(f"parameter {n} contains non-finite values")


@dataclass(frozen=True)
class MlpSpec:
    """Fully-connected stack: `widths[0] -> ... -> widths[-1]`, nonlinearity
    between layers, final layer linear."""

    widths: tuple[int, ...]
    nonlinearity: str = "leaky_relu"

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("MlpSpec needs at least input and output widths")
        if any(w < 1 for w in self.widths):
            raise ValueError("MlpSpec widths must be positive")
        if self.nonlinearity not in _NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]


def _fan_in_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def mlp_init(store: ParameterStore, prefix: str, spec: MlpSpec, rng: np.random.Generator) -> None:
    for i, (w_in, w_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        store.add(f"{prefix}.w{i}", _fan_in_uniform(rng, w_in, (w_in, w_out)))
        store.add(f"{prefix}.b{i}", np.zeros(w_out))


def mlp_forward(store: ParameterStore, prefix: str, spec: MlpSpec, x) -> Tensor:
    """Apply the MLP to x of shape (..., in_width)."""
    x = as_tensor(x)
    if x.shape[-1] != spec.in_width:
        raise ValueError(f"input width {x.shape[-1]} != spec input width {spec.in_width}")
    act = _NONLINEARITIES[spec.nonlinearity]
    n_layers = len(spec.widths) - 1
    flat = x.reshape((-1, spec.in_width)) if x.ndim != 2 else x
    h = flat
    for i in range(n_layers):
        h = matmul(h, store[f"{prefix}.w{i}"]) + store[f"{prefix}.b{i}"]
        if i < n_layers - 1:
            h = act(h)
    if x.ndim != 2:
        h = h.reshape(x.shape[:-1] + (spec.out_width,))
    return h


# ----- attention ---------------------------------------------------------


def mha_init(store: ParameterStore, prefix: str, channels: int, rng: np.random.Generator) -> None:
    """Output projection of the multi-head attention (the only learned part here;
    query/key/value projections belong to the surrounding feature extractors)."""
    store.add(f"{prefix}.w_out", _fan_in_uniform(rng, channels, (channels, channels)))
    store.add(f"{prefix}.b_out", np.zeros(channels))


def multi_head_attention(
    store: ParameterStore,
    prefix: str,
    q,
    k,
    v,
    heads: int,
    return_weights: bool = False,
):
    """Scaled dot-product attention over `heads` channel slices.

    q: (..., T_q, C), k/v: (..., T_k, C). Per head of width d = C / heads the
    scores are q_h k_h^T / sqrt(d); rows are softmax-normalized, applied to
    v_h, heads concatenated and linearly projected back to C.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    channels = q.shape[-1]
    if channels % heads != 0:
        raise ValueError(f"channels {channels} not divisible by heads {heads}")
    if k.shape[-1] != channels or v.shape[-1] != channels:
        raise ValueError("q, k, v channel widths must match")
    d = channels // heads

    def split_heads(x: Tensor) -> Tensor:
        # (..., T, C) -> (..., H, T, d)
        x = x.reshape(x.shape[:-1] + (heads, d))
        return swapaxes(x, -2, -3)

    qh, kh, vh = split_heads(q), split_heads(k), split_heads(v)
    scores = matmul(qh, swapaxes(kh, -1, -2)) * (1.0 / np.sqrt(d))  # (..., H, Tq, Tk)
    weights = softmax(scores, axis=-1)
    ctx = matmul(weights, vh)  # (..., H, Tq, d)
    ctx = swapaxes(ctx, -2, -3)  # (..., Tq, H, d)
    ctx = ctx.reshape(ctx.shape[:-2] + (channels,))
    out = matmul(ctx, store[f"{prefix}.w_out"]) + store[f"{prefix}.b_out"]
    if return_weights:
        return out, weights
    return out


def positional_encoding(length: int, channels: int) -> np.ndarray:
    """Standard sinusoidal position codes, shape (length, channels)."""
    pos = np.arange(length)[:, None].astype(np.float64)
    i = np.arange(channels)[None, :].astype(np.float64)
    angle = pos / np.power(10000.0, 2.0 * (i // 2) / channels)
    pe = np.zeros((length, channels))
    pe[:, 0::2] = np.sin(angle[:, 0::2])
    pe[:, 1::2] = np.cos(angle[:, 1::2])
    return pe


# ----- layer norm ----------------------------------------------------------


def layer_norm_init(store: ParameterStore, prefix: str, channels: int) -> None:
    store.add(f"{prefix}.gain", np.ones(channels))
    store.add(f"{prefix}.bias", np.zeros(channels))


def layer_norm(store: ParameterStore, prefix: str, x, eps: float = 1e-5) -> Tensor:
    x = as_tensor(x)
    mu = tmean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = tmean(centered * centered, axis=-1, keepdims=True)
    normed = centered / sqrt(var + eps)
    return normed * store[f"{prefix}.gain"] + store[f"{prefix}.bias"]


# ----- optimizer ------------------------------------------------------------


class Adam:
    """Adam over a subset of a ParameterStore (deterministic update order)."""

    def __init__(
        self,
        store: ParameterStore,
        names: Iterable[str] | None = None,
        lr: float = 0.003,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.store = store
        self.names = sorted(names) if names is not None else sorted(store.names())
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = {n: np.zeros_like(store[n].data) for n in self.names}
        self._v = {n: np.zeros_like(store[n].data) for n in self.names}

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for n in self.names:
            p = self.store[n]
            g = p.grad
            if g is None:
                continue
            m = self._m[n]
            v = self._v[n]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


# ----- gradient verification -------------------------------------------------


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: ParameterStore,
    eps: float,
    names: Iterable[str] | None = None,
    samples_per_param: int = 4,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients of `loss_fn` against central differences.

    `loss_fn` must take no arguments, read parameters from `params`, and
    return a scalar Tensor. A sample of coordinates per parameter is
    perturbed by +/- eps; the worst relative error is returned.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = rng or np.random.default_rng(0)
    names = list(names) if names is not None else list(params.names())

    first = loss_fn()
    if first.size != 1:
        raise ValueError("loss_fn must return a scalar")
    second = loss_fn()
    if float(first.data) != float(second.data):
        raise NondeterministicLossError("loss_fn returned different values on repeat evaluation")

    params.zero_grad()
    out = loss_fn()
    out.backward()
    analytic = {n: params[n].grad.copy() for n in names}

    worst = 0.0
    for n in names:
        p = params[n]
        flat = p.data.reshape(-1)
        count = min(samples_per_param, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            hi = float(loss_fn().data)
            flat[c] = orig - eps
            lo = float(loss_fn().data)
            flat[c] = orig
            numeric = (hi - lo) / (2.0 * eps)
            a = float(analytic[n].reshape(-1)[c])
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
