"""Minimal reverse-mode numerical core: f64 parameters, LSTM cell, affine
layer, embeddings, stabilized softmax / cross-entropy, Adam, and a central
finite-difference gradient checker.

Gradients are hand-derived per layer. Every forward returns the cache its
backward needs; backwards accumulate into ``Parameter.grad``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class DimensionError(ValueError):
    """Input shapes do not match a layer's weights."""


class TrainingError(RuntimeError):
    """Optimization produced a non-finite value."""


INIT_RANGE = 0.08


def init_uniform(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Uniform init in [-0.08, 0.08], standard for small recurrent nets."""
    return rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)


@dataclass
class Parameter:
    """A named dense f64 array with an accumulated gradient of equal shape."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        elif self.grad.shape != self.value.shape:
            raise DimensionError(
                f"{self.name}: grad shape {self.grad.shape} != value shape {self.value.shape}"
            )

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stabilized softmax over a non-empty 1-D vector (max subtraction)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size == 0:
        raise ValueError("softmax expects a non-empty 1-D vector")
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / np.sum(e)


def cross_entropy(probs: np.ndarray, target: int) -> float:
    """-log probs[target] for a probability vector."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= target < probs.size:
        raise ValueError(f"target index {target} out of range for {probs.size} classes")
    return float(-np.log(probs[target]))


def log_sum_exp(logits: np.ndarray) -> float:
    m = float(np.max(logits))
    return m + float(np.log(np.sum(np.exp(logits - m))))


def softmax_cross_entropy(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Fused loss from raw logits: returns (loss, probs).

    loss = logsumexp(logits) - logits[target]; the gradient w.r.t. logits is
    probs - onehot(target), which callers scale by the upstream factor.
    """
    if not 0 <= target < logits.size:
        raise ValueError(f"target index {target} out of range for {logits.size} classes")
    m = float(np.max(logits))
    e = np.exp(logits - m)
    s = float(np.sum(e))
    loss = math.log(s) + m - float(logits[target])
    return loss, e / s


class Embedding:
    """Lookup table of learned row vectors."""

    def __init__(self, name: str, rows: int, dim: int, rng: np.random.Generator):
        self.table = Parameter(name, init_uniform(rng, rows, dim))
        self.dim = dim

    def vec(self, row: int) -> np.ndarray:
        return self.table.value[row]

    def add_grad(self, row: int, d: np.ndarray) -> None:
        self.table.grad[row] += d

    def parameters(self) -> list[Parameter]:
        return [self.table]


class Affine:
    """y = x @ w + b."""

    def __init__(self, name: str, in_size: int, out_size: int, rng: np.random.Generator):
        self.w = Parameter(f"{name}.w", init_uniform(rng, in_size, out_size))
        self.b = Parameter(f"{name}.b", init_uniform(rng, out_size))
        self.in_size = in_size
        self.out_size = out_size

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        if x.shape != (self.in_size,):
            raise DimensionError(f"{self.w.name}: input shape {x.shape}, expected ({self.in_size},)")
        return x @ self.w.value + self.b.value, (x,)

    def backward(self, cache: tuple, dy: np.ndarray) -> np.ndarray:
        (x,) = cache
        self.w.grad += np.outer(x, dy)
        self.b.grad += dy
        return self.w.value @ dy

    def parameters(self) -> list[Parameter]:
        return [self.w, self.b]


class LstmCell:
    """Single LSTM cell with packed gates [input | forget | output | candidate].

        z = x @ w_x + h_prev @ w_h + b
        i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
        c = f * c_prev + i * g
        h = o * tanh(c)
    """

    def __init__(self, name: str, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.w_x = Parameter(f"{name}.w_x", init_uniform(rng, input_size, 4 * hidden_size))
        self.w_h = Parameter(f"{name}.w_h", init_uniform(rng, hidden_size, 4 * hidden_size))
        self.b = Parameter(f"{name}.b", init_uniform(rng, 4 * hidden_size))

    def zero_state(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(self.hidden_size), np.zeros(self.hidden_size)

    def step(
        self, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, tuple]:
        h = self.hidden_size
        if x.shape != (self.input_size,):
            raise DimensionError(f"{self.w_x.name}: input shape {x.shape}, expected ({self.input_size},)")
        if h_prev.shape != (h,) or c_prev.shape != (h,):
            raise DimensionError(f"{self.w_h.name}: state shapes {h_prev.shape}/{c_prev.shape}, expected ({h},)")
        z = x @ self.w_x.value + h_prev @ self.w_h.value + self.b.value
        gates = sigmoid(z[: 3 * h])
        i = gates[:h]
        f = gates[h : 2 * h]
        o = gates[2 * h :]
        g = np.tanh(z[3 * h :])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h_new = o * tc
        return h_new, c, (x, h_prev, c_prev, i, f, g, o, tc)

    def gate_backward(self, cache: tuple, dh: np.ndarray, dc: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
        """Backward through the gate arithmetic only: returns (dz, dc_prev).

        Weight and input gradients follow from dz; sequence unrolls defer
        them so a whole sequence accumulates with two matrix products.
        """
        x, h_prev, c_prev, i, f, g, o, tc = cache
        do = dh * tc
        dc_total = dc + dh * o * (1.0 - tc * tc)
        dc_prev = dc_total * f
        h = self.hidden_size
        dz = np.empty(4 * h)
        dz[:h] = (dc_total * g) * i * (1.0 - i)
        dz[h : 2 * h] = (dc_total * c_prev) * f * (1.0 - f)
        dz[2 * h : 3 * h] = do * o * (1.0 - o)
        dz[3 * h :] = (dc_total * i) * (1.0 - g * g)
        return dz, dc_prev

    def backward(
        self, cache: tuple, dh: np.ndarray, dc: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        dz, dc_prev = self.gate_backward(cache, dh, dc)
        x, h_prev = cache[0], cache[1]
        self.w_x.grad += x[:, None] * dz
        self.w_h.grad += h_prev[:, None] * dz
        self.b.grad += dz
        dx = self.w_x.value @ dz
        dh_prev = self.w_h.value @ dz
        return dx, dh_prev, dc_prev

    def accumulate_sequence_grads(self, caches: list[tuple], dzs: np.ndarray) -> None:
        """Weight gradients for a full unroll: dzs stacks the per-step dz
        rows in any order matching ``caches``."""
        xs = np.stack([c[0] for c in caches])
        hs = np.stack([c[1] for c in caches])
        self.w_x.grad += xs.T @ dzs
        self.w_h.grad += hs.T @ dzs
        self.b.grad += dzs.sum(axis=0)

    def parameters(self) -> list[Parameter]:
        return [self.w_x, self.w_h, self.b]


class Adam:
    """Bias-corrected Adam over a fixed parameter list.

    ``step`` applies the update and zeroes every gradient it consumed.
    """

    def __init__(
        self,
        params: list[Parameter],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise TrainingError(f"non-finite gradient in parameter {p.name}")
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, p in enumerate(self.params):
            g = p.grad
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / b1c
            v_hat = self.v[k] / b2c
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.zero_grad()


def grad_check(loss_fn, params: list[Parameter], delta: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn()`` must deterministically run forward + backward from the
    current parameter values, accumulating into ``.grad``, and return the
    scalar loss. Near-zero coordinates are compared against an absolute
    floor of 1e-3 so rounding noise in the differences cannot dominate.
    """
    for p in params:
        p.zero_grad()
    loss_fn()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, grads in zip(params, analytic):
        flat = p.value.reshape(-1)
        gflat = grads.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + delta
            hi = loss_fn()
            flat[idx] = orig - delta
            lo = loss_fn()
            flat[idx] = orig
            numeric = (hi - lo) / (2.0 * delta)
            a = gflat[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-3)
            if err > worst:
                worst = err
    for p in params:
        p.zero_grad()
    return worst


def entropy(probs: np.ndarray) -> float:
    p = probs[probs > 0]
    return float(-np.sum(p * np.log(p)))


def all_finite(*arrays: np.ndarray) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays)
