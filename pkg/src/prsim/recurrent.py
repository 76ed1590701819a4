"""
Minimal recurrent network engine: dense, RNN, LSTM and GRU layers.

Arrays are time-major, ``(T, B, features)``. Networks default to float64 so
that finite-difference gradient checks are meaningful; ``dtype=np.float32``
is available for large training runs.

Gate parameters are stored stacked along the first axis and can be read
back by name through :meth:`Layer.gate`:

* LSTM: ``i, o, f, g`` (input, output, forget gate, candidate)
* GRU:  ``z, r, s`` (update gate, reset gate, candidate state)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ContractViolation,
    InvalidArgumentError,
    InvalidStateError,
    TrainingDivergenceError,
)

FORMAT_VERSION = 1

KINDS = ("dense", "rnn", "lstm", "gru")
ACTIVATIONS = ("tanh", "sigmoid", "identity")
GATES = {"lstm": ("i", "o", "f", "g"), "gru": ("z", "r", "s"), "rnn": ("",)}


def sigmoid(x):
    # tanh form never overflows and is much faster than exp-based variants
    return 0.5 * np.tanh(0.5 * x) + 0.5


def _activate(name, x):
    if name == "tanh":
        return np.tanh(x)
    if name == "sigmoid":
        return sigmoid(x)
    return x


def _activation_grad(name, y):
    """Derivative expressed through the activation output ``y``."""
    if name == "tanh":
        return 1.0 - y * y
    if name == "sigmoid":
        return y * (1.0 - y)
    return np.ones_like(y)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    input_size: int
    output_size: int
    activation: str = "tanh"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown layer kind {self.kind!r}")
        if self.input_size < 1 or self.output_size < 1:
            raise InvalidArgumentError("layer sizes must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"unknown activation {self.activation!r}")
        if self.kind != "dense" and self.activation != "tanh":
            raise InvalidArgumentError("recurrent layers use fixed tanh/sigmoid activations")

    @property
    def n_blocks(self) -> int:
        """Number of stacked affine blocks (4 for LSTM, 3 for GRU, 1 otherwise)."""
        return {"dense": 1, "rnn": 1, "lstm": 4, "gru": 3}[self.kind]

    @property
    def param_count(self) -> int:
        n, m = self.output_size, self.input_size
        if self.kind == "dense":
            return n * (m + 1)
        return self.n_blocks * n * (m + n + 1)


class Layer:
    """Base class. Subclasses hold ``params`` (name -> array) and implement
    ``forward``/``backward`` over whole sequences."""

    param_names: tuple[str, ...] = ()

    def __init__(self, spec: LayerSpec, rng: np.random.Generator | None = None,
                 dtype=np.float64):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.params = {name: np.zeros(shape, dtype=self.dtype)
                       for name, shape in self._shapes().items()}
        if rng is not None:
            bound = 1.0 / math.sqrt(spec.input_size)
            for name in self.param_names:
                p = self.params[name]
                p[...] = rng.uniform(-bound, bound, size=p.shape)

    def _shapes(self) -> dict[str, tuple[int, ...]]:
        k, n, m = self.spec.n_blocks, self.spec.output_size, self.spec.input_size
        shapes = {"W": (k * n, m), "b": (k * n,)}
        if self.spec.kind != "dense":
            shapes["U"] = (k * n, n)
        return {name: shapes[name] for name in self.param_names}

    def gate(self, param: str, gate: str) -> np.ndarray:
        """View of one gate's block of a stacked parameter, e.g. ``gate("W", "f")``."""
        names = GATES.get(self.spec.kind, ("",))
        if gate not in names:
            raise InvalidArgumentError(f"{self.spec.kind} layer has no gate {gate!r}")
        n = self.spec.output_size
        j = names.index(gate)
        return self.params[param][j * n:(j + 1) * n]

    def init_state(self, batch: int) -> tuple[np.ndarray, ...]:
        return ()

    def _zeros(self, batch):
        return np.zeros((batch, self.spec.output_size), dtype=self.dtype)

    def _check_input(self, x):
        if x.ndim != 3 or x.shape[2] != self.spec.input_size:
            raise ContractViolation(
                f"{self.spec.kind} layer expects (T, B, {self.spec.input_size}), got {x.shape}")
        return x.astype(self.dtype, copy=False)

    def _check_state(self, state, batch):
        for s in state:
            if s.shape != (batch, self.spec.output_size):
                raise ContractViolation(
                    f"state shape {s.shape} does not match ({batch}, {self.spec.output_size})")

    def forward(self, x, state):
        raise NotImplementedError

    def backward(self, dy, cache):
        raise NotImplementedError


class Dense(Layer):
    param_names = ("W", "b")

    def forward(self, x, state=()):
        x = self._check_input(x)
        y = _activate(self.spec.activation, x @ self.params["W"].T + self.params["b"])
        return y, (), (x, y)

    def backward(self, dy, cache):
        x, y = cache
        da = dy * _activation_grad(self.spec.activation, y)
        flat_da = da.reshape(-1, da.shape[-1])
        grads = {"W": flat_da.T @ x.reshape(-1, x.shape[-1]), "b": flat_da.sum(axis=0)}
        return da @ self.params["W"], grads


class RNN(Layer):
    param_names = ("W", "U", "b")

    def init_state(self, batch):
        return (self._zeros(batch),)

    def forward(self, x, state):
        x = self._check_input(x)
        self._check_state(state, x.shape[1])
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        xw = x @ W.T + b
        hs = np.empty(x.shape[:2] + (self.spec.output_size,), dtype=self.dtype)
        h = state[0]
        for t in range(x.shape[0]):
            h = np.tanh(xw[t] + h @ U.T)
            hs[t] = h
        return hs, (h,), (x, state[0], hs)

    def backward(self, dy, cache):
        x, h0, hs = cache
        U = self.params["U"]
        da = np.empty_like(hs)
        dh_next = np.zeros_like(h0)
        for t in range(x.shape[0] - 1, -1, -1):
            a = (dy[t] + dh_next) * (1.0 - hs[t] * hs[t])
            da[t] = a
            dh_next = a @ U
        h_prev = np.concatenate([h0[None], hs[:-1]], axis=0)
        n = self.spec.output_size
        flat = da.reshape(-1, n)
        grads = {
            "W": flat.T @ x.reshape(-1, x.shape[-1]),
            "U": flat.T @ h_prev.reshape(-1, n),
            "b": flat.sum(axis=0),
        }
        return da @ self.params["W"], grads


class LSTM(Layer):
    param_names = ("W", "U", "b")

    def init_state(self, batch):
        return (self._zeros(batch), self._zeros(batch))

    def _gate_consts(self):
        # sigmoid(x) = 0.5 tanh(x / 2) + 0.5 lets all four blocks share one tanh
        n = self.spec.output_size
        half = np.ones(4 * n, dtype=self.dtype)
        half[:3 * n] = 0.5
        shift = np.zeros(4 * n, dtype=self.dtype)
        shift[:3 * n] = 0.5
        return half, shift

    def forward(self, x, state):
        x = self._check_input(x)
        self._check_state(state, x.shape[1])
        n = self.spec.output_size
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        half, shift = self._gate_consts()
        xw = (x @ W.T + b) * half
        UT = np.ascontiguousarray((U * half[:, None]).T)
        T, B = x.shape[:2]
        acts = np.empty((T, B, 4 * n), dtype=self.dtype)
        cs = np.empty((T, B, n), dtype=self.dtype)
        tcs = np.empty((T, B, n), dtype=self.dtype)
        ss = np.empty((T, B, n), dtype=self.dtype)
        s, c = state
        for t in range(T):
            gates = acts[t]
            np.tanh(xw[t] + s @ UT, out=gates)
            gates *= half
            gates += shift
            i, o, f, g = gates[:, :n], gates[:, n:2 * n], gates[:, 2 * n:3 * n], gates[:, 3 * n:]
            c = f * c + i * g
            tc = np.tanh(c)
            s = o * tc
            cs[t], tcs[t], ss[t] = c, tc, s
        return ss, (s, c), (x, state, acts, cs, tcs, ss)

    def backward(self, dy, cache):
        x, (s0, c0), acts, cs, tcs, ss = cache
        n = self.spec.output_size
        U = self.params["U"]
        T = x.shape[0]
        # d(activation)/d(pre-activation): a(1-a) for gates, 1-a^2 for the candidate
        sig = np.zeros(4 * n, dtype=self.dtype)
        sig[:3 * n] = 1.0
        deriv = acts * (sig - acts) + (1.0 - sig)
        dtc = acts[:, :, n:2 * n] * (1.0 - tcs * tcs)
        c_prev_all = np.concatenate([c0[None], cs[:-1]], axis=0)
        dz = np.empty_like(acts)
        ds_next = np.zeros_like(s0)
        dc_next = np.zeros_like(c0)
        for t in range(T - 1, -1, -1):
            gates = acts[t]
            i, f, g = gates[:, :n], gates[:, 2 * n:3 * n], gates[:, 3 * n:]
            ds = dy[t] + ds_next
            dc = dc_next + ds * dtc[t]
            d = np.concatenate((dc * g, ds * tcs[t], dc * c_prev_all[t], dc * i), axis=1)
            d *= deriv[t]
            dz[t] = d
            dc_next = dc * f
            ds_next = d @ U
        s_prev = np.concatenate([s0[None], ss[:-1]], axis=0)
        flat = dz.reshape(-1, 4 * n)
        grads = {
            "W": flat.T @ x.reshape(-1, x.shape[-1]),
            "U": flat.T @ s_prev.reshape(-1, n),
            "b": flat.sum(axis=0),
        }
        return dz @ self.params["W"], grads


class GRU(Layer):
    param_names = ("W", "U", "b")

    def init_state(self, batch):
        return (self._zeros(batch),)

    def forward(self, x, state):
        x = self._check_input(x)
        self._check_state(state, x.shape[1])
        n = self.spec.output_size
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        xw = x @ W.T + b
        xw_zr = np.ascontiguousarray(xw[:, :, :2 * n]) * 0.5
        xw_s = np.ascontiguousarray(xw[:, :, 2 * n:])
        U_zrT = np.ascontiguousarray(U[:2 * n].T) * 0.5
        U_sT = np.ascontiguousarray(U[2 * n:].T)
        T, B = x.shape[:2]
        zr = np.empty((T, B, 2 * n), dtype=self.dtype)
        cand = np.empty((T, B, n), dtype=self.dtype)
        ss = np.empty((T, B, n), dtype=self.dtype)
        s = state[0]
        for t in range(T):
            gates = zr[t]
            np.tanh(xw_zr[t] + s @ U_zrT, out=gates)
            gates *= 0.5
            gates += 0.5
            z, r = gates[:, :n], gates[:, n:]
            cnd = np.tanh(xw_s[t] + (r * s) @ U_sT)
            cand[t] = cnd
            s = s + z * (cnd - s)
            ss[t] = s
        return ss, (s,), (x, state[0], zr, cand, ss)

    def backward(self, dy, cache):
        x, s0, zr, cand, ss = cache
        n = self.spec.output_size
        U = self.params["U"]
        U_zr, U_s = U[:2 * n], U[2 * n:]
        T = x.shape[0]
        da = np.empty((T,) + s0.shape[:1] + (3 * n,), dtype=self.dtype)
        ds_next = np.zeros_like(s0)
        s_prev_all = np.concatenate([s0[None], ss[:-1]], axis=0)
        zr_deriv = zr * (1.0 - zr)
        cand_deriv = 1.0 - cand * cand
        for t in range(T - 1, -1, -1):
            z, r = zr[t, :, :n], zr[t, :, n:]
            s_prev = s_prev_all[t]
            ds = dy[t] + ds_next
            dcand = ds * z * cand_deriv[t]
            drs = dcand @ U_s
            dzr = np.concatenate((ds * (cand[t] - s_prev), drs * s_prev), axis=1)
            dzr *= zr_deriv[t]
            d = da[t]
            d[:, :2 * n] = dzr
            d[:, 2 * n:] = dcand
            ds_next = ds * (1.0 - z) + drs * r + dzr @ U_zr
        flat = da.reshape(-1, 3 * n)
        sp = s_prev_all.reshape(-1, n)
        rs = (zr[:, :, n:] * s_prev_all).reshape(-1, n)
        dU = np.empty_like(U)
        dU[:2 * n] = flat[:, :2 * n].T @ sp
        dU[2 * n:] = flat[:, 2 * n:].T @ rs
        grads = {"W": flat.T @ x.reshape(-1, x.shape[-1]), "U": dU, "b": flat.sum(axis=0)}
        return da @ self.params["W"], grads


_LAYER_TYPES = {"dense": Dense, "rnn": RNN, "lstm": LSTM, "gru": GRU}


def make_layer(spec: LayerSpec, rng: np.random.Generator | None = None,
               dtype=np.float64) -> Layer:
    return _LAYER_TYPES[spec.kind](spec, rng, dtype)


class RecurrentNet:
    """A chain of layers with per-layer recurrent state.

    ``state`` holds the state left behind by the last :meth:`forward` or
    :meth:`step` call; :meth:`reset_state` clears it.
    """

    def __init__(self, specs: Sequence[LayerSpec], seed: int | None = 0, dtype=np.float64):
        specs = list(specs)
        if not specs:
            raise InvalidArgumentError("a network needs at least one layer")
        for a, b in zip(specs, specs[1:]):
            if a.output_size != b.input_size:
                raise InvalidArgumentError(
                    f"layer chain mismatch: {a.output_size} -> {b.input_size}")
        rng = None if seed is None else np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)
        self.layers = [make_layer(s, rng, self.dtype) for s in specs]
        self.state: list[tuple[np.ndarray, ...]] | None = None

    @property
    def specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.layers]

    @property
    def input_size(self) -> int:
        return self.layers[0].spec.input_size

    @property
    def output_size(self) -> int:
        return self.layers[-1].spec.output_size

    @property
    def param_count(self) -> int:
        return sum(s.param_count for s in self.specs)

    def parameters(self) -> list[np.ndarray]:
        return [layer.params[name] for layer in self.layers for name in layer.param_names]

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.param_count:
            raise ContractViolation(f"expected {self.param_count} values, got {flat.size}")
        offset = 0
        for p in self.parameters():
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.parameters())

    def reset_state(self) -> None:
        self.state = None

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 1:
            x = x[:, None]
        squeeze = x.ndim == 2
        if squeeze:
            x = x[:, None, :]
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ContractViolation(
                f"input must be (T, {self.input_size}) or (T, B, {self.input_size}), got {x.shape}")
        return x, squeeze

    def _run(self, x, state):
        caches = []
        new_state = []
        h = x
        for layer, st in zip(self.layers, state):
            h, st_out, cache = layer.forward(h, st)
            caches.append(cache)
            new_state.append(st_out)
        return h, new_state, caches

    def forward(self, x) -> np.ndarray:
        """Run a whole sequence from a zero state; the final state is kept."""
        x, squeeze = self._as_batch(x)
        if x.shape[0] == 0:
            raise InvalidArgumentError("input sequence is empty")
        state = [layer.init_state(x.shape[1]) for layer in self.layers]
        y, self.state, _ = self._run(x, state)
        return y[:, 0, :] if squeeze else y

    def step(self, x_t) -> np.ndarray:
        """Advance one time step from the stored state (zero state if none)."""
        x_t = np.asarray(x_t, dtype=self.dtype)
        single = x_t.ndim <= 1
        x = np.atleast_2d(x_t.reshape(1, -1) if single else x_t)[None]
        if self.state is None or self.state and any(
                s.shape[0] != x.shape[1] for st in self.state for s in st):
            self.state = [layer.init_state(x.shape[1]) for layer in self.layers]
        y, self.state, _ = self._run(x, self.state)
        return y[0, 0] if single else y[0]

    def loss_and_gradients(self, x, targets, warmup: int = 0):
        """MSE loss and its gradient for every parameter.

        ``targets`` is either ``(T, B, out)`` (a target at every step) or
        ``(B, out)`` (a target at the last step only). The loss is the mean
        over every target element; with per-step targets the first
        ``warmup`` steps only build up state and are left out of the loss.
        """
        x, squeeze = self._as_batch(x)
        targets = np.asarray(targets, dtype=self.dtype)
        T, B = x.shape[:2]
        if squeeze:
            # unbatched: (T, out) or (T,) per step, (out,) last step only
            if targets.ndim == 1 and self.output_size == 1 and targets.size == T and T > 1:
                targets = targets[:, None]
            targets = targets[:, None, :] if targets.ndim == 2 else targets[None, :]
        per_step = targets.ndim == 3
        expected = (T, B, self.output_size) if per_step else (B, self.output_size)
        if targets.shape != expected:
            raise InvalidArgumentError(f"target shape {targets.shape} does not match {expected}")
        state = [layer.init_state(B) for layer in self.layers]
        y, _, caches = self._run(x, state)
        dy = np.zeros_like(y)
        if per_step:
            if not 0 <= warmup < T:
                raise InvalidArgumentError(f"warmup must lie in [0, {T})")
            err = y[warmup:] - targets[warmup:]
            dy[warmup:] = 2.0 * err / err.size
        else:
            err = y[-1] - targets
            dy[-1] = 2.0 * err / err.size
        loss = float(np.mean(err * err, dtype=np.float64))
        grads = []
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy, g = layer.backward(dy, cache)
            grads.append([g[name] for name in layer.param_names])
        flat_grads = [g for layer_grads in reversed(grads) for g in layer_grads]
        return loss, flat_grads


def forward_rnn_layer(layer: Layer, d_t, prev_output):
    """One simple-RNN step: ``tanh(W d_t + U d_{t-1} + b)``."""
    if layer.spec.kind != "rnn":
        raise ContractViolation("not an rnn layer")
    d_t, prev_output = _vec(d_t), _vec(prev_output)
    y, _, _ = layer.forward(d_t[None, None], (prev_output[None],))
    return y[0, 0]


def forward_lstm_layer(layer: Layer, d_t, state):
    """One LSTM step. ``state`` is ``(s_prev, c_prev)``; returns ``(output, (s, c))``."""
    if layer.spec.kind != "lstm":
        raise ContractViolation("not an lstm layer")
    s_prev, c_prev = (_vec(v) for v in state)
    y, (s, c), _ = layer.forward(_vec(d_t)[None, None], (s_prev[None], c_prev[None]))
    return y[0, 0], (s[0], c[0])


def forward_gru_layer(layer: Layer, d_t, state):
    """One GRU step. Returns ``(output, new_state)``; the output is the state."""
    if layer.spec.kind != "gru":
        raise ContractViolation("not a gru layer")
    y, (s,), _ = layer.forward(_vec(d_t)[None, None], (_vec(state)[None],))
    return y[0, 0], s[0]


def _vec(v):
    return np.atleast_1d(np.asarray(v, dtype=np.float64))


def forward_net(net: RecurrentNet, sequence) -> np.ndarray:
    return net.forward(sequence)


def bptt_gradients(net: RecurrentNet, inputs, targets, bptt_window: int | None = None):
    """Gradients of the MSE loss with respect to every parameter, in
    :meth:`RecurrentNet.parameters` order."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.shape[0] == 0:
        raise InvalidArgumentError("input sequence is empty")
    if targets.ndim == inputs.ndim and targets.shape[0] != inputs.shape[0]:
        raise InvalidArgumentError(
            f"input length {inputs.shape[0]} != target length {targets.shape[0]}")
    if bptt_window is not None and inputs.shape[0] > bptt_window:
        raise InvalidArgumentError(
            f"sequence length {inputs.shape[0]} exceeds bptt window {bptt_window}")
    _, grads = net.loss_and_gradients(inputs, targets)
    return grads


class Adam:
    """Adam with bias-corrected moments. One instance per parameter list."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(grads):
            raise ContractViolation("parameter and gradient lists differ in length")
        for p, g in zip(params, grads):
            if p.shape != g.shape:
                raise ContractViolation(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if not np.isfinite(g).all():
                raise TrainingDivergenceError("non-finite gradient")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params, grads, optimizer: Adam):
    optimizer.step(params, grads)
    return params


@dataclass
class TrainConfig:
    batch_size: int = 256
    epochs: int = 10
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    bptt_window: int = 32
    warmup_steps: int = 0
    seed: int = 0
    # cosine decay from lr to lr * final_lr_fraction over the whole run
    final_lr_fraction: float = 1.0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.bptt_window < 1:
            raise InvalidArgumentError("batch_size, epochs and bptt_window must be >= 1")
        if not 0 < self.final_lr_fraction <= 1:
            raise InvalidArgumentError("final_lr_fraction must lie in (0, 1]")

    def lr_at(self, step: int, total: int) -> float:
        frac = step / max(total - 1, 1)
        lo = self.lr * self.final_lr_fraction
        return lo + 0.5 * (self.lr - lo) * (1.0 + math.cos(math.pi * frac))


@dataclass
class TrainResult:
    net: RecurrentNet
    loss_history: list[float] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)


def train(net: RecurrentNet, inputs, targets, config: TrainConfig,
          batch_fn=None) -> TrainResult:
    """Mini-batch Adam training.

    ``inputs`` is ``(N, T, in)``; ``targets`` is ``(N, T, out)`` for a
    target at every step or ``(N, out)`` for the last step only. Samples
    are reshuffled every epoch from ``config.seed``.

    ``batch_fn(indices) -> (x, y)`` may replace the arrays for datasets
    too large to materialise; ``inputs`` then only needs ``len()``.
    """
    n = len(inputs)
    if n == 0:
        raise InvalidArgumentError("dataset is empty")
    if batch_fn is None:
        inputs = np.asarray(inputs, dtype=net.dtype)
        targets = np.asarray(targets, dtype=net.dtype)
        if inputs.ndim == 2:
            inputs = inputs[..., None]
        if targets.ndim == 1:
            targets = targets[:, None]
        if inputs.shape[1] > config.bptt_window:
            raise InvalidArgumentError(
                f"sequence length {inputs.shape[1]} exceeds bptt window {config.bptt_window}")

        def batch_fn(idx):
            x = inputs[idx].transpose(1, 0, 2)
            y = targets[idx]
            return x, (y.transpose(1, 0, 2) if y.ndim == 3 else y)

    rng = np.random.default_rng(config.seed)
    opt = Adam(config.lr, config.beta1, config.beta2, config.eps)
    params = net.parameters()
    result = TrainResult(net)
    total_steps = config.epochs * math.ceil(n / config.batch_size)
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, config.batch_size):
            x, y = batch_fn(order[start:start + config.batch_size])
            loss, grads = net.loss_and_gradients(
                x, y, config.warmup_steps if y.ndim == 3 else 0)
            if not math.isfinite(loss):
                raise TrainingDivergenceError("loss became non-finite")
            opt.lr = config.lr_at(step, total_steps)
            step += 1
            opt.step(params, grads)
            result.loss_history.append(loss)
            total += loss * x.shape[1]
            count += x.shape[1]
        result.epoch_losses.append(total / count)
    net.reset_state()
    return result


def save_net(net: RecurrentNet, path) -> None:
    """Write layer specs and little-endian parameters to an ``.npz``."""
    dtype = net.dtype.newbyteorder("<")
    header = {
        "format_version": FORMAT_VERSION,
        "byte_order": "little",
        "dtype": net.dtype.name,
        "layers": [
            {"kind": s.kind, "input_size": s.input_size, "output_size": s.output_size,
             "activation": s.activation}
            for s in net.specs
        ],
    }
    arrays = {}
    for i, layer in enumerate(net.layers):
        for name in layer.param_names:
            arrays[f"layer{i}_{name}"] = layer.params[name].astype(dtype, copy=False)
    with open(Path(path), "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_net(path) -> RecurrentNet:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format_version") != FORMAT_VERSION:
            raise InvalidStateError(f"unsupported model format {header.get('format_version')}")
        specs = [LayerSpec(**entry) for entry in header["layers"]]
        net = RecurrentNet(specs, seed=None, dtype=header["dtype"])
        for i, layer in enumerate(net.layers):
            for name in layer.param_names:
                layer.params[name][...] = data[f"layer{i}_{name}"]
    return net
