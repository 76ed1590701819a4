"""Independent reference implementations used only by the tests."""

import math

import numpy as np
from scipy import integrate


def j0_quad(x):
    """J0 from its integral representation (1/pi) int_0^pi cos(x sin t) dt."""
    val, _ = integrate.quad(lambda t: math.cos(x * math.sin(t)), 0.0, math.pi,
                            limit=200, epsabs=1e-13, epsrel=1e-13)
    return val / math.pi


def j0_series(x, terms=80):
    """Power series sum_k (-1)^k (x/2)^{2k} / (k!)^2; fine for |x| < 20."""
    total, term = 0.0, 1.0
    q = (x / 2.0) ** 2
    for k in range(terms):
        total += term
        term *= -q / ((k + 1) ** 2)
    return total


def bisect(f, lo, hi, tol=1e-12):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def dual_hop_outage(threshold, sr_mean, rd_mean):
    """Single-relay DF outage with Rayleigh hops."""
    return 1.0 - math.exp(-threshold / sr_mean) * math.exp(-threshold / rd_mean)


def central_difference(f, theta, h=1e-5):
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        grad[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return grad


def lstm_reference(x, W, U, b, s, c):
    """Per-gate LSTM step written out directly, gate order i, o, f, g."""
    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))
    n = len(s)
    pre = W @ x + U @ s + b
    i, o, f = sig(pre[:n]), sig(pre[n:2 * n]), sig(pre[2 * n:3 * n])
    g = np.tanh(pre[3 * n:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def gru_reference(x, W, U, b, s):
    """Per-gate GRU step, gate order z, r, s."""
    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))
    n = len(s)
    z = sig(W[:n] @ x + U[:n] @ s + b[:n])
    r = sig(W[n:2 * n] @ x + U[n:2 * n] @ s + b[n:2 * n])
    cand = np.tanh(W[2 * n:] @ x + U[2 * n:] @ (r * s) + b[2 * n:])
    return (1 - z) * s + z * cand


def random_small_net(kind, rng, max_params=50):
    """A net around one ``kind`` layer with at most ``max_params`` parameters,
    plus random inputs and per-step targets."""
    from prsim.recurrent import LayerSpec, RecurrentNet

    while True:
        n_in = int(rng.integers(1, 4))
        n_h = int(rng.integers(1, 4))
        if kind == "dense":
            specs = [LayerSpec("dense", n_in, n_h, str(rng.choice(["tanh", "sigmoid", "identity"])))]
        else:
            specs = [LayerSpec(kind, n_in, n_h), LayerSpec("dense", n_h, 1, "identity")]
        if sum(s.param_count for s in specs) <= max_params:
            break
    net = RecurrentNet(specs, seed=int(rng.integers(1 << 31)))
    # push parameters away from zero so every gate contributes
    net.set_flat(rng.uniform(-1.0, 1.0, net.param_count))
    T, B = int(rng.integers(2, 6)), int(rng.integers(1, 4))
    x = rng.normal(size=(T, B, n_in))
    y = rng.normal(size=(T, B, net.output_size))
    return net, x, y


def gradient_relative_error(net, x, y, h=1e-5):
    """max |analytic - numeric| / max(|analytic| + |numeric|, 1e-8) over parameters."""
    theta = net.get_flat()
    _, grads = net.loss_and_gradients(x, y)
    analytic = np.concatenate([g.ravel() for g in grads])

    def loss(t):
        net.set_flat(t)
        value, _ = net.loss_and_gradients(x, y)
        return value

    numeric = central_difference(loss, theta, h)
    net.set_flat(theta)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
