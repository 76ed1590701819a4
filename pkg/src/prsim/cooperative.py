"""
Dual-hop decode-and-forward relaying with opportunistic relay selection.

Four schemes share one selection core:

* ``perfect``: best relay by the actual relay-destination SNR
* ``ors``: best relay by outdated CSI
* ``prs``: best relay by predicted CSI
* ``ostc``: best two relays by outdated CSI, Alamouti-coded, sharing the
  relay-phase power equally

The relay-destination SNRs passed around here already include the relay
transmit power, i.e. ``|h|^2 P_k / sigma_n^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .fading import complex_normal, jakes_correlation

SCHEMES = ("perfect", "ors", "prs", "ostc")
MODES = ("statistical", "timeseries")
CHUNK_TRIALS = 1 << 16


def snr_threshold(target_rate: float) -> float:
    """Per-hop SNR needed to carry ``2 R`` in one half-duplex phase."""
    return 2.0 ** (2.0 * target_rate) - 1.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class NetworkScenario:
    relay_count: int = 8
    target_rate: float = 1.0
    snr_db: float = 20.0
    source_fraction: float = 0.5
    doppler_hz: float = 100.0
    delay_s: float = 0.003
    scheme: str = "ors"

    def __post_init__(self):
        if self.relay_count < 1:
            raise ConfigurationError("relay_count must be >= 1")
        if not self.target_rate > 0:
            raise ConfigurationError("target_rate must be > 0")
        if not 0 < self.source_fraction < 1:
            raise ConfigurationError("source_fraction must lie in (0, 1)")
        if self.doppler_hz < 0 or self.delay_s < 0:
            raise ConfigurationError("doppler_hz and delay_s must be >= 0")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")

    @property
    def snr(self) -> float:
        """Total transmit SNR P / sigma_n^2 (linear)."""
        return float(db_to_linear(self.snr_db))

    @property
    def sr_mean_snr(self) -> float:
        return self.source_fraction * self.snr

    @property
    def rd_mean_snr(self) -> float:
        return (1.0 - self.source_fraction) * self.snr

    @property
    def threshold(self) -> float:
        return snr_threshold(self.target_rate)

    @property
    def outdated_rho(self) -> float:
        return jakes_correlation(self.doppler_hz, self.delay_s)


@dataclass
class FrameOutcome:
    decoding_subset: tuple[int, ...]
    selected: tuple[int, ...]
    e2e_snr: float
    rate: float
    outage: bool


def decoding_subset(sr_snrs: Sequence[float], target_rate: float) -> tuple[int, ...]:
    """Relays whose source-relay SNR supports rate ``2 R`` (boundary inclusive)."""
    sr = np.asarray(sr_snrs, dtype=float)
    if np.any(sr < 0):
        raise InvalidArgumentError("SNRs must be non-negative")
    return tuple(int(k) for k in np.flatnonzero(sr >= snr_threshold(target_rate)))


def _ranked(ds, snrs, count):
    snrs = np.asarray(snrs, dtype=float)
    # stable sort on -snr keeps the lowest index first among ties
    members = sorted(ds, key=lambda k: (-snrs[k], k))
    return tuple(members[:count])


def select_ors(ds: Sequence[int], outdated_snrs: Sequence[float]) -> int | None:
    """Best relay by outdated SNR; ``None`` when the decoding subset is empty."""
    best = _ranked(ds, outdated_snrs, 1)
    return best[0] if best else None


def select_prs(ds: Sequence[int], predicted_snrs: Sequence[float]) -> int | None:
    """Best relay by predicted SNR; ``None`` when the decoding subset is empty."""
    return select_ors(ds, predicted_snrs)


def select_ostc(ds: Sequence[int], outdated_snrs: Sequence[float]) -> tuple[int, ...]:
    """Strongest two relays, or a single relay when only one decoded."""
    return _ranked(ds, outdated_snrs, 2)


def e2e_rate(scheme: str, selected: Sequence[int], actual_rd_snrs: Sequence[float],
             target_rate: float) -> tuple[float, bool]:
    """End-to-end rate (bps/Hz, half-duplex) and outage flag for one frame."""
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    selected = tuple(selected)
    if not selected:
        return 0.0, True
    if len(selected) > 2 or (len(selected) == 2 and scheme != "ostc"):
        raise InvalidArgumentError(f"{scheme} cannot use relays {selected}")
    actual = np.asarray(actual_rd_snrs, dtype=float)
    snr = float(np.mean(actual[list(selected)]))
    rate = 0.5 * math.log2(1.0 + snr)
    return rate, snr < snr_threshold(target_rate)


def run_frame(scheme: str, sr_snrs, actual_rd_snrs, target_rate: float,
              outdated_rd_snrs=None, predicted_rd_snrs=None) -> FrameOutcome:
    """Reference single-frame path; the Monte-Carlo code vectorises the same rules."""
    ds = decoding_subset(sr_snrs, target_rate)
    if scheme == "perfect":
        sel = select_ors(ds, actual_rd_snrs)
        selected = () if sel is None else (sel,)
    elif scheme == "ors":
        sel = select_ors(ds, outdated_rd_snrs)
        selected = () if sel is None else (sel,)
    elif scheme == "prs":
        sel = select_prs(ds, predicted_rd_snrs)
        selected = () if sel is None else (sel,)
    elif scheme == "ostc":
        selected = select_ostc(ds, outdated_rd_snrs)
    else:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    rate, outage = e2e_rate(scheme, selected, actual_rd_snrs, target_rate)
    snr = float(np.mean(np.asarray(actual_rd_snrs, float)[list(selected)])) if selected else 0.0
    return FrameOutcome(ds, selected, snr, rate, outage)


def evaluate_frames(scheme: str, sr, proxy, actual, threshold: float):
    """Vectorised selection over ``(n, K)`` SNR arrays.

    ``proxy`` is what the scheme selects on (ignored for ``perfect``).
    Returns ``(rate, outage, e2e_snr, selected)`` where ``selected`` is
    ``(n, 2)`` with ``-1`` for unused slots.
    """
    sr, actual = np.asarray(sr, float), np.asarray(actual, float)
    proxy = actual if scheme == "perfect" else np.asarray(proxy, float)
    n = sr.shape[0]
    rows = np.arange(n)
    in_ds = sr >= threshold
    ds_size = in_ds.sum(axis=1)
    masked = np.where(in_ds, proxy, -np.inf)
    best = np.argmax(masked, axis=1)
    snr = actual[rows, best]
    selected = np.full((n, 2), -1, dtype=np.int64)
    selected[:, 0] = np.where(ds_size > 0, best, -1)
    if scheme == "ostc":
        masked[rows, best] = -np.inf
        second = np.argmax(masked, axis=1)
        pair = ds_size >= 2
        snr = np.where(pair, 0.5 * (snr + actual[rows, second]), snr)
        selected[:, 1] = np.where(pair, second, -1)
    empty = ds_size == 0
    snr = np.where(empty, 0.0, snr)
    rate = 0.5 * np.log2(1.0 + snr)
    outage = empty | (snr < threshold)
    return rate, outage, snr, selected


@dataclass
class MonteCarloResult:
    scheme: str
    mode: str
    trials: int
    outage_prob: float
    capacity: float
    outage_stderr: float
    capacity_stderr: float
    rho: float | None = None
    extra: dict = field(default_factory=dict)


class _Accumulator:
    """Chunked sums reduced in a fixed order."""

    def __init__(self):
        self.n = 0
        self.outages = 0
        self.rate_sum = 0.0
        self.rate_sq = 0.0

    def add(self, rate, outage):
        self.n += len(rate)
        self.outages += int(outage.sum())
        self.rate_sum += float(rate.sum())
        self.rate_sq += float(np.dot(rate, rate))

    def result(self, scheme, mode, rho):
        p = self.outages / self.n
        cap = self.rate_sum / self.n
        var = max(self.rate_sq / self.n - cap * cap, 0.0)
        return MonteCarloResult(scheme, mode, self.n, p, cap,
                                math.sqrt(p * (1 - p) / self.n), math.sqrt(var / self.n), rho)


def _scheme_rhos(scenario: NetworkScenario, schemes, rho_p):
    rhos = {}
    for s in schemes:
        if s not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {s!r}")
        if s == "perfect":
            rhos[s] = 1.0
        elif s == "prs":
            if rho_p is None:
                raise ConfigurationError("statistical PRS needs the predictor correlation rho_p")
            if not 0 <= rho_p <= 1:
                raise ConfigurationError("rho_p must lie in [0, 1]")
            rhos[s] = float(rho_p)
        else:
            rhos[s] = scenario.outdated_rho
    return rhos


def simulate_statistical(scenario: NetworkScenario, trials: int, seed: int = 0,
                         schemes: Sequence[str] | None = None,
                         rho_p: float | None = None) -> dict[str, MonteCarloResult]:
    """Monte-Carlo over i.i.d. frames with common random numbers across schemes.

    Every frame draws fresh source-relay SNRs, the actual relay-destination
    coefficients ``h`` and two independent innovations; the outdated and
    predicted estimates are ``rho h + sqrt(1 - rho^2) w``. Chunk ``c`` of
    ``CHUNK_TRIALS`` frames always uses the stream ``(seed, c)``, so results
    do not depend on how chunks are distributed.
    """
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    schemes = tuple(schemes or (scenario.scheme,))
    rhos = _scheme_rhos(scenario, schemes, rho_p)
    rho_o = scenario.outdated_rho
    rho_pred = rhos.get("prs", 0.0)
    K = scenario.relay_count
    thr = scenario.threshold
    acc = {s: _Accumulator() for s in schemes}
    n_chunks = -(-trials // CHUNK_TRIALS)
    for c in range(n_chunks):
        n = min(CHUNK_TRIALS, trials - c * CHUNK_TRIALS)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), c]))
        sr = scenario.sr_mean_snr * np.abs(complex_normal(rng, (n, K))) ** 2
        h = complex_normal(rng, (n, K))
        w_o = complex_normal(rng, (n, K))
        w_p = complex_normal(rng, (n, K))
        g = scenario.rd_mean_snr
        actual = g * np.abs(h) ** 2
        outdated = g * np.abs(rho_o * h + math.sqrt(max(0.0, 1 - rho_o ** 2)) * w_o) ** 2
        predicted = g * np.abs(rho_pred * h + math.sqrt(max(0.0, 1 - rho_pred ** 2)) * w_p) ** 2
        for s in schemes:
            proxy = predicted if s == "prs" else outdated
            rate, outage, _, _ = evaluate_frames(s, sr, proxy, actual, thr)
            acc[s].add(rate, outage)
    return {s: acc[s].result(s, "statistical", rhos[s]) for s in schemes}


def _batch_means_stderr(values: np.ndarray, blocks: int = 100) -> float:
    # successive frames are correlated, so use the spread of block means
    blocks = min(blocks, len(values))
    if blocks < 2:
        return float("nan")
    usable = len(values) - len(values) % blocks
    means = values[:usable].reshape(blocks, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(blocks))


def simulate_timeseries(scenario: NetworkScenario, sr_traces, rd_traces,
                        delay_samples: int, predicted_magnitudes=None,
                        schemes: Sequence[str] | None = None,
                        frames: slice | None = None) -> dict[str, MonteCarloResult]:
    """Walk ``(K, N)`` coefficient traces sample by sample.

    At sample ``n`` the actual channel is ``h[n]``, the outdated estimate is
    ``h[n - delay_samples]`` and the prediction is
    ``predicted_magnitudes[:, n]`` (made from samples up to
    ``n - delay_samples``; NaN where no prediction exists). Frames without
    every required estimate are skipped.
    """
    schemes = tuple(schemes or (scenario.scheme,))
    for s in schemes:
        if s not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {s!r}")
    if "prs" in schemes and predicted_magnitudes is None:
        raise ConfigurationError("timeseries PRS needs predicted magnitudes")
    sr_traces = np.atleast_2d(np.asarray(sr_traces))
    rd_traces = np.atleast_2d(np.asarray(rd_traces))
    K, N = rd_traces.shape
    if K != scenario.relay_count or sr_traces.shape != rd_traces.shape:
        raise ConfigurationError("traces must be (relay_count, N) for both hops")
    if delay_samples < 0 or delay_samples >= N:
        raise ConfigurationError("delay_samples out of range")
    idx = np.arange(delay_samples, N)
    if predicted_magnitudes is not None:
        pred = np.asarray(predicted_magnitudes, dtype=float)
        if pred.shape != rd_traces.shape:
            raise ConfigurationError("predictions must match the trace shape")
        idx = idx[np.all(np.isfinite(pred[:, idx]), axis=0)]
    if frames is not None:
        idx = idx[frames]
    if len(idx) == 0:
        raise ConfigurationError("no usable frames")
    g = scenario.rd_mean_snr
    sr = scenario.sr_mean_snr * np.abs(sr_traces[:, idx].T) ** 2
    actual = g * np.abs(rd_traces[:, idx].T) ** 2
    outdated = g * np.abs(rd_traces[:, idx - delay_samples].T) ** 2
    predicted = g * pred[:, idx].T ** 2 if predicted_magnitudes is not None else None
    out = {}
    for s in schemes:
        proxy = predicted if s == "prs" else outdated
        rate, outage, _, _ = evaluate_frames(s, sr, proxy, actual, scenario.threshold)
        acc = _Accumulator()
        acc.add(rate, outage)
        res = acc.result(s, "timeseries", None)
        res.outage_stderr = _batch_means_stderr(outage.astype(float))
        res.capacity_stderr = _batch_means_stderr(rate)
        out[s] = res
    return out


def run_montecarlo(scenario: NetworkScenario, trials: int, seed: int = 0,
                   mode: str = "statistical", rho_p: float | None = None,
                   sr_traces=None, rd_traces=None, predicted_magnitudes=None,
                   sample_rate_hz: float | None = None) -> MonteCarloResult:
    """Outage probability and ergodic capacity of ``scenario.scheme``."""
    if mode == "statistical":
        return simulate_statistical(scenario, trials, seed, (scenario.scheme,), rho_p)[
            scenario.scheme]
    if mode == "timeseries":
        if rd_traces is None or sr_traces is None or sample_rate_hz is None:
            raise ConfigurationError("timeseries mode needs traces and their sample rate")
        d = scenario.delay_s * sample_rate_hz
        if abs(d - round(d)) > 1e-9:
            raise ConfigurationError("delay must be a whole number of samples")
        return simulate_timeseries(scenario, sr_traces, rd_traces, int(round(d)),
                                   predicted_magnitudes, (scenario.scheme,),
                                   slice(0, trials))[scenario.scheme]
    raise ConfigurationError(f"unknown mode {mode!r}")
