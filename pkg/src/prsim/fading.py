"""
Time-correlated Rayleigh fading with a Jakes (Clarke) Doppler spectrum.

Traces are synthesised as a sum of sinusoids: ``n_oscillators`` cosines per
quadrature branch, with arrival angles spread over one quadrant at a random
common offset and independent uniform phases. Because the angles form an
equispaced rule for the Bessel integral, the time-average autocorrelation of
a single realisation already matches J0(2 pi f_d tau) closely.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from .errors import InvalidArgumentError

DEFAULT_OSCILLATORS = 64
_CHUNK = 1 << 13


def bessel_j0(x: float) -> float:
    """Zeroth-order Bessel function of the first kind."""
    x = float(x)
    if not math.isfinite(x):
        raise InvalidArgumentError(f"bessel_j0 needs a finite argument, got {x}")
    return float(special.j0(x))


def jakes_correlation(doppler_hz: float, delay_s: float) -> float:
    """Correlation between a fading coefficient and its copy ``delay_s`` later."""
    if doppler_hz < 0 or delay_s < 0:
        raise InvalidArgumentError("doppler_hz and delay_s must be non-negative")
    return bessel_j0(2.0 * math.pi * doppler_hz * delay_s)


@dataclass(frozen=True)
class FadingParams:
    doppler_hz: float
    sample_rate_hz: float
    mean_power: float = 1.0
    length: int = 1

    def __post_init__(self):
        if self.doppler_hz < 0:
            raise InvalidArgumentError("doppler_hz must be >= 0")
        if not self.sample_rate_hz > 2 * self.doppler_hz:
            raise InvalidArgumentError("sample_rate_hz must exceed twice the Doppler frequency")
        if not self.mean_power > 0:
            raise InvalidArgumentError("mean_power must be > 0")
        if self.length < 1:
            raise InvalidArgumentError("length must be >= 1")


@dataclass
class FadingTrace:
    params: FadingParams
    samples: np.ndarray

    def __post_init__(self):
        if len(self.samples) != self.params.length:
            raise InvalidArgumentError("sample count does not match params.length")

    def __len__(self):
        return len(self.samples)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.samples)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "re", "im"])
            for i, h in enumerate(self.samples):
                writer.writerow([i, repr(float(h.real)), repr(float(h.imag))])

    def to_binary(self, path) -> None:
        """Little-endian layout: magic ``b"PRSF"``, uint32 version, float64
        doppler_hz, sample_rate_hz, mean_power, uint64 length, then ``length``
        interleaved (re, im) float64 pairs."""
        p = self.params
        with open(path, "wb") as fh:
            fh.write(b"PRSF")
            fh.write(struct.pack("<IdddQ", 1, p.doppler_hz, p.sample_rate_hz,
                                 p.mean_power, p.length))
            fh.write(np.asarray(self.samples, dtype="<c16").tobytes())

    @classmethod
    def from_binary(cls, path) -> "FadingTrace":
        raw = Path(path).read_bytes()
        if raw[:4] != b"PRSF":
            raise InvalidArgumentError("not a fading trace file")
        version, fd, fs, power, length = struct.unpack_from("<IdddQ", raw, 4)
        if version != 1:
            raise InvalidArgumentError(f"unsupported trace version {version}")
        offset = 4 + struct.calcsize("<IdddQ")
        samples = np.frombuffer(raw, dtype="<c16", count=length, offset=offset).astype(complex)
        return cls(FadingParams(fd, fs, power, length), samples)


def link_seed(master_seed: int, link_index: int) -> np.random.SeedSequence:
    """Independent stream for one link, derived from a master seed."""
    return np.random.SeedSequence([int(master_seed), int(link_index)])


def generate_trace(params: FadingParams, seed=0,
                   n_oscillators: int = DEFAULT_OSCILLATORS) -> FadingTrace:
    """Sum-of-sinusoids Rayleigh trace with E|h|^2 = ``params.mean_power``."""
    if n_oscillators < 1:
        raise InvalidArgumentError("n_oscillators must be >= 1")
    rng = np.random.default_rng(seed)
    m = n_oscillators
    offset = rng.uniform(-math.pi, math.pi)
    alpha = (2.0 * math.pi * np.arange(1, m + 1) - math.pi + offset) / (4 * m)
    phase_i = rng.uniform(-math.pi, math.pi, m)
    phase_q = rng.uniform(-math.pi, math.pi, m)
    w = 2.0 * math.pi * params.doppler_hz / params.sample_rate_hz
    w_i = w * np.cos(alpha)
    w_q = w * np.sin(alpha)
    amp = math.sqrt(params.mean_power / m)
    # cos(w (s + t) + phi) = Re(exp(j w t) exp(j (w s + phi))): one table of
    # phasors per block offset t, rotated to each block start s by a mat-vec
    block = min(_CHUNK, params.length)
    t = np.arange(block, dtype=np.float64)[:, None]
    base_i = np.exp(1j * t * w_i)
    base_q = np.exp(1j * t * w_q)
    out = np.empty(params.length, dtype=complex)
    for start in range(0, params.length, block):
        n = min(block, params.length - start)
        re = (base_i[:n] @ np.exp(1j * (w_i * start + phase_i))).real
        im = (base_q[:n] @ np.exp(1j * (w_q * start + phase_q))).real
        out[start:start + n] = amp * (re + 1j * im)
    return FadingTrace(params, out)


def correlated_pair(rho: float, seed=0, count: int = 1, mean_power: float = 1.0):
    """Draw ``count`` pairs ``(h_hat, h)`` of CN(0, mean_power) coefficients
    with E[h h_hat*] = rho * mean_power.

    Returns two complex arrays rather than a list of tuples.
    """
    if not 0.0 <= rho <= 1.0:
        raise InvalidArgumentError(f"rho must lie in [0, 1], got {rho}")
    if count < 0:
        raise InvalidArgumentError("count must be >= 0")
    rng = np.random.default_rng(seed)
    h_hat = complex_normal(rng, count, mean_power)
    w = complex_normal(rng, count, mean_power)
    h = rho * h_hat + math.sqrt(1.0 - rho * rho) * w
    return h_hat, h


def complex_normal(rng: np.random.Generator, size, mean_power: float = 1.0) -> np.ndarray:
    scale = math.sqrt(mean_power / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def empirical_autocorrelation(samples: np.ndarray, lag: int) -> float:
    """Real part of the lag-``lag`` sample autocorrelation, normalised by power."""
    samples = np.asarray(samples)
    power = np.mean(np.abs(samples) ** 2)
    if lag == 0:
        return 1.0
    r = np.vdot(samples[:-lag], samples[lag:]) / (len(samples) - lag)
    return float(np.real(r) / power)
