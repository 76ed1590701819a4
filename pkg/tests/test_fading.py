import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oracles import bisect, j0_quad, j0_series
from prsim.errors import InvalidArgumentError
from prsim.fading import (
    FadingParams,
    FadingTrace,
    bessel_j0,
    correlated_pair,
    empirical_autocorrelation,
    generate_trace,
    jakes_correlation,
    link_seed,
)


@pytest.fixture(scope="module")
def long_trace():
    return generate_trace(FadingParams(100.0, 1000.0, 1.0, 10**6), seed=7)


class TestBessel:
    def test_zero(self):
        assert bessel_j0(0.0) == 1.0

    @pytest.mark.parametrize("x, expected", [(0.4 * math.pi, 0.6425), (0.6 * math.pi, 0.2906)])
    def test_quoted_values(self, x, expected):
        assert bessel_j0(x) == pytest.approx(expected, abs=5e-4)

    def test_first_zero(self):
        root = bisect(j0_series, 2.0, 3.0)
        assert bessel_j0(root) == pytest.approx(0.0, abs=1e-9)
        assert bessel_j0(2.404826) == pytest.approx(0.0, abs=1e-5)

    @pytest.mark.parametrize("x", np.linspace(-50, 50, 41))
    def test_against_arbitrary_precision(self, x):
        assert bessel_j0(x) == pytest.approx(float(mpmath.besselj(0, x)), abs=1e-9)

    @pytest.mark.parametrize("x", [0.1, 1.0, 5.5, 12.0, 33.3])
    def test_against_quadrature(self, x):
        assert bessel_j0(x) == pytest.approx(j0_quad(x), abs=1e-9)

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite(self, bad):
        with pytest.raises(InvalidArgumentError):
            bessel_j0(bad)

    @given(st.floats(-1e3, 1e3, allow_nan=False))
    def test_bounded_and_even(self, x):
        assert abs(bessel_j0(x)) <= 1.0
        assert bessel_j0(x) == bessel_j0(-x)


class TestJakesCorrelation:
    def test_values(self):
        assert jakes_correlation(100, 0) == 1.0
        assert jakes_correlation(100, 0.002) == pytest.approx(0.6425, abs=5e-4)
        assert jakes_correlation(100, 0.003) == pytest.approx(0.2906, abs=5e-4)

    @given(st.floats(0, 1e4))
    def test_zero_delay(self, fd):
        assert jakes_correlation(fd, 0.0) == 1.0

    @pytest.mark.parametrize("fd, tau", [(-1, 0.001), (100, -0.001)])
    def test_negative(self, fd, tau):
        with pytest.raises(InvalidArgumentError):
            jakes_correlation(fd, tau)


class TestParams:
    @pytest.mark.parametrize("kwargs", [
        dict(doppler_hz=-1, sample_rate_hz=1000),
        dict(doppler_hz=500, sample_rate_hz=1000),
        dict(doppler_hz=100, sample_rate_hz=1000, mean_power=0),
        dict(doppler_hz=100, sample_rate_hz=1000, length=0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            FadingParams(**kwargs)

    def test_trace_length_checked(self):
        with pytest.raises(InvalidArgumentError):
            FadingTrace(FadingParams(100, 1000, 1.0, 3), np.zeros(2, complex))


class TestGenerateTrace:
    def test_mean_power(self, long_trace):
        assert np.mean(np.abs(long_trace.samples) ** 2) == pytest.approx(1.0, abs=0.01)

    def test_autocorrelation_matches_j0(self, long_trace):
        for m in range(1, 11):
            expected = float(mpmath.besselj(0, 2 * math.pi * 100 * m / 1000))
            assert empirical_autocorrelation(long_trace.samples, m) == pytest.approx(
                expected, abs=0.02)

    def test_lag_two(self, long_trace):
        assert empirical_autocorrelation(long_trace.samples, 2) == pytest.approx(0.6425, abs=0.02)

    def test_zero_doppler_frozen(self):
        tr = generate_trace(FadingParams(0.0, 1000.0, 1.0, 1000), seed=3)
        assert empirical_autocorrelation(tr.samples, 1) >= 0.999
        assert np.ptp(np.abs(tr.samples)) < 1e-12

    def test_deterministic(self):
        p = FadingParams(100.0, 1000.0, 1.0, 5000)
        a = generate_trace(p, seed=11).samples
        b = generate_trace(p, seed=11).samples
        c = generate_trace(p, seed=12).samples
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_mean_power_scales(self):
        tr = generate_trace(FadingParams(100.0, 1000.0, 4.0, 200_000), seed=5)
        assert np.mean(np.abs(tr.samples) ** 2) == pytest.approx(4.0, rel=0.05)

    def test_rayleigh_envelope(self):
        # a single sum-of-sinusoids realisation is only approximately Rayleigh,
        # so pool well separated samples from many independent realisations
        mags = []
        for k in range(200):
            tr = generate_trace(FadingParams(100.0, 1000.0, 1.0, 5000), seed=link_seed(99, k))
            mags.append(np.abs(tr.samples[::10]))
        mags = np.concatenate(mags)[:100_000]
        res = stats.kstest(mags, stats.rayleigh(scale=math.sqrt(0.5)).cdf)
        assert res.pvalue > 0.01

    def test_link_seeds_independent(self):
        p = FadingParams(100.0, 1000.0, 1.0, 200_000)
        a = generate_trace(p, seed=link_seed(0, 0)).samples
        b = generate_trace(p, seed=link_seed(0, 1)).samples
        cross = np.vdot(a, b) / len(a)
        assert abs(cross) < 0.05


class TestCorrelatedPair:
    def test_rho_one(self):
        h_hat, h = correlated_pair(1.0, seed=1, count=1000)
        assert np.array_equal(h_hat, h)

    @pytest.mark.parametrize("rho", [0.0, 0.6425, 0.95])
    def test_cross_correlation(self, rho):
        h_hat, h = correlated_pair(rho, seed=2, count=10**6)
        est = np.vdot(h_hat, h) / len(h)
        assert abs(est - rho) < 0.01
        assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, abs=0.01)
        assert np.mean(np.abs(h_hat) ** 2) == pytest.approx(1.0, abs=0.01)

    def test_deterministic(self):
        a = correlated_pair(0.5, seed=9, count=10)
        b = correlated_pair(0.5, seed=9, count=10)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    @pytest.mark.parametrize("rho", [-0.1, 1.1])
    def test_out_of_range(self, rho):
        with pytest.raises(InvalidArgumentError):
            correlated_pair(rho)


class TestExport:
    def test_binary_round_trip(self, tmp_path):
        tr = generate_trace(FadingParams(50.0, 1000.0, 2.0, 257), seed=4)
        tr.to_binary(tmp_path / "t.bin")
        back = FadingTrace.from_binary(tmp_path / "t.bin")
        assert back.params == tr.params
        assert np.array_equal(back.samples, tr.samples)

    def test_binary_layout(self, tmp_path):
        tr = generate_trace(FadingParams(50.0, 1000.0, 1.0, 3), seed=4)
        tr.to_binary(tmp_path / "t.bin")
        raw = (tmp_path / "t.bin").read_bytes()
        assert raw[:4] == b"PRSF"
        assert len(raw) == 4 + 4 + 3 * 8 + 8 + 3 * 16

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(InvalidArgumentError):
            FadingTrace.from_binary(tmp_path / "x.bin")

    def test_csv(self, tmp_path):
        tr = generate_trace(FadingParams(50.0, 1000.0, 1.0, 4), seed=4)
        tr.to_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "index,re,im"
        i, re, im = lines[2].split(",")
        assert int(i) == 1 and complex(float(re), float(im)) == tr.samples[1]
