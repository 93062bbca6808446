import numpy as np
import pytest

from wearstress.errors import InsufficientDataError
from wearstress.features.entropy import (coarse_grain, lyapunov_exponent,
                                         multiscale_entropy, sample_entropy)


def brute_force_sample_entropy(x, m=2, r=None):
    """Independent O(N^2) template counter over full distance matrices."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if r is None:
        sigma = x.std()
        if sigma <= 0:
            return 0.0
        r = 0.2 * sigma

    def count(mm):
        tmpl = np.lib.stride_tricks.sliding_window_view(x, mm)[: n - m]
        dist = np.abs(tmpl[:, None, :] - tmpl[None, :, :]).max(axis=2)
        hits = int((dist <= r).sum()) - tmpl.shape[0]
        return hits

    b = count(m)
    a = count(m + 1)
    if a == 0 or b == 0:
        return float(np.log((n - m - 1) * (n - m)))
    return float(-np.log(a / b))


class TestSampleEntropy:
    def test_constant_with_positive_r(self):
        assert sample_entropy(np.full(100, 3.0), m=2, r=0.5) == 0.0

    def test_constant_default_r(self):
        assert sample_entropy(np.full(100, 3.0)) == 0.0

    def test_matches_brute_force_exactly(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = int(rng.integers(30, 400))
            x = rng.normal(0, 1, n)
            assert sample_entropy(x) == brute_force_sample_entropy(x)

    def test_periodic_below_shuffled(self):
        rng = np.random.default_rng(1)
        periodic = np.tile(np.sin(np.linspace(0, 2 * np.pi, 20, endpoint=False)), 10)
        shuffled = rng.permutation(periodic)
        assert sample_entropy(periodic) < sample_entropy(shuffled)

    def test_degenerate_cap(self):
        # strictly increasing with huge steps: no template matches at all
        x = np.array([0.0, 10.0, 40.0, 90.0, 160.0, 250.0, 360.0, 490.0])
        n, m = x.size, 2
        assert sample_entropy(x, m=2, r=0.1) == pytest.approx(
            np.log((n - m - 1) * (n - m)))

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            sample_entropy(np.zeros(3), m=2)


class TestMultiscale:
    def test_single_scale_equals_sample_entropy(self):
        rng = np.random.default_rng(2)
        x = rng.normal(0, 1, 300)
        assert multiscale_entropy(x, scales=(1,)) == sample_entropy(x)

    def test_composition_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.normal(0, 1, 400)
        r = 0.2 * x.std()
        expected = np.mean([sample_entropy(coarse_grain(x, tau), m=2, r=r)
                            for tau in (1, 2, 3, 4, 5)])
        assert multiscale_entropy(x) == pytest.approx(expected, rel=1e-12)

    def test_coarse_grain_length(self):
        assert coarse_grain(np.zeros(1203), 5).size == 240

    def test_coarse_grain_values(self):
        x = np.arange(10.0)
        np.testing.assert_allclose(coarse_grain(x, 3), [1.0, 4.0, 7.0])

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            multiscale_entropy(np.zeros(15))


class TestLyapunov:
    def test_constant_returns_zero(self):
        assert lyapunov_exponent(np.full(300, 1.5)) == 0.0

    def test_logistic_map_ln2(self):
        x = np.empty(1000)
        x[0] = 0.34567
        for i in range(999):
            x[i + 1] = 4.0 * x[i] * (1.0 - x[i])
        assert lyapunov_exponent(x) == pytest.approx(np.log(2.0), abs=0.15)

    def test_pure_sine_near_zero(self):
        t = np.arange(1000)
        assert lyapunov_exponent(np.sin(2 * np.pi * t / 50.0)) <= 0.05

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            lyapunov_exponent(np.zeros(100))
