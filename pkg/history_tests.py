import math

import numpy as np
import pytest

from errors import ConfigurationError, CoverageError, OrderingError
from history import (
    HistoryBuffer,
    hermite,
    window_norms,
    window_series,
    window_sup_norm,
)
from model import EpsilonProfile
from spectral import DomainSpec, SpectralField, build_basis


@pytest.fixture
def basis():
    return build_basis(DomainSpec(dims=1, lengths=(math.pi,), modes=(3,)))


@pytest.fixture
def eps():
    return EpsilonProfile("constant", asymptote=0.5, alpha=0.4, bound_l=1.0)


def sampled_buffer(fn, dfn, times, window, capacity="full"):
    """Buffer holding fn(t) with exact derivatives dfn(t) at the given knots."""
    times = np.asarray(times, dtype=float)
    buffer = HistoryBuffer(window, float(np.max(np.diff(times))) * (1 + 1e-12), capacity=capacity)
    for t in times:
        buffer.push(float(t), SpectralField(fn(t)), SpectralField(dfn(t)))
    return buffer


def trig(t):
    return np.array([math.sin(t), math.cos(2 * t), 0.3 * t])


def dtrig(t):
    return np.array([math.cos(t), -2 * math.sin(2 * t), 0.3])


class TestHermite:

    def test_reproduces_cubics(self):
        def y(t):
            return t ** 3 - 2 * t

        def dy(t):
            return 3 * t ** 2 - 2

        s = np.linspace(0.5, 1.5, 11)
        np.testing.assert_allclose(hermite(0.5, 1.5, y(0.5), dy(0.5), y(1.5), dy(1.5), s), y(s), atol=1e-14)


class TestHistoryBuffer:

    def test_push_rejects_out_of_order_knots(self):
        buffer = HistoryBuffer(1.0, 0.1)
        buffer.push(0.0, SpectralField.zeros(2), SpectralField.zeros(2))
        with pytest.raises(OrderingError):
            buffer.push(0.0, SpectralField.zeros(2), SpectralField.zeros(2))
        with pytest.raises(OrderingError):
            buffer.push(0.5, SpectralField.zeros(2), SpectralField.zeros(2))

    def test_push_rejects_size_change(self):
        buffer = HistoryBuffer(1.0, 0.1)
        buffer.push(0.0, SpectralField.zeros(2), SpectralField.zeros(2))
        with pytest.raises(ConfigurationError):
            buffer.push(0.1, SpectralField.zeros(3), SpectralField.zeros(3))

    def test_invalid_construction(self):
        with pytest.raises(ConfigurationError):
            HistoryBuffer(1.0, 0.1, capacity="ring")
        with pytest.raises(ConfigurationError):
            HistoryBuffer(0.0, 0.1)

    def test_empty_buffer(self):
        buffer = HistoryBuffer(1.0, 0.1)
        assert len(buffer) == 0
        with pytest.raises(CoverageError):
            buffer.newest_time
        with pytest.raises(CoverageError):
            buffer.sample_at(0.0)

    def test_window_capacity_prunes_old_knots(self):
        buffer = sampled_buffer(trig, dtrig, [0.1 * i for i in range(21)], window=1.0, capacity="window")
        assert buffer.oldest_time == pytest.approx(0.8)
        assert buffer.newest_time == pytest.approx(2.0)
        assert len(buffer) == 13

    def test_full_capacity_keeps_everything(self):
        buffer = sampled_buffer(trig, dtrig, [0.1 * i for i in range(21)], window=1.0)
        assert len(buffer) == 21
        assert buffer.oldest_time == 0.0

    def test_revise_derivative(self):
        buffer = HistoryBuffer(1.0, 0.5)
        buffer.push(0.0, SpectralField([1.0]), SpectralField([0.0]))
        buffer.revise_derivative(SpectralField([2.0]), side="right")
        assert buffer.left_derivatives[-1][0] == 0.0
        assert buffer.right_derivatives[-1][0] == 2.0


class TestSampling:

    def test_knots_are_exact(self):
        times = np.linspace(0.0, 1.0, 7)
        buffer = sampled_buffer(trig, dtrig, times, window=0.5)
        for t in times:
            np.testing.assert_array_equal(buffer.sample_at(float(t)).coeffs, trig(t))

    def test_cubic_is_exact_between_knots(self):
        def y(t):
            return np.array([t ** 3, 2 * t ** 3 - t])

        def dy(t):
            return np.array([3 * t ** 2, 6 * t ** 2 - 1])

        buffer = sampled_buffer(y, dy, np.linspace(-1.0, 1.0, 5), window=1.0)
        s = np.array([-0.83, -0.1, 0.37, 0.99])
        np.testing.assert_allclose(buffer.sample_many(s), np.array([y(t) for t in s]), atol=1e-12)

    def test_coverage(self):
        buffer = sampled_buffer(trig, dtrig, np.linspace(0.0, 1.0, 5), window=0.5)
        with pytest.raises(CoverageError):
            buffer.sample_at(-0.01)
        with pytest.raises(CoverageError):
            buffer.sample_at(1.01)
        # the last interval's cubic may be continued a little past the newest knot
        assert buffer.sample_at(1.01, extension=0.05).is_finite()

    def test_single_knot_extrapolates_linearly(self):
        buffer = HistoryBuffer(1.0, 0.5)
        buffer.push(0.0, SpectralField([1.0]), SpectralField([2.0]))
        assert buffer.sample_many([0.1], extension=0.2)[0, 0] == pytest.approx(1.2)


class TestWindowNorms:

    def test_constant_history(self, basis, eps):
        value = np.array([0.3, -0.4, 0.0])
        buffer = sampled_buffer(lambda t: value, lambda t: np.zeros(3), np.linspace(-1.0, 1.0, 9), window=0.5)
        norms = window_norms(buffer, 0.5, basis, eps)
        assert norms.sup_l2 == pytest.approx(0.5)
        assert norms.sup_grad ** 2 == pytest.approx(0.09 + 4 * 0.16)
        assert norms.ht_squared == pytest.approx(0.25 + 0.5 * (0.09 + 0.64))
        assert norms.value("Ht") == pytest.approx(math.sqrt(norms.ht_squared))

    def test_monotone_history_peaks_at_the_end(self, basis, eps):
        buffer = sampled_buffer(lambda t: np.array([t, 0.0, 0.0]), lambda t: np.array([1.0, 0.0, 0.0]),
                                np.linspace(0.0, 1.0, 11), window=1.0)
        assert window_sup_norm(buffer, 1.0, "L2", eps, basis) == pytest.approx(1.0)

    def test_oscillating_history(self, basis, eps):
        buffer = sampled_buffer(lambda t: np.array([math.cos(math.pi * t), 0.0, 0.0]),
                                lambda t: np.array([-math.pi * math.sin(math.pi * t), 0.0, 0.0]),
                                np.linspace(-1.0, 0.0, 41), window=1.0)
        assert window_sup_norm(buffer, 0.0, "L2", eps, basis) == pytest.approx(1.0)
        assert window_sup_norm(buffer, 0.0, "H1", eps, basis) == pytest.approx(1.0)

    def test_unknown_norm_kind(self, basis, eps):
        buffer = sampled_buffer(trig, dtrig, np.linspace(0.0, 1.0, 5), window=0.5)
        with pytest.raises(ConfigurationError):
            window_sup_norm(buffer, 1.0, "H2", eps, basis)

    def test_window_must_be_covered(self, basis, eps):
        buffer = sampled_buffer(trig, dtrig, np.linspace(0.0, 1.0, 5), window=0.5)
        with pytest.raises(CoverageError):
            window_norms(buffer, 0.2, basis, eps)


class TestWindowSeries:

    def test_matches_pointwise_window_norms(self, basis):
        eps = EpsilonProfile("decreasingLogistic", asymptote=0.6, alpha=0.55, bound_l=1.2, amplitude=0.4)
        buffer = sampled_buffer(trig, dtrig, np.linspace(0.0, 2.0, 41), window=0.5)
        series = window_series(buffer, 0.5, basis, eps, sigma=0.25, subsamples=4)
        assert series.times[0] == pytest.approx(0.5)
        assert series.times.shape[0] == 31
        for i in (0, 7, 30):
            norms = window_norms(buffer, float(series.times[i]), basis, eps, sigma=0.25, subsamples=4)
            assert series.sup_l2[i] == pytest.approx(norms.sup_l2 ** 2, rel=1e-9)
            assert series.ht[i] == pytest.approx(norms.ht_squared, rel=1e-9)
            assert series.ht_pointwise[i] == pytest.approx(norms.ht_squared_pointwise, rel=1e-9)
            assert series.ht1[i] == pytest.approx(norms.ht1_squared, rel=1e-9)
            assert series.sigma[i] == pytest.approx(norms.sigma_squared, rel=1e-9)

    def test_needs_a_covered_start(self, basis, eps):
        buffer = sampled_buffer(trig, dtrig, np.linspace(0.0, 2.0, 41), window=0.5)
        with pytest.raises(CoverageError):
            window_series(buffer, 0.2, basis, eps)

    def test_needs_uniform_knots(self, basis, eps):
        times = np.concatenate([np.linspace(0.0, 1.0, 11), [1.05, 1.2]])
        buffer = sampled_buffer(trig, dtrig, times, window=0.5)
        with pytest.raises(ConfigurationError):
            window_series(buffer, 0.5, basis, eps)
