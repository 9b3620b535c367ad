"""
Dense-output record of a trajectory.

Knots carry the state and its time derivative. The derivative is stored
twice (left and right limits) because the solution's derivative jumps at
the start time, where the initial history hands over to the equation.
Between knots the state is the cubic Hermite interpolant.
"""

import math
import logging
from bisect import bisect_right
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from config import Config
from errors import ConfigurationError, CoverageError, OrderingError
from spectral import BasisTable, SpectralField, sobolev_weights

if TYPE_CHECKING:
    from model import EpsilonProfile

logger = logging.getLogger(__name__)

CAPACITY_POLICIES = ("window", "full")
NORM_KINDS = ("L2", "H1", "Delta", "Ht", "Ht1", "Ht1sigma")

_TIME_TOL = 1e-12


def hermite(t0, t1, y0, d0, y1, d1, s):
    """Cubic Hermite interpolant on [t0, t1]; broadcasts over s (trailing axis = modes)."""
    h = t1 - t0
    x = (s - t0) / h
    xm = 1.0 - x
    h00 = (1.0 + 2.0 * x) * xm * xm
    h10 = x * xm * xm
    h01 = x * x * (3.0 - 2.0 * x)
    h11 = x * x * (x - 1.0)
    return h00 * y0 + (h10 * h) * d0 + h01 * y1 + (h11 * h) * d1


class HistoryBuffer:
    """
    Knots (t, y, y'-, y'+) in strictly increasing time.

    capacity="window" keeps only what the delay needs (knots newer than
    newest - window - 2*max_step); capacity="full" keeps the whole run.
    """

    def __init__(self, window: float, max_step: float, capacity: str = "window"):
        if capacity not in CAPACITY_POLICIES:
            raise ConfigurationError(f"capacity must be one of {CAPACITY_POLICIES}, got {capacity!r}")
        if not (window > 0 and max_step > 0):
            raise ConfigurationError("window and max_step must be positive")
        self.window = float(window)
        self.max_step = float(max_step)
        self.capacity = capacity
        self._times = np.empty(0)
        self._values = np.empty((0, 0))
        self._left = np.empty((0, 0))
        self._right = np.empty((0, 0))
        self._start = 0
        self._end = 0

    # -- storage -----------------------------------------------------------

    def __len__(self) -> int:
        return self._end - self._start

    def _reserve(self, size: int) -> None:
        used = len(self)
        if self._values.shape[1] != size and used:
            raise ConfigurationError(f"buffer holds {self._values.shape[1]} modes, got {size}")
        if self._end < self._times.shape[0] and self._values.shape[1] == size:
            return
        capacity = max(16, 2 * used)
        times = np.empty(capacity)
        arrays = [np.empty((capacity, size)) for _ in range(3)]
        times[:used] = self._times[self._start:self._end]
        for new, old in zip(arrays, (self._values, self._left, self._right)):
            if used:
                new[:used] = old[self._start:self._end]
        self._times = times
        self._values, self._left, self._right = arrays
        self._start, self._end = 0, used

    @property
    def times(self) -> np.ndarray:
        return self._times[self._start:self._end]

    @property
    def values(self) -> np.ndarray:
        return self._values[self._start:self._end]

    @property
    def left_derivatives(self) -> np.ndarray:
        return self._left[self._start:self._end]

    @property
    def right_derivatives(self) -> np.ndarray:
        return self._right[self._start:self._end]

    @property
    def newest_time(self) -> float:
        if not len(self):
            raise CoverageError("history buffer is empty")
        return float(self._times[self._end - 1])

    @property
    def oldest_time(self) -> float:
        if not len(self):
            raise CoverageError("history buffer is empty")
        return float(self._times[self._start])

    @property
    def newest(self) -> SpectralField:
        return SpectralField(self._values[self._end - 1])

    def push(self, t: float, state: SpectralField, derivative: SpectralField,
             right_derivative: Optional[SpectralField] = None) -> "HistoryBuffer":
        """Append a knot; a separate right derivative marks a derivative jump at t."""
        if len(self):
            newest = self.newest_time
            if t <= newest:
                raise OrderingError(f"knot time {t!r} is not after the newest knot {newest!r}")
            if t - newest > self.max_step * (1 + 1e-9):
                raise OrderingError(f"knot spacing {t - newest:.6g} exceeds max step {self.max_step:.6g}")
        self._reserve(state.size)
        i = self._end
        self._times[i] = t
        self._values[i] = state.coeffs
        self._left[i] = derivative.coeffs
        self._right[i] = (right_derivative if right_derivative is not None else derivative).coeffs
        self._end += 1
        if self.capacity == "window":
            self._prune()
        return self

    def revise_derivative(self, derivative: SpectralField, side: str = "both") -> None:
        """Replace the newest knot's derivative (left, right or both limits)."""
        if not len(self):
            raise CoverageError("history buffer is empty")
        i = self._end - 1
        if side in ("left", "both"):
            self._left[i] = derivative.coeffs
        if side in ("right", "both"):
            self._right[i] = derivative.coeffs

    def _prune(self) -> None:
        cutoff = self.newest_time - self.window - 2 * self.max_step
        keep_from = self._start + int(np.searchsorted(self.times, cutoff - _TIME_TOL, side="left"))
        # the newest knot always survives
        self._start = max(self._start, min(keep_from, self._end - 1))

    @classmethod
    def from_arrays(cls, times, values, left, right=None, window: float = 1.0,
                    max_step: Optional[float] = None) -> "HistoryBuffer":
        times = np.asarray(times, dtype=float)
        if max_step is None:
            max_step = float(np.max(np.diff(times))) if times.size > 1 else window
        buffer = cls(window, max_step, capacity="full")
        right = left if right is None else right
        for t, y, dl, dr in zip(times, values, left, right):
            buffer.push(float(t), SpectralField(y), SpectralField(dl), SpectralField(dr))
        return buffer

    # -- sampling ----------------------------------------------------------

    def _check_coverage(self, lo: float, hi: float, extension: float) -> None:
        if not len(self):
            raise CoverageError("history buffer is empty")
        oldest, newest = self.oldest_time, self.newest_time
        tol = _TIME_TOL * max(1.0, abs(oldest), abs(newest))
        if lo < oldest - tol or hi > newest + extension + tol:
            raise CoverageError(
                f"samples [{lo:.12g}, {hi:.12g}] outside coverage [{oldest:.12g}, {newest:.12g}]")

    def sample_many(self, s, extension: float = 0.0) -> np.ndarray:
        """Rows of interpolated coefficients at times s; up to `extension` past the newest knot
        the last interval's cubic is continued."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        self._check_coverage(float(s.min()), float(s.max()), extension)
        times = self.times
        if times.shape[0] == 1:
            dt = (s - times[0])[:, None]
            return self.values[0][None, :] + dt * self.right_derivatives[0][None, :]
        idx = np.clip(np.searchsorted(times, s, side="right") - 1, 0, times.shape[0] - 2)
        values, left, right = self.values, self.left_derivatives, self.right_derivatives
        t0 = times[idx][:, None]
        t1 = times[idx + 1][:, None]
        out = hermite(t0, t1, values[idx], right[idx], values[idx + 1], left[idx + 1], s[:, None])
        exact = np.isin(s, times)
        if np.any(exact):
            out[exact] = values[np.searchsorted(times, s[exact])]
        return out

    def sample_at(self, s: float, extension: float = 0.0) -> SpectralField:
        """u(s); stored knots are reproduced exactly."""
        self._check_coverage(s, s, extension)
        times = self.times
        i = bisect_right(times, s) - 1
        if 0 <= i < times.shape[0] and times[i] == s:
            return SpectralField(self.values[i])
        return SpectralField(self.sample_many([s], extension=extension)[0])

    def window_grid(self, t: float, subsamples: int = Config.WINDOW_SUBSAMPLES) -> np.ndarray:
        """Knots in [t - window, t] (plus both ends) refined by `subsamples` points per interval."""
        lo = t - self.window
        self._check_coverage(lo, t, 0.0)
        times = self.times
        inner = times[(times > lo) & (times < t)]
        nodes = np.concatenate([[lo], inner, [t]])
        if subsamples <= 0:
            return nodes
        frac = np.arange(1, subsamples + 1) / (subsamples + 1)
        fill = nodes[:-1, None] + np.diff(nodes)[:, None] * frac[None, :]
        grid = np.concatenate([np.column_stack([nodes[:-1], fill]).ravel(), nodes[-1:]])
        return grid


# ---------------------------------------------------------------------------
# windowed norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowNorms:
    """Window suprema over [t - mu, t] and the eps-weighted composites (squared composites)."""
    t: float
    sup_l2: float
    sup_grad: float
    sup_delta: float
    sup_sigma: float  # max ||A^{sigma/2} u||
    sup_sigma1: float  # max ||A^{(1+sigma)/2} u||
    eps_abs: float  # |eps(t)|
    ht_squared: float
    ht_squared_pointwise: float
    ht1_squared: float
    ht1_squared_pointwise: float
    sigma_squared: float

    def value(self, norm_kind: str) -> float:
        """The requested norm (composites as square roots)."""
        if norm_kind == "L2":
            return self.sup_l2
        if norm_kind == "H1":
            return self.sup_grad
        if norm_kind == "Delta":
            return self.sup_delta
        if norm_kind == "Ht":
            return math.sqrt(self.ht_squared)
        if norm_kind == "Ht1":
            return math.sqrt(self.ht1_squared)
        if norm_kind == "Ht1sigma":
            return math.sqrt(self.sigma_squared)
        raise ConfigurationError(f"unknown norm kind {norm_kind!r}; expected one of {NORM_KINDS}")


def _squared_norms(samples: np.ndarray, basis: BasisTable, s: float) -> np.ndarray:
    return (samples * samples) @ sobolev_weights(basis, s)


def window_norms(buffer: HistoryBuffer, t: float, basis: BasisTable, epsilon: "EpsilonProfile",
                 sigma: float = 0.0, subsamples: int = Config.WINDOW_SUBSAMPLES) -> WindowNorms:
    grid = buffer.window_grid(t, subsamples)
    samples = buffer.sample_many(grid)
    l2 = _squared_norms(samples, basis, 0.0)
    grad = _squared_norms(samples, basis, 1.0)
    delta = _squared_norms(samples, basis, 2.0)
    sig = _squared_norms(samples, basis, sigma)
    sig1 = _squared_norms(samples, basis, 1.0 + sigma)
    eps_abs = abs(float(epsilon.evaluate(t)[0]))
    eps_grid = np.abs(epsilon.evaluate(grid)[0])
    return WindowNorms(
        t=t,
        sup_l2=math.sqrt(l2.max()),
        sup_grad=math.sqrt(grad.max()),
        sup_delta=math.sqrt(delta.max()),
        sup_sigma=math.sqrt(sig.max()),
        sup_sigma1=math.sqrt(sig1.max()),
        eps_abs=eps_abs,
        ht_squared=float(l2.max() + eps_abs * grad.max()),
        ht_squared_pointwise=float(np.max(l2 + eps_grid * grad)),
        ht1_squared=float(grad.max() + eps_abs * delta.max()),
        ht1_squared_pointwise=float(np.max(grad + eps_grid * delta)),
        sigma_squared=float(sig.max() + eps_abs * sig1.max()),
    )


def window_sup_norm(buffer: HistoryBuffer, t: float, norm_kind: str, epsilon: "EpsilonProfile",
                    basis: BasisTable, sigma: float = 0.0,
                    subsamples: int = Config.WINDOW_SUBSAMPLES) -> float:
    return window_norms(buffer, t, basis, epsilon, sigma, subsamples).value(norm_kind)


@dataclass(frozen=True)
class WindowSeries:
    """Squared window suprema at every knot from `start` on, both eps conventions."""
    times: np.ndarray
    eps_abs: np.ndarray
    sup_l2: np.ndarray
    sup_grad: np.ndarray
    sup_delta: np.ndarray
    ht: np.ndarray
    ht_pointwise: np.ndarray
    ht1: np.ndarray
    ht1_pointwise: np.ndarray
    sigma: np.ndarray
    sigma_pointwise: np.ndarray


def window_series(buffer: HistoryBuffer, start: float, basis: BasisTable, epsilon: "EpsilonProfile",
                  sigma: float = 0.0, subsamples: int = Config.WINDOW_SUBSAMPLES) -> WindowSeries:
    """
    Window suprema for every knot t >= start at once.

    Knots must be uniformly spaced with the window an integer number of
    steps; the fine grid is shared and maxima come from a sliding view.
    """
    times = buffer.times
    steps = np.diff(times)
    dt = float(steps.mean())
    per_window = int(round(buffer.window / dt))
    if not np.allclose(steps, dt, rtol=1e-9, atol=0.0) or abs(per_window * dt - buffer.window) > 1e-9 * buffer.window:
        raise ConfigurationError("window series needs uniform knots that tile the window")
    first = int(np.searchsorted(times, start - _TIME_TOL))
    if first < per_window:
        raise CoverageError(f"window before t={start:.6g} is not covered by the buffer")
    base = first - per_window
    knots = times[base:]
    frac = np.arange(0, subsamples + 1) / (subsamples + 1)
    fine = (knots[:-1, None] + dt * frac[None, :]).ravel()
    fine = np.concatenate([fine, knots[-1:]])
    samples = buffer.sample_many(fine)
    eps_fine = np.abs(epsilon.evaluate(fine)[0])
    stride = subsamples + 1
    width = per_window * stride + 1

    def sup(values: np.ndarray) -> np.ndarray:
        return sliding_window_view(values, width)[::stride].max(axis=1)

    l2 = _squared_norms(samples, basis, 0.0)
    grad = _squared_norms(samples, basis, 1.0)
    delta = _squared_norms(samples, basis, 2.0)
    sig = _squared_norms(samples, basis, sigma)
    sig1 = _squared_norms(samples, basis, 1.0 + sigma)
    out_times = knots[per_window:]
    eps_now = np.abs(epsilon.evaluate(out_times)[0])
    sup_l2, sup_grad, sup_delta = sup(l2), sup(grad), sup(delta)
    sup_sig, sup_sig1 = sup(sig), sup(sig1)
    return WindowSeries(
        times=out_times,
        eps_abs=eps_now,
        sup_l2=sup_l2,
        sup_grad=sup_grad,
        sup_delta=sup_delta,
        ht=sup_l2 + eps_now * sup_grad,
        ht_pointwise=sup(l2 + eps_fine * grad),
        ht1=sup_grad + eps_now * sup_delta,
        ht1_pointwise=sup(grad + eps_fine * delta),
        sigma=sup_sig + eps_now * sup_sig1,
        sigma_pointwise=sup(sig + eps_fine * sig1),
    )
