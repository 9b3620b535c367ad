"""
Fixed-step integration of the Galerkin delay system.

Mode by mode the projected equation reads

    (1 + eps(t) lambda_j) y_j' = -(a(l(u)) lambda_j + zeta) y_j + <g(u) + phi(t, u_t) + k(t), e_j>

and is advanced with the classical four-stage Runge-Kutta scheme. The
step divides the delay exactly so every breaking point of the method of
steps is a knot. Each accepted knot stores the right-hand side evaluated
there, which is reused as the first stage of the next step and as the
Hermite slope of the dense output.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional

import numpy as np

from decorators import timeit
from errors import ConfigurationError, IntegrationError, NumericError, SimulationError, StiffnessError
from history import HistoryBuffer
from model import (
    InitialHistory,
    ScenarioConfig,
    delay_apply,
    epsilon_at,
    forcing_at,
    nonlinearity_apply,
    nonlocal_coefficient,
)
from spectral import SpectralField

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RHSBreakdown:
    """Every term of the projected equation at one (t, u); terms are before mass division."""
    t: float
    coefficient: float  # a(l(u))
    epsilon: float
    epsilon_derivative: float
    diffusion_term: SpectralField  # -a lambda_j y_j
    reaction_term: SpectralField  # -zeta y_j
    nonlinear_term: SpectralField
    delay_term: SpectralField
    forcing_term: SpectralField
    mass_diagonal: np.ndarray

    @property
    def source(self) -> SpectralField:
        """Projection of g(u) + phi(t, u_t) + k(t)."""
        return self.nonlinear_term + self.delay_term + self.forcing_term

    def derivative(self) -> SpectralField:
        total = (self.diffusion_term + self.reaction_term + self.nonlinear_term
                 + self.delay_term + self.forcing_term)
        return SpectralField(total.coeffs / self.mass_diagonal)


def rhs(cfg: ScenarioConfig, t: float, u: SpectralField, buffer: HistoryBuffer,
        extension: float = 0.0):
    """y' and its breakdown; `extension` allows stage times past the newest knot."""
    basis = cfg.basis
    eps, eps_prime = epsilon_at(cfg.epsilon, t)
    mass = 1.0 + eps * basis.eigenvalues
    if not np.all(mass > 0):
        raise StiffnessError(f"mass 1 + eps(t) lambda_j <= 0 at t={t:.6g} (eps={eps:.6g})")
    a = nonlocal_coefficient(cfg.diffusion, u)
    breakdown = RHSBreakdown(
        t=t,
        coefficient=a,
        epsilon=eps,
        epsilon_derivative=eps_prime,
        diffusion_term=SpectralField(-a * basis.eigenvalues * u.coeffs),
        reaction_term=u * (-cfg.zeta),
        nonlinear_term=nonlinearity_apply(cfg.nonlinearity, u, "g", cfg.domain),
        delay_term=delay_apply(cfg.delay, t, buffer, cfg.domain, extension=extension),
        forcing_term=forcing_at(cfg.forcing, t),
        mass_diagonal=mass,
    )
    return breakdown.derivative(), breakdown


# ---------------------------------------------------------------------------
# companions: linear equations sharing a(l(u)) and the mass with u
# ---------------------------------------------------------------------------

CompanionSource = Callable[[float, SpectralField, SpectralField], SpectralField]


@dataclass(frozen=True)
class Companion:
    """
    w' = (-(a(l(u)) lambda + zeta) w + source(t, w, u)) / (1 + eps lambda),
    started from `initial` (zero history when None).
    """
    name: str
    source: CompanionSource
    initial: Optional[InitialHistory] = None


def companion_derivative(companion: Companion, breakdown: RHSBreakdown, cfg: ScenarioConfig,
                         w: SpectralField, u: SpectralField) -> SpectralField:
    lam = cfg.basis.eigenvalues
    linear = -(breakdown.coefficient * lam + cfg.zeta) * w.coeffs
    source = companion.source(breakdown.t, w, u).coeffs
    return SpectralField((linear + source) / breakdown.mass_diagonal)


@dataclass
class CompanionTrack:
    companion: Companion
    buffer: HistoryBuffer
    value: SpectralField
    derivative: SpectralField


@dataclass
class SolverStats:
    steps: int = 0
    rhs_evaluations: int = 0


@dataclass
class GalerkinState:
    """Mutable integration state; `derivative` is the rhs at (t, u)."""
    t: float
    u: SpectralField
    buffer: HistoryBuffer
    dt: float
    tau: float
    derivative: SpectralField
    step_index: int = 0
    stats: SolverStats = field(default_factory=SolverStats)
    companions: Dict[str, CompanionTrack] = field(default_factory=dict)


Observer = Callable[[int, float, GalerkinState], None]


def _stage(cfg: ScenarioConfig, state: GalerkinState, t: float, u: SpectralField,
           ws: Dict[str, SpectralField], extension: float):
    du, breakdown = rhs(cfg, t, u, state.buffer, extension=extension)
    state.stats.rhs_evaluations += 1
    dws = {
        name: companion_derivative(track.companion, breakdown, cfg, ws[name], u)
        for name, track in state.companions.items()
    }
    return du, dws


def step_once(state: GalerkinState, cfg: ScenarioConfig) -> GalerkinState:
    """Advance by one step; pushes the new knot with its rhs-derived slope."""
    dt = state.dt
    t0 = state.t
    t1 = state.tau + (state.step_index + 1) * dt
    y = state.u
    w0 = {name: track.value for name, track in state.companions.items()}

    k1 = state.derivative
    c1 = {name: track.derivative for name, track in state.companions.items()}

    def shifted(base, slopes, scale):
        return {name: base[name] + slopes[name] * scale for name in base}

    k2, c2 = _stage(cfg, state, t0 + 0.5 * dt, y + k1 * (0.5 * dt), shifted(w0, c1, 0.5 * dt), 0.5 * dt)
    k3, c3 = _stage(cfg, state, t0 + 0.5 * dt, y + k2 * (0.5 * dt), shifted(w0, c2, 0.5 * dt), 0.5 * dt)
    k4, c4 = _stage(cfg, state, t1, y + k3 * dt, shifted(w0, c3, dt), dt)

    def combine(base, s1, s2, s3, s4):
        return base + (s1 + s2 * 2.0 + s3 * 2.0 + s4) * (dt / 6.0)

    y_new = combine(y, k1, k2, k3, k4)
    w_new = {name: combine(w0[name], c1[name], c2[name], c3[name], c4[name]) for name in w0}
    if not y_new.is_finite() or not all(w.is_finite() for w in w_new.values()):
        raise NumericError(f"non-finite state after step to t={t1:.6g}")

    # provisional slopes; the distributed delay at t1 reads the new knot's value
    state.buffer.push(t1, y_new, k4)
    for name, track in state.companions.items():
        track.buffer.push(t1, w_new[name], c4[name])
    state.t, state.u = t1, y_new
    state.step_index += 1

    f_new, c_new = _stage(cfg, state, t1, y_new, w_new, 0.0)
    state.buffer.revise_derivative(f_new)
    state.derivative = f_new
    for name, track in state.companions.items():
        track.buffer.revise_derivative(c_new[name])
        track.value, track.derivative = w_new[name], c_new[name]
    state.stats.steps += 1
    return state


@dataclass
class Trajectory:
    """A finished run: dense output of u and of every companion, knots from tau - mu on."""
    cfg: ScenarioConfig
    tau: float
    t_end: float
    tracks: Dict[str, HistoryBuffer]
    stats: SolverStats

    @property
    def buffer(self) -> HistoryBuffer:
        return self.tracks["u"]

    def knot_mask(self, name: str = "u") -> np.ndarray:
        times = self.tracks[name].times
        return times >= self.tau - 1e-12 * max(1.0, abs(self.tau))

    def times(self, name: str = "u") -> np.ndarray:
        """Knot times t >= tau."""
        return self.tracks[name].times[self.knot_mask(name)]

    def states(self, name: str = "u") -> np.ndarray:
        return self.tracks[name].values[self.knot_mask(name)]

    def derivatives(self, name: str = "u") -> np.ndarray:
        """Right derivatives at knots t >= tau (the equation's rhs there)."""
        return self.tracks[name].right_derivatives[self.knot_mask(name)]

    def final_state(self, name: str = "u") -> SpectralField:
        return self.tracks[name].newest

    def difference(self, first: str, second: str) -> HistoryBuffer:
        """first - second as its own dense track."""
        return difference_buffer(self.tracks[first], self.tracks[second])


def difference_buffer(a: HistoryBuffer, b: HistoryBuffer) -> HistoryBuffer:
    """Knot-wise a - b; both buffers must share their knot times."""
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise ConfigurationError("difference of tracks needs identical knot times")
    return HistoryBuffer.from_arrays(
        a.times, a.values - b.values, a.left_derivatives - b.left_derivatives,
        a.right_derivatives - b.right_derivatives, window=a.window, max_step=a.max_step)


def _seed(buffer: HistoryBuffer, cfg: ScenarioConfig, initial: Optional[InitialHistory]) -> None:
    """Knots of the initial history on [tau - mu, tau], spaced by the step."""
    size = cfg.basis.size
    m = cfg.steps_per_delay
    for j in range(-m, 1):
        rho = j * cfg.dt
        if initial is None:
            value = derivative = SpectralField.zeros(size)
        else:
            value, derivative = initial.at(rho), initial.derivative_at(rho)
        buffer.push(cfg.tau + rho, value, derivative)


def initial_state(cfg: ScenarioConfig, companions: Iterable[Companion] = (),
                  capacity: str = "full") -> GalerkinState:
    buffer = HistoryBuffer(window=cfg.mu, max_step=cfg.dt, capacity=capacity)
    _seed(buffer, cfg, cfg.initial_history)
    state = GalerkinState(
        t=cfg.tau, u=buffer.newest, buffer=buffer, dt=cfg.dt, tau=cfg.tau,
        derivative=SpectralField.zeros(cfg.basis.size))
    for companion in companions:
        track_buffer = HistoryBuffer(window=cfg.mu, max_step=cfg.dt, capacity=capacity)
        _seed(track_buffer, cfg, companion.initial)
        state.companions[companion.name] = CompanionTrack(
            companion, track_buffer, track_buffer.newest, SpectralField.zeros(cfg.basis.size))
    # the derivative jumps at tau: left limit from the history, right limit from the equation
    f0, c0 = _stage(cfg, state, cfg.tau, state.u, {n: tr.value for n, tr in state.companions.items()}, 0.0)
    buffer.revise_derivative(f0, side="right")
    state.derivative = f0
    for name, track in state.companions.items():
        track.buffer.revise_derivative(c0[name], side="right")
        track.derivative = c0[name]
    return state


def step_count(cfg: ScenarioConfig, t_end: float) -> int:
    span = t_end - cfg.tau
    if span < 0:
        raise ConfigurationError(f"end time {t_end} precedes the start time {cfg.tau}")
    steps = int(round(span / cfg.dt))
    if abs(steps * cfg.dt - span) > 1e-9 * max(1.0, abs(span)):
        raise ConfigurationError(f"end time {t_end} is not on the step grid (dt={cfg.dt:.6g})")
    return steps


@timeit
def integrate(cfg: ScenarioConfig, t_end: Optional[float] = None, observers: Iterable[Observer] = (),
              companions: Iterable[Companion] = (), capacity: str = "full") -> Trajectory:
    """Run from tau to t_end (default tau + horizon); observers see every step, index 0 included."""
    if t_end is None:
        t_end = cfg.tau + cfg.horizon
    steps = step_count(cfg, t_end)
    observers = list(observers)
    companions = list(companions)
    state = initial_state(cfg, companions, capacity)
    for observer in observers:
        observer(0, state.t, state)
    logger.debug(f"integrating {cfg.name} over [{cfg.tau:.6g}, {t_end:.6g}] in {steps} steps")
    for _ in range(steps):
        try:
            step_once(state, cfg)
        except SimulationError as e:
            raise IntegrationError(state.t, e) from e
        for observer in observers:
            observer(state.step_index, state.t, state)
    tracks = {"u": state.buffer}
    tracks.update({name: track.buffer for name, track in state.companions.items()})
    return Trajectory(cfg=cfg, tau=cfg.tau, t_end=state.t, tracks=tracks, stats=state.stats)

