"""
Numerical certification of the dissipative estimates.

Every routine here runs the integrator and measures one quantitative
statement about the equation: the energy identity, the absorbing radius
R_0(t), the v1/v2 and u1/u2 splittings, continuous dependence on the
initial history and pullback attraction of random clouds. Measured
violations are returned as data on the result objects; exceptions are
reserved for broken preconditions and inconsistent decompositions.
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np
from scipy import integrate, stats
from scipy.spatial.distance import cdist

from config import Config
from decorators import timeit
from errors import ConfigurationError, ConsistencyError, InvalidBoundsError
from history import HistoryBuffer, window_series
from integrator import Companion, CompanionSource, Trajectory, difference_buffer, integrate as run_integration, rhs
from model import (
    BoundsParameters,
    InitialHistory,
    ScenarioConfig,
    epsilon_at,
    forcing_at,
    nonlinearity_apply,
    validate_scenario,
)
from spectral import BasisTable, SpectralField, sobolev_weights, truncate

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def run_ensemble(func: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> List[R]:
    """Map over independent runs, in order; jobs > 1 uses a thread pool."""
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def random_histories(cfg: ScenarioConfig, count: int, rng: np.random.Generator,
                     max_energy: float = 1.0) -> List[InitialHistory]:
    """Smooth random histories with ||chi||^2 + |eps(tau)| ||grad chi||^2 (window sup) <= max_energy."""
    basis = cfg.basis
    eps_abs = abs(epsilon_at(cfg.epsilon, cfg.tau)[0])
    decay = 1.0 / (1.0 + np.arange(basis.size)) ** 2
    histories = []
    for _ in range(count):
        coeffs = rng.normal(size=basis.size) * decay
        amplitude = rng.uniform(0.0, 0.5)
        frequency = rng.uniform(0.0, 2.0 * math.pi / cfg.mu)
        candidate = InitialHistory(SpectralField(coeffs), amplitude, frequency)
        energy = candidate.windowed_energy(basis, eps_abs, cfg.mu)
        target = rng.uniform(0.05, 1.0) * max_energy
        scale = math.sqrt(target / energy) if energy > 0 else 0.0
        histories.append(InitialHistory(SpectralField(coeffs * scale), amplitude, frequency))
    return histories


def _energy_parts(basis: BasisTable, values: np.ndarray):
    """(||u||^2, ||grad u||^2) row-wise."""
    return np.sum(values ** 2, axis=-1), (values ** 2) @ basis.eigenvalues


# ---------------------------------------------------------------------------
# energy identity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyLedger:
    """Per-knot terms of d/dt(||u||^2 + eps ||grad u||^2) + (2a - eps')||grad u||^2 + 2 zeta ||u||^2 = 2(g + phi + k, u)."""
    times: np.ndarray
    l2_squared: np.ndarray
    eps_grad_squared: np.ndarray
    dissipation: np.ndarray  # (2a - eps') ||grad u||^2
    reaction: np.ndarray  # 2 zeta ||u||^2
    source: np.ndarray  # 2 (g + phi + k, u)

    @property
    def energy(self) -> np.ndarray:
        return self.l2_squared + self.eps_grad_squared


def _ledger_terms(cfg: ScenarioConfig, buffer: HistoryBuffer, times: np.ndarray, values: np.ndarray):
    basis = cfg.basis
    rows = []
    for t, y in zip(times, values):
        u = SpectralField(y)
        _, breakdown = rhs(cfg, float(t), u, buffer)
        l2, grad = float(np.dot(y, y)), float(np.dot(basis.eigenvalues, y * y))
        rows.append((
            l2,
            breakdown.epsilon * grad,
            (2.0 * breakdown.coefficient - breakdown.epsilon_derivative) * grad,
            2.0 * cfg.zeta * l2,
            2.0 * float(np.dot(breakdown.source.coeffs, y)),
        ))
    return np.array(rows).reshape(-1, 5).T


def energy_ledger(trajectory: Trajectory) -> EnergyLedger:
    times = trajectory.times()
    terms = _ledger_terms(trajectory.cfg, trajectory.buffer, times, trajectory.states())
    return EnergyLedger(times, *terms)


def energy_residual(trajectory: Trajectory, s: float, t: float,
                    ledger: Optional[EnergyLedger] = None) -> float:
    """|E(t) + int_s^t [(2a - eps')||grad u||^2 + 2 zeta ||u||^2] - E(s) - 2 int_s^t (g + phi + k, u)|."""
    if t < s:
        raise ConfigurationError(f"energy residual needs s <= t, got s={s}, t={t}")
    if ledger is None:
        ledger = energy_ledger(trajectory)
    times = ledger.times
    tol = 1e-9 * trajectory.cfg.dt
    i = int(np.searchsorted(times, s - tol))
    j = int(np.searchsorted(times, t - tol))
    on_grid = (i < times.size and j < times.size
               and abs(times[i] - s) <= tol and abs(times[j] - t) <= tol)
    if on_grid:
        xs = times[i:j + 1]
        l2, eps_grad, diss, react, src = (arr[i:j + 1] for arr in (
            ledger.l2_squared, ledger.eps_grad_squared, ledger.dissipation, ledger.reaction, ledger.source))
    else:
        logger.warning(f"energy residual on [{s:.6g}, {t:.6g}] is off the step grid; "
                       f"end values come from the dense output")
        inner = times[(times > s + tol) & (times < t - tol)]
        xs = np.concatenate([[s], inner, [t]])
        values = trajectory.buffer.sample_many(xs)
        l2, eps_grad, diss, react, src = _ledger_terms(trajectory.cfg, trajectory.buffer, xs, values)
    if xs.size < 2:
        return 0.0
    lhs = l2[-1] + eps_grad[-1] + integrate.simpson(diss + react, x=xs)
    rhs_value = l2[0] + eps_grad[0] + integrate.simpson(src, x=xs)
    return float(abs(lhs - rhs_value))


def delay_interval_residuals(trajectory: Trajectory, ledger: Optional[EnergyLedger] = None):
    """Relative residual over each [tau + k mu, tau + (k+1) mu] inside the run."""
    if ledger is None:
        ledger = energy_ledger(trajectory)
    cfg = trajectory.cfg
    out = []
    k = 0
    while cfg.tau + (k + 1) * cfg.mu <= trajectory.t_end + 1e-9 * cfg.dt:
        s, t = cfg.tau + k * cfg.mu, cfg.tau + (k + 1) * cfg.mu
        mask = (ledger.times >= s - 1e-9) & (ledger.times <= t + 1e-9)
        scale = 1.0 + float(np.max(ledger.energy[mask]))
        out.append((s, t, energy_residual(trajectory, s, t, ledger) / scale))
        k += 1
    return out


# ---------------------------------------------------------------------------
# absorbing radii
# ---------------------------------------------------------------------------

def forcing_integral_series(bounds: BoundsParameters, cfg: ScenarioConfig, times: np.ndarray) -> np.ndarray:
    """I(t) = int_tau^t e^{-beta_1 (t - s)} ||k(s)||^2 ds at each time, Simpson per step."""
    times = np.asarray(times, dtype=float)
    out = np.zeros_like(times)
    if times.size < 2:
        return out
    h = np.diff(times)
    mids = times[:-1] + 0.5 * h
    k_left = cfg.forcing.norm_squared(times[:-1])
    k_mid = cfg.forcing.norm_squared(mids)
    k_right = cfg.forcing.norm_squared(times[1:])
    decay = np.exp(-bounds.beta1 * h)
    increments = h / 6.0 * (decay * k_left + 4.0 * np.exp(-bounds.beta1 * 0.5 * h) * k_mid + k_right)
    for n in range(1, times.size):
        out[n] = decay[n - 1] * out[n - 1] + increments[n - 1]
    return out


def initial_energy(cfg: ScenarioConfig, history: Optional[InitialHistory] = None) -> float:
    """||chi||^2_{C_L2} + |eps(tau)| ||grad chi||^2_{C_L2}."""
    history = history or cfg.initial_history
    return history.windowed_energy(cfg.basis, abs(epsilon_at(cfg.epsilon, cfg.tau)[0]), cfg.mu)


def compute_r0(bounds: BoundsParameters, cfg: ScenarioConfig, t: float, k_norm_integral: float,
               chi_energy: Optional[float] = None) -> float:
    """R_0^2(t): prefactor (E_chi e^{-beta_1 (t - tau)} + e^{beta mu} I(t) / delta)."""
    if bounds.beta1 <= 0:
        raise InvalidBoundsError(f"beta_1 = {bounds.beta1:.6g} must be positive")
    if chi_energy is None:
        chi_energy = initial_energy(cfg)
    prefactor = bounds.prefactor
    history_term = prefactor * chi_energy * math.exp(-bounds.beta1 * (t - cfg.tau))
    return history_term + prefactor / bounds.delta * math.exp(bounds.beta * bounds.mu) * k_norm_integral


def radius_squared(bounds: BoundsParameters, k_norm_integral: float) -> float:
    """R^2(t) = 1 + the forcing part of R_0^2(t)."""
    return 1.0 + bounds.prefactor / bounds.delta * math.exp(bounds.beta * bounds.mu) * k_norm_integral


def entry_time(bounds: BoundsParameters, chi_energy: float, tau: float) -> float:
    """First time after which the history part of R_0^2 is at most 1."""
    scaled = bounds.prefactor * chi_energy
    if scaled <= 1.0:
        return tau
    return tau + math.log(scaled) / bounds.beta1


@dataclass(frozen=True)
class BoundViolation:
    member: int
    t: float
    observed: float
    bound: float


@dataclass
class RadiusReport:
    bounds: BoundsParameters
    times: np.ndarray
    r0_squared: np.ndarray  # (members, times)
    r_squared: np.ndarray  # (times,)
    observed: np.ndarray  # (members, times), current-eps convention
    observed_pointwise: np.ndarray
    initial_energies: np.ndarray
    entry_times: np.ndarray
    violations: List[BoundViolation] = field(default_factory=list)
    late_violations: List[BoundViolation] = field(default_factory=list)  # against R^2 after entry

    @property
    def margins(self) -> np.ndarray:
        return self.r0_squared - self.observed

    @property
    def worst_relative_margin(self) -> float:
        scale = np.maximum(self.r0_squared, np.finfo(float).tiny)
        return float(np.min(self.margins / scale)) if self.margins.size else math.inf

    @property
    def passed(self) -> bool:
        return not self.violations


@timeit
def check_absorption(cfg: ScenarioConfig, ensemble: Optional[Sequence[InitialHistory]] = None,
                     horizon: Optional[float] = None, seed: int = Config.DEFAULT_SEED,
                     jobs: int = 1) -> RadiusReport:
    """Compare the windowed energy of every member against R_0^2(t) and, after entry, R^2(t)."""
    bounds = validate_scenario(cfg, absorbing=True)
    if horizon is not None:
        cfg = cfg.replace(horizon=horizon)
    if ensemble is None:
        ensemble = random_histories(cfg, Config.ABSORPTION_ENSEMBLE, np.random.default_rng(seed))
    basis = cfg.basis

    def observe(history: InitialHistory):
        trajectory = run_integration(cfg.replace(initial_history=history))
        return window_series(trajectory.buffer, cfg.tau, basis, cfg.epsilon)

    series = run_ensemble(observe, list(ensemble), jobs)
    times = series[0].times
    k_integral = forcing_integral_series(bounds, cfg, times)
    energies = np.array([initial_energy(cfg, h) for h in ensemble])
    forcing_part = bounds.prefactor / bounds.delta * math.exp(bounds.beta * bounds.mu) * k_integral
    r0 = (bounds.prefactor * energies[:, None] * np.exp(-bounds.beta1 * (times - cfg.tau))[None, :]
          + forcing_part[None, :])
    r2 = 1.0 + forcing_part
    observed = np.array([s.ht for s in series])
    report = RadiusReport(
        bounds=bounds,
        times=times,
        r0_squared=r0,
        r_squared=r2,
        observed=observed,
        observed_pointwise=np.array([s.ht_pointwise for s in series]),
        initial_energies=energies,
        entry_times=np.array([entry_time(bounds, e, cfg.tau) for e in energies]),
    )
    slack = Config.RELATIVE_SLACK
    for m in range(observed.shape[0]):
        bad = np.nonzero(observed[m] > r0[m] * (1.0 + slack))[0]
        report.violations.extend(BoundViolation(m, float(times[i]), float(observed[m, i]), float(r0[m, i])) for i in bad)
        late = (times >= report.entry_times[m]) & (observed[m] > r2 * (1.0 + slack))
        report.late_violations.extend(
            BoundViolation(m, float(times[i]), float(observed[m, i]), float(r2[i])) for i in np.nonzero(late)[0])
    if report.violations:
        logger.warning(f"absorbing bound violated at {len(report.violations)} output times "
                       f"(worst relative margin {report.worst_relative_margin:.3g})")
    return report


# ---------------------------------------------------------------------------
# shared measurements for the splittings
# ---------------------------------------------------------------------------

def plateau(times: np.ndarray, series: np.ndarray, rel_tol: float = Config.PLATEAU_REL_TOL):
    """(holds, final-quarter sup - earlier sup): no late growth beyond rel_tol."""
    cut = times[0] + 0.75 * (times[-1] - times[0])
    early, late = series[times < cut], series[times >= cut]
    if not early.size or not late.size:
        return True, 0.0
    early_sup, late_sup = float(early.max()), float(late.max())
    return late_sup <= early_sup * (1.0 + rel_tol), late_sup - early_sup


def decay_fit(times: np.ndarray, series: np.ndarray, warmup: float):
    """Least squares of log series against t after `warmup`; returns (rate, intercept)."""
    mask = (times >= times[0] + warmup) & (series > 0)
    if np.count_nonzero(mask) < 2:
        return math.nan, math.nan
    fit = stats.linregress(times[mask], np.log(series[mask]))
    return -float(fit.slope), float(fit.intercept)


def _instant_energy(cfg: ScenarioConfig, times: np.ndarray, values: np.ndarray, s: float = 0.0) -> np.ndarray:
    """||A^{s/2} w||^2 + |eps(t)| ||A^{(1+s)/2} w||^2 at each knot."""
    eps_abs = np.abs(cfg.epsilon.evaluate(times)[0])
    squares = values ** 2
    return squares @ sobolev_weights(cfg.basis, s) + eps_abs * (squares @ sobolev_weights(cfg.basis, 1.0 + s))


def split_residual(cfg: ScenarioConfig, trajectory: Trajectory, part: str,
                   part_source: CompanionSource) -> float:
    """
    Worst Simpson defect of the remainder r = u - w of a companion track.

    r must satisfy (1 + eps lambda) r' + (a lambda + zeta) r = P[source_u - part_source(w)].
    Only the recorded knot states are used: over every pair of steps
    r(t+2dt) - r(t) is compared with the Simpson integral of the right-hand side
    evaluated from those states.
    Pairs never straddle a multiple of the delay, where r'' may jump. The
    defect is reported per unit time.
    """
    lam = cfg.basis.eigenvalues
    times, u_states, w_states = trajectory.times(), trajectory.states(), trajectory.states(part)
    if times.shape != trajectory.times(part).shape:
        raise ConfigurationError(f"track {part} does not share the knots of u")

    slopes = np.empty_like(u_states)
    for i, (t, y, w) in enumerate(zip(times, u_states, w_states)):
        u = SpectralField(y)
        du, breakdown = rhs(cfg, float(t), u, trajectory.buffer)
        part_value = part_source(float(t), SpectralField(w), u).coeffs
        dw = (part_value - (breakdown.coefficient * lam + cfg.zeta) * w) / breakdown.mass_diagonal
        slopes[i] = du.coeffs - dw
    remainder = u_states - w_states

    dt = cfg.dt
    m = cfg.steps_per_delay
    last = len(times) - 1
    worst = 0.0
    for start in range(0, last, m):
        end = min(start + m, last)
        if end - start < 2:
            continue
        firsts = list(range(start, end - 1, 2))
        if (end - start) % 2:
            firsts.append(end - 2)
        for j in firsts:
            integral = dt / 3.0 * (slopes[j] + 4.0 * slopes[j + 1] + slopes[j + 2])
            defect = (remainder[j + 2] - remainder[j] - integral) / (2.0 * dt)
            worst = max(worst, float(np.linalg.norm(defect)))
    return worst


# ---------------------------------------------------------------------------
# u = v1 + v2
# ---------------------------------------------------------------------------

@dataclass
class DecompositionRun:
    times: np.ndarray
    v1_energy: np.ndarray  # windowed, pointwise eps
    v1_energy_current: np.ndarray  # windowed, eps(t)
    v1_instant: np.ndarray
    monotone: bool
    monotone_violations: int
    decay_rate: float
    decay_intercept: float
    sigma_trace: np.ndarray  # ||A^{sigma/2} v2||^2 + |eps| ||A^{(1+sigma)/2} v2||^2, windowed
    sigma_sup: float
    sigma_plateau: bool
    sigma_late_excess: float
    v2_residual: float
    trajectory: Trajectory


def dissipative_source(cfg: ScenarioConfig) -> CompanionSource:
    """g0(v1): the only source of the dissipative part."""
    def source(t: float, w: SpectralField, u: SpectralField) -> SpectralField:
        return nonlinearity_apply(cfg.nonlinearity, w, "g0", cfg.domain)
    return source


def dissipative_companion(cfg: ScenarioConfig) -> Companion:
    """v1 with source g0(v1), started from chi."""
    return Companion("v1", dissipative_source(cfg), cfg.initial_history)


@timeit
def run_decomposition(cfg: ScenarioConfig, horizon: Optional[float] = None) -> DecompositionRun:
    validate_scenario(cfg, absorbing=False)
    if horizon is not None:
        cfg = cfg.replace(horizon=horizon)
    companion = dissipative_companion(cfg)
    trajectory = run_integration(cfg, companions=[companion])
    basis = cfg.basis
    v1_series = window_series(trajectory.tracks["v1"], cfg.tau, basis, cfg.epsilon)
    v2_buffer = trajectory.difference("u", "v1")
    v2_series = window_series(v2_buffer, cfg.tau, basis, cfg.epsilon, sigma=cfg.sigma)
    times = v1_series.times

    steps = np.diff(v1_series.ht_pointwise)
    violations = int(np.count_nonzero(steps > Config.MONOTONE_SLACK))
    rate, intercept = decay_fit(times, v1_series.ht_pointwise, cfg.mu)
    holds, excess = plateau(times, v2_series.sigma)
    residual = split_residual(cfg, trajectory, "v1", dissipative_source(cfg))
    if violations:
        logger.warning(f"v1 energy increased at {violations} steps")
    return DecompositionRun(
        times=times,
        v1_energy=v1_series.ht_pointwise,
        v1_energy_current=v1_series.ht,
        v1_instant=_instant_energy(cfg, trajectory.times("v1"), trajectory.states("v1")),
        monotone=violations == 0,
        monotone_violations=violations,
        decay_rate=rate,
        decay_intercept=intercept,
        sigma_trace=v2_series.sigma,
        sigma_sup=float(v2_series.sigma.max()),
        sigma_plateau=holds,
        sigma_late_excess=excess,
        v2_residual=residual,
        trajectory=trajectory,
    )


# ---------------------------------------------------------------------------
# u = u1 + u2 with smoothed forcing
# ---------------------------------------------------------------------------

@dataclass
class RegularitySplitRun:
    smoothing_modes: int
    r1: float
    times: np.ndarray
    u_norm: np.ndarray  # ||u_t||^2 in C_{H_t^1}
    u1_norm: np.ndarray
    u2_norm: np.ndarray
    k1: float
    k2: float
    k_bar: float  # K1 + K2, unfactored
    factor_two_holds: bool
    unfactored_holds: bool
    growth_slope: float
    plateau: bool
    envelope_rate: float  # r~_1
    k1_envelope: np.ndarray
    envelope_holds: bool
    u1_dissipation_rate: float
    u2_residual: float
    trajectory: Trajectory


def remainder_source(cfg: ScenarioConfig, smoothing_modes: int) -> CompanionSource:
    """k - k~, where k~ keeps the lowest `smoothing_modes` modes of k."""
    def source(t: float, w: SpectralField, u: SpectralField) -> SpectralField:
        k = forcing_at(cfg.forcing, t)
        return k - truncate(k, smoothing_modes)
    return source


def remainder_companion(cfg: ScenarioConfig, smoothing_modes: int) -> Companion:
    """u1 with source k - k~, started from chi."""
    return Companion("u1", remainder_source(cfg, smoothing_modes), cfg.initial_history)


def smoothing_remainder(cfg: ScenarioConfig, smoothing_modes: int, times: np.ndarray) -> float:
    """sup over `times` of ||k - k~||."""
    worst = 0.0
    for t in times:
        k = forcing_at(cfg.forcing, float(t))
        worst = max(worst, float(np.linalg.norm((k - truncate(k, smoothing_modes)).coeffs)))
    return worst


def envelope_rate(bound_l: float, lambda1: float) -> float:
    """(2 + L + 1/(2 lambda_1)) / (1/lambda_1 + L)."""
    return (2.0 + bound_l + 1.0 / (2.0 * lambda1)) / (1.0 / lambda1 + bound_l)


@timeit
def run_regularity_split(cfg: ScenarioConfig, horizon: Optional[float] = None,
                         smoothing_modes: int = 1) -> RegularitySplitRun:
    validate_scenario(cfg, absorbing=True)
    if smoothing_modes < 0:
        raise ConfigurationError(f"smoothing_modes must be >= 0, got {smoothing_modes}")
    if horizon is not None:
        cfg = cfg.replace(horizon=horizon)
    companion = remainder_companion(cfg, smoothing_modes)
    trajectory = run_integration(cfg, companions=[companion])
    basis = cfg.basis
    u_series = window_series(trajectory.buffer, cfg.tau, basis, cfg.epsilon)
    u1_series = window_series(trajectory.tracks["u1"], cfg.tau, basis, cfg.epsilon)
    u2_series = window_series(trajectory.difference("u", "u1"), cfg.tau, basis, cfg.epsilon)
    times = u_series.times
    knots = trajectory.times()
    mids = knots[:-1] + 0.5 * np.diff(knots)
    r1 = smoothing_remainder(cfg, smoothing_modes, np.concatenate([knots, mids]))

    residual = split_residual(cfg, trajectory, "u1", remainder_source(cfg, smoothing_modes))
    scale = 1.0 + float(np.max(u_series.ht1))
    if residual > Config.RESIDUAL_TOLERANCE * scale:
        raise ConsistencyError(f"u1 + u2 does not reproduce u: residual {residual:.3g}")

    slack = 1.0 + Config.RELATIVE_SLACK
    factor_two = bool(np.all(u_series.ht1 <= 2.0 * (u1_series.ht1 + u2_series.ht1) * slack))
    unfactored = bool(np.all(u_series.ht1 <= (u1_series.ht1 + u2_series.ht1) * slack))
    half = times >= times[0] + 0.5 * (times[-1] - times[0])
    slope = float(stats.linregress(times[half], u_series.ht1[half]).slope) if np.count_nonzero(half) > 1 else 0.0

    bounds_l, lambda1 = cfg.epsilon.bound_l, basis.lambda1
    r_tilde = envelope_rate(bounds_l, lambda1)
    chi_h1 = float(u_series.ht1[0])
    envelope = np.exp(-r_tilde * (times + cfg.mu - cfg.tau)) * chi_h1 + r1 ** 2 / r_tilde
    u1_instant = _instant_energy(cfg, trajectory.times("u1"), trajectory.states("u1"), s=1.0)
    u1_rate, _ = decay_fit(trajectory.times("u1"), u1_instant, cfg.mu)
    return RegularitySplitRun(
        smoothing_modes=smoothing_modes,
        r1=r1,
        times=times,
        u_norm=u_series.ht1,
        u1_norm=u1_series.ht1,
        u2_norm=u2_series.ht1,
        k1=float(u1_series.ht1.max()),
        k2=float(u2_series.ht1.max()),
        k_bar=float(u1_series.ht1.max() + u2_series.ht1.max()),
        factor_two_holds=factor_two,
        unfactored_holds=unfactored,
        growth_slope=slope,
        plateau=slope <= Config.PLATEAU_SLOPE,
        envelope_rate=r_tilde,
        k1_envelope=envelope,
        envelope_holds=bool(np.all(u1_series.ht1 <= envelope * slack)),
        u1_dissipation_rate=u1_rate,
        u2_residual=residual,
        trajectory=trajectory,
    )


# ---------------------------------------------------------------------------
# continuous dependence on the initial history
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuityReport:
    factor: float  # sup log(D(t) / D_w(tau)) / (t - tau), D at the phase point
    windowed_factor: float  # same with the windowed difference
    initial_difference: float  # D_w(tau)
    final_difference: float

    @property
    def identical(self) -> bool:
        return self.initial_difference == 0.0 and self.final_difference == 0.0


def _growth_factor(times: np.ndarray, values: np.ndarray, initial: float, tau: float) -> float:
    later = times > tau
    if initial == 0.0 or not np.any(later):
        return -math.inf
    with np.errstate(divide="ignore"):
        rates = np.log(values[later] / initial) / (times[later] - tau)
    return float(np.max(rates))


def measure_continuity(cfg: ScenarioConfig, chi1: InitialHistory, chi2: InitialHistory,
                       horizon: Optional[float] = None) -> ContinuityReport:
    if horizon is not None:
        cfg = cfg.replace(horizon=horizon)
    first = run_integration(cfg.replace(initial_history=chi1))
    second = run_integration(cfg.replace(initial_history=chi2))
    diff = difference_buffer(first.buffer, second.buffer)
    series = window_series(diff, cfg.tau, cfg.basis, cfg.epsilon)
    times = first.times()
    instant = _instant_energy(cfg, times, first.states() - second.states())
    initial = float(series.ht[0])
    return ContinuityReport(
        factor=_growth_factor(times, instant, initial, cfg.tau),
        windowed_factor=_growth_factor(series.times, series.ht, initial, cfg.tau),
        initial_difference=initial,
        final_difference=float(instant[-1]),
    )


def continuity_factor(cfg: ScenarioConfig, chi1: InitialHistory, chi2: InitialHistory,
                      horizon: Optional[float] = None) -> float:
    """Measured C in ||u_t - v_t||^2 <= e^{C (t - tau)} (initial difference); -inf when identical."""
    return measure_continuity(cfg, chi1, chi2, horizon).factor


def perturbed_history(history: InitialHistory, scale: float, rng: np.random.Generator) -> InitialHistory:
    """chi + scale d with a random unit L2 direction d (same time modulation)."""
    direction = rng.normal(size=history.coeffs.size)
    direction /= np.linalg.norm(direction)
    return InitialHistory(history.coeffs + SpectralField(direction * scale),
                          history.amplitude, history.frequency)


# ---------------------------------------------------------------------------
# Hausdorff semidistance and pullback attraction
# ---------------------------------------------------------------------------

def norm_weights(norm_kind: str, basis: Optional[BasisTable], size: int, eps_abs: float = 0.0) -> np.ndarray:
    """Diagonal weights w with ||f||^2 = sum w_j f_j^2."""
    if norm_kind == "L2":
        return np.ones(size)
    if basis is None:
        raise ConfigurationError(f"norm {norm_kind!r} needs the basis")
    lam = basis.eigenvalues
    weights = {"H1": lam, "Ht": 1.0 + eps_abs * lam, "Ht1": lam + eps_abs * lam ** 2}
    if norm_kind not in weights:
        raise ConfigurationError(f"unknown norm kind {norm_kind!r}")
    return weights[norm_kind]


def hausdorff_semidistance(cloud_a: Sequence[SpectralField], cloud_b: Sequence[SpectralField],
                           norm_kind: str = "L2", basis: Optional[BasisTable] = None,
                           eps_abs: float = 0.0) -> float:
    """sup over a in A of inf over b in B of ||a - b||."""
    if not len(cloud_a) or not len(cloud_b):
        raise ValueError("Hausdorff semidistance needs two nonempty clouds")
    a = np.array([f.coeffs for f in cloud_a])
    b = np.array([f.coeffs for f in cloud_b])
    scale = np.sqrt(norm_weights(norm_kind, basis, a.shape[1], eps_abs))
    distances = cdist(a * scale, b * scale)
    return float(distances.min(axis=1).max())


def segment_distances(segments_a: np.ndarray, segments_b: np.ndarray, basis: BasisTable,
                      eps_abs: float) -> np.ndarray:
    """Pairwise windowed distances sqrt(max ||a - b||^2 + |eps| max ||grad(a - b)||^2);
    segments are (members, samples, modes) on a shared time grid."""
    diff = segments_a[:, None, :, :] - segments_b[None, :, :, :]
    squares = diff ** 2
    l2 = squares.sum(axis=-1).max(axis=-1)
    grad = (squares @ basis.eigenvalues).max(axis=-1)
    return np.sqrt(l2 + eps_abs * grad)


def segment_semidistance(segments_a: np.ndarray, segments_b: np.ndarray, basis: BasisTable,
                         eps_abs: float) -> float:
    return float(segment_distances(segments_a, segments_b, basis, eps_abs).min(axis=1).max())


@dataclass
class PullbackReport:
    target_time: float
    start_times: List[float]
    semidistances: List[float]  # to the most pulled-back cloud
    successive: List[float]  # between clouds n and n+1
    diameters: List[float]
    tempered: List[float]  # e^{beta_1 tau_n} max ||chi||^2_{C_H_tau_n}
    envelope: List[float]  # 2 sqrt(prefactor E_max e^{beta_1 mu}) e^{-beta_1 2^n mu / 2}
    steps_used: int
    complete: bool

    @property
    def tempered_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.tempered, self.tempered[1:]))

    def nonincreasing_from(self, n0: int, slack: float = Config.RELATIVE_SLACK) -> bool:
        tail = self.semidistances[n0:]
        return all(b <= a * (1.0 + slack) + 1e-300 for a, b in zip(tail, tail[1:]))

    @property
    def within_envelope(self) -> bool:
        return all(d <= e for d, e in zip(self.semidistances, self.envelope))


@timeit
def pullback_experiment(cfg: ScenarioConfig, t_star: float = Config.DEFAULT_TARGET_TIME,
                        n_max: int = Config.PULLBACK_MAX_N, cloud_size: int = Config.PULLBACK_CLOUD_SIZE,
                        seed: int = Config.DEFAULT_SEED, jobs: int = 1,
                        step_budget: int = Config.PULLBACK_STEP_BUDGET) -> PullbackReport:
    """Integrate one random cloud from tau_n = t* - 2^n mu to t* for n = 0..n_max."""
    if cloud_size < 1 or n_max < 0:
        raise ConfigurationError("pullback needs cloud_size >= 1 and n_max >= 0")
    bounds = validate_scenario(cfg, absorbing=False)
    basis = cfg.basis
    cloud = random_histories(cfg, cloud_size, np.random.default_rng(seed))
    per_window = cfg.steps_per_delay * (Config.WINDOW_SUBSAMPLES + 1)
    grid = t_star - cfg.mu + cfg.mu * np.arange(per_window + 1) / per_window
    eps_star = abs(epsilon_at(cfg.epsilon, t_star)[0])

    segments, start_times, tempered = [], [], []
    steps_used, complete = 0, True
    for n in range(n_max + 1):
        span = 2 ** n * cfg.mu
        needed = cloud_size * 2 ** n * cfg.steps_per_delay
        if steps_used + needed > step_budget:
            logger.warning(f"pullback step budget {step_budget} reached before n={n}; report is partial")
            complete = False
            break
        tau_n = t_star - span
        run_cfg = cfg.replace(tau=tau_n, horizon=span)

        def final_segment(history: InitialHistory) -> np.ndarray:
            trajectory = run_integration(run_cfg.replace(initial_history=history), capacity="window")
            return trajectory.buffer.sample_many(grid)

        segments.append(np.array(run_ensemble(final_segment, cloud, jobs)))
        start_times.append(tau_n)
        tempered.append(math.exp(bounds.beta1 * tau_n) * max(initial_energy(run_cfg, h) for h in cloud))
        steps_used += needed

    if not segments:
        return PullbackReport(t_star, [], [], [], [], [], [], steps_used, False)
    reference = segments[-1]
    energy_max = max(initial_energy(cfg, h) for h in cloud)
    envelope = [
        2.0 * math.sqrt(bounds.prefactor * energy_max * math.exp(bounds.beta1 * cfg.mu))
        * math.exp(-bounds.beta1 * (t_star - tau) / 2.0)
        for tau in start_times
    ]
    return PullbackReport(
        target_time=t_star,
        start_times=start_times,
        semidistances=[segment_semidistance(seg, reference, basis, eps_star) for seg in segments],
        successive=[segment_semidistance(a, b, basis, eps_star) for a, b in zip(segments, segments[1:])],
        diameters=[float(segment_distances(seg, seg, basis, eps_star).max()) for seg in segments],
        tempered=tempered,
        envelope=envelope,
        steps_used=steps_used,
        complete=complete,
    )
