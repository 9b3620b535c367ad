"""
Structural components of the nonclassical delay diffusion problem.

    u_t - eps(t) Lap u_t - a(l(u)) Lap u + zeta u = g(u) + phi(t, u_t) + k(t)

Each ingredient (eps, a(l(.)), g = g0 + g1, phi, k, the initial history)
is an immutable, evaluable component. `check_assumptions` samples every
structural hypothesis densely; `validate_scenario` turns a passing scenario
into the decay constants used by the absorbing-ball estimates.
"""

import math
import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, List, Optional, Tuple

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline
from scipy.special import expit

from config import Config
from decorators import log_function_call
from errors import AssumptionError, ConfigurationError, DelayTooStrongError, NumericError
from spectral import (
    BasisTable,
    DomainSpec,
    SpectralField,
    build_basis,
    from_physical,
    inner_product,
    to_physical,
)

if TYPE_CHECKING:
    from history import HistoryBuffer

logger = logging.getLogger(__name__)

EPSILON_KINDS = ("constant", "decreasingLogistic", "increasingLogistic", "table")


# ---------------------------------------------------------------------------
# eps(t)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonProfile:
    """Time-dependent coefficient of the pseudo-parabolic term."""
    kind: str
    asymptote: float  # lim eps(t) as t -> +inf
    alpha: float  # the alpha of lim eps > alpha > 1/2
    bound_l: float  # L with sup(|eps| + |eps'|) <= L
    amplitude: float = 0.0
    rate: float = 1.0
    center: float = 0.0
    table_times: Tuple[float, ...] = ()
    table_values: Tuple[float, ...] = ()
    table_monotonicity: str = "decreasing"
    _spline: Optional[CubicSpline] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in EPSILON_KINDS:
            raise ConfigurationError(f"unknown epsilon kind {self.kind!r}")
        if self.kind == "table":
            if len(self.table_times) < 2 or len(self.table_times) != len(self.table_values):
                raise ConfigurationError("epsilon table needs matching times/values (>= 2 entries)")
            if self.table_monotonicity not in ("increasing", "decreasing"):
                raise ConfigurationError(f"table monotonicity must be increasing or decreasing")
            # clamped ends make the constant extension C^1
            spline = CubicSpline(self.table_times, self.table_values, bc_type="clamped")
            object.__setattr__(self, "_spline", spline)

    @property
    def increasing(self) -> bool:
        if self.kind == "table":
            return self.table_monotonicity == "increasing"
        return self.kind == "increasingLogistic"

    def evaluate(self, t) -> Tuple[np.ndarray, np.ndarray]:
        """(eps(t), eps'(t)) for scalar or array t."""
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.asymptote), np.zeros_like(t)
        if self.kind == "table":
            lo, hi = self.table_times[0], self.table_times[-1]
            clipped = np.clip(t, lo, hi)
            value = self._spline(clipped)
            derivative = np.where((t < lo) | (t > hi), 0.0, self._spline(clipped, 1))
            return value, derivative
        z = self.rate * (t - self.center)
        bump = expit(-z)
        slope = self.amplitude * self.rate * expit(z) * bump
        if self.kind == "decreasingLogistic":
            return self.asymptote + self.amplitude * bump, -slope
        return self.asymptote - self.amplitude * bump, slope


def epsilon_at(profile: EpsilonProfile, t: float) -> Tuple[float, float]:
    value, derivative = profile.evaluate(t)
    return float(value), float(derivative)


# ---------------------------------------------------------------------------
# a(l(u))
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoefficientShape:
    """r -> a(r): constant, saturating (base + min(r^2, span)) or rational (base + span r^2/(1+r^2))."""
    kind: str
    base: float
    span: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "saturating", "rational"):
            raise ConfigurationError(f"unknown coefficient shape {self.kind!r}")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "constant":
            return np.full_like(r, self.base)
        if self.kind == "saturating":
            return self.base + np.minimum(r * r, self.span)
        return self.base + self.span * r * r / (1.0 + r * r)


@dataclass(frozen=True, eq=False)
class NonlocalDiffusion:
    shape: CoefficientShape
    weight: SpectralField  # i in l(u) = (i, u)
    ca1: float
    ca2: float
    floor_shift: float = 0.0  # L when eps is increasing

    @property
    def lower(self) -> float:
        return self.ca1 + self.floor_shift

    @property
    def clause(self) -> str:
        return "coefficient-shifted" if self.floor_shift else "coefficient"


def nonlocal_coefficient(diffusion: NonlocalDiffusion, u: SpectralField) -> float:
    """a(l(u)) with l(u) = (i, u); outside [lower, C_a2] is an assumption violation."""
    value = float(diffusion.shape(inner_product(diffusion.weight, u)))
    tol = 1e-12 * max(1.0, abs(diffusion.ca2))
    if not (diffusion.lower - tol <= value <= diffusion.ca2 + tol):
        raise AssumptionError(
            diffusion.clause,
            f"a(l(u)) = {value:.6g} outside [{diffusion.lower:.6g}, {diffusion.ca2:.6g}]",
        )
    return value


# ---------------------------------------------------------------------------
# g = g0 + g1
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointwiseMap:
    """Scalar map applied pointwise: zero, linear (c u), cubicDamping (-c u^3) or sine (c sin u)."""
    kind: str
    coefficient: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "linear", "cubicDamping", "sine"):
            raise ConfigurationError(f"unknown pointwise map {self.kind!r}")

    @property
    def is_linear(self) -> bool:
        return self.kind in ("zero", "linear")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "linear":
            return self.coefficient * u
        if self.kind == "cubicDamping":
            return -self.coefficient * u ** 3
        return self.coefficient * np.sin(u)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "linear":
            return np.full_like(u, self.coefficient)
        if self.kind == "cubicDamping":
            return -3.0 * self.coefficient * u ** 2
        return self.coefficient * np.cos(u)

    @property
    def lipschitz(self) -> float:
        """Global Lipschitz constant (inf for the cubic)."""
        if self.kind == "cubicDamping" and self.coefficient != 0:
            return math.inf
        return abs(self.coefficient) if self.kind != "zero" else 0.0


@dataclass(frozen=True)
class NonlinearitySplit:
    g0: PointwiseMap
    g1: PointwiseMap
    p: float  # growth exponent of g'
    gamma: float  # growth exponent of g1
    cg0: float = 0.0
    growth_constant: float = 10.0

    def map_for(self, which: str) -> Callable:
        if which == "g":
            return lambda u: self.g0(u) + self.g1(u)
        if which == "g0":
            return self.g0
        if which == "g1":
            return self.g1
        raise ConfigurationError(f"unknown nonlinearity component {which!r}")

    def derivative(self, u):
        return self.g0.derivative(u) + self.g1.derivative(u)

    def lipschitz_estimate(self, u_max: float = Config.U_MAX) -> float:
        u = np.linspace(-u_max, u_max, Config.ASSUMPTION_SAMPLES + 1)
        return float(np.max(np.abs(self.derivative(u))))


def apply_pointwise(pointwise: Callable, u: SpectralField, domain: DomainSpec) -> SpectralField:
    """Pseudo-spectral evaluation: project the pointwise image of u."""
    values = pointwise(to_physical(u, domain))
    if not np.all(np.isfinite(values)):
        raise NumericError("non-finite pointwise values in nonlinear term")
    return from_physical(values, domain)


def nonlinearity_apply(split: NonlinearitySplit, u: SpectralField, which: str,
                       domain: DomainSpec) -> SpectralField:
    return apply_pointwise(split.map_for(which), u, domain)


# ---------------------------------------------------------------------------
# phi(t, u_t)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LagProfile:
    """rho(t) = clip(base + amplitude sin(frequency t), minimum, maximum)."""
    base: float
    minimum: float
    maximum: float
    amplitude: float = 0.0
    frequency: float = 0.0

    def __call__(self, t):
        raw = self.base + self.amplitude * np.sin(self.frequency * np.asarray(t, dtype=float))
        return np.clip(raw, self.minimum, self.maximum)


@dataclass(frozen=True)
class DelayKernel:
    """G on [-mu, 0]: uniform (weight/mu) or exponential, normalized so that the integral is weight."""
    kind: str = "uniform"
    weight: float = 0.0
    rate: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "exponential"):
            raise ConfigurationError(f"unknown delay kernel {self.kind!r}")

    def __call__(self, s, mu: float):
        s = np.asarray(s, dtype=float)
        if self.kind == "uniform":
            return np.full_like(s, self.weight / mu)
        norm = self.rate / (1.0 - math.exp(-self.rate * mu))
        return self.weight * norm * np.exp(self.rate * s)


@dataclass(frozen=True)
class DelayOperator:
    kind: str  # discrete | distributed
    mu: float
    c_phi: float
    response: PointwiseMap = PointwiseMap("zero")
    lag: Optional[LagProfile] = None
    kernel: DelayKernel = DelayKernel()
    quadrature_intervals: int = 40

    def __post_init__(self):
        if self.kind not in ("discrete", "distributed"):
            raise ConfigurationError(f"unknown delay kind {self.kind!r}")
        if not self.mu > 0:
            raise ConfigurationError(f"delay horizon mu must be positive, got {self.mu}")
        if self.kind == "discrete" and self.lag is None:
            object.__setattr__(self, "lag", LagProfile(self.mu, self.mu, self.mu))
        if self.quadrature_intervals < 2:
            raise ConfigurationError("distributed delay needs at least 2 quadrature intervals")

    @property
    def is_zero(self) -> bool:
        if self.kind == "discrete":
            return self.response.kind == "zero" or self.response.coefficient == 0
        return self.kernel.weight == 0


def delay_apply(delay: DelayOperator, t: float, history: "HistoryBuffer", domain: DomainSpec,
                extension: float = 0.0) -> SpectralField:
    """phi(t, u_t); `extension` lets stage times read the last interval's Hermite extension."""
    if delay.is_zero:
        return SpectralField.zeros(build_basis(domain).size)
    if delay.kind == "discrete":
        delayed = history.sample_at(t - float(delay.lag(t)), extension=extension)
        if delay.response.is_linear:
            return delayed * delay.response.coefficient
        return apply_pointwise(delay.response, delayed, domain)
    offsets = np.linspace(-delay.mu, 0.0, delay.quadrature_intervals + 1)
    samples = history.sample_many(t + offsets, extension=extension)
    weights = delay.kernel(offsets, delay.mu)
    return SpectralField(integrate.simpson(weights[:, None] * samples, x=offsets, axis=0))


# ---------------------------------------------------------------------------
# k(t)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TemporalProfile:
    """m(t) = 1 (constant) or 1 + amplitude sin(frequency t + phase) (sinusoid)."""
    kind: str = "constant"
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "sinusoid"):
            raise ConfigurationError(f"unknown temporal profile {self.kind!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.ones_like(t)
        return 1.0 + self.amplitude * np.sin(self.frequency * t + self.phase)


@dataclass(frozen=True, eq=False)
class Forcing:
    kind: str  # zero | separable | spectralTable
    size: int
    kappa: float = 0.0
    temporal: TemporalProfile = TemporalProfile()
    profile: Optional[SpectralField] = None
    table_mean: Optional[np.ndarray] = None
    table_amplitude: Optional[np.ndarray] = None
    table_frequency: Optional[np.ndarray] = None
    table_phase: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("zero", "separable", "spectralTable"):
            raise ConfigurationError(f"unknown forcing kind {self.kind!r}")
        if self.kind == "separable" and (self.profile is None or self.profile.size != self.size):
            raise ConfigurationError("separable forcing needs a spatial profile aligned with the basis")
        if self.kind == "spectralTable":
            for name in ("table_mean", "table_amplitude", "table_frequency", "table_phase"):
                column = getattr(self, name)
                if column is None or np.shape(column) != (self.size,):
                    raise ConfigurationError(f"spectral forcing table column {name} must have {self.size} entries")

    def at(self, t: float) -> SpectralField:
        if self.kind == "zero":
            return SpectralField.zeros(self.size)
        if self.kind == "separable":
            return self.profile * (self.kappa * float(self.temporal(t)))
        return SpectralField(self.table_mean + self.table_amplitude
                             * np.sin(self.table_frequency * t + self.table_phase))

    def norm_squared(self, times) -> np.ndarray:
        """||k(t)||^2 on an array of times."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if self.kind == "zero":
            return np.zeros_like(times)
        if self.kind == "separable":
            return (self.kappa * self.temporal(times)) ** 2 * float(np.dot(self.profile.coeffs, self.profile.coeffs))
        values = self.table_mean[None, :] + self.table_amplitude[None, :] * np.sin(
            np.outer(times, self.table_frequency) + self.table_phase[None, :])
        return np.sum(values ** 2, axis=1)

    def translation_bound(self, t0: float, t1: float, points_per_unit: int = 64) -> float:
        """sup over t in [t0, t1] of the integral of ||k||^2 over [t, t+1]."""
        starts = np.linspace(t0, t1, max(2, int((t1 - t0) * 4) + 1))
        best = 0.0
        for start in starts:
            s = np.linspace(start, start + 1.0, points_per_unit + 1)
            best = max(best, float(integrate.simpson(self.norm_squared(s), x=s)))
        return best


def forcing_at(forcing: Forcing, t: float) -> SpectralField:
    return forcing.at(t)


# ---------------------------------------------------------------------------
# initial history and the scenario bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InitialHistory:
    """chi(rho) = coeffs (1 + amplitude sin(frequency rho)) on [-mu, 0]."""
    coeffs: SpectralField
    amplitude: float = 0.0
    frequency: float = 0.0

    def at(self, rho: float) -> SpectralField:
        return self.coeffs * (1.0 + self.amplitude * math.sin(self.frequency * rho))

    def derivative_at(self, rho: float) -> SpectralField:
        return self.coeffs * (self.amplitude * self.frequency * math.cos(self.frequency * rho))

    def _peak(self, mu: float) -> float:
        """max over rho in [-mu, 0] of |1 + amplitude sin(frequency rho)|."""
        lo, hi = sorted((-self.frequency * mu, 0.0))
        candidates = [lo, hi]
        k = math.ceil((lo - math.pi / 2) / math.pi)
        while math.pi / 2 + k * math.pi <= hi:
            candidates.append(math.pi / 2 + k * math.pi)
            k += 1
            if len(candidates) == 4:  # both signs of sin seen
                break
        return max(abs(1.0 + self.amplitude * math.sin(theta)) for theta in candidates)

    def windowed_energy(self, basis: BasisTable, eps_abs: float, mu: float) -> float:
        """||chi||^2_{C_L2} + |eps| ||grad chi||^2_{C_L2} (closed form for this family)."""
        peak = self._peak(mu)
        coeffs = self.coeffs.coeffs
        return peak ** 2 * float(np.dot(coeffs, coeffs) + eps_abs * np.dot(basis.eigenvalues, coeffs ** 2))


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    name: str
    domain: DomainSpec
    epsilon: EpsilonProfile
    diffusion: NonlocalDiffusion
    nonlinearity: NonlinearitySplit
    delay: DelayOperator
    forcing: Forcing
    zeta: float
    tau: float
    initial_history: InitialHistory
    sigma: float
    horizon: float
    steps_per_delay: int

    def __post_init__(self):
        size = build_basis(self.domain).size
        if self.steps_per_delay < 1:
            raise ConfigurationError(f"steps_per_delay must be >= 1, got {self.steps_per_delay}")
        if self.horizon < 0:
            raise ConfigurationError(f"horizon must be >= 0, got {self.horizon}")
        if self.diffusion.weight.size != size or self.initial_history.coeffs.size != size:
            raise ConfigurationError(f"diffusion weight and initial history must have {size} coefficients")
        if self.forcing.size != size:
            raise ConfigurationError(f"forcing must have {size} coefficients")

    @property
    def basis(self) -> BasisTable:
        return build_basis(self.domain)

    @property
    def mu(self) -> float:
        return self.delay.mu

    @property
    def dt(self) -> float:
        return self.delay.mu / self.steps_per_delay

    @property
    def dimension(self) -> int:
        return self.domain.dims

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# bounds and validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundsParameters:
    delta: float
    delta_bar: float
    beta: float
    beta1: float
    lambda1: float
    bound_l: float
    c_phi: float
    mu: float

    @property
    def delay_gap(self) -> float:
        """(2 C_phi / (1 + lambda_1 L)) e^{beta mu}, which equals beta - beta_1."""
        return delay_gap(self.beta, self.lambda1, self.bound_l, self.c_phi, self.mu)

    @property
    def prefactor(self) -> float:
        """1 + 2 C_phi e^{beta mu} / ((1 + lambda_1 L)(beta - beta_1)); 2 whenever C_phi > 0."""
        if self.c_phi <= 0:
            return 1.0
        numerator = 2.0 * self.c_phi * math.exp(self.beta * self.mu)
        return 1.0 + numerator / ((1.0 + self.lambda1 * self.bound_l) * (self.beta - self.beta1))


def delay_gap(beta: float, lambda1: float, bound_l: float, c_phi: float, mu: float) -> float:
    return 2.0 * c_phi / (1.0 + lambda1 * bound_l) * math.exp(beta * mu)


def beta1_for(beta: float, lambda1: float, bound_l: float, c_phi: float, mu: float) -> float:
    return beta - delay_gap(beta, lambda1, bound_l, c_phi, mu)


def select_bounds(lambda1: float, bound_l: float, zeta: float, c_phi: float, mu: float) -> BoundsParameters:
    """delta = lambda_1/2, delta_bar = 2L, then maximize beta_1 over (0, min{2 zeta, delta_bar/L}]."""
    delta = lambda1 / 2.0
    delta_bar = 2.0 * bound_l
    beta_max = min(2.0 * zeta, delta_bar / bound_l)
    if beta_max <= 0:
        raise DelayTooStrongError("beta-range", f"empty admissible beta interval (0, {beta_max:.6g}]")

    def objective(beta: float) -> float:
        return -beta1_for(beta, lambda1, bound_l, c_phi, mu)

    beta = beta_max
    if c_phi > 0:
        found = optimize.minimize_scalar(objective, bounds=(beta_max * 1e-9, beta_max),
                                         method="bounded", options={"xatol": 1e-12})
        if objective(found.x) < objective(beta_max):
            beta = float(found.x)
    gap = delay_gap(beta, lambda1, bound_l, c_phi, mu)
    beta1 = beta - gap
    if beta1 <= 0:
        raise DelayTooStrongError(
            "beta_1 > 0", f"delay too strong: best beta_1 = {beta1:.6g} at beta = {beta:.6g}")
    return BoundsParameters(delta, delta_bar, beta, beta1, lambda1, bound_l, c_phi, mu)


def sigma_upper_bound(n: int, gamma: float) -> float:
    """min{1/3, (n + 2 - (n - 2) gamma)/2}."""
    return min(1.0 / 3.0, (n + 2 - (n - 2) * gamma) / 2.0)


def absorbing_coefficient_threshold(bound_l: float, lambda1: float) -> float:
    """C_a1 must exceed 3/2 + L/2 + 1/(4 lambda_1)."""
    return 1.5 + bound_l / 2.0 + 1.0 / (4.0 * lambda1)


@dataclass(frozen=True)
class AssumptionCheck:
    clause: str
    description: str
    passed: bool
    detail: str = ""
    notice: bool = False


def _u_samples(u_max: float) -> np.ndarray:
    positive = np.logspace(-3, math.log10(u_max), Config.ASSUMPTION_SAMPLES // 2)
    return np.concatenate([-positive[::-1], [0.0], positive])


def _sample_times(cfg: ScenarioConfig) -> np.ndarray:
    margin = Config.EPSILON_SAMPLE_MARGIN
    return np.linspace(cfg.tau - cfg.mu - margin, cfg.tau + cfg.horizon + margin, Config.ASSUMPTION_SAMPLES)


def _epsilon_checks(cfg: ScenarioConfig) -> List[AssumptionCheck]:
    eps = cfg.epsilon
    times = _sample_times(cfg)
    value, derivative = eps.evaluate(times)
    checks = [AssumptionCheck(
        "eps-limit", "lim eps(t) > alpha > 1/2",
        eps.asymptote > eps.alpha > 0.5,
        f"lim = {eps.asymptote:.6g}, alpha = {eps.alpha:.6g}")]
    sup = float(np.max(np.abs(value) + np.abs(derivative)))
    checks.append(AssumptionCheck(
        "eps-bound", "sup(|eps| + |eps'|) <= L", sup <= eps.bound_l,
        f"sampled sup = {sup:.6g}, L = {eps.bound_l:.6g}"))
    h = 1e-4
    central = (eps.evaluate(times + h)[0] - eps.evaluate(times - h)[0]) / (2 * h)
    mismatch = float(np.max(np.abs(central - derivative)))
    checks.append(AssumptionCheck(
        "eps-derivative", "finite-difference eps' matches analytic eps'",
        mismatch <= Config.DERIVATIVE_TOLERANCE, f"max mismatch = {mismatch:.3g}"))
    wrong_sign = np.any(derivative < -1e-12) if eps.increasing else np.any(derivative > 1e-12)
    checks.append(AssumptionCheck(
        "eps-monotone", f"eps is {'increasing' if eps.increasing else 'decreasing'}",
        not wrong_sign, "sampled eps' sign"))
    lam = cfg.basis.eigenvalues
    mass = 1.0 + np.outer(value, lam)
    checks.append(AssumptionCheck(
        "mass", "1 + eps(t) lambda_j > 0", bool(np.all(mass > 0)),
        f"min mass entry = {float(mass.min()):.6g}"))
    return checks


def _diffusion_checks(cfg: ScenarioConfig) -> List[AssumptionCheck]:
    diffusion = cfg.diffusion
    r = _u_samples(Config.U_MAX)
    a = diffusion.shape(r)
    lo, hi = float(a.min()), float(a.max())
    return [AssumptionCheck(
        diffusion.clause,
        "C_a1 + L <= a(r) <= C_a2" if diffusion.floor_shift else "C_a1 <= a(r) <= C_a2",
        diffusion.lower <= lo and hi <= diffusion.ca2 and diffusion.ca1 > 0,
        f"a in [{lo:.6g}, {hi:.6g}], declared [{diffusion.lower:.6g}, {diffusion.ca2:.6g}]")]


def _nonlinearity_checks(cfg: ScenarioConfig) -> List[AssumptionCheck]:
    split = cfg.nonlinearity
    lambda1 = cfg.basis.lambda1
    c = split.growth_constant
    u = _u_samples(Config.U_MAX)
    nonzero = u[u != 0]
    tail = nonzero[np.abs(nonzero) >= Config.GROWTH_TAIL]
    g = split.map_for("g")
    checks = []
    g_zero = float(abs(g(np.array([0.0]))[0]))
    limsup = float(np.max(g(tail) / tail))
    checks.append(AssumptionCheck(
        "g-dissipative", "g(0) = 0 and limsup g(u)/u < lambda_1",
        g_zero == 0.0 and limsup < lambda1, f"g(0) = {g_zero:.3g}, limsup = {limsup:.6g}, lambda_1 = {lambda1:.6g}"))
    ratio = float(np.max(np.abs(split.derivative(u)) / (1 + np.abs(u) ** split.p)))
    checks.append(AssumptionCheck(
        "g-derivative-growth", "|g'(u)| <= C (1 + |u|^p)", ratio <= c, f"sampled C = {ratio:.6g}, declared {c:.6g}"))
    ratio = float(np.max(np.abs(split.g0(nonzero)) / (np.abs(nonzero) + np.abs(nonzero) ** (split.p + 1))))
    checks.append(AssumptionCheck(
        "g0-growth", "|g0(u)| <= C (|u| + |u|^{p+1})", ratio <= c, f"sampled C = {ratio:.6g}"))
    worst = float(np.max(split.g0(u) * u))
    checks.append(AssumptionCheck(
        "g0-sign", "g0(u) u <= 0", worst <= 0.0, f"max g0(u) u = {worst:.3g}"))
    ratio = float(np.max(np.abs(split.g1(u)) / (1 + np.abs(u) ** split.gamma)))
    checks.append(AssumptionCheck(
        "g1-growth", "|g1(u)| <= C (1 + |u|^gamma)", ratio <= c, f"sampled C = {ratio:.6g}"))
    limsup1 = float(np.max(split.g1(tail) / tail))
    checks.append(AssumptionCheck(
        "g1-dissipative", "limsup g1(u)/u < lambda_1", limsup1 < lambda1, f"limsup = {limsup1:.6g}"))
    return checks


def _constant_history(field_: SpectralField, t: float, mu: float, dt: float) -> "HistoryBuffer":
    from history import HistoryBuffer
    buffer = HistoryBuffer(window=mu, max_step=mu + 2 * dt, capacity="full")
    zero = SpectralField.zeros(field_.size)
    buffer.push(t - mu - dt, field_, zero)
    buffer.push(t + dt, field_, zero)
    return buffer


def _delay_checks(cfg: ScenarioConfig, rng: np.random.Generator) -> List[AssumptionCheck]:
    delay = cfg.delay
    size = cfg.basis.size
    t0 = cfg.tau
    checks = []
    zero_out = delay_apply(delay, t0, _constant_history(SpectralField.zeros(size), t0, cfg.mu, cfg.dt), cfg.domain)
    zero_norm = float(np.linalg.norm(zero_out.coeffs))
    checks.append(AssumptionCheck("phi-zero", "phi(t, 0) = 0", zero_norm == 0.0, f"||phi(t, 0)|| = {zero_norm:.3g}"))
    worst = 0.0
    scales = np.logspace(-2, 1, 4)
    for i in range(Config.LIPSCHITZ_PAIRS):
        scale = scales[i % len(scales)]
        u1 = SpectralField(rng.normal(size=size) * scale / np.arange(1, size + 1))
        u2 = SpectralField(rng.normal(size=size) * scale / np.arange(1, size + 1))
        t = t0 + cfg.mu * rng.uniform()
        d_phi = delay_apply(delay, t, _constant_history(u1, t, cfg.mu, cfg.dt), cfg.domain) \
            - delay_apply(delay, t, _constant_history(u2, t, cfg.mu, cfg.dt), cfg.domain)
        d_u = float(np.dot((u1 - u2).coeffs, (u1 - u2).coeffs))
        worst = max(worst, float(np.dot(d_phi.coeffs, d_phi.coeffs)) / d_u)
    checks.append(AssumptionCheck(
        "phi-lipschitz", "||phi(t,u1) - phi(t,u2)||^2 <= C_phi ||u1 - u2||^2_{C_L2}",
        worst <= delay.c_phi * (1 + 1e-9), f"sampled ratio = {worst:.6g}, C_phi = {delay.c_phi:.6g}"))
    if delay.kind == "discrete":
        lags = delay.lag(_sample_times(cfg))
        ok = float(lags.max()) <= delay.mu * (1 + 1e-12) and float(lags.min()) > 0
        checks.append(AssumptionCheck(
            "lag", "rho(t) in [rho_min, mu]", ok,
            f"rho in [{float(lags.min()):.6g}, {float(lags.max()):.6g}], mu = {delay.mu:.6g}"))
        if delay.lag.minimum < cfg.dt * (1 - 1e-12):
            logger.warning("rho_min = %.6g is below the step %.6g; stage values use the Hermite "
                           "extension and the step order may drop", delay.lag.minimum, cfg.dt)
    return checks


def check_assumptions(cfg: ScenarioConfig, absorbing: bool = True,
                      seed: int = Config.DEFAULT_SEED) -> List[AssumptionCheck]:
    """Sample every structural hypothesis; absorbing=True adds the absorbing-ball coefficient condition."""
    rng = np.random.default_rng(seed)
    n = cfg.dimension
    checks = [AssumptionCheck("zeta>0", "zeta > 0", cfg.zeta > 0, f"zeta = {cfg.zeta:.6g}")]
    if n < 3:
        logger.warning("domain dimension n = %d < 3: growth exponents p = %.3g, gamma = %.3g "
                       "are taken from the scenario", n, cfg.nonlinearity.p, cfg.nonlinearity.gamma)
        checks.append(AssumptionCheck(
            "dimension", "low dimension accepted with scenario growth exponents",
            True, f"n = {n}", notice=True))
    checks.extend(_epsilon_checks(cfg))
    checks.extend(_diffusion_checks(cfg))
    checks.extend(_nonlinearity_checks(cfg))
    checks.extend(_delay_checks(cfg, rng))
    bound = cfg.forcing.translation_bound(cfg.tau - cfg.mu, cfg.tau + max(cfg.horizon, 1.0))
    checks.append(AssumptionCheck(
        "forcing-translation", "forcing translation bounded", math.isfinite(bound), f"sup int_t^(t+1) ||k||^2 = {bound:.6g}"))
    sigma_max = sigma_upper_bound(n, cfg.nonlinearity.gamma)
    checks.append(AssumptionCheck(
        "sigma-range", "0 < sigma < min{1/3, (n+2-(n-2)gamma)/2}",
        0 < cfg.sigma < sigma_max, f"sigma = {cfg.sigma:.6g}, bound = {sigma_max:.6g}"))
    if absorbing:
        threshold = absorbing_coefficient_threshold(cfg.epsilon.bound_l, cfg.basis.lambda1)
        checks.append(AssumptionCheck(
            "absorbing-coefficient", "C_a1 > 3/2 + L/2 + 1/(4 lambda_1)",
            cfg.diffusion.ca1 > threshold, f"C_a1 = {cfg.diffusion.ca1:.6g}, threshold = {threshold:.6g}"))
    checks.append(AssumptionCheck(
        "beta-range", "beta <= min{2 zeta, delta_bar/L}",
        True, "delta_bar/L used", notice=True))
    return checks


@log_function_call(logger)
def validate_scenario(cfg: ScenarioConfig, absorbing: bool = True) -> BoundsParameters:
    """Raise on the first failing clause, otherwise select delta, delta_bar, beta and beta_1."""
    for check in check_assumptions(cfg, absorbing=absorbing):
        if not check.passed:
            raise AssumptionError(check.clause, f"{check.description}: {check.detail}")
    return select_bounds(cfg.basis.lambda1, cfg.epsilon.bound_l, cfg.zeta, cfg.delay.c_phi, cfg.mu)
