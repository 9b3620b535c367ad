"""
Experiment runners behind `run --experiments`.

Each runner takes a validated scenario and returns an ExperimentReport:
verdicts for the invariants it certifies, scalar metrics and the time
series written next to the report. Runners never write files.
"""

import math
import logging
from dataclasses import asdict
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from analysis import (
    check_absorption,
    delay_interval_residuals,
    energy_ledger,
    energy_residual,
    measure_continuity,
    perturbed_history,
    pullback_experiment,
    run_decomposition,
    run_ensemble,
    run_regularity_split,
)
from config import Config
from decorators import timeit
from errors import SimulationError
from integrator import integrate
from model import BoundsParameters, ScenarioConfig, nonlocal_coefficient
from report import ExperimentReport

logger = logging.getLogger(__name__)

ORDER_BAND = (8.0, 32.0)
ROUNDOFF_FLOOR = 1e-12
CONVERGENCE_STEPS = (10, 20)
REFERENCE_STEPS = 320
CONVERGENCE_DELAYS = 10
PULLBACK_FINAL_TOLERANCE = 1e-4
CONTINUITY_BAND = 3.0

Runner = Callable[[ScenarioConfig, int, int], ExperimentReport]


def bounds_summary(bounds: Optional[BoundsParameters]) -> Optional[Dict[str, float]]:
    if bounds is None:
        return None
    summary = asdict(bounds)
    summary.update(prefactor=bounds.prefactor, delay_gap=bounds.delay_gap)
    return summary


def _in_band(ratio: float, band=ORDER_BAND) -> bool:
    return band[0] <= ratio <= band[1]


def _split_horizon(cfg: ScenarioConfig) -> float:
    return max(cfg.horizon, Config.SPLIT_DELAYS * cfg.mu)


def closed_form_rates(cfg: ScenarioConfig) -> Optional[np.ndarray]:
    """Per-mode decay rates (a lambda + zeta)/(1 + eps lambda) when the system is linear,
    autonomous and undelayed; None otherwise."""
    split = cfg.nonlinearity
    linear = split.g0.kind == "zero" and split.g1.kind == "zero"
    if not (linear and cfg.delay.is_zero and cfg.forcing.kind == "zero"
            and cfg.epsilon.kind == "constant" and cfg.diffusion.shape.kind == "constant"):
        return None
    lam = cfg.basis.eigenvalues
    eps = cfg.epsilon.asymptote
    return (cfg.diffusion.shape.base * lam + cfg.zeta) / (1.0 + eps * lam)


def _final_state(cfg: ScenarioConfig, steps_per_delay: int, t_end: float) -> np.ndarray:
    run_cfg = cfg.replace(steps_per_delay=steps_per_delay)
    return integrate(run_cfg, t_end=t_end, capacity="window").final_state().coeffs


def self_convergence(cfg: ScenarioConfig, jobs: int = 1):
    """(coarse error, fine error) against a reference run over ten delay intervals."""
    t_end = cfg.tau + CONVERGENCE_DELAYS * cfg.mu
    finals = run_ensemble(lambda m: _final_state(cfg, m, t_end),
                          [*CONVERGENCE_STEPS, REFERENCE_STEPS], jobs)
    reference = finals[-1]
    return tuple(float(np.linalg.norm(final - reference)) for final in finals[:-1])


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

@timeit
def simulate(cfg: ScenarioConfig, seed: int = Config.DEFAULT_SEED, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("simulate")
    coefficients: List[float] = []

    def record(index, t, state):
        coefficients.append(nonlocal_coefficient(cfg.diffusion, state.u))

    trajectory = integrate(cfg, observers=[record])
    times, states = trajectory.times(), trajectory.states()
    lam = cfg.basis.eigenvalues
    l2 = np.sum(states ** 2, axis=1)
    grad = (states ** 2) @ lam
    eps = cfg.epsilon.evaluate(times)[0]
    report.add_series("trajectory", ["t", "l2_squared", "grad_squared", "energy", "coefficient"],
                      times, l2, grad, l2 + np.abs(eps) * grad, coefficients)
    report.check("time column increasing", bool(np.all(np.diff(times) > 0)))
    report.check("finite states", bool(np.all(np.isfinite(states))))
    report.metrics.update(steps=trajectory.stats.steps, rhs_evaluations=trajectory.stats.rhs_evaluations,
                          final_l2=float(l2[-1]), final_energy=float(l2[-1] + abs(eps[-1]) * grad[-1]))

    rates = closed_form_rates(cfg)
    if rates is not None:
        y0 = cfg.initial_history.at(0.0).coeffs
        exact = y0[None, :] * np.exp(-np.outer(times - cfg.tau, rates))
        scale = np.maximum(np.abs(exact), np.finfo(float).tiny)
        mask = np.abs(exact) > 1e-300
        error = float(np.max(np.abs(states - exact)[mask] / scale[mask])) if np.any(mask) else 0.0
        report.metrics["closed_form_error"] = error
        report.check("closed-form oracle", error <= 1e-8, f"max relative error {error:.3g}")

    coarse, fine = self_convergence(cfg, jobs)
    report.metrics.update(convergence_error_coarse=coarse, convergence_error_fine=fine)
    if coarse <= ROUNDOFF_FLOOR:
        report.check("self-convergence order", True, f"errors at round-off ({coarse:.3g})")
    else:
        factor = coarse / fine if fine > 0 else math.inf
        report.metrics["convergence_factor"] = factor
        report.check("self-convergence order", _in_band(factor),
                     f"error ratio {factor:.3g} for dt = mu/{CONVERGENCE_STEPS[0]} -> mu/{CONVERGENCE_STEPS[1]}")
    return report


@timeit
def energy(cfg: ScenarioConfig, seed: int = Config.DEFAULT_SEED, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("energy")

    def interval_residuals(steps_per_delay: int):
        run_cfg = cfg.replace(steps_per_delay=steps_per_delay)
        trajectory = integrate(run_cfg)
        ledger = energy_ledger(trajectory)
        return trajectory, ledger, delay_interval_residuals(trajectory, ledger)

    coarse, fine = run_ensemble(interval_residuals, [cfg.steps_per_delay, 2 * cfg.steps_per_delay], jobs)
    trajectory, ledger, residuals = coarse
    report.add_series("ledger", ["t", "energy", "dissipation", "reaction", "source"],
                      ledger.times, ledger.energy, ledger.dissipation, ledger.reaction, ledger.source)
    whole = energy_residual(trajectory, cfg.tau, trajectory.t_end, ledger)
    report.metrics["whole_run_residual"] = whole
    if not residuals:
        report.check("energy identity", True, "no complete delay interval in the run")
        return report

    report.add_series("intervals", ["start", "end", "relative_residual"], *zip(*residuals))
    worst = max(r for _, _, r in residuals)
    worst_fine = max(r for _, _, r in fine[2])
    report.metrics.update(worst_relative_residual=worst, worst_relative_residual_refined=worst_fine)
    report.check("energy identity", worst <= Config.RESIDUAL_TOLERANCE,
                 f"worst relative residual {worst:.3g} over {len(residuals)} delay intervals")
    if worst_fine <= ROUNDOFF_FLOOR:
        report.check("energy identity refinement", True, f"refined residual at round-off ({worst_fine:.3g})")
    else:
        ratio = worst / worst_fine
        report.metrics["refinement_ratio"] = ratio
        report.check("energy identity refinement", _in_band(ratio), f"residual ratio {ratio:.3g} under dt halving")
    return report


@timeit
def absorption(cfg: ScenarioConfig, seed: int = Config.DEFAULT_SEED, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("absorption")
    radius = check_absorption(cfg, seed=seed, jobs=jobs)
    bounds = radius.bounds
    relative = radius.margins / np.maximum(radius.r0_squared, np.finfo(float).tiny)
    report.add_series("radius", ["t", "r_squared", "r0_squared_min", "observed_max", "relative_margin_min"],
                      radius.times, radius.r_squared, radius.r0_squared.min(axis=0),
                      radius.observed.max(axis=0), relative.min(axis=0))
    report.add_series("pointwise", ["t", "observed_pointwise_max"],
                      radius.times, radius.observed_pointwise.max(axis=0))
    report.metrics.update(
        worst_relative_margin=radius.worst_relative_margin,
        violations=len(radius.violations),
        late_violations=len(radius.late_violations),
        entry_time_max=float(radius.entry_times.max()),
        initial_energy_max=float(radius.initial_energies.max()),
        members=int(radius.observed.shape[0]),
    )
    report.check("beta_1 > 0", bounds.beta1 > 0, f"beta = {bounds.beta:.6g}, beta_1 = {bounds.beta1:.6g}")
    if bounds.c_phi > 0:
        report.check("prefactor identity", abs(bounds.prefactor - 2.0) <= 1e-12,
                     f"prefactor = {bounds.prefactor!r}")
    report.check("absorbing bound R0^2", radius.passed,
                 f"worst relative margin {radius.worst_relative_margin:.3g}")
    report.check("radius R^2 after entry", not radius.late_violations,
                 f"{len(radius.late_violations)} output times above R^2")
    return report


@timeit
def decomposition(cfg: ScenarioConfig, seed: int = Config.DEFAULT_SEED, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("decomposition")
    run = run_decomposition(cfg, horizon=_split_horizon(cfg))
    report.add_series("v1", ["t", "energy_pointwise", "energy_current"],
                      run.times, run.v1_energy, run.v1_energy_current)
    report.add_series("v2_sigma", ["t", "sigma_trace"], run.times, run.sigma_trace)
    report.metrics.update(decay_rate=run.decay_rate, decay_intercept=run.decay_intercept,
                          sigma_sup=run.sigma_sup, sigma_late_excess=run.sigma_late_excess,
                          v2_residual=run.v2_residual, monotone_violations=run.monotone_violations)
    scale = 1.0 + float(np.max(run.v1_energy_current))
    report.check("v1 nonincreasing", run.monotone, f"{run.monotone_violations} increasing steps")
    report.check("v1 decay rate > 0", run.decay_rate > 0, f"fitted rate {run.decay_rate:.6g}")
    report.check("v2 equation residual", run.v2_residual <= Config.RESIDUAL_TOLERANCE * scale,
                 f"residual {run.v2_residual:.3g}")
    report.check("v2 sigma plateau", run.sigma_plateau, f"late excess {run.sigma_late_excess:.3g}")
    return report


@timeit
def regularity(cfg: ScenarioConfig, seed: int = Config.DEFAULT_SEED, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("regularity")
    run = run_regularity_split(cfg, horizon=_split_horizon(cfg))
    report.add_series("split", ["t", "u", "u1", "u2", "k1_envelope"],
                      run.times, run.u_norm, run.u1_norm, run.u2_norm, run.k1_envelope)
    report.metrics.update(
        smoothing_modes=run.smoothing_modes, r1=run.r1, k1=run.k1, k2=run.k2, k_bar=run.k_bar,
        unfactored_holds=run.unfactored_holds, growth_slope=run.growth_slope,
        envelope_rate=run.envelope_rate, envelope_holds=run.envelope_holds,
        u1_dissipation_rate=run.u1_dissipation_rate, u2_residual=run.u2_residual,
    )
    report.check("K1, K2 finite", math.isfinite(run.k1) and math.isfinite(run.k2),
                 f"K1 = {run.k1:.6g}, K2 = {run.k2:.6g}")
    report.check("factor-2 decomposition", run.factor_two_holds)
    report.check("no growth trend", run.plateau, f"slope {run.growth_slope:.3g} per unit time")
    return report


@timeit
def continuity(cfg: ScenarioConfig, seed: int = Config.DEFAULT_SEED, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("continuity")
    chi = cfg.initial_history
    scales = list(Config.PERTURBATION_SCALES)

    def measure(scale: float):
        # one direction for every scale
        other = perturbed_history(chi, scale, np.random.default_rng(seed))
        return measure_continuity(cfg, chi, other)

    results = run_ensemble(measure, scales, jobs)
    report.add_series("factors", ["scale", "factor", "windowed_factor", "initial_difference", "final_difference"],
                      scales, [r.factor for r in results], [r.windowed_factor for r in results],
                      [r.initial_difference for r in results], [r.final_difference for r in results])
    factors = [r.factor for r in results]
    report.metrics.update(factors=factors, windowed_factors=[r.windowed_factor for r in results])
    report.check("continuity factor finite", all(math.isfinite(f) for f in factors),
                 ", ".join(f"{f:.6g}" for f in factors))
    report.check("consistent across scales", factors_consistent(factors),
                 f"within a factor {CONTINUITY_BAND:g}")
    return report


def factors_consistent(factors: Sequence[float], band: float = CONTINUITY_BAND, floor: float = 1e-9) -> bool:
    """Same sign and max/min magnitude within `band`, or all below `floor`."""
    if not all(math.isfinite(f) for f in factors):
        return False
    magnitudes = [abs(f) for f in factors]
    if max(magnitudes) <= floor:
        return True
    same_sign = all(f > 0 for f in factors) or all(f < 0 for f in factors)
    return same_sign and max(magnitudes) <= band * min(magnitudes)


@timeit
def pullback(cfg: ScenarioConfig, seed: int = Config.DEFAULT_SEED, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("pullback")
    result = pullback_experiment(cfg, seed=seed, jobs=jobs)
    report.complete = result.complete
    n = np.arange(len(result.start_times))
    report.add_series("clouds", ["n", "start_time", "semidistance", "envelope", "diameter", "tempered"],
                      n, result.start_times, result.semidistances, result.envelope,
                      result.diameters, result.tempered)
    if result.successive:
        report.add_series("successive", ["n", "semidistance_to_next"], n[:-1], result.successive)
    report.metrics.update(target_time=result.target_time, steps_used=result.steps_used,
                          final_diameter=result.diameters[-1] if result.diameters else math.nan)
    report.check("tempered universe", result.tempered_decreasing)
    report.check("nonincreasing from n = 2", result.nonincreasing_from(2))
    if len(result.semidistances) >= 2:
        last = result.semidistances[-2]
        report.check("final semidistance", last <= PULLBACK_FINAL_TOLERANCE, f"{last:.3g}")
    if cfg.forcing.kind == "zero":
        report.check("within decay envelope", result.within_envelope)
    return report


EXPERIMENTS: Dict[str, Runner] = {
    "simulate": simulate,
    "energy": energy,
    "absorption": absorption,
    "decomposition": decomposition,
    "regularity": regularity,
    "continuity": continuity,
    "pullback": pullback,
}

# experiments whose estimates need the absorbing-ball coefficient condition
ABSORBING = ("absorption", "regularity")


def expand_selection(names: Sequence[str]) -> List[str]:
    """'all' expands to every experiment; order follows EXPERIMENTS, duplicates dropped."""
    wanted = set(EXPERIMENTS) if "all" in names else set(names)
    unknown = wanted - set(EXPERIMENTS)
    if unknown:
        raise ValueError(f"unknown experiments: {', '.join(sorted(unknown))}")
    if not wanted:
        raise ValueError("no experiment selected")
    return [name for name in EXPERIMENTS if name in wanted]


def needs_absorbing(names: Sequence[str]) -> bool:
    return any(name in ABSORBING for name in names)


def run_one(name: str, cfg: ScenarioConfig, seed: int, jobs: int) -> ExperimentReport:
    """Run one experiment; a SimulationError becomes a flagged, incomplete report."""
    logger.info(f"Running experiment {name} on {cfg.name}")
    try:
        return EXPERIMENTS[name](cfg, seed, jobs)
    except SimulationError as e:
        logger.error(f"Experiment {name} failed: {e}", exc_info=True)
        return ExperimentReport(name, complete=False, error=f"{e.__class__.__name__}: {e}")


def run_experiments(cfg: ScenarioConfig, names: Sequence[str], seed: int = Config.DEFAULT_SEED,
                    jobs: int = 1) -> List[ExperimentReport]:
    """Independent experiments share the worker pool; a single one gets it for its ensembles."""
    names = expand_selection(names)
    if len(names) == 1:
        return [run_one(names[0], cfg, seed, jobs)]
    return run_ensemble(lambda name: run_one(name, cfg, seed, 1), names, jobs)
