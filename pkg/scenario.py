"""
Loading scenario files.

A scenario is a JSON document whose keys mirror ScenarioConfig and its
components (see docs/scenario_schema.md). Spectral fields are written
either as a list of coefficients (eigenvalue order, zero padded) or as
{"modes": {"1": 1.0, "3": -0.2}} with 1-based positions.
"""

import copy
import json
import hashlib
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from errors import ConfigurationError, ScenarioParseError
from model import (
    CoefficientShape,
    DelayKernel,
    DelayOperator,
    EpsilonProfile,
    Forcing,
    InitialHistory,
    LagProfile,
    NonlinearitySplit,
    NonlocalDiffusion,
    PointwiseMap,
    ScenarioConfig,
    TemporalProfile,
)
from spectral import DomainSpec, SpectralField, build_basis

logger = logging.getLogger(__name__)

_MISSING = object()


def _get(data: Dict[str, Any], key: str, path: str, default: Any = _MISSING) -> Any:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must be an object")
    if key in data:
        return data[key]
    if default is _MISSING:
        raise ConfigurationError(f"missing key {path}.{key}")
    return default


def _number(data: Dict[str, Any], key: str, path: str, default: Any = _MISSING) -> float:
    value = _get(data, key, path, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path}.{key} must be a number, got {value!r}")
    return float(value)


def _field(spec: Any, size: int, path: str) -> SpectralField:
    coeffs = np.zeros(size)
    if isinstance(spec, list):
        if len(spec) > size:
            raise ConfigurationError(f"{path} has {len(spec)} coefficients, basis has {size}")
        coeffs[:len(spec)] = [float(v) for v in spec]
        return SpectralField(coeffs)
    modes = _get(spec, "modes", path)
    for position, value in modes.items():
        try:
            index = int(position) - 1
        except ValueError:
            raise ConfigurationError(f"{path}.modes key {position!r} is not a mode position") from None
        if not 0 <= index < size:
            raise ConfigurationError(f"{path}.modes has position {position} outside 1..{size}")
        coeffs[index] = float(value)
    return SpectralField(coeffs)


def _pointwise(spec: Dict[str, Any], path: str) -> PointwiseMap:
    return PointwiseMap(_get(spec, "kind", path), _number(spec, "coefficient", path, 0.0))


def _epsilon(spec: Dict[str, Any]) -> EpsilonProfile:
    path = "epsilon"
    kind = _get(spec, "kind", path)
    times = tuple(float(v) for v in _get(spec, "times", path, ()))
    values = tuple(float(v) for v in _get(spec, "values", path, ()))
    asymptote = values[-1] if kind == "table" and values else _number(spec, "asymptote", path)
    return EpsilonProfile(
        kind=kind,
        asymptote=asymptote,
        alpha=_number(spec, "alpha", path),
        bound_l=_number(spec, "L", path),
        amplitude=_number(spec, "amplitude", path, 0.0),
        rate=_number(spec, "rate", path, 1.0),
        center=_number(spec, "center", path, 0.0),
        table_times=times,
        table_values=values,
        table_monotonicity=_get(spec, "monotonicity", path, "decreasing"),
    )


def _diffusion(spec: Dict[str, Any], size: int, epsilon: EpsilonProfile) -> NonlocalDiffusion:
    path = "diffusion"
    shape = _get(spec, "shape", path)
    return NonlocalDiffusion(
        shape=CoefficientShape(_get(shape, "kind", f"{path}.shape"),
                               _number(shape, "base", f"{path}.shape"),
                               _number(shape, "span", f"{path}.shape", 0.0)),
        weight=_field(_get(spec, "weight", path), size, f"{path}.weight"),
        ca1=_number(spec, "ca1", path),
        ca2=_number(spec, "ca2", path),
        # increasing eps needs the floor C_a1 + L
        floor_shift=epsilon.bound_l if epsilon.increasing else 0.0,
    )


def _nonlinearity(spec: Dict[str, Any]) -> NonlinearitySplit:
    path = "nonlinearity"
    return NonlinearitySplit(
        g0=_pointwise(_get(spec, "g0", path), f"{path}.g0"),
        g1=_pointwise(_get(spec, "g1", path), f"{path}.g1"),
        p=_number(spec, "p", path, 2.0),
        gamma=_number(spec, "gamma", path, 1.0),
        cg0=_number(spec, "cg0", path, 0.0),
        growth_constant=_number(spec, "growth_constant", path, 10.0),
    )


def _delay(spec: Dict[str, Any], dt: float, steps_per_delay: int) -> DelayOperator:
    path = "delay"
    kind = _get(spec, "kind", path)
    mu = _number(spec, "mu", path)
    lag_spec = _get(spec, "lag", path, {})
    lag = LagProfile(
        base=_number(lag_spec, "base", f"{path}.lag", mu),
        minimum=_number(lag_spec, "minimum", f"{path}.lag", dt),
        maximum=_number(lag_spec, "maximum", f"{path}.lag", mu),
        amplitude=_number(lag_spec, "amplitude", f"{path}.lag", 0.0),
        frequency=_number(lag_spec, "frequency", f"{path}.lag", 0.0),
    )
    kernel_spec = _get(spec, "kernel", path, {})
    kernel = DelayKernel(
        kind=_get(kernel_spec, "kind", f"{path}.kernel", "uniform"),
        weight=_number(kernel_spec, "weight", f"{path}.kernel", 0.0),
        rate=_number(kernel_spec, "rate", f"{path}.kernel", 1.0),
    )
    return DelayOperator(
        kind=kind,
        mu=mu,
        c_phi=_number(spec, "c_phi", path),
        response=_pointwise(_get(spec, "response", path, {"kind": "zero"}), f"{path}.response"),
        lag=lag,
        kernel=kernel,
        quadrature_intervals=int(_number(spec, "quadrature_intervals", path, steps_per_delay)),
    )


def _forcing(spec: Dict[str, Any], size: int) -> Forcing:
    path = "forcing"
    kind = _get(spec, "kind", path)
    if kind == "zero":
        return Forcing("zero", size)
    if kind == "separable":
        temporal = _get(spec, "temporal", path, {"kind": "constant"})
        return Forcing(
            kind,
            size,
            kappa=_number(spec, "kappa", path),
            temporal=TemporalProfile(
                kind=_get(temporal, "kind", f"{path}.temporal"),
                amplitude=_number(temporal, "amplitude", f"{path}.temporal", 0.0),
                frequency=_number(temporal, "frequency", f"{path}.temporal", 0.0),
                phase=_number(temporal, "phase", f"{path}.temporal", 0.0),
            ),
            profile=_field(_get(spec, "profile", path), size, f"{path}.profile"),
        )
    if kind == "spectralTable":
        table = _get(spec, "table", path)
        columns = {}
        for column in ("mean", "amplitude", "frequency", "phase"):
            columns[column] = _field(_get(table, column, f"{path}.table", [0.0]), size,
                                     f"{path}.table.{column}").coeffs
        return Forcing(kind, size, table_mean=columns["mean"], table_amplitude=columns["amplitude"],
                       table_frequency=columns["frequency"], table_phase=columns["phase"])
    raise ConfigurationError(f"unknown forcing kind {kind!r} at {path}.kind")


def scenario_from_dict(data: Dict[str, Any], name: Optional[str] = None) -> ScenarioConfig:
    """Build a ScenarioConfig; structural problems raise ConfigurationError naming the key."""
    domain_spec = _get(data, "domain", "scenario")
    domain = DomainSpec(
        dims=int(_number(domain_spec, "dims", "domain")),
        lengths=_get(domain_spec, "lengths", "domain"),
        modes=_get(domain_spec, "modes", "domain"),
        quadrature_points=_get(domain_spec, "quadrature_points", "domain", ()),
    )
    size = build_basis(domain).size
    delay_spec = _get(data, "delay", "scenario")
    mu = _number(delay_spec, "mu", "delay")
    steps_per_delay = int(_number(data, "steps_per_delay", "scenario", 40))
    if steps_per_delay < 1:
        raise ConfigurationError(f"scenario.steps_per_delay must be >= 1, got {steps_per_delay}")
    epsilon = _epsilon(_get(data, "epsilon", "scenario"))
    history_spec = _get(data, "initial_history", "scenario")
    return ScenarioConfig(
        name=name or _get(data, "name", "scenario", "scenario"),
        domain=domain,
        epsilon=epsilon,
        diffusion=_diffusion(_get(data, "diffusion", "scenario"), size, epsilon),
        nonlinearity=_nonlinearity(_get(data, "nonlinearity", "scenario")),
        delay=_delay(delay_spec, mu / steps_per_delay, steps_per_delay),
        forcing=_forcing(_get(data, "forcing", "scenario"), size),
        zeta=_number(data, "zeta", "scenario"),
        tau=_number(data, "tau", "scenario", 0.0),
        initial_history=InitialHistory(
            _field(_get(history_spec, "coeffs", "initial_history"), size, "initial_history.coeffs"),
            amplitude=_number(history_spec, "amplitude", "initial_history", 0.0),
            frequency=_number(history_spec, "frequency", "initial_history", 0.0),
        ),
        sigma=_number(data, "sigma", "scenario", 0.25),
        horizon=_number(data, "horizon", "scenario"),
        steps_per_delay=steps_per_delay,
    )


def read_scenario_data(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioParseError(f"cannot read scenario file: {e.strerror}", str(path)) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f"invalid JSON: {e.msg}", f"{path}:{e.lineno}:{e.colno}") from e
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario must be a JSON object", f"{path}:1:1")
    return data


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    data = read_scenario_data(path)
    name = data.get("name", Path(path).stem)
    try:
        cfg = scenario_from_dict(data, name)
    except ConfigurationError as e:
        raise ScenarioParseError(str(e), str(path)) from e
    logger.info(f"Loaded scenario {name} from {path}")
    return cfg


def scenario_hash(data: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form."""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _steps_for(mu: float, dt: float) -> int:
    if not dt > 0:
        raise ConfigurationError(f"step override must be positive, got {dt}")
    steps = int(round(mu / dt))
    if steps < 1 or not math.isclose(steps * dt, mu, rel_tol=1e-9):
        raise ConfigurationError(f"step {dt} does not divide the delay {mu}")
    return steps


def override_data(data: Dict[str, Any], dt: Optional[float] = None,
                  horizon: Optional[float] = None) -> Dict[str, Any]:
    """Copy of the scenario dictionary with a step or horizon override applied."""
    data = copy.deepcopy(data)
    if dt is not None:
        data["steps_per_delay"] = _steps_for(_number(_get(data, "delay", "scenario"), "mu", "delay"), dt)
    if horizon is not None:
        data["horizon"] = float(horizon)
    return data


def with_overrides(cfg: ScenarioConfig, steps_per_delay: Optional[int] = None,
                   horizon: Optional[float] = None, dt: Optional[float] = None) -> ScenarioConfig:
    changes: Dict[str, Any] = {}
    if dt is not None:
        steps_per_delay = _steps_for(cfg.mu, dt)
    if steps_per_delay is not None:
        changes["steps_per_delay"] = int(steps_per_delay)
    if horizon is not None:
        changes["horizon"] = float(horizon)
    return cfg.replace(**changes) if changes else cfg


def load_run_scenario(path: Union[str, Path], dt: Optional[float] = None,
                      horizon: Optional[float] = None) -> Tuple[ScenarioConfig, str]:
    """Scenario with overrides applied and the hash of the overridden document."""
    data = read_scenario_data(path)
    try:
        data = override_data(data, dt=dt, horizon=horizon)
        cfg = scenario_from_dict(data, data.get("name", Path(path).stem))
    except ConfigurationError as e:
        raise ScenarioParseError(str(e), str(path)) from e
    logger.info(f"Loaded scenario {cfg.name} from {path} (dt={cfg.dt:.6g}, horizon={cfg.horizon:.6g})")
    return cfg, scenario_hash(data)
