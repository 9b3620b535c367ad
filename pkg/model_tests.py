import math

import numpy as np
import pytest
from scipy import integrate

from config import Config
from errors import (
    AssumptionError,
    ConfigurationError,
    DelayTooStrongError,
    NumericError,
    ScenarioParseError,
)
from history import HistoryBuffer
from model import (
    CoefficientShape,
    DelayKernel,
    DelayOperator,
    EpsilonProfile,
    InitialHistory,
    NonlinearitySplit,
    NonlocalDiffusion,
    PointwiseMap,
    absorbing_coefficient_threshold,
    apply_pointwise,
    beta1_for,
    check_assumptions,
    delay_apply,
    nonlocal_coefficient,
    select_bounds,
    sigma_upper_bound,
    validate_scenario,
)
from scenario import (
    load_run_scenario,
    load_scenario,
    override_data,
    scenario_hash,
)
from spectral import (
    DomainSpec,
    SpectralField,
    build_basis,
    inner_product,
    quadrature_weight,
    to_physical,
)


@pytest.fixture
def line():
    return DomainSpec(dims=1, lengths=(math.pi,), modes=(16,))


def constant_history(field, start=-1.0, stop=1.0, window=0.5):
    times = np.linspace(start, stop, 5)
    values = np.tile(field.coeffs, (5, 1))
    return HistoryBuffer.from_arrays(times, values, np.zeros_like(values), window=window)


class TestEpsilonProfile:

    def test_decreasing_logistic(self, default_cfg):
        value, derivative = default_cfg.epsilon.evaluate(0.0)
        assert float(value) == pytest.approx(0.8)
        assert float(derivative) == pytest.approx(-0.1)
        assert float(default_cfg.epsilon.evaluate(60.0)[0]) == pytest.approx(0.6)

    def test_derivative_matches_central_difference(self, default_cfg):
        times = np.linspace(-3.0, 3.0, 13)
        h = 1e-5
        central = (default_cfg.epsilon.evaluate(times + h)[0] - default_cfg.epsilon.evaluate(times - h)[0]) / (2 * h)
        np.testing.assert_allclose(default_cfg.epsilon.evaluate(times)[1], central, atol=1e-8)

    def test_increasing_logistic(self):
        eps = EpsilonProfile("increasingLogistic", asymptote=0.9, alpha=0.6, bound_l=1.0, amplitude=0.3)
        assert eps.increasing
        value, derivative = eps.evaluate(np.array([-5.0, 0.0, 5.0]))
        assert np.all(np.diff(value) > 0)
        assert np.all(derivative > 0)

    def test_table_is_held_outside_its_range(self):
        eps = EpsilonProfile("table", asymptote=0.7, alpha=0.6, bound_l=1.5,
                             table_times=(0.0, 1.0, 2.0), table_values=(1.0, 0.8, 0.7))
        value, derivative = eps.evaluate(np.array([-1.0, 0.0, 5.0]))
        np.testing.assert_allclose(value, [1.0, 1.0, 0.7])
        assert derivative[0] == 0.0 and derivative[2] == 0.0
        assert not eps.increasing

    @pytest.mark.parametrize("kwargs", [
        {"kind": "quadratic"},
        {"kind": "table", "table_times": (0.0,), "table_values": (1.0,)},
        {"kind": "table", "table_times": (0.0, 1.0), "table_values": (1.0, 0.9), "table_monotonicity": "flat"},
    ])
    def test_invalid_profiles(self, kwargs):
        with pytest.raises(ConfigurationError):
            EpsilonProfile(asymptote=0.7, alpha=0.6, bound_l=1.0, **kwargs)


class TestNonlocalCoefficient:

    def test_constant_shape(self):
        diffusion = NonlocalDiffusion(CoefficientShape("constant", 2.0), SpectralField.unit(16, 0), 2.0, 2.0)
        assert nonlocal_coefficient(diffusion, SpectralField.unit(16, 3, 7.0)) == 2.0

    def test_saturating_shape(self):
        diffusion = NonlocalDiffusion(CoefficientShape("saturating", 1.0, 3.0), SpectralField.unit(16, 0), 1.0, 4.0)
        assert nonlocal_coefficient(diffusion, SpectralField.unit(16, 0, 2.0)) == pytest.approx(4.0)

    def test_value_outside_declared_bounds(self):
        diffusion = NonlocalDiffusion(CoefficientShape("saturating", 1.0, 3.0), SpectralField.unit(16, 0), 1.0, 3.5)
        with pytest.raises(AssumptionError) as excinfo:
            nonlocal_coefficient(diffusion, SpectralField.unit(16, 0, 2.0))
        assert excinfo.value.clause == "coefficient"

    def test_shifted_floor_clause(self):
        diffusion = NonlocalDiffusion(CoefficientShape("constant", 3.0), SpectralField.zeros(4), 1.0, 3.0,
                                      floor_shift=1.0)
        assert diffusion.lower == 2.0
        assert diffusion.clause == "coefficient-shifted"

    def test_functional_matches_quadrature(self, line, rng):
        weight = SpectralField(rng.normal(size=16))
        u = SpectralField(rng.normal(size=16))
        quadrature = quadrature_weight(line) * float(np.sum(to_physical(weight, line) * to_physical(u, line)))
        assert inner_product(weight, u) == pytest.approx(quadrature, rel=1e-10)


class TestNonlinearity:

    def test_cubic_projection(self, line):
        c = 0.7
        image = apply_pointwise(PointwiseMap("cubicDamping", 1.0), SpectralField.unit(16, 0, c), line).coeffs
        assert image[0] == pytest.approx(-c ** 3 * (2 / math.pi) * 0.75, abs=1e-13)
        assert image[2] == pytest.approx(c ** 3 * (2 / math.pi) * 0.25, abs=1e-13)

    def test_split_sums_components(self):
        split = NonlinearitySplit(PointwiseMap("cubicDamping", 1.0), PointwiseMap("sine", 0.5), p=2, gamma=1)
        u = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(split.map_for("g")(u), -u ** 3 + 0.5 * np.sin(u))
        np.testing.assert_allclose(split.derivative(u), -3 * u ** 2 + 0.5 * np.cos(u))
        with pytest.raises(ConfigurationError):
            split.map_for("g2")

    def test_zero_maps_to_zero(self, line):
        image = apply_pointwise(PointwiseMap("cubicDamping", 1.0), SpectralField.zeros(16), line)
        assert np.all(image.coeffs == 0.0)

    def test_overflow_is_a_numeric_error(self, line):
        with np.errstate(over="ignore"), pytest.raises(NumericError):
            apply_pointwise(PointwiseMap("cubicDamping", 1.0), SpectralField.unit(16, 0, 1e120), line)

    def test_lipschitz_constants(self):
        assert PointwiseMap("cubicDamping", 1.0).lipschitz == math.inf
        assert PointwiseMap("sine", -0.3).lipschitz == pytest.approx(0.3)
        assert PointwiseMap("zero").lipschitz == 0.0


class TestDelay:

    def test_zero_history(self, line):
        delay = DelayOperator("discrete", mu=0.5, c_phi=1.0, response=PointwiseMap("sine", 1.0))
        out = delay_apply(delay, 0.5, constant_history(SpectralField.zeros(16)), line)
        assert np.all(out.coeffs == 0.0)

    def test_discrete_reads_lagged_state(self, line, rng):
        field = SpectralField(rng.normal(size=16))
        delay = DelayOperator("discrete", mu=0.5, c_phi=1.0, response=PointwiseMap("linear", 1.0))
        out = delay_apply(delay, 0.5, constant_history(field), line)
        np.testing.assert_allclose(out.coeffs, field.coeffs, atol=1e-14)

    def test_distributed_uniform_kernel_averages(self, line, rng):
        field = SpectralField(rng.normal(size=16))
        delay = DelayOperator("distributed", mu=0.5, c_phi=1.0, kernel=DelayKernel("uniform", 1.0),
                              quadrature_intervals=20)
        out = delay_apply(delay, 0.5, constant_history(field), line)
        np.testing.assert_allclose(out.coeffs, field.coeffs, atol=1e-8)

    def test_exponential_kernel_integrates_to_weight(self):
        kernel = DelayKernel("exponential", weight=0.3, rate=2.0)
        s = np.linspace(-0.25, 0.0, 2001)
        assert integrate.simpson(kernel(s, 0.25), x=s) == pytest.approx(0.3, rel=1e-9)

    def test_default_lag_is_the_horizon(self):
        delay = DelayOperator("discrete", mu=0.25, c_phi=0.0)
        assert float(delay.lag(3.0)) == 0.25
        assert delay.is_zero

    def test_invalid_delay(self):
        with pytest.raises(ConfigurationError):
            DelayOperator("discrete", mu=0.0, c_phi=0.0)
        with pytest.raises(ConfigurationError):
            DelayOperator("fractional", mu=1.0, c_phi=0.0)


class TestBounds:

    def test_default_scenario(self, default_cfg):
        bounds = validate_scenario(default_cfg)
        assert bounds.beta1 > 0
        assert bounds.beta == pytest.approx(2.0)
        assert bounds.prefactor == pytest.approx(2.0, abs=1e-12)
        assert bounds.beta - bounds.beta1 == pytest.approx(bounds.delay_gap)

    def test_beta1_formula(self):
        assert beta1_for(1.0, 1.0, 1.0, 0.1, 0.5) == pytest.approx(1 - 0.1 * math.exp(0.5))

    def test_select_bounds_prefers_largest_beta(self):
        bounds = select_bounds(1.0, 1.0, 1.0, 0.1, 0.5)
        assert bounds.beta == pytest.approx(2.0)
        assert bounds.delta == 0.5
        assert bounds.delta_bar == 2.0

    def test_no_delay(self):
        bounds = select_bounds(1.0, 1.0, 1.0, 0.0, 0.5)
        assert bounds.beta == bounds.beta1 == 2.0
        assert bounds.prefactor == 1.0

    def test_delay_too_strong(self):
        with pytest.raises(DelayTooStrongError) as excinfo:
            select_bounds(1.0, 1.0, 1.0, 5.0, 1.0)
        assert excinfo.value.clause == "beta_1 > 0"

    def test_constants(self):
        assert absorbing_coefficient_threshold(1.0, 1.0) == pytest.approx(2.25)
        assert sigma_upper_bound(3, 1.0) == pytest.approx(1 / 3)
        assert sigma_upper_bound(3, 4.5) == pytest.approx(0.25)


class TestValidation:

    def test_default_passes_every_check(self, default_cfg):
        checks = check_assumptions(default_cfg)
        assert all(check.passed for check in checks)
        assert "absorbing-coefficient" in {check.clause for check in checks}

    def test_linear_fails_absorbing_condition(self, linear_cfg):
        with pytest.raises(AssumptionError) as excinfo:
            validate_scenario(linear_cfg)
        assert excinfo.value.clause == "absorbing-coefficient"
        bounds = validate_scenario(linear_cfg, absorbing=False)
        assert bounds.beta1 == pytest.approx(2.0)

    def test_zero_zeta(self, default_data, make_cfg):
        with pytest.raises(AssumptionError) as excinfo:
            validate_scenario(make_cfg(default_data, zeta=0.0))
        assert excinfo.value.clause == "zeta>0"

    def test_weak_diffusion_fails(self):
        cfg = load_scenario(Config.SCENARIO_DIR / "weak_diffusion.json")
        with pytest.raises(AssumptionError) as excinfo:
            validate_scenario(cfg)
        assert excinfo.value.clause == "absorbing-coefficient"

    def test_sigma_out_of_range(self, default_data, make_cfg):
        failed = [c.clause for c in check_assumptions(make_cfg(default_data, sigma=0.5)) if not c.passed]
        assert failed == ["sigma-range"]

    def test_lipschitz_constant_too_small(self, default_data, make_cfg):
        delay = dict(default_data["delay"], c_phi=0.01)
        failed = [c.clause for c in check_assumptions(make_cfg(default_data, delay=delay)) if not c.passed]
        assert failed == ["phi-lipschitz"]


class TestInitialHistory:

    def test_peak_without_interior_extremum(self):
        mu = 0.25
        chi = InitialHistory(SpectralField.unit(4, 0), amplitude=0.5, frequency=math.pi / (2 * mu))
        assert chi._peak(mu) == pytest.approx(1.0)

    def test_peak_with_interior_extremum(self):
        mu = 0.25
        chi = InitialHistory(SpectralField.unit(4, 0), amplitude=0.5, frequency=3 * math.pi / (2 * mu))
        assert chi._peak(mu) == pytest.approx(1.5)

    @pytest.mark.parametrize("amplitude,frequency", [(0.3, 4.0), (-0.8, 11.0), (1.7, 0.5), (0.0, 3.0)])
    def test_windowed_energy_matches_sampling(self, line, amplitude, frequency):
        mu = 0.7
        basis = build_basis(line)
        coeffs = SpectralField(1.0 / np.arange(1, 17))
        chi = InitialHistory(coeffs, amplitude=amplitude, frequency=frequency)
        rho = np.linspace(-mu, 0.0, 20001)
        factor = np.max(np.abs(1 + amplitude * np.sin(frequency * rho)))
        expected = factor ** 2 * float(np.sum(coeffs.coeffs ** 2 * (1 + 0.8 * basis.eigenvalues)))
        assert chi.windowed_energy(basis, 0.8, mu) == pytest.approx(expected, rel=1e-6)


class TestForcing:

    def test_separable_norm(self, default_cfg):
        np.testing.assert_allclose(default_cfg.forcing.norm_squared([0.0, 3.0]), [1.25, 1.25])
        assert default_cfg.forcing.translation_bound(0.0, 5.0) == pytest.approx(1.25)

    def test_spectral_table(self, default_data, make_cfg):
        forcing = {"kind": "spectralTable", "table": {"mean": [1.0], "amplitude": [0.0, 2.0],
                                                      "frequency": [0.0, 1.0], "phase": [0.0, 0.0]}}
        cfg = make_cfg(default_data, forcing=forcing)
        at = cfg.forcing.at(math.pi / 2).coeffs
        assert at[0] == 1.0 and at[1] == pytest.approx(2.0)
        assert float(cfg.forcing.norm_squared(math.pi / 2)[0]) == pytest.approx(5.0)


class TestScenarioLoading:

    def test_default_file(self, default_cfg):
        assert default_cfg.name == "default"
        assert default_cfg.basis.size == 32
        assert default_cfg.dt == pytest.approx(0.25 / 40)
        assert default_cfg.diffusion.floor_shift == 0.0

    def test_increasing_epsilon_shifts_floor(self):
        cfg = load_scenario(Config.SCENARIO_DIR / "distributed.json")
        assert cfg.diffusion.floor_shift == cfg.epsilon.bound_l
        assert cfg.delay.quadrature_intervals == cfg.steps_per_delay

    def test_size_mismatch(self, default_cfg):
        with pytest.raises(ConfigurationError):
            default_cfg.replace(initial_history=InitialHistory(SpectralField.zeros(3)))

    def test_malformed_json(self, write_scenario):
        path = write_scenario('{"domain": {"dims": 1,')
        with pytest.raises(ScenarioParseError) as excinfo:
            load_scenario(path)
        assert str(path) in excinfo.value.location

    def test_missing_key(self, default_data, write_scenario):
        del default_data["zeta"]
        with pytest.raises(ScenarioParseError, match="scenario.zeta"):
            load_scenario(write_scenario(default_data))

    def test_mode_position_outside_basis(self, default_data, write_scenario):
        default_data["initial_history"] = {"coeffs": {"modes": {"40": 1.0}}}
        with pytest.raises(ScenarioParseError, match="outside"):
            load_scenario(write_scenario(default_data))

    def test_hash_tracks_overrides(self, linear_data):
        assert scenario_hash(linear_data) == scenario_hash(dict(reversed(list(linear_data.items()))))
        assert scenario_hash(override_data(linear_data, horizon=1.0)) != scenario_hash(linear_data)

    def test_step_override(self):
        cfg, digest = load_run_scenario(Config.SCENARIO_DIR / "linear.json", dt=0.125, horizon=1.0)
        assert cfg.steps_per_delay == 4
        assert cfg.horizon == 1.0
        assert len(digest) == 64

    def test_step_must_divide_delay(self):
        with pytest.raises(ScenarioParseError, match="does not divide"):
            load_run_scenario(Config.SCENARIO_DIR / "linear.json", dt=0.3)
