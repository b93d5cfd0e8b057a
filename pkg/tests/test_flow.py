from dataclasses import replace

import numpy as np
import pytest

from coilopt.flow import (
    BoundsError,
    FidelityVector,
    GeometryFeatures,
    SurrogateConfig,
    SurrogateEvaluator,
    cost_model,
    dispersion_profile,
    extract_features,
    simulate_rtd,
)
from coilopt.geometry import NominalCoil
from coilopt.rtd import composite_objective, normalize_rtd

NOM = NominalCoil()
CFG = SurrogateConfig()


def straight_features(n=400, radius=3.0, length=158.0, config=CFG):
    area = np.full(n, np.pi * radius**2)
    return GeometryFeatures(
        area=area,
        hydraulic_radius=np.full(n, radius),
        curvature=np.zeros(n),
        pinch=np.ones(n),
        dean=np.zeros(n),
        path_length=length,
        flow_rate=config.flow_rate(radius),
    )


def fit_n(result):
    return composite_objective(normalize_rtd(result.times, result.concentrations)).n_star


class TestFidelityVector:
    def test_rounding(self):
        assert FidelityVector(2.4, 3.6).rounded() == (2, 4)

    def test_bounds(self):
        with pytest.raises(BoundsError):
            FidelityVector(0.4, 2.0).validate()
        FidelityVector(1.0, 4.0).validate()


class TestExtractFeatures:
    def test_nominal_coil(self):
        f = extract_features(np.full(36, 3.0), NOM, n_cells=200)
        assert np.allclose(f.area, np.pi * 9.0, rtol=1e-9)
        assert np.allclose(f.hydraulic_radius, 3.0, rtol=1e-6)
        analytic = 1.0 / 12.5
        assert np.all(np.abs(f.curvature - analytic) < 0.02 * analytic)
        assert np.allclose(f.pinch, 1.0)
        assert np.allclose(f.dean, 50 * np.sqrt(3.0 * f.curvature), rtol=1e-9)

    def test_pinched_ring(self):
        x = np.tile([2.0, 4.0] * 3, 6)[:36]
        f = extract_features(x, NOM, n_cells=100)
        interior = slice(20, 80)  # away from the constant end sections
        assert np.all(f.pinch[interior] <= 0.5)

    def test_coil_path_features(self):
        rng = np.random.default_rng(0)
        x = np.concatenate([rng.uniform(-3.5, 3.5, 6), rng.uniform(-1, 1, 6)])
        f = extract_features(x, NOM, parameterisation="coil-path", n_cells=100)
        assert np.allclose(f.pinch, 1.0)
        assert f.curvature.std() > 0  # the deviated path bends unevenly


class TestDispersionProfile:
    def test_neutral_modifier_on_straight_tube(self):
        f = straight_features(50)
        d = dispersion_profile(f, config=CFG)
        u = f.flow_rate / f.area
        d_base = CFG.molecular_diffusivity + (u * 3.0) ** 2 / (48 * CFG.molecular_diffusivity)
        assert np.allclose(d, d_base, rtol=1e-12)

    def test_monotone_in_dean(self):
        f1 = straight_features(10)
        f2 = straight_features(10)
        f2.dean = np.full(10, 10.0)
        f3 = straight_features(10)
        f3.dean = np.full(10, 20.0)
        d1 = dispersion_profile(f1, config=CFG)
        d2 = dispersion_profile(f2, config=CFG)
        d3 = dispersion_profile(f3, config=CFG)
        assert np.all(d2 < d1) and np.all(d3 <= d2)

    def test_uniform_features_give_uniform_profile(self):
        d = dispersion_profile(straight_features(64), config=CFG)
        assert np.allclose(d, d[0])

    def test_bounded_by_g_min(self):
        f = straight_features(10)
        f.dean = np.full(10, 1e6)
        f.pinch = np.full(10, 1e-6)
        with pytest.raises(ValueError):
            GeometryFeatures(area=f.area, hydraulic_radius=f.hydraulic_radius,
                             curvature=f.curvature, pinch=np.zeros(10), dean=f.dean,
                             path_length=f.path_length, flow_rate=f.flow_rate)
        d = dispersion_profile(f, config=CFG)
        base = dispersion_profile(straight_features(10), config=CFG)
        assert np.all(d >= CFG.g_min * base * 0.999)


class TestSimulate:
    def test_plug_flow_limit(self):
        f = straight_features(200)
        res = simulate_rtd(f, np.full(200, 1e-9), FidelityVector(2.0, 1.0),
                           seed=0, config=replace(CFG, noise_relative=0.0))
        u = f.flow_rate / f.area[0]
        mean_t = np.trapezoid(res.times * res.concentrations, res.times)
        center = mean_t / res.mass_recovered()
        cell_time = (f.path_length / 200) / u
        assert abs(center - f.path_length / u) < 2 * cell_time

    def test_straight_tube_matches_dispersion_theory(self):
        # Closed-vessel advection-dispersion: mean residence L/u and
        # variance 2/Pe - 2/Pe^2 (1 - exp(-Pe)) in dimensionless time.
        cfg = replace(CFG, noise_relative=0.0)
        f = straight_features(400, config=cfg)
        d = dispersion_profile(f, config=cfg)
        res = simulate_rtd(f, d, FidelityVector(4.0, 1.0), seed=0, config=cfg)
        assert res.mass_recovered() == pytest.approx(1.0, abs=5e-3)
        u = f.flow_rate / f.area[0]
        tbar_expected = f.path_length / u
        t, c = res.times, res.concentrations
        area = np.trapezoid(c, t)
        tbar = np.trapezoid(t * c, t) / area
        var = np.trapezoid((t - tbar) ** 2 * c, t) / area
        pe = u * f.path_length / d[0]
        sigma_theta2 = 2 / pe - 2 / pe**2 * (1 - np.exp(-pe))
        assert tbar == pytest.approx(tbar_expected, rel=0.02)
        assert var / tbar**2 == pytest.approx(sigma_theta2, rel=0.15)

    def test_determinism(self):
        ev = SurrogateEvaluator("cross-section", NOM)
        x = np.linspace(2.2, 3.8, 36)
        r1 = ev.evaluate(x, (2.2, 3.1), seed=9)
        r2 = ev.evaluate(x, (2.2, 3.1), seed=9)
        assert np.array_equal(r1.times, r2.times)
        assert np.array_equal(r1.concentrations, r2.concentrations)
        assert r1.cost == r2.cost

    def test_noise_vanishes_at_top_fidelity(self):
        ev = SurrogateEvaluator("cross-section", NOM)
        x = np.full(36, 3.0)
        a = ev.evaluate(x, (4, 4), seed=1)
        b = ev.evaluate(x, (4, 4), seed=2)
        assert np.array_equal(a.concentrations, b.concentrations)
        a1 = ev.evaluate(x, (1, 1), seed=1)
        b1 = ev.evaluate(x, (1, 1), seed=2)
        assert not np.array_equal(a1.concentrations, b1.concentrations)

    def test_mass_conservation_all_fidelities(self):
        ev = SurrogateEvaluator("cross-section", NOM)
        x = np.full(36, 3.0)
        for axial in range(1, 5):
            for radial in range(1, 5):
                res = ev.evaluate(x, (axial, radial), seed=3)
                assert abs(res.mass_recovered() - 1.0) < 5e-3

    def test_cost_strictly_lower_at_lower_fidelity(self):
        ev = SurrogateEvaluator("cross-section", NOM)
        x = np.full(36, 3.0)
        low = ev.evaluate(x, (2, 2), seed=0).cost
        high = ev.evaluate(x, (3, 3), seed=0).cost
        assert low < high

    def test_axial_refinement_is_cauchy(self):
        ev = SurrogateEvaluator("cross-section", NOM)
        x = np.full(36, 3.0)
        n_stars = [fit_n(ev.evaluate(x, (a, 4.0), seed=3)) for a in (1, 2, 3, 4)]
        deltas = np.abs(np.diff(n_stars))
        assert np.all(np.diff(deltas) < 0)

    def test_pinch_sweep_never_decreases_n(self):
        ev = SurrogateEvaluator("cross-section", NOM)
        values = []
        for amp in np.linspace(0.0, 1.0, 10):
            x = np.tile([3 + amp, 3 - amp] * 3, 6)[:36]
            values.append(fit_n(ev.evaluate(x, (4, 4), seed=0)))
        assert np.all(np.diff(values) >= 0)


class TestCostModel:
    def test_base_case(self):
        base = cost_model(FidelityVector(1, 1), NOM.nominal_length, NOM, CFG)
        assert base == pytest.approx(CFG.cost_model_coefficient * 100)

    def test_axial_linear(self):
        a1 = cost_model(FidelityVector(1, 2), NOM.nominal_length, NOM, CFG)
        a2 = cost_model(FidelityVector(2, 2), NOM.nominal_length, NOM, CFG)
        assert a2 == pytest.approx(2 * a1)

    def test_radial_quadratic(self):
        r1 = cost_model(FidelityVector(2, 1), NOM.nominal_length, NOM, CFG)
        r2 = cost_model(FidelityVector(2, 2), NOM.nominal_length, NOM, CFG)
        assert r2 == pytest.approx(4 * r1)

    def test_strictly_increasing(self):
        grid = np.linspace(1, 4, 7)
        vals_a = [cost_model(FidelityVector(a, 2), 150.0) for a in grid]
        vals_r = [cost_model(FidelityVector(2, r), 150.0) for r in grid]
        assert np.all(np.diff(vals_a) > 0)
        assert np.all(np.diff(vals_r) > 0)


class TestEvaluatorContract:
    def test_bounds_violation_names_index(self):
        ev = SurrogateEvaluator("cross-section", NOM)
        x = np.full(36, 3.0)
        x[7] = 5.0
        with pytest.raises(BoundsError) as exc:
            ev.evaluate(x, (2, 2), seed=0)
        assert exc.value.field == "x[7]"

    def test_wrong_dimension_rejected(self):
        ev = SurrogateEvaluator("cross-section", NOM)
        with pytest.raises(BoundsError):
            ev.evaluate(np.full(10, 3.0), (2, 2), seed=0)

    def test_fidelity_out_of_box_rejected(self):
        ev = SurrogateEvaluator("cross-section", NOM)
        with pytest.raises(BoundsError):
            ev.evaluate(np.full(36, 3.0), (5, 2), seed=0)

    def test_labels_and_bounds_shapes(self):
        ev = SurrogateEvaluator("cross-section", NOM, n_c=4, n_l=2)
        assert ev.dim_x == 8
        assert len(ev.x_labels) == 8
        assert ev.x_bounds.shape == (8, 2)
        ev2 = SurrogateEvaluator("coil-path", NOM)
        assert ev2.dim_x == 12
        assert ev2.x_labels[0] == "drho0" and ev2.x_labels[6] == "dz0"

    def test_frozen_path_changes_features(self):
        rng = np.random.default_rng(4)
        frozen = np.concatenate([rng.uniform(-3.5, 3.5, 6), rng.uniform(-1, 1, 6)])
        ev_nominal = SurrogateEvaluator("cross-section", NOM, n_c=4, n_l=2)
        ev_frozen = ev_nominal.with_frozen_path(frozen)
        x = np.full(8, 3.0)
        a = ev_nominal.evaluate(x, (2, 2), seed=0)
        b = ev_frozen.evaluate(x, (2, 2), seed=0)
        assert not np.array_equal(a.concentrations, b.concentrations)
