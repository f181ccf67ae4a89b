import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import bisect

from spinorbit.dynamics import DissipationSpec, ModelParams, ReducedState, generalized_forces, kinetic_matrix
from spinorbit.equilibrium import (
    Equilibrium,
    IndefiniteHessianError,
    NewtonDivergenceError,
    OrderingViolationError,
    Perturbation,
    Thresholds,
    check_equilibrium,
    find_equilibrium,
    kepler_radius,
    lasalle_experiment,
    leading_order_differences,
    manifold_distance,
    nd_direct_residuals,
    nd_residual_check,
    nd_specialized_residuals,
    transversal_hessian,
    EquilibriumError,
)
from spinorbit.potentials import ElasticCoeffs, GravityParams, symmetric_cubic, veff_gradient, veff_hessian, veff_value

P = 50.1
EPSILONS = (1e-2, 1e-3, 1e-4)


@pytest.fixture(scope="module")
def params():
    return ModelParams()


@pytest.fixture(scope="module")
def eqs(params):
    return {eps: find_equilibrium(P, params, epsilon=eps) for eps in EPSILONS}


# --- Kepler radius ---

@pytest.mark.parametrize("p, expect", [(1.0, 1.0), (2.0, 4.0)])
def test_kepler_radius_point_mass(p, expect):
    # I0 must be positive; a negligible value reproduces the point-mass radius
    gp = GravityParams(GM=1.0, m=1.0, I0=1e-14)
    assert kepler_radius(p, gp) == pytest.approx(expect, rel=1e-12)


def test_kepler_radius_matches_bisection():
    gp = GravityParams(GM=1.0, m=1.0, I0=0.1)

    def dV(R):
        return gp.GM * gp.m / R**2 - gp.m * R / (gp.m * R * R + gp.I0) ** 2

    ref = bisect(dV, 0.5, 2.0, xtol=1e-15, rtol=1e-15, maxiter=200)
    assert abs(kepler_radius(1.0, gp) - ref) < 1e-12


def test_kepler_radius_errors():
    with pytest.raises(EquilibriumError):
        kepler_radius(0.0, GravityParams())


# --- equilibrium ---

def test_ordering_for_all_epsilons(eqs):
    for eq in eqs.values():
        assert eq.Jbar[0] < eq.Jbar[1] < eq.Jbar[2]


def test_criticality_in_all_directions(params, eqs):
    for eps, eq in eqs.items():
        pe = params.with_epsilon(eps)
        y = eq.coordinates(0.4)
        g = veff_gradient(y, pe.gravity, pe.elastic, P)
        H = veff_hessian(y, pe.gravity, pe.elastic, P)
        d = np.sqrt(np.abs(np.diag(H)))
        d[d == 0] = 1.0
        assert np.linalg.norm(g / d) < 1e-10
        assert eq.residual_norm < 1e-12


def test_transversal_hessian_positive(eqs):
    for eq in eqs.values():
        assert eq.transversal_hessian_eigs.min() > 0


def test_transversal_projection_drops_the_neutral_direction(params, eqs):
    eq = eqs[1e-3]
    H = veff_hessian(eq.coordinates(), params.gravity, params.elastic, P)
    raw = np.linalg.eigvalsh(H)
    assert np.min(np.abs(raw)) < 1e-10 * np.max(np.abs(raw))
    assert transversal_hessian(H).shape == (params.dim - 1, params.dim - 1)


def test_veff_constant_along_manifold(params, eqs):
    eq = eqs[1e-3]
    vals = [veff_value(eq.coordinates(chi), params.gravity, params.elastic, P) for chi in np.linspace(-3, 3, 13)]
    assert np.ptp(vals) < 1e-12 * abs(vals[0])


def test_scaling_halving_epsilon(params):
    for eps in EPSILONS:
        a = find_equilibrium(P, params, epsilon=eps)
        b = find_equilibrium(P, params, epsilon=eps / 2)
        ratio_shape = np.linalg.norm(np.r_[a.Jbar, a.zbar]) / np.linalg.norm(np.r_[b.Jbar, b.zbar])
        ratio_R = abs(a.Rbar - a.R0) / abs(b.Rbar - b.R0)
        assert ratio_shape == pytest.approx(2.0, rel=0.1)
        assert ratio_R == pytest.approx(2.0, rel=0.1)


def test_family_converges_to_kepler_seed(params):
    eps = [1e-3, 1e-4, 1e-5, 1e-6]
    eqs = [find_equilibrium(P, params, epsilon=e) for e in eps]
    dist = [np.linalg.norm(np.r_[e.Rbar - e.R0, e.Jbar, e.zbar]) for e in eqs]
    for e, d in zip(eps, dist):
        assert d / e == pytest.approx(dist[-1] / eps[-1], rel=0.06)


def test_leading_order_exact_with_quadratic_energy(params, eqs):
    # the two differences follow from the linear equations at (Rbar, Jbar3) exactly
    for eq in eqs.values():
        d12, d23 = leading_order_differences(eq, params)
        assert abs(d12 - (eq.Jbar[0] - eq.Jbar[1])) < 1e-12 * abs(d12)
        assert abs(d23 - (eq.Jbar[1] - eq.Jbar[2])) < 1e-12 * abs(d23)


def test_leading_order_with_seed_radius_shrinks_quadratically(params):
    """Evaluated at the Kepler seed the formulas carry an O(eps^2) error."""
    gp, co = params.gravity, params.elastic
    AB = co.A - co.B
    errs = []
    for eps in (1e-3, 5e-4, 2.5e-4):
        eq = find_equilibrium(P, params, epsilon=eps)
        d12 = -3 * gp.GM * eps / (AB * eq.R0**3)
        d23 = -eps * P**2 / (2 * AB * (gp.m * eq.R0**2 + gp.I0) ** 2)
        errs.append(np.hypot(d12 - (eq.Jbar[0] - eq.Jbar[1]), d23 - (eq.Jbar[1] - eq.Jbar[2])))
    for a, b in zip(errs, errs[1:]):
        assert a / b == pytest.approx(4.0, rel=0.1)


def test_leading_order_with_cubic_energy_shrinks_quadratically():
    params = ModelParams(elastic=ElasticCoeffs(cubic=symmetric_cubic(0.5)))
    errs = []
    for eps in (1e-3, 5e-4, 2.5e-4):
        eq = find_equilibrium(P, params, epsilon=eps)
        d12, d23 = leading_order_differences(eq, params)
        errs.append(np.hypot(d12 - (eq.Jbar[0] - eq.Jbar[1]), d23 - (eq.Jbar[1] - eq.Jbar[2])))
    for a, b in zip(errs, errs[1:]):
        assert a / b == pytest.approx(4.0, rel=0.15)


def test_newton_divergence_is_reported():
    params = ModelParams(elastic=ElasticCoeffs(epsilon=0.1))
    with pytest.raises(NewtonDivergenceError):
        find_equilibrium(P, params)


def test_check_equilibrium_distinct_errors(eqs):
    good = eqs[1e-3]
    check_equilibrium(good)
    with pytest.raises(OrderingViolationError):
        check_equilibrium(replace(good, Jbar=good.Jbar[::-1].copy()))
    eigs = good.transversal_hessian_eigs.copy()
    eigs[0] = -1e-3
    with pytest.raises(IndefiniteHessianError):
        check_equilibrium(replace(good, transversal_hessian_eigs=eigs))
    assert not issubclass(OrderingViolationError, IndefiniteHessianError)


def test_summary_is_plain_data(eqs):
    s = eqs[1e-3].summary()
    assert s["ordering_J1_lt_J2_lt_J3"] is True
    assert isinstance(s["Jbar"], list) and len(s["Jbar"]) == 3


# --- manifold distance ---

def test_manifold_distance_examples(eqs):
    eq = eqs[1e-3]
    assert manifold_distance(eq.state(0.9), eq) == 0.0
    st = eq.state()
    y = st.y.copy()
    y[0] += 2.5e-3
    assert manifold_distance(ReducedState(y, st.ydot), eq) == pytest.approx(2.5e-3, rel=1e-9)


def test_manifold_distance_shift_invariant(eqs, rng):
    eq = eqs[1e-3]
    for _ in range(20):
        y = eq.coordinates() + 1e-3 * rng.standard_normal(7)
        yd = 1e-3 * rng.standard_normal(7)
        d0 = manifold_distance(ReducedState(y, yd), eq)
        y2 = y.copy()
        y2[1] += 1.3
        y2[2] -= 1.3
        assert abs(manifold_distance(ReducedState(y2, yd), eq) - d0) < 1e-14


def test_manifold_distance_wraps_gamma(eqs):
    eq = eqs[1e-3]
    y = eq.coordinates()
    y[1] += 2 * math.pi + 1e-3
    assert manifold_distance(ReducedState(y, np.zeros(7)), eq) == pytest.approx(1e-3, rel=1e-9)


# --- the no-dissipation set ---

def nd_state(eq, rng, gamma=None):
    y = eq.coordinates() + 1e-3 * rng.standard_normal(7)
    y[1] = rng.uniform(-math.pi, math.pi)
    y[2] = (rng.uniform(-0.5, 0.5) if gamma is None else gamma) - y[1]
    yd = np.zeros(7)
    yd[0], yd[1] = 0.05 * rng.standard_normal(2)
    return ReducedState(y, yd)


@pytest.mark.parametrize("kappa", [0.0, 0.05, 0.1])
def test_nd_identity(eqs, rng, kappa):
    params = ModelParams().with_kappa(kappa)
    eq = eqs[1e-3]
    for _ in range(50):
        st = nd_state(eq, rng)
        a = kinetic_matrix(st.J, st.z, params.kinetic)
        dVdg = veff_gradient(st.y, params.gravity, params.elastic, P)[1]
        expect = (1 - a[0, 1] / a[0, 0]) * dVdg
        chi_ddot = rng.normal()
        assert abs(nd_residual_check(st, P, params, chi_ddot) - expect) < 1e-10
        if kappa == 0.0:
            assert nd_residual_check(st, P, params, chi_ddot) == pytest.approx(dVdg, rel=1e-12, abs=1e-15)


def test_nd_identity_vanishes_at_gamma_zero(params, eqs, rng):
    eq = eqs[1e-3]
    for _ in range(10):
        assert abs(nd_residual_check(nd_state(eq, rng, gamma=0.0), P, params, rng.normal())) < 1e-12


def test_nd_specialized_matches_assembly(eqs, rng):
    for kappa in (0.0, 0.05, 0.1):
        params = ModelParams().with_kappa(kappa)
        for _ in range(50):
            st = nd_state(eqs[1e-3], rng)
            chi_ddot = rng.normal()
            spec = nd_specialized_residuals(st, chi_ddot, P, params)
            direct = nd_direct_residuals(st, chi_ddot, P, params)
            np.testing.assert_allclose(spec, direct, rtol=0, atol=1e-10)


def test_nd_check_rejects_elastic_motion(params, eqs):
    st = eqs[1e-3].state()
    yd = st.ydot.copy()
    yd[4] = 1e-3
    with pytest.raises(ValueError):
        nd_residual_check(ReducedState(st.y, yd), P, params)


def test_frozen_shape_motion_leaves_the_set_off_the_manifold(params, eqs, rng):
    """Off gamma = 0 the shape is pushed: no orbit stays in the set there."""
    st = nd_state(eqs[1e-3], rng, gamma=0.3)
    M, f = generalized_forces(st.y, st.ydot, P, params, DissipationSpec.scalar(0.1))
    acc = np.linalg.solve(M, f)
    assert np.max(np.abs(acc[2:])) > 1e-6


# --- perturbations and the relaxation experiment ---

def test_perturbation_deterministic():
    base = ReducedState(np.r_[1.0, 0, 0, -1e-3, 0, 1e-3, 0], np.zeros(7))
    st = Perturbation(1e-3).apply(base)
    np.testing.assert_allclose(st.y - base.y, [1e-3, 1e-3, 0, 0, 0, 0, 0], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(st.ydot, [1e-3, 1e-3, 0, 0, 0, 0, 0])


def test_perturbation_seeded():
    base = ReducedState(np.r_[1.0, 0, 0, -1e-3, 0, 1e-3, 0], np.zeros(7))
    a = Perturbation(1e-3, seed=7).apply(base)
    b = Perturbation(1e-3, seed=7).apply(base)
    c = Perturbation(1e-3, seed=8).apply(base)
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(a.y, c.y)
    off = np.r_[a.y - base.y, a.ydot]
    assert np.linalg.norm(off) == pytest.approx(1e-3, rel=1e-12)


def test_perturbation_unknown_component():
    with pytest.raises(ValueError):
        Perturbation(1e-3, components=("theta",)).apply(ReducedState(np.ones(7), np.zeros(7)))


def test_zero_perturbation_passes_trivially(params, eqs):
    eq = eqs[1e-3]
    report, rec = lasalle_experiment(eq, params, Perturbation(0.0), DissipationSpec.scalar(0.1), 50.0,
                                     sample_dt=5.0)
    assert report.verdict == "PASS"
    # constant up to the integrator's error control at default tolerances
    assert np.max(report.manifold_distance) < 1e-9
    assert np.ptp(report.energy) < 1e-12 * abs(report.energy[0])
    d = report.to_dict(include_series=True)
    assert len(d["series"]["t"]) == len(d["series"]["energy"]) == rec.times.size


def test_conservative_contrast_case_does_not_decay(params, eqs):
    eq = eqs[1e-3]
    report, _ = lasalle_experiment(eq, params, Perturbation(1e-3), None, 300.0, sample_dt=1.0)
    assert report.verdict == "FAIL"
    assert report.classification == "stable, not asymptotic"
    assert report.final["energy_drift_relative"] < 1e-8
    assert report.eta == 0.0


def test_chart_exit_is_inconclusive(params, eqs):
    eq = eqs[1e-3]
    pert = Perturbation(1.0, components=("J1dot",))
    report, rec = lasalle_experiment(eq, params, pert, DissipationSpec.scalar(0.1), 10.0)
    assert report.verdict == "INCONCLUSIVE"
    assert rec.status == "chart_exit"
    assert "message" in report.final


def test_verdict_follows_thresholds(params, eqs):
    eq = eqs[1e-3]
    strict = Thresholds(manifold_distance=1e-30)
    report, _ = lasalle_experiment(eq, params, Perturbation(1e-4), DissipationSpec.scalar(0.1), 100.0,
                                   thresholds=strict, sample_dt=10.0)
    assert report.verdict == "FAIL"
    assert report.flags["manifold_distance"] is False
    assert report.flags["energy_nonincreasing"] is True
