"""Densities, slice geometry, drift recovery and the integrator."""
import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from entroflow.curves import (
    DensityError,
    DriftField,
    GridMismatchError,
    MeasureCurve,
    PositivityError,
    dual_norm,
    dual_norm_sup,
    edge_weights,
    edge_weights_grad,
    entropy,
    forward_integrate,
    heat_flow_curve,
    identric_log_mean,
    interval_densities,
    log_mean,
    random_density,
    random_smooth_curve,
    recover_continuity_drift,
    recover_fp_drift,
    time_grid,
    v_norm,
    validate_density,
    weak_fp_defect,
    z_inner,
)
from entroflow.space import Space, k2, ring
from entroflow.suite import random_graph

positive = st.floats(1e-6, 1e6, allow_nan=False)


def stationary(space, N=4, t=-0.5):
    return MeasureCurve(space, time_grid(t, N), np.ones((N + 1, space.n)))


def gradient_drift(space, rng, N, amp=1.0):
    psi = amp * rng.standard_normal((N, space.n))
    psi = np.stack([space.heat_apply(p, 0.002) for p in psi])
    return DriftField.from_potentials(space, psi)


# ----------------------------------------------------------------- density
def test_entropy_uniform_is_zero(ring32):
    assert entropy(ring32, np.ones(32)) == 0


def test_entropy_k2(K2):
    assert entropy(K2, [1.5, 0.5]) == pytest.approx(0.75 * np.log(1.5) - 0.25 * np.log(2), rel=1e-15)


def test_entropy_concentrated():
    sp = Space([0.2, 0.3, 0.5], [[0, 1], [1, 2]], [1.0, 1.0])
    rho = np.array([1 / 0.2, 1e-10, 1e-10])
    rho[0] = (1 - 1e-10 * 0.8) / 0.2
    assert entropy(sp, rho) == pytest.approx(-np.log(0.2), abs=1e-8)


@given(st.integers(0, 10_000))
def test_entropy_nonnegative(seed):
    r = np.random.default_rng(seed)
    sp = random_graph(r, int(r.integers(2, 20)))
    assert entropy(sp, random_density(sp, r, 2.0)) >= -1e-15


def test_density_validation(K2):
    with pytest.raises(DensityError, match="mass"):
        validate_density(K2, [1.0, 0.5])
    with pytest.raises(DensityError, match="floor"):
        validate_density(K2, [2.0, 0.0])
    with pytest.raises(DensityError, match="entries"):
        validate_density(K2, [1.0, 1.0, 1.0])


# ---------------------------------------------------------- log mean
def test_log_mean_values():
    assert log_mean(1.0, 1.0) == 1.0
    assert log_mean(3.0, 3.0) == pytest.approx(3.0, rel=1e-15)
    assert log_mean(1.5, 0.5) == pytest.approx(1 / np.log(3), rel=1e-15)


@given(positive, positive)
def test_log_mean_against_definition(a, b):
    lm = float(log_mean(a, b))
    assert min(a, b) * (1 - 1e-14) <= lm <= max(a, b) * (1 + 1e-14)
    assert np.sqrt(a * b) * (1 - 1e-12) <= lm <= 0.5 * (a + b) * (1 + 1e-12)
    if abs(a - b) > 0.2 * (a + b):
        assert lm == pytest.approx((a - b) / (np.log(a) - np.log(b)), rel=1e-13)


@given(st.floats(0.1, 10), st.floats(-0.3, 0.3))
def test_log_mean_near_diagonal_high_precision(a, rel):
    from decimal import Decimal, getcontext

    getcontext().prec = 50
    b = a * (1 + rel)
    if a == b:
        return
    da, db = Decimal(a), Decimal(b)
    ref = float((db - da) / (db.ln() - da.ln()))
    assert float(log_mean(a, b)) == pytest.approx(ref, rel=2e-15)


@given(positive, positive)
def test_log_mean_chain_rule_exact(a, b):
    # rho_hat (D log rho) = D rho on every edge
    assert float(log_mean(a, b)) * (np.log(b) - np.log(a)) == pytest.approx(b - a, rel=1e-13, abs=1e-13 * max(a, b))


@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_log_mean_gradient_finite_difference(a, b):
    sp = k2()
    ga, gb = edge_weights_grad(sp, np.array([a, b]))
    h = 1e-6
    fa = (log_mean(a * (1 + h), b) - log_mean(a * (1 - h), b)) / (2 * h * a)
    fb = (log_mean(a, b * (1 + h)) - log_mean(a, b * (1 - h))) / (2 * h * b)
    assert float(ga[0]) == pytest.approx(float(fa), rel=1e-6, abs=1e-9)
    assert float(gb[0]) == pytest.approx(float(fb), rel=1e-6, abs=1e-9)


@given(positive, positive)
def test_identric_mean_entropy_exactness(a, b):
    # (b - a) log I(a, b) = (b log b - b) - (a log a - a)
    li = float(identric_log_mean(a, b))
    assert (b - a) * li == pytest.approx(b * np.log(b) - a * np.log(a) - (b - a), rel=1e-11, abs=1e-11 * max(a, b))


def test_uniform_edge_weights(ring32):
    np.testing.assert_allclose(edge_weights(ring32, np.ones(32)), 1.0)


# --------------------------------------------------------------- z_inner
def test_z_inner_zero(ring32, rng):
    assert z_inner(ring32, np.ones(32), rng.standard_normal(32), np.zeros(32)) == 0


def test_z_inner_k2(K2):
    D = K2.gradient([1.0, 0.0])
    assert z_inner(K2, np.ones(2), D, D) == pytest.approx(1.0)


@given(st.integers(0, 10_000))
def test_z_inner_cauchy_schwarz(seed):
    r = np.random.default_rng(seed)
    sp = random_graph(r, int(r.integers(2, 15)))
    rho = random_density(sp, r)
    U, W = r.standard_normal((2, sp.n_edges))
    assert z_inner(sp, rho, U, W) ** 2 <= z_inner(sp, rho, U, U) * z_inner(sp, rho, W, W) * (1 + 1e-12)


# ------------------------------------------------------------------ curves
def test_curve_grid_validation(K2):
    with pytest.raises(DensityError, match="end"):
        MeasureCurve(K2, [-1.0, -0.5], np.ones((2, 2)))
    with pytest.raises(DensityError, match="uniform"):
        MeasureCurve(K2, [-1.0, -0.9, 0.0], np.ones((3, 2)))
    with pytest.raises(DensityError):
        MeasureCurve(K2, [0.0], np.ones((1, 2)))


def test_drift_grid_mismatch(K2):
    c = stationary(K2, N=3)
    with pytest.raises(GridMismatchError):
        v_norm(c, DriftField(np.zeros((2, 1))))
    with pytest.raises(GridMismatchError):
        DriftField(np.zeros((3, 2))).check(K2)


def test_from_potentials_is_gradient(ring32, rng):
    d = DriftField.from_potentials(ring32, rng.standard_normal((3, 32)))
    assert d.is_gradient(ring32)
    np.testing.assert_allclose(d.potentials @ ring32.m, 0, atol=1e-15)


# ---------------------------------------------------------------- v_norm
def test_v_norm_zero(ring32):
    assert v_norm(stationary(ring32), DriftField.zeros(ring32, 4)) == 0


def test_v_norm_time_constant(ring32, rng):
    U = rng.standard_normal(32)
    c = stationary(ring32, N=5, t=-0.4)
    val = v_norm(c, DriftField(np.tile(U, (5, 1))))
    assert val == pytest.approx(0.4 * z_inner(ring32, np.ones(32), U, U), rel=1e-14)


def test_v_norm_direct_summation(rng):
    sp = random_graph(rng, 9)
    c = random_smooth_curve(sp, rng, t=-0.3, N=6)
    V = rng.standard_normal((6, sp.n_edges))
    total = 0.0
    for k in range(6):
        rb = 0.5 * (c.rho[k] + c.rho[k + 1])
        for e, (x, y) in enumerate(sp.edges):
            a, b = rb[x], rb[y]
            lam = a if a == b else (a - b) / (np.log(a) - np.log(b))
            total += c.dt * sp.w[e] * lam * V[k, e] ** 2
    assert v_norm(c, DriftField(V)) == pytest.approx(total, rel=1e-12)


# ---------------------------------------------------------- drift recovery
def test_continuity_drift_stationary(ring32):
    Y = recover_continuity_drift(stationary(ring32))
    assert np.abs(Y.values).max() < 1e-14


def test_continuity_drift_k2_linear_interpolation(K2):
    t, N = -0.8, 4
    s = time_grid(t, N)
    frac = (s - t) / -t
    rho = np.array([1.5, 0.5]) + frac[:, None] * np.array([-0.5, 0.5])
    c = MeasureCurve(K2, s, rho)
    Y = recover_continuity_drift(c)
    for k in range(N):
        rb = 0.5 * (rho[k] + rho[k + 1])
        lam = (rb[0] - rb[1]) / (np.log(rb[0]) - np.log(rb[1]))
        # -div(lam Y) = d_s rho reduces to 2 lam Y = 1 / (2 |t|)
        assert Y.values[k, 0] == pytest.approx(1 / (4 * -t * lam), rel=1e-13)


def test_continuity_roundtrip_without_diffusion(ring32, rng):
    Ystar = gradient_drift(ring32, rng, 64, amp=0.05)
    rho0 = random_density(ring32, rng, 0.5, smooth=0.005)
    c = forward_integrate(ring32, rho0, Ystar, -0.1, diffusion=False)
    Y = recover_continuity_drift(c)
    err = v_norm(c, DriftField(Y.values - Ystar.values)) / v_norm(c, Ystar)
    assert err <= 1e-6


def test_fp_drift_of_heat_flow_vanishes(ring32, rng):
    c = forward_integrate(ring32, random_density(ring32, rng, 0.8), DriftField.zeros(ring32, 16), -0.05)
    assert np.abs(recover_fp_drift(c).values).max() < 1e-8
    assert dual_norm(c) < 1e-8
    assert dual_norm_sup(c) < 1e-8


def test_fp_drift_stationary(grid8):
    assert np.abs(recover_fp_drift(stationary(grid8)).values).max() < 1e-14
    assert dual_norm(stationary(grid8)) == 0


def test_fp_roundtrip(ring32, rng):
    Vstar = gradient_drift(ring32, rng, 128, amp=0.05)
    c = forward_integrate(ring32, random_density(ring32, rng, 0.5, smooth=0.005), Vstar, -0.1)
    V = recover_fp_drift(c)
    err = v_norm(c, DriftField(V.values - Vstar.values)) / v_norm(c, Vstar)
    assert err <= 1e-6
    assert V.is_gradient(ring32)


def test_strong_form_residual(rng):
    sp = random_graph(rng, 10)
    c = random_smooth_curve(sp, rng, t=-0.2, N=8)
    V = recover_fp_drift(c)
    rb = interval_densities(c)
    flux = V.values * edge_weights(sp, rb)
    resid = c.derivative() - 0.5 * sp.beta * sp.laplacian(rb) + sp.divergence(flux)
    assert np.abs(resid).max() <= 1e-9 * max(1.0, np.abs(c.derivative()).max())


def test_minimality_against_divergence_free_fields(rng):
    # a 6-node graph with two independent cycles
    sp = Space(np.full(6, 1 / 6), [[0, 1], [1, 2], [2, 0], [2, 3], [3, 4], [4, 5], [5, 3]], rng.uniform(0.5, 2, 7))
    c = random_smooth_curve(sp, rng, t=-0.3, N=3)
    Y = recover_continuity_drift(c)
    base = v_norm(c, Y)
    rb = interval_densities(c)
    rh = edge_weights(sp, rb)
    for k in range(c.N):
        # fields U with B^T (w rho_hat U) = 0 leave the constraint untouched
        null = scipy.linalg.null_space(sp.incidence.T * (sp.w * rh[k]))
        assert null.shape[1] == 2
        for j in range(null.shape[1]):
            U = np.zeros_like(Y.values)
            U[k] = 0.1 * null[:, j]
            assert abs(z_inner(sp, rb[k], Y.values[k], U[k])) < 1e-12
            assert v_norm(c, DriftField(Y.values + U)) > base


def test_weak_identity_on_sub_intervals(rng):
    sp = random_graph(rng, 12)
    c = random_smooth_curve(sp, rng, t=-0.4, N=10)
    V = recover_fp_drift(c)
    phi = rng.standard_normal((10, 12))
    for k0, k1 in [(0, 10), (0, 3), (4, 9), (7, 8)]:
        assert abs(weak_fp_defect(c, V, phi, k0, k1)) < 1e-12
    # a wrong drift is detected
    assert abs(weak_fp_defect(c, DriftField(V.values * 1.1), phi)) > 1e-6


def test_riesz_equality(ring32, rng):
    c = random_smooth_curve(ring32, rng, t=-0.25, N=16)
    a, b = dual_norm(c), dual_norm_sup(c)
    assert a == pytest.approx(b, rel=1e-8)
    assert a == pytest.approx(np.sqrt(v_norm(c, recover_fp_drift(c))), rel=1e-14)


@pytest.mark.parametrize("midpoint", ["arithmetic", "identric"])
def test_riesz_equality_midpoints(rng, midpoint):
    sp = random_graph(rng, 8)
    c = random_smooth_curve(sp, rng, t=-0.3, N=5)
    assert dual_norm(c, midpoint=midpoint) == pytest.approx(dual_norm_sup(c, midpoint=midpoint), rel=1e-8)


# --------------------------------------------------------------- integrator
def test_integrator_heat_flow_second_order(ring32, rng):
    rho0 = random_density(ring32, rng, 0.5, smooth=0.005)
    errs = []
    for N in (8, 16, 32):
        c = forward_integrate(ring32, rho0, DriftField.zeros(ring32, N), -0.02)
        errs.append(np.abs(c.rho[-1] - ring32.heat_measure(rho0, 0.02)).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.5) and np.all(ratios < 4.5)


def test_integrator_mass_exact(rng):
    sp = random_graph(rng, 10)
    c = forward_integrate(sp, random_density(sp, rng), DriftField(0.3 * rng.standard_normal((20, sp.n_edges))), -0.2)
    assert np.abs(c.rho @ sp.m - 1).max() < 1e-13


def test_divergence_free_drift_keeps_uniform(ring32):
    c = forward_integrate(ring32, np.ones(32), DriftField(np.full((6, 32), 0.7)), -0.3)
    np.testing.assert_allclose(c.rho, 1.0, atol=1e-13)


def test_k2_flux_balance_is_stationary(K2):
    # (beta/2) Lap rho = div(rho_hat V) gives V = -log(3)/2 on the edge
    V = DriftField(np.full((5, 1), -0.5 * np.log(3)))
    c = forward_integrate(K2, [1.5, 0.5], V, -1.0)
    np.testing.assert_allclose(c.rho, np.tile([1.5, 0.5], (6, 1)), atol=1e-13)


def test_integrator_positivity_error(K2):
    with pytest.raises(PositivityError) as info:
        forward_integrate(K2, [1.0, 1.0], DriftField(np.full((2, 1), 50.0)), -1.0)
    assert info.value.step == 0 and "smaller time step" in str(info.value)


def test_heat_flow_curve_matches_semigroup(K2):
    c = heat_flow_curve(K2, [1.5, 0.5], -1.0, 4)
    e = np.exp(-2 * (c.s + 1.0))
    np.testing.assert_allclose(c.rho[:, 0], 1 + 0.5 * e, atol=1e-14)


def test_random_density_unit_mass(grid8, rng):
    for smooth in (0.0, 0.01):
        rho = random_density(grid8, rng, 1.0, smooth=smooth)
        assert rho @ grid8.m == pytest.approx(1.0, abs=1e-14)
