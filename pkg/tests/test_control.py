"""Value-function objective, adjoint gradient, solver and oracles."""
import numpy as np
import pytest
import scipy.optimize

from entroflow.control import (
    Linear,
    OptimizerSettings,
    Quadratic,
    Scenario,
    ScenarioError,
    adjoint_gradient,
    brute_force_oracle,
    convexity_probe,
    hopf_cole_oracle,
    momentum_objective,
    objective,
    solve_value,
)
from entroflow.curves import DriftField, forward_integrate, log_mean, v_norm
from entroflow.space import k2, ring
from entroflow.suite import k2_scenario, random_graph, ring_scenario


def ring_data(n):
    x = np.arange(n) / n
    return 1 + 0.5 * np.sin(2 * np.pi * x), 0.5 * np.cos(2 * np.pi * x), np.cos(2 * np.pi * x)


def small_scenario(rng, n=6, N=4, terminal="linear", scale=0.3):
    sp = random_graph(rng, n)
    nu = np.exp(0.3 * rng.standard_normal(n))
    nu /= nu @ sp.m
    F = scale * rng.standard_normal((N + 1, n))
    if terminal == "linear":
        U = Linear(scale * rng.standard_normal(n))
    else:
        U = Quadratic(scale * rng.standard_normal(n), 0.7, scale * rng.standard_normal(n))
    return Scenario(sp, -0.3, N, nu, F, U)


# --------------------------------------------------------------- objective
def test_objective_trivial_zero():
    sc = Scenario(ring(8), -0.5, 4, np.ones(8), np.zeros(8), Linear(np.zeros(8)))
    assert objective(sc, DriftField.zeros(sc.space, 4)) == 0


def test_objective_unit_running_cost():
    sc = Scenario(ring(8), -0.7, 5, np.ones(8), np.ones(8), Linear(np.zeros(8)))
    assert objective(sc, np.zeros((5, 8))) == pytest.approx(0.7, rel=1e-14)


def test_objective_k2_hand_expansion():
    # rho = (1 + u, 1 - u); one implicit-midpoint step per interval of
    # u' = -2 beta u - 2 Lambda(1 + u, 1 - u) V
    sp = k2()
    t, N = -0.4, 2
    dt = -t / N
    V = np.array([0.3, -0.8])
    F = np.array([0.5, -0.2])
    f = np.array([1.0, -2.0])
    u = [0.25]
    for k in range(N):
        u0 = u[-1]

        def step(u1):
            ub = 0.5 * (u0 + u1)
            return u1 - u0 - dt * (-2 * ub - 2 * float(log_mean(1 + ub, 1 - ub)) * V[k])

        u.append(scipy.optimize.brentq(step, -0.99, 0.99, xtol=1e-15))
    u = np.array(u)
    ub = 0.5 * (u[:-1] + u[1:])
    energy = 0.5 * dt * np.sum([float(log_mean(1 + a, 1 - a)) for a in ub] * V**2)
    running_rows = 0.5 * F[0] * (1 + u) + 0.5 * F[1] * (1 - u)
    running = dt * (0.5 * running_rows[0] + running_rows[1] + 0.5 * running_rows[2])
    terminal = 0.5 * f[0] * (1 + u[-1]) + 0.5 * f[1] * (1 - u[-1])
    sc = Scenario(sp, t, N, [1.25, 0.75], F, Linear(f))
    assert objective(sc, V[:, None]) == pytest.approx(energy + running + terminal, rel=1e-13)


def test_running_sign_flips_running_cost():
    kw = dict(space=ring(8), t=-0.5, N=4, nu=np.ones(8), F=np.ones(8), terminal=Linear(np.zeros(8)))
    assert objective(Scenario(**kw, running_sign=-1.0), np.zeros((4, 8))) == pytest.approx(-0.5)


def test_scenario_validation():
    sp = k2()
    with pytest.raises(ScenarioError):
        Scenario(sp, 0.5, 4, [1, 1], [0, 0], Linear(np.zeros(2)))
    with pytest.raises(ScenarioError):
        Scenario(sp, -0.5, 1, [1, 1], [0, 0], Linear(np.zeros(2)))
    with pytest.raises(ScenarioError):
        Scenario(sp, -0.5, 4, [1, 1], np.zeros((3, 2)), Linear(np.zeros(2)))
    with pytest.raises(ScenarioError):
        Scenario(sp, -0.5, 4, [1, 1], [0, 0], Linear(np.zeros(2)), running_sign=2.0)


# ----------------------------------------------------------------- gradient
def test_gradient_zero_at_heat_flow():
    sc = Scenario(ring(10), -0.3, 6, np.exp(np.sin(np.arange(10))) / np.mean(np.exp(np.sin(np.arange(10)))),
                  np.zeros(10), Linear(np.zeros(10)))
    assert np.abs(adjoint_gradient(sc, np.zeros((6, 10)))).max() == 0


@pytest.mark.parametrize("terminal", ["linear", "quadratic"])
def test_gradient_matches_finite_differences(rng, terminal):
    for _ in range(3):
        sc = small_scenario(rng, terminal=terminal, scale=1.0)
        V = 0.3 * rng.standard_normal((sc.N, sc.space.n_edges))
        g = adjoint_gradient(sc, V)
        e = rng.standard_normal(V.shape)
        h = 1e-6
        fd = (objective(sc, V + h * e) - objective(sc, V - h * e)) / (2 * h)
        assert np.sum(g * e) == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_gradient_k2_coordinatewise(rng):
    sc = Scenario(k2(), -0.5, 3, [1.4, 0.6], [0.3, -0.1], Linear(np.array([0.5, -0.5])))
    V = rng.standard_normal((3, 1)) * 0.4
    g = adjoint_gradient(sc, V)
    for k in range(3):
        e = np.zeros_like(V)
        e[k] = 1.0
        fd = (objective(sc, V + 1e-6 * e) - objective(sc, V - 1e-6 * e)) / 2e-6
        assert g[k, 0] == pytest.approx(fd, abs=1e-8)


def test_energy_is_quadratic_in_the_drift(ring32, rng):
    c = forward_integrate(ring32, np.ones(32), DriftField.zeros(ring32, 4), -0.2)
    V = DriftField(rng.standard_normal((4, 32)))
    assert v_norm(c, DriftField(2.5 * V.values)) == pytest.approx(6.25 * v_norm(c, V), rel=1e-14)
    h = 1e-6
    d = (0.5 * v_norm(c, DriftField((1 + h) * V.values)) - 0.5 * v_norm(c, DriftField((1 - h) * V.values))) / (2 * h)
    assert d == pytest.approx(v_norm(c, V), rel=1e-8)


# ------------------------------------------------------------------- solver
def test_solve_trivial_problem():
    sc = Scenario(ring(8), -0.2, 4, np.ones(8), np.zeros(8), Linear(np.zeros(8)))
    sol = solve_value(sc)
    assert sol.value == 0 and np.all(sol.drift.values == 0)


def test_solution_invariants(rng):
    sc = small_scenario(rng)
    sol = solve_value(sc)
    assert sol.converged and sol.kkt_residual <= 1e-6
    np.testing.assert_array_equal(sol.curve.rho, forward_integrate(sc.space, sc.nu, sol.drift, sc.t).rho)
    assert sol.value <= sol.baseline + 1e-12
    assert sol.value >= sc.lower_bound()
    assert sol.value == pytest.approx(objective(sc, sol.drift), rel=1e-14)
    assert sol.theorem1 is not None and sol.theorem1.theorem1_slack >= 0
    assert sol.drift.is_gradient(sc.space, tol=1e-9)


def test_solve_quadratic_terminal(rng):
    sc = small_scenario(rng, terminal="quadratic")
    sol = solve_value(sc)
    assert sol.kkt_residual <= 1e-6 and sol.value <= sol.baseline


def test_boundary_optimum_reported_unconverged():
    # a strong terminal push empties a node; the optimum sits on the positivity
    # boundary and the solver says so instead of claiming convergence
    sp = k2()
    sc = Scenario(sp, -0.2, 2, [1.0, 1.0], [0.0, 0.0], Linear(np.array([-40.0, 40.0])),
                  OptimizerSettings(restarts=1))
    sol = solve_value(sc)
    assert sol.value < sol.baseline
    assert sol.curve.rho.min() < 0.05
    assert not sol.converged and sol.kkt_residual > 1e-6


def test_k2_oracle_triangle():
    sc = k2_scenario()
    a = solve_value(sc).value
    b = hopf_cole_oracle(sc).value
    c = brute_force_oracle(sc).value
    assert abs(a - b) <= 1e-4 and abs(a - c) <= 1e-4 and abs(b - c) <= 1e-4


def test_ring64_solver_matches_hopf_cole():
    sc = ring_scenario()
    sol = solve_value(sc)
    hc = hopf_cole_oracle(sc)
    assert abs(sol.value - hc.value) <= 1e-3 * abs(hc.value)
    assert sol.kkt_residual <= 1e-6
    scale = np.abs(hc.drift.values).max()
    assert np.abs(sol.drift.values - hc.drift.values).max() <= 0.05 * scale


# ------------------------------------------------------------------ oracles
def test_hopf_cole_constant_terminal():
    sc = Scenario(ring(16), -0.3, 6, np.ones(16), np.zeros(16), Linear(np.full(16, 2.5)))
    sol = hopf_cole_oracle(sc)
    assert np.abs(sol.drift.values).max() < 1e-12
    assert sol.value == pytest.approx(2.5, rel=1e-14)
    assert sol.extra["continuum_value"] == pytest.approx(2.5, rel=1e-12)


def test_hopf_cole_small_horizon_matches_brute_force():
    sc = Scenario(k2(), -0.05, 2, np.ones(2), np.zeros(2), Linear(np.array([0.2, -0.2])))
    assert hopf_cole_oracle(sc).value == pytest.approx(brute_force_oracle(sc).value, abs=1e-6)


def test_hopf_cole_mesh_refinement_second_order():
    vals = []
    for n in (32, 64, 128):
        nu, F, f = ring_data(n)
        vals.append(hopf_cole_oracle(Scenario(ring(n), -0.1, 32, nu, F, Linear(f))).extra["continuum_value"])
    order = np.log2(abs(vals[0] - vals[1]) / abs(vals[1] - vals[2]))
    assert 1.8 <= order <= 2.2


def test_hopf_cole_needs_linear_terminal():
    sc = Scenario(k2(), -0.1, 2, [1, 1], [0, 0], Quadratic(np.array([1.0, 0.0]), 1.0))
    with pytest.raises(ScenarioError):
        hopf_cole_oracle(sc)


def test_brute_force_dimension_limit():
    sc = Scenario(ring(8), -0.1, 2, np.ones(8), np.zeros(8), Linear(np.zeros(8)))
    with pytest.raises(ScenarioError):
        brute_force_oracle(sc)


# --------------------------------------------------------------- convexity
def test_momentum_objective_matches_drift_objective(rng):
    sc = Scenario(k2(), -0.4, 3, [1.2, 0.8], [0.2, 0.1], Linear(np.array([0.3, -0.3])))
    # with zero momentum both parametrizations describe the heat flow
    assert momentum_objective(sc, np.zeros(3)) == pytest.approx(objective(sc, np.zeros((3, 1))), rel=1e-12)


def test_convexity_probe_nonnegative(rng):
    sc = k2_scenario()
    assert convexity_probe(sc, rng, samples=60) >= -1e-6
    sc = Scenario(ring(6), -0.2, 3, np.ones(6), np.zeros(6), Linear(np.cos(np.arange(6))))
    assert convexity_probe(sc, rng, samples=30, scale=0.2) >= -1e-5


def test_optimizer_settings_roundtrip():
    s = OptimizerSettings(max_iter=10, gtol=1e-6, restarts=1, memory=5)
    assert OptimizerSettings(**s.to_dict()) == s
