"""Acceptance checks shared by the test suite and the ``suite`` command.

Every check is a deterministic function of a seed and returns a
``CheckResult`` with a pass flag, the measured numbers and an optional
long-format series for plotting.  Tolerances are multiplied by
``tol_scale``; observed convergence orders are never scaled.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .balance import entropy_balance, fisher_information, theorem1_check
from .control import Linear, Scenario, brute_force_oracle, hopf_cole_oracle, solve_value
from .curves import (
    DriftField,
    MeasureCurve,
    _SmoothCurveDraw,
    dual_norm,
    dual_norm_sup,
    entropy,
    forward_integrate,
    heat_flow_curve,
    interval_densities,
    random_density,
    recover_fp_drift,
    time_grid,
    v_norm,
)
from .mollify import laplacian_formula_defect, m_eps, m_eps_matrix
from .space import Space, grid, k2, load_space, ring
from .transport import contraction_report, w2_exact, w2_sinkhorn

__all__ = ["CheckResult", "CHECKS", "run_suite", "random_graph", "observed_orders", "space_invariants"]


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    details: dict
    series: list = field(default_factory=list)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.criterion}: {self.name}"

    def as_dict(self) -> dict:
        return {"criterion": self.criterion, "name": self.name, "passed": self.passed, "details": self.details}


def random_graph(rng: np.random.Generator, n: int, beta: float = 1.0) -> Space:
    """Random connected graph: random spanning tree plus extra edges."""
    edges = {(int(rng.integers(0, i)), i) for i in range(1, n)}
    extra = int(rng.integers(0, n + 1))
    for _ in range(extra):
        a, b = sorted(int(v) for v in rng.choice(n, 2, replace=False))
        edges.add((a, b))
    edges = sorted(edges)
    m = rng.uniform(0.2, 1.0, n)
    m /= m.sum()
    m[-1] = 1.0 - m[:-1].sum()
    w = rng.uniform(0.2, 5.0, len(edges))
    return Space(m, edges, w, beta=beta, name=f"random:{n}")


def observed_orders(hs, errs) -> list[float]:
    """``log(e_i / e_{i+1}) / log(h_i / h_{i+1})`` for consecutive levels."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    return [float(np.log(errs[i] / errs[i + 1]) / np.log(hs[i] / hs[i + 1])) for i in range(len(errs) - 1)]


# ------------------------------------------------------------------ checks
def check_integration_by_parts(seed: int, tol_scale: float = 1.0) -> CheckResult:
    rng = np.random.default_rng([seed, 1])
    worst = 0.0
    worst_gamma = 0.0
    for _ in range(100):
        sp = random_graph(rng, int(rng.integers(2, 51)))
        f, g = rng.standard_normal((2, sp.n))
        lhs = sp.pairing(-sp.laplacian(f), g)
        mid = sp.integrate(sp.gamma(f, g))
        rhs = sp.energy(f, g)
        scale = max(1.0, float(np.abs(sp.gradient(f) * sp.gradient(g)) @ sp.w))
        worst = max(worst, abs(lhs - rhs) / scale, abs(mid - rhs) / scale)
        gf, gg, gfg = sp.gamma(f), sp.gamma(g), sp.gamma(f, g)
        worst_gamma = max(worst_gamma, float(np.max(np.abs(gfg) - np.sqrt(gf * gg))))
    tol = 1e-12 * tol_scale
    return CheckResult(
        1,
        "integration by parts",
        bool(worst <= tol and worst_gamma <= tol),
        {"max_rel_error": worst, "cauchy_schwarz_excess": worst_gamma, "trials": 100, "tol": tol},
    )


def _heat_checks(sp: Space, rng: np.random.Generator) -> dict:
    f = rng.standard_normal(sp.n)
    s1, s2 = 0.3 * rng.uniform(0.05, 1.0), 0.3 * rng.uniform(0.05, 1.0)
    fmax = float(np.abs(f).max())
    semigroup = float(np.abs(sp.heat_apply(sp.heat_apply(f, s1), s2) - sp.heat_apply(f, s1 + s2)).max()) / fmax
    mass = abs(float(sp.integrate(sp.heat_apply(f, s1)) - sp.integrate(f))) / fmax
    pf = sp.heat_apply(f, s1)
    maxp = max(0.0, float(pf.max() - f.max()), float(f.min() - pf.min())) / fmax
    ker = sp.heat_kernel(s1)
    sym = float(np.abs(ker.matrix - ker.matrix.T).max()) / ker.max_entry
    repro = float(np.abs(ker.matrix @ (f * sp.m) - pf).max()) / fmax
    return {
        "space": sp.name,
        "semigroup": semigroup,
        "mass": mass,
        "max_principle": maxp,
        "kernel_symmetry": sym,
        "kernel_reproduction": repro,
        "kernel_min": ker.min_entry,
        "a_s": ker.a_s,
        "positive": ker.strictly_positive,
    }


def check_heat(seed: int, tol_scale: float = 1.0) -> CheckResult:
    rng = np.random.default_rng([seed, 2])
    spaces = [k2(), ring(32), grid(8)] + [random_graph(rng, int(rng.integers(3, 51))) for _ in range(5)]
    rows = [_heat_checks(sp, rng) for sp in spaces]
    tol = 1e-10 * tol_scale
    keys = ("semigroup", "mass", "max_principle", "kernel_symmetry", "kernel_reproduction")
    worst = {k: max(r[k] for r in rows) for k in keys}
    ok = all(v <= tol for v in worst.values()) and all(r["positive"] for r in rows)
    return CheckResult(
        2,
        "heat semigroup and kernel",
        bool(ok),
        {"worst": worst, "tol": tol, "per_space": rows},
    )


def _mollifier_checks(sp: Space, rng: np.random.Generator, eps: float, tol_scale: float) -> dict:
    f, g = rng.standard_normal((2, sp.n))
    Mf, Mg = m_eps(sp, f, eps), m_eps(sp, g, eps)
    sa = abs(sp.pairing(Mf, g) - sp.pairing(f, Mg)) / (np.linalg.norm(f) * np.linalg.norm(g) * sp.m.max())
    lap = sp.laplacian(f)
    comm = float(np.abs(sp.laplacian(Mf) - m_eps(sp, lap, eps)).max()) / float(np.abs(lap).max())
    levels = [4, 6, 8, 12]
    defects = [laplacian_formula_defect(sp, f, eps, q) for q in levels]
    floor = 1e3 * np.finfo(float).eps * float(np.abs(lap).max())
    usable = [i for i in range(len(levels)) if defects[i] > floor]
    orders = observed_orders([1.0 / levels[i] for i in usable], [defects[i] for i in usable])
    eps_values = [eps * 2.0**-j for j in range(8)]
    dist = [float(np.sqrt(sp.pairing(m_eps(sp, f, e) - f, m_eps(sp, f, e) - f))) for e in eps_values]
    monotone = all(dist[i + 1] < dist[i] for i in range(len(dist) - 1))
    return {
        "space": sp.name,
        "eps": eps,
        "self_adjoint": float(sa),
        "commutation": comm,
        "quadrature_nodes": levels,
        "laplacian_formula_defects": defects,
        "orders": orders,
        "sweep_eps": eps_values,
        "sweep_distance": dist,
        "monotone": monotone,
    }


def check_mollifier(seed: int, tol_scale: float = 1.0) -> CheckResult:
    rng = np.random.default_rng([seed, 3])
    rows = [_mollifier_checks(sp, rng, eps, tol_scale) for sp, eps in ((ring(32), 0.05), (grid(8), 0.05), (k2(), 0.05))]
    tol = 1e-12 * tol_scale
    min_order = min(min(r["orders"]) for r in rows if r["orders"])
    ok = (
        all(r["self_adjoint"] <= tol and r["commutation"] <= tol for r in rows)
        and min_order >= 3.0
        and all(r["monotone"] for r in rows)
    )
    series = []
    for r in rows:
        for e, d in zip(r["sweep_eps"], r["sweep_distance"]):
            series.append((f"mollify/{r['space']}", e, "distance_to_identity", d))
    return CheckResult(3, "mollifier algebra", bool(ok), {"tol": tol, "min_order": min_order, "per_space": rows}, series)


def _random_potentials(sp: Space, rng: np.random.Generator, N: int, t: float, amp: float) -> np.ndarray:
    """Smooth-in-time potentials built from a few spatial modes."""
    s = time_grid(t, N)
    mid = 0.5 * (s[:-1] + s[1:])
    modes = np.stack([sp.heat_apply(rng.standard_normal(sp.n), 0.002) for _ in range(3)])
    modes /= np.abs(modes).max(axis=1, keepdims=True)
    coef = amp * np.cos(np.outer(mid, rng.uniform(1, 6, 3)) + rng.uniform(0, 6, 3))
    return coef @ modes


def check_roundtrip(seed: int, tol_scale: float = 1.0) -> CheckResult:
    rng = np.random.default_rng([seed, 4])
    sp = ring(32)
    N, t = 256, -0.2
    rho0 = random_density(sp, rng, 0.5)
    Vstar = DriftField.from_potentials(sp, _random_potentials(sp, rng, N, t, 0.5))
    curve = forward_integrate(sp, rho0, Vstar, t)
    V = recover_fp_drift(curve)
    ref = v_norm(curve, Vstar)
    diff = DriftField(V.values - Vstar.values)
    rel = v_norm(curve, diff) / ref
    rel_norm = abs(v_norm(curve, V) - ref) / ref
    # Riesz equality on the round-trip curve and on a random smooth curve
    riesz = []
    for c in (curve, _SmoothCurveDraw(sp, rng).curve(-0.5, 32)):
        a, b = dual_norm(c), dual_norm_sup(c)
        riesz.append(abs(a - b) / max(a, 1e-300))
    tol_rt = 1e-6 * tol_scale
    tol_r = 1e-8 * tol_scale
    return CheckResult(
        4,
        "drift recovery round trip",
        bool(rel <= tol_rt and rel_norm <= tol_rt and max(riesz) <= tol_r),
        {
            "space": sp.name,
            "N": N,
            "relative_vnorm_error": rel,
            "relative_norm_gap": rel_norm,
            "riesz_relative_gap": riesz,
            "tol_roundtrip": tol_rt,
            "tol_riesz": tol_r,
        },
    )


LEVELS = (16, 32, 64, 128)


def check_entropy_identity(seed: int, tol_scale: float = 1.0) -> CheckResult:
    rng = np.random.default_rng([seed, 5])
    rows, series = [], []
    decomp = 0.0
    for sp in (ring(32), k2(), grid(8)):
        for draw in range(2):
            d = _SmoothCurveDraw(sp, rng)
            defects = []
            for N in LEVELS:
                rep = entropy_balance(d.curve(-0.5, N))
                defects.append(rep.identity_defect)
                decomp = max(decomp, rep.decomposition_defect)
                series.append((f"balance/{sp.name}/{draw}", 0.5 / N, "identity_defect", rep.identity_defect))
            orders = observed_orders([1.0 / N for N in LEVELS], defects)
            rows.append({"space": sp.name, "draw": draw, "defects": defects, "orders": orders})
    min_order = min(min(r["orders"]) for r in rows)
    tol = 1e-9 * tol_scale
    return CheckResult(
        5,
        "entropy-generation identity",
        bool(min_order >= 1.9 and decomp <= tol),
        {"min_order": min_order, "decomposition_defect": decomp, "tol": tol, "levels": list(LEVELS), "curves": rows},
        series,
    )


def _random_valid_curve(i: int, rng: np.random.Generator) -> MeasureCurve:
    spaces = (k2(), ring(32), grid(8), ring(8))
    sp = spaces[i % len(spaces)]
    kind = (i // len(spaces)) % 3
    if kind == 0:
        return _SmoothCurveDraw(sp, rng, spread=rng.uniform(0.1, 1.5)).curve(-rng.uniform(0.05, 1.0), int(rng.integers(2, 40)))
    if kind == 1:
        # rough curve: independent random densities at each grid time
        N = int(rng.integers(1, 12))
        rho = np.stack([random_density(sp, rng, rng.uniform(0.1, 2.0)) for _ in range(N + 1)])
        return MeasureCurve(sp, time_grid(-rng.uniform(0.01, 1.0), N), rho)
    N = int(rng.integers(4, 40))
    t = -rng.uniform(0.05, 0.3)
    V = DriftField.from_potentials(sp, _random_potentials(sp, rng, N, t, rng.uniform(0.05, 0.5)))
    return forward_integrate(sp, random_density(sp, rng, 0.5), V, t)


def check_theorem1(seed: int, tol_scale: float = 1.0) -> CheckResult:
    rng = np.random.default_rng([seed, 6])
    worst_slack = np.inf
    worst_match = 0.0
    arithmetic_violations = 0
    count = 0
    redraws = 0
    for i in range(200):
        while True:
            try:
                curve = _random_valid_curve(i, rng)
                break
            except RuntimeError:
                # the integrator rejected the random drift; draw again
                redraws += 1
        count += 1
        rep = theorem1_check(curve, rel_tol=1e-8 * tol_scale)
        scale = max(1.0, rep.lhs)
        worst_slack = min(worst_slack, rep.theorem1_slack / scale)
        worst_match = max(worst_match, abs(rep.slack_minus_osmotic) / max(rep.term_osmotic, 1e-300))
        arith = entropy_balance(curve, midpoint="arithmetic")
        if arith.theorem1_slack < -1e-8 * max(1.0, arith.lhs):
            arithmetic_violations += 1
    tol = 1e-8 * tol_scale
    return CheckResult(
        6,
        "entropy-speed inequality",
        bool(count == 200 and worst_slack >= -tol and worst_match <= tol),
        {
            "curves": count,
            "midpoint": "identric",
            "min_scaled_slack": worst_slack,
            "max_rel_slack_minus_osmotic": worst_match,
            "tol": tol,
            "arithmetic_midpoint_violations": arithmetic_violations,
            "redraws": redraws,
        },
    )


def check_heat_dissipation(seed: int, tol_scale: float = 1.0) -> CheckResult:
    rng = np.random.default_rng([seed, 7])
    rows, series = [], []
    for sp in (k2(), ring(32), grid(8)):
        # a mesh-smooth initial law keeps the steps in the asymptotic regime
        rho0 = random_density(sp, rng, 0.8, smooth=0.005)
        defects = []
        for N in LEVELS:
            c = heat_flow_curve(sp, rho0, -0.2, N)
            rb = interval_densities(c)
            dent = float(entropy(sp, c.rho[-1]) - entropy(sp, c.rho[0]))
            fisher = float(c.dt * fisher_information(sp, rb).sum())
            defects.append(abs(dent + 0.5 * sp.beta * fisher))
            series.append((f"dissipation/{sp.name}", c.dt, "defect", defects[-1]))
        rows.append({"space": sp.name, "defects": defects, "orders": observed_orders([1.0 / N for N in LEVELS], defects)})
    min_order = min(min(r["orders"]) for r in rows)
    return CheckResult(7, "heat-flow entropy dissipation", bool(min_order >= 1.9), {"min_order": min_order, "per_space": rows}, series)


def k2_scenario() -> Scenario:
    sp = k2()
    return Scenario(sp, -0.5, 2, np.ones(2), np.zeros(2), Linear(np.array([0.2, -0.2])))


def ring_scenario(n: int = 64, N: int = 32) -> Scenario:
    sp = ring(n)
    x = sp.coords
    nu = 1.0 + 0.5 * np.sin(2 * np.pi * x)
    F = 0.5 * np.cos(2 * np.pi * x)
    return Scenario(sp, -0.1, N, nu, F, Linear(np.cos(2 * np.pi * x)))


def check_control(seed: int, tol_scale: float = 1.0) -> CheckResult:
    sc = k2_scenario()
    a, b, c = solve_value(sc), hopf_cole_oracle(sc), brute_force_oracle(sc)
    pair = {
        "solve_vs_hopf_cole": abs(a.value - b.value),
        "solve_vs_brute": abs(a.value - c.value),
        "hopf_cole_vs_brute": abs(b.value - c.value),
    }
    rs = ring_scenario()
    ra, rb = solve_value(rs), hopf_cole_oracle(rs)
    rel = abs(ra.value - rb.value) / abs(rb.value)
    kkt = max(a.kkt_residual, ra.kkt_residual)
    baseline_ok = a.value <= a.baseline + 1e-9 and ra.value <= ra.baseline + 1e-9
    tol_abs, tol_rel, tol_kkt = 1e-4 * tol_scale, 1e-3 * tol_scale, 1e-6 * tol_scale
    ok = max(pair.values()) <= tol_abs and rel <= tol_rel and kkt <= tol_kkt and baseline_ok and a.converged and ra.converged
    return CheckResult(
        8,
        "control oracle triangle",
        bool(ok),
        {
            "k2": {"solve": a.value, "hopf_cole": b.value, "brute_force": c.value, **pair, "baseline": a.baseline},
            "ring64": {"solve": ra.value, "hopf_cole": rb.value, "relative_gap": rel, "baseline": ra.baseline},
            "max_kkt": kkt,
            "beats_baseline": baseline_ok,
            "tol_abs": tol_abs,
            "tol_rel": tol_rel,
            "tol_kkt": tol_kkt,
        },
    )


def check_transport(seed: int, tol_scale: float = 1.0) -> CheckResult:
    rng = np.random.default_rng([seed, 9])
    sym, tri = 0.0, -np.inf
    for i in range(50):
        sp = (ring(16), grid(4), random_graph(rng, 12))[i % 3]
        a, b, c = (random_density(sp, rng, 1.0) for _ in range(3))
        ab, ba = w2_exact(sp, a, b)[0], w2_exact(sp, b, a)[0]
        bc, ac = w2_exact(sp, b, c)[0], w2_exact(sp, a, c)[0]
        sym = max(sym, abs(ab - ba))
        tri = max(tri, ac - ab - bc)
    r64 = ring(64)
    sink = []
    for _ in range(3):
        a, b = random_density(r64, rng, 1.0), random_density(r64, rng, 1.0)
        e = w2_exact(r64, a, b)[0]
        sink.append(abs(w2_sinkhorn(r64, a, b) - e) / e)
    ratios = []
    for sp, s in ((ring(32), 0.1), (ring(64), 0.05), (grid(8), 0.02)):
        for _ in range(3):
            rep = contraction_report(sp, random_density(sp, rng, 1.0), random_density(sp, rng, 1.0), s)
            ratios.append(rep.ratio)
    tol = 1e-9 * tol_scale
    ok = sym <= tol and tri <= tol and max(sink) <= 0.05 and max(ratios) <= 1 + 1e-6 * tol_scale
    return CheckResult(
        9,
        "transport",
        bool(ok),
        {"symmetry": sym, "triangle_excess": tri, "sinkhorn_rel_error": sink, "contraction_ratios": ratios},
    )


CHECKS = {
    1: check_integration_by_parts,
    2: check_heat,
    3: check_mollifier,
    4: check_roundtrip,
    5: check_entropy_identity,
    6: check_theorem1,
    7: check_heat_dissipation,
    8: check_control,
    9: check_transport,
}


def space_invariants(sp: Space, seed: int, tol_scale: float = 1.0) -> dict:
    """Invariant checks restricted to one user-chosen space."""
    rng = np.random.default_rng([seed, 11])
    f, g = rng.standard_normal((2, sp.n))
    scale = max(1.0, float(np.abs(sp.gradient(f) * sp.gradient(g)) @ sp.w))
    ibp = abs(sp.pairing(-sp.laplacian(f), g) - sp.energy(f, g)) / scale
    heat = _heat_checks(sp, rng)
    eps = 0.05
    Mm = m_eps_matrix(sp, eps)
    sa = float(np.abs(sp.m[:, None] * Mm - (sp.m[:, None] * Mm).T).max())
    d = _SmoothCurveDraw(sp, rng)
    curve = d.curve(-0.5, 32)
    rep = entropy_balance(curve)
    t1 = theorem1_check(curve)
    riesz = abs(dual_norm(curve) - dual_norm_sup(curve)) / max(dual_norm(curve), 1e-300)
    tol = tol_scale
    checks = {
        "integration_by_parts": ibp <= 1e-12 * tol,
        "heat_semigroup": heat["semigroup"] <= 1e-10 * tol,
        "heat_mass": heat["mass"] <= 1e-10 * tol,
        "max_principle": heat["max_principle"] <= 1e-10 * tol,
        "kernel_symmetric": heat["kernel_symmetry"] <= 1e-10 * tol,
        "kernel_positive": bool(heat["positive"]),
        "mollifier_self_adjoint": sa <= 1e-12 * tol,
        "decomposition": rep.decomposition_defect <= 1e-9 * tol,
        "riesz": riesz <= 1e-8 * tol,
        "theorem1": t1.theorem1_slack >= -1e-8 * tol * max(1.0, t1.lhs),
    }
    return {
        "space": sp.name,
        "checks": checks,
        "passed": all(checks.values()),
        "values": {
            "ibp": ibp,
            "heat": heat,
            "mollifier_self_adjoint": sa,
            "identity_defect_arithmetic": rep.identity_defect,
            "riesz_gap": riesz,
            "theorem1_slack": t1.theorem1_slack,
            "osmotic": t1.term_osmotic,
        },
    }


def run_suite(seed: int = 0, tol_scale: float = 1.0, threads: int = 1, criteria=None) -> list[CheckResult]:
    """Run the acceptance checks; results come back in criterion order."""
    keys = sorted(CHECKS) if criteria is None else sorted(criteria)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(CHECKS[k], seed, tol_scale) for k in keys]
            return [f.result() for f in futures]
    return [CHECKS[k](seed, tol_scale) for k in keys]
