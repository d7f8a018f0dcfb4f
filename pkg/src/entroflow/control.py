"""Value function of the entropic control problem on a finite space.

Minimize over drifts ``V``

    J(V) = 1/2 ||V||^2_V(mu) + sign * int F d mu_s ds + U(mu_0),

where ``mu`` is produced from ``nu`` by ``forward_integrate``.  The running
cost uses the trapezoid rule on the grid.  Gradients come from a reverse
sweep through the implicit steps; at a stationary point the drift equals the
gradient of the adjoint state, ``V_k = D lambda_k``.

Oracles:

* ``hopf_cole_oracle`` linearizes the continuum HJB equation with
  ``u = -beta log v``; ``v`` solves ``v_s + (beta/2) Lap v - (F/beta) v = 0``
  backwards from ``v(0) = exp(-f/beta)``, and the drift is ``beta D log v``.
* ``brute_force_oracle`` searches a shrinking grid of drift values.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .balance import BalanceReport, theorem1_check
from .curves import (
    DEFAULT_FLOOR,
    DriftField,
    MeasureCurve,
    PositivityError,
    edge_weights,
    edge_weights_grad,
    entropy,
    forward_integrate,
    time_grid,
    validate_density,
)
from .space import Space

__all__ = [
    "Linear",
    "Quadratic",
    "OptimizerSettings",
    "Scenario",
    "Solution",
    "objective",
    "adjoint_gradient",
    "solve_value",
    "hopf_cole_oracle",
    "brute_force_oracle",
    "convexity_probe",
    "ScenarioError",
]


class ScenarioError(ValueError):
    """Invalid scenario data."""


# --------------------------------------------------------- terminal costs
@dataclass(frozen=True)
class Linear:
    """``U(mu) = int f d mu``."""

    f: np.ndarray

    def value(self, space: Space, rho) -> float:
        return float(space.pairing(self.f, rho))

    def gradient(self, space: Space, rho) -> np.ndarray:
        """First variation ``dU/drho`` as a node field (pairing in ``L^2(m)``)."""
        return np.asarray(self.f, dtype=float)

    def sup_norm(self) -> float:
        return float(np.abs(self.f).max())

    def to_dict(self) -> dict:
        return {"kind": "linear", "f": [float(v) for v in self.f]}


@dataclass(frozen=True)
class Quadratic:
    """``U(mu) = c (int g d mu)^2 + int f d mu``."""

    g: np.ndarray
    c: float
    f: np.ndarray | None = None

    def value(self, space: Space, rho) -> float:
        lin = 0.0 if self.f is None else float(space.pairing(self.f, rho))
        return float(self.c * space.pairing(self.g, rho) ** 2) + lin

    def gradient(self, space: Space, rho) -> np.ndarray:
        out = 2.0 * self.c * float(space.pairing(self.g, rho)) * np.asarray(self.g, dtype=float)
        return out if self.f is None else out + self.f

    def sup_norm(self) -> float:
        lin = 0.0 if self.f is None else float(np.abs(self.f).max())
        return abs(self.c) * float(np.abs(self.g).max()) ** 2 + lin

    def to_dict(self) -> dict:
        out = {"kind": "quadratic", "g": [float(v) for v in self.g], "c": float(self.c)}
        if self.f is not None:
            out["f"] = [float(v) for v in self.f]
        return out


@dataclass(frozen=True)
class OptimizerSettings:
    max_iter: int = 500
    gtol: float = 1e-8
    restarts: int = 5
    memory: int = 20

    def to_dict(self) -> dict:
        return {"max_iter": self.max_iter, "gtol": self.gtol, "restarts": self.restarts, "memory": self.memory}


@dataclass(frozen=True)
class Scenario:
    """Instance of the value-function problem.

    ``F`` has one node field per grid time, shape ``(N + 1, n)``.
    ``running_sign`` multiplies the running cost (``+1`` is the convention
    of the value function; ``-1`` is the other sign that appears in the
    motivating control problem).
    """

    space: Space
    t: float
    N: int
    nu: np.ndarray
    F: np.ndarray
    terminal: Linear | Quadratic
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)
    running_sign: float = 1.0
    weighting: str = "logmean"

    def __post_init__(self):
        if not self.t < 0:
            raise ScenarioError("horizon t must be negative")
        if self.N < 2:
            raise ScenarioError("need N >= 2 time steps")
        nu = validate_density(self.space, self.nu)
        F = np.asarray(self.F, dtype=float)
        if F.ndim == 1:
            F = np.broadcast_to(F, (self.N + 1, self.space.n)).copy()
        if F.shape != (self.N + 1, self.space.n) or not np.all(np.isfinite(F)):
            raise ScenarioError(f"running cost must be finite with shape {(self.N + 1, self.space.n)}")
        if self.running_sign not in (1.0, -1.0):
            raise ScenarioError("running_sign must be +1 or -1")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "F", F)

    @property
    def dt(self) -> float:
        return -self.t / self.N

    @property
    def s(self) -> np.ndarray:
        return time_grid(self.t, self.N)

    def trapezoid(self) -> np.ndarray:
        c = np.full(self.N + 1, self.dt)
        c[0] = c[-1] = 0.5 * self.dt
        return c

    def lower_bound(self) -> float:
        """``-||F||_inf |t| - ||U||_inf``, valid since the drift energy is nonnegative."""
        return -float(np.abs(self.F).max()) * abs(self.t) - self.terminal.sup_norm()


@dataclass
class Solution:
    curve: MeasureCurve
    drift: DriftField
    value: float
    kkt_residual: float
    converged: bool
    trace: list = field(default_factory=list)
    message: str = ""
    baseline: float = float("nan")
    theorem1: BalanceReport | None = None
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "value": self.value,
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
            "iterations": len(self.trace),
            "baseline": self.baseline,
            "message": self.message,
        }
        if self.theorem1 is not None:
            out["theorem1_slack"] = self.theorem1.theorem1_slack
        out.update(self.extra)
        return out


# ------------------------------------------------------ objective/gradient
def _integrate(sc: Scenario, drift: DriftField) -> MeasureCurve:
    return forward_integrate(sc.space, sc.nu, drift, sc.t, weighting=sc.weighting)


def _as_drift(sc: Scenario, drift) -> DriftField:
    if isinstance(drift, DriftField):
        return drift
    return DriftField(np.asarray(drift, dtype=float).reshape(sc.N, sc.space.n_edges))


def _objective_parts(sc: Scenario, curve: MeasureCurve, V: np.ndarray) -> tuple[float, float, float]:
    space = sc.space
    rb = 0.5 * (curve.rho[:-1] + curve.rho[1:])
    lam = edge_weights(space, rb, sc.weighting)
    energy = 0.5 * sc.dt * float(np.sum(space.w * lam * V * V))
    running = sc.running_sign * float(sc.trapezoid() @ np.sum(sc.F * curve.rho * space.m, axis=1))
    return energy, running, sc.terminal.value(space, curve.rho[-1])


def objective(sc: Scenario, drift) -> float:
    """``1/2 v_norm + trapezoid running cost + U(mu_0)`` along the integrated curve."""
    drift = _as_drift(sc, drift)
    curve = _integrate(sc, drift)
    return float(sum(_objective_parts(sc, curve, drift.values)))


def _value_and_gradient(sc: Scenario, V: np.ndarray):
    space = sc.space
    drift = DriftField(V)
    curve = _integrate(sc, drift)
    value = float(sum(_objective_parts(sc, curve, V)))
    rho = curve.rho
    dt, beta, m = sc.dt, space.beta, space.m
    x, y = space.edges[:, 0], space.edges[:, 1]
    rb = 0.5 * (rho[:-1] + rho[1:])
    lam = edge_weights(space, rb, sc.weighting)
    ga, gb = edge_weights_grad(space, rb, sc.weighting)
    B = space.incidence
    gen = space.generator
    eye = np.eye(space.n)

    # partial derivatives of J in the node values of each slice
    dJ = (sc.running_sign * sc.trapezoid())[:, None] * sc.F * m
    dJ[-1] += sc.terminal.gradient(space, rho[-1]) * m
    quad = 0.5 * dt * space.w * V * V  # d(energy)/d(lambda_e) per interval
    for k in range(sc.N):
        node = np.zeros(space.n)
        np.add.at(node, x, quad[k] * ga[k])
        np.add.at(node, y, quad[k] * gb[k])
        dJ[k] += 0.5 * node
        dJ[k + 1] += 0.5 * node

    grad = np.empty_like(V)
    carry = dJ[-1].copy()
    for k in range(sc.N - 1, -1, -1):
        JL = np.zeros((space.n_edges, space.n))
        JL[np.arange(space.n_edges), x] = ga[k]
        JL[np.arange(space.n_edges), y] = gb[k]
        A = 0.5 * beta * gen + ((B.T * (space.w * V[k])) @ JL) / m[:, None]
        Jp = eye - 0.5 * dt * A
        mu = np.linalg.solve(Jp.T, -carry)
        lam_adj = mu / m
        grad[k] = dt * space.w * lam[k] * V[k] - dt * space.w * lam[k] * space.gradient(lam_adj)
        # d G_k / d r = -I - (dt/2) A
        carry = dJ[k] + (-eye - 0.5 * dt * A).T @ mu
    return value, grad, curve


def adjoint_gradient(sc: Scenario, drift) -> np.ndarray:
    """Gradient of ``objective`` in the per-interval edge drift values."""
    return _value_and_gradient(sc, _as_drift(sc, drift).values)[1]


# --------------------------------------------------------------- optimizer
class _Potentials:
    """Maps preconditioned variables ``z`` to drifts ``V_k = D psi_k``.

    ``psi_k = Phi_+ diag(lam_+^{-1/2}) z_k / sqrt(ds)`` with ``K phi = lam M phi``,
    so ``1/2 ||V||^2`` is ``1/2 |z|^2`` for a uniform density.
    """

    def __init__(self, sc: Scenario):
        space = sc.space
        vals, vecs = scipy.linalg.eigh(space.stiffness, np.diag(space.m))
        keep = vals > 1e-10 * vals.max()
        self.basis = vecs[:, keep] / np.sqrt(vals[keep]) / np.sqrt(sc.dt)
        self.G = space.gradient(self.basis.T).T  # E x r
        self.N = sc.N
        self.r = self.basis.shape[1]

    def drift(self, z: np.ndarray) -> np.ndarray:
        return z.reshape(self.N, self.r) @ self.G.T

    def potentials(self, z: np.ndarray) -> np.ndarray:
        return z.reshape(self.N, self.r) @ self.basis.T

    def pull(self, gV: np.ndarray) -> np.ndarray:
        return (gV @ self.G).ravel()

    def push(self, V: np.ndarray) -> np.ndarray:
        """Least-squares ``z`` for a drift (exact when ``V`` is a gradient)."""
        z, *_ = np.linalg.lstsq(self.G, V.T, rcond=None)
        return z.T.ravel()


def _finish(sc: Scenario, V: np.ndarray, psi, trace, message, converged, baseline, check=True) -> Solution:
    value, grad, curve = _value_and_gradient(sc, V)
    drift = DriftField(V, psi)
    report = theorem1_check(curve) if check else None
    return Solution(
        curve=curve,
        drift=drift,
        value=value,
        kkt_residual=float(np.linalg.norm(grad)),
        converged=converged,
        trace=trace,
        message=message,
        baseline=baseline,
        theorem1=report,
    )


def solve_value(sc: Scenario, *, tol: float = 1e-6, initial=None) -> Solution:
    """Minimize the objective over gradient drifts with L-BFGS.

    The curve is always produced by the integrator.  A trial drift that makes
    the integrator lose positivity is rejected with a large objective value,
    which makes the line search back off.  The zero drift is the starting
    point and the fallback, so the returned value never exceeds it.
    """
    P = _Potentials(sc)
    zero = np.zeros((sc.N, sc.space.n_edges))
    baseline = objective(sc, DriftField(zero))
    penalty = abs(baseline) + 1e6
    trace: list[float] = []

    def fun(z):
        V = P.drift(z)
        try:
            val, gV, _ = _value_and_gradient(sc, V)
        except PositivityError:
            return penalty, np.zeros_like(z)
        trace.append(val)
        return val, P.pull(gV)

    z = np.zeros(sc.N * P.r) if initial is None else P.push(_as_drift(sc, initial).values)
    best_z, best_val = z, baseline if initial is None else fun(z)[0]
    kkt = np.inf
    message = ""
    for _ in range(max(1, sc.settings.restarts)):
        res = scipy.optimize.minimize(
            fun,
            best_z,
            jac=True,
            method="L-BFGS-B",
            options={
                "maxiter": sc.settings.max_iter,
                "gtol": sc.settings.gtol,
                "ftol": 1e-15,
                "maxcor": sc.settings.memory,
            },
        )
        message = str(res.message)
        if res.fun <= best_val:
            best_z, best_val = res.x, float(res.fun)
        gV = _value_and_gradient(sc, P.drift(best_z))[1]
        kkt = float(np.linalg.norm(gV))
        if kkt <= tol:
            break
    V = P.drift(best_z)
    psi = P.potentials(best_z)
    if best_val > baseline:
        V, psi = zero, np.zeros((sc.N, sc.space.n))
    sol = _finish(sc, V, psi, trace, message, False, baseline)
    sol.converged = sol.kkt_residual <= tol
    return sol


# ---------------------------------------------------------------- oracles
def hopf_cole_oracle(sc: Scenario) -> Solution:
    """Drift ``beta D log v`` from the linear backward equation for ``v``.

    ``v(0) = exp(-f/beta)`` and on each interval
    ``v(s_k) = exp(ds ((beta/2) Lap - diag(F_bar_k)/beta)) v(s_{k+1})``
    with ``F_bar_k`` the interval average of the running cost.  The drift is
    taken at the interval midpoint.  ``extra['continuum_value']`` records
    ``-beta int log v(t) d nu``; ``value`` is the objective of the drift.
    """
    if not isinstance(sc.terminal, Linear):
        raise ScenarioError("the Hopf-Cole oracle needs a linear terminal cost")
    space = sc.space
    beta = space.beta
    gen = space.generator
    Fbar = 0.5 * (sc.F[:-1] + sc.F[1:]) * sc.running_sign
    v = np.exp(-(sc.terminal.f - sc.terminal.f.max()) / beta)
    shift = -sc.terminal.f.max() / beta  # log v carried separately for range
    V = np.empty((sc.N, space.n_edges))
    psi = np.empty((sc.N, space.n))
    for k in range(sc.N - 1, -1, -1):
        A = 0.5 * beta * gen - np.diag(Fbar[k]) / beta
        half = scipy.linalg.expm(0.5 * sc.dt * A)
        vm = half @ v
        if np.any(vm <= 0):
            raise RuntimeError(f"Hopf-Cole transform lost positivity on interval {k}")
        logv = np.log(vm)
        psi[k] = beta * (logv - logv @ space.m)
        V[k] = space.gradient(psi[k])
        v = half @ vm
        scale = v.max()
        v = v / scale
        shift += np.log(scale)
    if np.any(v <= 0):
        raise RuntimeError("Hopf-Cole transform lost positivity")
    continuum = float(-beta * space.pairing(np.log(v) + shift, sc.nu))
    zero = objective(sc, DriftField(np.zeros_like(V)))
    sol = _finish(sc, V, psi, [], "hopf-cole", True, zero)
    sol.extra["continuum_value"] = continuum
    return sol


def brute_force_oracle(
    sc: Scenario,
    *,
    box: float = 2.0,
    points: int = 21,
    levels: int = 12,
    shrink: float = 0.25,
) -> Solution:
    """Zooming grid search over all edge drift values.

    Evaluates the objective on a ``points^d`` grid over ``[-box, box]^d``,
    recenters on the best node and shrinks the box ``levels`` times.
    Positivity failures count as infeasible.  The KKT residual of the result
    is measured by central finite differences, independent of the adjoint.
    """
    d = sc.N * sc.space.n_edges
    if d > 4:
        raise ScenarioError(f"brute force is limited to 4 drift values, scenario has {d}")

    def f(x):
        try:
            return objective(sc, DriftField(x.reshape(sc.N, -1)))
        except PositivityError:
            return np.inf

    center = np.zeros(d)
    half = box
    best = f(center)
    trace = [best]
    for _ in range(levels):
        axis = np.linspace(-half, half, points)
        level_best = center
        for offs in itertools.product(axis, repeat=d):
            x = center + np.array(offs)
            val = f(x)
            if val < best:
                best, level_best = val, x
        center = level_best
        trace.append(best)
        half *= shrink
    h = 1e-5
    fd = np.array([(f(center + h * e) - f(center - h * e)) / (2 * h) for e in np.eye(d)])
    V = center.reshape(sc.N, -1)
    curve = _integrate(sc, DriftField(V))
    sol = Solution(
        curve=curve,
        drift=DriftField(V),
        value=float(best),
        kkt_residual=float(np.linalg.norm(fd)),
        converged=True,
        trace=trace,
        message="grid search",
        baseline=f(np.zeros(d)),
        theorem1=theorem1_check(curve),
    )
    return sol


def momentum_objective(sc: Scenario, mom: np.ndarray) -> float:
    """Objective in the momentum variables ``m_k = rho_hat_k V_k``.

    The implicit-midpoint step is linear in ``(rho, m)``, so this objective is
    convex: the energy ``sum w m^2 / rho_hat`` is a perspective of a concave
    weight.  Returns ``inf`` when positivity is lost.
    """
    space = sc.space
    mom = np.asarray(mom, dtype=float).reshape(sc.N, space.n_edges)
    gen = 0.5 * space.beta * space.generator
    lhs = np.eye(space.n) - 0.5 * sc.dt * gen
    rhs_op = np.eye(space.n) + 0.5 * sc.dt * gen
    rho = np.empty((sc.N + 1, space.n))
    rho[0] = sc.nu
    for k in range(sc.N):
        src = sc.dt * ((space.w * mom[k]) @ space.incidence) / space.m
        rho[k + 1] = np.linalg.solve(lhs, rhs_op @ rho[k] + src)
    if rho.min() <= 0:
        return np.inf
    rb = 0.5 * (rho[:-1] + rho[1:])
    lam = edge_weights(space, rb, sc.weighting)
    energy = 0.5 * sc.dt * float(np.sum(space.w * mom**2 / lam))
    running = sc.running_sign * float(sc.trapezoid() @ np.sum(sc.F * rho * space.m, axis=1))
    return energy + running + sc.terminal.value(space, rho[-1])


def convexity_probe(sc: Scenario, rng: np.random.Generator, samples: int = 50, h: float = 1e-3, scale: float = 0.5) -> float:
    """Smallest normalized second difference of the momentum objective.

    Samples random base points and directions; a value ``>= -tol`` is
    consistent with convexity.
    """
    d = sc.N * sc.space.n_edges
    worst = np.inf
    for _ in range(samples):
        x = scale * rng.standard_normal(d)
        e = rng.standard_normal(d)
        e /= np.linalg.norm(e)
        vals = [momentum_objective(sc, x + c * h * e) for c in (-1, 0, 1)]
        if not np.all(np.isfinite(vals)):
            continue
        worst = min(worst, (vals[0] - 2 * vals[1] + vals[2]) / h**2)
    return float(worst)
