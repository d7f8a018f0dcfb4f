"""Quadratic-cost optimal transport on the ground distance of a space.

Measures are passed as densities with respect to ``m``; the transported node
masses are ``rho * m``.  ``w2_exact`` solves the Kantorovich linear program
with HiGHS, ``w2_sinkhorn`` runs log-domain Sinkhorn iterations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize
from scipy.special import logsumexp

from .curves import MeasureCurve, interval_densities, recover_continuity_drift, z_inner
from .space import Space

__all__ = [
    "Coupling",
    "SinkhornError",
    "ContractionViolation",
    "ContractionReport",
    "SpeedReport",
    "w2_exact",
    "w2_sinkhorn",
    "default_reg",
    "metric_speed",
    "contraction_report",
]

SPEED_NOTE = (
    "speed_drift is the canonical discrete metric speed (norm of the current velocity); "
    "speed_w2 is the ground-cost W2 difference quotient and differs at mesh scale"
)


class SinkhornError(RuntimeError):
    """Sinkhorn failed to reach the marginal tolerance."""

    def __init__(self, message: str, trace: list[float]):
        self.trace = trace
        tail = ", ".join(f"{v:.2e}" for v in trace[-5:])
        super().__init__(f"{message}; last marginal errors: [{tail}]")


class ContractionViolation(AssertionError):
    """Heat flow expanded W2 on a space where contraction is asserted."""


@dataclass(frozen=True)
class Coupling:
    """Optimal transport plan with its marginals and cost."""

    plan: np.ndarray
    source: np.ndarray
    target: np.ndarray
    cost: float
    dual_residual: float

    def marginal_error(self) -> float:
        return float(
            max(
                np.abs(self.plan.sum(axis=1) - self.source).max(),
                np.abs(self.plan.sum(axis=0) - self.target).max(),
            )
        )


def _masses(space: Space, rho) -> np.ndarray:
    mass = np.asarray(rho, dtype=float) * space.m
    return mass / mass.sum()


def w2_exact(space: Space, mu, nu, *, dual_tol: float = 1e-8) -> tuple[float, Coupling]:
    """Exact ``W_2`` between ``mu m`` and ``nu m`` by linear programming.

    Returns the distance and the optimal coupling (whose ``cost`` is ``W_2^2``).
    Optimality is certified by the dual potentials: ``f_x + g_y <= d^2(x, y)``
    up to ``dual_tol`` and zero duality gap.
    """
    a = _masses(space, mu)
    b = _masses(space, nu)
    n = space.n
    C = space.d**2
    rows = np.kron(np.eye(n), np.ones((1, n)))
    cols = np.kron(np.ones((1, n)), np.eye(n))
    A = np.vstack([rows, cols[:-1]])
    rhs = np.concatenate([a, b[:-1]])
    res = scipy.optimize.linprog(
        C.ravel(), A_eq=A, b_eq=rhs, bounds=(0, None), method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = np.maximum(res.x.reshape(n, n), 0.0)
    duals = res.eqlin.marginals
    f = duals[:n]
    g = np.concatenate([duals[n:], [0.0]])
    reduced = C - f[:, None] - g[None, :]
    scale = max(1.0, float(C.max()))
    dual_res = max(0.0, -float(reduced.min())) / scale
    cost = float(np.sum(plan * C))
    gap = abs(cost - float(f @ a + g @ b)) / scale
    dual_res = max(dual_res, gap)
    if dual_res > dual_tol:
        raise RuntimeError(f"transport LP optimality certificate failed (residual {dual_res:.2e})")
    return float(np.sqrt(max(cost, 0.0))), Coupling(plan, a, b, cost, dual_res)


def default_reg(space: Space) -> float:
    """Documented Sinkhorn regularization ``1e-3 * diam^2``."""
    return 1e-3 * float(space.d.max()) ** 2


def w2_sinkhorn(
    space: Space,
    mu,
    nu,
    reg: float | None = None,
    *,
    tol: float = 1e-9,
    max_iter: int = 100_000,
) -> float:
    """Entropic approximation of ``W_2``, ``sqrt(<P, d^2>)`` for the Sinkhorn plan.

    Iterates in the log domain so small ``reg`` does not underflow.

    Raises
    ------
    SinkhornError
        If the marginal error exceeds ``tol`` after ``max_iter`` sweeps.
    """
    reg = default_reg(space) if reg is None else float(reg)
    if reg <= 0:
        raise ValueError("Sinkhorn regularization must be positive")
    a = _masses(space, mu)
    b = _masses(space, nu)
    C = space.d**2
    la, lb = np.log(a), np.log(b)
    f = np.zeros(space.n)
    g = np.zeros(space.n)
    trace: list[float] = []
    for it in range(max_iter):
        f = reg * (la - logsumexp((g[None, :] - C) / reg, axis=1))
        g = reg * (lb - logsumexp((f[:, None] - C) / reg, axis=0))
        if it % 10 == 0:
            logP = (f[:, None] + g[None, :] - C) / reg
            err = float(np.abs(np.exp(logsumexp(logP, axis=1)) - a).sum())
            trace.append(err)
            if err < tol:
                break
    else:
        raise SinkhornError(f"Sinkhorn did not converge in {max_iter} iterations", trace)
    P = np.exp((f[:, None] + g[None, :] - C) / reg)
    return float(np.sqrt(max(np.sum(P * C), 0.0)))


@dataclass(frozen=True)
class SpeedReport:
    """Per-interval metric speeds of a curve."""

    speed_drift: np.ndarray
    speed_w2: np.ndarray
    ds: float
    note: str = SPEED_NOTE

    def action(self) -> float:
        """``sum_k ds * speed_k^2`` for the canonical speed."""
        return float(self.ds * np.sum(self.speed_drift**2))


def metric_speed(curve: MeasureCurve, *, midpoint: str = "arithmetic", weighting: str = "logmean") -> SpeedReport:
    """Drift-norm speeds and ``W_2(mu_{k+1}, mu_k) / ds`` quotients."""
    space = curve.space
    Y = recover_continuity_drift(curve, midpoint=midpoint, weighting=weighting)
    rb = interval_densities(curve, midpoint)
    sq = z_inner(space, rb, Y.values, Y.values, weighting)
    speed = np.sqrt(np.maximum(sq, 0.0))
    quot = np.array([w2_exact(space, curve.rho[k], curve.rho[k + 1])[0] for k in range(curve.N)]) / curve.dt
    return SpeedReport(speed, quot, curve.dt)


@dataclass(frozen=True)
class ContractionReport:
    s: float
    w2_before: float
    w2_after: float
    ratio: float
    implied_K: float
    degenerate: bool
    reg: float | None = None

    def as_dict(self) -> dict:
        return {
            "s": self.s,
            "ratio": self.ratio,
            "implied_K": self.implied_K,
            "reg": self.reg,
            "w2_before": self.w2_before,
            "w2_after": self.w2_after,
            "degenerate": self.degenerate,
        }


def contraction_report(space: Space, mu, nu, s: float, *, tol: float = 1e-6) -> ContractionReport:
    """Compare ``W_2(H_s mu, H_s nu)`` with ``W_2(mu, nu)``.

    ``implied_K`` solves ``ratio = exp(-K beta s / 2)``.  On rings and grids,
    which are translation invariant, a ratio above ``1 + tol`` raises.
    """
    if s <= 0:
        raise ValueError("contraction needs s > 0")
    before, _ = w2_exact(space, mu, nu)
    after, _ = w2_exact(space, space.heat_measure(mu, s), space.heat_measure(nu, s))
    if before <= 1e-12:
        return ContractionReport(float(s), before, after, float("nan"), float("nan"), True)
    ratio = after / before
    implied = -2.0 * np.log(ratio) / (space.beta * s) if ratio > 0 else float("inf")
    if space.kind in ("ring", "grid") and ratio > 1 + tol:
        raise ContractionViolation(f"heat flow expanded W2 by ratio {ratio:.9f} on {space.name}")
    return ContractionReport(float(s), before, after, float(ratio), float(implied), False)
