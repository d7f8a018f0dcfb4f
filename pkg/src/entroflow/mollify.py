"""Two-stage regularization of curves and drifts.

Space: ``M^eps f = int P_{-eps u} f k(u) du`` with a polynomial bump ``k`` on
``[delta, 1/delta]``, discretized by Gauss-Legendre quadrature in ``u``.
Each node is a heat semigroup application, so ``M^eps`` is a positive
combination of commuting self-adjoint operators.

Time: discrete convolution with the even bump ``eta(x) = (35/32)(1 - x^2)^3``
on the uniform grid, curves extended as constants outside ``[t, 0]``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from math import factorial

import numpy as np

from .curves import (
    DriftField,
    MeasureCurve,
    edge_weights,
    entropy,
    interval_densities,
    solve_weighted_poisson,
    v_norm,
)
from .space import Space

__all__ = [
    "MollifierConfig",
    "MollifierError",
    "m_eps",
    "m_eps_matrix",
    "laplacian_formula_defect",
    "time_weights",
    "smooth_curve",
    "smooth_drift",
    "SmoothingReport",
    "smoothing_report",
    "eps_sweep",
]


class MollifierError(ValueError):
    """Invalid mollifier parameters or an epsilon too large for the curve."""


@dataclass(frozen=True)
class MollifierConfig:
    """Profile, quadrature and time-kernel parameters.

    ``k(u) = C (u - delta)^p (1/delta - u)^p`` on ``[delta, 1/delta]`` with
    ``C`` chosen for unit integral; ``eta(x) = c_q (1 - x^2)^q`` on ``(-1, 1)``.
    """

    delta: float = 0.5
    power: int = 3
    nodes: int = 16
    time_power: int = 3

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise MollifierError("delta must lie in (0, 1)")
        if self.power < 1 or self.time_power < 1:
            raise MollifierError("profile powers must be positive integers")
        if self.nodes < 1:
            raise MollifierError("need at least one quadrature node")

    @property
    def support(self) -> tuple[float, float]:
        return self.delta, 1.0 / self.delta

    @property
    def profile_constant(self) -> float:
        a, b = self.support
        p = self.power
        return factorial(2 * p + 1) / (factorial(p) ** 2 * (b - a) ** (2 * p + 1))

    def profile(self, u) -> np.ndarray:
        a, b = self.support
        u = np.asarray(u, dtype=float)
        inside = (u > a) & (u < b)
        val = self.profile_constant * ((u - a) * (b - u)) ** self.power
        return np.where(inside, val, 0.0)

    def profile_derivative(self, u) -> np.ndarray:
        a, b = self.support
        u = np.asarray(u, dtype=float)
        p = self.power
        inside = (u > a) & (u < b)
        val = self.profile_constant * p * ((u - a) * (b - u)) ** (p - 1) * ((b - u) - (u - a))
        return np.where(inside, val, 0.0)

    def quadrature(self, nodes: int | None = None, normalize: bool = True):
        """Nodes ``u_i`` and weights ``q_i = w_i k(u_i)`` on the profile support."""
        a, b = self.support
        x, w = np.polynomial.legendre.leggauss(nodes or self.nodes)
        u = a + 0.5 * (b - a) * (x + 1)
        q = 0.5 * (b - a) * w * self.profile(u)
        if normalize:
            q = q / q.sum()
        return u, q

    def time_kernel(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        q = self.time_power
        # int_{-1}^{1} (1 - x^2)^q dx = 2^(2q+1) (q!)^2 / (2q+1)!
        c = factorial(2 * q + 1) / (2 ** (2 * q + 1) * factorial(q) ** 2)
        return np.where(np.abs(x) < 1, c * (1 - x * x) ** q, 0.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MollifierConfig":
        unknown = set(data) - {"delta", "power", "nodes", "time_power"}
        if unknown:
            raise MollifierError(f"unknown mollifier keys: {sorted(unknown)}")
        return cls(**data)


DEFAULT = MollifierConfig()


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise MollifierError(f"epsilon must be positive, got {eps}")


def m_eps_multiplier(space: Space, eps: float, config: MollifierConfig = DEFAULT, nodes=None, normalize=True):
    lam, _ = space.spectrum()
    u, q = config.quadrature(nodes, normalize)
    return np.exp(np.outer(lam, eps * u) * 0.5 * space.beta) @ q


def m_eps(space: Space, f, eps: float, config: MollifierConfig = DEFAULT, *, nodes: int | None = None) -> np.ndarray:
    """Spatial mollifier ``sum_i q_i P_{-eps u_i} f``."""
    _check_eps(eps)
    f = np.asarray(f, dtype=float)
    if space._use_eigen():
        return space.spectral_apply(f, m_eps_multiplier(space, eps, config, nodes))
    u, q = config.quadrature(nodes)
    return sum(qi * space.heat_apply(f, eps * ui) for ui, qi in zip(u, q))


def m_eps_matrix(space: Space, eps: float, config: MollifierConfig = DEFAULT) -> np.ndarray:
    """Dense matrix of ``M^eps`` acting on node vectors."""
    _check_eps(eps)
    _, phi = space.spectrum()
    return (phi * m_eps_multiplier(space, eps, config)) @ (phi.T * space.m)


def laplacian_formula_defect(
    space: Space, f, eps: float, nodes: int, config: MollifierConfig = DEFAULT
) -> float:
    """L^2(m) gap between ``(beta/2) Lap M^eps f`` and ``-(1/eps) int P_{-eps u} f k'(u) du``.

    Both sides use the same ``nodes``-point Gauss-Legendre rule with raw
    weights, so the gap is pure quadrature error.
    """
    _check_eps(eps)
    lam, _ = space.spectrum()
    a, b = config.support
    x, w = np.polynomial.legendre.leggauss(nodes)
    u = a + 0.5 * (b - a) * (x + 1)
    w = 0.5 * (b - a) * w
    E = np.exp(np.outer(lam, eps * u) * 0.5 * space.beta)
    lhs = 0.5 * space.beta * lam * (E @ (w * config.profile(u)))
    rhs = -(E @ (w * config.profile_derivative(u))) / eps
    g = space.spectral_apply(f, lhs - rhs)
    return float(np.sqrt(space.pairing(g, g)))


# ---------------------------------------------------------- time smoothing
def time_weights(dt: float, eps: float, config: MollifierConfig = DEFAULT) -> np.ndarray:
    """Weights ``omega_j``, ``j = -J..J``, proportional to ``eta(j dt / eps)``, summing to one."""
    _check_eps(eps)
    J = int(np.ceil(eps / dt))
    j = np.arange(-J, J + 1)
    om = config.time_kernel(j * dt / eps)
    om = om / om.sum()
    return om


def _convolve_clamped(rows: np.ndarray, om: np.ndarray, left, right) -> np.ndarray:
    """``out_k = sum_j om_j rows_{k+j}`` with ``left``/``right`` beyond the ends."""
    J = (om.size - 1) // 2
    K = rows.shape[0]
    pad = np.concatenate([np.repeat(left[None], J, 0), rows, np.repeat(right[None], J, 0)])
    out = np.zeros_like(rows)
    for i, w in enumerate(om):
        out += w * pad[i : i + K]
    return out


def _check_duration(curve: MeasureCurve, eps: float) -> None:
    _check_eps(eps)
    if eps > 0.5 * abs(curve.t):
        raise MollifierError(f"epsilon {eps} exceeds half the curve duration {abs(curve.t)}")


def smooth_curve(curve: MeasureCurve, eps: float, config: MollifierConfig = DEFAULT) -> MeasureCurve:
    """Apply ``M^eps`` to every slice, then convolve in time with constant extension."""
    _check_duration(curve, eps)
    space = curve.space
    hat = m_eps(space, curve.rho, eps, config)
    om = time_weights(curve.dt, eps, config)
    rho = _convolve_clamped(hat, om, hat[0], hat[-1])
    return MeasureCurve(space, curve.s, rho, curve.floor)


def smooth_drift(
    curve: MeasureCurve,
    drift: DriftField,
    eps: float,
    config: MollifierConfig = DEFAULT,
    *,
    weighting: str = "logmean",
) -> DriftField:
    """Drift on ``smooth_curve(curve, eps)`` obtained by duality.

    Per interval the functional ``phi -> z(rho_bar; V, D M^eps phi)`` is
    formed, convolved in time, and represented in the smoothed slice
    geometry by a weighted Poisson solve.  Outside ``[t, 0]`` the constant
    curve is stationary only with the drift ``(beta/2) D log rho``, so that
    functional (not zero) extends the drift; the smoothed pair then solves the
    discrete Fokker-Planck equation exactly.
    """
    _check_duration(curve, eps)
    space = curve.space
    drift.check(space, curve)
    rb = interval_densities(curve)
    flux = space.w * edge_weights(space, rb, weighting) * drift.values
    g = flux @ space.incidence  # B^T (w rho_hat V), one row per interval
    Mmat = m_eps_matrix(space, eps, config)
    ell_hat = g @ Mmat  # (M^eps)^T g per row
    hat = m_eps(space, curve.rho, eps, config)
    half_beta = 0.5 * space.beta
    left = half_beta * (space.stiffness @ hat[0])
    right = half_beta * (space.stiffness @ hat[-1])
    om = time_weights(curve.dt, eps, config)
    ell = _convolve_clamped(ell_hat, om, left, right)
    smoothed = smooth_curve(curve, eps, config)
    rbe = interval_densities(smoothed)
    psi = solve_weighted_poisson(space, edge_weights(space, rbe, weighting), ell)
    return DriftField(space.gradient(psi), psi)


def interior_intervals(curve: MeasureCurve, eps: float, config: MollifierConfig = DEFAULT) -> np.ndarray:
    """Intervals whose time window does not reach past the curve ends."""
    J = (time_weights(curve.dt, eps, config).size - 1) // 2
    idx = np.arange(curve.N)
    return idx[(idx - J >= 0) & (idx + J < curve.N)]


@dataclass
class SmoothingReport:
    eps: float
    sup_l1: float
    entropy_gap: float
    bound_in: float
    bound_out: float
    norm_in: float
    norm_out: float
    norm_out_interior: float
    slice_sup: float

    def as_dict(self) -> dict:
        return asdict(self)


def smoothing_report(
    curve: MeasureCurve, drift: DriftField, eps: float, config: MollifierConfig = DEFAULT
) -> SmoothingReport:
    """Distances, entropy gap and drift norms for one smoothing level."""
    space = curve.space
    sm = smooth_curve(curve, eps, config)
    Ve = smooth_drift(curve, drift, eps, config)
    sup_l1 = float(np.max(np.abs(sm.rho - curve.rho) @ space.m))
    gap = float(np.max(entropy(space, curve.rho) - entropy(space, sm.rho)))
    rbe = interval_densities(sm)
    per = np.sum(space.w * edge_weights(space, rbe) * Ve.values**2, axis=1)
    inner = interior_intervals(curve, eps, config)
    return SmoothingReport(
        eps=float(eps),
        sup_l1=sup_l1,
        entropy_gap=max(gap, 0.0),
        bound_in=curve.bound_constant(),
        bound_out=sm.bound_constant(),
        norm_in=float(np.sqrt(v_norm(curve, drift))),
        norm_out=float(np.sqrt(v_norm(sm, Ve))),
        norm_out_interior=float(np.sqrt(curve.dt * per[inner].sum())),
        slice_sup=float(np.sqrt(per.max())),
    )


def eps_sweep(curve: MeasureCurve, drift: DriftField, eps_values, config: MollifierConfig = DEFAULT) -> list[SmoothingReport]:
    return [smoothing_report(curve, drift, e, config) for e in eps_values]
