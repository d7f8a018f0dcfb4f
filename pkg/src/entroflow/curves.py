"""Densities, curves of measures and the drift geometry over them.

Time runs on a uniform grid ``t = s_0 < ... < s_N = 0``.  A drift assigns one
edge field to every interval ``[s_k, s_{k+1}]``; all interval quantities use
an interval density ``rho_bar_k`` (by default the arithmetic midpoint) whose
logarithmic mean along each edge weights the inner product

    z(rho; U, W) = sum_e w_e Lambda(rho_x, rho_y) U_e W_e.

With this weighting ``Lambda(rho) * D log rho = D rho`` holds edge by edge,
which is the discrete chain rule behind the osmotic velocity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .space import Space

__all__ = [
    "DEFAULT_FLOOR",
    "DensityError",
    "GridMismatchError",
    "PositivityError",
    "MeasureCurve",
    "DriftField",
    "validate_density",
    "entropy",
    "log_mean",
    "log_mean_grad",
    "identric_log_mean",
    "edge_weights",
    "log_mean_weights",
    "z_inner",
    "interval_densities",
    "time_grid",
    "v_norm",
    "weighted_laplacian",
    "solve_weighted_poisson",
    "recover_continuity_drift",
    "recover_fp_drift",
    "fp_functional",
    "dual_norm",
    "dual_norm_sup",
    "forward_integrate",
    "heat_flow_curve",
    "weak_fp_defect",
    "random_density",
    "random_smooth_curve",
]

DEFAULT_FLOOR = 1e-10
MASS_TOL = 1e-12
_SERIES_CUT = 0.1

WEIGHTINGS = ("logmean", "arithmetic")
MIDPOINTS = ("arithmetic", "identric")


class DensityError(ValueError):
    """A node vector is not an admissible probability density."""


class GridMismatchError(ValueError):
    """Curve and drift live on incompatible time grids or spaces."""


class PositivityError(RuntimeError):
    """The integrator produced a density below the floor."""

    def __init__(self, step: int, min_value: float, dt: float):
        self.step = step
        self.min_value = min_value
        super().__init__(
            f"positivity lost at step {step} (min density {min_value:.3e}); "
            f"retry with a smaller time step than {dt:.3e}"
        )


# --------------------------------------------------------------- densities
def validate_density(space: Space, rho, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Return ``rho`` as a float array after checking mass and floor."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape[-1] != space.n:
        raise DensityError(f"density has {rho.shape[-1]} entries, space has {space.n} nodes")
    if not np.all(np.isfinite(rho)):
        raise DensityError("density has non-finite entries")
    lo = float(rho.min())
    if lo < floor:
        raise DensityError(f"density minimum {lo:.3e} is below the floor {floor:.1e}")
    mass = rho @ space.m
    bad = np.abs(mass - 1.0) > MASS_TOL * max(1.0, float(np.max(rho)))
    if np.any(bad):
        raise DensityError(f"density mass {np.atleast_1d(mass)[np.atleast_1d(bad)][0]!r} differs from 1")
    return rho


def entropy(space: Space, rho) -> np.ndarray:
    """Relative entropy ``int rho log rho dm``."""
    rho = np.asarray(rho, dtype=float)
    return (rho * np.log(rho)) @ space.m


def random_density(
    space: Space, rng: np.random.Generator, spread: float = 1.0, smooth: float = 0.0
) -> np.ndarray:
    """Log-normal random density with unit mass.

    With ``smooth > 0`` the log-density is heat-smoothed for that time and
    rescaled to unit sup norm before applying ``spread``.
    """
    noise = rng.standard_normal(space.n)
    if smooth > 0:
        noise = space.heat_apply(noise, smooth)
        noise /= max(float(np.abs(noise).max()), 1e-300)
    rho = np.exp(spread * noise)
    return rho / (rho @ space.m)


# ---------------------------------------------------------- logarithmic mean
def _atanh_ratio(x):
    """``atanh(x) / x`` and its derivative, series near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_CUT
    xs = np.where(small, x, 0.0)
    xb = np.where(small, 0.5, x)
    x2 = xs * xs
    s_ser = np.zeros_like(xs)
    d_ser = np.zeros_like(xs)
    for j in range(9, 0, -1):
        s_ser = s_ser * x2 + 1.0 / (2 * j + 1)
        d_ser = d_ser * x2 + 2.0 * j / (2 * j + 1)
    s_ser = s_ser * x2 + 1.0
    d_ser = d_ser * xs
    at = np.arctanh(xb)
    s_big = at / xb
    d_big = (xb / (1 - xb * xb) - at) / (xb * xb)
    return np.where(small, s_ser, s_big), np.where(small, d_ser, d_big)


def log_mean(a, b) -> np.ndarray:
    """Logarithmic mean ``(a - b) / (log a - log b)`` with ``Lambda(a, a) = a``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x = (b - a) / (a + b)
    S, _ = _atanh_ratio(x)
    # away from the diagonal the plain quotient avoids rounding in 1 - |x|
    far = np.abs(x) >= _SERIES_CUT
    num = np.where(far, b - a, 1.0)
    den = np.where(far, np.log(np.where(far, b, 2.0)) - np.log(np.where(far, a, 1.0)), 1.0)
    return np.where(far, num / den, 0.5 * (a + b) / S)


def log_mean_grad(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of the logarithmic mean in each argument."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x = (b - a) / (a + b)
    S, dS = _atanh_ratio(x)
    h = 1.0 / S
    dh = -dS / (S * S)
    return 0.5 * (h - (1 + x) * dh), 0.5 * (h + (1 - x) * dh)


def identric_log_mean(a, b) -> np.ndarray:
    """Logarithm of the identric mean, ``(b log b - a log a)/(b - a) - 1``.

    It is the unique interval value with ``<b - a, log I> = Ent(b) - Ent(a)``
    for equal-mass densities, so the time quadrature of the entropy chain rule
    is exact.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)
    x = (b - a) / (a + b)
    small = np.abs(x) < _SERIES_CUT
    xs = np.where(small, x, 0.0)
    xb = np.where(small, 0.5, x)
    x2 = xs * xs
    ser = np.zeros_like(xs)
    for j in range(9, 0, -1):
        ser = ser * x2 + 1.0 / ((2 * j + 1) * (2 * j))
    ser = -ser * x2
    big = ((1 + xb) * np.log1p(xb) - (1 - xb) * np.log1p(-xb)) / (2 * xb) - 1.0
    return np.log(mid) + np.where(small, ser, big)


def edge_weights(space: Space, rho, weighting: str = "logmean") -> np.ndarray:
    """Edge interpolation ``rho_hat`` of a node density (last axis)."""
    rho = np.asarray(rho, dtype=float)
    a = rho[..., space.edges[:, 0]]
    b = rho[..., space.edges[:, 1]]
    if weighting == "logmean":
        return log_mean(a, b)
    if weighting == "arithmetic":
        return 0.5 * (a + b)
    raise ValueError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")


def edge_weights_grad(space: Space, rho, weighting: str = "logmean"):
    """Derivatives of ``rho_hat_e`` in its tail and head node densities."""
    rho = np.asarray(rho, dtype=float)
    a = rho[..., space.edges[:, 0]]
    b = rho[..., space.edges[:, 1]]
    if weighting == "logmean":
        return log_mean_grad(a, b)
    half = np.full(np.broadcast(a, b).shape, 0.5)
    return half, half


def log_mean_weights(space: Space, rho) -> np.ndarray:
    """Per-edge logarithmic means ``Lambda(rho_x, rho_y)``."""
    return edge_weights(space, rho, "logmean")


def z_inner(space: Space, rho, U, W, weighting: str = "logmean") -> np.ndarray:
    """``sum_e w_e rho_hat_e U_e W_e``, the slice inner product."""
    rh = edge_weights(space, rho, weighting)
    return (np.asarray(U) * np.asarray(W) * rh) @ space.w


# ------------------------------------------------------------------- curves
def time_grid(t: float, N: int) -> np.ndarray:
    """Uniform grid from ``t < 0`` to ``0`` with ``N`` intervals."""
    if not t < 0:
        raise ValueError(f"horizon must be negative, got {t}")
    if N < 1:
        raise ValueError("need at least one interval")
    s = t + (-t) * np.arange(N + 1) / N
    s[-1] = 0.0
    return s


@dataclass(frozen=True)
class MeasureCurve:
    """Densities ``rho[k]`` at grid times ``s[k]``; ``s`` uniform, ending at 0."""

    space: Space
    s: np.ndarray
    rho: np.ndarray
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        rho = np.array(self.rho, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise DensityError("a curve needs at least two grid times")
        if rho.shape != (s.size, self.space.n):
            raise DensityError(f"densities have shape {rho.shape}, expected {(s.size, self.space.n)}")
        steps = np.diff(s)
        if np.any(steps <= 0):
            raise DensityError("grid times must increase")
        if np.max(np.abs(steps - steps.mean())) > 1e-9 * steps.mean():
            raise DensityError("grid must be uniform")
        if abs(s[-1]) > 1e-12 * max(1.0, abs(s[0])):
            raise DensityError("grid must end at s = 0")
        validate_density(self.space, rho, self.floor)
        s.setflags(write=False)
        rho.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "rho", rho)

    @property
    def N(self) -> int:
        return self.s.size - 1

    @property
    def dt(self) -> float:
        return float((self.s[-1] - self.s[0]) / self.N)

    @property
    def t(self) -> float:
        return float(self.s[0])

    def derivative(self) -> np.ndarray:
        """Forward differences ``(rho_{k+1} - rho_k) / ds`` per interval."""
        return np.diff(self.rho, axis=0) / self.dt

    def density_bounds(self) -> tuple[float, float]:
        return float(self.rho.min()), float(self.rho.max())

    def bound_constant(self) -> float:
        """Smallest ``C`` with ``1/C <= rho <= C`` on the whole curve."""
        lo, hi = self.density_bounds()
        return max(hi, 1.0 / lo)


@dataclass(frozen=True)
class DriftField:
    """One edge field per interval; optional node potentials when ``values = D psi``."""

    values: np.ndarray
    potentials: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise GridMismatchError("drift values must have shape (intervals, edges)")
        if not np.all(np.isfinite(v)):
            raise ValueError("drift has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.potentials is not None:
            p = np.array(self.potentials, dtype=float)
            if p.ndim != 2 or p.shape[0] != v.shape[0]:
                raise GridMismatchError("potentials must have one row per interval")
            p.setflags(write=False)
            object.__setattr__(self, "potentials", p)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_potentials(cls, space: Space, psi) -> "DriftField":
        psi = np.asarray(psi, dtype=float)
        psi = psi - (psi @ space.m)[:, None]
        return cls(space.gradient(psi), psi)

    @classmethod
    def zeros(cls, space: Space, N: int) -> "DriftField":
        return cls(np.zeros((N, space.n_edges)), np.zeros((N, space.n)))

    def is_gradient(self, space: Space, tol: float = 1e-12) -> bool:
        if self.potentials is None:
            return False
        scale = max(1.0, float(np.abs(self.values).max()))
        return bool(np.abs(space.gradient(self.potentials) - self.values).max() <= tol * scale)

    def check(self, space: Space, curve: MeasureCurve | None = None) -> None:
        if self.values.shape[1] != space.n_edges:
            raise GridMismatchError(f"drift has {self.values.shape[1]} edge columns, space has {space.n_edges} edges")
        if curve is not None and self.N != curve.N:
            raise GridMismatchError(f"drift has {self.N} intervals, curve has {curve.N}")


def interval_densities(curve: MeasureCurve, midpoint: str = "arithmetic") -> np.ndarray:
    """Interval densities ``rho_bar_k``, shape ``(N, n)``."""
    a, b = curve.rho[:-1], curve.rho[1:]
    if midpoint == "arithmetic":
        return 0.5 * (a + b)
    if midpoint == "identric":
        return np.exp(identric_log_mean(a, b))
    raise ValueError(f"unknown midpoint {midpoint!r}; expected one of {MIDPOINTS}")


def v_norm(
    curve: MeasureCurve,
    drift: DriftField,
    *,
    midpoint: str = "arithmetic",
    weighting: str = "logmean",
) -> float:
    """``sum_k ds * z(rho_bar_k; V_k, V_k)``, the squared drift norm."""
    drift.check(curve.space, curve)
    rb = interval_densities(curve, midpoint)
    per = z_inner(curve.space, rb, drift.values, drift.values, weighting)
    return float(curve.dt * per.sum())


# ------------------------------------------------------------ poisson solves
def weighted_laplacian(space: Space, rho_hat) -> np.ndarray:
    """``B^T diag(w rho_hat) B`` for one or many edge weight rows."""
    c = np.asarray(rho_hat, dtype=float) * space.w
    lead = c.shape[:-1]
    n = space.n
    x, y = space.edges[:, 0], space.edges[:, 1]
    L = np.zeros(lead + (n, n))
    flat = L.reshape(-1, n * n)
    cf = c.reshape(-1, c.shape[-1])
    for idx_a, idx_b, sign in ((x, x, 1.0), (y, y, 1.0), (x, y, -1.0), (y, x, -1.0)):
        np.add.at(flat, (slice(None), idx_a * n + idx_b), sign * cf)
    return L


def solve_weighted_poisson(space: Space, rho_hat, rhs, tol: float = 1e-9) -> np.ndarray:
    """Solve ``L psi = rhs`` with ``int psi dm = 0`` for each row.

    ``rhs`` must sum to zero (it is an m-weighted node vector).
    """
    rhs = np.atleast_2d(np.asarray(rhs, dtype=float))
    L = weighted_laplacian(space, np.atleast_2d(rho_hat))
    scale = np.abs(rhs).sum(axis=-1)
    tot = rhs.sum(axis=-1)
    if np.any(np.abs(tot) > tol * np.maximum(scale, 1.0)):
        raise ValueError("Poisson right-hand side violates the compatibility condition")
    # project out the rounding-level constant component
    rhs = rhs - tot[:, None] / space.n
    # the rank-one term pins int psi dm = 0 and leaves L psi = rhs intact
    A = L + np.outer(space.m, space.m)
    return np.linalg.solve(A, rhs[..., None])[..., 0]


def fp_functional(curve: MeasureCurve, *, midpoint: str = "arithmetic", diffusion: bool = True) -> np.ndarray:
    """Node representation of the weak Fokker-Planck functional per interval.

    Row ``k`` is ``M (d_s rho_k - (beta/2) Laplacian rho_bar_k)``, so that the
    functional acting on a test potential ``phi_k`` is the dot product.
    """
    space = curve.space
    r = curve.derivative()
    if diffusion:
        rb = interval_densities(curve, midpoint)
        r = r - 0.5 * space.beta * space.laplacian(rb)
    return r * space.m


def _recover(curve, midpoint, weighting, diffusion) -> DriftField:
    space = curve.space
    rb = interval_densities(curve, midpoint)
    rh = edge_weights(space, rb, weighting)
    rhs = fp_functional(curve, midpoint=midpoint, diffusion=diffusion)
    psi = solve_weighted_poisson(space, rh, rhs)
    return DriftField(space.gradient(psi), psi)


def recover_continuity_drift(
    curve: MeasureCurve, *, midpoint: str = "arithmetic", weighting: str = "logmean"
) -> DriftField:
    """Minimal-norm current velocity ``Y = D psi`` with ``-div(rho_hat Y) = d_s rho``."""
    return _recover(curve, midpoint, weighting, diffusion=False)


def recover_fp_drift(
    curve: MeasureCurve, *, midpoint: str = "arithmetic", weighting: str = "logmean"
) -> DriftField:
    """Minimal-norm drift ``V = D psi`` with ``-div(rho_hat V) = d_s rho - (beta/2) Laplacian rho_bar``."""
    return _recover(curve, midpoint, weighting, diffusion=True)


def dual_norm(curve: MeasureCurve, *, midpoint: str = "arithmetic", weighting: str = "logmean") -> float:
    """Operator norm of the weak Fokker-Planck functional, via its representer."""
    V = recover_fp_drift(curve, midpoint=midpoint, weighting=weighting)
    return float(np.sqrt(v_norm(curve, V, midpoint=midpoint, weighting=weighting)))


def dual_norm_sup(curve: MeasureCurve, *, midpoint: str = "arithmetic", weighting: str = "logmean") -> float:
    """The same norm as ``dual_norm``, from the sup definition.

    Maximizes ``ell(phi)^2 / ||phi||^2`` over all node potentials per interval
    with a pseudo-inverse of the Gram matrix (eigendecomposition, constants
    discarded), never forming the drift.
    """
    space = curve.space
    dt = curve.dt
    rb = interval_densities(curve, midpoint)
    rh = edge_weights(space, rb, weighting)
    ell = dt * fp_functional(curve, midpoint=midpoint)
    total = 0.0
    for k in range(curve.N):
        gram = dt * weighted_laplacian(space, rh[k])
        vals, vecs = scipy.linalg.eigh(gram)
        keep = vals > 1e-12 * vals.max()
        coef = vecs[:, keep].T @ ell[k]
        total += float(np.sum(coef * coef / vals[keep]))
    return float(np.sqrt(total))


def weak_fp_defect(
    curve: MeasureCurve,
    drift: DriftField,
    phi,
    k0: int = 0,
    k1: int | None = None,
    *,
    midpoint: str = "arithmetic",
    weighting: str = "logmean",
) -> float:
    """Residual of the weak Fokker-Planck identity on ``[s_k0, s_k1]``.

    ``phi`` holds one test potential per interval, shape ``(N, n)``.  The
    returned number is ``sum_k ds [<d_s rho - (beta/2) Lap rho_bar, phi>_m
    - z(rho_bar; V, D phi)]`` over the selected intervals.
    """
    space = curve.space
    drift.check(space, curve)
    k1 = curve.N if k1 is None else k1
    phi = np.asarray(phi, dtype=float)
    sl = slice(k0, k1)
    ell = fp_functional(curve, midpoint=midpoint)[sl]
    rb = interval_densities(curve, midpoint)[sl]
    lhs = np.sum(ell * phi[sl])
    rhs = np.sum(z_inner(space, rb, drift.values[sl], space.gradient(phi[sl]), weighting))
    return float(curve.dt * (lhs - rhs))


# --------------------------------------------------------------- integrator
def _step_residual(space, r, u, V, dt, weighting, beta):
    ub = 0.5 * (r + u)
    flux = space.w * edge_weights(space, ub, weighting) * V
    return u - r - dt * (0.5 * beta * space.laplacian(ub) + (flux @ space.incidence) / space.m)


def forward_integrate(
    space: Space,
    rho0,
    drift: DriftField,
    t: float,
    *,
    weighting: str = "logmean",
    floor: float = DEFAULT_FLOOR,
    newton_tol: float = 1e-14,
    max_newton: int = 50,
    diffusion: bool = True,
) -> MeasureCurve:
    """Integrate ``d_s rho = (beta/2) Lap rho - div(rho_hat V)`` from ``s = t`` to 0.

    Each step is the implicit midpoint rule

        u - r = ds [(beta/2) Lap u_bar + M^{-1} B^T (w rho_hat(u_bar) V_k)],
        u_bar = (r + u) / 2,

    solved by Newton's method.  The update is in divergence form so the mass
    of every Newton iterate equals the mass of ``r`` up to rounding; it is
    also the exact discrete partner of ``recover_fp_drift``.  With
    ``diffusion=False`` the Laplacian term is dropped (continuity equation),
    pairing with ``recover_continuity_drift``.

    Raises
    ------
    PositivityError
        If a step leaves the positive cone or ends below ``floor``.
    """
    rho0 = validate_density(space, rho0, floor)
    drift.check(space)
    N = drift.N
    s = time_grid(t, N)
    dt = (0.0 - t) / N
    out = np.empty((N + 1, space.n))
    out[0] = rho0
    gen = space.generator
    B = space.incidence
    x, y = space.edges[:, 0], space.edges[:, 1]
    eye = np.eye(space.n)
    beta = space.beta if diffusion else 0.0
    gen_norm = 0.5 * beta * np.abs(gen).sum(axis=1).max()
    for k in range(N):
        r = out[k]
        V = drift.values[k]
        # rounding floor of the residual evaluation
        flux_norm = np.abs((np.abs(space.w * V) @ np.abs(B)) / space.m).max()
        res_scale = 1.0 + dt * (gen_norm + flux_norm)
        # explicit-midpoint predictor is a fine Newton start for small steps
        u = r.copy()
        converged = False
        for _ in range(max_newton):
            F = _step_residual(space, r, u, V, dt, weighting, beta)
            if np.max(np.abs(F)) <= newton_tol * res_scale * max(1.0, np.max(np.abs(u))):
                converged = True
                break
            ub = 0.5 * (r + u)
            ga, gb = edge_weights_grad(space, ub, weighting)
            cw = space.w * V
            # d(rho_hat_e)/d(u_bar) as an E x n matrix
            JL = np.zeros((space.n_edges, space.n))
            JL[np.arange(space.n_edges), x] += ga
            JL[np.arange(space.n_edges), y] += gb
            J = eye - 0.5 * dt * (0.5 * beta * gen + ((B.T * cw) @ JL) / space.m[:, None])
            du = np.linalg.solve(J, -F)
            lam = 1.0
            while np.any(u + lam * du <= -r) and lam > 1e-6:
                lam *= 0.5
            u = u + lam * du
        if not np.all(np.isfinite(u)) or np.min(u) < floor:
            raise PositivityError(k, float(np.nanmin(u)), dt)
        if not converged:
            raise RuntimeError(f"Newton iteration stalled at step {k}; reduce the time step")
        out[k + 1] = u
    return MeasureCurve(space, s, out, floor)


def heat_flow_curve(space: Space, rho0, t: float, N: int) -> MeasureCurve:
    """Exact heat flow ``rho_k = P_{-(s_k - t)} rho0`` sampled on the grid."""
    rho0 = validate_density(space, rho0)
    s = time_grid(t, N)
    rho = np.stack([space.heat_measure(rho0, sk - t) for sk in s])
    return MeasureCurve(space, s, rho)


def random_smooth_curve(
    space: Space,
    rng: np.random.Generator,
    t: float = -0.5,
    N: int = 32,
    *,
    modes: int = 3,
    spread: float = 0.6,
) -> MeasureCurve:
    """Smooth random curve ``rho_s ~ exp(sum_j c_j(s) f_j)`` normalized per slice.

    ``c_j`` are random trigonometric polynomials in ``s`` and ``f_j`` random
    smooth node fields (heat-smoothed noise), so the curve is smooth in time
    and refinement studies can evaluate it on any grid with the same draw.
    """
    return _SmoothCurveDraw(space, rng, modes, spread).curve(t, N)


class _SmoothCurveDraw:
    """A fixed random smooth curve that can be sampled on several grids."""

    def __init__(self, space, rng, modes=3, spread=0.6):
        self.space = space
        fields = rng.standard_normal((modes, space.n))
        # heat smoothing keeps fields mesh-regular on rings and grids
        lam, _ = space.spectrum()
        tau = 1.0 / max(1.0, -float(lam.min())) ** 0.5
        fields = np.stack([space.heat_apply(f, tau) for f in fields])
        fields /= np.maximum(np.abs(fields).max(axis=1, keepdims=True), 1e-300)
        self.fields = fields
        self.freq = rng.uniform(0.5, 3.0, modes)
        self.phase = rng.uniform(0, 2 * np.pi, modes)
        self.amp = spread * rng.uniform(0.3, 1.0, modes)
        self.base = spread * 0.5 * rng.standard_normal(modes)

    def density(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        c = self.base + self.amp * np.sin(self.freq * 2 * np.pi * s[:, None] + self.phase)
        logr = c @ self.fields
        rho = np.exp(logr - logr.max(axis=1, keepdims=True))
        return rho / (rho @ self.space.m)[:, None]

    def curve(self, t, N):
        s = time_grid(t, N)
        return MeasureCurve(self.space, s, self.density(s))
