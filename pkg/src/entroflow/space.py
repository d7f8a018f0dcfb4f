"""Finite metric measure spaces carrying a Dirichlet form.

A :class:`Space` is a connected weighted graph with a reference probability
measure ``m`` on the nodes, symmetric conductances ``w`` on the edges and a
ground distance ``d``.  The Dirichlet form is

    E(f, g) = sum_e w_e (Df)_e (Dg)_e,

with ``(Df)_{x->y} = f(y) - f(x)``.  Everything else (Laplacian, carre du
champ, heat semigroup, heat kernel) is derived from it so that integration
by parts holds to rounding error.

Fields are plain numpy arrays: a node field has shape ``(..., n)`` and an edge
field has shape ``(..., E)``, one value per edge in its stored orientation
``edges[e] = (x, y)``.  The reversed orientation carries the negated value.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph
import scipy.sparse.linalg
import tomli
import tomli_w

__all__ = [
    "Space",
    "HeatKernel",
    "BakryEmeryReport",
    "SpaceError",
    "k2",
    "ring",
    "grid",
    "load_space",
]

MASS_TOL = 1e-12
EIGEN_MAX_NODES = 512


class SpaceError(ValueError):
    """Raised when a space description violates the space invariants."""


@dataclass(frozen=True)
class HeatKernel:
    """Symmetric density of the heat semigroup with respect to ``m x m``."""

    s: float
    matrix: np.ndarray
    min_entry: float
    max_entry: float
    a_s: float
    strictly_positive: bool


@dataclass(frozen=True)
class BakryEmeryReport:
    """Diagnostic comparison of Gamma(P f) against P Gamma(f); never asserted."""

    s: float
    lhs_sup: float
    rhs_sup: float
    ratio: float
    implied_K: float
    degenerate: bool

    def as_dict(self) -> dict:
        return {
            "s": self.s,
            "lhs_sup": self.lhs_sup,
            "rhs_sup": self.rhs_sup,
            "ratio": self.ratio,
            "implied_K": self.implied_K,
            "degenerate": self.degenerate,
        }


class Space:
    """Connected weighted graph with reference measure and ground distance.

    Parameters
    ----------
    measure : array_like, shape (n,)
        Positive node weights summing to one.
    edges : array_like, shape (E, 2)
        Oriented undirected edges ``(x, y)``; each unordered pair at most once.
    conductances : array_like, shape (E,)
        Positive symmetric conductances ``w_e``.
    distance : array_like, shape (n, n), optional
        Ground distance.  Defaults to the shortest-path distance with edge
        length ``sqrt(mean(m_x, m_y) / w_e)``, which reproduces the mesh size
        on the canonical rings and grids.
    beta : float
        Diffusion constant.
    K : float
        Curvature tag; metadata only.
    """

    def __init__(
        self,
        measure,
        edges,
        conductances,
        distance=None,
        beta: float = 1.0,
        K: float = 0.0,
        *,
        kind: str = "custom",
        name: str | None = None,
        coords=None,
        node_names=None,
        heat_method: str = "auto",
    ):
        m = np.array(measure, dtype=float)
        e = np.array(edges, dtype=np.int64).reshape(-1, 2)
        w = np.array(conductances, dtype=float).reshape(-1)
        n = m.size
        if m.ndim != 1 or n < 2:
            raise SpaceError("measure must be a vector with at least two nodes")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise SpaceError("reference measure must be strictly positive")
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise SpaceError(f"reference measure has total mass {m.sum()!r}, expected 1")
        if e.shape[0] != w.size:
            raise SpaceError("one conductance per edge is required")
        if e.size == 0:
            raise SpaceError("edge list is empty")
        if np.any(e < 0) or np.any(e >= n) or np.any(e[:, 0] == e[:, 1]):
            raise SpaceError("edges must join two distinct existing nodes")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise SpaceError("conductances must be strictly positive")
        pairs = {tuple(sorted(p)) for p in e.tolist()}
        if len(pairs) != e.shape[0]:
            raise SpaceError("duplicate edge in edge list")
        if beta <= 0 or not np.isfinite(beta):
            raise SpaceError("beta must be positive")
        if heat_method not in ("auto", "eigen", "implicit"):
            raise SpaceError(f"unknown heat method {heat_method!r}")

        self.n = n
        self.m = m
        self.edges = e
        self.w = w
        self.beta = float(beta)
        self.K = float(K)
        self.kind = kind
        self.name = name or kind
        self.coords = None if coords is None else np.asarray(coords, dtype=float)
        self.node_names = list(node_names) if node_names is not None else None
        self.heat_method = heat_method

        adj = scipy.sparse.coo_matrix((np.ones(len(w)), (e[:, 0], e[:, 1])), shape=(n, n))
        ncomp, _ = scipy.sparse.csgraph.connected_components(adj, directed=False)
        if ncomp != 1:
            raise SpaceError("edge graph is not connected")

        # incidence: (Df)_e = f[y] - f[x]
        B = np.zeros((len(w), n))
        B[np.arange(len(w)), e[:, 0]] = -1.0
        B[np.arange(len(w)), e[:, 1]] = 1.0
        self.incidence = B
        self.stiffness = B.T @ (w[:, None] * B)

        if distance is None:
            length = np.sqrt(0.5 * (m[e[:, 0]] + m[e[:, 1]]) / w)
            graph = scipy.sparse.csr_matrix((length, (e[:, 0], e[:, 1])), shape=(n, n))
            distance = scipy.sparse.csgraph.shortest_path(graph, directed=False)
        d = np.array(distance, dtype=float)
        _check_distance(d, n)
        self.d = d

        self._lock = threading.Lock()
        self._spectrum: tuple[np.ndarray, np.ndarray] | None = None

        for arr in (self.m, self.edges, self.w, self.d, self.incidence, self.stiffness):
            arr.setflags(write=False)

    # ------------------------------------------------------------------ basics
    @property
    def n_edges(self) -> int:
        return self.w.size

    def __repr__(self) -> str:
        return f"Space({self.name!r}, n={self.n}, edges={self.n_edges}, beta={self.beta})"

    def integrate(self, f) -> np.ndarray:
        """``int f dm`` along the last axis."""
        return np.asarray(f) @ self.m

    def pairing(self, f, g) -> np.ndarray:
        """L^2(m) pairing ``int f g dm``."""
        return (np.asarray(f) * np.asarray(g)) @ self.m

    def energy(self, f, g=None):
        """Dirichlet form ``E(f, g) = sum_e w_e (Df)_e (Dg)_e``."""
        df = self.gradient(f)
        dg = df if g is None else self.gradient(g)
        return (df * dg) @ self.w

    # --------------------------------------------------------------- operators
    def gradient(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        return f[..., self.edges[:, 1]] - f[..., self.edges[:, 0]]

    def divergence(self, q) -> np.ndarray:
        """Divergence adjoint to ``-D``: ``sum_x div(q) phi m = -sum_e w q (D phi)``.

        On a node, ``div(q)(x) = (1/m(x)) sum_{y~x} w_xy q_{x->y}`` (net outflow),
        so that ``div(Df)`` is the Laplacian.
        """
        q = np.asarray(q, dtype=float)
        return -((q * self.w) @ self.incidence) / self.m

    def laplacian(self, f) -> np.ndarray:
        """``(Delta f)(x) = (1/m(x)) sum_y w_xy (f(y) - f(x))``."""
        f = np.asarray(f, dtype=float)
        return -(f @ self.stiffness) / self.m

    def gamma(self, f, g=None) -> np.ndarray:
        """Carre du champ, ``Gamma(f, g)(x) = (1/2m(x)) sum_{y~x} w_xy (Df)(Dg)``."""
        df = self.gradient(f)
        dg = df if g is None else self.gradient(g)
        prod = df * dg * self.w
        return 0.5 * (prod @ np.abs(self.incidence)) / self.m

    @property
    def generator(self) -> np.ndarray:
        """Dense matrix of the Laplacian acting on node vectors."""
        return -self.stiffness / self.m[:, None]

    # ---------------------------------------------------------------- spectrum
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenpairs of the Laplacian, ``Delta = Phi diag(lam) Phi^T M``.

        ``lam`` is sorted decreasingly (``lam[0] == 0``) and ``Phi`` is
        orthonormal in ``L^2(m)``.  Computed once per space.
        """
        if self._spectrum is None:
            with self._lock:
                if self._spectrum is None:
                    s = np.sqrt(self.m)
                    sym = self.stiffness / s[:, None] / s[None, :]
                    vals, vecs = scipy.linalg.eigh(sym)
                    lam = -vals
                    lam[0] = 0.0
                    phi = vecs / s[:, None]
                    # constant mode with a fixed sign
                    phi[:, 0] = np.sign(phi[:, 0].sum()) * phi[:, 0]
                    lam.setflags(write=False)
                    phi.setflags(write=False)
                    self._spectrum = (lam, phi)
        return self._spectrum

    def _use_eigen(self) -> bool:
        if self.heat_method == "auto":
            return self.n <= EIGEN_MAX_NODES
        return self.heat_method == "eigen"

    def heat_multiplier(self, s: float) -> np.ndarray:
        lam, _ = self.spectrum()
        return np.exp(s * 0.5 * self.beta * lam)

    def spectral_apply(self, f, multiplier) -> np.ndarray:
        """Apply the operator ``Phi diag(multiplier) Phi^T M`` to ``f``."""
        _, phi = self.spectrum()
        coeffs = (np.asarray(f, dtype=float) * self.m) @ phi
        return (coeffs * multiplier) @ phi.T

    def heat_apply(self, f, s: float) -> np.ndarray:
        """Heat semigroup ``P_{-s} f = exp(s (beta/2) Delta) f`` for ``s >= 0``."""
        if s < 0:
            raise ValueError(f"heat semigroup needs s >= 0, got {s}")
        f = np.asarray(f, dtype=float)
        if s == 0:
            return f.copy()
        if self._use_eigen():
            return self.spectral_apply(f, self.heat_multiplier(s))
        return self._heat_implicit(f, s)

    def _heat_implicit(self, f: np.ndarray, s: float) -> np.ndarray:
        gen = scipy.sparse.csr_matrix(self.generator)
        norm = np.abs(self.generator).sum(axis=1).max()
        steps = max(1, int(np.ceil(s * 0.5 * self.beta * norm)))
        h = s / steps
        op = scipy.sparse.identity(self.n, format="csc") - h * 0.5 * self.beta * gen.tocsc()
        solve = scipy.sparse.linalg.factorized(op)
        out = np.atleast_2d(f).copy()
        for _ in range(steps):
            out = np.stack([solve(row) for row in out])
        return out.reshape(f.shape)

    def heat_kernel(self, s: float) -> HeatKernel:
        """Kernel ``p`` with ``(P_{-s} f)(x) = sum_y p(x, y) f(y) m(y)``."""
        if s <= 0:
            raise ValueError(f"heat kernel needs s > 0, got {s}")
        if self._use_eigen():
            _, phi = self.spectrum()
            p = (phi * self.heat_multiplier(s)) @ phi.T
        else:
            p = self._heat_implicit(np.diag(1.0 / self.m), s).T
        p = 0.5 * (p + p.T)
        lo, hi = float(p.min()), float(p.max())
        positive = lo > 0
        a_s = max(hi, 1.0 / lo) if positive else float("inf")
        return HeatKernel(float(s), p, lo, hi, a_s, positive)

    def heat_measure(self, rho, s: float) -> np.ndarray:
        """Density of ``H_s(rho m)``, i.e. ``P_{-s} rho`` (self-adjointness in m)."""
        return self.heat_apply(rho, s)

    def bakry_emery_report(self, f, s: float) -> BakryEmeryReport:
        """Compare ``||Gamma(P f)||_inf`` with ``||P Gamma(f)||_inf``.

        ``implied_K`` solves ``ratio = exp(-2 K beta s)``.
        """
        if s <= 0:
            raise ValueError("s must be positive")
        pf = self.heat_apply(f, s)
        lhs = float(np.max(self.gamma(pf)))
        rhs = float(np.max(self.heat_apply(self.gamma(f), s)))
        if rhs <= 1e-300:
            return BakryEmeryReport(float(s), lhs, rhs, float("nan"), float("nan"), True)
        ratio = lhs / rhs
        implied = -np.log(ratio) / (2 * self.beta * s) if ratio > 0 else float("inf")
        return BakryEmeryReport(float(s), lhs, rhs, ratio, float(implied), False)

    # --------------------------------------------------------------- file i/o
    def to_dict(self) -> dict:
        out = {
            "nodes": {"count": self.n},
            "edges": {"list": [[int(x), int(y), float(c)] for (x, y), c in zip(self.edges, self.w)]},
            "measure": {"weights": [float(v) for v in self.m]},
            "params": {"beta": self.beta, "K": self.K},
            "distance": {"matrix": [[float(v) for v in row] for row in self.d]},
        }
        if self.node_names is not None:
            out["nodes"]["names"] = list(self.node_names)
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict, name: str | None = None) -> "Space":
        allowed = {"nodes", "edges", "measure", "params", "distance"}
        _reject_unknown(data, allowed, "space file")
        for section in ("nodes", "edges", "measure", "params"):
            if section not in data:
                raise SpaceError(f"space file lacks section [{section}]")
        nodes = data["nodes"]
        _reject_unknown(nodes, {"count", "names"}, "[nodes]")
        names = nodes.get("names")
        n = int(nodes.get("count", len(names) if names else 0))
        if names is not None and len(names) != n:
            raise SpaceError("[nodes] names and count disagree")
        _reject_unknown(data["edges"], {"list"}, "[edges]")
        rows = data["edges"]["list"]
        if any(len(r) != 3 for r in rows):
            raise SpaceError("each edge row must be [x, y, conductance]")
        edges = [[int(r[0]), int(r[1])] for r in rows]
        cond = [float(r[2]) for r in rows]
        _reject_unknown(data["measure"], {"weights", "uniform"}, "[measure]")
        if data["measure"].get("uniform", False):
            measure = np.full(n, 1.0 / n)
        else:
            measure = data["measure"]["weights"]
        if len(measure) != n:
            raise SpaceError("[measure] weights must have one entry per node")
        params = data["params"]
        _reject_unknown(params, {"beta", "K"}, "[params]")
        dist = None
        if "distance" in data:
            _reject_unknown(data["distance"], {"matrix"}, "[distance]")
            dist = data["distance"]["matrix"]
        return cls(
            measure,
            edges,
            cond,
            dist,
            beta=float(params.get("beta", 1.0)),
            K=float(params.get("K", 0.0)),
            name=name,
            node_names=names,
        )

    @classmethod
    def from_toml(cls, text: str, name: str | None = None) -> "Space":
        return cls.from_dict(tomli.loads(text), name=name)

    @classmethod
    def from_file(cls, path) -> "Space":
        path = Path(path)
        return cls.from_toml(path.read_text(), name=path.stem)


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise SpaceError(f"unknown keys in {where}: {sorted(unknown)}")


def _check_distance(d: np.ndarray, n: int) -> None:
    if d.shape != (n, n):
        raise SpaceError("distance matrix has the wrong shape")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise SpaceError("distances must be finite and nonnegative")
    if np.max(np.abs(d - d.T)) > 1e-12 * max(1.0, d.max()):
        raise SpaceError("distance matrix is not symmetric")
    if np.any(np.diag(d) != 0):
        raise SpaceError("distance matrix has a nonzero diagonal")
    tol = 1e-12 * max(1.0, d.max())
    for k in range(n):
        if np.any(d > d[:, k : k + 1] + d[k : k + 1, :] + tol):
            raise SpaceError("distance violates the triangle inequality")


# ---------------------------------------------------------------- generators
def k2(beta: float = 1.0, K: float = 0.0) -> Space:
    """Two nodes ``a, b`` with ``m = (1/2, 1/2)``, ``w = 1`` and ``d(a, b) = 1``."""
    return Space(
        [0.5, 0.5],
        [[0, 1]],
        [1.0],
        [[0.0, 1.0], [1.0, 0.0]],
        beta=beta,
        K=K,
        kind="k2",
        name="k2",
        node_names=["a", "b"],
    )


def ring(n: int, beta: float = 1.0, K: float = 0.0) -> Space:
    """Discrete circle of length one: uniform ``m = 1/n``, ``w = n``.

    The Laplacian is the periodic second difference with mesh ``h = 1/n``.
    """
    if n < 3:
        raise SpaceError("a ring needs at least three nodes")
    idx = np.arange(n)
    edges = np.stack([idx, (idx + 1) % n], axis=1)
    gap = np.abs(idx[:, None] - idx[None, :])
    d = np.minimum(gap, n - gap) / n
    return Space(
        np.full(n, 1.0 / n),
        edges,
        np.full(n, float(n)),
        d,
        beta=beta,
        K=K,
        kind="ring",
        name=f"ring:{n}",
        coords=idx / n,
    )


def grid(n: int, beta: float = 1.0, K: float = 0.0) -> Space:
    """Periodic ``n x n`` grid on the unit flat torus, ``m = 1/n^2``, ``w = 1``."""
    if n < 3:
        raise SpaceError("a periodic grid needs n >= 3")
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    node = (i * n + j).ravel()
    right = (i * n + (j + 1) % n).ravel()
    down = (((i + 1) % n) * n + j).ravel()
    edges = np.concatenate([np.stack([node, right], 1), np.stack([node, down], 1)])
    coords = np.stack([i.ravel(), j.ravel()], axis=1) / n
    gap = np.abs(coords[:, None, :] - coords[None, :, :])
    gap = np.minimum(gap, 1.0 - gap)
    d = np.sqrt((gap**2).sum(-1))
    return Space(
        np.full(n * n, 1.0 / (n * n)),
        edges,
        np.ones(len(edges)),
        d,
        beta=beta,
        K=K,
        kind="grid",
        name=f"grid:{n}",
        coords=coords,
    )


def load_space(spec: str, beta: float | None = None) -> Space:
    """Build a space from ``k2``, ``ring:N``, ``grid:N`` or a TOML file path."""
    kw = {} if beta is None else {"beta": beta}
    if spec == "k2":
        return k2(**kw)
    if spec.startswith("ring:"):
        return ring(int(spec.split(":", 1)[1]), **kw)
    if spec.startswith("grid:"):
        return grid(int(spec.split(":", 1)[1]), **kw)
    path = Path(spec)
    if not path.exists():
        raise SpaceError(f"unknown space {spec!r}: not a generator name or file")
    space = Space.from_file(path)
    if beta is not None:
        space = Space(space.m, space.edges, space.w, space.d, beta=beta, K=space.K, name=space.name)
    return space
