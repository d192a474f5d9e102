"""Radial grids, weighted quadrature and spectral differentiation.

Everything downstream works on the half line with the measure r^(n-1) dr,
n in {3, 4, 5}.  A grid packages quadrature nodes/weights for that measure;
a Discretization adds barycentric differentiation and cumulative-moment
matrices on the same nodes, used by the solvers and the nonlocal kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import gammaincc

SCHEME_GAUSS = "gauss_legendre_mapped"
SCHEME_CC = "composite_clenshaw_curtis"
SCHEMES = (SCHEME_GAUSS, SCHEME_CC)

SUPPORTED_DIMS = (3, 4, 5)
DEFAULT_R_MAX = {3: 30.0, 4: 25.0, 5: 20.0}


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n, 2 pi^(n/2) / Gamma(n/2)."""
    if n < 2:
        raise ValueError(f"sphere_area requires n >= 2, got {n}")
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _fejer1(m: int) -> Tuple[np.ndarray, np.ndarray]:
    """Fejer-1 (open Clenshaw-Curtis) nodes/weights on (-1, 1)."""
    j = np.arange(m)
    theta = (2 * j + 1) * math.pi / (2 * m)
    x = np.cos(theta)
    k = np.arange(1, m // 2 + 1)
    w = 1.0 - 2.0 * np.sum(
        np.cos(2.0 * np.outer(theta, k)) / (4.0 * k**2 - 1.0), axis=1
    )
    w *= 2.0 / m
    order = np.argsort(x)
    return x[order], w[order]


@dataclass(frozen=True)
class RadialGrid:
    """Quadrature rule for integral of f(r) r^(n-1) dr over (0, r_max).

    nodes are strictly increasing in (0, r_max); weights already include
    the r^(n-1) factor, so sum(weights * f(nodes)) approximates the
    weighted integral directly.
    """

    dim: int
    r_max: float
    nodes: np.ndarray
    weights: np.ndarray
    scheme: str

    @property
    def size(self) -> int:
        return self.nodes.size

    def header(self) -> str:
        return (
            f"n={self.dim} r_max={self.r_max:.17g} N={self.size} "
            f"scheme={self.scheme}"
        )

    def cache_key(self) -> tuple:
        return (self.dim, float(self.r_max), self.size, self.scheme)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RadialGrid):
            return NotImplemented
        return self.cache_key() == other.cache_key()

    def __hash__(self) -> int:
        return hash(self.cache_key())


def parse_grid_header(line: str) -> dict:
    """Parse a `n=.. r_max=.. N=.. scheme=..` descriptor (extra keys pass through)."""
    out = {}
    for tok in line.split():
        if "=" not in tok:
            raise ValueError(f"malformed grid header token: {tok!r}")
        key, val = tok.split("=", 1)
        out[key] = val
    for key in ("n", "r_max", "N", "scheme"):
        if key not in out:
            raise ValueError(f"grid header missing key {key!r}: {line!r}")
    out["n"] = int(out["n"])
    out["r_max"] = float(out["r_max"])
    out["N"] = int(out["N"])
    return out


def build_grid(
    n: int, r_max: float, N: int, scheme: str = SCHEME_GAUSS
) -> RadialGrid:
    """Build a quadrature grid for the measure r^(n-1) dr on (0, r_max)."""
    if n not in SUPPORTED_DIMS:
        raise ValueError(f"dimension n must be one of {SUPPORTED_DIMS}, got {n}")
    if not (r_max > 0.0 and np.isfinite(r_max)):
        raise ValueError(f"r_max must be positive and finite, got {r_max}")
    if N < 16:
        raise ValueError(f"grid size N must be >= 16, got {N}")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")

    if scheme == SCHEME_GAUSS:
        x, w = np.polynomial.legendre.leggauss(N)
        r = 0.5 * r_max * (x + 1.0)
        w = 0.5 * r_max * w
    else:
        # composite Fejer-1 panels; the open rule keeps nodes off 0 and r_max
        panels = max(1, N // 32)
        sizes = [N // panels + (1 if i < N % panels else 0) for i in range(panels)]
        edges = np.linspace(0.0, r_max, panels + 1)
        rs, ws = [], []
        for (a, b), m in zip(zip(edges[:-1], edges[1:]), sizes):
            x, w1 = _fejer1(m)
            rs.append(0.5 * (b - a) * (x + 1.0) + a)
            ws.append(0.5 * (b - a) * w1)
        r = np.concatenate(rs)
        w = np.concatenate(ws)

    weights = w * r ** (n - 1)
    return RadialGrid(dim=n, r_max=float(r_max), nodes=r, weights=weights, scheme=scheme)


@dataclass
class RadialFunction:
    """Sampled radial profile on a grid, with an optional exponential tail.

    tail = (c, tau) models f(r) ~ c exp(-tau r) for r > r_max and feeds the
    closed-form tail corrections of the quadratures.  source, when present,
    is the exact callable the samples came from; operations that need
    sub-grid information (e.g. discontinuous inputs) use it.
    """

    grid: RadialGrid
    values: np.ndarray
    tail: Optional[Tuple[float, float]] = None
    source: Optional[Callable[[np.ndarray], np.ndarray]] = None
    breakpoints: Tuple[float, ...] = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.nodes.shape:
            raise ValueError(
                f"values length {self.values.size} does not match grid size "
                f"{self.grid.size}"
            )
        if self.tail is not None:
            c, tau = self.tail
            if not (tau > 0.0):
                raise ValueError(f"tail rate must be positive, got tau={tau}")

    @classmethod
    def from_callable(
        cls,
        grid: RadialGrid,
        func: Callable[[np.ndarray], np.ndarray],
        tail: Optional[Tuple[float, float]] = None,
        breakpoints: Tuple[float, ...] = (),
    ) -> "RadialFunction":
        vals = np.asarray(func(grid.nodes), dtype=float)
        return cls(
            grid=grid, values=vals, tail=tail, source=func, breakpoints=breakpoints
        )

    def evaluate(self, r) -> np.ndarray:
        """Evaluate at arbitrary radii: barycentric interpolation inside
        [0, r_max], tail model beyond r_max (zero if no tail)."""
        scalar = np.isscalar(r)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros_like(r)
        inside = r <= self.grid.r_max
        if np.any(inside):
            disc = get_discretization(self.grid)
            out[inside] = disc.interpolate(self.values, r[inside])
        if np.any(~inside) and self.tail is not None:
            c, tau = self.tail
            out[~inside] = c * np.exp(-tau * r[~inside])
        return out[0] if scalar else out

    def __call__(self, r):
        return self.evaluate(r)


def tail_integral(n: int, r_max: float, c: float, tau: float) -> float:
    """Closed form of int_{r_max}^inf c e^(-tau r) r^(n-1) dr."""
    # upper incomplete gamma: Gamma(n, x) = Gamma(n) * gammaincc(n, x)
    return c * tau ** (-n) * math.gamma(n) * float(gammaincc(n, tau * r_max))


def integrate_radial(grid: RadialGrid, f: RadialFunction) -> float:
    """Weighted quadrature of f against r^(n-1) dr, plus the tail integral."""
    if f.grid is not grid and f.grid != grid:
        raise ValueError("radial function does not live on the given grid")
    total = float(np.dot(grid.weights, f.values))
    if f.tail is not None:
        c, tau = f.tail
        total += tail_integral(grid.dim, grid.r_max, c, tau)
    return total


# ---------------------------------------------------------------------------
# Spectral discretization
# ---------------------------------------------------------------------------

def _barycentric_weights(x: np.ndarray) -> np.ndarray:
    """Barycentric weights via log-accumulated products (overflow safe)."""
    m = x.size
    logw = np.zeros(m)
    sign = np.ones(m)
    for j in range(m):
        d = x[j] - x
        d = np.delete(d, j)
        logw[j] = -np.sum(np.log(np.abs(d)))
        sign[j] = np.prod(np.sign(d))
    logw -= np.max(logw)
    return sign * np.exp(logw)


def _diff_matrices(x: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """First/second barycentric differentiation matrices on nodes x."""
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    D1 = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(D1, 0.0)
    np.fill_diagonal(D1, -np.sum(D1, axis=1))
    D2 = 2.0 * D1 * (np.diag(D1)[:, None] - 1.0 / dx)
    np.fill_diagonal(D2, 0.0)
    np.fill_diagonal(D2, -np.sum(D2, axis=1))
    return D1, D2


class Discretization:
    """Polynomial collocation machinery attached to a grid.

    Two interpolation spaces share the grid nodes:

    * ``free``      -- Lagrange basis on the N grid nodes; used to evaluate
      and differentiate arbitrary sampled profiles.
    * ``dirichlet`` -- Lagrange basis on the N grid nodes plus r_max with a
      pinned zero value there; used by the differential operators so the
      decay condition at the truncation radius is built in.

    Presumes the global (gauss_legendre_mapped) node distribution; composite
    panel grids should not be differentiated with this machinery.
    """

    def __init__(self, grid: RadialGrid):
        self.grid = grid
        r = grid.nodes
        self._nodes = {
            "free": r,
            "dirichlet": np.concatenate((r, [grid.r_max])),
        }
        self._wb = {bc: _barycentric_weights(x) for bc, x in self._nodes.items()}
        self._dmats = {}
        self._moment_cache = {}

    def _diff(self, bc: str) -> Tuple[np.ndarray, np.ndarray]:
        if bc not in self._dmats:
            D1, D2 = _diff_matrices(self._nodes[bc], self._wb[bc])
            if bc == "dirichlet":
                # collocate on interior nodes, drop the pinned r_max column
                D1, D2 = D1[:-1, :-1], D2[:-1, :-1]
            self._dmats[bc] = (np.ascontiguousarray(D1), np.ascontiguousarray(D2))
        return self._dmats[bc]

    def d1(self, bc: str = "dirichlet") -> np.ndarray:
        return self._diff(bc)[0]

    def d2(self, bc: str = "dirichlet") -> np.ndarray:
        return self._diff(bc)[1]

    def basis_eval(self, targets: np.ndarray, bc: str = "free") -> np.ndarray:
        """Matrix E with E @ values = interpolant(targets)."""
        t = np.asarray(targets, dtype=float)
        x = self._nodes[bc]
        wb = self._wb[bc]
        d = t[:, None] - x[None, :]
        exact = d == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            c = wb[None, :] / d
        c[exact] = np.inf
        hit_rows = np.any(exact, axis=1)
        denom = np.sum(c, axis=1)
        E = np.empty_like(c)
        ok = ~hit_rows
        E[ok] = c[ok] / denom[ok, None]
        if np.any(hit_rows):
            E[hit_rows] = exact[hit_rows].astype(float)
        if bc == "dirichlet":
            E = E[:, :-1]
        return E

    def interpolate(self, values: np.ndarray, targets, bc: str = "free") -> np.ndarray:
        return self.basis_eval(np.atleast_1d(targets), bc) @ values

    # -- cumulative moment matrices --------------------------------------

    def moment_matrices(self, head_powers=(), tail_powers=()) -> None:
        """Precompute, in one shared sweep, matrices H_p and T_p with

            (H_p f)_i ~ int_0^{r_i}      rho^p f(rho) d rho
            (T_p f)_i ~ int_{r_i}^{rmax} rho^p f(rho) d rho

        where f is the free interpolant of the node values.  Results land in
        a cache keyed by ('head'|'tail', p); batching powers amortizes the
        expensive barycentric evaluations.
        """
        head_powers = [p for p in head_powers if ("head", p) not in self._moment_cache]
        tail_powers = [p for p in tail_powers if ("tail", p) not in self._moment_cache]
        if not head_powers and not tail_powers:
            return
        r = self.grid.nodes
        N = r.size
        R = self.grid.r_max
        m = max(64, min(N + 8, 240))
        xg, wg = np.polynomial.legendre.leggauss(m)
        acc = {("head", p): np.zeros((N, N)) for p in head_powers}
        acc.update({("tail", p): np.zeros((N, N)) for p in tail_powers})
        chunk = max(1, int(4.0e6 // (2 * m * N)) * 8)
        for lo in range(0, N, chunk):
            hi = min(N, lo + chunk)
            rb = r[lo:hi]
            B = rb.size
            if head_powers:
                th = 0.5 * rb[:, None] * (xg[None, :] + 1.0)
                qh = 0.5 * rb[:, None] * wg[None, :]
                Eh = self.basis_eval(th.ravel()).reshape(B, m, N)
                for p in head_powers:
                    acc[("head", p)][lo:hi] = np.einsum(
                        "bm,bmn->bn", qh * th**p, Eh, optimize=True
                    )
            if tail_powers:
                tt = rb[:, None] + 0.5 * (R - rb)[:, None] * (xg[None, :] + 1.0)
                qt = 0.5 * (R - rb)[:, None] * wg[None, :]
                Et = self.basis_eval(tt.ravel()).reshape(B, m, N)
                for p in tail_powers:
                    acc[("tail", p)][lo:hi] = np.einsum(
                        "bm,bmn->bn", qt * tt ** float(p), Et, optimize=True
                    )
        for (side, p), mat in acc.items():
            self._moment_cache[(side, p)] = mat

    def head_moment(self, p: int) -> np.ndarray:
        if ("head", p) not in self._moment_cache:
            self.moment_matrices([p], [])
        return self._moment_cache[("head", p)]

    def _basis_derivative_eval(self, targets: np.ndarray, bc: str) -> np.ndarray:
        """Matrix Ed with Ed @ values = interpolant'(targets)."""
        t = np.asarray(targets, dtype=float)
        x = self._nodes[bc]
        wb = self._wb[bc]
        d = t[:, None] - x[None, :]
        if np.any(d == 0.0):
            raise ValueError("derivative evaluation targets must avoid the nodes")
        c = wb[None, :] / d
        denom = np.sum(c, axis=1)
        L = c / denom[:, None]
        s1 = np.sum(L / d, axis=1)
        Ed = L * (s1[:, None] - 1.0 / d)
        if bc == "dirichlet":
            Ed = Ed[:, :-1]
        return Ed

    def stiffness(self) -> np.ndarray:
        """Galerkin stiffness S_ij = int l_i' l_j' r^(n-1) dr on the dirichlet
        basis: the exact weak form of the radial -Laplacian (the boundary
        terms vanish, r^(n-1) u' v -> 0 at 0 and v(r_max) = 0), so S is
        symmetric positive semidefinite by construction."""
        if not hasattr(self, "_stiffness"):
            n = self.grid.dim
            R = self.grid.r_max
            m = self.grid.size + 8
            xg, wg = np.polynomial.legendre.leggauss(m)
            t = 0.5 * R * (xg + 1.0)
            q = 0.5 * R * wg * t ** (n - 1)
            Ed = self._basis_derivative_eval(t, "dirichlet")
            S = Ed.T @ (q[:, None] * Ed)
            self._stiffness = 0.5 * (S + S.T)
        return self._stiffness

    def neg_laplacian(self) -> np.ndarray:
        """Radial -Laplacian, -d2/dr2 - ((n-1)/r) d/dr, as the W-self-adjoint
        matrix W^{-1} S of the weak form; decay at r_max is built in."""
        if not hasattr(self, "_neg_lap"):
            self._neg_lap = self.stiffness() / self.grid.weights[:, None]
        return self._neg_lap

    def neg_laplacian_colloc(self) -> np.ndarray:
        """Collocation rows of the radial -Laplacian (same basis and decay
        condition).  Not W-self-adjoint, but free of the weak form's
        cancellation at the near-origin nodes; used for pointwise defects."""
        if not hasattr(self, "_neg_lap_colloc"):
            r = self.grid.nodes
            n = self.grid.dim
            self._neg_lap_colloc = (
                -self.d2("dirichlet") - ((n - 1) / r)[:, None] * self.d1("dirichlet")
            )
        return self._neg_lap_colloc

    def tail_moment(self, p: int) -> np.ndarray:
        if ("tail", p) not in self._moment_cache:
            self.moment_matrices([], [p])
        return self._moment_cache[("tail", p)]


_DISC_CACHE: dict = {}


def get_discretization(grid: RadialGrid) -> Discretization:
    key = grid.cache_key()
    disc = _DISC_CACHE.get(key)
    if disc is None:
        disc = Discretization(grid)
        _DISC_CACHE[key] = disc
    return disc
