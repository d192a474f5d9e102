"""Newton potential: exact radial reduction and multipole sector kernels.

The radial reduction of I2 * f for radial f is

    (I2*f)(r) = (1/(n-2)) [ r^{2-n} int_0^r rho^{n-1} f + int_r^inf rho f ],

equivalently the k = 0 instance of the degree-k sector kernel

    G_k(r, rho) = (1/(2k+n-2)) r_<^k / r_>^{k+n-2},

which maps the radial coefficient of a degree-k spherical harmonic sector
to the coefficient of its potential.  A tensor-quadrature nD oracle (n = 3)
provides the independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.special import eval_gegenbauer

from .radial_core import (
    RadialFunction,
    RadialGrid,
    get_discretization,
    sphere_area,
)


def kernel_K(n: int, r: float, rho: float) -> float:
    """Inner-region kernel K(r, rho) = rho/(n-2) (1 - rho^{n-2}/r^{n-2}), rho <= r."""
    if r <= 0.0 or rho <= 0.0:
        raise ValueError("kernel_K requires positive radii")
    if rho > r:
        raise ValueError(f"kernel_K requires rho <= r, got rho={rho} > r={r}")
    return rho / (n - 2) * (1.0 - (rho / r) ** (n - 2))


def sector_kernel_value(n: int, k: int, r, rho):
    """G_k(r, rho) = (1/(2k+n-2)) r_<^k / r_>^{k+n-2}."""
    r = np.asarray(r, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(r <= 0.0) or np.any(rho <= 0.0):
        raise ValueError("sector kernel requires positive radii")
    if k < 0:
        raise ValueError("sector degree k must be >= 0")
    rlt = np.minimum(r, rho)
    rgt = np.maximum(r, rho)
    val = rlt**k / rgt ** (k + n - 2) / (2 * k + n - 2)
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class SectorKernel:
    """Degree-k multipole kernel of the Newton potential in R^n."""

    dim: int
    degree: int

    def __call__(self, r, rho):
        return sector_kernel_value(self.dim, self.degree, r, rho)


def kernel_matrix(grid: RadialGrid, k: int) -> np.ndarray:
    """Dense matrix of f -> int_0^rmax G_k(r_i, rho) f(rho) rho^{n-1} d rho.

    The integral splits at rho = r_i (the kernel is C0 there); each side
    reduces to a cumulative moment of the interpolant, which the
    discretization integrates side-by-side with a smooth sub-rule.
    """
    if k < 0:
        raise ValueError("sector degree k must be >= 0")
    n = grid.dim
    disc = get_discretization(grid)
    r = grid.nodes
    head = disc.head_moment(k + n - 1)
    tail = disc.tail_moment(1 - k)
    return (
        r[:, None] ** (-(k + n - 2)) * head + r[:, None] ** k * tail
    ) / (2 * k + n - 2)


def prefetch_kernel_matrices(grid: RadialGrid, k_values: Iterable[int]) -> None:
    """Batch the moment sweeps behind kernel_matrix for several degrees."""
    n = grid.dim
    disc = get_discretization(grid)
    ks = sorted(set(int(k) for k in k_values))
    disc.moment_matrices(
        head_powers=[k + n - 1 for k in ks], tail_powers=[1 - k for k in ks]
    )


def _tail_constant(n: int, r_max: float, tail: Tuple[float, float]) -> float:
    """Contribution of the exponential tail of f to (I2*f)(r) for r <= r_max."""
    c, tau = tail
    # (1/(n-2)) int_{rmax}^inf rho c e^{-tau rho} d rho
    return c * (1.0 + tau * r_max) * math.exp(-tau * r_max) / ((n - 2) * tau**2)


def radial_newton_potential(grid: RadialGrid, f: RadialFunction) -> RadialFunction:
    """I2 * f for radial f, sampled on the grid.

    Sampled inputs go through the spectral kernel matrix; inputs carrying
    their source callable are integrated adaptively instead, which keeps
    discontinuous densities (e.g. ball indicators) exact.
    """
    if f.grid is not grid and f.grid != grid:
        raise ValueError("radial function does not live on the given grid")
    if not np.all(np.isfinite(f.values)):
        raise ValueError("radial_newton_potential requires finite inputs")
    if f.source is not None:
        vals = radial_potential_from_callable(
            grid.dim,
            f.source,
            grid.nodes,
            breakpoints=f.breakpoints,
            r_cut=grid.r_max,
            tail=f.tail,
        )
        return RadialFunction(grid=grid, values=vals)
    vals = kernel_matrix(grid, 0) @ f.values
    if f.tail is not None:
        vals = vals + _tail_constant(grid.dim, grid.r_max, f.tail)
    return RadialFunction(grid=grid, values=vals)


def radial_potential_from_callable(
    n: int,
    f: Callable[[np.ndarray], np.ndarray],
    points,
    breakpoints: Sequence[float] = (),
    r_cut: float = 50.0,
    tail: Optional[Tuple[float, float]] = None,
) -> np.ndarray:
    """(I2*f)(r) at arbitrary radii by adaptive quadrature.

    breakpoints mark discontinuities of f; r_cut truncates the outer
    integral (tail, if given, adds the closed-form remainder).
    """
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    out = np.empty_like(pts)
    bps = sorted(float(b) for b in breakpoints)

    def inner(a: float, b: float, weight_pow: int) -> float:
        if b <= a:
            return 0.0
        cuts = [a] + [c for c in bps if a < c < b] + [b]
        total = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            total += quad(
                lambda s: s**weight_pow * float(f(np.asarray([s]))[0]),
                lo,
                hi,
                limit=200,
                epsabs=1e-13,
                epsrel=1e-12,
            )[0]
        return total

    for i, r in enumerate(pts):
        if r < 0:
            raise ValueError("radii must be nonnegative")
        near = inner(0.0, min(r, r_cut), n - 1) * (r ** (2 - n) if r > 0 else 0.0)
        far = inner(min(r, r_cut), r_cut, 1)
        out[i] = (near + far) / (n - 2)
    if tail is not None:
        out = out + _tail_constant(n, r_cut, tail)
    return out


def potential_radial_derivative(grid: RadialGrid, u2: RadialFunction) -> RadialFunction:
    """(I2 * u2)'(r) = -r^{1-n} int_0^r rho^{n-1} u2(rho) d rho for u2 >= 0."""
    if u2.grid is not grid and u2.grid != grid:
        raise ValueError("radial function does not live on the given grid")
    if np.min(u2.values) < -1e-12 * max(1.0, float(np.max(np.abs(u2.values)))):
        raise ValueError("potential_radial_derivative expects a nonnegative density")
    n = grid.dim
    if u2.source is not None:
        vals = potential_derivative_from_callable(
            n, u2.source, grid.nodes, breakpoints=u2.breakpoints
        )
        return RadialFunction(grid=grid, values=vals)
    disc = get_discretization(grid)
    cum = disc.head_moment(n - 1) @ u2.values
    vals = -cum / grid.nodes ** (n - 1)
    return RadialFunction(grid=grid, values=vals)


def potential_derivative_from_callable(
    n: int,
    f: Callable[[np.ndarray], np.ndarray],
    points,
    breakpoints: Sequence[float] = (),
) -> np.ndarray:
    """(I2*f)'(r) at arbitrary radii by adaptive quadrature of the
    cumulative density."""
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    bps = sorted(float(b) for b in breakpoints)
    out = np.empty_like(pts)
    for i, r in enumerate(pts):
        cuts = [0.0] + [c for c in bps if 0.0 < c < r] + [r]
        total = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            total += quad(
                lambda s: s ** (n - 1) * float(f(np.asarray([s]))[0]),
                lo,
                hi,
                limit=200,
                epsabs=1e-13,
                epsrel=1e-12,
            )[0]
        out[i] = -total / r ** (n - 1)
    return out


def multipole_potential(
    grid: RadialGrid,
    sector_coeffs: Sequence[Tuple[int, int, RadialFunction]],
) -> List[Tuple[int, int, RadialFunction]]:
    """Apply the degree-k sector kernel to each (k, m, f_km) coefficient.

    The full potential of sum f_km Y_km is sum g_km Y_km with the returned
    g_km; the kernel depends on k only, so m is carried through untouched.
    """
    prefetch_kernel_matrices(grid, [k for k, _, _ in sector_coeffs])
    out = []
    for k, m, f in sector_coeffs:
        if f.grid is not grid and f.grid != grid:
            raise ValueError("sector coefficient does not live on the given grid")
        g = kernel_matrix(grid, k) @ f.values
        out.append((k, m, RadialFunction(grid=grid, values=g)))
    return out


# ---------------------------------------------------------------------------
# Real spherical harmonics (n = 3) and angular quadrature
# ---------------------------------------------------------------------------

def real_sph_harm(k: int, m: int, theta, phi):
    """Real orthonormal spherical harmonic Y_km on S^2.

    theta is the polar angle, phi the azimuth; normalization is
    int_{S^2} Y_km^2 = 1.
    """
    from scipy.special import sph_harm_y

    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if m == 0:
        return np.real(sph_harm_y(k, 0, theta, phi))
    y = sph_harm_y(k, abs(m), theta, phi)
    if m > 0:
        return math.sqrt(2.0) * (-1.0) ** m * np.real(y)
    return math.sqrt(2.0) * (-1.0) ** m * np.imag(y)


def sphere_rule(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Product quadrature on S^2 exact for spherical polynomials of the
    given degree; returns unit vectors (M, 3) and weights summing to 4 pi."""
    n_t = degree // 2 + 1
    n_p = degree + 1
    t, wt = np.polynomial.legendre.leggauss(n_t)
    phi = 2.0 * math.pi * np.arange(n_p) / n_p
    wp = 2.0 * math.pi / n_p
    st = np.sqrt(1.0 - t**2)
    dirs = np.stack(
        [
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.outer(t, np.ones(n_p)).ravel(),
        ],
        axis=1,
    )
    w = np.outer(wt, np.full(n_p, wp)).ravel()
    return dirs, w


def project_sectors(
    func: Callable[[np.ndarray], np.ndarray],
    grid: RadialGrid,
    k_max: int,
    degree: Optional[int] = None,
) -> dict:
    """Spherical-harmonic coefficients f_km(r_i) of a 3D density.

    func takes an (M, 3) array of points and returns values (M,).
    """
    if grid.dim != 3:
        raise ValueError("sector projection is implemented for n = 3")
    deg = degree if degree is not None else 2 * k_max + 6
    dirs, w = sphere_rule(deg)
    theta = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    ybasis = {
        (k, m): real_sph_harm(k, m, theta, phi)
        for k in range(k_max + 1)
        for m in range(-k, k + 1)
    }
    coeffs = {key: np.empty(grid.size) for key in ybasis}
    for i, r in enumerate(grid.nodes):
        vals = func(r * dirs)
        for key, y in ybasis.items():
            coeffs[key][i] = float(np.dot(w, vals * y))
    return coeffs


def evaluate_expansion(
    sectors: Sequence[Tuple[int, int, RadialFunction]],
    point: np.ndarray,
) -> float:
    """Evaluate sum g_km(|x|) Y_km(x/|x|) at a 3D point."""
    x = np.asarray(point, dtype=float)
    r = float(np.linalg.norm(x))
    theta = math.acos(max(-1.0, min(1.0, x[2] / r)))
    phi = math.atan2(x[1], x[0])
    total = 0.0
    for k, m, g in sectors:
        total += float(g.evaluate(r)) * float(real_sph_harm(k, m, theta, phi))
    return total


def multipole_completeness_experiment(
    k_max: int = 8,
    n_radial: int = 160,
    source_center=(0.4, 0.15, -0.1),
    source_width: float = 0.45,
    eval_radius: float = 4.5,
    oracle_shape: int = 56,
):
    """Truncated multipole expansion of a smooth non-radial density vs the
    direct 3D oracle.

    The density is an off-center Gaussian (all sectors populated); the
    evaluation circle sits at twice its effective support radius so the
    sector series converges geometrically.  Returns a list of dicts with
    per-point absolute/relative errors for each truncation degree.
    """
    from .radial_core import build_grid

    a = np.asarray(source_center, dtype=float)
    sig = float(source_width)

    def density(pts):
        pts = np.atleast_2d(pts)
        return np.exp(-np.sum((pts - a) ** 2, axis=1) / (2.0 * sig**2))

    grid = build_grid(3, 6.0, n_radial)
    coeffs = project_sectors(density, grid, k_max)
    transformed = multipole_potential(
        grid,
        [
            (k, m, RadialFunction(grid=grid, values=vals))
            for (k, m), vals in coeffs.items()
        ],
    )
    box = [(-5.0, 5.0)] * 3  # covers source and evaluation circle
    oracle_grid = sample_density(density, box, (oracle_shape,) * 3, rule="gauss")
    dirs = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [-0.577350269189626, 0.577350269189626, 0.577350269189626],
            [0.707106781186548, -0.707106781186548, 0.0],
            [-0.6, -0.64, 0.48],
        ]
    )
    points = eval_radius * dirs / np.linalg.norm(dirs, axis=1)[:, None]
    rows = []
    for point in points:
        oracle = direct_newton_potential_nd(3, oracle_grid, point)
        row = {"point": point, "oracle": oracle, "errors": {}}
        for kmax in range(k_max + 1):
            value = evaluate_expansion(
                [(k, m, g) for k, m, g in transformed if k <= kmax], point
            )
            row["errors"][kmax] = abs(value - oracle)
        rows.append(row)
    return rows


def kernel_addition_series(n: int, k_max: int, r: float, rho: float, cos_gamma: float) -> float:
    """Partial sum of the multipole expansion of |x-y|^{2-n} via zonal
    (Gegenbauer) harmonics; converges geometrically in (r_</r_>)."""
    lam = 0.5 * (n - 2)
    area = sphere_area(n)
    total = 0.0
    for k in range(k_max + 1):
        zonal = (2 * k + n - 2) / ((n - 2) * area) * eval_gegenbauer(k, lam, cos_gamma)
        total += (
            (n - 2) * area * sector_kernel_value(n, k, r, rho) * zonal
        )
    return total


# ---------------------------------------------------------------------------
# Direct nD oracle (n = 3)
# ---------------------------------------------------------------------------

@dataclass
class GriddedDensity:
    """Tensor-product samples of a density on a 3D box."""

    axes: Tuple[np.ndarray, np.ndarray, np.ndarray]
    axis_weights: Tuple[np.ndarray, np.ndarray, np.ndarray]
    values: np.ndarray
    box: Tuple[Tuple[float, float], ...]
    rule: str

    @property
    def shape(self):
        return self.values.shape


def sample_density(
    func: Callable[[np.ndarray], np.ndarray],
    box: Sequence[Tuple[float, float]],
    shape: Sequence[int],
    rule: str = "midpoint",
) -> GriddedDensity:
    """Sample a 3D density for the oracle; rule is 'midpoint' (uniform cells,
    supports the singular-cell correction) or 'gauss' (tensor Gauss-Legendre,
    for smooth densities evaluated away from the support)."""
    if len(box) != 3 or len(shape) != 3:
        raise ValueError("box and shape must be 3-dimensional")
    if max(shape) > 64:
        raise ValueError("oracle grid is capped at 64 cells per axis")
    axes, weights = [], []
    for (lo, hi), m in zip(box, shape):
        if rule == "midpoint":
            h = (hi - lo) / m
            axes.append(lo + h * (np.arange(m) + 0.5))
            weights.append(np.full(m, h))
        elif rule == "gauss":
            x, w = np.polynomial.legendre.leggauss(m)
            axes.append(0.5 * (hi - lo) * (x + 1.0) + lo)
            weights.append(0.5 * (hi - lo) * w)
        else:
            raise ValueError(f"unknown oracle rule {rule!r}")
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    vals = np.asarray(func(pts), dtype=float).reshape(X.shape)
    return GriddedDensity(
        axes=tuple(axes),
        axis_weights=tuple(weights),
        values=vals,
        box=tuple((float(lo), float(hi)) for lo, hi in box),
        rule=rule,
    )


def direct_newton_potential_nd(n: int, density: GriddedDensity, point) -> float:
    """Brute-force (I2 * f)(x) by tensor quadrature.

    Midpoint densities replace the cell containing x by the analytic
    equal-volume-ball integral of the 1/|x-y| singularity.
    """
    if n != 3:
        raise ValueError("direct oracle supports n = 3 only")
    x = np.asarray(point, dtype=float)
    for c, (lo, hi) in zip(x, density.box):
        if c < lo or c > hi:
            raise ValueError(f"evaluation point {x} outside oracle box {density.box}")
    ax, ay, az = density.axes
    wx, wy, wz = density.axis_weights
    DX2 = (ax - x[0])[:, None, None] ** 2
    DY2 = (ay - x[1])[None, :, None] ** 2
    DZ2 = (az - x[2])[None, None, :] ** 2
    dist = np.sqrt(DX2 + DY2 + DZ2)
    W = wx[:, None, None] * wy[None, :, None] * wz[None, None, :]
    if density.rule == "midpoint":
        # singular cell: int_{B_Req} |z|^{-1} dz = 2 pi Req^2, Req^3 = 3 Vcell/(4 pi)
        i = int(np.argmin(np.abs(ax - x[0])))
        j = int(np.argmin(np.abs(ay - x[1])))
        k = int(np.argmin(np.abs(az - x[2])))
        cell = np.array([ax[i], ay[j], az[k]])
        hx, hy, hz = wx[i], wy[j], wz[k]
        if np.all(np.abs(x - cell) <= 0.5 * np.array([hx, hy, hz])):
            vol = hx * hy * hz
            req = (3.0 * vol / (4.0 * math.pi)) ** (1.0 / 3.0)
            with np.errstate(divide="ignore"):
                integrand = density.values / dist
            integrand[i, j, k] = 0.0
            total = float(np.sum(integrand * W))
            total += float(density.values[i, j, k]) * 2.0 * math.pi * req**2
            return total / ((n - 2) * sphere_area(n))
    if np.any(dist == 0.0):
        raise ValueError("evaluation point coincides with a quadrature node")
    total = float(np.sum(density.values / dist * W))
    return total / ((n - 2) * sphere_area(n))
