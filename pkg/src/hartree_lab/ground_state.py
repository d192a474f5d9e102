"""Ground states of  -Delta u + (1+mu) u = (I2 * u^2) u  for n = 3, 4, 5.

Two independent solvers:

* shooting -- integrates the equivalent local system in (u, W) with
  W = (1+mu) - I2*u^2, nested bisection: inner on W(0) for the decaying
  separatrix, outer on u(0) so that W -> 1+mu at infinity.  The far field
  is completed by a stabilized backward integration seeded with the known
  decay asymptotics, so node values stay accurate out to r_max.
* fixed_point -- self-consistent iteration on the shared collocation
  operator: each step takes the ground eigenfunction of
  -Delta + (1+mu) - I2*u^2 and pins its amplitude by the Rayleigh ratio,
  with damping and a positivity clamp.

The unperturbed equation is mass_shift mu = 0; mu = V(eps xi) gives the
rescaled-soliton equation used by the semiclassical module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.linalg import eigh

from .newton_potential import kernel_matrix, radial_newton_potential
from .radial_core import (
    RadialFunction,
    RadialGrid,
    get_discretization,
    integrate_radial,
    parse_grid_header,
    sphere_area,
)

METHOD_SHOOTING = "shooting"
METHOD_FIXED_POINT = "fixed_point"
DEFAULT_TOL = {METHOD_SHOOTING: 1e-7, METHOD_FIXED_POINT: 1e-10}


class ConvergenceError(RuntimeError):
    """Solver failed to reach the requested residual; carries the best one."""

    def __init__(self, message: str, best_residual: float):
        super().__init__(message)
        self.best_residual = best_residual


class PositivityError(RuntimeError):
    """Iterate lost positivity; grid or damping misconfiguration."""


@dataclass
class SolverConfig:
    method: str = METHOD_FIXED_POINT
    tol: Optional[float] = None
    max_iter: int = 400
    damping: float = 0.5

    def __post_init__(self):
        if self.method not in (METHOD_SHOOTING, METHOD_FIXED_POINT):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.tol is None:
            self.tol = DEFAULT_TOL[self.method]
        if not (self.tol > 0.0):
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")


def nu_from_mass(n: int, l2_mass: float) -> float:
    """Decay constant: nu^(n-2) = Gamma((n-2)/2) / (4 pi^(n/2)) * ||u||_L2^2."""
    val = math.gamma((n - 2) / 2.0) / (4.0 * math.pi ** (n / 2.0)) * l2_mass
    return val ** (1.0 / (n - 2))


@dataclass
class GroundState:
    """Converged positive radial profile with its derived diagnostics."""

    dim: int
    profile: RadialFunction
    potential: RadialFunction
    l2_mass: float
    energy: float
    nu: float
    residual: float
    method: str
    mass_shift: float = 0.0
    tol: float = math.inf

    def __post_init__(self):
        u = self.profile.values
        if np.min(u) <= 0.0:
            raise PositivityError("ground-state profile must be strictly positive")
        if np.any(np.diff(u) > 1e-10 * float(np.max(u))):
            raise ValueError("ground-state profile must be non-increasing")
        nu_def = nu_from_mass(self.dim, self.l2_mass)
        if abs(nu_def - self.nu) > 1e-8 * abs(nu_def):
            raise ValueError("nu field inconsistent with its defining formula")

    @property
    def grid(self) -> RadialGrid:
        return self.profile.grid


# ---------------------------------------------------------------------------
# residual and derived quantities
# ---------------------------------------------------------------------------

def profile_equation_residual(
    grid: RadialGrid, values: np.ndarray, mass_shift: float = 0.0
) -> float:
    """Relative weighted-L2 defect of -Delta u + (1+mu) u - (I2*u^2) u."""
    w = grid.weights
    norm = math.sqrt(float(np.dot(w, values**2)))
    if norm == 0.0:
        return 0.0
    disc = get_discretization(grid)
    v = kernel_matrix(grid, 0) @ values**2
    defect = disc.neg_laplacian_colloc() @ values + (1.0 + mass_shift - v) * values
    return math.sqrt(float(np.dot(w, defect**2))) / norm


def equation_residual(gs: GroundState) -> float:
    return profile_equation_residual(gs.grid, gs.profile.values, gs.mass_shift)


def profile_derivative(gs: GroundState) -> np.ndarray:
    """U' through the integrated equation,

        r^(n-1) U'(r) = int_0^r rho^(n-1) (1 + mu - v) U d rho,

    a plain cumulative quadrature: unlike repeated spectral differentiation
    it does not amplify rounding noise, so operator identities evaluated on
    it stay at the discretization level.
    """
    grid = gs.grid
    n = grid.dim
    disc = get_discretization(grid)
    rhs = (1.0 + gs.mass_shift - gs.potential.values) * gs.profile.values
    return (disc.head_moment(n - 1) @ rhs) / grid.nodes ** (n - 1)


def _fit_tail(r: np.ndarray, u: np.ndarray, window: Tuple[float, float]):
    """Exponential tail (c, tau) from a log-linear fit of u on the window."""
    mask = (r >= window[0]) & (r <= window[1]) & (u > 0.0)
    if np.count_nonzero(mask) < 4:
        return None
    coeff = np.polyfit(r[mask], np.log(u[mask]), 1)
    tau = -coeff[0]
    if tau <= 0.0:
        return None
    return (math.exp(coeff[1]), tau)


def _finalize(
    grid: RadialGrid,
    values: np.ndarray,
    mass_shift: float,
    method: str,
    tol: float,
) -> GroundState:
    n = grid.dim
    r = grid.nodes
    disc = get_discretization(grid)
    area = sphere_area(n)
    # window sits before the r_max boundary layer of the truncated problem
    tail = _fit_tail(r, values, (grid.r_max - 8.0, grid.r_max - 3.0))
    profile = RadialFunction(grid=grid, values=values, tail=tail)
    u2_tail = (tail[0] ** 2, 2.0 * tail[1]) if tail is not None else None
    u2 = RadialFunction(grid=grid, values=values**2, tail=u2_tail)
    pot = radial_newton_potential(grid, u2)
    mass = area * integrate_radial(grid, u2)
    du = (disc.head_moment(n - 1) @ ((1.0 + mass_shift - pot.values) * values)) / r ** (
        n - 1
    )
    kinetic = area * float(np.dot(grid.weights, du**2))
    quartic = area * float(np.dot(grid.weights, pot.values * values**2))
    energy = 0.5 * (kinetic + mass) - 0.25 * quartic
    residual = profile_equation_residual(grid, values, mass_shift)
    if residual > tol:
        raise ConvergenceError(
            f"{method} solver reached residual {residual:.3e} > tol {tol:.3e}",
            best_residual=residual,
        )
    return GroundState(
        dim=n,
        profile=profile,
        potential=pot,
        l2_mass=mass,
        energy=energy,
        nu=nu_from_mass(n, mass),
        residual=residual,
        method=method,
        mass_shift=mass_shift,
        tol=tol,
    )


# ---------------------------------------------------------------------------
# shooting solver
# ---------------------------------------------------------------------------

_R0 = 1e-6  # series start radius for the regular initial data


def _rhs(n: int):
    def rhs(r, y):
        u, up, w, wp = y
        return [up, w * u - (n - 1) / r * up, wp, u * u - (n - 1) / r * wp]

    return rhs


def _series_start(n: int, u0: float, w0: float):
    r0 = _R0
    u = u0 * (1.0 + w0 * r0**2 / (2.0 * n))
    up = u0 * w0 * r0 / n
    w = w0 + u0**2 * r0**2 / (2.0 * n)
    wp = u0**2 * r0 / n
    return r0, [u, up, w, wp]


def _classify(n: int, u0: float, w0: float, r_end: float, dense: bool = False):
    """Integrate from the series start; report which separatrix side w0 is on.

    'low'  -- u crossed zero (w0 below the separatrix),
    'high' -- u turned around or blew up (w0 above),
    'none' -- no event before r_end.
    """
    r0, y0 = _series_start(n, u0, w0)

    def ev_cross(r, y):
        return y[0]

    ev_cross.terminal = True
    ev_cross.direction = -1.0

    def ev_turn(r, y):
        return y[1]

    ev_turn.terminal = True
    ev_turn.direction = 1.0

    def ev_blow(r, y):
        return y[0] - 10.0 * u0

    ev_blow.terminal = True
    ev_blow.direction = 1.0

    sol = solve_ivp(
        _rhs(n),
        (r0, r_end),
        y0,
        method="DOP853",
        rtol=1e-12,
        atol=1e-14 * max(1.0, u0),
        events=(ev_cross, ev_turn, ev_blow),
        dense_output=dense,
    )
    if sol.t_events[0].size:
        return "low", sol
    if sol.t_events[1].size or sol.t_events[2].size:
        return "high", sol
    return "none", sol


def _bisect_separatrix(n: int, u0: float, c_guess: float, r_end: float):
    """Bisection on W(0) for the node-free decaying separatrix."""
    scale = max(abs(c_guess), 0.1 * u0)
    c_lo = c_hi = None
    c = c_guess
    for _ in range(80):
        side, _ = _classify(n, u0, c, r_end)
        if side == "none":
            return c
        if side == "low":
            c_lo = c
            if c_hi is not None:
                break
            c = c + max(scale, abs(c))
        else:
            c_hi = c
            if c_lo is not None:
                break
            c = c - max(scale, abs(c))
    if c_lo is None or c_hi is None:
        raise ConvergenceError("failed to bracket the shooting separatrix", math.inf)
    while c_hi - c_lo > 1e-15 * max(1.0, abs(c_lo)):
        c = 0.5 * (c_lo + c_hi)
        side, _ = _classify(n, u0, c, r_end)
        if side == "none":
            return c
        if side == "low":
            c_lo = c
        else:
            c_hi = c
    return 0.5 * (c_lo + c_hi)


def _solve_shooting(grid: RadialGrid, mass_shift: float):
    n = grid.dim
    freq = 1.0 + mass_shift
    r_end = grid.r_max + 6.0
    u0 = 2.0 * freq  # scaling-covariant first guess
    kappa = -0.85  # c*/u(0) seed, refined after the first inner solve
    for _ in range(12):
        c_star = _bisect_separatrix(n, u0, kappa * u0, r_end)
        kappa = c_star / u0
        _, sol = _classify(n, u0, c_star, r_end, dense=True)
        # veer radius: where the shot solution leaves the separatrix
        rr = np.linspace(_R0, sol.t[-1], 4000)
        yy = sol.sol(rr)
        bad = np.where((yy[0] <= 0.0) | (yy[1] >= 0.0))[0]
        r_veer = rr[bad[0]] if bad.size else sol.t[-1]
        r_j = min(r_veer - 5.0, grid.r_max - 6.0)
        if r_j < 5.0:
            raise ConvergenceError(
                f"shooting trajectory unusable (veer radius {r_veer:.2f})", math.inf
            )
        m_rad = quad(
            lambda s: s ** (n - 1) * float(sol.sol(s)[0]) ** 2,
            _R0,
            r_j,
            limit=200,
            epsabs=0.0,
            epsrel=1e-12,
        )[0]
        w_j, wp_j = float(sol.sol(r_j)[2]), float(sol.sol(r_j)[3])
        w_inf = w_j + wp_j * r_j / (n - 2)
        if abs(w_inf / freq - 1.0) < 1e-12:
            break
        u0 = u0 * (freq / w_inf)
    fwd = sol.sol

    # backward completion from r_max with u(r_max) = 0: both solvers then
    # solve the same truncated boundary-value problem, and the spliced
    # profile stays consistent with the operator's decay condition
    def v_model(r):
        return m_rad / ((n - 2) * r ** (n - 2))

    r_b = grid.r_max
    u_fj = float(fwd(r_j)[0])
    slope = -u_fj * math.exp(-(r_b - r_j) * math.sqrt(freq)) * math.sqrt(freq)
    y_b = [0.0, slope, freq - v_model(r_b), m_rad / r_b ** (n - 1)]
    back = solve_ivp(
        _rhs(n),
        (r_b, max(r_j - 3.0, 1.0)),
        y_b,
        method="DOP853",
        rtol=1e-12,
        atol=1e-60,
        first_step=1e-3,
        dense_output=True,
    ).sol

    # linear amplitude match on a window before the junction
    rw = np.linspace(r_j - 2.5, r_j - 0.5, 40)
    uf = np.array([fwd(t)[0] for t in rw])
    ub = np.array([back(t)[0] for t in rw])
    gamma = float(np.dot(uf, ub) / np.dot(ub, ub))

    r = grid.nodes
    values = np.empty_like(r)
    cut = r <= r_j - 1.5
    values[cut] = np.array([fwd(t)[0] for t in r[cut]])
    values[~cut] = gamma * np.array([back(t)[0] for t in r[~cut]])
    return values


# ---------------------------------------------------------------------------
# fixed-point solver
# ---------------------------------------------------------------------------

def _solve_fixed_point(grid: RadialGrid, mass_shift: float, cfg: SolverConfig):
    n = grid.dim
    freq = 1.0 + mass_shift
    r = grid.nodes
    w = grid.weights
    sw = np.sqrt(w)
    disc = get_discretization(grid)
    K = disc.neg_laplacian_colloc()
    B_K = disc.stiffness() / np.outer(sw, sw)
    pot0 = kernel_matrix(grid, 0)

    u = np.exp(-0.5 * r**2) * freq
    u /= math.sqrt(float(np.dot(w, u**2)))
    best = math.inf
    newton_from = 1e-3  # residual below which Newton steps take over

    def residual_of(vec):
        v = pot0 @ vec**2
        defect = K @ vec + (freq - v) * vec
        return (
            math.sqrt(float(np.dot(w, defect**2)) / float(np.dot(w, vec**2))),
            v,
            defect,
        )

    for _ in range(cfg.max_iter):
        res, v, defect = residual_of(u)
        best = min(best, res)
        if res <= cfg.tol:
            if np.min(u) <= 0.0:
                raise PositivityError("fixed-point iterate lost positivity")
            return u
        if res < newton_from:
            # Newton polish: the Jacobian is the radial-sector linearized
            # operator, nondegenerate at the ground state
            J = (
                K
                + np.diag(freq - v)
                - 2.0 * (u[:, None] * pot0) * u[None, :]
            )
            step = np.linalg.solve(J, defect)
            # noise-level tail nodes may dip below zero; floor them rather
            # than rejecting the step
            trial = np.maximum(u - step, 1e-300)
            if residual_of(trial)[0] < res:
                u = trial
                continue
        # damped self-consistent step through the ground eigenfunction
        B = B_K + np.diag(freq - v)
        _, vec = eigh(B, subset_by_index=(0, 0))
        phi = vec[:, 0] / sw
        if float(np.dot(w, phi)) < 0.0:
            phi = -phi
        phi = np.maximum(phi, 0.0)
        nrm = math.sqrt(float(np.dot(w, phi**2)))
        if nrm == 0.0:
            raise PositivityError("fixed-point iterate lost positivity")
        phi /= nrm
        # amplitude from the Rayleigh ratio <phi,(K+freq)phi> / <phi,(I2*phi^2)phi>
        num = float(np.dot(w * phi, K @ phi)) + freq * 1.0
        den = float(np.dot(w * phi, (pot0 @ phi**2) * phi))
        c = math.sqrt(max(num / den, 0.0))
        u = (1.0 - cfg.damping) * u + cfg.damping * c * phi
    raise ConvergenceError(
        f"fixed-point solver did not reach tol {cfg.tol:.3e} after "
        f"{cfg.max_iter} iterations (best residual {best:.3e})",
        best_residual=best,
    )


def solve_ground_state(
    grid: RadialGrid, cfg: Optional[SolverConfig] = None, mass_shift: float = 0.0
) -> GroundState:
    """Solve for the positive radial ground state on the grid."""
    if cfg is None:
        cfg = SolverConfig()
    if 1.0 + mass_shift <= 0.0:
        raise ValueError("mass shift must satisfy 1 + mu > 0")
    if cfg.method == METHOD_SHOOTING:
        values = _solve_shooting(grid, mass_shift)
    else:
        values = _solve_fixed_point(grid, mass_shift, cfg)
    return _finalize(grid, values, mass_shift, cfg.method, cfg.tol)


# ---------------------------------------------------------------------------
# decay diagnostics and rescaling
# ---------------------------------------------------------------------------

@dataclass
class DecayFit:
    """Fit of the profile tail against the decay asymptotics."""

    rate: float
    nu_check: float
    fit_defect: float
    n_points: int


def decay_phase(n: int, nu: float, r: np.ndarray) -> np.ndarray:
    """I(r) = int_nu^r sqrt(1 - (nu/s)^(n-2)) ds for r >= nu."""
    out = np.empty_like(r)
    for i, ri in enumerate(r):
        out[i] = quad(
            lambda s: math.sqrt(max(0.0, 1.0 - (nu / s) ** (n - 2))),
            nu,
            ri,
            limit=200,
        )[0]
    return out


def fit_decay(gs: GroundState, window: Tuple[float, float]) -> DecayFit:
    """Regress log U + ((n-1)/2) log r on the decay phase over the window."""
    r = gs.grid.nodes
    u = gs.profile.values
    mask = (r >= window[0]) & (r <= window[1]) & (u > 1e-12)
    if np.count_nonzero(mask) < 10:
        raise ValueError("decay-fit window contains fewer than 10 usable nodes")
    if window[0] <= gs.nu:
        raise ValueError("decay-fit window must start beyond nu")
    rw = r[mask]
    y = np.log(u[mask]) + 0.5 * (gs.dim - 1) * np.log(rw)
    x = decay_phase(gs.dim, gs.nu, rw)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    defect = float(np.sqrt(np.mean(resid**2)) / (np.max(y) - np.min(y)))
    return DecayFit(
        rate=float(slope),
        nu_check=nu_from_mass(gs.dim, gs.l2_mass),
        fit_defect=defect,
        n_points=int(np.count_nonzero(mask)),
    )


def fit_exponential_rate(
    gs: GroundState, values: np.ndarray, window: Tuple[float, float]
) -> float:
    """Effective exponential rate of |values| on the window: minus the
    log-linear slope (single-exponential model, no algebraic prefactor)."""
    r = gs.grid.nodes
    a = np.abs(values)
    mask = (r >= window[0]) & (r <= window[1]) & (a > 1e-300)
    if np.count_nonzero(mask) < 10:
        raise ValueError("rate-fit window contains fewer than 10 usable nodes")
    slope = np.polyfit(r[mask], np.log(a[mask]), 1)[0]
    return -float(slope)


def rescale_state(gs: GroundState, mu: float) -> RadialFunction:
    """(1+mu) U(sqrt(1+mu) r) resampled on the grid, tail extended."""
    if 1.0 + mu <= 0.0:
        raise ValueError("rescale requires 1 + mu > 0")
    alpha = 1.0 + mu
    beta = math.sqrt(alpha)
    vals = alpha * gs.profile.evaluate(beta * gs.grid.nodes)
    tail = None
    if gs.profile.tail is not None:
        c, tau = gs.profile.tail
        tail = (alpha * c, beta * tau)
    return RadialFunction(grid=gs.grid, values=vals, tail=tail)


def interaction_integral(gs: GroundState) -> float:
    """int (I2*U^2) U^2 dx by pairing the profile against its potential."""
    area = sphere_area(gs.dim)
    return area * float(
        np.dot(gs.grid.weights, gs.potential.values * gs.profile.values**2)
    )


def interaction_integral_double(gs: GroundState, m_outer: int = 320) -> float:
    """Same integral via an independent symmetric double quadrature with the
    k = 0 sector kernel on the interpolated profile."""
    n = gs.dim
    area = sphere_area(n)
    R = gs.grid.r_max
    xg, wg = np.polynomial.legendre.leggauss(m_outer)
    ro = 0.5 * R * (xg + 1.0)
    wo = 0.5 * R * wg
    u2o = gs.profile.evaluate(ro) ** 2
    inner = np.empty_like(ro)
    xi, wi = np.polynomial.legendre.leggauss(200)
    for i, r in enumerate(ro):
        s1 = 0.5 * r * (xi + 1.0)
        q1 = 0.5 * r * wi
        s2 = r + 0.5 * (R - r) * (xi + 1.0)
        q2 = 0.5 * (R - r) * wi
        f1 = gs.profile.evaluate(s1) ** 2
        f2 = gs.profile.evaluate(s2) ** 2
        inner[i] = (
            np.dot(q1, s1 ** (n - 1) * f1) / r ** (n - 2) + np.dot(q2, s2 * f2)
        ) / (n - 2)
    return area * float(np.dot(wo, ro ** (n - 1) * u2o * inner))


# ---------------------------------------------------------------------------
# cache file format
# ---------------------------------------------------------------------------

def format_cache(gs: GroundState) -> str:
    """Ground-state cache: grid header plus solver fields, then r/value rows
    at 17 significant digits (lossless for binary64)."""
    head = (
        f"{gs.grid.header()} method={gs.method} tol={gs.tol:.17g} "
        f"residual={gs.residual:.17g} mass={gs.l2_mass:.17g} "
        f"nu={gs.nu:.17g} energy={gs.energy:.17g}"
    )
    rows = [
        f"{r:.17g} {v:.17g}" for r, v in zip(gs.grid.nodes, gs.profile.values)
    ]
    return "\n".join([head] + rows) + "\n"


def parse_cache(text: str) -> dict:
    """Parse a ground-state cache file; returns header fields and arrays."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty ground-state cache")
    header = parse_grid_header(lines[0])
    rows = np.array([[float(tok) for tok in ln.split()] for ln in lines[1:]])
    if rows.shape[0] != header["N"] or rows.shape[1] != 2:
        raise ValueError("ground-state cache row count does not match header")
    header["r"] = rows[:, 0]
    header["values"] = rows[:, 1]
    for key in ("residual", "mass", "nu", "energy", "tol"):
        if key in header:
            header[key] = float(header[key])
    return header


def groundstate_from_cache(grid: RadialGrid, text: str) -> GroundState:
    """Rebuild a GroundState from cache text on a matching grid."""
    data = parse_cache(text)
    if (data["n"], data["r_max"], data["N"], data["scheme"]) != grid.cache_key():
        raise ValueError("cache header does not match the grid")
    if not np.allclose(data["r"], grid.nodes, rtol=0.0, atol=1e-15 * grid.r_max):
        raise ValueError("cache nodes do not match the grid")
    return _finalize(
        grid, data["values"], 0.0, data.get("method", METHOD_FIXED_POINT), math.inf
    )
