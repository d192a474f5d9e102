"""Ground-state solvers, residuals, decay diagnostics, rescaling, cache."""

import math

import numpy as np
import pytest

from hartree_lab import ground_state as gstate
from hartree_lab import radial_core as rc


def _wnorm(grid, vec):
    return math.sqrt(float(np.dot(grid.weights, vec**2)))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        gstate.SolverConfig(method="relax")
    with pytest.raises(ValueError):
        gstate.SolverConfig(tol=-1.0)
    with pytest.raises(ValueError):
        gstate.SolverConfig(max_iter=0)
    with pytest.raises(ValueError):
        gstate.SolverConfig(damping=1.5)
    cfg = gstate.SolverConfig()
    assert cfg.tol == 1e-10  # fixed-point default


def test_residual_below_tolerance(gs3, gs3_shoot):
    assert gs3.residual <= 1e-10
    assert gs3_shoot.residual <= 1e-7
    assert gstate.equation_residual(gs3) == pytest.approx(gs3.residual, rel=1e-10)


def test_cross_method_agreement(gs3, gs3_shoot):
    # unique positive ground state: the two independent solvers must agree
    g = gs3.grid
    diff = gs3.profile.values - gs3_shoot.profile.values
    rel = _wnorm(g, diff) / _wnorm(g, gs3.profile.values)
    assert rel < 10.0 * 1e-7
    assert rel < 1e-6


def test_positivity_and_monotonicity(gs3):
    u = gs3.profile.values
    assert np.all(u > 0.0)
    assert np.all(np.diff(u) <= 1e-10 * u.max())


def test_shifted_equation_matches_rescaled_base():
    # alpha U(beta x) solves the mass-shifted equation
    mu = 0.3
    g = rc.build_grid(3, 30.0, 256)
    base = gstate.solve_ground_state(g, gstate.SolverConfig(tol=1e-10))
    shifted = gstate.solve_ground_state(
        g, gstate.SolverConfig(tol=1e-10), mass_shift=mu
    )
    z = gstate.rescale_state(base, mu)
    rel = _wnorm(g, shifted.profile.values - z.values) / _wnorm(
        g, shifted.profile.values
    )
    assert rel < 1e-6


def test_perturbed_profile_raises_residual(gs3):
    g = gs3.grid
    base = gstate.profile_equation_residual(g, gs3.profile.values)
    pert = gstate.profile_equation_residual(g, 1.01 * gs3.profile.values)
    assert pert > 10.0 * base


def test_zero_profile_residual_and_rejection(gs3):
    g = gs3.grid
    assert gstate.profile_equation_residual(g, np.zeros(g.size)) == 0.0
    with pytest.raises(gstate.PositivityError):
        gstate.GroundState(
            dim=3,
            profile=rc.RadialFunction(g, np.zeros(g.size)),
            potential=gs3.potential,
            l2_mass=gs3.l2_mass,
            energy=gs3.energy,
            nu=gs3.nu,
            residual=0.0,
            method="fixed_point",
        )


def test_monotonicity_validation(gs3):
    vals = gs3.profile.values.copy()
    vals[200] = vals[198]  # local increase
    with pytest.raises(ValueError):
        gstate.GroundState(
            dim=3,
            profile=rc.RadialFunction(gs3.grid, vals),
            potential=gs3.potential,
            l2_mass=gs3.l2_mass,
            energy=gs3.energy,
            nu=gs3.nu,
            residual=gs3.residual,
            method="fixed_point",
        )


def test_nu_definition(ground_states):
    for n, (gs, _) in ground_states.items():
        direct = (
            math.gamma((n - 2) / 2.0) / (4.0 * math.pi ** (n / 2.0)) * gs.l2_mass
        ) ** (1.0 / (n - 2))
        assert gs.nu == pytest.approx(direct, rel=1e-12)


def test_fit_decay(gs3):
    fit = gstate.fit_decay(gs3, (15.0, 27.0))
    # against the decay phase the asymptotic slope is -1
    assert fit.rate == pytest.approx(-1.0, abs=0.05)
    assert fit.nu_check == pytest.approx(gs3.nu, rel=1e-10)
    assert fit.fit_defect < 0.05
    with pytest.raises(ValueError):
        gstate.fit_decay(gs3, (15.0, 15.2))
    with pytest.raises(ValueError):
        gstate.fit_decay(gs3, (1.0, 12.0))  # window starts below nu


def test_uprime_decay_rate(gs3):
    up = gstate.profile_derivative(gs3)
    rate = gstate.fit_exponential_rate(gs3, up, (10.0, 27.0))
    assert rate >= 0.9
    assert rate < 1.1


def test_rescale_identity_and_mass(gs3):
    same = gstate.rescale_state(gs3, 0.0)
    assert np.max(np.abs(same.values - gs3.profile.values)) < 1e-12 * np.max(
        gs3.profile.values
    )
    mu = 0.3
    z = gstate.rescale_state(gs3, mu)
    area = rc.sphere_area(3)
    mass_z = area * rc.integrate_radial(gs3.grid, rc.RadialFunction(gs3.grid, z.values**2, tail=(z.tail[0] ** 2, 2 * z.tail[1])))
    expect = (1.0 + mu) ** (2.0 - 1.5) * gs3.l2_mass
    assert mass_z == pytest.approx(expect, rel=1e-8)
    with pytest.raises(ValueError):
        gstate.rescale_state(gs3, -1.5)


def test_rescaled_profile_solves_shifted_equation(gs3):
    mu = 0.3
    z = gstate.rescale_state(gs3, mu)
    res = gstate.profile_equation_residual(gs3.grid, z.values, mass_shift=mu)
    # solver tolerance plus the interpolation/tail-splice error of the
    # resampled profile (the splice noise sits at ~1e-13 profile values)
    assert res < 1e-6


def test_grid_convergence_of_energy(gs3):
    g200 = rc.build_grid(3, 30.0, 200)
    gs200 = gstate.solve_ground_state(g200, gstate.SolverConfig(tol=1e-10))
    assert gs200.energy == pytest.approx(gs3.energy, rel=1e-8)


def test_interaction_two_routes(gs3):
    pairing = gstate.interaction_integral(gs3)
    double = gstate.interaction_integral_double(gs3)
    assert double == pytest.approx(pairing, rel=1e-9)


def test_virial_identities(ground_states):
    # F(U) = M/3, M/2, M for n = 3, 4, 5 by the Pohozaev/Nehari pair
    factor = {3: 1.0 / 3.0, 4: 0.5, 5: 1.0}
    for n, (gs, _) in ground_states.items():
        assert gs.energy == pytest.approx(factor[n] * gs.l2_mass, rel=1e-9)


def test_convergence_error_reports_best():
    g = rc.build_grid(3, 30.0, 64)
    with pytest.raises(gstate.ConvergenceError) as err:
        gstate.solve_ground_state(
            g, gstate.SolverConfig(method="fixed_point", tol=1e-15, max_iter=5)
        )
    assert err.value.best_residual > 0.0
    assert math.isfinite(err.value.best_residual)


def test_invalid_mass_shift(gs3):
    with pytest.raises(ValueError):
        gstate.solve_ground_state(gs3.grid, gstate.SolverConfig(), mass_shift=-1.0)


def test_cache_roundtrip(gs3):
    text = gstate.format_cache(gs3)
    data = gstate.parse_cache(text)
    assert data["n"] == 3 and data["N"] == gs3.grid.size
    # 17 significant digits round-trip binary64 bit-identically
    assert np.array_equal(data["values"], gs3.profile.values)
    assert np.array_equal(data["r"], gs3.grid.nodes)
    assert data["mass"] == gs3.l2_mass
    rebuilt = gstate.groundstate_from_cache(gs3.grid, text)
    assert rebuilt.l2_mass == pytest.approx(gs3.l2_mass, rel=1e-14)
    assert rebuilt.residual == pytest.approx(gs3.residual, rel=1e-6)
    # second format/parse cycle is byte-identical
    assert gstate.format_cache(rebuilt).splitlines()[1:] == text.splitlines()[1:]


def test_cache_header_mismatch(gs3):
    text = gstate.format_cache(gs3)
    other = rc.build_grid(3, 30.0, 200)
    with pytest.raises(ValueError):
        gstate.groundstate_from_cache(other, text)
    with pytest.raises(ValueError):
        gstate.parse_cache("")
    # matching header but perturbed nodes is rejected too
    lines = text.splitlines()
    r, v = lines[5].split()
    lines[5] = f"{float(r) * 1.001:.17g} {v}"
    with pytest.raises(ValueError, match="nodes"):
        gstate.groundstate_from_cache(gs3.grid, "\n".join(lines))
