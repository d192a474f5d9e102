"""Sector operators, spectra, operator identities, nondegeneracy report."""

import math

import numpy as np
import pytest

from hartree_lab import ground_state as gstate
from hartree_lab import linearized_spectrum as lsp
from hartree_lab import radial_core as rc
from hartree_lab.newton_potential import sector_kernel_value


@pytest.fixture(scope="module")
def report3(reports):
    return reports[3][0]


def test_operator_weighted_symmetry(gs3):
    op = lsp.assemble_sector(gs3, 2)
    w = gs3.grid.weights
    norm_a = np.linalg.norm(op.matrix, 2)
    rng = np.random.default_rng(5)
    r = gs3.grid.nodes
    for _ in range(5):
        c1, c2, s1, s2 = rng.uniform(0.3, 1.5, size=4)
        f = np.exp(-c1 * r) * np.sin(s1 * r + 0.2)
        g = np.exp(-c2 * r) * np.cos(s2 * r)
        lhs = float(np.dot(w, (op.matrix @ f) * g))
        rhs = float(np.dot(w, f * (op.matrix @ g)))
        nf = math.sqrt(float(np.dot(w, f**2)))
        ng = math.sqrt(float(np.dot(w, g**2)))
        assert abs(lhs - rhs) < 1e-10 * norm_a * nf * ng


def test_centrifugal_term_exact(gs3):
    g = gs3.grid
    a0 = lsp.assemble_sector(gs3, 0, include_nonlocal=False).matrix
    for k in (1, 2, 5):
        ak = lsp.assemble_sector(gs3, k, include_nonlocal=False).matrix
        diff = ak - a0
        # off-diagonal parts are shared and cancel exactly; the diagonal
        # carries the centrifugal coefficient up to rounding of the sums
        assert np.max(np.abs(diff - np.diag(np.diag(diff)))) == 0.0
        ratio = np.diag(diff) * g.nodes**2 / (k * (k + g.dim - 2))
        assert np.max(np.abs(ratio - 1.0)) < 1e-6


def test_identity_LU(gs3):
    defects = lsp.identity_defects(gs3)
    assert defects["LU"] < 50.0 * 1e-10


def test_identity_suite(gs3):
    defects = lsp.identity_defects(gs3)
    assert defects["LrU"] < 1e-4
    assert defects["L2UrU"] < 1e-4
    assert lsp.check_identity_2U_rU(gs3) == defects["L2UrU"]


def test_wrong_sign_probe(gs3):
    # flipping the sign of the right side must leave an O(1) defect
    g = gs3.grid
    w = g.weights
    u = gs3.profile.values
    ru = g.nodes * lsp.radial_derivative(gs3)
    wrong = lsp.sector_apply_pointwise(gs3, 0, 2.0 * u + ru) - 2.0 * u
    rel = math.sqrt(float(np.dot(w, wrong**2)) / float(np.dot(w, u**2)))
    assert rel >= 1.0


def test_zero_mode(gs3, report3):
    zmr = lsp.zero_mode_residual(gs3)
    assert zmr < 1e-6
    rec = report3.records[1]
    assert abs(rec.lambda0) < 100.0 * zmr
    assert report3.u_prime_correlation > 0.999


def test_k0_trivial_kernel(report3):
    assert report3.k0_min_abs > report3.gap_delta0 > 0.0
    # one negative direction (mountain pass) and then a genuine gap
    assert report3.records[0].lambda0 < 0.0
    assert report3.records[0].lambda1 > 0.1


def test_positive_sectors_and_Wk(report3):
    for rec in report3.records:
        assert rec.error is None
        if rec.degree >= 2:
            assert rec.lambda0 > 0.0
            assert rec.w_k > 0.0
            assert rec.w_k_alt > 0.0


def test_lambda_monotone_in_k(report3):
    lams = [rec.lambda0 for rec in report3.records if rec.degree >= 1]
    assert all(b > a for a, b in zip(lams, lams[1:]))


def test_perron_frobenius_structure(report3):
    for rec in report3.records:
        assert rec.lambda1 - rec.lambda0 > 0.0
        assert rec.sign_changes == 0


def test_eigenvectors_weighted_orthonormal(gs3):
    op = lsp.assemble_sector(gs3, 2)
    spec = lsp.lowest_eigenpairs(op, 3)
    w = gs3.grid.weights
    gram = spec.eigenvectors.T @ (w[:, None] * spec.eigenvectors)
    assert np.max(np.abs(gram - np.eye(3))) < 1e-8


def test_Wk_consistency_with_lambda(gs3, report3):
    # lambda_{k,0} = <phi, L_1 phi> + W_k with a nonnegative first term
    op1 = lsp.assemble_sector(gs3, 1)
    w = gs3.grid.weights
    for rec in report3.records:
        if rec.degree < 2:
            continue
        spec = lsp.lowest_eigenpairs(lsp.assemble_sector(gs3, rec.degree), 1)
        phi = spec.eigenvectors[:, 0]
        pairing = float(np.dot(w, phi * (op1.matrix @ phi)))
        assert pairing >= -1e-8
        assert rec.lambda0 >= rec.w_k - 1e-6


def test_Wk_centrifugal_lower_bound(gs3, report3):
    # the kernel difference G_1 - G_k is pointwise positive, so W_k is at
    # least the centrifugal part
    rng = np.random.default_rng(2)
    for _ in range(200):
        k = int(rng.integers(2, 9))
        r, rho = np.exp(rng.uniform(-2, 3, size=2))
        assert sector_kernel_value(3, 1, r, rho) > sector_kernel_value(3, k, r, rho)
    g = gs3.grid
    w, r = g.weights, g.nodes
    for rec in report3.records:
        k = rec.degree
        if k < 2:
            continue
        spec = lsp.lowest_eigenpairs(lsp.assemble_sector(gs3, k), 1)
        phi = spec.eigenvectors[:, 0]
        centrifugal = float(
            np.dot(w, (k * (k + 1) - 2.0) / r**2 * phi**2)
        )
        assert rec.w_k >= centrifugal - 1e-10


def test_compute_Wk_guards(gs3):
    with pytest.raises(ValueError):
        lsp.compute_Wk(gs3, gs3.profile.values, 1)
    with pytest.raises(ValueError):
        lsp.compute_Wk(gs3, gs3.profile.values, 2, kernel_variant="mystery")


def test_zeroed_nonlocal_term_breaks_zero_mode(gs3, report3):
    # dropping the rank-structured kernel removes the translation zero mode:
    # the k=1 bottom jumps to a strictly positive O(1) value
    op = lsp.assemble_sector(gs3, 1, include_nonlocal=False)
    spec = lsp.lowest_eigenpairs(op, 1)
    assert spec.eigenvalues[0] > 100.0 * report3.tol_zero
    assert spec.eigenvalues[0] > 0.1


def test_mu_scaling_of_sector_spectra(gs3):
    mu = 0.3
    z = gstate.rescale_state(gs3, mu)
    for k in (0, 1, 2):
        bare = lsp.lowest_eigenpairs(lsp.assemble_sector(gs3, k), 2).eigenvalues
        resc = lsp.lowest_eigenpairs(
            lsp.assemble_sector_from_profile(
                gs3.grid, z.values, k, mass_shift=mu
            ),
            2,
        ).eigenvalues
        err = np.abs(resc - (1.0 + mu) * bare) / np.maximum(
            np.abs((1.0 + mu) * bare), 1.0
        )
        assert np.max(err) < 1e-4


def test_zero_mode_refinement_order():
    # residual decays at order >= 1.8 before the rounding floor
    zmrs = []
    for N in (48, 96):
        g = rc.build_grid(3, 30.0, N)
        gs = gstate.solve_ground_state(g, gstate.SolverConfig(tol=1e-9))
        zmrs.append(lsp.zero_mode_residual(gs))
    slope = -math.log(zmrs[1] / zmrs[0]) / math.log(2.0)
    assert slope >= 1.8


def test_report_serialization(report3):
    text = report3.to_text()
    assert "verdict: nondegenerate" in text
    rows = report3.to_csv_rows()
    assert rows[0] == ["k", "lambda0", "lambda1", "zero_mode_residual", "W_k"]
    assert len(rows) == 10
    # zero-mode residual recorded on the k=1 row, W_k from k=2 on
    assert rows[2][3] != ""
    assert rows[3][4] != ""


def test_report_requires_kmax(gs3):
    with pytest.raises(ValueError):
        lsp.nondegeneracy_report(gs3, 1)


def test_report_parallel_workers_identical(gs3, report3):
    par = lsp.nondegeneracy_report(gs3, 8, workers=2)
    assert par.verdict == report3.verdict
    for a, b in zip(par.records, report3.records):
        assert a.lambda0 == b.lambda0
        assert a.lambda1 == b.lambda1
        assert a.w_k == b.w_k


def test_assemble_guards(gs3):
    with pytest.raises(ValueError):
        lsp.assemble_sector(gs3, -1)
    with pytest.raises(ValueError):
        lsp.assemble_sector(gs3, 0, mu=-2.0)
    with pytest.raises(ValueError):
        lsp.lowest_eigenpairs(lsp.assemble_sector(gs3, 0), 0)
