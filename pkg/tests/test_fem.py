import math
import warnings

import numpy as np
import pytest

from capilab import fem
from capilab.geometry import DomainSpec, boundary_point
from capilab.kernels import _numpy
from capilab.meshgen import build_mesh

try:
    from capilab.kernels import _numba
except ImportError:  # pragma: no cover
    _numba = None


def test_planar_half_disk_exact():
    mesh = build_mesh(DomainSpec("planar", 1, math.pi / 2), 16, 64)
    f = fem.solve_mixed_bvp(mesh, 0.0)
    i0 = np.argmin(np.linalg.norm(f.space.nodes, axis=1))
    assert f.coeffs[i0] == pytest.approx(-0.25, abs=1e-4)
    flux = fem.boundary_flux(f)
    assert np.max(np.abs(flux.values - 0.5)) <= 1e-3


def test_axisymmetric_half_ball_exact(half_ball):
    mesh = build_mesh(half_ball, 16, 32)
    f = fem.solve_mixed_bvp(mesh, 0.0)
    i0 = np.argmin(np.linalg.norm(f.space.nodes, axis=1))
    assert f.coeffs[i0] == pytest.approx(-1 / 6, abs=1e-4)
    assert np.max(np.abs(fem.boundary_flux(f).values - 1 / 3)) <= 1e-2


def test_hessian_and_laplacian(half_disk):
    f = fem.solve_mixed_bvp(build_mesh(half_disk, 16, 32), 0.0)
    d = fem.derivatives(f)
    assert np.allclose(d.hessian, 0.5 * np.eye(2), atol=5e-3)
    vol = d.integrate(np.ones_like(d.values))
    assert d.integrate(d.laplacian) / vol == pytest.approx(1.0, abs=1e-3)


def test_axisymmetric_laplacian_includes_azimuthal_term(half_ball):
    d = fem.derivatives(fem.solve_mixed_bvp(build_mesh(half_ball, 16, 32), 0.0))
    vol = d.integrate(np.ones_like(d.values))
    assert vol == pytest.approx(2 * math.pi / 3, rel=1e-2)
    assert d.integrate(d.laplacian) / vol == pytest.approx(1.0, abs=1e-2)


def test_pcg_matches_direct(bumpy):
    mesh = build_mesh(bumpy, 8, 32)
    f = fem.solve_mixed_bvp(mesh, -0.3)
    ref = fem.direct_solve(mesh, -0.3)
    assert np.max(np.abs(f.coeffs - ref)) <= 1e-9


def test_zero_data_without_correction(bumpy):
    mesh = build_mesh(bumpy, 8, 32)
    f = fem.solve_mixed_bvp(mesh, 0.0, correction_steps=0)
    assert np.all(f.coeffs[f.space.sigma_dofs] == 0.0)
    g = fem.solve_mixed_bvp(mesh, 0.0)
    on = ~np.isnan(mesh.vertex_phi)
    assert np.all(g.coeffs[:len(mesh.vertices)][on] == 0.0)
    mids, _, sag = fem.sigma_midpoint_offsets(mesh)
    assert np.all(sag > 0)
    assert np.all(g.coeffs[mids] < 0)


def test_flux_is_compatible(bumpy):
    from capilab.quantities import compatibility_residual
    f = fem.solve_mixed_bvp(build_mesh(bumpy, 8, 32), -0.2)
    assert compatibility_residual(f) <= 1e-10


def test_flux_interpolates_its_nodes(cap60):
    f = fem.solve_mixed_bvp(build_mesh(cap60, 8, 32), -0.4)
    flux = fem.boundary_flux(f)
    phi = flux.phi_nodes
    assert np.all(np.diff(phi[:, 0]) > 0)
    assert np.allclose(flux(phi[:, 0]), flux.values[:, 0], atol=1e-14)
    assert np.allclose(flux(phi[:, 1]), 0.5 * (flux.values[:, 0] + flux.values[:, 2]), atol=1e-14)


def test_convergence_error(bumpy):
    with pytest.raises(fem.ConvergenceError):
        fem.solve_mixed_bvp(build_mesh(bumpy, 8, 32), 0.0, maxiter=2)


def test_positive_c_warns(half_disk):
    with pytest.warns(UserWarning):
        f = fem.solve_mixed_bvp(build_mesh(half_disk, 4, 16), 0.5)
    assert f.c_positive_warning
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not fem.solve_mixed_bvp(build_mesh(half_disk, 4, 16), 0.0).c_positive_warning


def test_triangle_rule_is_exact():
    qb, qw = fem.triangle_rule(5)
    # weights are normalised by the area; int_ref x^2 y^3 = 2! 3! / 7!
    assert qw.sum() == pytest.approx(1.0, rel=1e-14)
    x, y = qb[:, 1], qb[:, 2]
    assert 0.5 * np.sum(qw * x ** 2 * y ** 3) == pytest.approx(2 * 6 / 5040, rel=1e-12)


def test_sigma_chord_trace_vanishes_without_correction(bumpy):
    f = fem.solve_mixed_bvp(build_mesh(bumpy, 8, 32), 0.0, correction_steps=0)
    assert np.allclose(fem.sigma_chord_trace(f), 0.0, atol=1e-15)


@pytest.mark.skipif(_numba is None, reason="numba not installed")
class TestKernelsAgree:
    def test_element_matrices(self, bumpy):
        mesh = build_mesh(bumpy, 4, 16)
        X = mesh.vertices[mesh.triangles]
        for axisym in (False, True):
            a = _numpy.p2_element_matrices(X, fem.QBARY6, fem.QW6, axisym)
            b = _numba.p2_element_matrices(X, fem.QBARY6, fem.QW6, axisym)
            for u, v in zip(a, b):
                assert np.allclose(u, v, rtol=1e-12, atol=1e-14)

    def test_pcg(self):
        import scipy.sparse as sp
        rng = np.random.default_rng(0)
        n = 60
        A = sp.diags([-1.0, 2.5, -1.0], [-1, 0, 1], shape=(n, n)).tocsr()
        b = rng.standard_normal(n)
        dinv = 1.0 / A.diagonal()
        xa = _numpy.pcg_csr(A.indptr, A.indices, A.data, b, np.zeros(n), dinv, 1e-13, 500)
        xb = _numba.pcg_csr(A.indptr, A.indices, A.data, b, np.zeros(n), dinv, 1e-13, 500)
        assert np.allclose(xa[0], xb[0], atol=1e-11)
        assert np.allclose(A @ xa[0], b, atol=1e-10)

    def test_geometry_kernels(self):
        rng = np.random.default_rng(1)
        P, Q = rng.standard_normal((50, 2)), rng.standard_normal((70, 2))
        assert _numpy.max_pair_distance(P, Q) == pytest.approx(_numba.max_pair_distance(P, Q), rel=1e-14)
        phi = np.linspace(0, math.pi, 40)
        spec = DomainSpec("planar", 1, math.pi / 2)
        X = boundary_point(spec, phi)
        nu = X.copy()
        cnt_a = _numpy.ball_violations(X, nu, 0.3, P, 1e-12)
        cnt_b = _numba.ball_violations(X, nu, 0.3, P, 1e-12)
        assert np.array_equal(cnt_a, cnt_b)
