import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metricprior.errors import MeshValidationError
from metricprior.linalg import SparseMatrix, factor_spd
from metricprior.mesh import TriMesh, grid_mesh, icosphere
from metricprior.operators import apply_divergence, apply_gradient, assemble_operators, dense_laplacian
from conftest import bumpy


def test_equilateral_entries():
    mesh = TriMesh([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]], [[0, 1, 2]])
    L = assemble_operators(mesh).L.to_dense()
    off = L[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off, -1.0 / (2.0 * np.sqrt(3.0)), rtol=1e-14)


def test_linear_function_harmonic_on_grid():
    mesh = grid_mesh(8)
    ops = assemble_operators(mesh)
    X = mesh.vertices
    f = 0.7 * X[:, 0] - 1.3 * X[:, 1]
    Lf = ops.L @ f
    interior = (X[:, 0] > 1e-9) & (X[:, 0] < 1 - 1e-9) & (X[:, 1] > 1e-9) & (X[:, 1] < 1 - 1e-9)
    assert interior.sum() == 36
    assert np.abs(Lf[interior]).max() <= 1e-9


def test_sphere_area():
    M = assemble_operators(icosphere(3)).M
    assert M.sum() == pytest.approx(4 * np.pi, rel=0.02)


def test_constant_gradient_zero(sphere2):
    ops = assemble_operators(sphere2)
    assert np.abs(apply_gradient(ops, np.full(sphere2.n_vertices, 3.0))).max() <= 1e-12


def test_gradient_of_x_on_flat_mesh():
    mesh = bumpy(grid_mesh(5), 0)
    X = mesh.vertices.copy()
    X[:, 2] = 0.0
    mesh = mesh.with_vertices(X)
    g = apply_gradient(assemble_operators(mesh), X[:, 0])
    np.testing.assert_allclose(g, np.tile([1.0, 0.0, 0.0], (mesh.n_faces, 1)), atol=1e-10)


def test_gradient_edge_differences(sphere2):
    mesh = bumpy(sphere2, 1)
    u = np.random.default_rng(0).standard_normal(mesh.n_vertices)
    g = apply_gradient(assemble_operators(mesh), u)
    X, F = mesh.vertices, mesh.faces
    for a, b in [(0, 1), (1, 2), (2, 0)]:
        edge = X[F[:, b]] - X[F[:, a]]
        np.testing.assert_allclose(np.einsum("fx,fx->f", g, edge), u[F[:, b]] - u[F[:, a]], atol=1e-10)


def test_zero_field(sphere2):
    ops = assemble_operators(sphere2)
    assert not apply_divergence(ops, np.zeros((sphere2.n_faces, 3))).any()


def test_constant_field_divergence_closed(sphere2):
    ops = assemble_operators(bumpy(sphere2, 2))
    d = apply_divergence(ops, np.tile([0.3, -1.0, 2.0], (sphere2.n_faces, 1)))
    assert abs(d.sum()) <= 1e-12


def test_div_grad_identity(sphere2):
    mesh = bumpy(sphere2, 3)
    ops = assemble_operators(mesh)
    u = np.random.default_rng(1).standard_normal(mesh.n_vertices)
    np.testing.assert_allclose(apply_divergence(ops, apply_gradient(ops, u)), -(ops.L @ u), atol=1e-9)


def test_matches_dense_oracle(sphere2):
    mesh = bumpy(sphere2, 4)
    np.testing.assert_allclose(assemble_operators(mesh).L.to_dense(), dense_laplacian(mesh), atol=1e-12)


def test_degenerate_face_rejected():
    mesh = TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], [[0, 1, 2], [0, 1, 3]])
    with pytest.raises(MeshValidationError):
        assemble_operators(mesh)


def test_wrong_field_size(sphere2):
    ops = assemble_operators(sphere2)
    with pytest.raises(MeshValidationError):
        apply_gradient(ops, np.zeros(3))
    with pytest.raises(MeshValidationError):
        apply_divergence(ops, np.zeros((3, 3)))


def test_small_perturbations_stay_finite(small_sphere):
    base = assemble_operators(small_sphere).L.to_dense()
    for h in (1e-3, 1e-5, 1e-7):
        X = small_sphere.vertices.copy()
        X[5] += h
        L = assemble_operators(small_sphere.with_vertices(X)).L.to_dense()
        assert np.all(np.isfinite(L))
        assert np.abs(L - base).max() < 1e3 * h


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_laplacian_psd_and_constant_nullspace(seed):
    mesh = bumpy(icosphere(1), seed, 0.1)
    ops = assemble_operators(mesh)
    L = ops.L.to_dense()
    assert np.abs(L @ np.ones(mesh.n_vertices)).max() <= 1e-10
    x = np.random.default_rng(seed).standard_normal((mesh.n_vertices, 100))
    assert np.einsum("ik,ij,jk->k", x, L, x).min() >= -1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_div_grad_random(seed):
    mesh = bumpy(icosphere(1), seed, 0.1)
    ops = assemble_operators(mesh)
    u = np.random.default_rng(seed).standard_normal(mesh.n_vertices)
    np.testing.assert_allclose(apply_divergence(ops, apply_gradient(ops, u)), -(ops.L @ u), atol=1e-9)


def test_sparse_dense_heat_system(sphere2):
    ops = assemble_operators(sphere2)
    A = SparseMatrix.from_scipy(ops.L.to_csr() * 0.05 + np.diag(ops.M))
    b = np.eye(sphere2.n_vertices)[:, :4]
    np.testing.assert_allclose(factor_spd(A, "sparse").solve(b), factor_spd(A, "dense").solve(b), atol=1e-9)
