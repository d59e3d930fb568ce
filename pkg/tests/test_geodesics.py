import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metricprior.errors import NumericalError, ValidationError
from metricprior.geodesics import (
    DistanceMatrix,
    GeodesicConfig,
    bounded_distortion,
    euclidean_distance_matrix,
    heat_distance_all,
    heat_distance_single,
    heat_distance_vjp,
    interp_metric,
    local_euclidean_matrix,
)
from metricprior.checks import check_heat_vjp
from metricprior.dataset import gen_synthetic_family
from metricprior.mesh import TriMesh, grid_mesh, icosphere, neighborhood_mask, shape_diameter
from metricprior.synthetic import TubeStyle
from conftest import bumpy, random_rotation


def great_circle(X):
    return np.arccos(np.clip(X @ X.T, -1.0, 1.0))


def test_source_distance_zero(sphere2):
    d = heat_distance_single(sphere2, 7)
    assert d[7] == 0.0


def test_source_out_of_range(sphere2):
    with pytest.raises(ValidationError):
        heat_distance_single(sphere2, sphere2.n_vertices)


def test_sphere_single_source_mean_error():
    mesh = icosphere(3)
    exact = great_circle(mesh.vertices)[0]
    d = heat_distance_single(mesh, 0)
    off = np.arange(mesh.n_vertices) != 0
    assert np.mean(np.abs(d[off] - exact[off]) / exact[off]) <= 0.05


def test_equilateral_triangle_symmetric():
    mesh = TriMesh([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]], [[0, 1, 2]])
    D = heat_distance_all(mesh).values
    off = D[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off, off[0], rtol=1e-12)


def test_all_matches_single_sources():
    mesh = grid_mesh(5)
    D = heat_distance_all(mesh).values
    cols = np.stack([heat_distance_single(mesh, s) for s in range(mesh.n_vertices)], axis=1)
    np.testing.assert_allclose(D, 0.5 * (cols + cols.T), atol=1e-12)


def test_landmarks_are_a_submatrix(sphere2):
    idx = [0, 5, 17, 40, 100]
    full = heat_distance_all(sphere2).values
    np.testing.assert_allclose(heat_distance_all(sphere2, landmarks=idx).values, full[np.ix_(idx, idx)], atol=1e-12)


def test_triangle_inequality_sampled(sphere2):
    D = heat_distance_all(sphere2).values
    rng = np.random.default_rng(0)
    i, j, k = rng.integers(0, sphere2.n_vertices, (3, 2000))
    assert np.all(D[i, k] <= D[i, j] + D[j, k] + 0.05 * shape_diameter(sphere2))


def test_geodesic_at_least_euclidean():
    mesh = icosphere(3)
    D = heat_distance_all(mesh).values
    E = euclidean_distance_matrix(mesh).values
    assert np.all(D >= E - 0.02 * shape_diameter(mesh))


def test_rigid_motion_invariance(sphere2):
    mesh = bumpy(sphere2, 1, 0.02)
    rng = np.random.default_rng(2)
    moved = mesh.with_vertices(mesh.vertices @ random_rotation(rng).T + rng.standard_normal(3))
    assert np.abs(heat_distance_all(moved).values - heat_distance_all(mesh).values).max() <= 1e-9


def test_zero_cotangent(small_sphere):
    assert not heat_distance_vjp(small_sphere, GeodesicConfig(), np.zeros((42, 42))).any()


def test_vjp_euler_homogeneity(sphere2):
    # D(sX) = s D(X), so d/ds sum(D(sX)) at s = 1 is sum(D)
    mesh = bumpy(sphere2, 3, 0.03)
    n = mesh.n_vertices
    g = heat_distance_vjp(mesh, GeodesicConfig(), np.ones((n, n)))
    assert np.sum(g * mesh.vertices) == pytest.approx(heat_distance_all(mesh).values.sum(), rel=1e-9)


def test_vjp_finite_differences_30_vertices():
    mesh = grid_mesh(5, 6)  # 30 vertices
    mesh = mesh.with_vertices(mesh.vertices + [0, 0, 0] + 0.03 * np.random.default_rng(4).standard_normal((30, 3)))
    assert check_heat_vjp(0, mesh, step=1e-5) <= 1e-4


def test_vjp_shape_check(small_sphere):
    with pytest.raises(ValidationError):
        heat_distance_vjp(small_sphere, GeodesicConfig(), np.zeros((3, 3)))


def test_config_validation():
    with pytest.raises(ValidationError):
        GeodesicConfig(t=0.0)


def test_distance_matrix_validation():
    with pytest.raises(ValidationError):
        DistanceMatrix([[0, 1], [2, 0]], "geodesic")
    with pytest.raises(ValidationError):
        DistanceMatrix([[1, 1], [1, 0]], "geodesic")
    with pytest.raises(NumericalError):
        DistanceMatrix([[0, -1], [-1, 0]], "geodesic")
    with pytest.raises(ValidationError):
        DistanceMatrix(np.zeros((2, 2)), "manhattan")


def test_local_matrix(square):
    mask = neighborhood_mask(square, 0.75)
    D = local_euclidean_matrix(square, mask).values
    assert D[0, 2] == 0.0 and D[0, 1] == 1.0


def test_distortion_identity_and_offset():
    rng = np.random.default_rng(0)
    A = rng.uniform(1, 2, (6, 6))
    A = A + A.T
    np.fill_diagonal(A, 0)
    Dx = DistanceMatrix(A, "geodesic")
    assert bounded_distortion(Dx, Dx).K == 0.0
    B = A + 0.25
    np.fill_diagonal(B, 0)
    assert bounded_distortion(Dx, DistanceMatrix(B, "geodesic")).K == pytest.approx(0.25, abs=1e-15)


def test_distortion_kind_mismatch():
    Z = np.zeros((2, 2))
    with pytest.raises(ValidationError):
        bounded_distortion(DistanceMatrix(Z, "geodesic"), DistanceMatrix(Z, "euclidean"))


def test_interp_endpoints_and_midpoint():
    Dx = DistanceMatrix([[0, 0], [0, 0]], "geodesic")
    Dy = DistanceMatrix([[0, 2], [2, 0]], "geodesic")
    assert np.array_equal(interp_metric(Dx, Dy, 0.0).values, Dx.values)
    assert np.array_equal(interp_metric(Dx, Dy, 1.0).values, Dy.values)
    assert interp_metric(Dx, Dy, 0.5).values[0, 1] == 1.0
    with pytest.raises(ValidationError):
        interp_metric(Dx, Dy, 1.5)


def _random_metric(rng, n):
    A = rng.uniform(0, 3, (n, n))
    A = A + A.T
    np.fill_diagonal(A, 0)
    return DistanceMatrix(A, "geodesic")


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 20), st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_interpolation_distortion_linear(n, seed, alpha):
    rng = np.random.default_rng(seed)
    Dx, Dy = _random_metric(rng, n), _random_metric(rng, n)
    K = bounded_distortion(Dx, Dy).K
    assert bounded_distortion(Dx, interp_metric(Dx, Dy, alpha)).K == pytest.approx(alpha * K, rel=1e-12, abs=1e-12)


def test_tube_poses_closer_than_styles():
    recs = gen_synthetic_family(2, 2, resolution=8, styles=[TubeStyle(1.0, 1.0, 0.1), TubeStyle(1.0, 1.0, 0.2)],
                                isometry_ratio=None)
    within = bounded_distortion(recs[0].D_geo, recs[1].D_geo).K
    across = bounded_distortion(recs[0].D_geo, recs[2].D_geo).K
    assert within < across


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10_000))
def test_vjp_matches_finite_differences(seed):
    assert check_heat_vjp(seed) <= 1e-4
