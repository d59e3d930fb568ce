import numpy as np
import pytest

from metricprior import kernels
from metricprior.geodesics import heat_distance_all, heat_distance_vjp, GeodesicConfig
from metricprior.mesh import icosphere

BACKENDS = kernels.available_backends()


@pytest.fixture
def backend_pair():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    previous = kernels.BACKEND
    yield
    kernels.use_backend(previous)


def _both(fn):
    out = {}
    for name in BACKENDS:
        kernels.use_backend(name)
        out[name] = fn()
    return out["python"], out["compiled"]


def inputs():
    mesh = icosphere(1)
    rng = np.random.default_rng(0)
    n, m = mesh.n_vertices, mesh.n_faces
    return mesh, rng.standard_normal((m, 3, 3)), rng.standard_normal((n, 5)), rng.standard_normal((m, 3, 5))


@pytest.mark.parametrize("name", ["scatter_blocks", "scatter_corners", "face_grad", "face_div", "face_outer",
                                  "pair_contract", "normalize_field", "normalize_field_vjp",
                                  "pairwise_distances", "nearest_sq"])
def test_backends_agree(backend_pair, name):
    mesh, P, U, V = inputs()
    F, n = mesh.faces, mesh.n_vertices
    g, norms = kernels.normalize_field(V, 1e-12)
    calls = {
        "scatter_blocks": lambda: kernels.scatter_blocks(F, P, n),
        "scatter_corners": lambda: kernels.scatter_corners(F, P[:, :, 0], n),
        "face_grad": lambda: kernels.face_grad(P, F, U),
        "face_div": lambda: kernels.face_div(P, F, V, n),
        "face_outer": lambda: kernels.face_outer(F, U, V),
        "pair_contract": lambda: kernels.pair_contract(F, U, U[::-1].copy()),
        "normalize_field": lambda: kernels.normalize_field(V, 1e-12),
        "normalize_field_vjp": lambda: kernels.normalize_field_vjp(V, norms, V[::-1].copy(), 1e-12),
        "pairwise_distances": lambda: kernels.pairwise_distances(mesh.vertices, U[:, :3]),
        "nearest_sq": lambda: kernels.nearest_sq(U[:, :3], mesh.vertices),
    }
    a, b = _both(calls[name])
    for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
        np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)


def test_geodesics_agree(backend_pair):
    mesh = icosphere(2)
    cot = np.random.default_rng(1).standard_normal((mesh.n_vertices,) * 2)
    a, b = _both(lambda: heat_distance_all(mesh).values)
    np.testing.assert_allclose(a, b, atol=1e-11)
    a, b = _both(lambda: heat_distance_vjp(mesh, GeodesicConfig(), cot))
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9 * np.abs(a).max())


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_normalize_floor():
    g = np.zeros((2, 3, 1))
    V, norms = kernels.normalize_field(g, 1e-12)
    assert not V.any() and not norms.any()
