import numpy as np
import pytest

from metricprior.mesh import TriMesh, grid_mesh, icosphere

SQUARE_OFF = """OFF
4 2 0
0 0 0
1 0 0
1 1 0
0 1 0
3 0 1 2
3 0 2 3
"""


@pytest.fixture
def square():
    return TriMesh([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 3]])


@pytest.fixture(scope="session")
def sphere2():
    return icosphere(2)


@pytest.fixture(scope="session")
def small_sphere():
    return icosphere(1)


@pytest.fixture(scope="session")
def grid6():
    return grid_mesh(6)


def random_rotation(rng):
    Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def bumpy(mesh, seed, amount=0.05):
    rng = np.random.default_rng(seed)
    return mesh.with_vertices(mesh.vertices + amount * rng.standard_normal(mesh.vertices.shape))
