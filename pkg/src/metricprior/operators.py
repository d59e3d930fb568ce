"""Discrete Laplacian, lumped mass, gradient and divergence on triangle meshes.

Conventions: ``L`` is the positive semidefinite cotangent stiffness matrix
``sum_f area_f * P_f^T P_f`` where the columns of ``P_f`` are the gradients of
the three hat functions on face ``f``; ``M`` is the barycentric lumped mass;
``G`` maps vertex values to per-face gradients; ``Div = -G^T diag(area)``, so
``Div(G u) = -L u`` holds exactly.

The per-face geometry (hat gradients, areas) is also exposed with its
vector-Jacobian product so callers can differentiate anything assembled from
it with respect to vertex positions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import kernels
from .errors import MeshValidationError
from .linalg import SparseMatrix
from .mesh import AREA_EPS, TriMesh, shape_diameter


@dataclass(frozen=True, eq=False)
class FaceGeometry:
    """Per-face quantities derived from vertex positions.

    ``P[f, a]`` is the gradient of the hat function of corner ``a`` of face
    ``f``; ``normal`` is the unnormalized cross product (twice the area).
    """

    normal: np.ndarray  # (m, 3)
    sqnorm: np.ndarray  # (m,)
    area: np.ndarray  # (m,)
    edges: np.ndarray  # (m, 3, 3) edge opposite each corner
    P: np.ndarray  # (m, 3, 3)


def face_geometry(X: np.ndarray, faces: np.ndarray) -> FaceGeometry:
    x0, x1, x2 = X[faces[:, 0]], X[faces[:, 1]], X[faces[:, 2]]
    N = np.cross(x1 - x0, x2 - x0)
    r = np.einsum("fx,fx->f", N, N)
    area = 0.5 * np.sqrt(r)
    edges = np.stack([x2 - x1, x0 - x2, x1 - x0], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        P = np.cross(N[:, None, :], edges) / r[:, None, None]
    return FaceGeometry(N, r, area, edges, P)


def face_geometry_vjp(X: np.ndarray, faces: np.ndarray, geom: FaceGeometry,
                      P_bar: np.ndarray | None = None, area_bar: np.ndarray | None = None) -> np.ndarray:
    """Pull adjoints of ``P`` (m, 3, 3) and ``area`` (m,) back to vertex positions."""
    N, r, e = geom.normal, geom.sqnorm, geom.edges
    m = faces.shape[0]
    N_bar = np.zeros((m, 3))
    e_bar = np.zeros((m, 3, 3))
    if P_bar is not None:
        # P_a = (N x e_a) / r
        e_bar = np.cross(P_bar, N[:, None, :]) / r[:, None, None]
        N_bar += np.einsum("fax->fx", np.cross(e, P_bar)) / r[:, None]
        N_bar -= 2.0 * (np.einsum("fax,fax->f", P_bar, geom.P) / r)[:, None] * N
    if area_bar is not None:
        N_bar += (area_bar / (4.0 * geom.area))[:, None] * N
    x0, x1, x2 = X[faces[:, 0]], X[faces[:, 1]], X[faces[:, 2]]
    E1, E2 = x1 - x0, x2 - x0
    E1_bar = np.cross(E2, N_bar)
    E2_bar = np.cross(N_bar, E1)
    # corner contributions: e_0 = x2 - x1, e_1 = x0 - x2, e_2 = x1 - x0
    c0 = -E1_bar - E2_bar + e_bar[:, 1] - e_bar[:, 2]
    c1 = E1_bar - e_bar[:, 0] + e_bar[:, 2]
    c2 = E2_bar + e_bar[:, 0] - e_bar[:, 1]
    n = X.shape[0]
    out = np.zeros((n, 3))
    for a, c in enumerate((c0, c1, c2)):
        for x in range(3):
            out[:, x] += np.bincount(faces[:, a], weights=c[:, x], minlength=n)
    return out


def stiffness_blocks(geom: FaceGeometry) -> np.ndarray:
    """Local 3x3 cotangent blocks ``area * P P^T`` per face."""
    return geom.area[:, None, None] * np.matmul(geom.P, np.transpose(geom.P, (0, 2, 1)))


def lumped_mass(faces: np.ndarray, area: np.ndarray, n: int) -> np.ndarray:
    return kernels.scatter_corners(faces, np.repeat(area[:, None] / 3.0, 3, axis=1), n)


def _check_faces(mesh: TriMesh, geom: FaceGeometry) -> None:
    diam = shape_diameter(mesh)
    bad = np.where(~(geom.area >= AREA_EPS * diam**2) | (geom.area <= 0))[0]
    if bad.size:
        raise MeshValidationError("degenerate face in operator assembly", bad)


@dataclass(frozen=True, eq=False)
class MeshOperators:
    L: SparseMatrix  # (n, n) PSD cotangent Laplacian
    M: np.ndarray  # (n,) lumped mass diagonal
    G: sparse.csr_matrix  # (3m, n): row 3f+x is component x of the gradient on face f
    Div: sparse.csr_matrix  # (n, 3m)
    areas: np.ndarray  # (m,)

    @property
    def n_vertices(self) -> int:
        return self.L.rows

    @property
    def n_faces(self) -> int:
        return self.areas.size


def assemble_operators(mesh: TriMesh) -> MeshOperators:
    """Assemble L, M, G and Div for ``mesh``; raises on degenerate faces."""
    X, F = mesh.vertices, mesh.faces
    geom = face_geometry(X, F)
    _check_faces(mesh, geom)
    n, m = mesh.n_vertices, mesh.n_faces
    blocks = stiffness_blocks(geom)
    L = SparseMatrix.from_arrays(
        n, n,
        np.repeat(F, 3, axis=1).reshape(-1),
        np.tile(F, (1, 3)).reshape(-1),
        blocks.reshape(-1),
    )
    M = lumped_mass(F, geom.area, n)
    # G[3f + x, F[f, a]] = P[f, a, x]
    rows = (3 * np.arange(m)[:, None, None] + np.arange(3)[None, None, :]).repeat(3, axis=1)
    cols = np.broadcast_to(F[:, :, None], (m, 3, 3))
    G = sparse.csr_matrix((geom.P.reshape(-1), (rows.reshape(-1), cols.reshape(-1))), shape=(3 * m, n))
    Div = (-(G.T @ sparse.diags(np.repeat(geom.area, 3)))).tocsr()
    return MeshOperators(L, M, G, Div, geom.area)


def apply_gradient(ops: MeshOperators, u) -> np.ndarray:
    """Per-face gradient (m, 3) of the piecewise-linear function with vertex values ``u``."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != ops.n_vertices:
        raise MeshValidationError(f"expected {ops.n_vertices} vertex values, got {u.shape[0]}")
    out = ops.G @ u
    return out.reshape(ops.n_faces, 3, *u.shape[1:])


def apply_divergence(ops: MeshOperators, V) -> np.ndarray:
    """Integrated divergence at each vertex of the per-face field ``V`` (m, 3)."""
    V = np.asarray(V, dtype=float)
    if V.shape[0] != ops.n_faces:
        raise MeshValidationError(f"expected {ops.n_faces} face vectors, got {V.shape[0]}")
    return ops.Div @ V.reshape(3 * ops.n_faces, *V.shape[2:])


def dense_laplacian(mesh: TriMesh) -> np.ndarray:
    """Dense cotangent Laplacian built from the edge-angle formula.

    Independent of the hat-gradient assembly above; used to cross-check it.
    """
    X, F = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    L = np.zeros((n, n))
    for f in F:
        for c in range(3):
            i, j, k = f[c], f[(c + 1) % 3], f[(c + 2) % 3]
            u, v = X[j] - X[i], X[k] - X[i]
            cot = np.dot(u, v) / np.linalg.norm(np.cross(u, v))
            w = 0.5 * cot
            L[j, k] -= w
            L[k, j] -= w
            L[j, j] += w
            L[k, k] += w
    return L
