"""Pure numpy implementations of the per-face kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors every function
here with the same signature and must agree to rounding.

Shapes used throughout: ``faces`` is (m, 3) int64, per-face local operators
are (m, 3, 3) with axis 1 indexing the face corner, multi-source vertex fields
are (n, k) and multi-source face fields are (m, 3, k).
"""
from __future__ import annotations

import numpy as np
from scipy import sparse


def _corner_scatter(faces: np.ndarray, n: int) -> sparse.csr_matrix:
    m = faces.shape[0]
    cols = np.arange(3 * m)
    return sparse.csr_matrix(
        (np.ones(3 * m), (faces.reshape(-1), cols)), shape=(n, 3 * m)
    )


def scatter_blocks(faces, blocks, n):
    """Sum per-face 3x3 blocks into a dense (n, n) matrix."""
    faces = np.asarray(faces, dtype=np.int64)
    idx = (faces[:, :, None] * n + faces[:, None, :]).reshape(-1)
    flat = np.bincount(idx, weights=np.asarray(blocks, float).reshape(-1), minlength=n * n)
    return flat.reshape(n, n)


def scatter_corners(faces, values, n):
    """Sum per-corner values (m, 3) onto vertices."""
    return np.bincount(
        np.asarray(faces, dtype=np.int64).reshape(-1),
        weights=np.asarray(values, float).reshape(-1),
        minlength=n,
    )


def face_grad(P, faces, U):
    """out[f, x, s] = sum_a P[f, a, x] * U[faces[f, a], s]."""
    return np.matmul(np.transpose(P, (0, 2, 1)), U[faces])


def face_div(Q, faces, V, n):
    """out[faces[f, a], s] += sum_x Q[f, a, x] * V[f, x, s]."""
    contrib = np.matmul(Q, V)
    k = V.shape[2]
    return np.asarray(_corner_scatter(faces, n) @ contrib.reshape(-1, k))


def face_outer(faces, Y, Z):
    """out[f, a, x] = sum_s Y[faces[f, a], s] * Z[f, x, s]."""
    return np.matmul(Y[faces], np.transpose(Z, (0, 2, 1)))


def pair_contract(faces, Y, Z):
    """out[f, a, b] = sum_s Y[faces[f, a], s] * Z[faces[f, b], s]."""
    return np.matmul(Y[faces], np.transpose(Z[faces], (0, 2, 1)))


def normalize_field(g, floor):
    """Return (-g / max(|g|, floor), |g|) with the norm taken over axis 1."""
    norms = np.sqrt(np.einsum("fxs,fxs->fs", g, g))
    return -g / np.maximum(norms, floor)[:, None, :], norms


def normalize_field_vjp(g, norms, Vbar, floor):
    """Adjoint of :func:`normalize_field` with respect to ``g``."""
    safe = np.maximum(norms, floor)
    above = norms > floor
    ghat = g / safe[:, None, :]
    radial = np.einsum("fxs,fxs->fs", ghat, Vbar)
    proj = np.where(above[:, None, :], Vbar - radial[:, None, :] * ghat, Vbar)
    return -proj / safe[:, None, :]


def pairwise_distances(A, B):
    """Euclidean distances between rows of A (p, 3) and B (q, 3)."""
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt(np.einsum("ijx,ijx->ij", diff, diff))


def nearest_sq(P, Q):
    """For each row of P, squared distance to and index of the nearest row of Q."""
    diff = P[:, None, :] - Q[None, :, :]
    d2 = np.einsum("ijx,ijx->ij", diff, diff)
    idx = np.argmin(d2, axis=1)
    return d2[np.arange(P.shape[0]), idx], idx.astype(np.int64)
