"""Heat-method geodesic distances and their reverse-mode derivatives.

Pipeline for a set of sources ``S`` on a mesh with vertices ``X``:

1. ``(M + t L) u_s = e_s``                         heat flow from each source
2. ``V_s = -G u_s / max(|G u_s|, floor)``           unit field per face
3. ``(L + eps I) d_s = -Div V_s``                    Poisson recovery
4. ``d_s <- d_s - d_s[s]``                          zero at the source

``t`` is scaled by the squared shape diameter (so the configured value is
dimensionless and distances are 1-homogeneous in ``X``), and
``eps = poisson_regularization * trace(L) / n`` removes the constant nullspace.

Every quantity above is a smooth function of ``X`` away from degenerate
faces, and :func:`heat_vjp` propagates output adjoints through all of it:
both solves, the normalization, the operator entries, the mass matrix, the
diffusion time and the regularizer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import NumericalError, ValidationError
from .linalg import DENSE_LIMIT, DenseCholesky, SparseMatrix, factor_spd
from .mesh import NeighborhoodMask, TriMesh
from .operators import FaceGeometry, face_geometry, face_geometry_vjp, lumped_mass, stiffness_blocks

KINDS = ("euclidean", "local_euclidean", "geodesic")


@dataclass(frozen=True)
class GeodesicConfig:
    t: float = 0.1
    poisson_regularization: float = 1e-8
    grad_norm_floor: float = 1e-12

    def __post_init__(self):
        if not self.t > 0:
            raise ValidationError(f"diffusion time must be positive, got {self.t}")
        if not self.poisson_regularization > 0 or not self.grad_norm_floor > 0:
            raise ValidationError("regularization and gradient floor must be positive")


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        D = np.array(self.values, dtype=np.float64)
        if self.kind not in KINDS:
            raise ValidationError(f"unknown distance kind {self.kind!r}")
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValidationError(f"distance matrix must be square, got {D.shape}")
        if not np.all(np.isfinite(D)):
            raise NumericalError("distance matrix has non-finite entries")
        scale = max(float(np.abs(D).max()) if D.size else 0.0, 1e-300)
        if np.abs(D - D.T).max(initial=0.0) > 1e-12 * scale:
            raise ValidationError("distance matrix is not symmetric")
        if np.abs(np.diag(D)).max(initial=0.0) > 1e-12 * scale:
            raise ValidationError("distance matrix has a nonzero diagonal")
        if D.min(initial=0.0) < -1e-9 * scale:
            raise NumericalError(f"distance matrix has negative entries (min {D.min():.3e})")
        D.setflags(write=False)
        object.__setattr__(self, "values", D)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class MetricDistortionReport:
    K: float
    mean_distortion: float
    per_point: np.ndarray


# --- forward / backward ----------------------------------------------------

@dataclass(eq=False)
class HeatState:
    """Everything the reverse pass needs from one forward evaluation."""

    X: np.ndarray
    faces: np.ndarray
    cfg: GeodesicConfig
    sources: np.ndarray
    geom: FaceGeometry
    blocks: np.ndarray
    diam: float
    pair: tuple[int, int]
    t_abs: float
    eps: float
    heat: object
    poisson: object
    U: np.ndarray
    g: np.ndarray
    norms: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    D: np.ndarray  # unshifted Poisson solution (n, k)


class _Solver:
    """Solve with a factored SPD matrix; optionally via an explicit inverse."""

    def __init__(self, A, explicit_inverse: bool):
        self.fact = factor_spd(A, check_symmetry=False)  # symmetric by assembly
        self.inv = None
        if explicit_inverse and isinstance(self.fact, DenseCholesky):
            self.inv = self.fact.inverse()

    def __call__(self, B):
        if self.inv is not None:
            return self.inv @ B
        return self.fact.solve(B)


def _diameter(X):
    D = kernels.pairwise_distances(X)
    flat = int(np.argmax(D))
    i, j = divmod(flat, D.shape[0])
    return float(D[i, j]), (i, j)


def _spd(dense_or_blocks, faces, n, diag):
    """Build ``scatter(blocks) + diag`` as dense or sparse depending on size."""
    blocks = dense_or_blocks
    if n <= DENSE_LIMIT:
        A = kernels.scatter_blocks(faces, blocks, n)
        A[np.diag_indices(n)] += diag
        return A
    i = np.repeat(faces, 3, axis=1).reshape(-1)
    j = np.tile(faces, (1, 3)).reshape(-1)
    return SparseMatrix.from_arrays(
        n, n, np.concatenate([i, np.arange(n)]), np.concatenate([j, np.arange(n)]),
        np.concatenate([blocks.reshape(-1), np.broadcast_to(diag, (n,))]),
    )


def heat_forward(X, faces, cfg: GeodesicConfig, sources=None) -> tuple[np.ndarray, HeatState]:
    """Distances (n, k) from each source (column) to every vertex, plus saved state."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    n = X.shape[0]
    sources = np.arange(n) if sources is None else np.asarray(sources, dtype=np.int64).reshape(-1)
    if sources.size == 0 or sources.min() < 0 or sources.max() >= n:
        raise ValidationError(f"source indices must lie in [0, {n})")
    k = sources.size
    if not np.all(np.isfinite(X)):
        raise NumericalError("non-finite vertex positions")

    geom = face_geometry(X, faces)
    if not np.all(geom.area > 0) or not np.all(np.isfinite(geom.P)):
        raise NumericalError("degenerate face in geodesic computation")
    blocks = stiffness_blocks(geom)
    mass = lumped_mass(faces, geom.area, n)
    diam, pair = _diameter(X)
    t_abs = cfg.t * diam * diam
    trace_L = float(np.einsum("faa->", blocks))
    eps = cfg.poisson_regularization * trace_L / n

    explicit = k == n and n <= DENSE_LIMIT
    heat = _Solver(_spd(t_abs * blocks, faces, n, mass), explicit)
    rhs = np.zeros((n, k))
    rhs[sources, np.arange(k)] = 1.0
    U = heat.inv[:, sources].copy() if heat.inv is not None else heat(rhs)

    g = kernels.face_grad(geom.P, faces, U)
    V, norms = kernels.normalize_field(g, cfg.grad_norm_floor)
    Q = geom.area[:, None, None] * geom.P
    R = kernels.face_div(Q, faces, V, n)  # = -Div V
    # -Div V sums to zero exactly; drop the roundoff residue, which 1/eps would amplify
    R -= R.mean(axis=0)

    # no explicit inverse here: (L + eps I)^-1 carries a 1/eps constant mode that
    # cancels only approximately against R, whereas triangular solves stay accurate
    poisson = _Solver(_spd(blocks, faces, n, eps), False)
    D = poisson(R)
    if not np.all(np.isfinite(D)):
        raise NumericalError("heat method produced non-finite distances")
    out = D - D[sources, np.arange(k)][None, :]
    state = HeatState(X, faces, cfg, sources, geom, blocks, diam, pair, t_abs, eps,
                      heat, poisson, U, g, norms, V, Q, D)
    return out, state


def heat_vjp(state: HeatState, out_bar) -> np.ndarray:
    """Adjoint of :func:`heat_forward`: cotangent (n, k) -> gradient (n, 3) of X."""
    st = state
    X, F, geom = st.X, st.faces, st.geom
    n, k = X.shape[0], st.sources.size
    out_bar = np.asarray(out_bar, dtype=np.float64)
    if out_bar.shape != (n, k):
        raise ValidationError(f"cotangent shape {out_bar.shape} does not match forward output {(n, k)}")

    D_bar = out_bar.copy()
    D_bar[st.sources, np.arange(k)] -= out_bar.sum(axis=0)

    # Poisson solve: (L + eps I) D = R
    R_bar = st.poisson(D_bar)
    R_bar -= R_bar.mean(axis=0)
    L_bar = -kernels.pair_contract(F, R_bar, st.D)
    eps_bar = -float(np.einsum("is,is->", R_bar, st.D))

    # R = face_div(Q, V)
    V_bar = kernels.face_grad(st.Q, F, R_bar)
    Q_bar = kernels.face_outer(F, R_bar, st.V)

    g_bar = kernels.normalize_field_vjp(st.g, st.norms, V_bar, st.cfg.grad_norm_floor)
    U_bar = kernels.face_div(geom.P, F, g_bar, n)
    P_bar = kernels.face_outer(F, st.U, g_bar)

    # heat solve: (M + t L) U = E
    I_bar = st.heat(U_bar)
    H_bar = -kernels.pair_contract(F, I_bar, st.U)
    L_bar += st.t_abs * H_bar
    mass_bar = -np.einsum("is,is->i", I_bar, st.U)
    t_bar = float(np.einsum("fab,fab->", H_bar, st.blocks))

    # eps = reg * trace(L) / n
    L_bar[:, np.arange(3), np.arange(3)] += eps_bar * st.cfg.poisson_regularization / n

    # blocks = area * P P^T ; Q = area * P ; mass = scatter(area / 3)
    PPt = np.matmul(geom.P, np.transpose(geom.P, (0, 2, 1)))
    area_bar = np.einsum("fab,fab->f", L_bar, PPt)
    P_bar += geom.area[:, None, None] * np.matmul(L_bar + np.transpose(L_bar, (0, 2, 1)), geom.P)
    area_bar += np.einsum("fax,fax->f", Q_bar, geom.P)
    P_bar += geom.area[:, None, None] * Q_bar
    area_bar += mass_bar[F].sum(axis=1) / 3.0

    X_bar = face_geometry_vjp(X, F, geom, P_bar, area_bar)

    # t_abs = t * diam^2
    i, j = st.pair
    diam_bar = t_bar * 2.0 * st.cfg.t * st.diam
    if st.diam > 0:
        direction = (X[i] - X[j]) / st.diam
        X_bar[i] += diam_bar * direction
        X_bar[j] -= diam_bar * direction
    return X_bar


def geodesic_block(X, faces, cfg: GeodesicConfig, landmarks=None):
    """Symmetrized geodesic matrix on ``landmarks`` (all vertices by default).

    Returns ``(values, backward)`` where ``backward(cotangent) -> dX``.
    """
    n = X.shape[0]
    if landmarks is None:
        D, state = heat_forward(X, faces, cfg)
        out = 0.5 * (D + D.T)

        def backward(out_bar):
            ob = np.asarray(out_bar, dtype=np.float64)
            return heat_vjp(state, 0.5 * (ob + ob.T))

        return out, backward

    landmarks = np.asarray(landmarks, dtype=np.int64)
    D, state = heat_forward(X, faces, cfg, landmarks)
    sub = D[landmarks]
    out = 0.5 * (sub + sub.T)

    def backward(out_bar):
        ob = np.asarray(out_bar, dtype=np.float64)
        full = np.zeros((n, landmarks.size))
        np.add.at(full, landmarks, 0.5 * (ob + ob.T))
        return heat_vjp(state, full)

    return out, backward


# --- public API ------------------------------------------------------------

def _check_source(mesh: TriMesh, source: int) -> int:
    if not 0 <= int(source) < mesh.n_vertices:
        raise ValidationError(f"source {source} out of range for {mesh.n_vertices} vertices")
    return int(source)


def heat_distance_single(mesh: TriMesh, source: int, cfg: GeodesicConfig = GeodesicConfig()) -> np.ndarray:
    """Approximate geodesic distance from ``source`` to every vertex."""
    s = _check_source(mesh, source)
    D, _ = heat_forward(mesh.vertices, mesh.faces, cfg, [s])
    return D[:, 0]


def heat_distance_all(mesh: TriMesh, cfg: GeodesicConfig = GeodesicConfig(),
                      landmarks: Sequence[int] | None = None) -> DistanceMatrix:
    """All-pairs (or landmark-pairs) heat distances, symmetrized by averaging."""
    values, _ = geodesic_block(mesh.vertices, mesh.faces, cfg, landmarks)
    return DistanceMatrix(values, "geodesic")


def heat_distance_vjp(mesh: TriMesh, cfg: GeodesicConfig, cotangent) -> np.ndarray:
    """Gradient w.r.t. vertex positions of ``sum(cotangent * heat_distance_all(mesh))``."""
    cot = np.asarray(cotangent, dtype=np.float64)
    if cot.shape != (mesh.n_vertices, mesh.n_vertices):
        raise ValidationError(f"cotangent must be ({mesh.n_vertices}, {mesh.n_vertices}), got {cot.shape}")
    _, backward = geodesic_block(mesh.vertices, mesh.faces, cfg)
    return backward(cot)


def euclidean_distance_matrix(mesh_or_X) -> DistanceMatrix:
    X = mesh_or_X.vertices if isinstance(mesh_or_X, TriMesh) else np.asarray(mesh_or_X, float)
    D = kernels.pairwise_distances(X)
    np.fill_diagonal(D, 0.0)
    return DistanceMatrix(D, "euclidean")


def local_euclidean_matrix(mesh_or_X, mask: NeighborhoodMask) -> DistanceMatrix:
    """Euclidean distances kept only on ``mask`` entries (zero elsewhere)."""
    D = euclidean_distance_matrix(mesh_or_X).values
    return DistanceMatrix(np.where(mask.entries, D, 0.0), "local_euclidean")


def _same(Dx: DistanceMatrix, Dy: DistanceMatrix) -> None:
    if Dx.values.shape != Dy.values.shape:
        raise ValidationError(f"distance matrices differ in size: {Dx.values.shape} vs {Dy.values.shape}")
    if Dx.kind != Dy.kind:
        raise ValidationError(f"distance matrices differ in kind: {Dx.kind} vs {Dy.kind}")


def bounded_distortion(Dx: DistanceMatrix, Dy: DistanceMatrix) -> MetricDistortionReport:
    """Largest and average absolute change of pairwise distances."""
    _same(Dx, Dy)
    diff = np.abs(Dx.values - Dy.values)
    per_point = diff.mean(axis=1)
    return MetricDistortionReport(float(diff.max()), float(per_point.mean()), per_point)


def interp_metric(Dx: DistanceMatrix, Dy: DistanceMatrix, alpha: float) -> DistanceMatrix:
    """Entrywise convex combination ``(1 - alpha) Dx + alpha Dy``."""
    _same(Dx, Dy)
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return DistanceMatrix(Dx.values, Dx.kind)
    if alpha == 1.0:
        return DistanceMatrix(Dy.values, Dy.kind)
    return DistanceMatrix((1.0 - alpha) * Dx.values + alpha * Dy.values, Dx.kind)
