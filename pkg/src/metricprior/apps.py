"""Latent-space applications and evaluation metrics.

Decoders trained on distance-matrix losses produce shapes only up to a rigid
motion (and reflection), so point-to-point comparisons with ground truth go
through an orthogonal Procrustes alignment first.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import orthogonal_procrustes

from . import autodiff as ad
from . import kernels
from .dataset import ShapeRecord
from .errors import NumericalError, ValidationError
from .geodesics import DistanceMatrix, GeodesicConfig, geodesic_block, heat_distance_all
from .mesh import TriMesh, shape_diameter
from .model import ModelParams, _const_model, decode, decode_many, encode, encode_many, merge_latent, split_latent
from .trainer import AdamState, adam_step


def _faces(params: ModelParams, faces) -> np.ndarray:
    faces = np.asarray(faces, dtype=np.int64)
    if faces.size and faces.max() >= params.config.n_vertices:
        raise ValidationError("faces reference vertices the model does not decode")
    return faces


def _check_input(params: ModelParams, mesh: TriMesh) -> None:
    if mesh.n_vertices != params.config.n_vertices:
        raise ValidationError(f"model expects {params.config.n_vertices} vertices, mesh has {mesh.n_vertices}")


def encode_mean(params: ModelParams, mesh: TriMesh) -> np.ndarray:
    _check_input(params, mesh)
    return encode(params, mesh.vertices)[0]


def latent_interpolate(params: ModelParams, mesh_a: TriMesh, mesh_b: TriMesh, steps: int) -> list[TriMesh]:
    """Decodings of ``(1 - a) z_a + a z_b`` for ``a = k / (steps - 1)``."""
    if steps < 2:
        raise ValidationError(f"steps must be at least 2, got {steps}")
    za, zb = encode_mean(params, mesh_a), encode_mean(params, mesh_b)
    alphas = np.linspace(0.0, 1.0, steps)
    Z = (1.0 - alphas)[:, None] * za + alphas[:, None] * zb
    Z[0], Z[-1] = za, zb
    # one code at a time: batched matmuls may round differently from decode()
    return [TriMesh(decode(params, z), mesh_a.faces) for z in Z]


def latent_swap(params: ModelParams, mesh_i: TriMesh, mesh_j: TriMesh) -> TriMesh:
    """Intrinsic code of ``mesh_i`` with the extrinsic code of ``mesh_j``."""
    zi_int, _ = split_latent(encode_mean(params, mesh_i))
    _, zj_ext = split_latent(encode_mean(params, mesh_j))
    return TriMesh(decode(params, merge_latent(zi_int, zj_ext)), mesh_i.faces)


def latent_analogy(params: ModelParams, z_a, z_b, z_c, faces) -> TriMesh:
    """decode(z_a - z_b + z_c)."""
    z = np.asarray(z_a, float) - np.asarray(z_b, float) + np.asarray(z_c, float)
    return TriMesh(decode(params, z), _faces(params, faces))


# --- alignment ----------------------------------------------------------------------

@dataclass(frozen=True)
class RigidTransform:
    R: np.ndarray
    t: np.ndarray

    def apply(self, X) -> np.ndarray:
        return np.asarray(X) @ self.R + self.t


def procrustes(source, target) -> RigidTransform:
    """Orthogonal map (reflections allowed) plus translation taking ``source`` onto ``target``."""
    A, B = np.asarray(source, float), np.asarray(target, float)
    ca, cb = A.mean(axis=0), B.mean(axis=0)
    R, _ = orthogonal_procrustes(A - ca, B - cb)
    return RigidTransform(R, cb - ca @ R)


def aligned(source, target) -> np.ndarray:
    return procrustes(source, target).apply(source)


# --- shape completion ---------------------------------------------------------------

def chamfer_partial(partial, X) -> float:
    """Mean over ``partial`` of the squared distance to the nearest row of ``X``."""
    d2, _ = kernels.nearest_sq(partial, X)
    return float(d2.mean())


@dataclass
class CompletionResult:
    z: np.ndarray
    mesh: TriMesh
    objective: float
    restarts: list = field(default_factory=list)


def decoder_frame(params: ModelParams, records: Sequence[ShapeRecord]) -> RigidTransform:
    """One rigid transform taking decoder output onto the data frame (all training shapes jointly)."""
    Xs = np.stack([r.mesh.vertices for r in records])
    mu, _ = encode_many(params, Xs)
    Xd = decode_many(params, mu)
    return procrustes(Xd.reshape(-1, 3), Xs.reshape(-1, 3))


def complete_partial(params: ModelParams, partial_points, records: Sequence[ShapeRecord], iters: int = 300,
                     rng: np.random.Generator | None = None, restarts: int = 8, lr: float = 1e-2,
                     noise: float = 0.1) -> CompletionResult:
    """Search the latent space for a decoding whose vertices cover ``partial_points``.

    Points are expressed in the data frame; the decoder output is mapped into
    it by :func:`decoder_frame`. Restarts begin at the codes of the training
    shapes that fit the points best, perturbed by Gaussian noise.
    """
    P = np.asarray(partial_points, dtype=float).reshape(-1, 3)
    if P.shape[0] < 1 or not np.all(np.isfinite(P)):
        raise ValidationError("partial shape needs at least one finite point")
    rng = np.random.default_rng(0) if rng is None else rng
    frame = decoder_frame(params, records)
    Xs = np.stack([r.mesh.vertices for r in records])
    mu, _ = encode_many(params, Xs)
    recon = frame.apply(decode_many(params, mu))
    order = np.argsort([chamfer_partial(P, X) for X in recon], kind="stable")
    faces = records[0].mesh.faces

    model = _const_model(params)

    def objective(z_val):
        tape = ad.Tape()
        z = tape.leaf(z_val)
        X = ad.matmul(model.decode(z), frame.R) + frame.t
        _, idx = kernels.nearest_sq(P, X.value)
        diff = ad.take(X, idx) - P
        return z, ad.mean(ad.sum(ad.square(diff), axis=1))

    best = None
    history = []
    for r in range(restarts):
        start = mu[order[r % len(order)]]
        z = start + (noise * rng.standard_normal(start.shape) if r >= 1 else 0.0)
        state = AdamState()
        run_best = (np.inf, z)
        for _ in range(iters):
            zv, loss = objective(z)
            val = float(loss.value)
            if not np.isfinite(val):
                raise NumericalError("completion objective became non-finite")
            if val < run_best[0]:
                run_best = (val, z.copy())
            g = ad.backward(loss)[zv]
            new, state = adam_step({"z": z}, {"z": g}, state, lr)
            z = new["z"]
        val = float(objective(z)[1].value)
        if val < run_best[0]:
            run_best = (val, z.copy())
        history.append(run_best[0])
        if best is None or run_best[0] < best[0]:
            best = run_best
    X = frame.apply(decode(params, best[1]))
    return CompletionResult(best[1], TriMesh(X, faces), best[0], history)


# --- shape from metric ----------------------------------------------------------------

@dataclass
class FitResult:
    mesh: TriMesh
    objective: float  # best objective reached (the returned mesh)
    initial_objective: float
    history: list  # objective per iteration (before the update)


def metric_objective(X, faces, D_target, cfg: GeodesicConfig):
    D, backward = geodesic_block(X, faces, cfg)
    R = D - D_target
    n2 = R.size
    return float(np.sum(R * R) / n2), (lambda: backward(2.0 * R / n2))


def fit_to_metric(mesh_init: TriMesh, D_target: DistanceMatrix, iters: int = 1000, lr: float = 1e-3,
                  cfg: GeodesicConfig = GeodesicConfig()) -> FitResult:
    """Move vertices (Adam) so the heat-method geodesics approach ``D_target``.

    Objective: squared Frobenius norm of the difference divided by n^2. Returns
    the best iterate seen.
    """
    if D_target.values.shape != (mesh_init.n_vertices,) * 2:
        raise ValidationError(
            f"target is {D_target.values.shape}, mesh has {mesh_init.n_vertices} vertices"
        )
    if lr < 0:
        raise ValidationError(f"learning rate must be non-negative, got {lr}")
    target = D_target.values
    X = mesh_init.vertices.copy()
    faces = mesh_init.faces
    state = AdamState()
    history = []
    best_val, best_X = np.inf, X.copy()
    initial = None
    for _ in range(iters):
        val, grad_fn = metric_objective(X, faces, target, cfg)
        if not np.isfinite(val):
            raise NumericalError("shape-from-metric objective became non-finite")
        initial = val if initial is None else initial
        history.append(val)
        if val < best_val:
            best_val, best_X = val, X.copy()
        if lr == 0:
            continue
        new, state = adam_step({"X": X}, {"X": grad_fn()}, state, lr)
        X = new["X"]
    try:
        val, _ = metric_objective(X, faces, target, cfg)
    except NumericalError:
        val = np.inf
    if initial is None:
        initial = val
    if val < best_val:
        best_val, best_X = val, X
    return FitResult(TriMesh(best_X, faces), float(best_val), float(initial), history)


# --- evaluation -----------------------------------------------------------------------

@dataclass
class EvalReport:
    interpolation_error: float
    disentanglement_error: float
    interpolation_error_decoded: float  # against interpolated metrics of the decoded endpoints
    interpolation_pairs: list = field(default_factory=list)  # (i, j, error)
    disentanglement_pairs: list = field(default_factory=list)  # (i, j, error)


DEFAULT_ALPHAS = tuple(np.round(np.arange(1, 10) / 10.0, 10))


def _all_pairs(records):
    return [(i, j) for i in range(len(records)) for j in range(i + 1, len(records))]


def interpolation_errors(params: ModelParams, records: Sequence[ShapeRecord], alphas=DEFAULT_ALPHAS,
                         pairs=None, cfg: GeodesicConfig = GeodesicConfig()):
    """Per pair: mean over alphas and entries of ``|D_g(dec(z_a)) - D_a| / diameter``.

    ``D_a`` interpolates the input shapes' geodesic matrices (first value) or
    the decoded endpoints' (second value); the diameter is the mean of the two
    input diameters.
    """
    pairs = _all_pairs(records) if pairs is None else pairs
    faces = records[0].mesh.faces
    mu, _ = encode_many(params, np.stack([r.mesh.vertices for r in records]))
    alphas = np.asarray(alphas, dtype=float)
    dec_geo = {}

    def decoded_geo(i):
        if i not in dec_geo:
            dec_geo[i] = geodesic_block(decode(params, mu[i]), faces, cfg)[0]
        return dec_geo[i]

    out = []
    for i, j in pairs:
        diam = 0.5 * (shape_diameter(records[i].mesh) + shape_diameter(records[j].mesh))
        Z = (1.0 - alphas)[:, None] * mu[i] + alphas[:, None] * mu[j]
        gt_err, dec_err = [], []
        for a, X in zip(alphas, decode_many(params, Z)):
            D = geodesic_block(X, faces, cfg)[0]
            target = (1.0 - a) * records[i].D_geo.values + a * records[j].D_geo.values
            gt_err.append(np.abs(D - target).mean() / diam)
            target_dec = (1.0 - a) * decoded_geo(i) + a * decoded_geo(j)
            dec_err.append(np.abs(D - target_dec).mean() / diam)
        out.append((i, j, float(np.mean(gt_err)), float(np.mean(dec_err))))
    return out


def eval_interpolation_error(params: ModelParams, records: Sequence[ShapeRecord], alphas=DEFAULT_ALPHAS,
                             cfg: GeodesicConfig = GeodesicConfig()) -> float:
    errs = interpolation_errors(params, records, alphas, cfg=cfg)
    return float(np.mean([e[2] for e in errs]))


def disentanglement_errors(params: ModelParams, records: Sequence[ShapeRecord]):
    """Per (i, j): aligned mean vertex distance of dec(z_i^int | z_j^ext) to the
    ground-truth shape with i's subject and j's pose, over its diameter."""
    lookup = {(r.subject_id, r.pose_id): k for k, r in enumerate(records)}
    mu, _ = encode_many(params, np.stack([r.mesh.vertices for r in records]))
    out = []
    for i, ri in enumerate(records):
        zi_int, _ = split_latent(mu[i])
        for j, rj in enumerate(records):
            k = lookup.get((ri.subject_id, rj.pose_id))
            if k is None:
                continue
            _, zj_ext = split_latent(mu[j])
            X = decode(params, merge_latent(zi_int, zj_ext))
            gt = records[k].mesh.vertices
            err = np.linalg.norm(aligned(X, gt) - gt, axis=1).mean() / shape_diameter(records[k].mesh)
            out.append((i, j, float(err)))
    if not out:
        raise ValidationError("no (subject, pose) ground truth available for any swap")
    return out


def eval_disentanglement_error(params: ModelParams, records: Sequence[ShapeRecord]) -> float:
    return float(np.mean([e[2] for e in disentanglement_errors(params, records)]))


def evaluate(params: ModelParams, records: Sequence[ShapeRecord], alphas=DEFAULT_ALPHAS,
             cfg: GeodesicConfig = GeodesicConfig()) -> EvalReport:
    interp = interpolation_errors(params, records, alphas, cfg=cfg)
    dis = disentanglement_errors(params, records)
    return EvalReport(
        float(np.mean([e[2] for e in interp])),
        float(np.mean([e[2] for e in dis])),
        float(np.mean([e[3] for e in interp])),
        [(i, j, e) for i, j, e, _ in interp],
        dis,
    )


def reference_geodesics(mesh: TriMesh, cfg: GeodesicConfig = GeodesicConfig()) -> DistanceMatrix:
    return heat_distance_all(mesh, cfg)
