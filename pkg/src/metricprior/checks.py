"""Standing gradient suites: analytic gradients against central differences.

Each check returns a :class:`CheckResult`; ``run_suite`` runs all of them
for a list of seeds. Meshes stay under 50 vertices so finite differences
over every coordinate remain cheap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .dataset import PairSample, gen_synthetic_family
from .geodesics import GeodesicConfig, heat_distance_all, heat_distance_vjp
from .losses import LossConfig, LossContext, loss_disent_ext, loss_disent_int, loss_interp, loss_kl, loss_recon
from .mesh import grid_mesh, icosphere

TOLERANCE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    seed: int
    deviation: float
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance


def _jittered_sphere(seed):
    mesh = icosphere(1)  # 42 vertices
    rng = np.random.default_rng(seed)
    return mesh.with_vertices(mesh.vertices * (1.0 + 0.1 * rng.uniform(-1, 1, (mesh.n_vertices, 1))))


def _jittered_grid(seed):
    mesh = grid_mesh(6)  # 36 vertices, with boundary
    rng = np.random.default_rng(seed)
    X = mesh.vertices.copy()
    X[:, 2] += 0.05 * rng.standard_normal(mesh.n_vertices)
    return mesh.with_vertices(X)


def check_heat_vjp(seed: int, mesh=None, step: float = 1e-6) -> float:
    """heat_distance_vjp against central differences of <W, D(X)>."""
    mesh = _jittered_sphere(seed) if mesh is None else mesh
    cfg = GeodesicConfig()
    rng = np.random.default_rng(seed + 1000)
    W = rng.standard_normal((mesh.n_vertices, mesh.n_vertices))
    analytic = heat_distance_vjp(mesh, cfg, W)
    numeric = np.zeros_like(analytic)
    X = mesh.vertices
    for idx in np.ndindex(X.shape):
        Xp, Xm = X.copy(), X.copy()
        Xp[idx] += step
        Xm[idx] -= step
        fp = np.sum(W * heat_distance_all(mesh.with_vertices(Xp), cfg).values)
        fm = np.sum(W * heat_distance_all(mesh.with_vertices(Xm), cfg).values)
        numeric[idx] = (fp - fm) / (2 * step)
    return ad.relative_deviation(analytic, numeric)


def check_geodesic_landmarks(seed: int) -> float:
    mesh = _jittered_grid(seed)
    rng = np.random.default_rng(seed + 2000)
    landmarks = np.sort(rng.choice(mesh.n_vertices, 8, replace=False))
    W = rng.standard_normal((8, 8))
    rep = ad.grad_check(lambda X: ad.sum(ad.geodesic(X, mesh.faces, GeodesicConfig(), landmarks) * W),
                        [mesh.vertices], step=1e-6)
    return rep.max_deviation


class _LinearModel:
    """encode: per-shape code looked up from a leaf table; decode: z @ W + b."""

    def __init__(self, records, Z, W, b):
        self.records, self.Z, self.W, self.b = records, Z, W, b
        self.n = records[0].n

    def encode(self, X):
        X = X.value if isinstance(X, ad.Var) else np.asarray(X)
        for k, r in enumerate(self.records):
            if np.array_equal(r.mesh.vertices, X):
                d = self.Z.shape[1]
                mu = ad.reshape(ad.take(self.Z, np.array([k])), (d,))
                return mu, mu * 0.1 - 1.0
        raise KeyError("unknown shape")

    def decode(self, z):
        row = ad.reshape(z, (1, z.shape[0])) @ self.W
        return ad.reshape(row, (self.n, 3)) + self.b


_FAMILY = {}


def _small_family():
    if "recs" not in _FAMILY:
        # 2 subjects x 2 poses of a coarse tube: 34 vertices
        _FAMILY["recs"] = gen_synthetic_family(2, 2, resolution=4, seed=0, isometry_ratio=None)
    return _FAMILY["recs"]


def _loss_leaves(seed, records, d=4):
    rng = np.random.default_rng(seed + 3000)
    n = records[0].n
    # W maps codes onto the span of the data; Z reconstructs each record approximately
    base = np.stack([r.mesh.vertices.reshape(-1) for r in records])
    W = base[:d] if len(records) >= d else np.vstack([base, rng.standard_normal((d - len(records), 3 * n))])
    Z = np.eye(len(records), d) + 0.05 * rng.standard_normal((len(records), d))
    b = 0.01 * rng.standard_normal((n, 3))
    return Z, W, b


def check_loss_term(name: str, seed: int) -> float:
    records = _small_family()
    Z0, W, b0 = _loss_leaves(seed, records)
    rng = np.random.default_rng(seed + 4000)
    alpha = float(rng.uniform(0.2, 0.8))
    pairs = {
        "interp_geo": PairSample(0, 2, alpha, "any"),
        "interp_local": PairSample(1, 2, alpha, "any"),
        "disent_int": PairSample(0, 1, alpha, "isometric"),
        "disent_ext": PairSample(1, 3, alpha, "non_isometric"),
    }

    def f(Z, b):
        ctx = LossContext(_LinearModel(records, Z, W, b), records, LossConfig())
        if name == "recon":
            return loss_recon(ctx.decoded(2), records[2].mesh.vertices)
        if name == "kl":
            mu, logvar, _ = ctx.encoding(1)
            return loss_kl(mu, logvar, 0.5)
        pair = pairs[name]
        if name in ("interp_geo", "interp_local"):
            geo, local = loss_interp(pair, ctx)
            return geo if name == "interp_geo" else local
        if name == "disent_int":
            return loss_disent_int(pair, ctx)
        return loss_disent_ext(pair, ctx)

    return ad.grad_check(f, [Z0, b0], step=1e-6).max_deviation


LOSS_TERMS = ("recon", "kl", "interp_geo", "interp_local", "disent_int", "disent_ext")


def run_suite(seeds=range(5)) -> list[CheckResult]:
    results = []
    for seed in seeds:
        results.append(CheckResult("heat_distance_vjp", seed, check_heat_vjp(seed)))
        results.append(CheckResult("heat_distance_vjp_open", seed, check_heat_vjp(seed, _jittered_grid(seed))))
        results.append(CheckResult("geodesic_landmarks", seed, check_geodesic_landmarks(seed)))
        for term in LOSS_TERMS:
            results.append(CheckResult(f"loss_{term}", seed, check_loss_term(term, seed)))
    return results
