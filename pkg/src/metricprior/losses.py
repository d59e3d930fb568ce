"""Metric-preservation, disentanglement, reconstruction and KL losses.

Euclidean terms use the relative error ``sum (A - B)^2 / B_gt^2`` over entries
with a nonzero ground truth; geodesic terms use the squared Frobenius norm
divided by the number of matrix entries.

Models only need ``encode(X) -> (mu, logvar)`` and ``decode(z) -> (n, 3)``
on autodiff Vars (see :class:`metricprior.model.BoundModel`).
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .dataset import PairSample, ShapeRecord
from .errors import ValidationError
from .geodesics import DistanceMatrix, GeodesicConfig
from .model import merge_latent, reparameterize, split_latent

TAU = 1e-9


@dataclass(frozen=True)
class LossWeights:
    recon: float = 1.0
    interp_geo: float = 1.0
    interp_local: float = 1.0
    disent_int: float = 1.0
    disent_ext: float = 1.0


@dataclass(frozen=True)
class LossConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    beta: float = 1e-3
    geodesic: GeodesicConfig = field(default_factory=GeodesicConfig)
    landmarks: tuple | None = None  # vertex subset for geodesic terms; None = all pairs


@dataclass(frozen=True)
class LossBreakdown:
    recon: float = 0.0
    interp_geo: float = 0.0
    interp_local: float = 0.0
    disent_int: float = 0.0
    disent_ext: float = 0.0
    kl: float = 0.0
    total: float = 0.0

    def as_row(self) -> list[float]:
        return [getattr(self, f.name) for f in fields(self)]


COMPONENTS = [f.name for f in fields(LossBreakdown)]


def _values(D):
    if isinstance(D, DistanceMatrix):
        return D.values
    if isinstance(D, ad.Var):
        return D.value
    return np.asarray(D, dtype=float)


def euclid_dist_matrix(X) -> ad.Var:
    return ad.pairwise_dist(X)


def rel_dist_err(A_pred, A_gt, mask=None, denominator=None) -> ad.Var:
    """``sum_{ij} (A_pred - A_gt)^2 / G^2`` over entries where ``G > tau``.

    ``G`` is ``denominator`` if given, else ``A_gt``; ``tau = 1e-9 * max(G)``.
    ``A_gt`` may itself be a Var (then it is differentiated too). An optional
    boolean ``mask`` restricts the sum further.
    """
    pred = A_pred if isinstance(A_pred, ad.Var) else ad.Var(_values(A_pred))
    gt = A_gt if isinstance(A_gt, ad.Var) else ad.Var(_values(A_gt))
    G = _values(gt) if denominator is None else _values(denominator)
    if pred.shape != gt.shape or G.shape != pred.shape:
        raise ValidationError(f"distance matrices differ in shape: {pred.shape} vs {gt.shape} vs {G.shape}")
    return weighted_sq(pred, gt, relative_weights(G, mask))


def relative_weights(G, mask=None) -> np.ndarray:
    """``1 / G^2`` where ``G > 1e-9 * max(G)`` (and ``mask``), else 0."""
    G = _values(G)
    include = G > TAU * G.max(initial=0.0)
    if mask is not None:
        mask = np.asarray(getattr(mask, "entries", mask), dtype=bool)
        if mask.shape != G.shape:
            raise ValidationError(f"mask shape {mask.shape} does not match {G.shape}")
        include &= mask
    w = np.zeros_like(G)
    w[include] = 1.0 / G[include] ** 2
    return w


def weighted_sq(pred, gt, w) -> ad.Var:
    return ad.sum(ad.square(pred - gt) * w)


def frobenius_sq(A, B) -> ad.Var:
    """``||A - B||_F^2 / (number of entries)``."""
    A = A if isinstance(A, ad.Var) else ad.Var(_values(A))
    B = B if isinstance(B, ad.Var) else ad.Var(_values(B))
    if A.shape != B.shape:
        raise ValidationError(f"distance matrices differ in shape: {A.shape} vs {B.shape}")
    return ad.sum(ad.square(A - B)) * (1.0 / A.value.size)


def loss_recon(X_pred, X) -> ad.Var:
    X = _values(X)
    return rel_dist_err(euclid_dist_matrix(X_pred), euclid_dist_matrix(ad.Var(X)))


def loss_kl(mu, logvar, beta: float = 1.0) -> ad.Var:
    """``beta / 2 * sum(exp(logvar) + mu^2 - 1 - logvar)``."""
    mu = mu if isinstance(mu, ad.Var) else ad.Var(mu)
    logvar = logvar if isinstance(logvar, ad.Var) else ad.Var(logvar)
    return ad.sum(ad.exp(logvar) + ad.square(mu) - 1.0 - logvar) * (0.5 * beta)


class LossContext:
    """Per-step cache of codes, decodings and decoded geodesics.

    Each shape is encoded (and, with ``rng``, sampled) at most once per
    context, so every term of one step sees the same latent code for it.
    ``cache`` is an optional dict kept across steps for data-only constants.
    """

    def __init__(self, model, records: Sequence[ShapeRecord], cfg: LossConfig = LossConfig(), rng=None,
                 cache: dict | None = None):
        self.model = model
        self.records = records
        self.cfg = cfg
        self.rng = rng
        self.cache = {} if cache is None else cache
        self.faces = records[0].mesh.faces
        self.landmarks = None if cfg.landmarks is None else np.asarray(cfg.landmarks, dtype=np.int64)
        self._codes: dict = {}
        self._decoded: dict = {}
        self._geo: dict = {}

    def prepare(self, shapes: Sequence[int]) -> None:
        """Encode and decode ``shapes`` in one batched pass (when the model supports it)."""
        todo = [i for i in dict.fromkeys(shapes) if i not in self._codes]
        if not todo or not hasattr(self.model, "encode_batch"):
            return
        Xs = np.stack([self.records[i].mesh.vertices for i in todo])
        mu, logvar = self.model.encode_batch(Xs)
        z = reparameterize(mu, logvar, self.rng)
        Xd = self.model.decode_batch(z)
        for r, i in enumerate(todo):
            self._codes[i] = (mu[r], logvar[r], z[r])
            self._decoded[i] = Xd[r]

    def encoding(self, i: int):
        if i not in self._codes:
            mu, logvar = self.model.encode(ad.Var(self.records[i].mesh.vertices))
            self._codes[i] = (mu, logvar, reparameterize(mu, logvar, self.rng))
        return self._codes[i]

    def code(self, i: int):
        return self.encoding(i)[2]

    def decoded(self, i: int):
        if i not in self._decoded:
            self._decoded[i] = self.model.decode(self.code(i))
        return self._decoded[i]

    def recon_weights(self, i: int) -> np.ndarray:
        key = ("recon", i)
        if key not in self.cache:
            self.cache[key] = relative_weights(self.records[i].D_euclid.values)
        return self.cache[key]

    def geodesic(self, X) -> ad.Var:
        return ad.geodesic(X, self.faces, self.cfg.geodesic, self.landmarks)

    def decoded_geodesic(self, i: int) -> ad.Var:
        if i not in self._geo:
            self._geo[i] = self.geodesic(self.decoded(i))
        return self._geo[i]

    def gt_geodesic(self, i: int) -> np.ndarray:
        D = self.records[i].D_geo.values
        if self.landmarks is not None:
            D = D[np.ix_(self.landmarks, self.landmarks)]
        return D


def _mix(a, b, alpha):
    return a * (1.0 - alpha) + b * alpha


def loss_interp(pair: PairSample, ctx: LossContext) -> tuple[ad.Var, ad.Var]:
    """(geodesic, local-Euclidean) metric-interpolation terms for one pair.

    The decoded interpolation is compared with the same interpolation of the
    decoded endpoints' distance matrices. The local term uses the pairs that
    are neighbors on both input shapes, and normalizes by the interpolated
    input-shape distances.
    """
    pair.check(ctx.records)
    i, j, a = pair.i, pair.j, pair.alpha
    X_a = ctx.model.decode(_mix(ctx.code(i), ctx.code(j), a))

    geo = frobenius_sq(ctx.geodesic(X_a), _mix(ctx.decoded_geodesic(i), ctx.decoded_geodesic(j), a))

    ri, rj = ctx.records[i], ctx.records[j]
    target = _mix(euclid_dist_matrix(ctx.decoded(i)), euclid_dist_matrix(ctx.decoded(j)), a)
    denom = _mix(ri.D_euclid.values, rj.D_euclid.values, a)
    local = rel_dist_err(euclid_dist_matrix(X_a), target, mask=ri.mask.entries & rj.mask.entries,
                         denominator=denom)
    return geo, local


def loss_disent_int(pair: PairSample, ctx: LossContext) -> ad.Var:
    """Interpolating the intrinsic code of an isometric pair keeps X_i's Euclidean metric."""
    if pair.kind != "isometric":
        raise ValidationError(f"intrinsic disentanglement needs an isometric pair, got kind={pair.kind}")
    pair.check(ctx.records)
    zi_int, zi_ext = split_latent(ctx.code(pair.i))
    zj_int, _ = split_latent(ctx.code(pair.j))
    X = ctx.model.decode(merge_latent(_mix(zi_int, zj_int, pair.alpha), zi_ext))
    return rel_dist_err(euclid_dist_matrix(X), ctx.records[pair.i].D_euclid)


def loss_disent_ext(pair: PairSample, ctx: LossContext) -> ad.Var:
    """Interpolating the extrinsic code of a non-isometric pair keeps X_i's geodesics."""
    if pair.kind != "non_isometric":
        raise ValidationError(f"extrinsic disentanglement needs a non-isometric pair, got kind={pair.kind}")
    pair.check(ctx.records)
    zi_int, zi_ext = split_latent(ctx.code(pair.i))
    _, zj_ext = split_latent(ctx.code(pair.j))
    X = ctx.model.decode(merge_latent(zi_int, _mix(zi_ext, zj_ext, pair.alpha)))
    return frobenius_sq(ctx.geodesic(X), ctx.gt_geodesic(pair.i))


def loss_total(pairs: Sequence[PairSample], ctx: LossContext, stage: str = "full",
               shapes: Sequence[int] | None = None) -> tuple[LossBreakdown, ad.Var]:
    """Weighted sum of all terms. ``stage='warmup'`` keeps reconstruction and KL only.

    Reconstruction and KL are summed over ``shapes`` (default: every record);
    pair terms over ``pairs`` by kind (``any`` pairs feed the interpolation
    terms, ``isometric`` the intrinsic term, ``non_isometric`` the extrinsic one).
    """
    if stage not in ("warmup", "full"):
        raise ValidationError(f"stage must be 'warmup' or 'full', got {stage!r}")
    w = ctx.cfg.weights
    shapes = range(len(ctx.records)) if shapes is None else shapes
    zero = ad.Var(0.0)
    recon, kl = zero, zero
    ctx.prepare(list(shapes) + [k for p in pairs for k in (p.i, p.j)] if stage == "full" else list(shapes))
    for i in shapes:
        mu, logvar, _ = ctx.encoding(i)
        D = euclid_dist_matrix(ctx.decoded(i))
        recon = recon + weighted_sq(D, ctx.records[i].D_euclid.values, ctx.recon_weights(i))
        kl = kl + loss_kl(mu, logvar, ctx.cfg.beta)
    terms = {"recon": recon, "interp_geo": zero, "interp_local": zero,
             "disent_int": zero, "disent_ext": zero, "kl": kl}
    if stage == "full":
        for pair in pairs:
            if pair.kind == "any":
                geo, local = loss_interp(pair, ctx)
                terms["interp_geo"] = terms["interp_geo"] + geo
                terms["interp_local"] = terms["interp_local"] + local
            elif pair.kind == "isometric":
                terms["disent_int"] = terms["disent_int"] + loss_disent_int(pair, ctx)
            else:
                terms["disent_ext"] = terms["disent_ext"] + loss_disent_ext(pair, ctx)
    total = (terms["recon"] * w.recon + terms["interp_geo"] * w.interp_geo
             + terms["interp_local"] * w.interp_local + terms["disent_int"] * w.disent_int
             + terms["disent_ext"] * w.disent_ext + terms["kl"])
    breakdown = LossBreakdown(**{k: float(v.value) for k, v in terms.items()}, total=float(total.value))
    return breakdown, total
