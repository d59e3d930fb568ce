"""Adam, config files and the staged training loop.

Training runs ``warmup_iters`` steps of reconstruction + KL, then adds the
interpolation and disentanglement terms until ``total_iters``. One step is
one batch of freshly sampled pairs; the whole run is a deterministic function
of the dataset and ``seed``.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .dataset import (  # noqa: F401 - re-exported
    PairSample,
    ShapeRecord,
    check_corresponded,
    gen_synthetic_family,
    sample_pair,
)
from .errors import NumericalError, ValidationError
from .geodesics import GeodesicConfig
from .losses import COMPONENTS, LossBreakdown, LossConfig, LossContext, LossWeights, loss_total
from .model import ModelConfig, ModelParams, init_params, save_checkpoint

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    warmup_iters: int = 1000
    total_iters: int = 6000
    mode: str = "full"  # or "recon_only": the warmup objective for the whole run
    batch_any: int = 4
    batch_iso: int = 2
    batch_non_iso: int = 2
    latent_dim: int = 32
    point_layers: tuple = (64, 64, 128)
    head_layers: tuple = (64, 64)
    decoder_layers: tuple = (64, 128)
    w_recon: float = 1.0
    w_interp_geo: float = 1.0
    w_interp_local: float = 1.0
    w_disent_int: float = 1.0
    w_disent_ext: float = 1.0
    beta: float = 1e-3
    geodesic_t: float = 0.1
    landmarks: int = 0  # 0 = all vertex pairs in geodesic terms
    stochastic: bool = True  # sample z during training; False decodes means
    seed: int = 0
    checkpoint_every: int = 1000

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.mode not in ("full", "recon_only"):
            raise ValidationError(f"mode must be 'full' or 'recon_only', got {self.mode!r}")
        if self.total_iters < 1 or self.warmup_iters < 0:
            raise ValidationError("iteration counts must be positive")
        if self.mode == "full" and not self.warmup_iters < self.total_iters:
            raise ValidationError(
                f"warmup_iters ({self.warmup_iters}) must be smaller than total_iters ({self.total_iters})"
            )
        if min(self.batch_any, self.batch_iso, self.batch_non_iso, self.landmarks) < 0:
            raise ValidationError("batch sizes and landmark count must be non-negative")

    def model_config(self, n_vertices: int) -> ModelConfig:
        return ModelConfig(n_vertices, self.latent_dim, tuple(self.point_layers), tuple(self.head_layers),
                           tuple(self.decoder_layers))

    def loss_config(self, landmarks=None) -> LossConfig:
        weights = LossWeights(self.w_recon, self.w_interp_geo, self.w_interp_local, self.w_disent_int,
                              self.w_disent_ext)
        return LossConfig(weights, self.beta, GeodesicConfig(t=self.geodesic_t),
                          None if landmarks is None else tuple(int(i) for i in landmarks))


def _parse_value(raw: str, kind):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(raw)
    if kind is tuple:
        return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
    return kind(raw)


def parse_config(text: str, base: TrainConfig = TrainConfig()) -> TrainConfig:
    """``key = value`` lines, ``#`` comments; unknown keys are errors."""
    types = {f.name: type(getattr(base, f.name)) for f in dataclasses.fields(TrainConfig)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        try:
            updates[key] = _parse_value(value, types[key])
        except ValueError:
            raise ValidationError(f"config line {lineno}: bad value {value!r} for {key}") from None
    return dataclasses.replace(base, **updates)


def load_config(path, base: TrainConfig = TrainConfig()) -> TrainConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), base)


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


# --- Adam ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update; returns new params and state."""
    t = state.step + 1
    new_params, m_new, v_new = {}, {}, {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ValidationError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        m = beta1 * state.m.get(name, np.zeros_like(p)) + (1.0 - beta1) * g
        v = beta2 * state.v.get(name, np.zeros_like(p)) + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_new[name], v_new[name] = m, v
    return new_params, AdamState(m_new, v_new, t)


# --- training -----------------------------------------------------------------------

def farthest_point_indices(X: np.ndarray, k: int) -> np.ndarray:
    """Greedy farthest-point subset of ``k`` rows, starting from row 0."""
    X = np.asarray(X, dtype=float)
    k = min(int(k), X.shape[0])
    chosen = [0]
    d = np.linalg.norm(X - X[0], axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, np.linalg.norm(X - X[nxt], axis=1))
    return np.sort(np.array(chosen, dtype=np.int64))


@dataclass
class TrainResult:
    params: ModelParams
    trace: list  # (iteration, LossBreakdown)
    config: TrainConfig


def sample_batch(records, cfg: TrainConfig, rng) -> list[PairSample]:
    batch = [sample_pair(records, rng, "any") for _ in range(cfg.batch_any)]
    subjects = {r.subject_id for r in records}
    has_iso = any(sum(r.subject_id == s for r in records) > 1 for s in subjects)
    if has_iso:
        batch += [sample_pair(records, rng, "isometric") for _ in range(cfg.batch_iso)]
    if len(subjects) > 1:
        batch += [sample_pair(records, rng, "non_isometric") for _ in range(cfg.batch_non_iso)]
    return batch


def write_trace(path, trace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", *[c for c in COMPONENTS]])
        for it, b in trace:
            w.writerow([it, *(repr(x) for x in b.as_row())])


def train(records: Sequence[ShapeRecord], cfg: TrainConfig, out_dir=None,
          init: ModelParams | None = None) -> TrainResult:
    """Run the staged optimization; writes ``trace.csv`` and checkpoints to ``out_dir``.

    A non-finite loss or parameter (or a numerical failure in the geodesic
    solver) aborts with :class:`NumericalError` after saving the last good
    parameters as ``last_good.ckpt``.
    """
    check_corresponded(records)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    n = records[0].n
    params = init.copy() if init is not None else init_params(cfg.model_config(n), cfg.seed)
    if params.config.n_vertices != n:
        raise ValidationError(f"model decodes {params.config.n_vertices} vertices, data has {n}")
    landmarks = farthest_point_indices(records[0].mesh.vertices, cfg.landmarks) if cfg.landmarks else None
    loss_cfg = cfg.loss_config(landmarks)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    trace = []
    cache: dict = {}

    def abort(it, reason):
        if out is not None:
            save_checkpoint(params, out / "last_good.ckpt")
            write_trace(out / "trace.csv", trace)
        raise NumericalError(f"training diverged at iteration {it}: {reason}")

    for it in range(1, cfg.total_iters + 1):
        stage = "full" if cfg.mode == "full" and it > cfg.warmup_iters else "warmup"
        pairs = sample_batch(records, cfg, rng) if stage == "full" else []
        tape = ad.Tape()
        bound = params.bind(tape)
        ctx = LossContext(bound, records, loss_cfg, rng if cfg.stochastic else None, cache)
        with np.errstate(over="ignore", invalid="ignore"):  # non-finite values are caught below
            try:
                breakdown, total = loss_total(pairs, ctx, stage)
            except NumericalError as exc:
                abort(it, str(exc))
            if not np.isfinite(breakdown.total):
                abort(it, "non-finite loss")
            grads = ad.backward(total)
        named = {name: ad.grad_of(grads, var) for name, var in bound.params.items()}
        if not all(np.all(np.isfinite(g)) for g in named.values()):
            abort(it, "non-finite gradient")
        new_tensors, state = adam_step(params.tensors, named, state, cfg.learning_rate)
        candidate = ModelParams(params.config, new_tensors)
        if not candidate.all_finite():
            abort(it, "non-finite parameters")
        params = candidate
        trace.append((it, breakdown))
        if it % 100 == 0 or it == 1:
            log.info("iter %d %s total=%.6g", it, stage, breakdown.total)
        if out is not None and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            save_checkpoint(params, out / "checkpoint.ckpt")
    if out is not None:
        save_checkpoint(params, out / "checkpoint.ckpt")
        write_trace(out / "trace.csv", trace)
        (out / "train.cfg").write_text(format_config(cfg), encoding="utf-8")
    return TrainResult(params, trace, cfg)
