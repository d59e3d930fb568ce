"""Point-cloud VAE: shared per-point MLP + max-pool encoder, MLP decoder.

The latent code ``z`` (length d) splits into an intrinsic part (first
``d - d // 4`` entries, shape identity) and an extrinsic part (last ``d // 4``
entries, pose).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import NumericalError, ValidationError

MAGIC = b"LIMPCKPT1"


@dataclass(frozen=True)
class ModelConfig:
    n_vertices: int
    latent_dim: int = 32
    point_layers: tuple = (64, 64, 128)
    head_layers: tuple = (64, 64)
    decoder_layers: tuple = (64, 128)

    def __post_init__(self):
        sizes = [self.n_vertices, self.latent_dim, *self.point_layers, *self.head_layers, *self.decoder_layers]
        if any(int(s) < 1 for s in sizes):
            raise ValidationError(f"layer sizes must be positive, got {sizes}")
        if not self.point_layers:
            raise ValidationError("encoder needs at least one per-point layer")
        if self.latent_dim < 2:
            raise ValidationError("latent_dim must be at least 2")

    @property
    def split_index(self) -> int:
        return latent_split(self.latent_dim)

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []

        def dense(prefix, sizes):
            for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
                shapes.append((f"{prefix}{k}.W", (a, b)))
                shapes.append((f"{prefix}{k}.b", (b,)))

        dense("enc.point", [3, *self.point_layers])
        dense("enc.head", [self.point_layers[-1], *self.head_layers, 2 * self.latent_dim])
        dense("dec.", [self.latent_dim, *self.decoder_layers, 3 * self.n_vertices])
        return shapes


def latent_split(d: int) -> int:
    """Index where the extrinsic block starts: 25% of the code (rounded down) is extrinsic."""
    return d - d // 4


@dataclass(eq=False)
class ModelParams:
    config: ModelConfig
    tensors: dict = field(default_factory=dict)  # name -> ndarray, in layer order

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def names(self) -> list[str]:
        return list(self.tensors)

    def bind(self, tape: ad.Tape, requires_grad: bool = True) -> "BoundModel":
        return BoundModel(self.config, {k: tape.leaf(v, requires_grad) for k, v in self.tensors.items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.tensors.values())


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Uniform weights in +-sqrt(3 / fan_in) (unit-variance preserving), zero biases."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in config.layer_shapes():
        if name.endswith(".W"):
            limit = np.sqrt(3.0 / shape[0])
            tensors[name] = rng.uniform(-limit, limit, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    return ModelParams(config, tensors)


def _layers(p: dict, prefix: str) -> list:
    out, k = [], 0
    while f"{prefix}{k}.W" in p:
        out.append((p[f"{prefix}{k}.W"], p[f"{prefix}{k}.b"]))
        k += 1
    return out


def _mlp(h, layers, last_linear: bool):
    for k, (W, b) in enumerate(layers):
        h = h @ W + b
        if not (last_linear and k == len(layers) - 1):
            h = ad.elu(h)
    return h


class BoundModel:
    """Parameters as Vars on a tape; differentiable encode/decode."""

    def __init__(self, config: ModelConfig, params: dict):
        self.config = config
        self.params = params

    def encode_batch(self, Xs):
        """Encode S shapes of equal size at once: (S, n, 3) -> mu, logvar of shape (S, d)."""
        Xs = Xs if isinstance(Xs, ad.Var) else ad.Var(np.asarray(Xs, dtype=float))
        if Xs.ndim != 3 or Xs.shape[2] != 3:
            raise ValidationError(f"encoder input must be (S, n, 3), got {Xs.shape}")
        if not np.all(np.isfinite(Xs.value)):
            raise NumericalError("encoder input has non-finite values")
        S, n, _ = Xs.shape
        h = _mlp(ad.reshape(Xs, (S * n, 3)), _layers(self.params, "enc.point"), last_linear=False)
        pooled = ad.max_reduce(ad.reshape(h, (S, n, -1)), axis=1)
        out = _mlp(pooled, _layers(self.params, "enc.head"), last_linear=True)
        d = self.config.latent_dim
        mu, logvar = ad.split(out, [d, d], axis=1)
        return mu, logvar

    def encode(self, X):
        X = X if isinstance(X, ad.Var) else ad.Var(X)
        if X.ndim != 2 or X.shape[1] != 3:
            raise ValidationError(f"encoder input must be (n, 3), got {X.shape}")
        mu, logvar = self.encode_batch(ad.reshape(X, (1, *X.shape)))
        return ad.reshape(mu, (-1,)), ad.reshape(logvar, (-1,))

    def decode_batch(self, Z):
        """(S, d) codes -> (S, n, 3) vertex positions."""
        Z = Z if isinstance(Z, ad.Var) else ad.Var(np.asarray(Z, dtype=float))
        d = self.config.latent_dim
        if Z.ndim != 2 or Z.shape[1] != d:
            raise ValidationError(f"latent codes must have shape (S, {d}), got {Z.shape}")
        out = _mlp(Z, _layers(self.params, "dec."), last_linear=True)
        return ad.reshape(out, (Z.shape[0], self.config.n_vertices, 3))

    def decode(self, z):
        z = z if isinstance(z, ad.Var) else ad.Var(z)
        d = self.config.latent_dim
        if z.shape != (d,):
            raise ValidationError(f"latent code must have shape ({d},), got {z.shape}")
        return ad.reshape(self.decode_batch(ad.reshape(z, (1, d))), (self.config.n_vertices, 3))


# --- numpy-level convenience ------------------------------------------------------

def _const_model(params: ModelParams) -> BoundModel:
    return BoundModel(params.config, {k: ad.Var(v) for k, v in params.tensors.items()})


def encode(params: ModelParams, X) -> tuple[np.ndarray, np.ndarray]:
    mu, logvar = _const_model(params).encode(np.asarray(X, dtype=float))
    return mu.value, logvar.value


def decode(params: ModelParams, z) -> np.ndarray:
    return _const_model(params).decode(np.asarray(z, dtype=float)).value


def encode_many(params: ModelParams, Xs) -> tuple[np.ndarray, np.ndarray]:
    mu, logvar = _const_model(params).encode_batch(np.asarray(Xs, dtype=float))
    return mu.value, logvar.value


def decode_many(params: ModelParams, Z) -> np.ndarray:
    return _const_model(params).decode_batch(np.asarray(Z, dtype=float)).value


def reparameterize(mu, logvar, rng: np.random.Generator | None = None):
    """``mu + exp(logvar / 2) * eta``; with ``rng=None`` returns ``mu`` (evaluation mode).

    Works on arrays or Vars.
    """
    if rng is None:
        return mu
    eta = rng.standard_normal(mu.shape)
    if isinstance(mu, ad.Var) or isinstance(logvar, ad.Var):
        return mu + ad.exp(logvar * 0.5) * eta
    return np.asarray(mu) + np.exp(0.5 * np.asarray(logvar)) * eta


def split_latent(z):
    d = z.shape[0]
    s = latent_split(d)
    if isinstance(z, ad.Var):
        zi, ze = ad.split(z, [s, d - s])
        return zi, ze
    z = np.asarray(z)
    if z.ndim != 1:
        raise ValidationError(f"latent code must be 1-d, got shape {z.shape}")
    return z[:s].copy(), z[s:].copy()


def merge_latent(z_int, z_ext):
    d = z_int.shape[0] + z_ext.shape[0]
    if z_int.shape[0] != latent_split(d):
        raise ValidationError(
            f"intrinsic/extrinsic sizes {z_int.shape[0]}/{z_ext.shape[0]} do not match the split for d={d}"
        )
    if isinstance(z_int, ad.Var) or isinstance(z_ext, ad.Var):
        return ad.concat([z_int, z_ext])
    return np.concatenate([np.asarray(z_int), np.asarray(z_ext)])


# --- checkpoints ------------------------------------------------------------------

def save_checkpoint(params: ModelParams, path) -> None:
    """Binary checkpoint: magic, uint32 tensor count, then per tensor a uint32 name
    length, UTF-8 name, uint32 rank, uint64 dims and little-endian float64 values."""
    chunks = [MAGIC, struct.pack("<I", len(params.tensors))]
    for name, value in params.tensors.items():
        raw = name.encode("utf-8")
        value = np.ascontiguousarray(value, dtype="<f8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack("<I", value.ndim) + struct.pack(f"<{value.ndim}Q", *value.shape))
        chunks.append(value.tobytes())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


def _config_from_shapes(shapes: dict) -> ModelConfig:
    def widths(prefix):
        out, k = [], 0
        while f"{prefix}{k}.W" in shapes:
            out.append(shapes[f"{prefix}{k}.W"][1])
            k += 1
        return out

    try:
        point = widths("enc.point")
        head = widths("enc.head")
        dec = widths("dec.")
        d = shapes["dec.0.W"][0]
        cfg = ModelConfig(n_vertices=dec[-1] // 3, latent_dim=d, point_layers=tuple(point),
                          head_layers=tuple(head[:-1]), decoder_layers=tuple(dec[:-1]))
    except (KeyError, IndexError):
        raise ValidationError("checkpoint does not describe a complete model") from None
    if dict(cfg.layer_shapes()) != shapes:
        raise ValidationError("checkpoint tensor shapes are inconsistent with the model layout")
    return cfg


def load_checkpoint(path) -> ModelParams:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValidationError(f"{path}: not a model checkpoint (bad magic)")
    pos = len(MAGIC)

    def read(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise ValidationError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    (count,) = read("<I")
    tensors = {}
    for _ in range(count):
        (length,) = read("<I")
        name = bytes(read(f"<{length}s")[0]).decode("utf-8")
        (rank,) = read("<I")
        dims = read(f"<{rank}Q")
        size = int(np.prod(dims)) if rank else 1
        if pos + 8 * size > len(data):
            raise ValidationError(f"{path}: truncated checkpoint")
        tensors[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(dims).astype(np.float64)
        pos += 8 * size
    if pos != len(data):
        raise ValidationError(f"{path}: trailing bytes after the last tensor")
    config = _config_from_shapes({k: v.shape for k, v in tensors.items()})
    ordered = {name: tensors[name] for name, _ in config.layer_shapes()}
    return ModelParams(config, ordered)
