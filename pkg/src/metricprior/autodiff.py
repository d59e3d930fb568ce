"""Small define-by-run reverse-mode autodiff over numpy arrays.

A :class:`Tape` records every operation whose inputs require gradients, in
creation order; :func:`backward` walks it once in reverse. Values are float64
arrays of any rank; binary ops broadcast like numpy and their adjoints are
summed back to the operand shapes.

    tape = Tape()
    x = tape.leaf(np.ones(3))
    loss = ad.sum(x * x)
    grads = backward(loss)      # grads[x] == 2 * x.value
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import NumericalError, ValidationError
from .linalg import factor_lu


class Var:
    __slots__ = ("value", "tape", "id", "requires_grad", "grad")
    __array_priority__ = 100  # make ndarray <op> Var dispatch to Var

    def __init__(self, value, tape: "Tape | None" = None, requires_grad: bool = False, node_id: int = -1):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self.requires_grad = requires_grad
        self.id = node_id
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.shape}, requires_grad={self.requires_grad})"

    # numpy-style sugar
    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __matmul__(self, o): return matmul(self, o)
    def __rmatmul__(self, o): return matmul(o, self)
    def __neg__(self): return mul(self, -1.0)
    def __getitem__(self, idx): return take(self, idx)

    @property
    def T(self):
        return transpose(self)


@dataclass(eq=False)
class _Node:
    out: Var
    op: str
    parents: tuple
    vjp: Callable


@dataclass(eq=False)
class Tape:
    nodes: list = field(default_factory=list)
    _next_id: int = 0

    def _new_id(self) -> int:
        self._next_id += 1
        return self._next_id - 1

    def leaf(self, value, requires_grad: bool = True) -> Var:
        v = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise NumericalError("leaf value contains non-finite entries")
        return Var(v, self, requires_grad, self._new_id())

    def const(self, value) -> Var:
        return self.leaf(value, requires_grad=False)


def _as_var(x, tape=None) -> Var:
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=np.float64), tape, False)


def _tape_of(*vs) -> Tape | None:
    tape = None
    for v in vs:  # constants may come from any tape
        if isinstance(v, Var) and v.tape is not None and v.requires_grad:
            if tape is None:
                tape = v.tape
            elif v.tape is not tape:
                raise ValidationError("operands belong to different tapes")
    return tape


def _record(op: str, value, parents: Sequence[Var], vjp) -> Var:
    tape = _tape_of(*parents)
    needs = any(p.requires_grad for p in parents)
    if tape is None or not needs:
        return Var(value, tape, False)
    out = Var(value, tape, True, tape._new_id())
    tape.nodes.append(_Node(out, op, tuple(parents), vjp))
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(op, a: Var, b: Var):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValidationError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# --- elementwise binary -------------------------------------------------------

def add(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    _broadcast_shape("add", a, b)
    return _record("add", a.value + b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    _broadcast_shape("sub", a, b)
    return _record("sub", a.value - b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    _broadcast_shape("mul", a, b)
    av, bv = a.value, b.value
    return _record("mul", av * bv, (a, b),
                   lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def div(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    _broadcast_shape("div", a, b)
    av, bv = a.value, b.value
    out = av / bv
    return _record("div", out, (a, b),
                   lambda g: (_unbroadcast(g / bv, a.shape), _unbroadcast(-g * out / bv, b.shape)))


# --- linear algebra and shape ops -------------------------------------------

def matmul(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValidationError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value
    return _record("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a) -> Var:
    a = _as_var(a)
    return _record("transpose", a.value.T, (a,), lambda g: (g.T,))


def reshape(a, shape) -> Var:
    a = _as_var(a)
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ValidationError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return _record("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def concat(vs: Sequence, axis: int = 0) -> Var:
    vs = [_as_var(v) for v in vs]
    try:
        out = np.concatenate([v.value for v in vs], axis=axis)
    except ValueError:
        raise ValidationError(f"concat: incompatible shapes {[v.shape for v in vs]} along axis {axis}") from None
    cuts = np.cumsum([v.shape[axis] for v in vs])[:-1]
    return _record("concat", out, vs, lambda g: tuple(np.split(g, cuts, axis=axis)))


def split(a, sizes: Sequence[int], axis: int = 0) -> list[Var]:
    a = _as_var(a)
    if int(np.sum(sizes)) != a.shape[axis]:
        raise ValidationError(f"split: sizes {list(sizes)} do not add up to {a.shape[axis]} (shape {a.shape})")
    out, start = [], 0
    for s in sizes:
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(start, start + s)
        out.append(take(a, tuple(idx)))
        start += s
    return out


def take(a, idx) -> Var:
    """Basic or advanced indexing ``a[idx]``; repeated indices accumulate."""
    a = _as_var(a)
    out = a.value[idx]

    def vjp(g):
        full = np.zeros(a.shape)
        np.add.at(full, idx, g)
        return (full,)

    return _record("take", out, (a,), vjp)


def masked_select(a, mask) -> Var:
    a = _as_var(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ValidationError(f"masked_select: mask shape {mask.shape} does not match {a.shape}")

    def vjp(g):
        full = np.zeros(a.shape)
        full[mask] = g
        return (full,)

    return _record("masked_select", a.value[mask], (a,), vjp)


# --- reductions -----------------------------------------------------------------

def sum(a, axis=None) -> Var:  # noqa: A001 - mirrors numpy
    a = _as_var(a)
    out = a.value.sum(axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record("sum", out, (a,), vjp)


def mean(a, axis=None) -> Var:
    a = _as_var(a)
    count = a.value.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / count)


def max_reduce(a, axis: int = 0) -> Var:
    """Max along ``axis``; the gradient goes to the first maximal entry only."""
    a = _as_var(a)
    arg = np.argmax(a.value, axis=axis)  # first occurrence on ties
    out = np.take_along_axis(a.value, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def vjp(g):
        full = np.zeros(a.shape)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _record("max", out, (a,), vjp)


# --- elementwise unary ------------------------------------------------------------

def elu(a, alpha: float = 1.0) -> Var:
    a = _as_var(a)
    x = a.value
    neg = alpha * np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0, x, neg)
    return _record("elu", out, (a,), lambda g: (g * np.where(x > 0, 1.0, neg + alpha),))


def tanh(a) -> Var:
    a = _as_var(a)
    out = np.tanh(a.value)
    return _record("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a) -> Var:
    a = _as_var(a)
    out = np.exp(a.value)
    return _record("exp", out, (a,), lambda g: (g * out,))


def square(a) -> Var:
    a = _as_var(a)
    x = a.value
    return _record("square", x * x, (a,), lambda g: (2.0 * g * x,))


def sqrt(a) -> Var:
    """Square root; the derivative at exactly 0 is taken as 0."""
    a = _as_var(a)
    out = np.sqrt(a.value)

    def vjp(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(out > 0, 0.5 / out, 0.0)
        return (g * d,)

    return _record("sqrt", out, (a,), vjp)


def pairwise_dist(X) -> Var:
    """Euclidean distances between the rows of ``X`` (n, d) -> (n, n).

    The gradient of a zero distance (the diagonal, coincident rows) is 0.
    """
    X = _as_var(X)
    if X.ndim != 2:
        raise ValidationError(f"pairwise_dist expects a 2-d array, got shape {X.shape}")
    x = X.value
    D = kernels.pairwise_distances(x)
    np.fill_diagonal(D, 0.0)

    def vjp(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(D > 0, g / D, 0.0)
        w = w + w.T
        return (w.sum(axis=1)[:, None] * x - w @ x,)

    return _record("pairwise_dist", D, (X,), vjp)


# --- custom nodes ---------------------------------------------------------------

def solve(A, b) -> Var:
    """``x = A^{-1} b`` with ``b_bar = A^{-T} x_bar`` and ``A_bar = -b_bar x^T``."""
    A, b = _as_var(A), _as_var(b)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape[0] != A.shape[0]:
        raise ValidationError(f"solve: incompatible shapes {A.shape} and {b.shape}")
    fact = factor_lu(A.value)
    x = fact.solve(b.value)

    def vjp(g):
        bb = fact.solve_transpose(g)
        if bb.ndim == 1:
            return (-np.outer(bb, x), bb)
        return (-bb @ x.T, bb)

    return _record("solve", x, (A, b), vjp)


def geodesic(X, faces, cfg=None, landmarks=None) -> Var:
    """Symmetrized heat-method distance matrix of vertex positions ``X`` (n, 3)."""
    from .geodesics import GeodesicConfig, geodesic_block

    X = _as_var(X)
    values, backward_fn = geodesic_block(X.value, faces, cfg or GeodesicConfig(), landmarks)
    return _record("geodesic", values, (X,), lambda g: (backward_fn(g),))


def custom(op: str, value, parents: Sequence, vjp) -> Var:
    """Register an arbitrary node; ``vjp(g)`` returns one adjoint per parent."""
    return _record(op, np.asarray(value, dtype=np.float64), [_as_var(p) for p in parents], vjp)


# --- backward ---------------------------------------------------------------------

def backward(loss: Var) -> dict:
    """Gradients of scalar ``loss`` for every leaf on its tape that requires them.

    Returns a dict keyed by leaf :class:`Var`; also stores each in ``leaf.grad``.
    Leaves with no path to the loss are absent (:func:`grad_of` gives zeros).
    """
    if not isinstance(loss, Var):
        raise ValidationError("backward expects a Var")
    if loss.value.size != 1:
        raise ValidationError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.tape is None or not loss.requires_grad:
        return {}
    seen = {loss.id: loss}
    grads: dict[int, np.ndarray] = {loss.id: np.ones(loss.shape)}
    for node in reversed(loss.tape.nodes):
        g = grads.pop(node.out.id, None)
        if g is None:
            continue
        for p, pg in zip(node.parents, node.vjp(g)):
            if not p.requires_grad or pg is None:
                continue
            pg = np.asarray(pg, dtype=np.float64).reshape(p.shape)
            grads[p.id] = grads[p.id] + pg if p.id in grads else pg
            seen[p.id] = p
    # what is left in ``grads`` belongs to leaves
    out = {}
    for pid, g in grads.items():
        leaf = seen[pid]
        leaf.grad = g
        out[leaf] = g
    return out


def grad_of(grads: dict, leaf: Var) -> np.ndarray:
    """Gradient for ``leaf`` from a :func:`backward` result, zeros if absent."""
    g = grads.get(leaf)
    return np.zeros(leaf.shape) if g is None else g


# --- gradient checking -----------------------------------------------------------

@dataclass
class GradCheckReport:
    deviations: list  # per leaf
    max_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance


def relative_deviation(analytic, numeric) -> float:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def grad_check(f: Callable, values: Sequence, step: float = 1e-5, tolerance: float = 1e-4,
               requires_grad: Sequence[bool] | None = None) -> GradCheckReport:
    """Compare reverse-mode gradients with central differences.

    ``f`` receives one :class:`Var` per entry of ``values`` (fresh tape each
    call) and returns a scalar Var. Leaves with ``requires_grad`` false get a
    zero analytic gradient; they are compared against zeros as well.
    """
    values = [np.array(v, dtype=np.float64) for v in values]
    flags = list(requires_grad) if requires_grad is not None else [True] * len(values)

    def run(vals):
        tape = Tape()
        leaves = [tape.leaf(v, r) for v, r in zip(vals, flags)]
        return leaves, f(*leaves)

    leaves, loss = run(values)
    grads = backward(loss)
    deviations = []
    for k, (leaf, flag) in enumerate(zip(leaves, flags)):
        analytic = grad_of(grads, leaf)
        if not flag:
            deviations.append(relative_deviation(analytic, np.zeros_like(analytic)))
            continue
        numeric = np.zeros_like(values[k])
        flat = numeric.reshape(-1)
        for idx in range(values[k].size):
            vp = [v.copy() for v in values]
            vm = [v.copy() for v in values]
            vp[k].reshape(-1)[idx] += step
            vm[k].reshape(-1)[idx] -= step
            fp = float(run(vp)[1].value)
            fm = float(run(vm)[1].value)
            flat[idx] = (fp - fm) / (2.0 * step)
        deviations.append(relative_deviation(analytic, numeric))
    return GradCheckReport(deviations, max(deviations, default=0.0), tolerance)
