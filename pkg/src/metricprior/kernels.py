"""Hot per-face kernels with a compiled backend and a numpy fallback.

The backend is chosen once at import. Set ``METRICPRIOR_KERNELS=python`` to
force the numpy implementation, or ``=compiled`` to fail loudly when the
extension is missing. :func:`use_backend` switches at runtime (tests and the
benchmark use it to compare both paths on identical inputs).
"""
from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS: dict[str, ModuleType | None] = {"python": _pykernels, "compiled": _ckernels}


def _initial_backend() -> str:
    want = os.environ.get("METRICPRIOR_KERNELS", "auto").strip().lower()
    if want == "python":
        return "python"
    if want == "compiled":
        if _ckernels is None:
            raise ImportError("METRICPRIOR_KERNELS=compiled but metricprior._ckernels is not built")
        return "compiled"
    return "compiled" if _ckernels is not None else "python"


BACKEND = _initial_backend()
_impl: ModuleType = _BACKENDS[BACKEND]


def available_backends() -> list[str]:
    return [name for name, mod in _BACKENDS.items() if mod is not None]


def use_backend(name: str) -> str:
    """Switch the active backend; returns the previous one."""
    global BACKEND, _impl
    mod = _BACKENDS.get(name)
    if mod is None:
        raise ValueError(f"kernel backend {name!r} is not available (have {available_backends()})")
    previous = BACKEND
    BACKEND, _impl = name, mod
    return previous


def _f(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _i(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


def scatter_blocks(faces, blocks, n: int) -> np.ndarray:
    return _impl.scatter_blocks(_i(faces), _f(blocks), int(n))


def scatter_corners(faces, values, n: int) -> np.ndarray:
    return _impl.scatter_corners(_i(faces), _f(values), int(n))


def face_grad(P, faces, U) -> np.ndarray:
    return _impl.face_grad(_f(P), _i(faces), _f(U))


def face_div(Q, faces, V, n: int) -> np.ndarray:
    return _impl.face_div(_f(Q), _i(faces), _f(V), int(n))


def face_outer(faces, Y, Z) -> np.ndarray:
    return _impl.face_outer(_i(faces), _f(Y), _f(Z))


def pair_contract(faces, Y, Z) -> np.ndarray:
    return _impl.pair_contract(_i(faces), _f(Y), _f(Z))


def normalize_field(g, floor: float) -> tuple[np.ndarray, np.ndarray]:
    return _impl.normalize_field(_f(g), float(floor))


def normalize_field_vjp(g, norms, Vbar, floor: float) -> np.ndarray:
    return _impl.normalize_field_vjp(_f(g), _f(norms), _f(Vbar), float(floor))


def pairwise_distances(A, B=None) -> np.ndarray:
    A = _f(A)
    return _impl.pairwise_distances(A, A if B is None else _f(B))


def nearest_sq(P, Q) -> tuple[np.ndarray, np.ndarray]:
    return _impl.nearest_sq(_f(P), _f(Q))
