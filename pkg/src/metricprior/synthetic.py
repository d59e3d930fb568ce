"""Synthetic family of hinged, capped tubes with known correspondence.

Every mesh shares one topology: ``2k`` rings of ``k`` vertices along a bent
centerline plus one apex vertex closing each end, ``n = 2k^2 + 2``. A
subject ("style") fixes the two segment lengths and the tube radius; a pose
bends the centerline by an angle inside a short circular zone around the
hinge. Bending keeps the surface close to isometric, so poses of one subject
have similar geodesic matrices while subjects differ.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .mesh import TriMesh


@dataclass(frozen=True)
class TubeStyle:
    length1: float
    length2: float
    radius: float

    def __post_init__(self):
        if min(self.length1, self.length2, self.radius) <= 0:
            raise ValidationError(f"tube lengths and radius must be positive: {self}")


def tube_faces(k: int) -> np.ndarray:
    rings = 2 * k
    faces = []
    for r in range(rings - 1):
        for a in range(k):
            b = (a + 1) % k
            p, q = r * k + a, r * k + b
            faces += [[p, q, q + k], [p, q + k, p + k]]
    start, end = rings * k, rings * k + 1
    for a in range(k):
        b = (a + 1) % k
        faces.append([start, b, a])
        last = (rings - 1) * k
        faces.append([end, last + a, last + b])
    return np.array(faces, dtype=np.int64)


def _centerline(s, L1, L2, theta, zone):
    """Point, tangent and in-plane normal at arc length ``s`` (hinge at s = L1)."""
    s = np.asarray(s, dtype=float)
    half = 0.5 * zone
    P = np.zeros((s.size, 3))
    T = np.zeros((s.size, 3))
    N = np.zeros((s.size, 3))
    kappa = theta / zone if theta != 0 else 0.0

    def straight_dir(angle):
        return np.array([np.cos(angle), 0.0, np.sin(angle)])

    start = np.array([L1 - half, 0.0, 0.0])  # beginning of the bent zone
    for idx, si in enumerate(s):
        u = si - (L1 - half)
        if u <= 0:
            ang, pos = 0.0, np.array([si, 0.0, 0.0])
        elif u <= zone:
            ang = kappa * u
            if kappa == 0:
                pos = start + np.array([u, 0.0, 0.0])
            else:
                pos = start + np.array([np.sin(ang), 0.0, 1.0 - np.cos(ang)]) / kappa
        else:
            ang = theta
            if kappa == 0:
                end = start + np.array([zone, 0.0, 0.0])
            else:
                end = start + np.array([np.sin(theta), 0.0, 1.0 - np.cos(theta)]) / kappa
            pos = end + (u - zone) * straight_dir(theta)
        P[idx] = pos
        T[idx] = straight_dir(ang)
        N[idx] = np.array([-np.sin(ang), 0.0, np.cos(ang)])
    return P, T, N


def hinged_tube(style: TubeStyle, angle: float, resolution: int = 12, zone: float = 0.5) -> TriMesh:
    """Tube with ``resolution`` vertices around and ``2 * resolution`` rings.

    The first segment lies on the x axis; the hinge (arc length ``length1``)
    bends the second segment upward by ``angle`` radians over a circular zone
    of arc length ``zone``. Each end is closed by an apex vertex one radius
    beyond the last ring.
    """
    k = int(resolution)
    if k < 3:
        raise ValidationError(f"resolution must be at least 3, got {resolution}")
    L1, L2, r = style.length1, style.length2, style.radius
    if not 0 < zone < min(L1, L2):
        raise ValidationError(f"bend zone {zone} must be positive and shorter than both segments")
    rings = 2 * k
    s = np.linspace(0.0, L1 + L2, rings)
    C, T, N = _centerline(s, L1, L2, float(angle), zone)
    B = np.array([0.0, 1.0, 0.0])
    phi = 2.0 * np.pi * np.arange(k) / k
    ring = np.cos(phi)[None, :, None] * N[:, None, :] + np.sin(phi)[None, :, None] * B[None, None, :]
    V = (C[:, None, :] + r * ring).reshape(-1, 3)
    caps = np.array([C[0] - r * T[0], C[-1] + r * T[-1]])
    return TriMesh(np.vstack([V, caps]), tube_faces(k))
