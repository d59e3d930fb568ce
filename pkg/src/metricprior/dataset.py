"""Corresponded shape collections, pair sampling and the synthetic tube family."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .geodesics import (
    DistanceMatrix,
    GeodesicConfig,
    bounded_distortion,
    euclidean_distance_matrix,
    heat_distance_all,
)
from .mesh import NeighborhoodMask, TriMesh, load_off, neighborhood_mask
from .synthetic import TubeStyle, hinged_tube

PAIR_KINDS = ("any", "isometric", "non_isometric")


@dataclass(frozen=True, eq=False)
class ShapeRecord:
    mesh: TriMesh
    subject_id: int
    pose_id: int
    D_euclid: DistanceMatrix
    D_geo: DistanceMatrix
    mask: NeighborhoodMask

    @property
    def n(self) -> int:
        return self.mesh.n_vertices


def make_record(mesh: TriMesh, subject_id: int, pose_id: int, geo_cfg: GeodesicConfig = GeodesicConfig(),
                radius_fraction: float = 0.1) -> ShapeRecord:
    mesh.validate()
    return ShapeRecord(mesh, int(subject_id), int(pose_id), euclidean_distance_matrix(mesh),
                       heat_distance_all(mesh, geo_cfg), neighborhood_mask(mesh, radius_fraction))


def check_corresponded(records: Sequence[ShapeRecord]) -> None:
    if not records:
        raise ValidationError("dataset is empty")
    faces = records[0].mesh.faces
    for r in records[1:]:
        if r.mesh.n_vertices != records[0].mesh.n_vertices or not np.array_equal(r.mesh.faces, faces):
            raise ValidationError("all shapes must share vertex count and face list (correspondence by index)")


@dataclass(frozen=True)
class PairSample:
    i: int
    j: int
    alpha: float
    kind: str = "any"

    def __post_init__(self):
        if self.i == self.j:
            raise ValidationError(f"a pair needs two different shapes, got i = j = {self.i}")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must lie in the open interval (0, 1), got {self.alpha}")
        if self.kind not in PAIR_KINDS:
            raise ValidationError(f"unknown pair kind {self.kind!r}")

    def check(self, records: Sequence[ShapeRecord]) -> "PairSample":
        """Verify the kind against the subject labels of ``records``."""
        same = records[self.i].subject_id == records[self.j].subject_id
        if self.kind == "isometric" and not same:
            raise ValidationError(f"pair ({self.i}, {self.j}) is not isometric (different subjects)")
        if self.kind == "non_isometric" and same:
            raise ValidationError(f"pair ({self.i}, {self.j}) is not non-isometric (same subject)")
        return self


def eligible_pairs(records: Sequence[ShapeRecord], kind: str) -> list[tuple[int, int]]:
    if kind not in PAIR_KINDS:
        raise ValidationError(f"unknown pair kind {kind!r}")
    out = []
    for i, a in enumerate(records):
        for j, b in enumerate(records):
            if i == j:
                continue
            same = a.subject_id == b.subject_id
            if kind == "any" or (kind == "isometric") == same:
                out.append((i, j))
    return out


def sample_pair(records: Sequence[ShapeRecord], rng: np.random.Generator, kind: str = "any") -> PairSample:
    """Uniform over ordered eligible pairs, with a fresh alpha ~ U(0, 1)."""
    pairs = eligible_pairs(records, kind)
    if not pairs:
        raise ValidationError(f"dataset has no {kind} pairs")
    i, j = pairs[int(rng.integers(len(pairs)))]
    alpha = float(rng.uniform())
    while alpha == 0.0:  # uniform() is [0, 1); keep the interval open
        alpha = float(rng.uniform())
    return PairSample(i, j, alpha, kind)


# --- synthetic family -------------------------------------------------------------

def subject_styles(n_subjects: int, rng: np.random.Generator) -> list[TubeStyle]:
    """Distinct styles: lengths grow with the subject index, radius alternates, plus jitter."""
    styles = []
    for s in range(n_subjects):
        jitter = rng.uniform(0.0, 0.05, size=3)
        styles.append(TubeStyle(1.0 + 0.4 * s + jitter[0], 1.0 + 0.2 * s + jitter[1],
                                (0.08 if s % 2 == 0 else 0.15) + 0.2 * jitter[2]))
    return styles


def gen_synthetic_family(n_subjects: int, n_poses: int, resolution: int = 12, seed: int = 0, *,
                         styles: Sequence[TubeStyle] | None = None, max_angle: float = np.pi / 3,
                         zone: float = 0.8, isometry_ratio: float | None = 0.2,
                         geo_cfg: GeodesicConfig = GeodesicConfig(),
                         radius_fraction: float = 0.1) -> list[ShapeRecord]:
    """Grid family: every subject appears in every pose (bend angles shared).

    Records are ordered subject-major. With ``isometry_ratio`` set, checks that
    the largest within-subject distortion K is at most ``isometry_ratio`` times
    the smallest between-subject K (geodesic matrices).
    """
    if n_subjects < 1 or n_poses < 2:
        raise ValidationError(f"need n_subjects >= 1 and n_poses >= 2, got {n_subjects}, {n_poses}")
    rng = np.random.default_rng(seed)
    if styles is None:
        styles = subject_styles(n_subjects, rng)
    elif len(styles) != n_subjects:
        raise ValidationError(f"got {len(styles)} styles for {n_subjects} subjects")
    angles = np.linspace(0.0, max_angle, n_poses)
    records = []
    for s, style in enumerate(styles):
        for p, angle in enumerate(angles):
            records.append(make_record(hinged_tube(style, angle, resolution, zone), s, p, geo_cfg, radius_fraction))
    if isometry_ratio is not None and n_subjects >= 2:
        intra, inter = family_distortion(records)
        if intra > isometry_ratio * inter:
            raise ValidationError(
                f"poses are not near-isometric enough: max within-subject K = {intra:.4g} exceeds "
                f"{isometry_ratio} x min between-subject K = {inter:.4g}"
            )
    return records


def family_distortion(records: Sequence[ShapeRecord]) -> tuple[float, float]:
    """(max K over same-subject pairs, min K over different-subject pairs)."""
    intra, inter = 0.0, np.inf
    for a in range(len(records)):
        for b in range(a + 1, len(records)):
            K = bounded_distortion(records[a].D_geo, records[b].D_geo).K
            if records[a].subject_id == records[b].subject_id:
                intra = max(intra, K)
            else:
                inter = min(inter, K)
    return intra, float(inter)


# --- loading from disk ------------------------------------------------------------

def load_directory(path, geo_cfg: GeodesicConfig = GeodesicConfig(), radius_fraction: float = 0.1) -> list[ShapeRecord]:
    """Read ``*.off`` files named ``<subject>_<pose>.off`` (integers), corresponded by index."""
    path = Path(path)
    files = sorted(path.glob("*.off"))
    if not files:
        raise ValidationError(f"no .off files in {path}")
    records = []
    for f in files:
        try:
            subject, pose = (int(x) for x in f.stem.split("_")[-2:])
        except ValueError:
            raise ValidationError(f"{f.name}: expected a name like <subject>_<pose>.off") from None
        records.append(make_record(load_off(f), subject, pose, geo_cfg, radius_fraction))
    records.sort(key=lambda r: (r.subject_id, r.pose_id))
    check_corresponded(records)
    return records
