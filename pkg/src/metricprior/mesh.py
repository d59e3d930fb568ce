"""Triangle meshes: representation, OFF/COFF I/O, and simple geometric queries."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import MeshValidationError, OFFParseError, ValidationError

AREA_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Vertex positions (n, 3) and 0-based triangle indices (m, 3).

    Construction checks structure only (shapes, index range, distinct corners).
    :meth:`validate` adds the size and face-area checks applied to meshes read
    from disk and to meshes fed to operator assembly.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        f = np.array(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValidationError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValidationError(f"faces must have shape (m, 3), got {f.shape}")
        if f.shape[0] < 1:
            raise ValidationError("mesh has no faces")
        if not np.all(np.isfinite(v)):
            raise ValidationError("vertex coordinates must be finite")
        n = v.shape[0]
        bad = np.where((f < 0).any(axis=1) | (f >= n).any(axis=1))[0]
        if bad.size:
            raise MeshValidationError(f"face vertex index out of range for {n} vertices", bad)
        bad = np.where((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2]))[0]
        if bad.size:
            raise MeshValidationError("face repeats a vertex", bad)
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def face_areas(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        cr = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(cr, axis=1)

    def degenerate_faces(self) -> np.ndarray:
        diam = shape_diameter(self)
        return np.where(self.face_areas() < AREA_EPS * diam**2)[0]

    def validate(self) -> "TriMesh":
        if self.n_vertices < 4:
            raise ValidationError(f"mesh needs at least 4 vertices, got {self.n_vertices}")
        bad = self.degenerate_faces()
        if bad.size:
            raise MeshValidationError("degenerate (near zero-area) faces", bad)
        return self

    def with_vertices(self, vertices) -> "TriMesh":
        return TriMesh(vertices, self.faces)

    def is_closed(self) -> bool:
        e = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


@dataclass(frozen=True, eq=False)
class NeighborhoodMask:
    entries: np.ndarray
    radius: float

    @property
    def count(self) -> int:
        return int(self.entries.sum())


def shape_diameter(mesh: TriMesh | np.ndarray) -> float:
    """Largest Euclidean distance between any two vertices."""
    v = mesh.vertices if isinstance(mesh, TriMesh) else np.asarray(mesh, float)
    return float(kernels.pairwise_distances(v).max())


def neighborhood_mask(mesh: TriMesh, radius_fraction: float = 0.1) -> NeighborhoodMask:
    """Vertex pairs within ``radius_fraction * diameter`` of each other on ``mesh``."""
    if not radius_fraction > 0:
        raise ValidationError(f"radius_fraction must be positive, got {radius_fraction}")
    D = kernels.pairwise_distances(mesh.vertices)
    diam = float(D.max())
    if diam <= 0:
        raise ValidationError("mesh has zero diameter; neighborhood radius is undefined")
    radius = radius_fraction * diam
    entries = D <= radius
    np.fill_diagonal(entries, False)
    entries.setflags(write=False)
    return NeighborhoodMask(entries, radius)


# --- OFF / COFF ------------------------------------------------------------

def _tokens(text: str):
    """Yield (lineno, tokens) for non-empty, comment-stripped lines."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def load_off(path) -> TriMesh:
    """Read an ASCII OFF (or COFF; colors are ignored) triangle mesh."""
    text = Path(path).read_text(encoding="utf-8")
    lines = _tokens(text)
    try:
        lineno, head = next(lines)
    except StopIteration:
        raise OFFParseError("empty file", 1) from None
    keyword = head[0].upper()
    if keyword not in ("OFF", "COFF"):
        raise OFFParseError(f"expected OFF header, found {head[0]!r}", lineno)
    counts = head[1:]
    if not counts:
        try:
            lineno, counts = next(lines)
        except StopIteration:
            raise OFFParseError("missing element counts", lineno) from None
    try:
        n, m = int(counts[0]), int(counts[1])
    except (ValueError, IndexError):
        raise OFFParseError("bad element count line", lineno) from None
    if n < 0 or m < 0:
        raise OFFParseError("negative element counts", lineno)

    verts = np.empty((n, 3))
    for i in range(n):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise OFFParseError(f"expected {n} vertices, file ended after {i}", lineno) from None
        if len(tok) < 3:
            raise OFFParseError("vertex line needs 3 coordinates", lineno)
        try:
            verts[i] = [float(t) for t in tok[:3]]
        except ValueError:
            raise OFFParseError(f"bad vertex coordinates {tok[:3]}", lineno) from None

    faces = []
    for i in range(m):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise OFFParseError(f"expected {m} faces, file ended after {i}", lineno) from None
        try:
            k = int(tok[0])
            idx = [int(t) for t in tok[1:1 + k]]
        except (ValueError, IndexError):
            raise OFFParseError("bad face line", lineno) from None
        if k != 3 or len(idx) != 3:
            raise OFFParseError(f"only triangles are supported, got a {k}-gon", lineno)
        bad = [j for j in idx if j < 0 or j >= n]
        if bad:
            raise OFFParseError(f"face vertex index out of range: {bad[0]} (mesh has {n} vertices)", lineno)
        faces.append(idx)
    return TriMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3)).validate()


def scalar_to_colors(scalar) -> np.ndarray:
    """White-to-red colormap: s in [0, 1] -> (255, 255(1-s), 255(1-s), 255)."""
    s = np.asarray(scalar, dtype=float)
    top = s.max() if s.size else 0.0
    s = np.clip(s / top, 0.0, 1.0) if top > 0 else np.zeros_like(s)
    gb = np.round(255.0 * (1.0 - s)).astype(int)
    out = np.empty((s.size, 4), dtype=int)
    out[:, 0] = 255
    out[:, 1] = gb
    out[:, 2] = gb
    out[:, 3] = 255
    return out


def save_off(mesh: TriMesh, path, vertex_scalar=None) -> None:
    """Write OFF, or COFF with a white-to-red per-vertex color when a scalar is given."""
    lines = []
    colors = None
    if vertex_scalar is not None:
        vertex_scalar = np.asarray(vertex_scalar, dtype=float).reshape(-1)
        if vertex_scalar.size != mesh.n_vertices:
            raise ValidationError(
                f"vertex_scalar has {vertex_scalar.size} values for {mesh.n_vertices} vertices"
            )
        colors = scalar_to_colors(vertex_scalar)
    lines.append("COFF" if colors is not None else "OFF")
    lines.append(f"{mesh.n_vertices} {mesh.n_faces} 0")
    for i, p in enumerate(mesh.vertices):
        row = f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}"
        if colors is not None:
            row += " " + " ".join(str(c) for c in colors[i])
        lines.append(row)
    for a, b, c in mesh.faces:
        lines.append(f"3 {a} {b} {c}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- simple generators ---------------------------------------------------

def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    """Subdivided icosahedron; 642 vertices / 1280 faces at 3 subdivisions."""
    t = (1.0 + 5.0**0.5) / 2.0
    verts = [
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ]
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    return TriMesh(radius * np.array(verts), np.array(faces))


def grid_mesh(rows: int, cols: int | None = None, size: float = 1.0) -> TriMesh:
    """Flat rows x cols vertex grid on [0, size]^2 in the z=0 plane.

    Every square is split along the diagonal through its (0, 0) and (1, 1)
    corners, so the corner vertex 0 sits in two triangles.
    """
    cols = rows if cols is None else cols
    xs = np.linspace(0.0, size, rows)
    ys = np.linspace(0.0, size * (cols - 1) / max(rows - 1, 1), cols)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(rows * cols)])
    faces = []
    for i in range(rows - 1):
        for j in range(cols - 1):
            a = i * cols + j
            b = (i + 1) * cols + j
            c = (i + 1) * cols + j + 1
            d = i * cols + j + 1
            faces += [[a, b, c], [a, c, d]]
    return TriMesh(verts, np.array(faces))
