"""Triangle meshes, oriented surface samples, bounding boxes and nearest-point queries."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateFace, EmptyMesh, ParseError

MIN_FACE_AREA = 1e-12


class MeshIndexError(ParseError, IndexError):
    """A face references a vertex that does not exist."""


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray  # (V, 3) float, meters
    faces: np.ndarray  # (F, 3) int

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ParseError(f"vertices must be (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ParseError(f"faces must be (F, 3), got {f.shape}")
        if not np.all(np.isfinite(v)):
            raise ParseError("non-finite vertex coordinate")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshIndexError(f"face index out of range [0, {len(v)})")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if f.size and np.any(self.face_areas() <= MIN_FACE_AREA):
            raise DegenerateFace("mesh contains a zero-area triangle")

    def face_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def face_normals(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @property
    def mesh_id(self) -> str:
        h = hashlib.sha1()
        h.update(self.vertices.tobytes())
        h.update(self.faces.tobytes())
        return h.hexdigest()[:16]

    def centroid(self) -> np.ndarray:
        """Area-weighted centroid of the surface."""
        areas = self.face_areas()
        centers = self.vertices[self.faces].mean(axis=1)
        return (areas[:, None] * centers).sum(axis=0) / areas.sum()


@dataclass(frozen=True)
class SurfaceSamples:
    points: np.ndarray  # (n, 3)
    normals: np.ndarray  # (n, 3), unit, outward
    mesh_id: str = ""
    face_index: np.ndarray | None = None

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class Aabb:
    min_corner: np.ndarray
    max_corner: np.ndarray

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min_corner + self.max_corner)

    @property
    def extents(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extents))

    def scaled(self, factor: float) -> "Aabb":
        c, h = self.center, 0.5 * self.extents * factor
        return Aabb(c - h, c + h)


# ---------------------------------------------------------------------------
# file IO


def _clean_lines(text):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def _fan(poly):
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _parse_off(text):
    lines = list(_clean_lines(text))
    if not lines:
        raise ParseError("empty OFF file")
    head = lines[0].split()
    if head[0] != "OFF":
        raise ParseError("missing OFF header")
    rest = head[1:]
    body = lines[1:]
    if not rest:
        if not body:
            raise ParseError("missing OFF counts")
        rest, body = body[0].split(), body[1:]
    try:
        nv, nf = int(rest[0]), int(rest[1])
        verts = [[float(t) for t in body[i].split()[:3]] for i in range(nv)]
        faces = []
        for i in range(nv, nv + nf):
            tok = body[i].split()
            k = int(tok[0])
            poly = [int(t) for t in tok[1 : 1 + k]]
            if len(poly) != k or k < 3:
                raise ParseError(f"bad face line: {body[i]!r}")
            faces.extend(_fan(poly))
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed OFF: {exc}") from exc
    return verts, faces


def _parse_obj(text):
    verts, faces = [], []
    for line in _clean_lines(text):
        tok = line.split()
        try:
            if tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "f":
                poly = []
                for t in tok[1:]:
                    idx = int(t.split("/")[0])
                    poly.append(idx - 1 if idx > 0 else len(verts) + idx)
                if len(poly) < 3:
                    raise ParseError(f"bad face line: {line!r}")
                faces.extend(_fan(poly))
        except ValueError as exc:
            raise ParseError(f"malformed OBJ line {line!r}") from exc
    return verts, faces


def load_mesh(path, format=None, scale=1.0, drop_degenerate=False) -> TriMesh:
    """Read an OFF or Wavefront OBJ file into a :class:`TriMesh`.

    Polygons are fan-triangulated. ``scale`` is applied uniformly to the
    vertex coordinates (meshes are often stored in millimeters). Zero-area
    triangles raise :class:`DegenerateFace` unless ``drop_degenerate``.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise
    if fmt == "OFF":
        verts, faces = _parse_off(text)
    elif fmt == "OBJ":
        verts, faces = _parse_obj(text)
    else:
        raise ParseError(f"unsupported mesh format {fmt!r}")
    v = np.asarray(verts, dtype=float).reshape(-1, 3) * float(scale)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if f.size and (f.min() < 0 or f.max() >= len(v)):
        raise MeshIndexError(f"{path}: face index out of range [0, {len(v)})")
    if drop_degenerate and len(f):
        tri = v[f]
        area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        f = f[area > MIN_FACE_AREA]
    return TriMesh(v, f)


def save_mesh(mesh: TriMesh, path, format=None):
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    if fmt == "OFF":
        lines = ["OFF", f"{len(mesh.vertices)} {len(mesh.faces)} 0"]
        lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
        lines += ["3 " + " ".join(str(int(i)) for i in f) for f in mesh.faces]
    elif fmt == "OBJ":
        lines = ["v " + " ".join(repr(float(c)) for c in v) for v in mesh.vertices]
        lines += ["f " + " ".join(str(int(i) + 1) for i in f) for f in mesh.faces]
    else:
        raise ParseError(f"unsupported mesh format {fmt!r}")
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# analytic primitives (outward, counter-clockwise winding)


def icosphere(radius=1.0, subdivisions=3, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Geodesic sphere; ``subdivisions=3`` gives 642 vertices."""
    t = (1.0 + 5**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    v = np.array(verts) * radius + np.asarray(center, float)
    return TriMesh(v, np.array(faces))


def box(extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriMesh:
    h = 0.5 * np.asarray(extents, float)
    corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
    v = corners * h + np.asarray(center, float)
    # corner index = 4*ix + 2*iy + iz
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    faces = []
    for q in quads:
        faces += _fan(q)
    return TriMesh(v, np.array(faces))


def cylinder(radius=1.0, height=1.0, segments=48, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Closed cylinder along z."""
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    lo = np.column_stack([ring, np.full(segments, -height / 2)])
    hi = np.column_stack([ring, np.full(segments, height / 2)])
    v = np.vstack([lo, hi, [[0, 0, -height / 2], [0, 0, height / 2]]])
    c_lo, c_hi = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [(i, j, segments + j), (i, segments + j, segments + i)]
        faces += [(c_lo, j, i), (c_hi, segments + i, segments + j)]
    return TriMesh(v + np.asarray(center, float), np.array(faces))


# ---------------------------------------------------------------------------
# sampling and boxes


def sample_surface(mesh: TriMesh, n: int, seed=0) -> SurfaceSamples:
    """Area-uniform random points on the mesh with their face normals."""
    if len(mesh.faces) == 0:
        raise EmptyMesh("mesh has no faces")
    n = int(n)
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    face = rng.choice(len(areas), size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.vertices[mesh.faces[face]]
    pts = (
        (1 - r1)[:, None] * tri[:, 0]
        + (r1 * (1 - r2))[:, None] * tri[:, 1]
        + (r1 * r2)[:, None] * tri[:, 2]
    )
    normals = mesh.face_normals()[face]
    return SurfaceSamples(pts, normals, mesh.mesh_id, face)


def vertex_samples(mesh: TriMesh) -> SurfaceSamples:
    """Mesh vertices with area-weighted vertex normals."""
    fn = np.cross(
        mesh.vertices[mesh.faces[:, 1]] - mesh.vertices[mesh.faces[:, 0]],
        mesh.vertices[mesh.faces[:, 2]] - mesh.vertices[mesh.faces[:, 0]],
    )
    vn = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(vn, mesh.faces[:, k], fn)
    vn /= np.linalg.norm(vn, axis=1, keepdims=True)
    return SurfaceSamples(mesh.vertices.copy(), vn, mesh.mesh_id)


def compute_aabb(mesh: TriMesh, margin=1.0) -> Aabb:
    if len(mesh.vertices) == 0:
        raise EmptyMesh("mesh has no vertices")
    tight = Aabb(mesh.vertices.min(axis=0), mesh.vertices.max(axis=0))
    return tight.scaled(margin) if margin != 1.0 else tight


# ---------------------------------------------------------------------------
# nearest-point queries


@dataclass(frozen=True)
class SurfaceKdTree:
    samples: SurfaceSamples
    leafsize: int = 16
    _tree: cKDTree = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.samples) == 0:
            raise EmptyMesh("cannot build a tree over zero samples")
        object.__setattr__(self, "_tree", cKDTree(self.samples.points, leafsize=self.leafsize))

    def nearest_index(self, query) -> int:
        q = np.asarray(query, float)
        d, i = self._tree.query(q, k=1)
        # exact-tie resolution: lowest index among equidistant samples
        cand = self._tree.query_ball_point(q, d * (1 + 1e-9) + 1e-15)
        if len(cand) <= 1:
            return int(i)
        cand = np.sort(np.asarray(cand))
        dist = np.sqrt(((self.samples.points[cand] - q) ** 2).sum(axis=1))
        return int(cand[np.argmin(dist)])


def nearest_surface_point(tree: SurfaceKdTree, query):
    """Return ``(point, normal, distance)`` of the closest stored sample."""
    i = tree.nearest_index(query)
    p = tree.samples.points[i]
    return p.copy(), tree.samples.normals[i].copy(), float(np.linalg.norm(p - np.asarray(query, float)))
