"""Triangle meshes, planar slicing, and surface sampling.

Meshes are plain vertex/face arrays (float64 vertices, int64 faces).
Slicing a watertight mesh with a plane yields closed ``Contour`` loops.
Per-triangle crossing points are keyed by the mesh edge they lie on, so
chaining segments into loops is exact rather than tolerance based: two
triangles sharing an edge produce bit-identical crossing points.
"""
from __future__ import annotations

import numpy as np

from .errors import GeometryError, MeshFormatError

__all__ = [
    "TriangleMesh",
    "Plane",
    "Contour",
    "load_mesh",
    "write_obj",
    "normalize_mesh",
    "sample_surface",
    "sample_planes",
    "slice_mesh",
    "write_ply",
    "read_ply",
]

# A vertex closer to the slicing plane than this counts as lying on it.
_VERTEX_ON_PLANE_TOL = 1e-12
# Offset perturbation applied when a vertex lies on the plane.
_OFFSET_STEP = 1e-9
_MAX_SLICE_RETRIES = 8
# Every contour point must sit this close to the (possibly perturbed) plane.
_PLANE_DISTANCE_TOL = 1e-7
# Turning angles below this (radians) are treated as collinear and merged.
_COLLINEAR_TOL = 1e-6


class TriangleMesh:
    """Indexed triangle mesh.

    Args:
        vertices: (n, 3) array of positions.
        faces: (m, 3) array of vertex indices.
    """

    def __init__(self, vertices, faces):
        self.vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        n = len(self.vertices)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= n:
                raise GeometryError("face index out of range")
            f = self.faces
            repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if np.any(repeated):
                raise GeometryError("face references the same vertex twice")

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_faces(self):
        return len(self.faces)

    def bounds(self):
        """Axis-aligned bounding box as (min, max) corner arrays."""
        if self.vertices.size == 0:
            raise GeometryError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def __repr__(self):
        return f"TriangleMesh({self.num_vertices} vertices, {self.num_faces} faces)"


class Plane:
    """Oriented plane ``normal . x = offset`` with a unit normal."""

    def __init__(self, normal, offset):
        self.normal = np.asarray(normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-9:
            raise GeometryError("plane normal must be unit length")
        self.offset = float(offset)

    def signed_distance(self, points):
        """Signed distance of points (broadcastable (..., 3)) to the plane."""
        return np.asarray(points, dtype=np.float64) @ self.normal - self.offset

    def __repr__(self):
        n = self.normal
        return f"Plane(normal=({n[0]:.6g}, {n[1]:.6g}, {n[2]:.6g}), offset={self.offset:.6g})"


class Contour:
    """Polyline in 3-space; closed contours wrap implicitly (no repeated endpoint).

    ``length`` is the total polyline length, including the wrap segment
    when closed.
    """

    def __init__(self, points, closed=True):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) < 3:
            raise GeometryError("contour needs at least 3 points")
        gaps = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        segment_gaps = gaps if closed else gaps[:-1]
        if np.any(segment_gaps <= 1e-12):
            raise GeometryError("consecutive contour points coincide")
        self.points = pts
        self.closed = bool(closed)
        self.length = float(segment_gaps.sum())

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        kind = "closed" if self.closed else "open"
        return f"Contour({len(self.points)} points, {kind}, length={self.length:.6g})"


def load_mesh(path):
    """Parse a Wavefront OBJ file into a TriangleMesh.

    Only ``v`` and ``f`` records are honoured; everything else is skipped.
    Faces with more than three vertices are fan-triangulated from the first
    vertex. Malformed records raise MeshFormatError naming the line.
    """
    path = str(path)
    vertices = []
    raw_faces = []  # (lineno, [indices])
    try:
        handle = open(path, "r", encoding="utf-8", errors="replace")
    except OSError as exc:
        raise MeshFormatError(f"cannot open mesh file: {path}") from exc
    with handle:
        for lineno, raw in enumerate(handle, start=1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path}:{lineno}: malformed vertex record")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise MeshFormatError(f"{path}:{lineno}: malformed vertex record") from exc
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path}:{lineno}: face needs at least 3 vertices")
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    try:
                        value = int(head)
                    except ValueError as exc:
                        raise MeshFormatError(
                            f"{path}:{lineno}: malformed face index {token!r}"
                        ) from exc
                    if value <= 0:
                        raise MeshFormatError(
                            f"{path}:{lineno}: unsupported face index {token!r}"
                        )
                    idx.append(value - 1)
                raw_faces.append((lineno, idx))
    if not vertices or not raw_faces:
        raise MeshFormatError(f"{path}: empty mesh")
    n = len(vertices)
    faces = []
    for lineno, idx in raw_faces:
        if max(idx) >= n:
            raise MeshFormatError(f"{path}:{lineno}: face index out of range")
        if len(set(idx)) != len(idx):
            raise MeshFormatError(f"{path}:{lineno}: face repeats a vertex")
        for j in range(1, len(idx) - 1):
            faces.append((idx[0], idx[j], idx[j + 1]))
    return TriangleMesh(np.array(vertices), np.array(faces))


def write_obj(mesh, path):
    """Write a TriangleMesh as a minimal OBJ file (v/f records only)."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]!r} {v[1]!r} {v[2]!r}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def normalize_mesh(mesh):
    """Center the bounding box at the origin and scale max extent to 1.

    Already-normalized meshes are returned unchanged (bit-identical), which
    makes the operation idempotent.
    """
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise GeometryError("degenerate mesh: zero bounding-box extent")
    center = (lo + hi) / 2.0
    if np.all(np.abs(center) <= 1e-9) and abs(extent - 1.0) <= 1e-9:
        return TriangleMesh(mesh.vertices.copy(), mesh.faces.copy())
    return TriangleMesh((mesh.vertices - center) / extent, mesh.faces.copy())


def sample_surface(mesh, n, seed=0):
    """Draw n points uniformly over the mesh surface (triangles by area).

    Deterministic for a fixed seed. Zero-area triangles are never selected;
    a mesh whose total area vanishes raises GeometryError.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    v, f = mesh.vertices, mesh.faces
    if f.size == 0:
        raise GeometryError("mesh has no faces to sample")
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    areas = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
    total = areas.sum()
    if total <= 0.0:
        raise GeometryError("all faces are degenerate; nothing to sample")
    rng = np.random.default_rng(seed)
    tri = rng.choice(len(f), size=n, p=areas / total)
    uv = rng.random((n, 2))
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]
    p0 = v[f[tri, 0]]
    return p0 + uv[:, :1] * (v[f[tri, 1]] - p0) + uv[:, 1:] * (v[f[tri, 2]] - p0)


_AXIS_NAMES = {"x": 0, "y": 1, "z": 2}


def _axis_index(axis):
    if isinstance(axis, str):
        try:
            return _AXIS_NAMES[axis.lower()]
        except KeyError:
            raise ValueError(f"unknown axis {axis!r}") from None
    axis = int(axis)
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1, or 2")
    return axis


def _bbox_corners(lo, hi):
    return np.array([[lo[0], lo[1], lo[2]],
                     [lo[0], lo[1], hi[2]],
                     [lo[0], hi[1], lo[2]],
                     [lo[0], hi[1], hi[2]],
                     [hi[0], lo[1], lo[2]],
                     [hi[0], lo[1], hi[2]],
                     [hi[0], hi[1], lo[2]],
                     [hi[0], hi[1], hi[2]]])


def sample_planes(mesh, count, strategy="axis", axis=2, seed=0):
    """Build ``count`` slicing planes for a mesh.

    ``axis`` strategy: axis-aligned planes with offsets evenly spaced
    strictly inside the bounding-box interval (both faces excluded).
    ``random`` strategy: normals uniform on the sphere, offsets uniform over
    the projection of the bounding box, so every plane intersects the box.
    """
    if count < 1:
        raise ValueError("need at least one plane")
    lo, hi = mesh.bounds()
    if strategy == "axis":
        ax = _axis_index(axis)
        normal = np.zeros(3)
        normal[ax] = 1.0
        fractions = (np.arange(count) + 1.0) / (count + 1.0)
        offsets = lo[ax] + (hi[ax] - lo[ax]) * fractions
        return [Plane(normal, off) for off in offsets]
    if strategy == "random":
        rng = np.random.default_rng(seed)
        corners = _bbox_corners(lo, hi)
        planes = []
        while len(planes) < count:
            vec = rng.normal(size=3)
            norm = np.linalg.norm(vec)
            if norm < 1e-12:
                continue
            normal = vec / norm
            proj = corners @ normal
            planes.append(Plane(normal, rng.uniform(proj.min(), proj.max())))
        return planes
    raise ValueError(f"unknown plane strategy {strategy!r}")


def _cross_segments(mesh, dist):
    """Per-triangle plane crossings as pairs of edge keys, plus point lookup.

    ``dist`` holds signed vertex distances with no exact zeros, so every
    crossed triangle has exactly two crossed edges.
    """
    v = mesh.vertices
    positive = dist > 0.0
    face_signs = positive[mesh.faces]
    crossing = face_signs.any(axis=1) & ~face_signs.all(axis=1)
    points = {}

    def edge_key(i, j):
        key = (i, j) if i < j else (j, i)
        if key not in points:
            a, b = key
            t = dist[a] / (dist[a] - dist[b])
            points[key] = v[a] + t * (v[b] - v[a])
        return key

    segments = []
    for a, b, c in mesh.faces[crossing]:
        keys = []
        for i, j in ((a, b), (b, c), (c, a)):
            if positive[i] != positive[j]:
                keys.append(edge_key(int(i), int(j)))
        segments.append((keys[0], keys[1]))
    return segments, points


def _chain_loops(segments, points):
    """Chain crossing segments into closed loops of edge keys."""
    adjacency = {}
    for si, (k1, k2) in enumerate(segments):
        adjacency.setdefault(k1, []).append((si, k2))
        adjacency.setdefault(k2, []).append((si, k1))
    for key, entries in adjacency.items():
        if len(entries) != 2:
            p = points[key]
            raise GeometryError(
                "open chain at edge crossing "
                f"({p[0]:.9g}, {p[1]:.9g}, {p[2]:.9g}): non-watertight mesh at this plane"
            )
    used = [False] * len(segments)
    loops = []
    for si in range(len(segments)):
        if used[si]:
            continue
        start_key, cur_key = segments[si]
        used[si] = True
        keys = [start_key]
        prev_seg = si
        while cur_key != start_key:
            keys.append(cur_key)
            first, second = adjacency[cur_key]
            next_seg, next_key = first if first[0] != prev_seg else second
            if used[next_seg]:
                p = points[cur_key]
                raise GeometryError(
                    "open chain at edge crossing "
                    f"({p[0]:.9g}, {p[1]:.9g}, {p[2]:.9g}): non-watertight mesh at this plane"
                )
            used[next_seg] = True
            prev_seg = next_seg
            cur_key = next_key
        loops.append(keys)
    return loops


def _orient_ccw(pts, normal):
    center = pts.mean(axis=0)
    rel = pts - center
    area_vec = 0.5 * np.cross(rel, np.roll(rel, -1, axis=0)).sum(axis=0)
    if area_vec @ normal < 0.0:
        return pts[::-1].copy()
    return pts


def _merge_collinear(pts):
    din = pts - np.roll(pts, 1, axis=0)
    dout = np.roll(pts, -1, axis=0) - pts
    cross = np.cross(din, dout)
    angles = np.arctan2(np.linalg.norm(cross, axis=1), (din * dout).sum(axis=1))
    keep = angles >= _COLLINEAR_TOL
    if keep.sum() >= 3:
        return pts[keep]
    return pts


def _canonical_start(pts):
    first = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))[0]
    return np.roll(pts, -first, axis=0)


def slice_mesh(mesh, plane, merge_collinear=True):
    """Intersect a watertight mesh with a plane.

    Returns a list of closed contours, each oriented counter-clockwise
    about the plane normal and started at its lexicographically smallest
    point. When a mesh vertex lies on the plane (within 1e-12) the offset
    is nudged by +1e-9 and the slice retried, at most 8 times.

    With ``merge_collinear`` (default) consecutive points whose turning
    angle is below 1e-6 rad are dropped, so slicing a box face yields its
    four corners only.
    """
    if mesh.num_faces == 0:
        raise GeometryError("cannot slice a mesh with no faces")
    offset = plane.offset
    retries = 0
    while True:
        dist = mesh.vertices @ plane.normal - offset
        if np.min(np.abs(dist)) > _VERTEX_ON_PLANE_TOL:
            break
        if retries >= _MAX_SLICE_RETRIES:
            raise GeometryError(
                "slice retry limit exceeded: mesh vertices keep landing on the plane"
            )
        offset += _OFFSET_STEP
        retries += 1
    segments, points = _cross_segments(mesh, dist)
    if not segments:
        return []
    contours = []
    for keys in _chain_loops(segments, points):
        pts = np.array([points[k] for k in keys])
        if len(pts) < 3:
            raise GeometryError("degenerate intersection loop with fewer than 3 crossings")
        pts = _orient_ccw(pts, plane.normal)
        if merge_collinear:
            pts = _merge_collinear(pts)
        pts = _canonical_start(pts)
        contour = Contour(pts, closed=True)
        deviation = np.abs(contour.points @ plane.normal - offset).max()
        if deviation > _PLANE_DISTANCE_TOL:
            raise GeometryError("contour point strayed from the slicing plane")
        contours.append(contour)
    contours.sort(key=lambda c: tuple(c.points[0]))
    return contours


def write_ply(points, path, comments=()):
    """Write points as an ASCII PLY file with float32 x/y/z properties."""
    pts = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    lines = ["ply", "format ascii 1.0"]
    for comment in comments:
        lines.append(f"comment {comment}")
    lines.append(f"element vertex {len(pts)}")
    lines.extend(["property float x", "property float y", "property float z", "end_header"])
    for p in pts:
        lines.append(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def read_ply(path):
    """Read an ASCII PLY point file written by :func:`write_ply`."""
    path = str(path)
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip()
        if header != "ply":
            raise MeshFormatError(f"{path}: not a PLY file")
        count = None
        line = handle.readline()
        while line:
            stripped = line.strip()
            if stripped == "end_header":
                break
            parts = stripped.split()
            if parts[:2] == ["element", "vertex"]:
                count = int(parts[2])
            line = handle.readline()
        else:
            raise MeshFormatError(f"{path}: missing end_header")
        if count is None:
            raise MeshFormatError(f"{path}: missing vertex element")
        rows = []
        for _ in range(count):
            parts = handle.readline().split()
            if len(parts) < 3:
                raise MeshFormatError(f"{path}: truncated vertex data")
            rows.append([float(parts[0]), float(parts[1]), float(parts[2])])
    return np.array(rows, dtype=np.float64).reshape(-1, 3)
