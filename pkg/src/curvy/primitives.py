"""Procedural watertight test meshes: boxes, spheres, ellipsoids, tetrahedra."""
from __future__ import annotations

import numpy as np

from .geometry import TriangleMesh

__all__ = ["box_mesh", "uv_sphere_mesh", "ellipsoid_mesh", "tetrahedron_mesh", "octahedron_mesh"]


def box_mesh(extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)):
    """Axis-aligned box with the given edge lengths, 12 triangles."""
    ex, ey, ez = (float(e) / 2.0 for e in extents)
    cx, cy, cz = center
    corners = np.array([
        [-ex, -ey, -ez], [ex, -ey, -ez], [ex, ey, -ez], [-ex, ey, -ez],
        [-ex, -ey, ez], [ex, -ey, ez], [ex, ey, ez], [-ex, ey, ez],
    ]) + np.array([cx, cy, cz])
    quads = [
        (0, 3, 2, 1),  # bottom
        (4, 5, 6, 7),  # top
        (0, 1, 5, 4),  # front
        (2, 3, 7, 6),  # back
        (1, 2, 6, 5),  # right
        (3, 0, 4, 7),  # left
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriangleMesh(corners, np.array(faces))


def uv_sphere_mesh(radius=0.5, center=(0.0, 0.0, 0.0), rings=8, segments=12):
    """Latitude/longitude sphere; poles are triangle fans, bands are quads."""
    if rings < 2 or segments < 3:
        raise ValueError("need rings >= 2 and segments >= 3")
    verts = [np.array([0.0, 0.0, radius])]
    for i in range(1, rings):
        theta = np.pi * i / rings
        z = radius * np.cos(theta)
        r = radius * np.sin(theta)
        for j in range(segments):
            phi = 2.0 * np.pi * j / segments
            verts.append(np.array([r * np.cos(phi), r * np.sin(phi), z]))
    verts.append(np.array([0.0, 0.0, -radius]))
    verts = np.array(verts) + np.asarray(center, dtype=np.float64)
    top, bottom = 0, len(verts) - 1

    def ring_vertex(i, j):
        return 1 + (i - 1) * segments + (j % segments)

    faces = []
    for j in range(segments):
        faces.append((top, ring_vertex(1, j), ring_vertex(1, j + 1)))
    for i in range(1, rings - 1):
        for j in range(segments):
            a = ring_vertex(i, j)
            b = ring_vertex(i, j + 1)
            c = ring_vertex(i + 1, j + 1)
            d = ring_vertex(i + 1, j)
            faces.append((a, d, c))
            faces.append((a, c, b))
    for j in range(segments):
        faces.append((bottom, ring_vertex(rings - 1, j + 1), ring_vertex(rings - 1, j)))
    return TriangleMesh(verts, np.array(faces))


def ellipsoid_mesh(semi_axes=(0.5, 0.35, 0.25), center=(0.0, 0.0, 0.0), rings=8, segments=12):
    """Ellipsoid built by anisotropically scaling a unit sphere."""
    sphere = uv_sphere_mesh(radius=1.0, rings=rings, segments=segments)
    scaled = sphere.vertices * np.asarray(semi_axes, dtype=np.float64)
    return TriangleMesh(scaled + np.asarray(center, dtype=np.float64), sphere.faces)


def tetrahedron_mesh(side=1.0, height=None):
    """Upright tetrahedron: equilateral base at z=0, apex above the centroid."""
    side = float(side)
    if height is None:
        height = side * np.sqrt(2.0 / 3.0)  # regular tetrahedron
    r = side / np.sqrt(3.0)  # circumradius of the base triangle
    base = np.array([
        [r * np.cos(a), r * np.sin(a), 0.0]
        for a in (np.pi / 2, np.pi / 2 + 2 * np.pi / 3, np.pi / 2 + 4 * np.pi / 3)
    ])
    apex = np.array([0.0, 0.0, float(height)])
    verts = np.vstack([base, apex[None, :]])
    faces = np.array([(0, 2, 1), (0, 1, 3), (1, 2, 3), (2, 0, 3)])
    return TriangleMesh(verts, faces)


def octahedron_mesh(radius=0.5):
    """Regular octahedron with four equator vertices in the z=0 plane."""
    r = float(radius)
    verts = np.array([
        [r, 0, 0], [0, r, 0], [-r, 0, 0], [0, -r, 0], [0, 0, r], [0, 0, -r],
    ], dtype=np.float64)
    faces = np.array([
        (0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4),
        (1, 0, 5), (2, 1, 5), (3, 2, 5), (0, 3, 5),
    ])
    return TriangleMesh(verts, faces)
