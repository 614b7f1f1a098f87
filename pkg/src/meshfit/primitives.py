"""Procedural test meshes: icosphere, torus, box, capped cylinder.

These are the bundled fixtures used by the test-suite and the ``gradcheck``
CLI subcommand. All generators produce watertight meshes with outward-facing
(counter-clockwise) triangles, so winding-number sign queries against them
are well defined.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh

_ICO_T = (1.0 + np.sqrt(5.0)) / 2.0

_ICO_VERTS = np.array(
    [
        (-1, _ICO_T, 0), (1, _ICO_T, 0), (-1, -_ICO_T, 0), (1, -_ICO_T, 0),
        (0, -1, _ICO_T), (0, 1, _ICO_T), (0, -1, -_ICO_T), (0, 1, -_ICO_T),
        (_ICO_T, 0, -1), (_ICO_T, 0, 1), (-_ICO_T, 0, -1), (-_ICO_T, 0, 1),
    ],
    dtype=np.float64,
)

_ICO_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)


def icosphere(radius: float = 1.0, subdivisions: int = 2, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Geodesic sphere from a subdivided icosahedron (20 * 4**subdivisions faces)."""
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(subdivisions):
        midpoint_cache: dict = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint_cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoint_cache[key] = len(verts) - 1
            return midpoint_cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    vertices = np.asarray(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriMesh(vertices, np.asarray(faces, dtype=np.int64))


def torus(
    major_radius: float = 1.0,
    minor_radius: float = 0.3,
    n_major: int = 24,
    n_minor: int = 12,
    center=(0.0, 0.0, 0.0),
) -> TriMesh:
    """Torus around the z axis; tube circle of radius ``minor_radius``."""
    phi = 2.0 * np.pi * np.arange(n_major) / n_major
    theta = 2.0 * np.pi * np.arange(n_minor) / n_minor
    ring = major_radius + minor_radius * np.cos(theta)[None, :]
    x = ring * np.cos(phi)[:, None]
    y = ring * np.sin(phi)[:, None]
    z = np.broadcast_to(minor_radius * np.sin(theta)[None, :], x.shape)
    vertices = np.stack([x, y, z], axis=-1).reshape(-1, 3) + np.asarray(center)

    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            v00 = i * n_minor + j
            v01 = i * n_minor + (j + 1) % n_minor
            v10 = ((i + 1) % n_major) * n_minor + j
            v11 = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
    return TriMesh(vertices, np.asarray(faces, dtype=np.int64))


def box(half_extent=1.0, segments: int = 1, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Axis-aligned box surface; each side split into segments x segments quads.

    ``half_extent`` may be a scalar or a per-axis triple.
    """
    h = np.broadcast_to(np.asarray(half_extent, dtype=np.float64), (3,)).copy()
    # (normal axis, sign, u axis, v axis) with u x v pointing outward
    sides = [
        (0, +1, 1, 2), (0, -1, 2, 1),
        (1, +1, 2, 0), (1, -1, 0, 2),
        (2, +1, 0, 1), (2, -1, 1, 0),
    ]
    all_verts = []
    all_faces = []
    ticks = np.linspace(-1.0, 1.0, segments + 1)
    for axis, sign, ua, va in sides:
        base = len(all_verts)
        for u in ticks:
            for v in ticks:
                p = np.zeros(3)
                p[axis] = sign * h[axis]
                p[ua] = u * h[ua]
                p[va] = v * h[va]
                all_verts.append(p)
        n = segments + 1
        for i in range(segments):
            for j in range(segments):
                v00 = base + i * n + j
                v01 = v00 + 1
                v10 = v00 + n
                v11 = v10 + 1
                all_faces.append((v00, v10, v11))
                all_faces.append((v00, v11, v01))
    verts = np.asarray(all_verts)
    # weld the duplicated edge/corner vertices shared between sides
    keys = np.round(verts / np.maximum(h.max(), 1e-30), 9)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    welded = verts[first]
    faces = inverse[np.asarray(all_faces, dtype=np.int64)]
    return TriMesh(welded + np.asarray(center), faces)


def cylinder(
    radius: float = 0.3,
    height: float = 2.0,
    segments: int = 24,
    rings: int = 1,
    center=(0.0, 0.0, 0.0),
) -> TriMesh:
    """Closed cylinder along the z axis with fan-triangulated caps."""
    phi = 2.0 * np.pi * np.arange(segments) / segments
    zs = np.linspace(-height / 2.0, height / 2.0, rings + 1)
    verts = []
    for z in zs:
        for p in phi:
            verts.append((radius * np.cos(p), radius * np.sin(p), z))
    faces = []
    for k in range(rings):
        for i in range(segments):
            v00 = k * segments + i
            v10 = k * segments + (i + 1) % segments
            v01 = v00 + segments
            v11 = v10 + segments
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
    bottom_center = len(verts)
    verts.append((0.0, 0.0, zs[0]))
    top_center = len(verts)
    verts.append((0.0, 0.0, zs[-1]))
    top_base = rings * segments
    for i in range(segments):
        j = (i + 1) % segments
        faces.append((bottom_center, j, i))
        faces.append((top_center, top_base + i, top_base + j))
    vertices = np.asarray(verts, dtype=np.float64) + np.asarray(center)
    return TriMesh(vertices, np.asarray(faces, dtype=np.int64))


def ring_points(radius: float, z: float = 0.0, count: int = 16, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Evenly spaced points on a horizontal circle; used to mark contact rings."""
    phi = 2.0 * np.pi * np.arange(count) / count
    pts = np.stack([radius * np.cos(phi), radius * np.sin(phi), np.full(count, float(z))], axis=1)
    return pts + np.asarray(center, dtype=np.float64)
