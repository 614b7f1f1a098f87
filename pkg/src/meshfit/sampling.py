"""Area-weighted surface sampling with barycentric provenance.

Samples remember which face and barycentric coordinates they came from, so a
sample set can be re-evaluated at deformed vertex positions and point-space
gradients can be scattered back onto the vertices. This is what lets
Chamfer-style losses on sampled points reach the optimization variables.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh


class SurfaceSampleSet:
    """Points on a mesh surface plus their (face, barycentric) provenance."""

    __slots__ = ("points", "face_indices", "barycentric", "vertex_ids", "seed")

    def __init__(self, points, face_indices, barycentric, vertex_ids, seed: int):
        self.points = points
        self.face_indices = face_indices
        self.barycentric = barycentric
        self.vertex_ids = vertex_ids  # (k, 3) vertex indices of each sample's face
        self.seed = seed

    def __len__(self) -> int:
        return len(self.points)

    def reproject(self, vertices: np.ndarray) -> np.ndarray:
        """Sample positions under new vertex coordinates, same provenance."""
        corners = vertices[self.vertex_ids]  # (k, 3, 3)
        return np.einsum("ka,kad->kd", self.barycentric, corners)

    def scatter_to_vertices(self, point_grads: np.ndarray, n_vertices: int) -> np.ndarray:
        """Accumulate per-point gradients onto the vertices, shape (n, 3).

        The chain rule through the barycentric combination: each sample point
        is a fixed convex combination of its face's vertices.
        """
        out = np.zeros((n_vertices, 3))
        contrib = self.barycentric[:, :, None] * point_grads[:, None, :]  # (k, 3, 3)
        np.add.at(out, self.vertex_ids.ravel(), contrib.reshape(-1, 3))
        return out


def sample_surface(mesh: TriMesh, count: int, seed: int) -> SurfaceSampleSet:
    """Draw area-weighted uniform samples from the mesh surface.

    Deterministic for a given seed. Raises on an empty mesh or count < 1.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if mesh.n_faces == 0:
        raise ValueError("cannot sample an empty mesh")
    areas = mesh.face_areas()
    rng = np.random.default_rng(seed)
    face_indices = rng.choice(mesh.n_faces, size=count, p=areas / areas.sum())
    r1, r2 = rng.random((2, count))
    s = np.sqrt(r1)
    bary = np.stack([1.0 - s, s * (1.0 - r2), s * r2], axis=1)
    vertex_ids = mesh.faces[face_indices]
    points = np.einsum("ka,kad->kd", bary, mesh.vertices[vertex_ids])
    return SurfaceSampleSet(points, face_indices, bary, vertex_ids, seed)
