"""Body geometry: contact points plus accelerated signed-distance queries."""

import numpy as np

from .bvh import ClosestPointIndex, winding_numbers
from .mesh import MeshError, TriMesh

__all__ = ["BodySpec", "SignAmbiguityError", "build_body", "signed_distance"]

# queries closer to the surface than this are treated as on it
ON_SURFACE_EPSILON = 1e-9

# winding numbers within this band around 0.5 cannot decide a sign
AMBIGUOUS_BAND = 0.1


class SignAmbiguityError(MeshError):
    """Winding number too close to the inside/outside threshold to decide."""

    def __init__(self, point_indices, winding):
        self.point_indices = [int(i) for i in point_indices]
        self.winding = [float(w) for w in winding]
        shown = ", ".join(f"{i} (w={w:.3f})"
                          for i, w in zip(self.point_indices[:5], self.winding))
        extra = "" if len(self.point_indices) <= 5 else f" and {len(self.point_indices) - 5} more"
        super().__init__(f"sign undecidable at query points {shown}{extra}; "
                         "is the body mesh closed?")


class BodySpec:
    """A fixed body mesh, its contact points, and the face query index."""

    __slots__ = ("mesh", "contact_points", "index")

    def __init__(self, mesh: TriMesh, contact_points: np.ndarray, index: ClosestPointIndex):
        self.mesh = mesh
        self.contact_points = contact_points
        self.index = index

    @property
    def n_contacts(self) -> int:
        return len(self.contact_points)


def build_body(mesh: TriMesh, contact_points=None) -> BodySpec:
    """Index a body mesh for queries.  Contact points may be empty or absent."""
    if mesh.n_faces == 0:
        raise MeshError("body mesh has no faces")
    if contact_points is None:
        contact_points = np.zeros((0, 3))
    contact_points = np.asarray(contact_points, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(contact_points)):
        raise ValueError("contact points must be finite")
    return BodySpec(mesh, contact_points, ClosestPointIndex(mesh.triangles()))


def signed_distance(spec: BodySpec, points):
    """Signed distance to the body and its derivative at each query point.

    Negative inside.  The derivative is the unit vector from the closest
    surface point toward the query, flipped for interior points; exactly on
    the surface the outward normal of the closest face stands in.  Raises
    SignAmbiguityError when the winding number cannot decide a side.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"expected (k, 3) query points, got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ValueError("query points must be finite")

    unsigned, closest, faces = spec.index.query(points)

    # anything beyond the root bounding box is outside; winding only for the rest
    lo, hi = spec.index.root_box()
    outside_box = np.any((points < lo) | (points > hi), axis=1)
    w = np.zeros(len(points))
    if not outside_box.all():
        w[~outside_box] = winding_numbers(spec.index.triangles, points[~outside_box])

    on_surface = unsigned <= ON_SURFACE_EPSILON
    undecided = ~outside_box & ~on_surface & (np.abs(w - 0.5) < AMBIGUOUS_BAND)
    if undecided.any():
        idx = np.flatnonzero(undecided)
        raise SignAmbiguityError(idx, w[idx])

    sign = np.where(w > 0.5, -1.0, 1.0)
    distances = sign * unsigned
    safe = np.where(on_surface, 1.0, unsigned)
    gradients = sign[:, None] * (points - closest) / safe[:, None]
    if on_surface.any():
        gradients[on_surface] = spec.mesh.face_normals()[faces[on_surface]]
    return distances, gradients
