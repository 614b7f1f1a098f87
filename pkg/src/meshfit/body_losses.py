"""Contact attraction and penetration penalty, with vertex-space derivatives."""

import numpy as np

from .body import BodySpec, signed_distance
from .mesh import TriMesh

__all__ = [
    "BodyLossParams",
    "body_loss",
    "contact_loss",
    "eval_metrics",
    "penetration_loss",
    "write_distance_map",
]


class BodyLossParams:
    """Weights for the combined body objective.

    The threshold widens the penalty band: zero penalizes only true
    penetration, positive values also penalize proximity.
    """

    __slots__ = ("contact_weight", "penetration_weight", "penetration_threshold")

    def __init__(self, contact_weight=1.0, penetration_weight=10.0,
                 penetration_threshold=0.0):
        for name, value in (("contact_weight", contact_weight),
                            ("penetration_weight", penetration_weight)):
            if not (np.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        if not np.isfinite(penetration_threshold):
            raise ValueError("penetration_threshold must be finite")
        self.contact_weight = float(contact_weight)
        self.penetration_weight = float(penetration_weight)
        self.penetration_threshold = float(penetration_threshold)


def contact_loss(object_vertices, contact_points):
    """Mean squared distance from each contact point to its nearest vertex.

    The derivative flows only to each contact point's nearest object vertex;
    the nearest-vertex assignment is recomputed fresh on every call.
    """
    vertices = np.asarray(object_vertices, dtype=np.float64)
    contacts = np.asarray(contact_points, dtype=np.float64).reshape(-1, 3)
    if len(contacts) == 0:
        raise ValueError("contact loss needs at least one contact point")
    if len(vertices) == 0:
        raise ValueError("contact loss needs at least one object vertex")

    diff = contacts[:, None, :] - vertices[None, :, :]
    sq = np.einsum("cvd,cvd->cv", diff, diff)
    nearest = sq.argmin(axis=1)
    loss = sq[np.arange(len(contacts)), nearest].mean()

    grad = np.zeros_like(vertices)
    np.add.at(grad, nearest, 2.0 * (vertices[nearest] - contacts) / len(contacts))
    return float(loss), grad


def penetration_loss(object_vertices, body: BodySpec, threshold=0.0):
    """Sum of squared signed distances over vertices closer than the threshold."""
    vertices = np.asarray(object_vertices, dtype=np.float64)
    d, ddv = signed_distance(body, vertices)
    active = d < threshold
    loss = float((d[active] ** 2).sum())
    grad = np.zeros_like(vertices)
    grad[active] = 2.0 * d[active, None] * ddv[active]
    return loss, grad


def body_loss(object_vertices, body: BodySpec, params: BodyLossParams):
    """Weighted sum of the contact and penetration terms.

    Each weight is applied exactly once, here; a zero weight skips its term
    entirely, so contact points may be absent when their weight is zero.
    """
    vertices = np.asarray(object_vertices, dtype=np.float64)
    loss = 0.0
    grad = np.zeros_like(vertices)
    if params.contact_weight > 0.0:
        value, g = contact_loss(vertices, body.contact_points)
        loss += params.contact_weight * value
        grad += params.contact_weight * g
    if params.penetration_weight > 0.0:
        value, g = penetration_loss(vertices, body, params.penetration_threshold)
        loss += params.penetration_weight * value
        grad += params.penetration_weight * g
    return loss, grad


def eval_metrics(object_mesh: TriMesh, body: BodySpec):
    """Penetration score, contact score, and per-vertex signed distances.

    The penetration score sums squared negative distances over object
    vertices (report it together with the vertex count); the contact score is
    the unweighted contact loss, or zero when there are no contact points.
    """
    d, _ = signed_distance(body, object_mesh.vertices)
    penetration_score = float((d[d < 0.0] ** 2).sum())
    if body.n_contacts > 0:
        contact_score = contact_loss(object_mesh.vertices, body.contact_points)[0]
    else:
        contact_score = 0.0
    return penetration_score, contact_score, d


def write_distance_map(path, distances):
    """One signed distance per line, for coloring penetration maps."""
    np.savetxt(path, np.asarray(distances, dtype=np.float64), fmt="%.17g")
