"""Semantic guidance without pretrained networks.

Two channels: a two-sided chamfer between fresh surface samples of the
deforming object and a guidance mesh, and a multi-view L1 between soft
silhouettes.  Additional terms can be registered by name, which is the hook
for plugging in an embedding-based loss later.
"""

import numpy as np
from scipy.spatial import cKDTree

from .poisson import DeformationState
from .sampling import SurfaceSampleSet, sample_surface
from .silhouette import CameraSet, default_camera_set, image_l1_loss, render_views

__all__ = [
    "GuidanceParams",
    "GuidanceTarget",
    "chamfer_loss",
    "guidance_loss",
    "register_guidance_term",
]

# keeps the two sides of the chamfer on different sample streams
_TARGET_SEED_OFFSET = 1_000_003

# name -> fn(state, target, iteration) -> (loss, vertex_grad)
_EXTRA_TERMS = {}


def register_guidance_term(name: str, fn):
    """Register an additional guidance term addressable from GuidanceParams."""
    if name in _EXTRA_TERMS:
        raise ValueError(f"guidance term {name!r} is already registered")
    _EXTRA_TERMS[name] = fn


def chamfer_loss(source: SurfaceSampleSet, target: SurfaceSampleSet):
    """Two-sided mean squared nearest-neighbor distance between sample sets.

    The derivative lands on the source points only, collecting both the
    source-to-target term and each target point's pull on its nearest source
    point.
    """
    s = source.points
    t = target.points
    if len(s) == 0 or len(t) == 0:
        raise ValueError("chamfer needs non-empty sample sets on both sides")
    d_st, nearest_t = cKDTree(t).query(s)
    d_ts, nearest_s = cKDTree(s).query(t)
    loss = float((d_st ** 2).mean() + (d_ts ** 2).mean())
    grad = 2.0 * (s - t[nearest_t]) / len(s)
    np.add.at(grad, nearest_s, 2.0 * (s[nearest_s] - t) / len(t))
    return loss, grad


class GuidanceParams:
    """Weights for the guidance channels; extra terms addressed by name."""

    __slots__ = ("chamfer_weight", "image_weight", "extra_weights")

    def __init__(self, chamfer_weight=1.0, image_weight=0.0, extra_weights=None):
        for name, value in (("chamfer_weight", chamfer_weight),
                            ("image_weight", image_weight)):
            if not (np.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        self.chamfer_weight = float(chamfer_weight)
        self.image_weight = float(image_weight)
        self.extra_weights = dict(extra_weights or {})
        for name in self.extra_weights:
            if name not in _EXTRA_TERMS:
                raise ValueError(f"unknown guidance term {name!r}")


class GuidanceTarget:
    """What the object should look like: a mesh, silhouettes, or both.

    Samples are redrawn every iteration from a seed offset by the iteration
    index, so runs are reproducible but consecutive steps see fresh points.
    Target silhouettes may be supplied directly (e.g. loaded from image
    files); otherwise they are rendered from the guidance mesh on first use
    and cached.
    """

    __slots__ = ("mesh", "target_silhouettes", "cameras", "sample_count",
                 "base_seed", "sigma")

    def __init__(self, mesh=None, target_silhouettes=None, cameras=None,
                 sample_count=4096, base_seed=0, sigma=0.01):
        if mesh is None and target_silhouettes is None:
            raise ValueError("a guidance target needs a mesh or silhouettes")
        if sample_count < 1:
            raise ValueError("sample_count must be positive")
        if not sigma > 0.0:
            raise ValueError("softness sigma must be positive")
        if cameras is not None and not isinstance(cameras, CameraSet):
            cameras = CameraSet(cameras)
        self.mesh = mesh
        self.target_silhouettes = (None if target_silhouettes is None
                                   else list(target_silhouettes))
        self.cameras = cameras
        self.sample_count = int(sample_count)
        self.base_seed = int(base_seed)
        self.sigma = float(sigma)

    def ensure_silhouettes(self, object_mesh):
        """Cameras framing object and target, and target images under them."""
        if self.cameras is None:
            framed = [m for m in (object_mesh, self.mesh) if m is not None]
            self.cameras = default_camera_set(framed)
        if self.target_silhouettes is None:
            if self.mesh is None:
                raise ValueError("image guidance needs target silhouettes "
                                 "or a guidance mesh to render them from")
            self.target_silhouettes = [r.image for r in
                                       render_views(self.mesh, self.cameras, self.sigma)]
        if len(self.target_silhouettes) != len(self.cameras):
            raise ValueError(f"{len(self.target_silhouettes)} target silhouettes "
                             f"for {len(self.cameras)} cameras")
        return self.cameras, self.target_silhouettes


def guidance_loss(state: DeformationState, target: GuidanceTarget,
                  params: GuidanceParams, iteration=0):
    """Weighted sum of the active guidance channels, with vertex derivatives."""
    deformed = state.mesh()
    loss = 0.0
    grad = np.zeros_like(state.vertices)

    if params.chamfer_weight > 0.0:
        if target.mesh is None:
            raise ValueError("chamfer guidance needs a guidance mesh")
        seed = target.base_seed + iteration
        # draw provenance on the rest mesh and reproject, so that within one
        # iteration the loss is a smooth function of the vertices; sampling
        # the deformed surface directly would tie face selection to the
        # deformed areas and break derivative checks
        rest = state.system.operator.mesh
        base = sample_surface(rest, target.sample_count, seed=seed)
        source = SurfaceSampleSet(base.reproject(state.vertices),
                                  base.face_indices, base.barycentric,
                                  base.vertex_ids, base.seed)
        reference = sample_surface(target.mesh, target.sample_count,
                                   seed=seed + _TARGET_SEED_OFFSET)
        value, point_grad = chamfer_loss(source, reference)
        loss += params.chamfer_weight * value
        grad += params.chamfer_weight * source.scatter_to_vertices(
            point_grad, len(state.vertices))

    if params.image_weight > 0.0:
        cameras, silhouettes = target.ensure_silhouettes(deformed)
        renders = render_views(deformed, cameras, target.sigma)
        value, image_grad = image_l1_loss(renders, silhouettes)
        loss += params.image_weight * value
        grad += params.image_weight * image_grad

    for name, weight in params.extra_weights.items():
        if weight > 0.0:
            value, extra_grad = _EXTRA_TERMS[name](state, target, iteration)
            loss += weight * value
            grad += weight * extra_grad

    return loss, grad
