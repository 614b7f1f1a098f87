"""Small built-in scenarios used by the command line and the test suite.

Everything here is generated from the primitive builders, so no data files
ship with the package; sizes are chosen so derivative checks and short
optimization runs finish in seconds.
"""

import numpy as np

from .body import build_body
from .body_losses import BodyLossParams
from .guidance import GuidanceParams, GuidanceTarget
from .optimize import ObjectiveConfig
from .primitives import cylinder, icosphere, ring_points, torus
from .silhouette import default_camera_set

__all__ = ["gradcheck_fixture", "torus_on_cylinder"]


def gradcheck_fixture():
    """20-face template with every loss term active.

    The body sphere slightly exceeds the template radius so the perturbed
    check point genuinely penetrates; the camera rig is small enough that the
    image term's full sweep stays fast.
    """
    template = icosphere(1.0, 0)
    body = build_body(icosphere(1.02, 1), ring_points(1.02, 0.0, 6))
    guide = icosphere(1.15, 0)
    cameras = default_camera_set([template, guide], count=2, resolution=32)
    target = GuidanceTarget(mesh=guide, cameras=cameras, sample_count=256,
                            base_seed=1, sigma=0.05)
    cfg = ObjectiveConfig(body_params=BodyLossParams(1.0, 10.0, 0.0),
                          guidance_params=GuidanceParams(chamfer_weight=1.0),
                          regularizer_weight=0.05)
    return template, body, target, cfg


def torus_on_cylinder(ring_radius=0.45, tube_radius=0.2, cylinder_radius=0.3,
                      guide_ring_radius=None, guide_tube_radius=None,
                      segments=(16, 10), contact_count=12):
    """A bracelet-style scenario: torus template around a cylinder limb.

    The default torus dips below the cylinder surface (inner radius 0.25
    against cylinder radius 0.3), so the penetration term has real work to
    do; contacts ring the cylinder surface at its waist.  Returns the
    template, the body, and the guidance mesh.
    """
    template = torus(ring_radius, tube_radius, segments[0], segments[1])
    limb = cylinder(cylinder_radius, 2.4, segments=24, rings=6,
                    center=(0.0, 0.0, 0.0))
    contacts = ring_points(cylinder_radius, 0.0, contact_count)
    body = build_body(limb, contacts)
    if guide_ring_radius is None:
        guide_ring_radius = ring_radius
    if guide_tube_radius is None:
        guide_tube_radius = tube_radius
    guide = torus(guide_ring_radius, guide_tube_radius, segments[0], segments[1])
    return template, body, guide
