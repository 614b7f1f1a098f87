"""Declarative run configuration loaded from a TOML file.

One file describes a whole deform run: mesh paths, the body and its contact
specification, loss weights, optimizer settings, camera rig, and the output
directory.  Relative paths are resolved against the config file's location.
"""

import os

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np

from .body import BodySpec, build_body
from .body_losses import BodyLossParams
from .guidance import GuidanceParams, GuidanceTarget
from .mesh import TriMesh, load_mesh
from .optimize import ObjectiveConfig
from .silhouette import default_camera_set

__all__ = ["ConfigError", "RunSetup", "load_config", "load_contact_points"]


class ConfigError(ValueError):
    """The config file is missing, malformed, or inconsistent."""


# every key the loader understands; anything else is treated as a typo
_KNOWN_KEYS = {
    "meshes": {"template", "guidance"},
    "body": {"mesh", "contact_vertices", "contact_indices", "threshold"},
    "weights": {"semantic", "contact", "penetration", "regularizer",
                "chamfer", "image"},
    "optimizer": {"iterations", "learning_rate", "beta1", "beta2", "epsilon",
                  "seed", "pinned_vertex", "snapshot_every"},
    "guidance": {"sample_count", "sigma", "seed"},
    "cameras": {"count", "resolution"},
    "output": {"directory"},
}


class RunSetup:
    """Everything `deform` needs, materialized from one config file."""

    __slots__ = ("template", "body", "target", "cfg", "output_dir")

    def __init__(self, template, body, target, cfg, output_dir):
        self.template = template
        self.body = body
        self.target = target
        self.cfg = cfg
        self.output_dir = output_dir


def load_contact_points(path) -> np.ndarray:
    """Contact points from an OBJ-style file; only the v lines are read."""
    points = []
    try:
        with open(path) as handle:
            for lineno, line in enumerate(handle, start=1):
                parts = line.split()
                if not parts or parts[0] != "v":
                    continue
                if len(parts) < 4:
                    raise ConfigError(f"{path}:{lineno}: v line needs 3 coordinates")
                try:
                    points.append([float(x) for x in parts[1:4]])
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read contact file {path}: {exc}") from exc
    if not points:
        raise ConfigError(f"contact file {path} contains no v lines")
    return np.asarray(points, dtype=np.float64)


def _check_keys(data):
    for section, table in data.items():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table of keys")
        for key in table:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")


def _load_mesh(path, base_dir, what) -> TriMesh:
    full = path if os.path.isabs(path) else os.path.join(base_dir, path)
    if not os.path.exists(full):
        raise ConfigError(f"{what} mesh not found: {full}")
    return load_mesh(full)


def _build_body(section, base_dir):
    if "mesh" not in section:
        raise ConfigError("[body] needs a mesh path")
    mesh = _load_mesh(section["mesh"], base_dir, "body")
    has_file = "contact_vertices" in section
    has_indices = "contact_indices" in section
    if has_file and has_indices:
        raise ConfigError("[body] takes contact_vertices or contact_indices, not both")
    contacts = None
    if has_file:
        path = section["contact_vertices"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        contacts = load_contact_points(path)
    elif has_indices:
        indices = section["contact_indices"]
        if (not isinstance(indices, list) or not indices
                or not all(isinstance(i, int) for i in indices)):
            raise ConfigError("contact_indices must be a non-empty list of integers")
        bad = [i for i in indices if not 0 <= i < mesh.n_vertices]
        if bad:
            raise ConfigError(f"contact_indices out of range for a "
                              f"{mesh.n_vertices}-vertex body: {bad}")
        contacts = mesh.vertices[indices]
    return build_body(mesh, contacts)


def load_config(path) -> RunSetup:
    """Parse and materialize a config file; raises ConfigError on any problem."""
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
    _check_keys(data)
    base_dir = os.path.dirname(os.path.abspath(path))

    meshes = data.get("meshes", {})
    if "template" not in meshes:
        raise ConfigError("[meshes] needs a template path")
    template = _load_mesh(meshes["template"], base_dir, "template")
    guide = (_load_mesh(meshes["guidance"], base_dir, "guidance")
             if "guidance" in meshes else None)

    body = _build_body(data["body"], base_dir) if "body" in data else None

    weights = data.get("weights", {})
    semantic = float(weights.get("semantic", 1.0))
    if guide is None and semantic > 0.0:
        raise ConfigError("weights.semantic is positive but [meshes] has no "
                          "guidance mesh; set semantic = 0 for body-only runs")
    threshold = float(data.get("body", {}).get("threshold", 0.0))
    try:
        body_params = BodyLossParams(
            contact_weight=float(weights.get("contact", 1.0)),
            penetration_weight=float(weights.get("penetration", 10.0)),
            penetration_threshold=threshold)
        guidance_params = GuidanceParams(
            chamfer_weight=float(weights.get("chamfer", 1.0)),
            image_weight=float(weights.get("image", 0.0)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    guidance_section = data.get("guidance", {})
    target = None
    if guide is not None:
        cameras = None
        if guidance_params.image_weight > 0.0:
            camera_section = data.get("cameras", {})
            cameras = default_camera_set(
                [template, guide],
                count=int(camera_section.get("count", 8)),
                resolution=int(camera_section.get("resolution", 128)))
        target = GuidanceTarget(
            mesh=guide,
            cameras=cameras,
            sample_count=int(guidance_section.get("sample_count", 4096)),
            base_seed=int(guidance_section.get("seed", 0)),
            sigma=float(guidance_section.get("sigma", 0.01)))

    output_dir = data.get("output", {}).get("directory", "out")
    if not os.path.isabs(output_dir):
        output_dir = os.path.join(base_dir, output_dir)

    optimizer = data.get("optimizer", {})
    snapshot_every = int(optimizer.get("snapshot_every", 0))
    pinned = optimizer.get("pinned_vertex")
    if pinned is not None:
        pinned = int(pinned)
        if not 0 <= pinned < template.n_vertices:
            raise ConfigError(f"pinned_vertex {pinned} out of range for a "
                              f"{template.n_vertices}-vertex template")
    try:
        cfg = ObjectiveConfig(
            semantic_weight=semantic,
            body_params=body_params,
            guidance_params=guidance_params,
            regularizer_weight=float(weights.get("regularizer", 0.05)),
            iterations=int(optimizer.get("iterations", 1000)),
            learning_rate=float(optimizer.get("learning_rate", 1e-3)),
            beta1=float(optimizer.get("beta1", 0.9)),
            beta2=float(optimizer.get("beta2", 0.999)),
            epsilon=float(optimizer.get("epsilon", 1e-8)),
            seed=int(optimizer.get("seed", 0)),
            snapshot_every=snapshot_every,
            snapshot_dir=(os.path.join(output_dir, "snapshots")
                          if snapshot_every else None),
            pinned_vertex=pinned)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunSetup(template, body, target, cfg, output_dir)
