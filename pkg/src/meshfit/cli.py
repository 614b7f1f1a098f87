"""Command-line front end: deform, eval, render, gradcheck."""

import argparse
import os
import sys

import numpy as np

from .body import build_body
from .body_losses import eval_metrics, write_distance_map
from .config import ConfigError, load_config, load_contact_points
from .fixtures import gradcheck_fixture
from .mesh import MeshError, load_mesh, write_mesh
from .optimize import (OptimizationError, finite_difference_check,
                       run_optimization, run_two_stage)
from .silhouette import default_camera_set, render_views, write_pgm

GRADCHECK_TOLERANCE = 1e-3


def _cmd_deform(args):
    setup = load_config(args.config)
    os.makedirs(setup.output_dir, exist_ok=True)
    if args.start_from_guidance or args.two_stage:
        final, record = run_two_stage(setup.template, setup.body, setup.target,
                                      setup.cfg,
                                      start_from_guidance=args.start_from_guidance)
    else:
        final, record = run_optimization(setup.template, setup.body,
                                         setup.target, setup.cfg)
    mesh_path = os.path.join(setup.output_dir, "final.obj")
    record_path = os.path.join(setup.output_dir, "record.csv")
    write_mesh(final, mesh_path)
    record.write_csv(record_path)
    last = record.rows[-1]
    print(f"finished {len(record)} iterations; total loss {last['total']!r}")
    if setup.body is not None:
        dp, dc, _ = eval_metrics(final, setup.body)
        print(f"penetration {dp!r} over {final.n_vertices} vertices")
        print(f"contact {dc!r}")
    print(f"wrote {mesh_path}")
    print(f"wrote {record_path}")
    return 0


def _cmd_eval(args):
    mesh = load_mesh(args.object)
    body_mesh = load_mesh(args.body)
    contacts = load_contact_points(args.contacts) if args.contacts else None
    body = build_body(body_mesh, contacts)
    dp, dc, distances = eval_metrics(mesh, body)
    print(f"penetration {dp!r} over {mesh.n_vertices} vertices")
    if body.n_contacts > 0:
        print(f"contact {dc!r}")
    if args.map:
        write_distance_map(args.map, distances)
        print(f"wrote {args.map}")
    return 0


def _cmd_render(args):
    mesh = load_mesh(args.mesh)
    cameras = default_camera_set([mesh], count=args.count,
                                 resolution=args.resolution)
    renders = render_views(mesh, cameras, args.sigma)
    os.makedirs(args.out, exist_ok=True)
    for index, render in enumerate(renders):
        path = os.path.join(args.out, f"view_{index:02d}.pgm")
        write_pgm(path, render.image)
        print(f"wrote {path}")
    return 0


def _cmd_gradcheck(args):
    template, body, target, cfg = gradcheck_fixture()
    errors = finite_difference_check(template, body, target, cfg, seed=11)
    worst = max(errors.values())
    for name in sorted(errors):
        print(f"{name}: max relative error {errors[name]:.3e}")
    if worst < GRADCHECK_TOLERANCE:
        print(f"ok: all terms below {GRADCHECK_TOLERANCE}")
        return 0
    print(f"FAILED: worst term at {worst:.3e}, tolerance {GRADCHECK_TOLERANCE}")
    return 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="meshfit",
        description="Deform a template mesh to semantic guidance while "
                    "respecting a body surface.")
    sub = parser.add_subparsers(dest="command", required=True)

    deform = sub.add_parser("deform", help="run an optimization from a config file")
    deform.add_argument("--config", required=True, help="TOML run configuration")
    deform.add_argument("--two-stage", action="store_true",
                        help="semantics first, then body terms only")
    deform.add_argument("--start-from-guidance", action="store_true",
                        help="skip stage one and refine the guidance mesh directly")
    deform.set_defaults(run=_cmd_deform)

    evaluate = sub.add_parser("eval", help="report body-fit metrics for a mesh")
    evaluate.add_argument("--object", required=True, help="object mesh (OBJ)")
    evaluate.add_argument("--body", required=True, help="body mesh (OBJ)")
    evaluate.add_argument("--contacts", help="contact points (OBJ v lines)")
    evaluate.add_argument("--map", help="write per-vertex signed distances here")
    evaluate.set_defaults(run=_cmd_eval)

    render = sub.add_parser("render", help="write soft silhouettes of a mesh")
    render.add_argument("--mesh", required=True, help="mesh to render (OBJ)")
    render.add_argument("--out", default=".", help="output directory")
    render.add_argument("--count", type=int, default=8, help="number of views")
    render.add_argument("--resolution", type=int, default=128,
                        help="image size in pixels")
    render.add_argument("--sigma", type=float, default=0.01,
                        help="silhouette softness in world units")
    render.set_defaults(run=_cmd_render)

    gradcheck = sub.add_parser(
        "gradcheck", help="finite-difference check on the built-in fixture")
    gradcheck.set_defaults(run=_cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (ConfigError, MeshError, OptimizationError, OSError, ValueError) as exc:
        term = getattr(exc, "term", None)
        suffix = f" (term: {term})" if term else ""
        print(f"error: {exc}{suffix}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
