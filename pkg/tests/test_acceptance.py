"""End-to-end acceptance checks; each test prints one pass/fail line.

Run with `pytest -s tests/test_acceptance.py` to see the summary lines as
the criteria execute.
"""

import time

import numpy as np

from conftest import random_rotation
from meshfit.body import build_body, signed_distance
from meshfit.body_losses import BodyLossParams, contact_loss, eval_metrics, penetration_loss
from meshfit.bvh import ClosestPointIndex, closest_point_on_triangles
from meshfit.cli import main
from meshfit.fixtures import gradcheck_fixture, torus_on_cylinder
from meshfit.gradient import build_gradient_operator
from meshfit.guidance import GuidanceTarget, chamfer_loss
from meshfit.mesh import write_mesh
from meshfit.optimize import (ObjectiveConfig, finite_difference_check,
                              run_optimization, run_two_stage)
from meshfit.poisson import (JacobianField, assemble_system, init_identity_field,
                             solve_deformation)
from meshfit.primitives import box, cylinder, icosphere, ring_points, torus
from meshfit.sampling import sample_surface
from meshfit.silhouette import Camera, render_silhouette


def report(number, name, ok, detail):
    print(f"criterion {number} ({name}): {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {number} ({name}) failed: {detail}"


def aligned_error(solved, expected):
    shift = (expected - solved).mean(axis=0)
    return float(np.abs(solved + shift - expected).max())


def surface_chamfer(a, b, count=8192, seed=0):
    """Two-sided mean squared distance against the exact surfaces."""
    index_a = ClosestPointIndex(a.triangles())
    index_b = ClosestPointIndex(b.triangles())
    pa = sample_surface(a, count, seed=seed).points
    pb = sample_surface(b, count, seed=seed + 1).points
    return float((index_b.query(pa)[0] ** 2).mean()
                 + (index_a.query(pb)[0] ** 2).mean())


def test_criterion_1_poisson_exactness():
    mesh = icosphere(1.0, 2)
    assert mesh.n_faces <= 1000
    rotation = random_rotation(3)
    started = time.perf_counter()
    op = build_gradient_operator(mesh)
    system = assemble_system(mesh, op, pinned_vertex=0)
    worst = 0.0
    for matrix in (np.eye(3), 2.0 * np.eye(3), rotation):
        field = JacobianField(np.broadcast_to(matrix, (mesh.n_faces, 3, 3)).copy())
        state = solve_deformation(system, field)
        expected = mesh.vertices @ matrix.T
        worst = max(worst, aligned_error(state.vertices, expected))
    elapsed = time.perf_counter() - started
    report(1, "Poisson exactness", worst <= 1e-8 and elapsed < 1.0,
           f"max aligned error {worst:.2e} on {mesh.n_faces} faces in {elapsed:.2f}s")


def test_criterion_2_adjoint_correctness():
    template, body, target, cfg = gradcheck_fixture()
    assert template.n_faces == 20
    started = time.perf_counter()
    errors = finite_difference_check(template, body, target, cfg, seed=11)
    elapsed = time.perf_counter() - started
    worst = max(errors.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in sorted(errors.items()))
    report(2, "adjoint correctness", worst < 1e-3 and elapsed < 30.0,
           f"{detail}; {elapsed:.1f}s")


def brute_chamfer(a_points, b_points):
    forward = 0.0
    for p in a_points:
        forward += min(float(np.dot(p - q, p - q)) for q in b_points)
    backward = 0.0
    for q in b_points:
        backward += min(float(np.dot(p - q, p - q)) for p in a_points)
    return forward / len(a_points) + backward / len(b_points)


def brute_contact(vertices, contacts):
    total = 0.0
    for c in contacts:
        total += min(float(np.dot(v - c, v - c)) for v in vertices)
    return total / len(contacts)


def brute_penetration(vertices, mesh, threshold):
    triangles = mesh.triangles()
    total = 0.0
    for p in vertices:
        best = np.inf
        for tri in triangles:
            cp = closest_point_on_triangles(p, tri[0], tri[1], tri[2])
            dist = float(np.linalg.norm(p - cp))
            if dist < best:
                best = dist
        angle = 0.0
        for tri in triangles:
            a, b, c = tri[0] - p, tri[1] - p, tri[2] - p
            la, lb, lc = np.linalg.norm(a), np.linalg.norm(b), np.linalg.norm(c)
            num = float(np.dot(a, np.cross(b, c)))
            den = (la * lb * lc + np.dot(a, b) * lc + np.dot(b, c) * la
                   + np.dot(c, a) * lb)
            angle += 2.0 * np.arctan2(num, den)
        d = -best if angle / (4.0 * np.pi) > 0.5 else best
        if d < threshold:
            total += d * d
    return total


def test_criterion_3_loss_oracles():
    source = sample_surface(icosphere(1.0, 2), 200, seed=4)
    reference = sample_surface(icosphere(1.2, 2, center=(0.3, 0.0, 0.0)), 200, seed=5)
    chamfer_err = abs(chamfer_loss(source, reference)[0]
                      - brute_chamfer(source.points, reference.points))

    body_shape = torus(1.0, 0.3, 10, 5)
    assert body_shape.n_vertices == 50
    contacts = sample_surface(icosphere(1.1, 2), 200, seed=6).points
    contact_err = abs(contact_loss(body_shape.vertices, contacts)[0]
                      - brute_contact(body_shape.vertices, contacts))

    shell = icosphere(1.05, 2)
    body = build_body(shell)
    pen_value = penetration_loss(body_shape.vertices, body, 0.0)[0]
    pen_err = abs(pen_value - brute_penetration(body_shape.vertices, shell, 0.0))
    ok = chamfer_err < 1e-9 and contact_err < 1e-9 and pen_err < 1e-9
    report(3, "loss oracles", ok,
           f"chamfer {chamfer_err:.1e}, contact {contact_err:.1e}, "
           f"penetration {pen_err:.1e} (value {pen_value:.3e})")


def test_criterion_4_rasterizer_calibration():
    camera = Camera((1.0, 0.0, 0.0), half_extent=2.0, resolution=256)
    render = render_silhouette(icosphere(1.0, 3), camera, sigma=0.01)
    coverage = float((render.image.pixels > 0.5).mean())
    expected = np.pi / 16.0
    rel = abs(coverage - expected) / expected
    report(4, "rasterizer calibration", rel <= 0.02,
           f"coverage {coverage:.5f} vs {expected:.5f} ({100 * rel:.2f}% off)")


def test_criterion_5_body_loss_effect():
    template, body, guide = torus_on_cylinder()
    target = GuidanceTarget(mesh=guide, sample_count=1024, base_seed=5)
    cfg = ObjectiveConfig(iterations=1000, learning_rate=5e-3,
                          body_params=BodyLossParams(1.0, 10.0, 0.0),
                          regularizer_weight=0.001)
    started = time.perf_counter()
    fitted, _ = run_optimization(template, body, target, cfg)
    ablated, _ = run_optimization(template, body, target,
                                  cfg.copy_with(body_params=BodyLossParams(0.0, 0.0, 0.0)))
    elapsed = time.perf_counter() - started
    dp_on, dc_on, _ = eval_metrics(fitted, body)
    dp_off, _, _ = eval_metrics(ablated, body)
    ok = dp_on <= 1e-2 * dp_off and dc_on < 1e-2 and elapsed < 300.0
    report(5, "body-loss effect", ok,
           f"Dp {dp_off:.2e} -> {dp_on:.2e} ({dp_on / dp_off:.1e}x), "
           f"Dc {dc_on:.2e}, {elapsed:.0f}s")


def test_criterion_6_joint_vs_two_stage():
    template = torus(0.55, 0.12, 16, 10)
    body = build_body(cylinder(0.3, 2.4, segments=24, rings=6),
                      ring_points(0.3, 0.0, 12))
    guide = torus(0.45, 0.17, 16, 10)
    assert eval_metrics(guide, body)[0] > 1e-3  # the guidance mesh penetrates
    target = GuidanceTarget(mesh=guide, sample_count=1024, base_seed=5)
    cfg = ObjectiveConfig(iterations=1000, learning_rate=5e-3,
                          body_params=BodyLossParams(1.0, 10.0, 0.0),
                          regularizer_weight=1e-5)
    semantic_only, _ = run_optimization(
        template, body, target,
        cfg.copy_with(body_params=BodyLossParams(0.0, 0.0, 0.0)))
    joint, _ = run_optimization(template, body, target, cfg)
    staged, _ = run_two_stage(template, body, target, cfg)

    cd_semantic = surface_chamfer(semantic_only, guide)
    cd_joint = surface_chamfer(joint, guide)
    cd_staged = surface_chamfer(staged, guide)
    dp_joint = eval_metrics(joint, body)[0]
    ok = (dp_joint <= 1e-3 and cd_joint <= 2.0 * cd_semantic
          and cd_staged > 2.0 * cd_semantic)
    report(6, "joint vs two-stage", ok,
           f"Dp(joint) {dp_joint:.1e}; CD semantic {cd_semantic:.2e}, "
           f"joint {cd_joint / cd_semantic:.2f}x, two-stage {cd_staged / cd_semantic:.2f}x")


DEFORM_CONFIG = """
[meshes]
template = "template.obj"
guidance = "guide.obj"

[body]
mesh = "body.obj"
contact_vertices = "contacts.obj"

[weights]
semantic = 1.0
contact = 1.0
penetration = 10.0
regularizer = 1e-5

[optimizer]
iterations = 25
learning_rate = 0.005
seed = 3

[guidance]
sample_count = 256
seed = 1

[output]
directory = "out"
"""


def test_criterion_7_determinism(tmp_path):
    outputs = []
    for tag in ("a", "b"):
        run_dir = tmp_path / tag
        run_dir.mkdir()
        write_mesh(torus(0.45, 0.2, 12, 8), run_dir / "template.obj")
        write_mesh(torus(0.45, 0.18, 12, 8), run_dir / "guide.obj")
        write_mesh(cylinder(0.3, 2.0, 16, 4), run_dir / "body.obj")
        with open(run_dir / "contacts.obj", "w") as handle:
            for p in ring_points(0.3, 0.0, 8):
                handle.write(f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
        (run_dir / "run.toml").write_text(DEFORM_CONFIG)
        assert main(["deform", "--config", str(run_dir / "run.toml")]) == 0
        outputs.append(((run_dir / "out" / "final.obj").read_bytes(),
                        (run_dir / "out" / "record.csv").read_bytes()))
    same_obj = outputs[0][0] == outputs[1][0]
    same_csv = outputs[0][1] == outputs[1][1]
    report(7, "determinism", same_obj and same_csv,
           f"OBJ identical: {same_obj} ({len(outputs[0][0])} bytes), "
           f"CSV identical: {same_csv} ({len(outputs[0][1])} bytes)")


def test_criterion_8_evolution_trace():
    template = icosphere(1.0, 2)
    target = GuidanceTarget(mesh=box(0.8, segments=2), sample_count=4096,
                            base_seed=7)
    cfg = ObjectiveConfig(iterations=1000, learning_rate=5e-3,
                          regularizer_weight=0.0)
    _, record = run_optimization(template, None, target, cfg)
    early = record.rows[9]["total"]
    late = record.rows[999]["total"]
    report(8, "evolution trace", late <= 0.2 * early,
           f"total loss {early:.3e} at iteration 10 -> {late:.3e} "
           f"at iteration 1000 ({late / early:.3f}x)")
