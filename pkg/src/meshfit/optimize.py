"""Optimization of the per-face Jacobian field under the combined objective.

Each iteration solves vertices from the current field, evaluates the enabled
loss terms in vertex space, pulls their summed derivative back to the field
through the prefactorized adjoint solve, adds the field regularizer's own
derivative, and takes one adaptive-moment step.  Everything is deterministic
for a fixed config and seed.
"""

import os
import time

import numpy as np

from .body import BodySpec, signed_distance
from .body_losses import BodyLossParams, contact_loss
from .gradient import build_gradient_operator
from .guidance import GuidanceParams, GuidanceTarget, guidance_loss
from .mesh import TriMesh, write_mesh
from .poisson import (
    DeformationState,
    JacobianField,
    assemble_system,
    backprop_to_jacobians,
    field_regularizer,
    init_identity_field,
    solve_deformation,
)

__all__ = [
    "AdamState",
    "CSV_COLUMNS",
    "ObjectiveConfig",
    "OptimizationError",
    "RunRecord",
    "adam_step",
    "choose_pinned_vertex",
    "finite_difference_check",
    "run_optimization",
    "run_two_stage",
    "total_loss_and_grad",
]


class OptimizationError(RuntimeError):
    """A loss term failed or went non-finite; carries where and which."""

    def __init__(self, message, iteration=None, term=None):
        super().__init__(message)
        self.iteration = iteration
        self.term = term


class ObjectiveConfig:
    """Everything a run needs beyond its geometry.

    The semantic weight scales the whole guidance channel; the body weights
    live in body_params and are applied exactly once each.  The regularizer
    weight multiplies the sum of per-face deviations from identity.
    """

    __slots__ = ("semantic_weight", "body_params", "guidance_params",
                 "regularizer_weight", "iterations", "learning_rate",
                 "beta1", "beta2", "epsilon", "seed", "snapshot_every",
                 "snapshot_dir", "pinned_vertex")

    def __init__(self, semantic_weight=1.0, body_params=None, guidance_params=None,
                 regularizer_weight=0.05, iterations=1000, learning_rate=1e-3,
                 beta1=0.9, beta2=0.999, epsilon=1e-8, seed=0,
                 snapshot_every=0, snapshot_dir=None, pinned_vertex=None):
        if iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {iterations}")
        if not learning_rate > 0.0:
            raise ValueError("learning rate must be positive")
        for name, value in (("semantic_weight", semantic_weight),
                            ("regularizer_weight", regularizer_weight)):
            if not (np.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        for name, value in (("beta1", beta1), ("beta2", beta2)):
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {value}")
        if not epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if snapshot_every < 0:
            raise ValueError("snapshot_every must be nonnegative")
        self.semantic_weight = float(semantic_weight)
        self.body_params = body_params if body_params is not None else BodyLossParams()
        self.guidance_params = (guidance_params if guidance_params is not None
                                else GuidanceParams())
        self.regularizer_weight = float(regularizer_weight)
        self.iterations = int(iterations)
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.seed = int(seed)
        self.snapshot_every = int(snapshot_every)
        self.snapshot_dir = snapshot_dir
        self.pinned_vertex = pinned_vertex

    def copy_with(self, **overrides):
        kwargs = {name: getattr(self, name) for name in ObjectiveConfig.__slots__}
        kwargs.update(overrides)
        return ObjectiveConfig(**kwargs)


# fixed column order of the CSV export; wall-clock stays out of the file so
# repeated runs are byte-identical
CSV_COLUMNS = ("iteration", "stage", "total", "semantic", "contact",
               "penetration", "regularizer", "penetration_score", "contact_score")


class RunRecord:
    """Per-iteration scalars plus snapshot paths and wall-clock times."""

    __slots__ = ("rows", "snapshot_paths")

    def __init__(self):
        self.rows = []
        self.snapshot_paths = []

    def __len__(self):
        return len(self.rows)

    def append(self, iteration, stage, terms, wall_clock):
        row = {"iteration": int(iteration), "stage": str(stage),
               "wall_clock": float(wall_clock)}
        for name in CSV_COLUMNS[2:]:
            row[name] = float(terms[name])
        self.rows.append(row)

    def values(self, column):
        return [row[column] for row in self.rows]

    def write_csv(self, path):
        lines = [",".join(CSV_COLUMNS)]
        for row in self.rows:
            cells = []
            for name in CSV_COLUMNS:
                value = row[name]
                cells.append(value if isinstance(value, str) else repr(value))
            lines.append(",".join(cells))
        with open(path, "w") as handle:
            handle.write("\n".join(lines) + "\n")


class AdamState:
    """First and second moment accumulators over the 9m field entries."""

    __slots__ = ("first_moment", "second_moment", "step_count")

    def __init__(self, n_faces):
        self.first_moment = np.zeros((n_faces, 3, 3))
        self.second_moment = np.zeros((n_faces, 3, 3))
        self.step_count = 0


def adam_step(field: JacobianField, grad, state: AdamState, learning_rate=1e-3,
              beta1=0.9, beta2=0.999, epsilon=1e-8):
    """One adaptive-moment update, in place; returns the pair for chaining."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != field.matrices.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match "
                         f"field shape {field.matrices.shape}")
    state.step_count += 1
    state.first_moment *= beta1
    state.first_moment += (1.0 - beta1) * grad
    state.second_moment *= beta2
    state.second_moment += (1.0 - beta2) * grad * grad
    scale1 = 1.0 - beta1 ** state.step_count
    scale2 = 1.0 - beta2 ** state.step_count
    field.matrices -= (learning_rate / scale1) * state.first_moment / (
        np.sqrt(state.second_moment / scale2) + epsilon)
    return field, state


def choose_pinned_vertex(template: TriMesh, body) -> int:
    """Template vertex farthest outside the body, or vertex zero.

    The pinned vertex keeps its rest position for the whole run, so it must
    not be one the body terms need to move; the most-exterior vertex is the
    safest deterministic choice.
    """
    if body is not None:
        d, _ = signed_distance(body, template.vertices)
        return int(d.argmax())
    return 0


def _body_terms(vertices, body: BodySpec, params: BodyLossParams):
    """Weighted contact and penetration terms plus the unweighted metrics.

    One signed-distance pass serves the penetration loss, its derivative, and
    the penetration score; metrics are reported even when the weights are
    zero, which is what lets ablation runs log what they are ignoring.
    """
    terms = {"contact": 0.0, "penetration": 0.0,
             "penetration_score": np.nan, "contact_score": np.nan}
    grad = np.zeros_like(vertices)
    if body is None:
        return terms, grad

    d, ddv = signed_distance(body, vertices)
    terms["penetration_score"] = float((d[d < 0.0] ** 2).sum())
    if params.penetration_weight > 0.0:
        active = d < params.penetration_threshold
        value = float((d[active] ** 2).sum())
        terms["penetration"] = params.penetration_weight * value
        grad[active] += (params.penetration_weight * 2.0
                         * d[active, None] * ddv[active])

    if body.n_contacts > 0:
        value, contact_grad = contact_loss(vertices, body.contact_points)
        terms["contact_score"] = value
        if params.contact_weight > 0.0:
            terms["contact"] = params.contact_weight * value
            grad += params.contact_weight * contact_grad
    else:
        terms["contact_score"] = 0.0
        if params.contact_weight > 0.0:
            raise OptimizationError("contact weight is positive but the body "
                                    "has no contact points", term="contact")
    return terms, grad


def total_loss_and_grad(state: DeformationState, body, target, cfg: ObjectiveConfig,
                        iteration=0):
    """Objective value, its derivative in Jacobian space, and the logged terms.

    The returned total is literally the sum of the logged weighted terms.
    Vertex-space derivatives from the semantic and body channels are pushed
    through the adjoint solve; the regularizer differentiates directly in
    field space.
    """
    vertex_grad = np.zeros_like(state.vertices)
    terms = {}

    if cfg.semantic_weight > 0.0:
        if target is None:
            raise OptimizationError("semantic weight is positive but no guidance "
                                    "target was given", term="semantic")
        try:
            value, grad = guidance_loss(state, target, cfg.guidance_params, iteration)
        except OptimizationError:
            raise
        except Exception as exc:
            raise OptimizationError(f"semantic term failed: {exc}",
                                    term="semantic") from exc
        terms["semantic"] = cfg.semantic_weight * value
        vertex_grad += cfg.semantic_weight * grad
    else:
        terms["semantic"] = 0.0

    try:
        body_term_values, body_grad = _body_terms(state.vertices, body, cfg.body_params)
    except OptimizationError:
        raise
    except Exception as exc:
        raise OptimizationError(f"body terms failed: {exc}", term="body") from exc
    terms.update(body_term_values)
    vertex_grad += body_grad

    reg_value, reg_grad = field_regularizer(state.field)
    terms["regularizer"] = cfg.regularizer_weight * reg_value

    jacobian_grad = backprop_to_jacobians(state.system, vertex_grad)
    jacobian_grad += cfg.regularizer_weight * reg_grad

    total = (terms["semantic"] + terms["contact"] + terms["penetration"]
             + terms["regularizer"])
    terms["total"] = total
    return total, jacobian_grad, terms


def _check_finite(terms, iteration):
    bad = [name for name in ("semantic", "contact", "penetration", "regularizer")
           if not np.isfinite(terms[name])]
    if bad:
        detail = ", ".join(f"{name}={terms[name]}" for name in bad)
        raise OptimizationError(
            f"non-finite loss at iteration {iteration}: {detail}",
            iteration=iteration, term=bad[0])


def _run_loop(template, body, target, cfg, stage, record, field, iteration_offset):
    operator = build_gradient_operator(template)
    pin = cfg.pinned_vertex
    if pin is None:
        pin = choose_pinned_vertex(template, body)
    system = assemble_system(template, operator, pinned_vertex=pin)
    adam = AdamState(template.n_faces)

    state = None
    for local in range(1, cfg.iterations + 1):
        iteration = iteration_offset + local
        started = time.perf_counter()
        state = solve_deformation(system, field)
        loss, grad, terms = total_loss_and_grad(state, body, target, cfg,
                                                iteration=iteration)
        _check_finite(terms, iteration)
        adam_step(field, grad, adam, cfg.learning_rate, cfg.beta1, cfg.beta2,
                  cfg.epsilon)
        record.append(iteration, stage, terms, time.perf_counter() - started)

        if cfg.snapshot_every and iteration % cfg.snapshot_every == 0:
            if cfg.snapshot_dir is None:
                raise OptimizationError("snapshot_every is set but snapshot_dir "
                                        "is not", iteration=iteration)
            os.makedirs(cfg.snapshot_dir, exist_ok=True)
            path = os.path.join(cfg.snapshot_dir, f"iteration_{iteration:05d}.obj")
            write_mesh(state.mesh(), path)
            record.snapshot_paths.append(path)

    final_state = solve_deformation(system, field)
    return final_state.mesh(), record, field


def run_optimization(template: TriMesh, body, target, cfg: ObjectiveConfig,
                     stage="joint", initial_field=None):
    """Deform the template under the configured objective.

    Returns the final mesh (same topology as the template) and the run
    record.  A non-finite loss aborts with the iteration and offending term.
    """
    field = (initial_field.copy() if initial_field is not None
             else init_identity_field(template.n_faces))
    mesh, record, _ = _run_loop(template, body, target, cfg, stage,
                                RunRecord(), field, iteration_offset=0)
    return mesh, record


def run_two_stage(template: TriMesh, body, target, cfg: ObjectiveConfig,
                  start_from_guidance=False):
    """Semantics first, body fit second; the baseline the joint run beats.

    Stage one optimizes the guidance channel only (or is skipped entirely
    when starting from the guidance mesh itself); stage two continues with
    body terms only.
    """
    if target is None or target.mesh is None:
        raise ValueError("two-stage optimization needs a guidance mesh")
    zeroed_body = BodyLossParams(0.0, 0.0, cfg.body_params.penetration_threshold)
    stage2_cfg = cfg.copy_with(semantic_weight=0.0)

    if start_from_guidance:
        mesh, record, _ = _run_loop(target.mesh, body, target, stage2_cfg,
                                    "body", RunRecord(),
                                    init_identity_field(target.mesh.n_faces),
                                    iteration_offset=0)
        return mesh, record

    stage1_cfg = cfg.copy_with(body_params=zeroed_body)
    record = RunRecord()
    _, record, field = _run_loop(template, body, target, stage1_cfg, "semantic",
                                 record, init_identity_field(template.n_faces),
                                 iteration_offset=0)
    mesh, record, _ = _run_loop(template, body, target, stage2_cfg, "body",
                                record, field, iteration_offset=cfg.iterations)
    return mesh, record


def finite_difference_check(template, body, target, cfg, step=1e-5, seed=0):
    """Full-chain derivative check of every loss term over all field entries.

    Evaluates at a seeded perturbation of the identity field (breaking the
    symmetric ties a rest pose would have), then compares the adjoint-path
    derivative of each term configuration against central differences.
    Returns {term_name: max relative error}.
    """
    operator = build_gradient_operator(template)
    pin = cfg.pinned_vertex
    if pin is None:
        pin = choose_pinned_vertex(template, body)
    system = assemble_system(template, operator, pinned_vertex=pin)

    rng = np.random.default_rng(seed)
    base = init_identity_field(template.n_faces)
    base.matrices += 0.05 * rng.standard_normal(base.matrices.shape)

    zero_body = BodyLossParams(0.0, 0.0, cfg.body_params.penetration_threshold)
    variants = {
        "chamfer": cfg.copy_with(
            semantic_weight=1.0, regularizer_weight=0.0, body_params=zero_body,
            guidance_params=GuidanceParams(chamfer_weight=1.0, image_weight=0.0)),
        "image": cfg.copy_with(
            semantic_weight=1.0, regularizer_weight=0.0, body_params=zero_body,
            guidance_params=GuidanceParams(chamfer_weight=0.0, image_weight=1.0)),
        "contact": cfg.copy_with(
            semantic_weight=0.0, regularizer_weight=0.0,
            body_params=BodyLossParams(1.0, 0.0, cfg.body_params.penetration_threshold)),
        "penetration": cfg.copy_with(
            semantic_weight=0.0, regularizer_weight=0.0,
            body_params=BodyLossParams(0.0, 1.0, cfg.body_params.penetration_threshold)),
        "regularizer": cfg.copy_with(semantic_weight=0.0, body_params=zero_body,
                                     regularizer_weight=1.0),
        "combined": cfg,
    }
    if target is None or target.mesh is None:
        variants.pop("chamfer")
    if target is None or (target.mesh is None and target.target_silhouettes is None):
        variants.pop("image")
    if body is None or body.n_contacts == 0:
        variants.pop("contact")
    if body is None:
        variants.pop("penetration")
    if target is None and cfg.semantic_weight > 0.0:
        variants["combined"] = cfg.copy_with(semantic_weight=0.0)

    results = {}
    for name, variant in variants.items():
        state = solve_deformation(system, base)
        _, grad, _ = total_loss_and_grad(state, body, target, variant, iteration=0)

        fd = np.zeros_like(grad)
        flat = base.matrices.reshape(-1)
        for entry in range(flat.size):
            keep = flat[entry]
            flat[entry] = keep + step
            up = total_loss_and_grad(solve_deformation(system, base), body,
                                     target, variant, iteration=0)[0]
            flat[entry] = keep - step
            down = total_loss_and_grad(solve_deformation(system, base), body,
                                       target, variant, iteration=0)[0]
            flat[entry] = keep
            fd.reshape(-1)[entry] = (up - down) / (2.0 * step)

        scale = np.maximum(np.maximum(np.abs(fd), np.abs(grad)), 1e-8)
        results[name] = float((np.abs(grad - fd) / scale).max())
    return results
