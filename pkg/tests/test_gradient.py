import numpy as np
import pytest

from meshfit.gradient import build_gradient_operator, face_jacobians
from meshfit.primitives import box, icosphere, torus

from conftest import random_rotation

MESHES = {
    "icosphere": icosphere(subdivisions=1),
    "torus": torus(0.8, 0.25, 10, 6),
    "box": box(half_extent=0.6, segments=2),
}


@pytest.fixture(params=sorted(MESHES), ids=sorted(MESHES))
def any_mesh(request):
    return MESHES[request.param]


def test_identity_at_rest(any_mesh):
    op = build_gradient_operator(any_mesh)
    jac = face_jacobians(op, any_mesh.vertices)
    eye = np.broadcast_to(np.eye(3), jac.shape)
    assert np.abs(jac - eye).max() < 1e-10


def test_constant_function_zero_gradient(any_mesh):
    op = build_gradient_operator(any_mesh)
    grads = op.apply(np.full((any_mesh.n_vertices, 1), 3.7))
    assert np.abs(grads).max() < 1e-12


def test_uniform_scale(any_mesh):
    op = build_gradient_operator(any_mesh)
    jac = face_jacobians(op, 2.0 * any_mesh.vertices)
    eye = np.broadcast_to(np.eye(3), jac.shape)
    assert np.abs(jac - 2.0 * eye).max() < 1e-10


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rotation_equivariance(any_mesh, seed):
    rot = random_rotation(seed)
    op = build_gradient_operator(any_mesh)
    jac = face_jacobians(op, any_mesh.vertices @ rot.T)
    assert np.abs(jac - rot[None]).max() < 1e-10


def test_linear_map_tangentially_reproduced():
    # for an arbitrary linear map the in-plane response matches the map's
    # action on tangent vectors even though the full Jacobian differs
    mesh = icosphere(subdivisions=1)
    rng = np.random.default_rng(7)
    linear = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    op = build_gradient_operator(mesh)
    jac = face_jacobians(op, mesh.vertices @ linear.T)
    tri = mesh.triangles()
    for i in (0, 11, 17):
        for edge in (tri[i, 1] - tri[i, 0], tri[i, 2] - tri[i, 0]):
            np.testing.assert_allclose(jac[i] @ edge, linear @ edge, atol=1e-12)


def test_scalar_gradient_matches_analytic(unit_square):
    # linear scalar u = 2x + 3y has constant gradient (2, 3, 0)
    op = build_gradient_operator(unit_square)
    u = 2.0 * unit_square.vertices[:, 0] + 3.0 * unit_square.vertices[:, 1]
    grads = op.apply(u[:, None]).reshape(-1, 3)
    np.testing.assert_allclose(grads, [[2, 3, 0], [2, 3, 0]], atol=1e-12)


def test_operator_shape(any_mesh):
    op = build_gradient_operator(any_mesh)
    assert op.matrix.shape == (3 * any_mesh.n_faces, any_mesh.n_vertices)
    assert op.face_areas.shape == (any_mesh.n_faces,)
