"""Per-face gradient operator for piecewise-linear functions on a triangle mesh.

For a scalar function given by values at the vertices, the gradient of its
linear interpolant is constant on each face and lies in the face plane. The
operator assembles those per-face gradients into one sparse matrix so that
applying it to a stack of deformed vertex positions yields, per face, the
tangential part of the deformation Jacobian.

The full 3x3 Jacobian reported by :func:`face_jacobians` completes the
missing normal direction with a cross-product term scaled so that uniform
scalings and rotations of the rest pose are reproduced exactly.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .mesh import AREA_EPSILON, MeshError, TriMesh


class FaceGradientOperator:
    """Sparse map from n vertex values to 3m per-face gradient components.

    Attributes:
        mesh: the rest-pose mesh the operator was built from.
        matrix: (3m, n) CSR matrix; rows 3i..3i+2 hold the gradient on face i.
        face_areas: (m,) rest face areas, the least-squares weights.
        rest_normals: (m, 3) unit rest-pose face normals.
        rest_cross_norms: (m,) length of the unnormalized rest face normals.
    """

    __slots__ = ("mesh", "matrix", "face_areas", "rest_normals", "rest_cross_norms")

    def __init__(self, mesh, matrix, face_areas, rest_normals, rest_cross_norms):
        self.mesh = mesh
        self.matrix = matrix
        self.face_areas = face_areas
        self.rest_normals = rest_normals
        self.rest_cross_norms = rest_cross_norms

    @property
    def n_faces(self) -> int:
        return self.mesh.n_faces

    def apply(self, vertex_values: np.ndarray) -> np.ndarray:
        """Per-face gradients of vertex data, shape (3m, k) for (n, k) input."""
        return self.matrix @ vertex_values


def build_gradient_operator(mesh: TriMesh) -> FaceGradientOperator:
    """Assemble the per-face gradient operator of a mesh.

    Each face contributes rows built from the gradients of its three linear
    hat functions, (N x e_a) / |N|^2 with e_a the edge opposite vertex a and
    N the unnormalized face normal. Constant vertex data therefore maps to a
    zero gradient, and applying the operator to the rest positions gives the
    in-plane projection on every face.
    """
    v = mesh.vertices
    f = mesh.faces
    m = mesh.n_faces
    cross = mesh.face_cross()
    cross_norm = np.linalg.norm(cross, axis=1)
    if np.any(0.5 * cross_norm <= AREA_EPSILON):
        bad = np.where(0.5 * cross_norm <= AREA_EPSILON)[0]
        raise MeshError(f"zero-area faces: {bad.tolist()[:8]}")

    # edges opposite each corner
    e0 = v[f[:, 2]] - v[f[:, 1]]
    e1 = v[f[:, 0]] - v[f[:, 2]]
    e2 = v[f[:, 1]] - v[f[:, 0]]
    inv_norm2 = 1.0 / (cross_norm**2)
    # hat-function gradients, shape (m, corner, xyz)
    grads = np.stack(
        [
            np.cross(cross, e0) * inv_norm2[:, None],
            np.cross(cross, e1) * inv_norm2[:, None],
            np.cross(cross, e2) * inv_norm2[:, None],
        ],
        axis=1,
    )

    face_ids = np.arange(m)
    # entry G[3*i + r, f[i, a]] = grads[i, a, r]
    rows = 3 * face_ids[:, None, None] + np.arange(3)[None, None, :]
    cols = np.broadcast_to(f[:, :, None], (m, 3, 3))
    matrix = sparse.csr_matrix(
        (grads.ravel(), (np.broadcast_to(rows, (m, 3, 3)).ravel(), cols.ravel())),
        shape=(3 * m, mesh.n_vertices),
    )
    normals = cross / cross_norm[:, None]
    return FaceGradientOperator(mesh, matrix, mesh.face_areas().copy(), normals, cross_norm)


def face_jacobians(op: FaceGradientOperator, vertices: np.ndarray) -> np.ndarray:
    """Per-face 3x3 Jacobians of the map from rest to `vertices`, shape (m, 3, 3).

    The in-plane part comes from the gradient operator; the normal column is
    completed with the deformed cross product normalized by the geometric mean
    of deformed and rest double-areas, which reproduces rigid rotations and
    uniform scalings exactly. Each matrix maps rest tangent vectors of its
    face to the corresponding deformed tangent vectors.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    m = op.n_faces
    d = (op.matrix @ vertices).reshape(m, 3, 3)  # d[i, r, c] = d(coord c)/d(rest r)
    jac = d.transpose(0, 2, 1).copy()

    f = op.mesh.faces
    cross_def = np.cross(vertices[f[:, 1]] - vertices[f[:, 0]], vertices[f[:, 2]] - vertices[f[:, 0]])
    cross_def_norm = np.linalg.norm(cross_def, axis=1)
    denom = np.sqrt(np.maximum(cross_def_norm * op.rest_cross_norms, 1e-300))
    scaled_normal = cross_def / denom[:, None]
    jac += scaled_normal[:, :, None] * op.rest_normals[:, None, :]
    return jac
