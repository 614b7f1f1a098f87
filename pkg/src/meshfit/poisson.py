"""Deformation by per-face Jacobian fields and a prefactorized Poisson solve.

The optimization variable is one 3x3 matrix per face. Vertex positions are
recovered as the minimizer of the area-weighted least-squares mismatch
between the per-face Jacobians of the piecewise-linear map and the target
matrices, with one pinned vertex fixing the translation nullspace. Because
the normal-equations matrix depends only on the rest mesh, it is factorized
once and reused for every solve and for the adjoint (gradient) solves.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

from .gradient import FaceGradientOperator
from .mesh import TriMesh


class DisconnectedMeshError(ValueError):
    """Mesh has more than one connected component; the solve would be rank-deficient."""


class JacobianField:
    """One 3x3 target matrix per face; the optimization variable."""

    __slots__ = ("matrices",)

    def __init__(self, matrices):
        matrices = np.asarray(matrices, dtype=np.float64)
        if matrices.ndim != 3 or matrices.shape[1:] != (3, 3):
            raise ValueError(f"expected (m, 3, 3) matrices, got {matrices.shape}")
        if not np.isfinite(matrices).all():
            raise ValueError("Jacobian field contains non-finite entries")
        self.matrices = matrices

    @property
    def n_faces(self) -> int:
        return len(self.matrices)

    def copy(self) -> "JacobianField":
        return JacobianField(self.matrices.copy())


def init_identity_field(n_faces: int) -> JacobianField:
    """Identity matrix on every face; solving it reproduces the rest shape."""
    return JacobianField(np.broadcast_to(np.eye(3), (n_faces, 3, 3)).copy())


class PoissonSystem:
    """Prefactorized least-squares system mapping a Jacobian field to vertices.

    Attributes:
        operator: the rest-pose gradient operator.
        matrix: full normal-equations matrix (n, n), symmetric PSD.
        pinned_vertex / pinned_position: the constraint fixing translation.
    """

    __slots__ = (
        "operator",
        "matrix",
        "pinned_vertex",
        "pinned_position",
        "_free",
        "_factor",
        "_pin_column",
        "_weights",
    )

    def __init__(self, operator, matrix, pinned_vertex, pinned_position, free, factor, pin_column, weights):
        self.operator = operator
        self.matrix = matrix
        self.pinned_vertex = pinned_vertex
        self.pinned_position = pinned_position
        self._free = free
        self._factor = factor
        self._pin_column = pin_column
        self._weights = weights

    @property
    def n_vertices(self) -> int:
        return self.matrix.shape[0]

    def solve_free(self, rhs_free: np.ndarray) -> np.ndarray:
        """Solve the pinned (reduced) system for one or more right-hand sides."""
        return self._factor.solve(rhs_free)


def _check_connected(mesh: TriMesh) -> None:
    f = mesh.faces
    i = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    j = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    n = mesh.n_vertices
    adj = sparse.coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
    n_comp, labels = csgraph.connected_components(adj, directed=False)
    if n_comp > 1:
        sizes = np.bincount(labels)
        smallest = int(np.argmin(sizes))
        members = np.where(labels == smallest)[0]
        raise DisconnectedMeshError(
            f"mesh has {n_comp} connected components; smallest has "
            f"{sizes[smallest]} vertices (e.g. {members.tolist()[:6]})"
        )


def assemble_system(
    mesh: TriMesh,
    op: FaceGradientOperator,
    pinned_vertex: int,
    pinned_position=None,
) -> PoissonSystem:
    """Build and factorize the normal equations of the Poisson problem.

    The reduced system with the pinned vertex removed is strictly positive
    definite for a connected mesh, so a sparse direct factorization computed
    here is reused by every subsequent solve.
    """
    n = mesh.n_vertices
    if not 0 <= pinned_vertex < n:
        raise IndexError(f"pinned vertex {pinned_vertex} out of range [0, {n})")
    _check_connected(mesh)
    if pinned_position is None:
        pinned_position = mesh.vertices[pinned_vertex].copy()
    pinned_position = np.asarray(pinned_position, dtype=np.float64).reshape(3)

    weights = np.repeat(op.face_areas, 3)
    weighted = op.matrix.multiply(weights[:, None]).tocsr()
    matrix = (op.matrix.T @ weighted).tocsr()

    free = np.ones(n, dtype=bool)
    free[pinned_vertex] = False
    reduced = matrix[free][:, free].tocsc()
    pin_column = np.asarray(matrix[free][:, [pinned_vertex]].todense()).ravel()
    try:
        factor = splu(reduced)
    except RuntimeError as exc:
        raise RuntimeError(f"factorization of the pinned system failed: {exc}") from exc
    return PoissonSystem(
        op, matrix, int(pinned_vertex), pinned_position, free, factor, pin_column, weights
    )


class DeformationState:
    """Vertex positions recovered from a Jacobian field, with provenance."""

    __slots__ = ("vertices", "field", "system")

    def __init__(self, vertices, field, system):
        self.vertices = vertices
        self.field = field
        self.system = system

    def mesh(self) -> TriMesh:
        return self.system.operator.mesh.with_vertices(self.vertices)


def solve_deformation(system: PoissonSystem, field: JacobianField) -> DeformationState:
    """Vertex positions whose per-face Jacobians best match the field.

    Least-squares weighted by rest face area; the pinned vertex is held at
    its prescribed position. A constant field is reproduced exactly up to
    the pin translation since it is integrable.
    """
    op = system.operator
    if field.n_faces != op.n_faces:
        raise ValueError(f"field has {field.n_faces} faces, system expects {op.n_faces}")
    m = op.n_faces
    # stack target transposes so column c holds the gradient target of coordinate c
    targets = field.matrices.transpose(0, 2, 1).reshape(3 * m, 3)
    rhs = op.matrix.T @ (system._weights[:, None] * targets)  # (n, 3)
    rhs_free = rhs[system._free] - np.outer(system._pin_column, system.pinned_position)
    x = system.solve_free(rhs_free)
    vertices = np.empty((system.n_vertices, 3))
    vertices[system._free] = x
    vertices[system.pinned_vertex] = system.pinned_position
    return DeformationState(vertices, field, system)


def backprop_to_jacobians(system: PoissonSystem, d_vertices: np.ndarray) -> np.ndarray:
    """Pull a vertex-space gradient back to Jacobian space, shape (m, 3, 3).

    One adjoint solve with the stored factorization (the system is symmetric)
    followed by application of the weighted gradient operator. The pinned
    vertex is constrained, so any gradient on it is discarded.
    """
    d_vertices = np.asarray(d_vertices, dtype=np.float64)
    if d_vertices.shape != (system.n_vertices, 3):
        raise ValueError(f"gradient shape {d_vertices.shape} != ({system.n_vertices}, 3)")
    lam = np.zeros((system.n_vertices, 3))
    lam[system._free] = system.solve_free(d_vertices[system._free])
    d_targets = system._weights[:, None] * (system.operator.matrix @ lam)  # (3m, 3)
    m = system.operator.n_faces
    return d_targets.reshape(m, 3, 3).transpose(0, 2, 1).copy()


def field_regularizer(field: JacobianField) -> tuple[float, np.ndarray]:
    """Sum of unsquared Frobenius distances of each matrix to the identity.

    Returns the loss and its (m, 3, 3) gradient. The gradient of each term is
    the unit direction (J - I)/|J - I|; at the identity the subgradient zero
    is used, making the identity field a true rest point.
    """
    diff = field.matrices - np.eye(3)
    norms = np.linalg.norm(diff.reshape(len(diff), 9), axis=1)
    loss = float(norms.sum())
    grad = np.zeros_like(diff)
    active = norms > 1e-12
    grad[active] = diff[active] / norms[active, None, None]
    return loss, grad
