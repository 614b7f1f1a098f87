"""Triangle mesh container and Wavefront OBJ I/O.

The mesh is immutable after construction: operations that deform a mesh
return new vertex arrays rather than mutating in place, so instances can
be shared freely across threads.
"""

from __future__ import annotations

import os

import numpy as np

AREA_EPSILON = 1e-12


class MeshError(ValueError):
    """Invalid mesh data (bad indices, degenerate faces)."""


class MeshLoadError(MeshError):
    """OBJ parse failure; carries the offending line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class DegenerateFaceError(MeshError):
    """One or more faces have repeated vertices or near-zero area."""

    def __init__(self, face_indices, message: str):
        super().__init__(message)
        self.face_indices = list(face_indices)


class TriMesh:
    """Indexed triangle mesh: (n, 3) float vertices and (m, 3) int faces.

    Construction validates that all face indices are in range, that each
    face references three distinct vertices, and that every face has area
    above ``AREA_EPSILON``.
    """

    __slots__ = ("vertices", "faces", "_areas", "_normals")

    def __init__(self, vertices, faces):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64).reshape(-1, 3)
        self._areas = None
        self._normals = None
        self._validate()

    def _validate(self) -> None:
        if not np.isfinite(self.vertices).all():
            raise MeshError("vertex coordinates must be finite")
        n = len(self.vertices)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= n:
                bad = np.where((self.faces < 0) | (self.faces >= n))[0]
                raise MeshError(
                    f"face indices out of range [0, {n}) in faces {bad.tolist()[:8]}"
                )
            f = self.faces
            repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            tiny = self.face_areas() <= AREA_EPSILON
            bad = np.where(repeated | tiny)[0]
            if bad.size:
                raise DegenerateFaceError(
                    bad.tolist(),
                    f"{bad.size} degenerate face(s) (repeated index or area <= "
                    f"{AREA_EPSILON:g}): {bad.tolist()[:8]}",
                )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def triangles(self) -> np.ndarray:
        """Per-face vertex coordinates, shape (m, 3, 3)."""
        return self.vertices[self.faces]

    def face_cross(self) -> np.ndarray:
        """Unnormalized face normals (v1-v0) x (v2-v0), shape (m, 3)."""
        if self._normals is None:
            v = self.vertices
            f = self.faces
            self._normals = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
            self._normals.setflags(write=False)
        return self._normals

    def face_areas(self) -> np.ndarray:
        if self._areas is None:
            self._areas = 0.5 * np.linalg.norm(self.face_cross(), axis=1)
            self._areas.setflags(write=False)
        return self._areas

    def face_normals(self) -> np.ndarray:
        """Unit face normals, shape (m, 3)."""
        cross = self.face_cross()
        return cross / (2.0 * self.face_areas())[:, None]

    def with_vertices(self, vertices) -> "TriMesh":
        """Same topology, new vertex positions."""
        return TriMesh(vertices, self.faces)

    def bounding_radius(self, center=None) -> float:
        """Radius of the smallest centered sphere containing all vertices."""
        if self.n_vertices == 0:
            return 0.0
        c = np.zeros(3) if center is None else np.asarray(center, dtype=np.float64)
        return float(np.linalg.norm(self.vertices - c, axis=1).max())

    def __repr__(self) -> str:
        return f"TriMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"


def load_mesh(path) -> TriMesh:
    """Load a triangle mesh from a Wavefront OBJ file.

    Only ``v`` and ``f`` records are honored; texture/normal references in
    face records are ignored, and polygons with more than three corners are
    fan-triangulated. Indices are 1-based per the OBJ convention.
    """
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            tag = fields[0]
            if tag == "v":
                if len(fields) < 4:
                    raise MeshLoadError(path, line_no, "vertex record needs 3 coordinates")
                try:
                    vertices.append([float(x) for x in fields[1:4]])
                except ValueError as exc:
                    raise MeshLoadError(path, line_no, f"bad vertex coordinate: {exc}") from None
            elif tag == "f":
                if len(fields) < 4:
                    raise MeshLoadError(path, line_no, "face record needs at least 3 indices")
                corners = []
                for field in fields[1:]:
                    token = field.split("/", 1)[0]
                    try:
                        idx = int(token)
                    except ValueError:
                        raise MeshLoadError(path, line_no, f"bad face index {token!r}") from None
                    if idx < 1:
                        raise MeshLoadError(
                            path, line_no, f"face index {idx} out of range (OBJ indices are 1-based)"
                        )
                    corners.append(idx - 1)
                for a, b in zip(corners[1:], corners[2:]):
                    faces.append((corners[0], a, b))
            # other record types (vn, vt, usemtl, ...) are ignored
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    if faces:
        face_arr = np.asarray(faces, dtype=np.int64)
        if face_arr.max() >= len(verts):
            bad = int(np.argmax(face_arr.max(axis=1) >= len(verts)))
            raise MeshLoadError(path, 0, f"face {bad} references vertex beyond the {len(verts)} defined")
    else:
        face_arr = np.zeros((0, 3), dtype=np.int64)
    return TriMesh(verts, face_arr)


def write_mesh(mesh: TriMesh, path) -> None:
    """Write a mesh as OBJ.

    Coordinates use shortest round-trip float formatting, so a
    load/write/load cycle reproduces vertices exactly and two writes of the
    same mesh are byte-identical.
    """
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise IOError(f"directory does not exist: {directory}")
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {float(x)!r} {float(y)!r} {float(z)!r}")
    for a, b, c in mesh.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
