import numpy as np
import pytest

from meshfit.mesh import TriMesh
from meshfit.primitives import icosphere, torus


@pytest.fixture
def unit_square():
    """Two triangles tiling the unit square in the z=0 plane."""
    vertices = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
    faces = [(0, 1, 2), (0, 2, 3)]
    return TriMesh(vertices, faces)


@pytest.fixture
def small_sphere():
    return icosphere(radius=1.0, subdivisions=2)


@pytest.fixture
def icosahedron():
    """The 20-face gradcheck fixture."""
    return icosphere(radius=1.0, subdivisions=0)


@pytest.fixture
def small_torus():
    return torus(major_radius=1.0, minor_radius=0.3, n_major=12, n_minor=8)


def random_rotation(seed: int) -> np.ndarray:
    """A uniformly random rotation matrix, deterministic per seed."""
    rng = np.random.default_rng(seed)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
