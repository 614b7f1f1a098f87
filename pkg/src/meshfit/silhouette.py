"""Orthographic soft-silhouette rendering with analytic vertex derivatives.

Coverage at a pixel is the sigmoid of the largest 2D signed distance to any
projected triangle (positive inside), divided by the softness width.  Taking
the maximum puts the half-coverage contour exactly on the projected boundary,
so hard-thresholded images agree with exact rasterization for any softness.
"""

import numpy as np
from scipy.special import expit

from .mesh import TriMesh

__all__ = [
    "Camera",
    "CameraSet",
    "SilhouetteImage",
    "SilhouetteRender",
    "default_camera_set",
    "image_l1_loss",
    "read_image",
    "render_silhouette",
    "render_views",
    "write_pgm",
]

# triangles farther than this many softness widths from a pixel cannot move
# its coverage above float noise and are pruned
PRUNE_MARGIN = 20.0

# pixels more saturated than this carry no usable slope; skipped when
# backpropagating
SATURATION_CUT = 40.0

# the eight unit diagonals, i.e. the face normals of the octahedron
_DIAGONAL_DIRECTIONS = np.array(
    [[sx, sy, sz] for sx in (-1.0, 1.0) for sy in (-1.0, 1.0) for sz in (-1.0, 1.0)]
) / np.sqrt(3.0)


class Camera:
    """Orthographic view of a square frame.

    The frame is centered on `center`, spans `half_extent` model units each
    way, and is sampled at `resolution` pixels per side.  Pixel (row, col)
    centers map to fractional coordinates with row 0 at the top.
    """

    __slots__ = ("direction", "up", "half_extent", "resolution", "center",
                 "right_axis", "up_axis")

    def __init__(self, direction, up=(0.0, 0.0, 1.0), half_extent=1.5,
                 resolution=128, center=(0.0, 0.0, 0.0)):
        direction = np.asarray(direction, dtype=np.float64)
        length = np.linalg.norm(direction)
        if length == 0.0:
            raise ValueError("camera direction must be nonzero")
        self.direction = direction / length
        self.up = np.asarray(up, dtype=np.float64)
        right = np.cross(self.up, self.direction)
        length = np.linalg.norm(right)
        if length < 1e-12:
            raise ValueError("camera up vector is parallel to the view direction")
        self.right_axis = right / length
        self.up_axis = np.cross(self.direction, self.right_axis)
        if not half_extent > 0.0:
            raise ValueError("frame half-extent must be positive")
        if int(resolution) < 16:
            raise ValueError("resolution must be at least 16 pixels")
        self.half_extent = float(half_extent)
        self.resolution = int(resolution)
        self.center = np.asarray(center, dtype=np.float64)

    def pixels_per_unit(self) -> float:
        return self.resolution / (2.0 * self.half_extent)

    def project_to_pixels(self, points) -> np.ndarray:
        """Fractional (col, row) pixel coordinates of 3D points."""
        rel = np.asarray(points, dtype=np.float64) - self.center
        ppu = self.pixels_per_unit()
        col = (rel @ self.right_axis + self.half_extent) * ppu - 0.5
        row = (self.half_extent - rel @ self.up_axis) * ppu - 0.5
        return np.stack([col, row], axis=-1)


class CameraSet:
    """One or more distinct views sharing no state."""

    __slots__ = ("cameras",)

    def __init__(self, cameras):
        cameras = list(cameras)
        if not cameras:
            raise ValueError("a camera set needs at least one camera")
        for i in range(len(cameras)):
            for j in range(i + 1, len(cameras)):
                if np.linalg.norm(cameras[i].direction - cameras[j].direction) < 1e-9:
                    raise ValueError(f"cameras {i} and {j} share a view direction")
        self.cameras = cameras

    def __len__(self):
        return len(self.cameras)

    def __iter__(self):
        return iter(self.cameras)

    def __getitem__(self, index):
        return self.cameras[index]


def default_camera_set(meshes, count=8, resolution=128, margin=1.2) -> CameraSet:
    """Diagonal viewpoints framing every mesh with a shared square frame."""
    if not 1 <= count <= len(_DIAGONAL_DIRECTIONS):
        raise ValueError(f"count must be between 1 and {len(_DIAGONAL_DIRECTIONS)}")
    stacked = np.vstack([mesh.vertices for mesh in meshes if mesh.n_vertices])
    if len(stacked) == 0:
        center = np.zeros(3)
        radius = 1.0
    else:
        center = 0.5 * (stacked.min(axis=0) + stacked.max(axis=0))
        radius = float(np.linalg.norm(stacked - center, axis=1).max())
        if radius == 0.0:
            radius = 1.0
    half_extent = margin * radius
    return CameraSet([
        Camera(direction, half_extent=half_extent, resolution=resolution, center=center)
        for direction in _DIAGONAL_DIRECTIONS[:count]
    ])


class SilhouetteImage:
    """Square grid of coverage values in [0, 1] from one camera."""

    __slots__ = ("pixels", "camera_index")

    def __init__(self, pixels, camera_index=0):
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim != 2 or pixels.shape[0] != pixels.shape[1]:
            raise ValueError(f"expected a square pixel grid, got {pixels.shape}")
        if pixels.min() < -1e-9 or pixels.max() > 1.0 + 1e-9:
            raise ValueError("coverage values must lie in [0, 1]")
        self.pixels = np.clip(pixels, 0.0, 1.0)
        self.camera_index = int(camera_index)


def _edge_distance_squares(points, tri):
    """Squared distance from each point to each of the triangle's three edges.

    points (..., 2), tri (..., 3, 2) broadcastable; returns squared distances
    (..., 3), clamped edge parameters (..., 3), and offsets (..., 3, 2) from
    each closest edge point to the query.
    """
    starts = tri
    ends = np.roll(tri, -1, axis=-2)
    span = ends - starts
    length2 = np.einsum("...ed,...ed->...e", span, span)
    rel = points[..., None, :] - starts
    t = np.einsum("...ed,...ed->...e", rel, span) / np.where(length2 == 0.0, 1.0, length2)
    t = np.clip(t, 0.0, 1.0)
    offset = rel - t[..., None] * span
    return np.einsum("...ed,...ed->...e", offset, offset), t, offset


def _inside_mask(points, tri):
    # all edge cross products on one side, whichever the winding is
    starts = tri
    ends = np.roll(tri, -1, axis=-2)
    span = ends - starts
    rel = points[..., None, :] - starts
    cross = span[..., 0] * rel[..., 1] - span[..., 1] * rel[..., 0]
    return np.all(cross >= 0.0, axis=-1) | np.all(cross <= 0.0, axis=-1)


def signed_distance_2d(points, tri):
    """Signed distance in the image plane, positive inside the triangle."""
    sq, _, _ = _edge_distance_squares(points, tri)
    dist = np.sqrt(sq.min(axis=-1))
    return np.where(_inside_mask(points, tri), dist, -dist)


def _signed_distance_and_gradient(points, tri):
    """Per-pair signed distance plus its derivative in the triangle's corners."""
    sq, t, offset = _edge_distance_squares(points, tri)
    edge = sq.argmin(axis=-1)
    take = np.arange(len(points))
    dist = np.sqrt(sq[take, edge])
    sign = np.where(_inside_mask(points, tri), 1.0, -1.0)

    safe = np.where(dist > 1e-12, dist, 1.0)
    unit = offset[take, edge] / safe[:, None]
    unit[dist <= 1e-12] = 0.0

    # envelope: the clamped edge parameter is stationary, so only the
    # endpoints' direct motion matters
    t_best = t[take, edge]
    grad = np.zeros(tri.shape)
    coeff_start = (sign * -(1.0 - t_best))[:, None] * unit
    coeff_end = (sign * -t_best)[:, None] * unit
    np.add.at(grad, (take, edge), coeff_start)
    np.add.at(grad, (take, (edge + 1) % 3), coeff_end)
    return sign * dist, grad


class SilhouetteRender:
    """A rendered view plus the machinery to push pixel slopes to vertices."""

    __slots__ = ("image", "camera", "sigma", "_faces", "_tri2d", "_face_vertices",
                 "_n_vertices", "_sigma_px")

    def __init__(self, image, camera, sigma, faces, tri2d, face_vertices, n_vertices):
        self.image = image
        self.camera = camera
        self.sigma = sigma
        self._faces = faces
        self._tri2d = tri2d
        self._face_vertices = face_vertices
        self._n_vertices = n_vertices
        self._sigma_px = sigma * camera.pixels_per_unit()

    def vertex_gradient(self, pixel_grad) -> np.ndarray:
        """Map a per-pixel loss slope to a per-vertex 3D slope."""
        pixel_grad = np.asarray(pixel_grad, dtype=np.float64)
        if pixel_grad.shape != self.image.pixels.shape:
            raise ValueError(f"pixel gradient shape {pixel_grad.shape} does not "
                             f"match image shape {self.image.pixels.shape}")
        out = np.zeros((self._n_vertices, 3))
        rows, cols = np.nonzero((self._faces >= 0) & (pixel_grad != 0.0))
        if rows.size == 0:
            return out
        face = self._faces[rows, cols]
        points = np.stack([cols, rows], axis=-1).astype(np.float64)
        d, dd_dtri = _signed_distance_and_gradient(points, self._tri2d[face])

        keep = np.abs(d) < SATURATION_CUT * self._sigma_px
        if not keep.any():
            return out
        rows, cols, face = rows[keep], cols[keep], face[keep]
        d, dd_dtri = d[keep], dd_dtri[keep]

        s = expit(d / self._sigma_px)
        scale = pixel_grad[rows, cols] * s * (1.0 - s) / self._sigma_px
        g2d = scale[:, None, None] * dd_dtri

        ppu = self.camera.pixels_per_unit()
        g3d = (g2d[..., 0, None] * (ppu * self.camera.right_axis)
               - g2d[..., 1, None] * (ppu * self.camera.up_axis))
        np.add.at(out, self._face_vertices[face], g3d)
        return out


def render_silhouette(mesh: TriMesh, camera: Camera, sigma: float,
                      camera_index=0) -> SilhouetteRender:
    """Soft coverage image of the mesh from one camera.

    Coverage is sigmoid(max over triangles of 2D signed distance / sigma);
    an empty mesh renders all-zero.  Triangles beyond the pruning margin of a
    pixel are skipped, changing coverage by less than 1e-8.
    """
    if not sigma > 0.0:
        raise ValueError("softness sigma must be positive")
    res = camera.resolution
    best_d = np.full((res, res), -np.inf)
    best_face = np.full((res, res), -1, dtype=np.int32)
    tri2d = np.zeros((mesh.n_faces, 3, 2))

    if mesh.n_faces:
        tri2d = camera.project_to_pixels(mesh.vertices)[mesh.faces]
        sigma_px = sigma * camera.pixels_per_unit()
        margin = PRUNE_MARGIN * sigma_px
        lo = np.floor(tri2d.min(axis=1) - margin).astype(np.int64)
        hi = np.ceil(tri2d.max(axis=1) + margin).astype(np.int64)
        visible = np.flatnonzero((hi >= 0).all(axis=1) & (lo <= res - 1).all(axis=1))
        lo = np.clip(lo, 0, res - 1)
        hi = np.clip(hi, 0, res - 1)
        for i in visible:
            c0, r0 = lo[i]
            c1, r1 = hi[i]
            cols = np.arange(c0, c1 + 1, dtype=np.float64)
            rows = np.arange(r0, r1 + 1, dtype=np.float64)
            grid = np.stack(np.meshgrid(cols, rows), axis=-1)
            d = signed_distance_2d(grid, tri2d[i])
            block = best_d[r0:r1 + 1, c0:c1 + 1]
            better = d > block
            block[better] = d[better]
            best_face[r0:r1 + 1, c0:c1 + 1][better] = i

    with np.errstate(over="ignore"):
        coverage = expit(np.where(np.isneginf(best_d), -745.0, best_d)
                         / (sigma * camera.pixels_per_unit()))
    coverage[np.isneginf(best_d)] = 0.0
    image = SilhouetteImage(coverage, camera_index)
    return SilhouetteRender(image, camera, sigma, best_face, tri2d,
                            mesh.faces, mesh.n_vertices)


def render_views(mesh: TriMesh, cameras: CameraSet, sigma: float):
    return [render_silhouette(mesh, camera, sigma, camera_index=k)
            for k, camera in enumerate(cameras)]


def image_l1_loss(renders, targets):
    """Mean absolute pixel difference averaged over views, with vertex slopes.

    Renders must carry gradient machinery; targets are plain images.
    """
    if len(renders) == 0 or len(renders) != len(targets):
        raise ValueError(f"got {len(renders)} renders and {len(targets)} targets")
    count = len(renders)
    loss = 0.0
    grad = None
    for render, target in zip(renders, targets):
        predicted = render.image.pixels
        wanted = target.pixels if isinstance(target, SilhouetteImage) else np.asarray(target)
        if predicted.shape != wanted.shape:
            raise ValueError(f"render {predicted.shape} vs target {wanted.shape}")
        diff = predicted - wanted
        loss += np.abs(diff).mean() / count
        pixel_grad = np.sign(diff) / (count * diff.size)
        contribution = render.vertex_gradient(pixel_grad)
        grad = contribution if grad is None else grad + contribution
    return float(loss), grad


def write_pgm(path, image: SilhouetteImage, binary=True):
    """Save coverage as an 8-bit PGM, P5 when binary else ASCII P2."""
    levels = np.rint(image.pixels * 255.0).astype(np.uint8)
    header = f"P{'5' if binary else '2'}\n{levels.shape[1]} {levels.shape[0]}\n255\n"
    if binary:
        with open(path, "wb") as handle:
            handle.write(header.encode("ascii"))
            handle.write(levels.tobytes())
    else:
        with open(path, "w") as handle:
            handle.write(header)
            for row in levels:
                handle.write(" ".join(str(v) for v in row) + "\n")


def _read_pgm(path):
    with open(path, "rb") as handle:
        data = handle.read()
    if data[:2] not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a PGM file")
    binary = data[:2] == b"P5"

    # header tokens: magic, width, height, maxval; comments run to end of line
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    width, height, maxval = (int(t) for t in tokens)
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    if binary:
        pos += 1  # single whitespace after maxval
        raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    else:
        raster = np.array(data[pos:].split(), dtype=np.float64)
        if raster.size != width * height:
            raise ValueError(f"{path}: expected {width * height} samples, got {raster.size}")
    return raster.reshape(height, width).astype(np.float64) / maxval


def read_image(path) -> np.ndarray:
    """Grayscale image as floats in [0, 1]; accepts PGM (P2/P5) and PNG."""
    with open(path, "rb") as handle:
        magic = handle.read(2)
    if magic in (b"P2", b"P5"):
        return _read_pgm(path)
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.float64) / 255.0
