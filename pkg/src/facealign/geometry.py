"""Affine warping primitives and shape-space normalization.

Every stage of the pipeline shares the conventions fixed here:

Normalized coordinates
    An image axis of extent ``n`` pixels maps pixel *centers* to the closed
    interval [-1, +1]: pixel 0 sits at -1, pixel n-1 at +1 (align-corners).
    ``x`` always runs along width (columns), ``y`` along height (rows), so
    (-1, -1) is the center of the top-left pixel. Axes of extent 1 map to 0.

    pixel -> normalized:   u = 2*x / (n - 1) - 1
    normalized -> pixel:   x = (u + 1) * (n - 1) / 2

Affine parameters
    A 2x3 matrix ``theta`` is a *sampling* map: it sends normalized target
    (output) coordinates to normalized source (input) coordinates,
    ``(xs, ys) = theta @ (xt, yt, 1)``. Warping an image with ``theta``
    therefore moves image content by the inverse point map.

Out-of-bounds sampling
    Coordinates outside the source extent contribute zero (zero padding),
    so aggressive warps produce black borders rather than edge smears.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateShapeError, InvalidArgumentError, SingularTransformError

IDENTITY_THETA = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])

# Horizontal pupil anchors for canonical shapes, as fractions of the target
# side; both pupils land on the vertical midline (y = 0.5 * size).
PUPIL_ANCHOR_LEFT = 0.3
PUPIL_ANCHOR_RIGHT = 0.7

_MIN_INVERTIBLE_DET = 1e-10


def as_affine(theta) -> np.ndarray:
    """Validate and return ``theta`` as a float64 (2, 3) array."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (2, 3):
        raise InvalidArgumentError(f"affine parameters must be 2x3, got {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise InvalidArgumentError("affine parameters contain non-finite entries")
    return theta


def as_shape(points, min_landmarks: int = 3) -> np.ndarray:
    """Validate and return landmark coordinates as a float64 (L, 2) array."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidArgumentError(f"shape must be (L, 2), got {pts.shape}")
    if pts.shape[0] < min_landmarks:
        raise InvalidArgumentError(
            f"shape needs at least {min_landmarks} landmarks, got {pts.shape[0]}"
        )
    if not np.all(np.isfinite(pts)):
        raise InvalidArgumentError("shape contains non-finite coordinates")
    return pts


def pixel_to_normalized(points, height: int, width: int) -> np.ndarray:
    """Map pixel-center coordinates to [-1, 1] normalized coordinates."""
    pts = np.asarray(points, dtype=np.float64)
    out = np.empty_like(pts)
    out[..., 0] = 2.0 * pts[..., 0] / (width - 1) - 1.0 if width > 1 else 0.0
    out[..., 1] = 2.0 * pts[..., 1] / (height - 1) - 1.0 if height > 1 else 0.0
    return out


def normalized_to_pixel(points, height: int, width: int) -> np.ndarray:
    """Inverse of :func:`pixel_to_normalized`."""
    pts = np.asarray(points, dtype=np.float64)
    out = np.empty_like(pts)
    out[..., 0] = (pts[..., 0] + 1.0) * (width - 1) / 2.0 if width > 1 else 0.0
    out[..., 1] = (pts[..., 1] + 1.0) * (height - 1) / 2.0 if height > 1 else 0.0
    return out


def _axis_coords(n: int) -> np.ndarray:
    if n == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, n)


def generate_grid(theta, height: int, width: int) -> np.ndarray:
    """Build the (height, width, 2) sampling grid for ``theta``.

    Entry [i, j] holds the normalized source (x, y) for target pixel
    (row i, column j): ``source = theta @ (xt, yt, 1)``.
    """
    theta = as_affine(theta)
    if height < 1 or width < 1:
        raise InvalidArgumentError("grid dimensions must be >= 1")
    xt = _axis_coords(width)
    yt = _axis_coords(height)
    xx, yy = np.meshgrid(xt, yt)
    ones = np.ones_like(xx)
    target = np.stack([xx, yy, ones], axis=-1)  # (H, W, 3)
    return target @ theta.T  # (H, W, 2)


def identity_grid(height: int, width: int) -> np.ndarray:
    """Canonical normalized meshgrid (the grid of the identity transform)."""
    return generate_grid(IDENTITY_THETA, height, width)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3 or grid.shape[2] != 2:
        raise InvalidArgumentError(f"grid must be (H, W, 2), got {grid.shape}")
    return grid


def _gather_neighbors(image, grid):
    """Shared setup for sampling and its gradient.

    Returns pixel-space coordinates, the four corner indices with their
    in-bounds masks, and the per-corner pixel values (zero outside).
    """
    hs, ws = image.shape[:2]
    x = (grid[..., 0] + 1.0) * (ws - 1) / 2.0
    y = (grid[..., 1] + 1.0) * (hs - 1) / 2.0

    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    corners = []
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            valid = (xi >= 0) & (xi < ws) & (yi >= 0) & (yi < hs)
            xc = np.clip(xi, 0, ws - 1)
            yc = np.clip(yi, 0, hs - 1)
            vals = image[yc, xc] * valid[..., None]
            corners.append((vals, valid, yc, xc))
    return x, y, x0, y0, corners


def bilinear_sample(image, grid) -> np.ndarray:
    """Bilinearly sample ``image`` at normalized ``grid`` coordinates.

    ``image`` is (H_s, W_s, C) or (H_s, W_s); the result has the grid's
    spatial size and the image's channels. Out-of-extent coordinates read
    as zero. Differentiable; see :func:`bilinear_sample_grad` for the
    gradients w.r.t. both inputs.
    """
    grid = _check_grid(grid)
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    if img.ndim != 3:
        raise InvalidArgumentError(f"image must be (H, W[, C]), got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise InvalidArgumentError("image contains non-finite values")

    x, y, x0, y0, corners = _gather_neighbors(img, grid)
    wx = x - x0
    wy = y - y0
    (v00, *_), (v01, *_), (v10, *_), (v11, *_) = corners
    top = v00 * (1 - wx)[..., None] + v01 * wx[..., None]
    bot = v10 * (1 - wx)[..., None] + v11 * wx[..., None]
    out = top * (1 - wy)[..., None] + bot * wy[..., None]
    return out[..., 0] if squeeze else out


def bilinear_sample_grad(image, grid, grad_output):
    """Vector-Jacobian product of :func:`bilinear_sample`.

    Given the upstream gradient w.r.t. the sampled output, returns
    ``(grad_image, grad_grid)`` with the shapes of ``image`` and ``grid``.
    Grid gradients are w.r.t. the *normalized* coordinates.
    """
    grid = _check_grid(grid)
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    go = np.asarray(grad_output, dtype=np.float64)
    if squeeze:
        go = go[..., None]
    if go.shape != grid.shape[:2] + (img.shape[2],):
        raise InvalidArgumentError("grad_output shape does not match sample output")

    hs, ws = img.shape[:2]
    x, y, x0, y0, corners = _gather_neighbors(img, grid)
    wx = x - x0
    wy = y - y0
    (v00, m00, r00, c00) = corners[0]
    (v01, m01, r01, c01) = corners[1]
    (v10, m10, r10, c10) = corners[2]
    (v11, m11, r11, c11) = corners[3]

    w00 = (1 - wx) * (1 - wy)
    w01 = wx * (1 - wy)
    w10 = (1 - wx) * wy
    w11 = wx * wy

    grad_img = np.zeros_like(img)
    for w, m, r, c in ((w00, m00, r00, c00), (w01, m01, r01, c01),
                       (w10, m10, r10, c10), (w11, m11, r11, c11)):
        contrib = go * (w * m)[..., None]
        np.add.at(grad_img, (r.ravel(), c.ravel()),
                  contrib.reshape(-1, img.shape[2]))

    # d(out)/dx in pixel units, then chain to normalized units.
    dout_dx = ((v01 - v00) * (1 - wy)[..., None] + (v11 - v10) * wy[..., None])
    dout_dy = ((v10 - v00) * (1 - wx)[..., None] + (v11 - v01) * wx[..., None])
    gx = np.sum(go * dout_dx, axis=-1) * ((ws - 1) / 2.0)
    gy = np.sum(go * dout_dy, axis=-1) * ((hs - 1) / 2.0)
    grad_grid = np.stack([gx, gy], axis=-1)

    return (grad_img[..., 0] if squeeze else grad_img), grad_grid


def warp_image(image, theta, height: int, width: int) -> np.ndarray:
    """Convenience: sample ``image`` through the grid of ``theta``."""
    return bilinear_sample(image, generate_grid(theta, height, width))


def invert_affine(theta) -> np.ndarray:
    """Invert the affine point map of ``theta``.

    Composing the forward and inverse maps is the identity; raises
    :class:`SingularTransformError` when the 2x2 block is near-singular.
    """
    theta = as_affine(theta)
    a = theta[:, :2]
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    if abs(det) <= _MIN_INVERTIBLE_DET:
        raise SingularTransformError(f"2x2 block is singular (|det| = {abs(det):.3e})")
    inv_a = np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]) / det
    inv_t = -inv_a @ theta[:, 2]
    return np.hstack([inv_a, inv_t[:, None]])


def compose_affine(outer, inner) -> np.ndarray:
    """Parameters of the composed point map ``outer(inner(p))``."""
    outer = as_affine(outer)
    inner = as_affine(inner)
    a = outer[:, :2] @ inner[:, :2]
    t = outer[:, :2] @ inner[:, 2] + outer[:, 2]
    return np.hstack([a, t[:, None]])


def apply_affine_points(theta, points) -> np.ndarray:
    """Apply the point map of ``theta`` to (..., 2) normalized coordinates."""
    theta = as_affine(theta)
    pts = np.asarray(points, dtype=np.float64)
    return pts @ theta[:, :2].T + theta[:, 2]


def transform_shape(theta, shape, size: int = 128) -> np.ndarray:
    """Apply the point map of ``theta`` to landmarks in pixel coordinates.

    Coordinates are converted to normalized units of a ``size`` x ``size``
    space (see module docstring), mapped by ``theta``, and converted back.
    """
    pts = as_shape(shape, min_landmarks=1)
    norm = pixel_to_normalized(pts, size, size)
    mapped = apply_affine_points(theta, norm)
    return normalized_to_pixel(mapped, size, size)


def canonicalize_shape(shape, pupil_left_idx, pupil_right_idx,
                       target_size: int = 128) -> np.ndarray:
    """Similarity-normalize a shape into a ``target_size`` square space.

    The mean of the left/right pupil index sets is moved onto fixed anchors
    on the horizontal midline (x = 0.3/0.7 of the side, y = 0.5), which
    removes rotation, uniform scale and translation exactly. Output is
    invariant under any orientation-preserving similarity of the input.
    """
    pts = as_shape(shape)
    left = np.atleast_1d(np.asarray(pupil_left_idx, dtype=np.int64))
    right = np.atleast_1d(np.asarray(pupil_right_idx, dtype=np.int64))
    if left.size == 0 or right.size == 0:
        raise InvalidArgumentError("pupil index sets must be non-empty")
    if np.intersect1d(left, right).size:
        raise InvalidArgumentError("pupil index sets must be disjoint")

    z = pts[:, 0] + 1j * pts[:, 1]
    z_left = z[left].mean()
    z_right = z[right].mean()
    if abs(z_right - z_left) < 1e-9:
        raise DegenerateShapeError("pupil centers coincide")

    a_left = (PUPIL_ANCHOR_LEFT + 0.5j) * target_size
    a_right = (PUPIL_ANCHOR_RIGHT + 0.5j) * target_size
    scale_rot = (a_right - a_left) / (z_right - z_left)
    offset = a_left - scale_rot * z_left
    mapped = scale_rot * z + offset
    return np.stack([mapped.real, mapped.imag], axis=-1)
