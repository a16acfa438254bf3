"""Annotation I/O, cropping, augmentation, and schematic synthetic faces.

File formats
    pts annotations:  ``version: 1`` and ``n_points: <L>`` header lines,
    then ``{``, L lines of ``x y`` pixel coordinates, and ``}``.

    bbox lists: one ``image_path x y w h`` record per line, whitespace
    separated; ``#`` starts a comment, blank lines are skipped.

    synthetic dataset: a directory of ``.npy`` float32 RGB images plus a
    ``manifest.jsonl`` whose first line is a header object
    ``{"manifest_version": 1, "scheme": ..., "image_size": ...}`` and each
    following line one face record with keys ``id, image, bbox, landmarks,
    occluded, theta_star`` (``theta_star`` may be null).

The synthetic generator draws a parametric schematic face (head ellipse,
eye ellipses with irises, nose wedge, mouth ellipse) on a textured
background. Landmarks sit exactly on the rendered feature boundaries, so
ground truth is exact by construction; occlusion patches overwrite pixels
and flag every landmark whose coordinate falls inside a patch.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry
from .errors import InvalidArgumentError, InvalidBBoxError, PtsParseError
from .schemes import LandmarkScheme

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"


# ---------------------------------------------------------------------------
# pts annotations


def parse_pts(text: str) -> np.ndarray:
    """Parse a 300-W-style pts annotation into an (L, 2) array."""
    lines = text.splitlines()

    def fail(msg, line_no):
        raise PtsParseError(msg, line=line_no)

    idx = 0

    def next_content_line():
        nonlocal idx
        while idx < len(lines):
            idx += 1
            stripped = lines[idx - 1].strip()
            if stripped:
                return stripped, idx
        return None, idx

    line, no = next_content_line()
    if line is None or not line.replace(" ", "").startswith("version:"):
        fail("expected 'version: 1' header", no)
    line, no = next_content_line()
    if line is None or not line.replace(" ", "").startswith("n_points:"):
        fail("expected 'n_points: <L>' header", no)
    try:
        n_points = int(line.split(":", 1)[1])
    except ValueError:
        fail(f"cannot parse landmark count from {line!r}", no)
    if n_points < 1:
        fail("n_points must be positive", no)

    line, no = next_content_line()
    if line != "{":
        fail("expected '{' opening the coordinate block", no)

    points = []
    while True:
        line, no = next_content_line()
        if line is None:
            fail("unexpected end of file inside coordinate block", no)
        if line == "}":
            break
        parts = line.split()
        if len(parts) != 2:
            fail(f"expected 'x y', got {line!r}", no)
        try:
            points.append((float(parts[0]), float(parts[1])))
        except ValueError:
            fail(f"non-numeric coordinate in {line!r}", no)
        if len(points) > n_points:
            fail(f"more than the declared {n_points} coordinate lines", no)
    if len(points) != n_points:
        fail(f"declared {n_points} points but found {len(points)}", no)
    return np.array(points, dtype=np.float64)


def write_pts(shape) -> str:
    """Serialize landmarks to the pts grammar (6 decimal places)."""
    pts = geometry.as_shape(shape, min_landmarks=1)
    lines = ["version: 1", f"n_points: {pts.shape[0]}", "{"]
    lines += [f"{x:.6f} {y:.6f}" for x, y in pts]
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# bbox list files


def parse_bbox_file(text: str):
    """Parse ``image_path x y w h`` records; returns a list of tuples."""
    records = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise PtsParseError(f"expected 'path x y w h', got {raw!r}", line=no)
        try:
            x, y, w, h = (float(v) for v in parts[1:])
        except ValueError:
            raise PtsParseError(f"non-numeric bbox field in {raw!r}", line=no)
        records.append((parts[0], (x, y, w, h)))
    return records


def write_bbox_file(records) -> str:
    return "".join(
        f"{path} {x:.6f} {y:.6f} {w:.6f} {h:.6f}\n" for path, (x, y, w, h) in records
    )


# ---------------------------------------------------------------------------
# cropping


@dataclass(frozen=True)
class CropResult:
    """A resized crop plus the exact output-pixel -> source-pixel mapping."""

    image: np.ndarray
    scale: tuple[float, float]   # (sx, sy): source px per output px
    offset: tuple[float, float]  # source coords of output pixel (0, 0)

    def to_original(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts * np.array(self.scale) + np.array(self.offset)

    def from_original(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return (pts - np.array(self.offset)) / np.array(self.scale)


def crop_by_bbox(image, bbox, output_size: int = 128,
                 context: float = 0.0) -> CropResult:
    """Crop ``bbox`` (expanded by ``context`` per side), resize to a square.

    Output pixel centers span the expanded box under the align-corners
    convention; regions outside the image read as zero.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    h_img, w_img = img.shape[:2]
    x, y, w, h = (float(v) for v in bbox)
    if w < 2 or h < 2:
        raise InvalidBBoxError(f"bbox must be at least 2x2 px, got {w}x{h}")
    x -= context * w
    y -= context * h
    w *= 1 + 2 * context
    h *= 1 + 2 * context
    if x + w <= 0 or y + h <= 0 or x >= w_img or y >= h_img:
        raise InvalidBBoxError("bbox does not intersect the image")

    sx = (w - 1) / (output_size - 1)
    sy = (h - 1) / (output_size - 1)
    cols = x + np.arange(output_size) * sx
    rows = y + np.arange(output_size) * sy
    src_x, src_y = np.meshgrid(cols, rows)
    grid = np.stack([
        2.0 * src_x / (w_img - 1) - 1.0 if w_img > 1 else np.zeros_like(src_x),
        2.0 * src_y / (h_img - 1) - 1.0 if h_img > 1 else np.zeros_like(src_y),
    ], axis=-1)
    out = geometry.bilinear_sample(img, grid)
    return CropResult(image=out, scale=(sx, sy), offset=(x, y))


# ---------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class AugmentConfig:
    flip_prob: float = 0.5
    rotation_deg: float = 30.0
    scale_frac: float = 0.10
    brightness: float = 0.20
    contrast: float = 0.20

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise InvalidArgumentError("flip_prob must be in [0, 1]")
        for v in (self.rotation_deg, self.scale_frac, self.brightness, self.contrast):
            if v < 0:
                raise InvalidArgumentError("augmentation ranges must be non-negative")


def flip_horizontal(image, shape, scheme: LandmarkScheme):
    """Mirror the image and re-index landmarks through the scheme flip table."""
    img = np.asarray(image)
    pts = geometry.as_shape(shape)
    if pts.shape[0] != scheme.landmark_count:
        raise InvalidArgumentError("shape length does not match scheme")
    w = img.shape[1]
    mirrored = pts.copy()
    mirrored[:, 0] = (w - 1) - mirrored[:, 0]
    return img[:, ::-1].copy(), mirrored[list(scheme.flip)]


def augment(image, shape, rng: np.random.Generator,
            config: AugmentConfig = AugmentConfig(), *,
            scheme: LandmarkScheme):
    """Random flip / rotation / scale / color jitter, landmark-consistent.

    Draws, in order: flip coin, angle, scale, brightness, contrast. With
    all ranges zero and flip_prob zero the inputs are returned unchanged.
    """
    img = np.asarray(image, dtype=np.float64)
    pts = geometry.as_shape(shape)
    size = img.shape[0]

    if config.flip_prob > 0 and rng.uniform() < config.flip_prob:
        img, pts = flip_horizontal(img, pts, scheme)

    angle = np.deg2rad(rng.uniform(-config.rotation_deg, config.rotation_deg)) \
        if config.rotation_deg > 0 else 0.0
    scale = 1.0 + (rng.uniform(-config.scale_frac, config.scale_frac)
                   if config.scale_frac > 0 else 0.0)
    if angle != 0.0 or scale != 1.0:
        c, s = math.cos(angle), math.sin(angle)
        point_map = np.array([[scale * c, -scale * s, 0.0],
                              [scale * s, scale * c, 0.0]])
        img = geometry.warp_image(img, geometry.invert_affine(point_map),
                                  img.shape[0], img.shape[1])
        pts = geometry.transform_shape(point_map, pts, size=size)

    if config.brightness > 0:
        img = img + rng.uniform(-config.brightness, config.brightness)
    if config.contrast > 0:
        gain = 1.0 + rng.uniform(-config.contrast, config.contrast)
        img = (img - img.mean()) * gain + img.mean()
    if config.brightness > 0 or config.contrast > 0:
        img = np.clip(img, 0.0, 1.0)
    return img, pts


# ---------------------------------------------------------------------------
# synthetic faces


@dataclass(frozen=True)
class PerturbSpec:
    """Ranges for synthesizing off-canonical views of a canonical face.

    Rotation/scale/translation are drawn uniformly; ``background_pad``
    zooms the view out by a fixed fraction so the face is surrounded by
    non-face border. All four at zero reproduce the input exactly.
    """

    rotation_deg: float = 30.0
    scale_frac: float = 0.10
    translation_frac: float = 0.10
    background_pad: float = 0.25

    def __post_init__(self):
        for v in dataclasses.astuple(self):
            if v < 0:
                raise InvalidArgumentError("perturbation ranges must be non-negative")


def sample_perturbation(spec: PerturbSpec, rng: np.random.Generator):
    """Draw a perturbation; returns ``(synthesis_theta, theta_star)``.

    ``synthesis_theta`` is the sampling map that renders the perturbed
    image from the canonical one; ``theta_star`` is its inverse, i.e. the
    parameters a spatial transformer must regress to undo the perturbation.
    Draw order: rotation, scale, translation x, translation y.
    """
    angle = np.deg2rad(rng.uniform(-spec.rotation_deg, spec.rotation_deg))
    zoom = (1.0 + rng.uniform(-spec.scale_frac, spec.scale_frac))
    zoom *= 1.0 + spec.background_pad
    # translation_frac is a fraction of the image side; the side spans 2
    # normalized units.
    tx = rng.uniform(-spec.translation_frac, spec.translation_frac) * 2.0
    ty = rng.uniform(-spec.translation_frac, spec.translation_frac) * 2.0
    c, s = math.cos(angle), math.sin(angle)
    synthesis = np.array([[zoom * c, -zoom * s, tx],
                          [zoom * s, zoom * c, ty]])
    if angle == 0.0 and zoom == 1.0 and tx == 0.0 and ty == 0.0:
        return geometry.IDENTITY_THETA.copy(), geometry.IDENTITY_THETA.copy()
    return synthesis, geometry.invert_affine(synthesis)


@dataclass(frozen=True)
class OcclusionSpec:
    patch_count: int = 1
    size_range: tuple[float, float] = (24.0, 40.0)
    fill: str = "noise"  # noise | black | mean

    def __post_init__(self):
        if self.patch_count < 0:
            raise InvalidArgumentError("patch_count must be >= 0")
        lo, hi = self.size_range
        if lo <= 0 or hi < lo:
            raise InvalidArgumentError("size_range must satisfy 0 < lo <= hi")
        if self.fill not in ("noise", "black", "mean"):
            raise InvalidArgumentError(f"unknown fill mode {self.fill!r}")


@dataclass(frozen=True)
class SyntheticFaceParams:
    seed: int = 0
    image_size: int = 128
    scheme_name: str = "synth24"
    perturb: PerturbSpec | None = None
    occlusion: OcclusionSpec | None = None
    tight_bbox: bool = False


@dataclass(frozen=True)
class FaceLayout:
    """Analytic description of one schematic face (all in pixel units)."""

    head_center: tuple[float, float]
    head_axes: tuple[float, float]
    eye_offset: tuple[float, float]
    eye_axes: tuple[float, float]
    iris_radius: float
    nose_center: tuple[float, float]
    nose_half_width: float
    nose_height: float
    mouth_center: tuple[float, float]
    mouth_axes: tuple[float, float]

    def landmarks(self) -> np.ndarray:
        """The synth24 landmark layout: 11 contour, 2x3 eye, 3 nose, 4 mouth."""
        cx, cy = self.head_center
        ax, ay = self.head_axes
        pts = []
        for i in range(11):
            t = math.radians(180.0 - 18.0 * i)
            pts.append((cx + ax * math.cos(t), cy + ay * math.sin(t)))
        ex, ey = self.eye_offset
        ew, _ = self.eye_axes
        lex, ley = cx - ex, cy + ey
        rex, rey = cx + ex, cy + ey
        pts += [(lex - ew, ley), (lex + ew, ley), (lex, ley)]
        pts += [(rex - ew, rey), (rex + ew, rey), (rex, rey)]
        nx, ny = self.nose_center
        pts += [(nx - self.nose_half_width, ny), (nx, ny),
                (nx + self.nose_half_width, ny)]
        mx, my = self.mouth_center
        mw, mh = self.mouth_axes
        pts += [(mx - mw, my), (mx, my - mh), (mx + mw, my), (mx, my + mh)]
        return np.array(pts, dtype=np.float64)


def sample_layout(rng: np.random.Generator, size: int = 128) -> FaceLayout:
    """Draw the geometric parameters of one schematic face."""
    u = size / 128.0  # all nominal measurements are in 128-space
    cx = (64 + rng.uniform(-4, 4)) * u
    cy = (66 + rng.uniform(-4, 4)) * u
    ax = (40 + rng.uniform(-5, 5)) * u
    ay = (50 + rng.uniform(-5, 5)) * u
    ex = (20 + rng.uniform(-2.5, 2.5)) * u
    ey = (-14 + rng.uniform(-2, 2)) * u
    ew = (8 + rng.uniform(-1.5, 1.5)) * u
    eh = (4.5 + rng.uniform(-0.8, 0.8)) * u
    iris = (2.4 + rng.uniform(-0.4, 0.4)) * u
    nx = cx + rng.uniform(-1.5, 1.5) * u
    ny = cy + (9 + rng.uniform(-2, 2)) * u
    nw = (6.5 + rng.uniform(-1, 1)) * u
    nh = (14 + rng.uniform(-2, 2)) * u
    mx = cx + rng.uniform(-1.5, 1.5) * u
    my = cy + (27 + rng.uniform(-3, 3)) * u
    mw = (14 + rng.uniform(-2.5, 2.5)) * u
    mh = (3.5 + rng.uniform(-0.8, 0.8)) * u
    return FaceLayout(
        head_center=(cx, cy), head_axes=(ax, ay),
        eye_offset=(ex, ey), eye_axes=(ew, eh), iris_radius=iris,
        nose_center=(nx, ny), nose_half_width=nw, nose_height=nh,
        mouth_center=(mx, my), mouth_axes=(mw, mh),
    )


def _ellipse_mask(xx, yy, center, axes):
    cx, cy = center
    ax, ay = axes
    return ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 <= 1.0


def render_face(layout: FaceLayout, rng: np.random.Generator,
                size: int = 128) -> np.ndarray:
    """Rasterize a layout onto a textured background; RGB float in [0, 1]."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    # Smooth background texture: upsampled coarse noise plus fine grain.
    coarse = rng.uniform(0.25, 0.6, size=(5, 5))
    ci = np.clip(np.linspace(0, 4, size), 0, 4)
    i0 = np.floor(ci).astype(int)
    i1 = np.minimum(i0 + 1, 4)
    f = ci - i0
    rowmix = coarse[i0][:, i0] * np.outer(1 - f, 1 - f) \
        + coarse[i0][:, i1] * np.outer(1 - f, f) \
        + coarse[i1][:, i0] * np.outer(f, 1 - f) \
        + coarse[i1][:, i1] * np.outer(f, f)
    img = np.stack([rowmix + rng.uniform(-0.05, 0.05) for _ in range(3)], axis=-1)
    img += rng.uniform(-0.02, 0.02, size=(size, size, 1))

    skin = np.array([0.82, 0.64, 0.52]) + rng.uniform(-0.06, 0.06, size=3)
    head = _ellipse_mask(xx, yy, layout.head_center, layout.head_axes)
    shading = 1.0 - 0.15 * (yy / size)
    img[head] = (skin * shading[head][:, None])

    for side in (-1, 1):
        ecx = layout.head_center[0] + side * layout.eye_offset[0]
        ecy = layout.head_center[1] + layout.eye_offset[1]
        sclera = _ellipse_mask(xx, yy, (ecx, ecy), layout.eye_axes)
        img[sclera] = np.array([0.93, 0.93, 0.9])
        iris = _ellipse_mask(xx, yy, (ecx, ecy),
                             (layout.iris_radius, layout.iris_radius))
        img[iris] = np.array([0.10, 0.13, 0.18])

    nx, ny = layout.nose_center
    apex_y = ny - layout.nose_height
    inside_y = (yy >= apex_y) & (yy <= ny)
    with np.errstate(invalid="ignore", divide="ignore"):
        half_w = layout.nose_half_width * (yy - apex_y) / (ny - apex_y)
    nose = inside_y & (np.abs(xx - nx) <= half_w)
    img[nose] = skin * 0.78

    mouth = _ellipse_mask(xx, yy, layout.mouth_center, layout.mouth_axes)
    img[mouth] = np.array([0.62, 0.2, 0.22]) + rng.uniform(-0.04, 0.04, size=3)

    return np.clip(img, 0.0, 1.0)


@dataclass
class AnnotatedFace:
    image_id: str
    image: np.ndarray | None
    bbox: tuple[float, float, float, float]
    shape: np.ndarray
    occluded: np.ndarray
    theta_star: np.ndarray | None = None
    path: str | None = None
    attributes: tuple[str, ...] = ()


def _apply_occlusion(img, pts, spec: OcclusionSpec, rng, layout: FaceLayout):
    """Overwrite random patches near the face; flag covered landmarks."""
    size = img.shape[0]
    occluded = np.zeros(pts.shape[0], dtype=np.uint8)
    cx, cy = layout.head_center
    ax, ay = layout.head_axes
    for _ in range(spec.patch_count):
        side = rng.uniform(*spec.size_range)
        px = rng.uniform(cx - ax, cx + ax - side)
        py = rng.uniform(cy - ay, cy + ay - side)
        x0, y0 = int(round(px)), int(round(py))
        x1, y1 = min(size, x0 + int(round(side))), min(size, y0 + int(round(side)))
        x0, y0 = max(0, x0), max(0, y0)
        if x1 <= x0 or y1 <= y0:
            continue
        if spec.fill == "noise":
            img[y0:y1, x0:x1] = rng.uniform(0, 1, size=(y1 - y0, x1 - x0, 3))
        elif spec.fill == "black":
            img[y0:y1, x0:x1] = 0.0
        else:
            img[y0:y1, x0:x1] = img.mean(axis=(0, 1))
        inside = ((pts[:, 0] >= x0) & (pts[:, 0] < x1)
                  & (pts[:, 1] >= y0) & (pts[:, 1] < y1))
        occluded |= inside.astype(np.uint8)
    return img, occluded


def generate_synthetic_face(params: SyntheticFaceParams, index: int) -> AnnotatedFace:
    """Render face number ``index``; deterministic in (seed, index)."""
    rng = np.random.default_rng((params.seed, index))
    size = params.image_size
    layout = sample_layout(rng, size)
    img = render_face(layout, rng, size)
    pts = layout.landmarks()

    theta_star = None
    if params.perturb is not None:
        synthesis, theta_star = sample_perturbation(params.perturb, rng)
        if not np.array_equal(synthesis, geometry.IDENTITY_THETA):
            img = geometry.warp_image(img, synthesis, size, size)
            pts = geometry.transform_shape(theta_star, pts, size=size)

    occluded = np.zeros(pts.shape[0], dtype=np.uint8)
    if params.occlusion is not None and params.occlusion.patch_count > 0:
        img, occluded = _apply_occlusion(img, pts, params.occlusion, rng, layout)

    if params.tight_bbox:
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        margin = 0.1 * (hi - lo)
        x0, y0 = lo - margin
        w, h = (hi - lo) + 2 * margin
        bbox = (float(x0), float(y0), float(w), float(h))
    else:
        bbox = (0.0, 0.0, float(size), float(size))

    attrs = ("occlusion",) if occluded.any() else ()
    return AnnotatedFace(
        image_id=f"synth_{params.seed}_{index:05d}",
        image=img.astype(np.float32),
        bbox=bbox,
        shape=pts,
        occluded=occluded,
        theta_star=theta_star,
        attributes=attrs,
    )


def generate_synthetic_dataset(params: SyntheticFaceParams, count: int):
    """Deterministic list of ``count`` annotated faces (seed-partitioned)."""
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    return [generate_synthetic_face(params, i) for i in range(count)]


# ---------------------------------------------------------------------------
# dataset persistence


def save_dataset(faces, directory, scheme_name: str = "synth24",
                 image_size: int = 128) -> Path:
    """Write images and the manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / MANIFEST_NAME
    with open(manifest, "w") as fh:
        header = {"manifest_version": MANIFEST_VERSION,
                  "scheme": scheme_name, "image_size": image_size}
        fh.write(json.dumps(header) + "\n")
        for face in faces:
            rel = f"{face.image_id}.npy"
            if face.image is not None:
                np.save(directory / rel, face.image.astype(np.float32))
            record = {
                "id": face.image_id,
                "image": rel,
                "bbox": [float(v) for v in face.bbox],
                "landmarks": [[float(x), float(y)] for x, y in face.shape],
                "occluded": [int(v) for v in face.occluded],
                "theta_star": (None if face.theta_star is None
                               else [[float(v) for v in row] for row in face.theta_star]),
                "attributes": list(face.attributes),
            }
            fh.write(json.dumps(record) + "\n")
    return manifest


def load_dataset(manifest_path, load_images: bool = True):
    """Read a manifest back into AnnotatedFace records."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    lines = manifest_path.read_text().splitlines()
    if not lines:
        raise InvalidArgumentError(f"empty manifest {manifest_path}")
    header = json.loads(lines[0])
    if header.get("manifest_version") != MANIFEST_VERSION:
        raise InvalidArgumentError(
            f"unsupported manifest version {header.get('manifest_version')}")
    faces = []
    for line in lines[1:]:
        if not line.strip():
            continue
        rec = json.loads(line)
        path = manifest_path.parent / rec["image"]
        image = np.load(path).astype(np.float32) if load_images else None
        faces.append(AnnotatedFace(
            image_id=rec["id"],
            image=image,
            bbox=tuple(rec["bbox"]),
            shape=np.array(rec["landmarks"], dtype=np.float64),
            occluded=np.array(rec["occluded"], dtype=np.uint8),
            theta_star=(None if rec["theta_star"] is None
                        else np.array(rec["theta_star"], dtype=np.float64)),
            path=str(path),
            attributes=tuple(rec.get("attributes", ())),
        ))
    return header, faces


def load_image(path) -> np.ndarray:
    """Load an RGB float image in [0, 1] from .npy or a common image format."""
    path = Path(path)
    if path.suffix == ".npy":
        img = np.load(path).astype(np.float64)
    else:
        import matplotlib.image as mpimg

        img = np.asarray(mpimg.imread(str(path)), dtype=np.float64)
        if img.max() > 1.5:
            img = img / 255.0
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    return img[..., :3]
