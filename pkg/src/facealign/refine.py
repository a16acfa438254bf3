"""Landmark confidence scoring and exemplar-based shape repair.

The hourglass stage emits one heatmap per landmark. A landmark's weight is
the mean heatmap intensity over a small window at its predicted location;
after dividing by the per-face maximum, weights above a group threshold
(contour landmarks get a laxer one than facial-feature landmarks) mark the
landmark *visible*. Low-confidence landmarks are then repaired: the visible
coordinates select the k nearest exemplars from a K-means shape dictionary,
ridge regression on the visible rows yields blending coefficients, and the
blended exemplars provide replacement coordinates.

Shapes are stored as interleaved 2L-vectors ``(x1, y1, x2, y2, ...)`` in the
canonical square space produced by :func:`facealign.geometry.canonicalize_shape`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    CheckpointError,
    DegenerateMaskError,
    InvalidArgumentError,
    NoConfidentLandmarksError,
)
from .geometry import as_shape
from .schemes import LandmarkScheme

# Below this many visible landmarks the masked system is too weak to pin a
# similarity pose; callers should fall back to the raw network shape.
MIN_VISIBLE_LANDMARKS = 3

DICTIONARY_SCHEMA_VERSION = 1

DEFAULT_DICTIONARY_SIZE = 500
DEFAULT_NEIGHBOR_COUNT = 100
DEFAULT_RIDGE_LAMBDA = 60.0


@dataclass(frozen=True)
class ThresholdConfig:
    """Visibility thresholds after max-normalization, per landmark group."""

    contour_threshold: float = 0.4
    feature_threshold: float = 0.6
    contour_indices: tuple[int, ...] = ()
    score_radius: int = 1

    def __post_init__(self):
        for t in (self.contour_threshold, self.feature_threshold):
            if not 0.0 <= t <= 1.0:
                raise InvalidArgumentError("thresholds must lie in [0, 1]")
        if self.score_radius < 0:
            raise InvalidArgumentError("score radius must be >= 0")

    @classmethod
    def for_scheme(cls, scheme: LandmarkScheme, **kwargs) -> "ThresholdConfig":
        return cls(contour_indices=tuple(scheme.contour), **kwargs)

    def threshold_vector(self, landmark_count: int) -> np.ndarray:
        t = np.full(landmark_count, self.feature_threshold)
        t[list(self.contour_indices)] = self.contour_threshold
        return t


def score_landmark(heatmap, location, r: int = 1) -> float:
    """Mean heatmap intensity over the (2r+1)^2 window at ``location``.

    ``location`` is (x, y) in heatmap pixels. Window cells outside the map
    contribute zero but the denominator stays (2r+1)^2, so border landmarks
    are penalized rather than renormalized.
    """
    hm = np.asarray(heatmap, dtype=np.float64)
    if hm.ndim != 2:
        raise InvalidArgumentError(f"heatmap must be 2-D, got shape {hm.shape}")
    x, y = int(round(float(location[0]))), int(round(float(location[1])))
    h, w = hm.shape
    if not (0 <= x < w and 0 <= y < h):
        raise InvalidArgumentError(f"location ({x}, {y}) outside {w}x{h} heatmap")
    window = hm[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1]
    return float(window.sum() / (2 * r + 1) ** 2)


def score_shape(heatmaps, shape, r: int = 1, image_size: int = 128) -> np.ndarray:
    """Score every landmark of a shape given its heatmap stack.

    ``shape`` is in ``image_size`` pixel coordinates and is rescaled to the
    heatmap resolution before windowing; coordinates are clipped to the map.
    """
    hms = np.asarray(heatmaps, dtype=np.float64)
    pts = as_shape(shape, min_landmarks=1)
    if hms.ndim != 3 or hms.shape[0] != pts.shape[0]:
        raise InvalidArgumentError("heatmap stack must be (L, H, W) matching the shape")
    res = hms.shape[1]
    scaled = np.clip(np.rint(pts * (res / image_size)), 0, res - 1).astype(int)
    return np.array([
        score_landmark(hms[l], scaled[l], r) for l in range(pts.shape[0])
    ])


def normalize_and_threshold(weights, cfg: ThresholdConfig):
    """Divide weights by their maximum and threshold per landmark group.

    Returns ``(normalized_weights, visibility)`` where visibility is a
    uint8 0/1 vector; a landmark is visible when its normalized weight is
    strictly above its group threshold. Invariant under positive scaling
    of the raw weights.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1:
        raise InvalidArgumentError("weights must be a 1-D vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidArgumentError("weights must be finite and non-negative")
    peak = w.max() if w.size else 0.0
    if peak <= 0.0:
        raise NoConfidentLandmarksError("all landmark weights are zero")
    norm = w / peak
    visible = (norm > cfg.threshold_vector(w.size)).astype(np.uint8)
    return norm, visible


def shape_to_vector(shape) -> np.ndarray:
    """Flatten (L, 2) landmarks to the interleaved (2L,) layout."""
    return as_shape(shape, min_landmarks=1).reshape(-1)


def vector_to_shape(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    if v.ndim != 1 or v.size % 2:
        raise InvalidArgumentError("shape vector must be 1-D with even length")
    return v.reshape(-1, 2)


def expand_visibility(visibility) -> np.ndarray:
    """Per-landmark 0/1 flags -> per-coordinate mask (both x and y rows)."""
    v = np.asarray(visibility)
    if v.ndim != 1:
        raise InvalidArgumentError("visibility must be a 1-D vector")
    return np.repeat(v.astype(np.float64), 2)


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia_history: tuple[float, ...]


def kmeans(data, n_clusters: int, seed: int, max_iter: int = 300,
           tol: float = 1e-6) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding, bit-deterministic per seed.

    Stops when the inertia improvement drops to ``tol`` or after
    ``max_iter`` rounds. An emptied cluster is reseeded from the point
    farthest from its assigned centroid.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < n_clusters:
        raise InvalidArgumentError(
            f"need at least {n_clusters} samples of equal dimension, got {x.shape}")
    rng = np.random.default_rng(seed)

    # k-means++: first center uniform, then proportional to squared distance.
    centers = np.empty((n_clusters, x.shape[1]))
    centers[0] = x[rng.integers(x.shape[0])]
    closest = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, n_clusters):
        total = closest.sum()
        if total <= 0:
            centers[i] = x[rng.integers(x.shape[0])]
        else:
            centers[i] = x[rng.choice(x.shape[0], p=closest / total)]
        closest = np.minimum(closest, np.sum((x - centers[i]) ** 2, axis=1))

    history = []
    prev = np.inf
    labels = np.zeros(x.shape[0], dtype=np.int64)
    for _ in range(max_iter):
        d2 = (np.sum(x ** 2, axis=1)[:, None] - 2 * x @ centers.T
              + np.sum(centers ** 2, axis=1)[None, :])
        labels = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(x.shape[0]), labels]
        inertia = float(point_d2.sum())
        history.append(inertia)
        for i in range(n_clusters):
            members = labels == i
            if members.any():
                centers[i] = x[members].mean(axis=0)
            else:
                far = int(np.argmax(point_d2))
                centers[i] = x[far]
                point_d2[far] = 0.0
        if prev - inertia <= tol:
            break
        prev = inertia
    return KMeansResult(centers, labels, tuple(history))


@dataclass(frozen=True)
class ShapeDictionary:
    """N exemplar shapes stored column-wise as interleaved 2L-vectors."""

    exemplars: np.ndarray  # (2L, N)
    landmark_count: int
    canonical_size: int = 128

    def __post_init__(self):
        e = np.asarray(self.exemplars, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] != 2 * self.landmark_count:
            raise InvalidArgumentError(
                f"exemplars must be (2L, N) with L={self.landmark_count}, got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise InvalidArgumentError("exemplars contain non-finite values")
        object.__setattr__(self, "exemplars", e)

    @property
    def size(self) -> int:
        return self.exemplars.shape[1]

    def column_shape(self, j: int) -> np.ndarray:
        return vector_to_shape(self.exemplars[:, j])

    def save(self, path) -> None:
        np.savez(path,
                 schema_version=np.int64(DICTIONARY_SCHEMA_VERSION),
                 landmark_count=np.int64(self.landmark_count),
                 canonical_size=np.int64(self.canonical_size),
                 exemplars=self.exemplars)

    @classmethod
    def load(cls, path) -> "ShapeDictionary":
        try:
            with np.load(path) as data:
                version = int(data["schema_version"])
                if version != DICTIONARY_SCHEMA_VERSION:
                    raise CheckpointError(
                        f"dictionary schema version {version} unsupported")
                return cls(exemplars=data["exemplars"],
                           landmark_count=int(data["landmark_count"]),
                           canonical_size=int(data["canonical_size"]))
        except (OSError, KeyError, ValueError) as exc:
            raise CheckpointError(f"cannot load shape dictionary: {exc}") from exc


def build_dictionary(shapes, n_exemplars: int, seed: int,
                     canonical_size: int = 128, max_iter: int = 300,
                     tol: float = 1e-6) -> ShapeDictionary:
    """Cluster canonical shapes into ``n_exemplars`` K-means centroids."""
    shapes = list(shapes)
    if len(shapes) < n_exemplars:
        raise InvalidArgumentError(
            f"need >= {n_exemplars} shapes to build the dictionary, got {len(shapes)}")
    vectors = np.stack([shape_to_vector(s) for s in shapes])
    result = kmeans(vectors, n_exemplars, seed=seed, max_iter=max_iter, tol=tol)
    return ShapeDictionary(exemplars=result.centroids.T,
                           landmark_count=vectors.shape[1] // 2,
                           canonical_size=canonical_size)


def _check_query(dictionary, shape, visibility, k):
    s = shape_to_vector(shape)
    if s.size != dictionary.exemplars.shape[0]:
        raise InvalidArgumentError("query shape length does not match dictionary")
    v = np.asarray(visibility)
    if v.shape != (dictionary.landmark_count,):
        raise InvalidArgumentError("visibility length does not match dictionary")
    if int(v.sum()) < MIN_VISIBLE_LANDMARKS:
        raise DegenerateMaskError(
            f"{int(v.sum())} visible landmarks < minimum {MIN_VISIBLE_LANDMARKS}")
    if not 1 <= k <= dictionary.size:
        raise InvalidArgumentError(f"k={k} must be in [1, {dictionary.size}]")
    return s, expand_visibility(v)


def search_nearest(dictionary: ShapeDictionary, shape, visibility, k: int) -> np.ndarray:
    """Indices of the k exemplars nearest to the visible landmark subset.

    Distance is the Euclidean norm over visible coordinates only (both
    coordinates of an invisible landmark are masked out); ties resolve to
    the smaller column index.
    """
    s, mask = _check_query(dictionary, shape, visibility, k)
    diff = (s - dictionary.exemplars.T) * mask
    dist = np.linalg.norm(diff, axis=1)
    return np.argsort(dist, kind="stable")[:k]


@dataclass(frozen=True)
class ReconstructionResult:
    coefficients: np.ndarray
    selected_indices: np.ndarray
    shape: np.ndarray          # (L, 2), every landmark reconstructed
    visible_residual: float


def reconstruct(dictionary: ShapeDictionary, shape, visibility, k: int,
                ridge_lambda: float = DEFAULT_RIDGE_LAMBDA) -> ReconstructionResult:
    """Ridge-blend the k nearest exemplars to fit the visible landmarks.

    Solves ``min_a ||M (s - D a)||^2 + lambda ||a||^2`` over the selected
    columns via the regularized normal equations (Cholesky). With
    ``ridge_lambda == 0`` a rank-deficient system falls back to the
    minimum-norm least-squares solution instead of raising.
    """
    if ridge_lambda < 0:
        raise InvalidArgumentError("ridge_lambda must be >= 0")
    s, mask = _check_query(dictionary, shape, visibility, k)
    idx = search_nearest(dictionary, shape, visibility, k)
    cols = dictionary.exemplars[:, idx]
    masked_cols = cols * mask[:, None]
    masked_target = s * mask

    gram = masked_cols.T @ masked_cols
    rhs = masked_cols.T @ masked_target
    if ridge_lambda > 0:
        gram = gram + ridge_lambda * np.eye(k)
        coeffs = cho_solve(cho_factor(gram), rhs)
    else:
        coeffs, *_ = np.linalg.lstsq(masked_cols, masked_target, rcond=None)

    full = cols @ coeffs
    residual = float(np.linalg.norm((s - full) * mask))
    return ReconstructionResult(coefficients=coeffs,
                                selected_indices=idx,
                                shape=vector_to_shape(full),
                                visible_residual=residual)


FUSE_MODES = ("replace_invisible", "full")


def fuse_final_shape(predicted, visibility, recon: ReconstructionResult,
                     mode: str = "replace_invisible") -> np.ndarray:
    """Merge the network prediction with the reconstructed shape.

    ``replace_invisible`` keeps the network's visible landmarks and takes
    reconstructed coordinates elsewhere; ``full`` returns the reconstructed
    shape wholesale.
    """
    pred = as_shape(predicted, min_landmarks=1)
    if mode == "full":
        return recon.shape.copy()
    if mode != "replace_invisible":
        raise InvalidArgumentError(f"unknown fuse mode {mode!r}; use one of {FUSE_MODES}")
    v = np.asarray(visibility).astype(bool)
    if v.shape != (pred.shape[0],):
        raise InvalidArgumentError("visibility length does not match prediction")
    return np.where(v[:, None], pred, recon.shape)
