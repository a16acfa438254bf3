"""Landmark scheme tables: counts, index sets, and flip permutations.

A scheme pins everything that depends on the annotation convention: which
landmarks form the face contour (they get the lower visibility threshold),
which are the outer eye corners (inter-ocular normalizer), which rings
average to the eye centers (inter-pupil normalizer and canonicalization
anchors), and how indices permute under a horizontal flip.

The shipped tables live in ``data/schemes_v1.json``; ``synth24`` is the
layout produced by the synthetic face generator in :mod:`facealign.dataio`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class LandmarkScheme:
    name: str
    landmark_count: int
    contour: tuple[int, ...]
    left_eye_outer: int
    right_eye_outer: int
    left_eye_ring: tuple[int, ...]
    right_eye_ring: tuple[int, ...]
    flip: tuple[int, ...]

    def __post_init__(self):
        n = self.landmark_count
        all_idx = list(self.contour) + [self.left_eye_outer, self.right_eye_outer]
        all_idx += list(self.left_eye_ring) + list(self.right_eye_ring)
        if any(i < 0 or i >= n for i in all_idx):
            raise InvalidArgumentError(f"scheme {self.name}: index out of range")
        if sorted(self.flip) != list(range(n)):
            raise InvalidArgumentError(f"scheme {self.name}: flip is not a permutation")
        if any(self.flip[self.flip[i]] != i for i in range(n)):
            raise InvalidArgumentError(f"scheme {self.name}: flip is not an involution")

    @property
    def feature_indices(self) -> tuple[int, ...]:
        """All landmarks not on the contour."""
        contour = set(self.contour)
        return tuple(i for i in range(self.landmark_count) if i not in contour)


def _load_shipped() -> dict[str, LandmarkScheme]:
    raw = json.loads(
        resources.files("facealign").joinpath("data/schemes_v1.json").read_text()
    )
    if raw.get("schema_version") != 1:
        raise InvalidArgumentError("unsupported scheme table schema version")
    out = {}
    for name, s in raw["schemes"].items():
        out[name] = LandmarkScheme(
            name=name,
            landmark_count=s["landmark_count"],
            contour=tuple(s["contour"]),
            left_eye_outer=s["left_eye_outer"],
            right_eye_outer=s["right_eye_outer"],
            left_eye_ring=tuple(s["left_eye_ring"]),
            right_eye_ring=tuple(s["right_eye_ring"]),
            flip=tuple(s["flip"]),
        )
    return out


_REGISTRY: dict[str, LandmarkScheme] = _load_shipped()


def get_scheme(name: str) -> LandmarkScheme:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown landmark scheme {name!r}; known: {sorted(_REGISTRY)}"
        ) from None


def register_scheme(scheme: LandmarkScheme, overwrite: bool = False) -> None:
    if scheme.name in _REGISTRY and not overwrite:
        raise InvalidArgumentError(f"scheme {scheme.name!r} already registered")
    _REGISTRY[scheme.name] = scheme


def available_schemes() -> list[str]:
    return sorted(_REGISTRY)
