"""Unit-sphere primitives and projection-length analysis.

Embeddings are plain float64 numpy vectors that have been passed through
:func:`normalize`. Similarities are dot products clamped to ``[-1, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import Degenerate, DimensionMismatch, OutOfRange, ZeroVector

ZERO_NORM = 1e-12
COINCIDENT = 1.0 - 1e-12

EUCLIDEAN = "euclidean"
COSINE = "cosine"
POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class SimilarityPair:
    """Anchor-positive and anchor-negative cosine similarities."""

    s_ap: float
    s_an: float

    def __post_init__(self):
        for name in ("s_ap", "s_an"):
            value = getattr(self, name)
            if not -1.0 - 1e-12 <= value <= 1.0 + 1e-12:
                raise OutOfRange(f"{name}={value} outside [-1, 1]")

    @property
    def d_ap(self) -> float:
        return math.sqrt(max(2.0 - 2.0 * self.s_ap, 0.0))

    @property
    def d_an(self) -> float:
        return math.sqrt(max(2.0 - 2.0 * self.s_an, 0.0))


def _check_dims(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape != v.shape:
        raise DimensionMismatch(f"shapes {u.shape} and {v.shape} differ")


def clamp_unit(s: float) -> float:
    return min(1.0, max(-1.0, s))


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= ZERO_NORM:
        raise ZeroVector(f"cannot normalize vector with norm {norm:.3g}")
    return v / norm


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_dims(u, v)
    return clamp_unit(float(u @ v))


def euclidean_distance(u, v) -> float:
    """Chord length between two unit vectors, ``sqrt(2 - 2 u.v)``."""
    return math.sqrt(max(2.0 - 2.0 * cosine_similarity(u, v), 0.0))


def tangent_project(f, g) -> np.ndarray:
    """Remove from ``g`` its component along the unit vector ``f``."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    _check_dims(f, g)
    return g - (f @ g) * f


def _check_similarity(s: float) -> None:
    if not -1.0 <= s <= 1.0:
        raise OutOfRange(f"similarity {s} outside [-1, 1]")


def effective_strength(direction_kind: str, s: float) -> float:
    """Length of a unit update's component that actually rotates a pair.

    For the Euclidean direction this is ``sqrt((1 + s) / 2)``, for the
    cosine direction ``sqrt(1 - s**2)``. The two agree at ``s = 0.5``.
    """
    _check_similarity(s)
    if direction_kind == EUCLIDEAN:
        return math.sqrt((1.0 + s) / 2.0)
    if direction_kind == COSINE:
        return math.sqrt(max(1.0 - s * s, 0.0))
    raise ValueError(f"unknown direction kind {direction_kind!r}")


def parallel_length(direction_kind: str, role: str, s: float) -> float:
    """Signed projection of the unit update onto the moved feature itself."""
    _check_similarity(s)
    if role not in (POSITIVE, NEGATIVE):
        raise ValueError(f"unknown role {role!r}")
    if direction_kind == EUCLIDEAN:
        if s >= COINCIDENT:
            raise Degenerate("euclidean direction undefined for coincident pair")
        chord = math.sqrt(2.0 - 2.0 * s)
        return (1.0 - s) / chord if role == POSITIVE else (s - 1.0) / chord
    if direction_kind == COSINE:
        return -s if role == POSITIVE else s
    raise ValueError(f"unknown direction kind {direction_kind!r}")
