"""Direct construction of per-triplet gradient updates.

A triplet update is assembled from three independent pieces:

* a unit direction for each moved feature (:func:`unit_directions`),
* a pair weight for the anchor-positive and anchor-negative pairs
  (:func:`pair_weights`, optionally modulated by :func:`relative_stats`),
* a triplet weight that scales all three updates (:func:`triplet_weight`),

plus an optional mask that drops the positive-pair term for selected
triplets (:func:`positive_mask`). :func:`compose` multiplies them out.

Updates are in gradient sense: the optimizer moves features against them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import DegenerateTriplet, MismatchedStats, ValidationError
from .geometry import SimilarityPair, clamp_unit

EXP_CLIP = 50.0
DEGENERATE_NORM = 1e-12


class DirectionKind(str, Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"
    EUCLIDEAN_ORTHOGONAL = "euclidean_orthogonal"
    COSINE_ORTHOGONAL = "cosine_orthogonal"

    @property
    def base(self) -> "DirectionKind":
        if self in (DirectionKind.EUCLIDEAN, DirectionKind.EUCLIDEAN_ORTHOGONAL):
            return DirectionKind.EUCLIDEAN
        return DirectionKind.COSINE

    @property
    def orthogonal(self) -> bool:
        return self.value.endswith("_orthogonal")


class PairWeightKind(str, Enum):
    CONSTANT = "constant"
    EUCLIDEAN = "euclidean"
    LINEAR = "linear"
    SIGMOID = "sigmoid"
    SIGMOID_MS = "sigmoid_ms"
    LINEAR_MS = "linear_ms"

    @property
    def relative_form(self) -> Optional[str]:
        return {"sigmoid_ms": "sigmoid", "linear_ms": "linear"}.get(self.value)


class TripletWeightKind(str, Enum):
    CONSTANT = "constant"
    COSINE = "cosine"
    CIRCLE = "circle"


class MaskKind(str, Enum):
    NONE = "none"
    SC1 = "sc1"
    SC2 = "sc2"


@dataclass(frozen=True)
class SurgeryConfig:
    direction: DirectionKind = DirectionKind.COSINE
    pair_weight: PairWeightKind = PairWeightKind.CONSTANT
    triplet_weight: TripletWeightKind = TripletWeightKind.CONSTANT
    mask: MaskKind = MaskKind.NONE
    tau: float = 1.0
    alpha: float = 2.0
    beta: float = 10.0
    lam: float = 0.5
    margin: float = 0.2
    # Also orthogonalize the anchor's negative-pair component under *_orthogonal.
    orthogonalize_anchor: bool = True

    def __post_init__(self):
        # Accept plain strings for the enumerations.
        object.__setattr__(self, "direction", DirectionKind(self.direction))
        object.__setattr__(self, "pair_weight", PairWeightKind(self.pair_weight))
        object.__setattr__(self, "triplet_weight", TripletWeightKind(self.triplet_weight))
        object.__setattr__(self, "mask", MaskKind(self.mask))
        if not self.tau > 0:
            raise ValidationError("surgery.tau must be > 0")
        if not self.alpha > 0:
            raise ValidationError("surgery.alpha must be > 0")
        if not self.beta > 0:
            raise ValidationError("surgery.beta must be > 0")
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError("surgery.lambda must be in [0, 1]")
        if not self.margin >= 0:
            raise ValidationError("surgery.margin must be >= 0")

    def with_(self, **changes) -> "SurgeryConfig":
        return replace(self, **changes)


class DirectionSet(NamedTuple):
    e_p: np.ndarray
    e_n: np.ndarray
    e_ap: np.ndarray
    e_an: np.ndarray


class PairWeights(NamedTuple):
    p_pos: float
    p_neg: float


class RelativeStats(NamedTuple):
    m_pos: float
    m_neg: float
    form: str


class TripletUpdate(NamedTuple):
    g_a: np.ndarray
    g_p: np.ndarray
    g_n: np.ndarray


def _exp(x: float) -> float:
    return math.exp(min(EXP_CLIP, max(-EXP_CLIP, x)))


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm < DEGENERATE_NORM:
        raise DegenerateTriplet(f"{what} has norm {norm:.3g}")
    return v / norm


def _orthogonal_to(v: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Unit component of ``v`` orthogonal to unit ``axis``; zero if parallel."""
    residual = v - (v @ axis) * axis
    norm = float(np.linalg.norm(residual))
    if norm < DEGENERATE_NORM:
        return np.zeros_like(v)
    return residual / norm


def similarities(f_a, f_p, f_n) -> SimilarityPair:
    return SimilarityPair(clamp_unit(float(f_a @ f_p)), clamp_unit(float(f_a @ f_n)))


def unit_directions(kind, f_a, f_p, f_n, orthogonalize_anchor: bool = True) -> DirectionSet:
    kind = DirectionKind(kind)
    f_a, f_p, f_n = (np.asarray(x, dtype=np.float64) for x in (f_a, f_p, f_n))
    if kind.base is DirectionKind.EUCLIDEAN:
        e_p = _unit(f_p - f_a, "f_p - f_a")
        e_n = _unit(f_a - f_n, "f_a - f_n")
        e_ap, e_an = -e_p, -e_n
    else:
        e_p, e_n, e_ap, e_an = -f_a, f_a.copy(), -f_p, f_n.copy()
    if kind.orthogonal:
        axis = _unit(f_a - f_p, "f_a - f_p")
        e_n = _orthogonal_to(e_n, axis)
        if orthogonalize_anchor:
            e_an = _orthogonal_to(e_an, axis)
    return DirectionSet(e_p, e_n, e_ap, e_an)


def relative_stats(form: str, sims: SimilarityPair, set_P: Sequence[float],
                   set_N: Sequence[float], cfg: SurgeryConfig) -> RelativeStats:
    """Relative-similarity modulation terms for the MS-style pair weights.

    Empty sets fall back to the neutral value (1 for the sigmoid form,
    0 for the linear form) so the MS weights reduce to their plain forms.
    """
    if form == "sigmoid":
        m_pos = (float(np.mean([_exp(cfg.alpha * (sims.s_ap - r)) for r in set_P]))
                 if len(set_P) else 1.0)
        m_neg = (float(np.mean([_exp(-cfg.beta * (sims.s_an - r)) for r in set_N]))
                 if len(set_N) else 1.0)
    elif form == "linear":
        m_pos = float(np.mean([sims.s_ap - r for r in set_P])) if len(set_P) else 0.0
        m_neg = float(np.mean([sims.s_an - r for r in set_N])) if len(set_N) else 0.0
    else:
        raise ValueError(f"unknown relative form {form!r}")
    return RelativeStats(m_pos, m_neg, form)


def _constant_pair_weights(sims, cfg, rel):
    return 1.0, 1.0


def _euclidean_pair_weights(sims, cfg, rel):
    return sims.d_ap, sims.d_an


def _linear_pair_weights(sims, cfg, rel):
    return 1.0 - sims.s_ap, sims.s_an


def _sigmoid_pair_weights(sims, cfg, rel):
    return (1.0 / (1.0 + _exp(cfg.alpha * (sims.s_ap - cfg.lam))),
            1.0 / (1.0 + _exp(-cfg.beta * (sims.s_an - cfg.lam))))


def _sigmoid_ms_pair_weights(sims, cfg, rel):
    return (1.0 / (rel.m_pos + _exp(cfg.alpha * (sims.s_ap - cfg.lam))),
            1.0 / (rel.m_neg + _exp(-cfg.beta * (sims.s_an - cfg.lam))))


def _linear_ms_pair_weights(sims, cfg, rel):
    return (1.0 - rel.m_pos) * (1.0 - sims.s_ap), (1.0 + rel.m_neg) * sims.s_an


_PAIR_WEIGHTS = {
    PairWeightKind.CONSTANT: _constant_pair_weights,
    PairWeightKind.EUCLIDEAN: _euclidean_pair_weights,
    PairWeightKind.LINEAR: _linear_pair_weights,
    PairWeightKind.SIGMOID: _sigmoid_pair_weights,
    PairWeightKind.SIGMOID_MS: _sigmoid_ms_pair_weights,
    PairWeightKind.LINEAR_MS: _linear_ms_pair_weights,
}


def pair_weights(kind, sims: SimilarityPair, cfg: SurgeryConfig,
                 rel: Optional[RelativeStats] = None) -> PairWeights:
    kind = PairWeightKind(kind)
    form = kind.relative_form
    if form is not None:
        if rel is None:
            rel = relative_stats(form, sims, (), (), cfg)
        elif rel.form != form:
            raise MismatchedStats(f"{kind.value} needs {form} stats, got {rel.form}")
    p_pos, p_neg = _PAIR_WEIGHTS[kind](sims, cfg, rel)
    # A negative weight would reverse the motion direction.
    return PairWeights(max(p_pos, 0.0), max(p_neg, 0.0))


def cosine_triplet_weight(s_ap: float, s_an: float, tau: float) -> float:
    return 1.0 / (1.0 + _exp(tau * (s_ap - s_an)))


def circle_triplet_weight(s_ap: float, s_an: float, tau: float) -> float:
    return 1.0 / (1.0 + _exp(tau * (s_ap * (2.0 - s_ap) - s_an * s_an)))


def triplet_weight(kind, sims: SimilarityPair, tau: float) -> float:
    kind = TripletWeightKind(kind)
    if kind is TripletWeightKind.CONSTANT:
        return 0.5
    if kind is TripletWeightKind.COSINE:
        return cosine_triplet_weight(sims.s_ap, sims.s_an, tau)
    return circle_triplet_weight(sims.s_ap, sims.s_an, tau)


def positive_mask(kind, sims: SimilarityPair) -> bool:
    """True when the positive-pair weight is kept, False when zeroed."""
    kind = MaskKind(kind)
    if kind is MaskKind.SC1:
        return not sims.s_an > sims.s_ap
    if kind is MaskKind.SC2:
        return not sims.s_ap * (2.0 - sims.s_ap) - sims.s_an ** 2 > 0.5
    return True


def compose(cfg: SurgeryConfig, f_a, f_p, f_n,
            rel: Optional[RelativeStats] = None) -> TripletUpdate:
    f_a, f_p, f_n = (np.asarray(x, dtype=np.float64) for x in (f_a, f_p, f_n))
    sims = similarities(f_a, f_p, f_n)
    dirs = unit_directions(cfg.direction, f_a, f_p, f_n, cfg.orthogonalize_anchor)
    t = triplet_weight(cfg.triplet_weight, sims, cfg.tau)
    p_pos, p_neg = pair_weights(cfg.pair_weight, sims, cfg, rel)
    if not positive_mask(cfg.mask, sims):
        p_pos = 0.0
    return TripletUpdate(
        g_a=t * (p_pos * dirs.e_ap + p_neg * dirs.e_an),
        g_p=t * p_pos * dirs.e_p,
        g_n=t * p_neg * dirs.e_n,
    )


def best_combination_preset() -> SurgeryConfig:
    return SurgeryConfig(
        direction=DirectionKind.COSINE_ORTHOGONAL,
        pair_weight=PairWeightKind.LINEAR_MS,
        triplet_weight=TripletWeightKind.CIRCLE,
        mask=MaskKind.NONE,
    )
