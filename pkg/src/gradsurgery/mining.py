"""Batch sampling, easy-positive/hard-negative mining and relative sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DegenerateBatch, InsufficientData, ValidationError
from .geometry import SimilarityPair, clamp_unit

Triplet = Tuple[int, int, int]


@dataclass(frozen=True)
class BatchSpec:
    classes_per_batch: int = 4
    samples_per_class: int = 8

    def __post_init__(self):
        if self.classes_per_batch < 2:
            raise ValidationError("classes_per_batch must be >= 2")
        if self.samples_per_class < 2:
            raise ValidationError("samples_per_class must be >= 2")

    @property
    def size(self) -> int:
        return self.classes_per_batch * self.samples_per_class


@dataclass
class MiningContext:
    anchor_index: int
    positive_index: int
    negative_index: int
    sims: SimilarityPair
    relative_pos: List[float] = field(default_factory=list)
    relative_neg: List[float] = field(default_factory=list)
    set_P: List[float] = field(default_factory=list)
    set_N: List[float] = field(default_factory=list)


def make_batch(labels: Sequence, spec: BatchSpec, seed: int) -> List[int]:
    """Draw ``C`` classes and ``N`` samples from each, without replacement.

    Indices come back grouped by class in draw order.
    """
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    eligible = classes[counts >= spec.samples_per_class]
    if len(eligible) < spec.classes_per_batch:
        raise InsufficientData(
            f"need {spec.classes_per_batch} classes with >= {spec.samples_per_class} "
            f"samples, found {len(eligible)}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(eligible, size=spec.classes_per_batch, replace=False)
    batch: List[int] = []
    for c in chosen:
        members = np.flatnonzero(labels == c)
        picks = rng.choice(members, size=spec.samples_per_class, replace=False)
        batch.extend(int(i) for i in picks)
    return batch


def _check_batch(labels: np.ndarray) -> None:
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2:
        raise DegenerateBatch("batch contains a single class")
    if counts.min() < 2:
        raise DegenerateBatch(f"class {classes[counts.argmin()]} is a singleton")


def similarity_matrix(embeddings) -> np.ndarray:
    emb = np.asarray(embeddings, dtype=np.float64)
    return np.clip(emb @ emb.T, -1.0, 1.0)


def ephn_triplets(embeddings, labels) -> List[Triplet]:
    """One triplet per anchor: most similar positive, most similar negative.

    Ties go to the lowest index (``argmax`` returns the first maximum).
    """
    labels = np.asarray(labels)
    _check_batch(labels)
    sim = similarity_matrix(embeddings)
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    diff = labels[:, None] != labels[None, :]
    pos = np.where(same, sim, -np.inf).argmax(axis=1)
    neg = np.where(diff, sim, -np.inf).argmax(axis=1)
    return [(a, int(pos[a]), int(neg[a])) for a in range(len(labels))]


def relative_sets(sims: SimilarityPair, relative_pos: Sequence[float],
                  relative_neg: Sequence[float], epsilon: float = 0.1):
    """Select the relative similarities that modulate MS pair weights.

    A relative positive is kept if it lies below the hardest negative
    similarity plus ``epsilon``; a relative negative is kept if it lies
    above the easiest positive similarity minus ``epsilon``. The selected
    pair's own similarity takes part in the max/min.
    """
    if epsilon < 0:
        raise ValidationError("epsilon must be >= 0")
    neg_ceiling = max([sims.s_an, *relative_neg]) + epsilon
    pos_floor = min([sims.s_ap, *relative_pos]) - epsilon
    set_P = [r for r in relative_pos if r < neg_ceiling]
    set_N = [r for r in relative_neg if r > pos_floor]
    return set_P, set_N


def mining_context(sim: np.ndarray, labels, triplet: Triplet,
                   epsilon: float = 0.1) -> MiningContext:
    """Gather the relative pools and sets for one mined triplet.

    ``sim`` is the batch similarity matrix. The anchor itself and the
    selected positive/negative are excluded from the pools.
    """
    a, p, n = triplet
    labels = np.asarray(labels)
    row = sim[a]
    sims = SimilarityPair(clamp_unit(float(row[p])), clamp_unit(float(row[n])))
    others = np.arange(len(labels))
    pos_pool = (labels == labels[a]) & (others != a) & (others != p)
    neg_pool = (labels != labels[a]) & (others != n)
    relative_pos = [float(x) for x in row[pos_pool]]
    relative_neg = [float(x) for x in row[neg_pool]]
    set_P, set_N = relative_sets(sims, relative_pos, relative_neg, epsilon)
    return MiningContext(a, p, n, sims, relative_pos, relative_neg, set_P, set_N)
