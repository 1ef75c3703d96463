"""Recall@K retrieval metric and triplet-diagram data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .errors import DegenerateBatch, KTooLarge
from .mining import similarity_matrix


@dataclass(frozen=True)
class RecallReport:
    recall: Dict[int, float]
    split: str = "train"

    def __getitem__(self, k: int) -> float:
        return self.recall[k]


@dataclass(frozen=True)
class DiagramRow:
    anchor_id: int
    s_np: float
    s_nn: float


def ranked_neighbors(embeddings) -> np.ndarray:
    """Neighbor indices per query, most similar first, self excluded.

    Ties are broken by lower index (stable sort on negated similarity).
    """
    sim = similarity_matrix(embeddings)
    n = sim.shape[0]
    order = np.argsort(-sim, axis=1, kind="stable")
    keep = order != np.arange(n)[:, None]
    return order[keep].reshape(n, n - 1)


def recall_at_k(embeddings, labels, ks: Sequence[int], split: str = "train") -> RecallReport:
    labels = np.asarray(labels)
    n = len(labels)
    if n < 2:
        raise KTooLarge("recall needs at least two samples")
    for k in ks:
        if not 1 <= k < n:
            raise KTooLarge(f"k={k} must be in [1, {n - 1}]")
    first = first_hit_rank(embeddings, labels)
    return RecallReport({int(k): float(np.mean(first < k)) for k in ks}, split)


def first_hit_rank(embeddings, labels) -> np.ndarray:
    """Zero-based rank of each query's first same-class neighbor.

    Equivalent to scanning :func:`ranked_neighbors`, without the sort: the
    first hit is the best same-class match (lowest index among ties), and
    everything ranked ahead of it is a different-class item that is either
    more similar, or equally similar with a lower index. Queries without
    any same-class item get rank ``n``.
    """
    labels = np.asarray(labels)
    n = len(labels)
    sim = similarity_matrix(embeddings)
    idx = np.arange(n)
    same = labels[:, None] == labels[None, :]
    same[idx, idx] = False
    masked = np.where(same, sim, -np.inf)
    best_j = masked.argmax(axis=1)
    best_s = masked[idx, best_j]
    other = ~same
    other[idx, idx] = False
    ahead = other & ((sim > best_s[:, None])
                     | ((sim == best_s[:, None]) & (idx[None, :] < best_j[:, None])))
    return np.where(same.any(axis=1), ahead.sum(axis=1), n)


def triplet_diagram(embeddings, labels) -> List[DiagramRow]:
    """Nearest-positive vs nearest-negative similarity for every sample."""
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2 or counts.min() < 2:
        raise DegenerateBatch("diagram needs >= 2 classes with >= 2 samples each")
    sim = similarity_matrix(embeddings)
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    diff = labels[:, None] != labels[None, :]
    s_np = np.where(same, sim, -np.inf).max(axis=1)
    s_nn = np.where(diff, sim, -np.inf).max(axis=1)
    return [DiagramRow(i, float(s_np[i]), float(s_nn[i])) for i in range(len(labels))]
