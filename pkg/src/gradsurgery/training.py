"""Synthetic data, encoders and the surgical training loop.

Encoders map inputs to unit embeddings. The surgical update at each
embedding is pulled back through the L2 normalization (tangent
projection scaled by the inverse pre-normalization norm) and then
through the encoder parameters. Plain SGD: no momentum, no weight decay.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import surgery
from .errors import DegenerateTriplet, NonFiniteGradient, ValidationError, ZeroVector
from .evaluation import RecallReport, recall_at_k
from .geometry import ZERO_NORM
from .mining import BatchSpec, ephn_triplets, make_batch, mining_context, similarity_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 30
    samples_per_class: int = 16
    input_dim: int = 32
    noise_sigma: float = 0.35
    holdout_classes: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValidationError("dataset.num_classes must be >= 2")
        if self.samples_per_class < 2:
            raise ValidationError("dataset.samples_per_class must be >= 2")
        if self.input_dim < 2:
            raise ValidationError("dataset.input_dim must be >= 2")
        if self.noise_sigma < 0:
            raise ValidationError("dataset.noise_sigma must be >= 0")
        if not 0 <= self.holdout_classes < self.num_classes:
            raise ValidationError("dataset.holdout_classes must be in [0, num_classes)")


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    holdout: np.ndarray

    @property
    def train_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.holdout)

    @property
    def holdout_indices(self) -> np.ndarray:
        return np.flatnonzero(self.holdout)


def generate_dataset(spec: SyntheticSpec) -> Dataset:
    """Gaussian clusters around random prototypes on the input sphere.

    Noise is isotropic with per-coordinate standard deviation
    ``noise_sigma``; every sample is renormalized. The last
    ``holdout_classes`` classes are flagged as holdout.
    """
    rng = np.random.default_rng(spec.seed)
    protos = rng.standard_normal((spec.num_classes, spec.input_dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    labels = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
    noise = rng.standard_normal((len(labels), spec.input_dim))
    inputs = protos[labels] + spec.noise_sigma * noise
    inputs /= np.linalg.norm(inputs, axis=1, keepdims=True)
    holdout = labels >= spec.num_classes - spec.holdout_classes
    return Dataset(inputs, labels, holdout)


@dataclass(frozen=True)
class EncoderSpec:
    kind: str = "linear"
    embed_dim: int = 8

    def __post_init__(self):
        if self.kind not in ("table", "linear"):
            raise ValidationError(f"encoder.kind must be table or linear, got {self.kind!r}")
        if self.embed_dim < 2:
            raise ValidationError("encoder.embed_dim must be >= 2")


def _pull_back(emb: np.ndarray, norms: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Chain the embedding gradient through ``f = v / ||v||``."""
    radial = np.sum(emb * grads, axis=1, keepdims=True)
    return (grads - radial * emb) / norms[:, None]


class TableEncoder:
    """One free parameter vector per sample, kept at unit norm."""

    kind = "table"

    def __init__(self, params: np.ndarray):
        self.params = np.asarray(params, dtype=np.float64)

    @classmethod
    def init(cls, num_samples: int, embed_dim: int, rng: np.random.Generator):
        p = rng.standard_normal((num_samples, embed_dim))
        return cls(p / np.linalg.norm(p, axis=1, keepdims=True))

    def copy(self) -> "TableEncoder":
        return TableEncoder(self.params.copy())

    def pre_activations(self, inputs, indices) -> np.ndarray:
        return self.params[np.asarray(indices)]

    def forward(self, inputs, indices):
        return _normalize_rows(self.pre_activations(inputs, indices))

    def apply_updates(self, grads, inputs, indices, lr: float) -> None:
        _check_finite(grads)
        indices = np.asarray(indices)
        emb, norms = self.forward(inputs, indices)
        step = self.params[indices] - lr * _pull_back(emb, norms, grads)
        self.params[indices] = step / np.linalg.norm(step, axis=1, keepdims=True)


class LinearEncoder:
    """Embedding ``normalize(W @ x)`` with a learned ``embed_dim x input_dim`` W."""

    kind = "linear"

    def __init__(self, weight: np.ndarray):
        self.weight = np.asarray(weight, dtype=np.float64)

    @classmethod
    def init(cls, input_dim: int, embed_dim: int, rng: np.random.Generator):
        return cls(rng.standard_normal((embed_dim, input_dim)) / math.sqrt(input_dim))

    def copy(self) -> "LinearEncoder":
        return LinearEncoder(self.weight.copy())

    def pre_activations(self, inputs, indices) -> np.ndarray:
        return np.asarray(inputs, dtype=np.float64) @ self.weight.T

    def forward(self, inputs, indices):
        return _normalize_rows(self.pre_activations(inputs, indices))

    def apply_updates(self, grads, inputs, indices, lr: float) -> None:
        _check_finite(grads)
        emb, norms = self.forward(inputs, indices)
        self.weight -= lr * (_pull_back(emb, norms, grads).T @ np.asarray(inputs))


def _normalize_rows(pre: np.ndarray):
    norms = np.linalg.norm(pre, axis=1)
    if np.any(norms <= ZERO_NORM):
        raise ZeroVector(f"pre-normalization rows {np.flatnonzero(norms <= ZERO_NORM).tolist()} vanished")
    return pre / norms[:, None], norms


def _check_finite(grads) -> None:
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradient("non-finite gradient at the embeddings")


def make_encoder(spec: EncoderSpec, dataset: Dataset, seed: int):
    rng = np.random.default_rng([seed, 0])
    if spec.kind == "table":
        return TableEncoder.init(len(dataset.labels), spec.embed_dim, rng)
    return LinearEncoder.init(dataset.inputs.shape[1], spec.embed_dim, rng)


@dataclass(frozen=True)
class TrainParams:
    epochs: int = 60
    batch: BatchSpec = field(default_factory=BatchSpec)
    base_lr: float = 0.5
    lr_step_factor: float = 0.1
    lr_milestone_frac: float = 0.6
    seed: int = 0
    aggregate: str = "mean"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError("train.epochs must be >= 0")
        if not self.base_lr > 0:
            raise ValidationError("train.base_lr must be > 0")
        if not 0 < self.lr_step_factor < 1:
            raise ValidationError("train.lr_step_factor must be in (0, 1)")
        if not 0 < self.lr_milestone_frac < 1:
            raise ValidationError("train.lr_milestone_frac must be in (0, 1)")
        if self.aggregate not in ("mean", "sum"):
            raise ValidationError("train.aggregate must be mean or sum")


def lr_at(epoch: int, params: TrainParams) -> float:
    milestone = math.floor(params.epochs * params.lr_milestone_frac)
    if epoch < milestone:
        return params.base_lr
    return params.base_lr * params.lr_step_factor


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss_proxy: float
    mean_s_ap: float
    mean_s_an: float
    recall_train: RecallReport
    recall_holdout: Optional[RecallReport]
    skipped: int = 0


@dataclass
class TrainLog:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i) -> EpochRecord:
        return self.records[i]


def batch_gradients(cfg: surgery.SurgeryConfig, emb: np.ndarray, labels,
                    epsilon: float = 0.1, aggregate: str = "mean"):
    """Mine one batch and accumulate the composed updates per sample.

    Returns ``(grads, triplets, skipped)``. Accumulation runs in
    ascending anchor order so results are bitwise reproducible. Triplets
    whose direction is undefined (coincident features under a Euclidean
    direction) contribute nothing and are counted in ``skipped``.
    """
    labels = np.asarray(labels)
    triplets = ephn_triplets(emb, labels)
    sim = similarity_matrix(emb)
    form = cfg.pair_weight.relative_form
    grads = np.zeros_like(emb)
    skipped = 0
    for trip in triplets:
        a, p, n = trip
        rel = None
        if form is not None:
            ctx = mining_context(sim, labels, trip, epsilon)
            rel = surgery.relative_stats(form, ctx.sims, ctx.set_P, ctx.set_N, cfg)
        try:
            upd = surgery.compose(cfg, emb[a], emb[p], emb[n], rel)
        except DegenerateTriplet:
            skipped += 1
            continue
        if not all(np.all(np.isfinite(g)) for g in upd):
            raise NonFiniteGradient(f"non-finite update for triplet {trip}", triplet=trip)
        grads[a] += upd.g_a
        grads[p] += upd.g_p
        grads[n] += upd.g_n
    if aggregate == "mean":
        grads /= len(triplets)
    return grads, triplets, skipped


def batch_seed(seed: int, epoch: int, step: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, step]).generate_state(1)[0])


def evaluate(encoder, dataset: Dataset, ks: Sequence[int]):
    everything = np.arange(len(dataset.labels))
    emb, _ = encoder.forward(dataset.inputs, everything)
    out = {}
    for split, idx in (("train", dataset.train_indices), ("holdout", dataset.holdout_indices)):
        out[split] = recall_at_k(emb[idx], dataset.labels[idx], ks, split) if len(idx) else None
    return out


def train(run, dataset: Optional[Dataset] = None):
    """Run the full experiment described by ``run`` (a ``RunConfig``).

    Returns ``(TrainLog, encoder)``.
    """
    if dataset is None:
        dataset = generate_dataset(run.dataset)
    params: TrainParams = run.train
    cfg: surgery.SurgeryConfig = run.surgery
    encoder = make_encoder(run.encoder, dataset, params.seed)
    train_idx = dataset.train_indices
    train_labels = dataset.labels[train_idx]
    steps = max(1, len(train_idx) // params.batch.size)
    log = TrainLog()
    for epoch in range(params.epochs):
        lr = lr_at(epoch, params)
        s_ap, s_an, skipped = [], [], 0
        for step in range(steps):
            local = make_batch(train_labels, params.batch, batch_seed(params.seed, epoch, step))
            idx = train_idx[local]
            inputs = dataset.inputs[idx]
            emb, _ = encoder.forward(inputs, idx)
            labels = dataset.labels[idx]
            try:
                grads, triplets, n_skip = batch_gradients(
                    cfg, emb, labels, run.epsilon, params.aggregate)
            except NonFiniteGradient as exc:
                raise NonFiniteGradient(f"epoch {epoch} step {step}: {exc}", exc.triplet) from exc
            skipped += n_skip
            encoder.apply_updates(grads, inputs, idx, lr)
            s_ap.extend(float(emb[a] @ emb[p]) for a, p, _ in triplets)
            s_an.extend(float(emb[a] @ emb[n]) for a, _, n in triplets)
        s_ap_arr, s_an_arr = np.array(s_ap), np.array(s_an)
        recalls = evaluate(encoder, dataset, run.eval_ks)
        log.records.append(EpochRecord(
            epoch=epoch,
            lr=lr,
            loss_proxy=float(np.mean(np.logaddexp(0.0, s_an_arr - s_ap_arr))),
            mean_s_ap=float(np.clip(s_ap_arr.mean(), -1, 1)),
            mean_s_an=float(np.clip(s_an_arr.mean(), -1, 1)),
            recall_train=recalls["train"],
            recall_holdout=recalls["holdout"],
            skipped=skipped,
        ))
        if skipped:
            logger.debug("epoch %d: skipped %d degenerate triplets", epoch, skipped)
    return log, encoder
