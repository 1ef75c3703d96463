"""Self-check suites run by ``gradsurgery verify``.

Each suite compares a closed-form component against an independent
route (finite differences of a reference loss, direct scalar evaluation,
or an exact algebraic identity) and reports the worst error it saw.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from . import geometry, surgery
from .geometry import SimilarityPair
from .losses import LossParams, loss_function, numeric_gradient
from .surgery import RelativeStats, SurgeryConfig

ROLES = ("anchor", "positive", "negative")


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    cases: int
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name:<24} max_error={self.max_error:.3e} "
                f"tol={self.tolerance:.0e} cases={self.cases} ({self.seconds:.2f}s)")


def _rel_err(actual, expected) -> float:
    denom = max(float(np.linalg.norm(expected)), 1e-300)
    return float(np.linalg.norm(np.asarray(actual) - expected)) / denom


def _unit_rows(rng, d, n):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_triplets(rng, d, count, accept=lambda a, p, n: True):
    out = []
    while len(out) < count:
        trip = tuple(_unit_rows(rng, d, 3))
        if accept(*trip):
            out.append(trip)
    return out


def euclidean_oracle(count=1000, dims=(3, 16, 64), h=1e-5, seed=0, tol=1e-4) -> SuiteResult:
    """Euclidean direction x Euclidean pair weight x constant triplet weight
    against a quarter of the Euclidean triplet-loss gradient."""
    rng = np.random.default_rng(seed)
    cfg = SurgeryConfig(direction="euclidean", pair_weight="euclidean",
                        triplet_weight="constant", margin=0.3)
    loss = loss_function("euclidean", LossParams(margin=cfg.margin))
    worst, cases = 0.0, 0
    for d in dims:
        active = random_triplets(rng, d, count, lambda a, p, n: loss(a, p, n) > 1e-3)
        for trip in active:
            upd = surgery.compose(cfg, *trip)
            for g, role in zip(upd, ROLES):
                worst = max(worst, _rel_err(g, numeric_gradient(loss, trip, role, h) / 4.0))
            cases += 1
    return SuiteResult("euclidean_oracle", worst < tol, worst, tol, cases)


def cosine_oracle(count=1000, dims=(3, 16, 64), taus=(1.0, 5.0), h=1e-5, seed=1,
                  tol=1e-4) -> SuiteResult:
    """Cosine direction x constant pair weight x cosine triplet weight
    against the NCA triplet-loss gradient divided by tau."""
    rng = np.random.default_rng(seed)
    worst, cases = 0.0, 0
    for tau in taus:
        cfg = SurgeryConfig(direction="cosine", pair_weight="constant",
                            triplet_weight="cosine", tau=tau)
        loss = loss_function("cosine", LossParams(tau=tau))
        for d in dims:
            for trip in random_triplets(rng, d, count):
                upd = surgery.compose(cfg, *trip)
                for g, role in zip(upd, ROLES):
                    worst = max(worst, _rel_err(g, numeric_gradient(loss, trip, role, h) / tau))
                cases += 1
    return SuiteResult("cosine_oracle", worst < tol, worst, tol, cases)


def cosine_triplet_weight(count=500, taus=(1.0, 5.0), h=1e-5, seed=2, tol=1e-4) -> SuiteResult:
    """The cosine triplet weight equals |dL_cos/df_p| / tau for unit f_a."""
    rng = np.random.default_rng(seed)
    worst, cases = 0.0, 0
    for tau in taus:
        loss = loss_function("cosine", LossParams(tau=tau))
        for trip in random_triplets(rng, 8, count):
            sims = surgery.similarities(*trip)
            t = surgery.triplet_weight("cosine", sims, tau)
            ref = float(np.linalg.norm(numeric_gradient(loss, trip, "positive", h))) / tau
            worst = max(worst, abs(t - ref) / ref)
            cases += 1
    return SuiteResult("cosine_triplet_weight", worst < tol, worst, tol, cases)


def orthogonality(count=1000, d=16, seed=3, tol=1e-9) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst, cases = 0.0, 0
    for kind in ("euclidean_orthogonal", "cosine_orthogonal"):
        trips = random_triplets(
            rng, d, count, lambda a, p, n: a @ p < 1 - 1e-6 and a @ n < 1 - 1e-6)
        for f_a, f_p, f_n in trips:
            dirs = surgery.unit_directions(kind, f_a, f_p, f_n)
            for e in (dirs.e_n, dirs.e_an):
                norm = float(np.linalg.norm(e))
                if norm == 0.0:
                    continue  # documented degenerate case
                worst = max(worst, abs(float(e @ (f_a - f_p))), abs(norm - 1.0))
            cases += 1
    return SuiteResult("orthogonality", worst < tol, worst, tol, cases)


def projection(points=20001, tol=1e-9) -> SuiteResult:
    worst = 0.0
    grid = np.linspace(-1.0, 1.0 - 1e-6, points)[1:]
    for kind in ("euclidean", "cosine"):
        for role in ("positive", "negative"):
            for s in grid:
                total = (geometry.parallel_length(kind, role, float(s)) ** 2
                         + geometry.effective_strength(kind, float(s)) ** 2)
                worst = max(worst, abs(total - 1.0))
    crossing = abs(geometry.effective_strength("euclidean", 0.5)
                   - geometry.effective_strength("cosine", 0.5))
    worst = max(worst, crossing)
    return SuiteResult("projection", worst < tol, worst, tol, 4 * len(grid) + 1)


def closed_form_values(tol=1e-9) -> SuiteResult:
    """Weight functions against direct scalar evaluation of their formulas."""
    cfg = SurgeryConfig()
    s = SimilarityPair
    checks = [
        (surgery.pair_weights("sigmoid", s(0.8, 0.3), cfg).p_pos, 1 / (1 + math.exp(2 * (0.8 - 0.5)))),
        (surgery.pair_weights("sigmoid", s(0.8, 0.3), cfg).p_neg, 1 / (1 + math.exp(-10 * (0.3 - 0.5)))),
        (surgery.pair_weights("sigmoid_ms", s(0.8, 0.3), cfg,
                              RelativeStats(math.exp(0.6), 1.0, "sigmoid")).p_pos,
         1 / (math.exp(0.6) + math.exp(0.6))),
        (surgery.pair_weights("linear_ms", s(0.8, 0.6), cfg,
                              RelativeStats(0.3, -0.05, "linear")).p_pos, (1 - 0.3) * (1 - 0.8)),
        (surgery.pair_weights("linear_ms", s(0.8, 0.6), cfg,
                              RelativeStats(0.3, -0.05, "linear")).p_neg, (1 - 0.05) * 0.6),
        (surgery.triplet_weight("cosine", s(0.8, 0.3), 1.0), 1 / (1 + math.exp(0.8 - 0.3))),
        (surgery.triplet_weight("circle", s(0.8, 0.3), 1.0),
         1 / (1 + math.exp(0.8 * (2 - 0.8) - 0.3 ** 2))),
    ]
    worst = max(abs(a - b) for a, b in checks)
    return SuiteResult("closed_form_values", worst < tol, worst, tol, len(checks))


def reduction(count=2000, seed=4) -> SuiteResult:
    """MS pair weights with empty relative sets are bitwise the plain ones."""
    rng = np.random.default_rng(seed)
    cfg = SurgeryConfig()
    mismatches = 0
    for s_ap, s_an in rng.uniform(-1, 1, (count, 2)):
        sims = SimilarityPair(float(s_ap), float(s_an))
        sig = surgery.relative_stats("sigmoid", sims, [], [], cfg)
        lin = surgery.relative_stats("linear", sims, [], [], cfg)
        mismatches += surgery.pair_weights("sigmoid_ms", sims, cfg, sig) != surgery.pair_weights("sigmoid", sims, cfg)
        mismatches += surgery.pair_weights("linear_ms", sims, cfg, lin) != surgery.pair_weights("linear", sims, cfg)
    return SuiteResult("reduction", mismatches == 0, float(mismatches), 0.0, 2 * count)


def masks(count=2000, d=4, seed=5) -> SuiteResult:
    """Masked configs zero g_p exactly under their condition and never touch g_n."""
    rng = np.random.default_rng(seed)
    failures = 0
    for mask in ("sc1", "sc2"):
        masked = SurgeryConfig(mask=mask, pair_weight="linear", triplet_weight="circle")
        plain = masked.with_(mask="none")
        for trip in random_triplets(rng, d, count):
            sims = surgery.similarities(*trip)
            got, ref = surgery.compose(masked, *trip), surgery.compose(plain, *trip)
            failures += not np.array_equal(got.g_n, ref.g_n)
            if not surgery.positive_mask(mask, sims):
                failures += bool(np.any(got.g_p))
            else:
                failures += not np.array_equal(got.g_p, ref.g_p)
    return SuiteResult("masks", failures == 0, float(failures), 0.0, 2 * count)


SUITES: Dict[str, Callable[[], SuiteResult]] = {
    "euclidean_oracle": euclidean_oracle,
    "cosine_oracle": cosine_oracle,
    "cosine_triplet_weight": cosine_triplet_weight,
    "orthogonality": orthogonality,
    "projection": projection,
    "closed_form_values": closed_form_values,
    "reduction": reduction,
    "masks": masks,
}


def run_all() -> List[SuiteResult]:
    results = []
    for fn in SUITES.values():
        start = time.perf_counter()
        res = fn()
        res.seconds = time.perf_counter() - start
        results.append(res)
    return results
