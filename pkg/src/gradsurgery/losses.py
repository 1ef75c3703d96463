"""Reference triplet losses and a central-difference gradient oracle.

These exist only to check the closed-form gradient components. Inputs
are raw vectors: similarities are raw dot products and no normalization
is applied, so perturbing a coordinate moves the point off the sphere.
All loss functions broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ValidationError

ROLES = ("anchor", "positive", "negative")


@dataclass(frozen=True)
class LossParams:
    margin: float = 0.2
    tau: float = 1.0

    def __post_init__(self):
        if self.margin < 0:
            raise ValidationError("margin must be >= 0")
        if self.tau <= 0:
            raise ValidationError("tau must be > 0")


def _as_triplet(f_a, f_p, f_n):
    f_a, f_p, f_n = (np.asarray(x, dtype=np.float64) for x in (f_a, f_p, f_n))
    if f_a.shape[-1] != f_p.shape[-1] or f_a.shape[-1] != f_n.shape[-1]:
        raise DimensionMismatch("triplet members have different dimensions")
    return f_a, f_p, f_n


def triplet_loss_euclidean(f_a, f_p, f_n, margin: float):
    f_a, f_p, f_n = _as_triplet(f_a, f_p, f_n)
    d_ap2 = np.sum((f_a - f_p) ** 2, axis=-1)
    d_an2 = np.sum((f_a - f_n) ** 2, axis=-1)
    return np.maximum(d_ap2 - d_an2 + margin, 0.0)


def triplet_loss_cosine(f_a, f_p, f_n, tau: float):
    """NCA-style triplet loss, ``log(1 + exp(tau * (s_an - s_ap)))``."""
    f_a, f_p, f_n = _as_triplet(f_a, f_p, f_n)
    s_ap = np.sum(f_a * f_p, axis=-1)
    s_an = np.sum(f_a * f_n, axis=-1)
    return np.logaddexp(0.0, tau * (s_an - s_ap))


def loss_function(name: str, params: LossParams):
    """Bind a loss by name (``"euclidean"`` or ``"cosine"``) to its params."""
    if name == "euclidean":
        return lambda a, p, n: triplet_loss_euclidean(a, p, n, params.margin)
    if name == "cosine":
        return lambda a, p, n: triplet_loss_cosine(a, p, n, params.tau)
    raise ValueError(f"unknown loss {name!r}")


def numeric_gradient(loss, triplet, wrt: str, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``loss`` w.r.t. one triplet member.

    ``loss`` is a callable ``(f_a, f_p, f_n) -> scalar`` that broadcasts
    over leading axes; ``triplet`` is the three vectors.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h={h} outside [1e-7, 1e-3]")
    if wrt not in ROLES:
        raise ValueError(f"unknown role {wrt!r}")
    members = list(_as_triplet(*triplet))
    k = ROLES.index(wrt)
    x = members[k]
    step = h * np.eye(x.shape[-1])
    plus = list(members)
    minus = list(members)
    plus[k] = x + step
    minus[k] = x - step
    return (np.asarray(loss(*plus)) - np.asarray(loss(*minus))) / (2.0 * h)


def analytic_gradient_euclidean(f_a, f_p, f_n):
    """Closed-form hinge-active gradient of the Euclidean triplet loss."""
    f_a, f_p, f_n = _as_triplet(f_a, f_p, f_n)
    return {
        "anchor": 2.0 * (f_a - f_p) - 2.0 * (f_a - f_n),
        "positive": 2.0 * (f_p - f_a),
        "negative": 2.0 * (f_a - f_n),
    }


def analytic_gradient_cosine(f_a, f_p, f_n, tau: float):
    f_a, f_p, f_n = _as_triplet(f_a, f_p, f_n)
    w = 1.0 / (1.0 + np.exp(tau * (f_a @ f_p - f_a @ f_n)))
    return {
        "anchor": w * tau * (f_n - f_p),
        "positive": -w * tau * f_a,
        "negative": w * tau * f_a,
    }
