"""Training objective: task loss plus orthonormality and coefficient-norm penalties.

For an SCEF layer with per-channel basis matrices ``U_i`` (``K x r``) and
coefficient vectors ``a_ij`` (length ``r``):

    phi1 = lambda1 * sum_i ||U_i^T U_i - I||     (spectral norm by default)
    phi2 = lambda2 * sum_ij ||a_ij||_2

``lambda1`` is scaled per layer by the layer's rank ``r``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .layers import ScefParams

NORMS = ("spectral", "frobenius")


@dataclass(frozen=True)
class RegWeights:
    """Regularization multipliers.  A weight of 0 switches that penalty off."""

    lambda1_base: float = 1e-4
    lambda2: float = 1e-4
    phi1_norm: str = "spectral"

    def __post_init__(self):
        for name in ("lambda1_base", "lambda2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ParameterError(f"{name} must lie in [0, 1), got {v}")
        if self.phi1_norm not in NORMS:
            raise ParameterError(f"phi1_norm must be one of {NORMS}, got {self.phi1_norm!r}")

    def lambda1_for(self, r: int) -> float:
        return self.lambda1_base * r


@dataclass(frozen=True)
class LossBreakdown:
    task_loss: float
    phi1_total: float
    phi2_total: float
    total: float


def gram_defect(params: ScefParams) -> np.ndarray:
    """``U_i^T U_i - I`` for every input channel, shape ``(c_in, r, r)``."""
    u = params.eigen_filters
    gram = np.einsum("ikpq,impq->ikm", u, u)
    return gram - np.eye(params.r)


def orthonormality_defect(params: ScefParams, norm: str = "frobenius") -> np.ndarray:
    """Per-channel norm of the Gram defect."""
    d = gram_defect(params)
    if norm == "frobenius":
        return np.sqrt(np.einsum("ikm,ikm->i", d, d))
    if norm == "spectral":
        return np.max(np.abs(np.linalg.eigvalsh(d)), axis=1)
    raise ParameterError(f"norm must be one of {NORMS}, got {norm!r}")


def phi1(params: ScefParams, lambda1: float, norm: str = "spectral") -> tuple[float, np.ndarray]:
    """Orthonormality penalty and its gradient w.r.t. the eigen-filters.

    The defect matrix ``D`` is symmetric, so its spectral norm is the
    largest ``|eigenvalue|`` and the gradient of that norm with respect to
    ``D`` is ``sign(lam) q q^T`` for the corresponding eigenvector ``q``.
    Chaining through ``D = U^T U - I`` gives ``dU = U (S + S^T)``.
    """
    d = gram_defect(params)
    if norm == "spectral":
        lam, q = np.linalg.eigh(d)
        idx = np.argmax(np.abs(lam), axis=1)
        top = np.take_along_axis(lam, idx[:, None], axis=1)[:, 0]
        vec = np.take_along_axis(q, idx[:, None, None], axis=2)[:, :, 0]
        norms = np.abs(top)
        dD = np.sign(top)[:, None, None] * vec[:, :, None] * vec[:, None, :]
    elif norm == "frobenius":
        norms = np.sqrt(np.einsum("ikm,ikm->i", d, d))
        safe = np.where(norms > 0, norms, 1.0)
        dD = np.where((norms > 0)[:, None, None], d / safe[:, None, None], 0.0)
    else:
        raise ParameterError(f"norm must be one of {NORMS}, got {norm!r}")
    sym = dD + np.swapaxes(dD, 1, 2)
    grad = lambda1 * np.einsum("impq,imk->ikpq", params.eigen_filters, sym)
    return float(lambda1 * norms.sum()), grad


def phi2(params: ScefParams, lambda2: float) -> tuple[float, np.ndarray]:
    """Coefficient-norm penalty and its (sub)gradient w.r.t. the coefficients."""
    a = params.coefficients
    norms = np.sqrt(np.einsum("ijk,ijk->ij", a, a))
    safe = np.where(norms > 0, norms, 1.0)
    grad = np.where((norms > 0)[..., None], a / safe[..., None], 0.0)
    return float(lambda2 * norms.sum()), lambda2 * grad


def regularizers(layers: Sequence[ScefParams], weights: RegWeights):
    """Sum of both penalties over layers, with per-layer gradients.

    Returns ``(phi1_total, phi2_total, grads)`` where ``grads[n]`` is the
    pair ``(d_eigen_filters, d_coefficients)`` for ``layers[n]``.
    """
    p1 = p2 = 0.0
    grads = []
    for params in layers:
        v1, g1 = phi1(params, weights.lambda1_for(params.r), weights.phi1_norm)
        v2, g2 = phi2(params, weights.lambda2)
        p1 += v1
        p2 += v2
        grads.append((g1, g2))
    return p1, p2, grads


def total_loss(task: float, layers: Sequence[ScefParams], weights: RegWeights) -> LossBreakdown:
    p1, p2, _ = regularizers(layers, weights)
    return LossBreakdown(task_loss=float(task), phi1_total=p1, phi2_total=p2, total=float(task) + p1 + p2)


def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = z.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n
