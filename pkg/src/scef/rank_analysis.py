"""Effective-rank analysis of convolution filter banks and a Monte-Carlo check
of the perturbation bound for orthonormal SCEF layers.

For input channel ``i`` the filters ``w_j^(i)`` are vectorized into the
columns of a ``K x c_out`` matrix with singular values ``s_1 >= s_2 >= ...``.

* channel rank ``r_i`` = number of ``s_k >= gamma * s_1`` (0 for an all-zero channel)
* layer spectrum ``s_k^l`` = mean over non-zero channels of ``s_k / s_1``
* layer rank ``r^l`` = number of ``k`` with ``s_k^l >= gamma``

Comparisons against ``gamma`` allow a relative slack of 1e-10 so that
numerically flat spectra count as ties.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .checkpoint import load_checkpoint
from .errors import ConsistencyError, NumericError, ParameterError, PreconditionError
from .layers import ScefParams, compose_filters
from .network import CONV_KINDS, Network
from .schedules import DEFAULT_GAMMA
from .tensor_core import FilterBank, as_bank, batched_svd, conv2d, spectral_norms

_TIE_SLACK = 1e-10


@dataclass
class EffRankReport:
    per_channel_ranks: np.ndarray
    layer_rank: int
    normalized_spectrum: np.ndarray
    gamma: float
    layer_depth: int
    layer_index: int | None = None
    zero_channels: int = 0
    histogram: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def all_zero(self) -> bool:
        return self.normalized_spectrum.size == 0

    def as_dict(self) -> dict:
        return {
            "layer_depth": self.layer_depth,
            "layer_index": self.layer_index,
            "gamma": self.gamma,
            "layer_rank": int(self.layer_rank),
            "per_channel_ranks": [int(v) for v in self.per_channel_ranks],
            "normalized_spectrum": [float(v) for v in self.normalized_spectrum],
            "zero_channels": int(self.zero_channels),
            "all_zero": self.all_zero,
            "histogram": {str(k + 1): float(v) for k, v in enumerate(self.histogram)},
        }


@dataclass(frozen=True)
class RobustnessCheckConfig:
    epsilon: float
    trials: int = 1000
    perturbation_scale: float = 1.0
    image_size: tuple = (8, 8)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")
        if self.trials < 1:
            raise ParameterError(f"trials must be >= 1, got {self.trials}")


def _check_gamma(gamma: float) -> None:
    if not gamma >= 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")


def channel_spectra(bank) -> np.ndarray:
    """Singular values of every per-input-channel matrix, shape ``(c_in, min(K, c_out))``."""
    mats = as_bank(bank).channel_matrices()
    if not np.all(np.isfinite(mats)):
        raise NumericError("filter bank contains non-finite entries")
    return batched_svd(mats).singular


def _ranks_from_spectra(sig: np.ndarray, gamma: float) -> np.ndarray:
    top = sig[:, :1]
    counted = sig >= (gamma - _TIE_SLACK) * top
    return np.where(top[:, 0] > 0, counted.sum(axis=1), 0)


def channel_effective_rank(filters_for_channel, gamma: float = DEFAULT_GAMMA) -> int:
    """Effective rank of one ``K x c_out`` matrix of vectorized filters."""
    _check_gamma(gamma)
    m = np.asarray(filters_for_channel, dtype=np.float64)
    if m.ndim != 2:
        raise ParameterError(f"expected a K x c_out matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError("filter matrix contains non-finite entries")
    sig = batched_svd(m[None]).singular
    return int(_ranks_from_spectra(sig, gamma)[0])


def layer_effective_rank(bank, gamma: float = DEFAULT_GAMMA, depth: int = 0,
                         index: int | None = None) -> EffRankReport:
    _check_gamma(gamma)
    sig = channel_spectra(bank)
    ranks = _ranks_from_spectra(sig, gamma)
    live = sig[:, 0] > 0
    p = sig.shape[1]
    if live.any():
        spectrum = (sig[live] / sig[live, :1]).mean(axis=0)
        layer_rank = int(np.sum(spectrum >= gamma - _TIE_SLACK))
        # densities of r_i = 1..p among non-zero channels (r_i = 0 only occurs for gamma > 1)
        hist = np.bincount(ranks[live], minlength=p + 1)[1:p + 1] / live.sum()
    else:
        spectrum = np.zeros(0)
        layer_rank = 0
        hist = np.zeros(p)
    return EffRankReport(ranks, layer_rank, spectrum, gamma, depth, index, int((~live).sum()), hist)


def _eligible_banks(container) -> list[tuple[int | None, FilterBank]]:
    if isinstance(container, (str, Path)):
        container = load_checkpoint(container)[0]
    if isinstance(container, Network):
        return [(L.index, container.dense_bank(L.index)) for L in container.layers
                if L.kind in CONV_KINDS and L.h > 1]
    banks = []
    for item in container:
        bank = compose_filters(item) if isinstance(item, ScefParams) else as_bank(item)
        if bank.h > 1:
            banks.append((None, bank))
    return banks


def analyze_network(weights_container, gamma: float = DEFAULT_GAMMA) -> list[EffRankReport]:
    """One report per layer with ``h > 1``, in depth order.

    ``weights_container`` is a checkpoint path, a :class:`Network`, or a
    sequence of filter banks / SCEF parameter sets.
    """
    return [layer_effective_rank(bank, gamma, depth, idx)
            for depth, (idx, bank) in enumerate(_eligible_banks(weights_container))]


@dataclass
class RankTrajectory:
    epochs: list
    layer_indices: list
    ranks: np.ndarray  # (n_checkpoints, n_layers)
    final_window: int
    final_std: np.ndarray

    def converged_layers(self) -> list:
        return [idx for idx, s in zip(self.layer_indices, self.final_std) if s == 0]

    def as_dict(self) -> dict:
        return {
            "schema": 1,
            "epochs": list(self.epochs),
            "layer_indices": list(self.layer_indices),
            "ranks": self.ranks.tolist(),
            "final_window": self.final_window,
            "final_std": [float(v) for v in self.final_std],
        }

    def to_csv(self) -> str:
        head = ["epoch"] + [f"layer{i}" for i in self.layer_indices]
        lines = [",".join(head)]
        lines += [",".join([str(e)] + [str(int(v)) for v in row]) for e, row in zip(self.epochs, self.ranks)]
        return "\n".join(lines) + "\n"


def rank_trajectory(checkpoint_series: Sequence, gamma: float = DEFAULT_GAMMA) -> RankTrajectory:
    """Layer ranks for each checkpoint, plus the std over the final 20% of them.

    Items are checkpoint paths or :class:`Network` objects (epoch = position).
    """
    if not checkpoint_series:
        raise ParameterError("checkpoint series is empty")
    epochs, rows = [], []
    topology = None
    indices = None
    for pos, item in enumerate(checkpoint_series):
        if isinstance(item, (str, Path)):
            net, manifest = load_checkpoint(item)
            epochs.append(manifest.get("epoch", pos))
        else:
            net = item
            epochs.append(pos)
        shapes = net.expected_shapes()
        if topology is None:
            topology = shapes
        elif shapes != topology:
            raise ConsistencyError(f"checkpoint {pos} has a different topology from checkpoint 0")
        reports = analyze_network(net, gamma)
        indices = [r.layer_index for r in reports]
        rows.append([r.layer_rank for r in reports])
    ranks = np.asarray(rows, dtype=np.int64).reshape(len(rows), len(indices))
    window = max(1, math.ceil(0.2 * len(rows)))
    std = ranks[-window:].std(axis=0) if ranks.size else np.zeros(0)
    return RankTrajectory(epochs, indices, ranks, window, std)


def verify_robustness_bound(params: ScefParams, cfg: RobustnessCheckConfig, seed: int = 0,
                            chunk: int = 2048) -> dict:
    """Monte-Carlo check of ``||sum_i dI_i (*) w_j^(i)||_inf <= eps h r sum_i ||dI_i||_2``.

    The convolution is valid-mode and ``||.||_2`` is the matrix spectral
    norm.  Trial ``t`` draws its perturbations from ``default_rng(seed + t)``.
    Every output channel ``j`` of every trial is one comparison.
    """
    defect = np.abs(np.einsum("ikpq,impq->ikm", params.eigen_filters, params.eigen_filters) - np.eye(params.r))
    if defect.max() > 1e-6:
        raise PreconditionError(f"eigen-filters not orthonormal: max |U^T U - I| = {defect.max():.3e} > 1e-6")
    a_norms = np.sqrt(np.einsum("ijk,ijk->ij", params.coefficients, params.coefficients))
    if a_norms.max() > cfg.epsilon * (1 + 1e-12):
        raise PreconditionError(f"coefficient norm {a_norms.max():.6g} exceeds epsilon {cfg.epsilon}")

    bank = compose_filters(params)
    H, W = cfg.image_size
    bound_scale = cfg.epsilon * params.h * params.r
    violations = 0
    max_ratio = 0.0
    for start in range(0, cfg.trials, chunk):
        stop = min(cfg.trials, start + chunk)
        dI = np.stack([
            cfg.perturbation_scale * np.random.default_rng(seed + t).standard_normal((params.c_in, H, W))
            for t in range(start, stop)
        ])
        lhs = np.max(np.abs(conv2d(dI, bank, 1, "valid")), axis=(2, 3))  # (T, c_out)
        norms = spectral_norms(dI.reshape(-1, H, W)).reshape(len(dI), params.c_in).sum(axis=1)
        rhs = bound_scale * norms[:, None]
        violations += int(np.sum(lhs > rhs))
        ratio = np.divide(lhs, rhs, out=np.zeros_like(lhs), where=rhs > 0)
        max_ratio = max(max_ratio, float(ratio.max()))
    return {"violations": violations, "max_ratio": max_ratio, "trials": cfg.trials,
            "comparisons": cfg.trials * params.c_out, "epsilon": cfg.epsilon}
