"""Post-training conversion of Conv2D filter banks into SCEF layers.

Each input channel is compressed independently: the top-``r`` left
singular vectors of its ``K x c_out`` filter matrix become the
eigen-filters and the coefficients are the projections of the original
filters onto them, i.e. the Frobenius-optimal rank-``r`` approximation.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .complexity import count_flops, count_params
from .errors import DimensionError, ParameterError
from .layers import ScefParams, compose_filters, project_bank
from .network import Network, NetworkConfig
from .schedules import schedule_ranks
from .tensor_core import as_bank, batched_svd

METHOD = "per-channel truncated SVD"


@dataclass
class CompressionReport:
    per_channel_error: np.ndarray
    total_error: float
    rank_used: int
    params_before: int
    params_after: int
    flops_before: int
    flops_after: int
    relative_error: float = 0.0

    def as_dict(self) -> dict:
        return {
            "method": METHOD,
            "rank_used": self.rank_used,
            "per_channel_error": [float(v) for v in self.per_channel_error],
            "total_error": self.total_error,
            "relative_error": self.relative_error,
            "params_before": self.params_before,
            "params_after": self.params_after,
            "flops_before": self.flops_before,
            "flops_after": self.flops_after,
        }


def reconstruction_error(original, compressed: ScefParams) -> tuple[np.ndarray, float]:
    """Per-input-channel and total Frobenius norm of ``original - compose(compressed)``."""
    bank = as_bank(original)
    approx = compose_filters(compressed)
    if approx.weights.shape != bank.weights.shape:
        raise DimensionError(f"compressed layer shape {approx.weights.shape} != original {bank.weights.shape}")
    diff = bank.weights - approx.weights
    per = np.sqrt(np.einsum("jipq,jipq->i", diff, diff))
    return per, float(np.sqrt(np.sum(per ** 2)))


def compress_conv_to_scef(bank, r: int, input_hw=(1, 1), stride: int = 1) -> tuple[ScefParams, CompressionReport]:
    """Rank-``r`` SCEF approximation of a dense bank.

    FLOP counts in the report use ``input_hw`` and ``stride``; the default
    ``(1, 1)`` gives multiply-accumulates per output position.
    """
    bank = as_bank(bank)
    p = min(bank.K, bank.c_out)
    if not 1 <= r <= p:
        raise ParameterError(f"rank r={r} outside [1, min(K, c_out)] = [1, {p}]")
    U = batched_svd(bank.channel_matrices()).left[:, :, :r]  # (c_in, K, r)
    h = bank.h
    eig = np.ascontiguousarray(np.swapaxes(np.swapaxes(U, 1, 2).reshape(bank.c_in, r, h, h), 2, 3))
    params = ScefParams(eig, project_bank(eig, bank), frozen=False)
    per, total = reconstruction_error(bank, params)
    H, W = input_hw
    norm = float(np.linalg.norm(bank.weights))
    report = CompressionReport(
        per_channel_error=per,
        total_error=total,
        rank_used=r,
        params_before=count_params("conv2d", bank.c_in, bank.c_out, h),
        params_after=count_params("scef", bank.c_in, bank.c_out, h, r),
        flops_before=count_flops("conv2d", H, W, stride, bank.c_in, bank.c_out, h),
        flops_after=count_flops("scef", H, W, stride, bank.c_in, bank.c_out, h, r),
        relative_error=total / norm if norm > 0 else 0.0,
    )
    return params, report


def rank_for_error_budget(bank, budget: float) -> int:
    """Smallest ``r`` whose total relative reconstruction error is ``<= budget``."""
    bank = as_bank(bank)
    if budget < 0:
        raise ParameterError(f"error budget must be >= 0, got {budget}")
    sig = batched_svd(bank.channel_matrices()).singular  # (c_in, p)
    energy = np.sum(sig ** 2)
    if energy == 0:
        return 1
    # tail[r-1] = squared error after keeping r components in every channel
    tail = energy - np.cumsum(np.sum(sig ** 2, axis=0))
    rel = np.sqrt(np.maximum(tail, 0.0) / energy)
    ok = np.flatnonzero(rel <= budget + 1e-15)
    return int(ok[0]) + 1 if ok.size else sig.shape[1]


def compress_network(net: Network, rank: int | None = None, rank_decay: str | None = None,
                     error_budget: float | None = None) -> tuple[Network, list[dict]]:
    """Replace every Conv2D layer with ``h > 1`` by its SVD-truncated SCEF form.

    Exactly one of ``rank`` (clipped to ``min(K, c_out)`` per layer),
    ``rank_decay`` or ``error_budget`` selects the rank.  Returns the new
    network and one report dict per converted layer.
    """
    if sum(v is not None for v in (rank, rank_decay, error_budget)) != 1:
        raise ParameterError("choose exactly one of rank, rank_decay, error_budget")
    eligible = [L for L in net.layers if L.kind == "conv2d" and L.h > 1]
    if rank_decay is not None and eligible:
        decay = {L.index: r for L, r in zip(eligible, schedule_ranks(rank_decay, eligible[0].h ** 2, len(eligible)))}
    layers = list(net.config.layers)
    params = {k: v for k, v in net.params.items()}
    reports = []
    for L in eligible:
        bank = net.dense_bank(L.index)
        p = min(bank.K, bank.c_out)
        if rank is not None:
            r = min(rank, p)
        elif rank_decay is not None:
            r = min(decay[L.index], p)
        else:
            r = rank_for_error_budget(bank, error_budget)
        sp, rep = compress_conv_to_scef(bank, r, L.in_hw, L.stride)
        del params[f"layer{L.index}.weight"]
        params[f"layer{L.index}.eigen_filters"] = sp.eigen_filters
        params[f"layer{L.index}.coefficients"] = sp.coefficients
        layers[L.index] = replace(layers[L.index], kind="scef", rank=r, frozen=False)
        reports.append({"layer_index": L.index, **rep.as_dict()})
    config = NetworkConfig(net.config.input_shape, layers, net.config.rank_decay, net.config.activation)
    return Network(config, params), reports
