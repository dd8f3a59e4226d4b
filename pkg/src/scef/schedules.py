"""Deterministic hyperparameter rules: per-depth rank decay, penalty weights
and the effective-rank threshold.

Depth indices count only layers eligible for replacement (filter size
``h > 1``).  Both decay rules use depth relative to the first eligible
layer, so the first eligible layer always receives the full rank ``K``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ParameterError

KINDS = ("none", "linear", "logarithmic")
_ALIASES = {"log": "logarithmic", "lin": "linear"}

DEFAULT_LAMBDA1_BASE = 1e-4
DEFAULT_LAMBDA2 = 1e-4
DEFAULT_GAMMA = 0.3


def normalize_kind(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ParameterError(f"rank decay must be one of {KINDS} (or 'log'), got {kind!r}")
    return kind


@dataclass(frozen=True)
class RankSchedule:
    kind: str
    K: int
    l_min: int
    l_max: int

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        if self.K < 1:
            raise ParameterError(f"K must be >= 1, got {self.K}")
        if self.l_min > self.l_max:
            raise ParameterError(f"l_min={self.l_min} > l_max={self.l_max}")


def rank_at_depth(sched: RankSchedule, l: int) -> int:
    """Scheduled rank for depth index ``l``, always within ``[1, K]``.

    linear:       floor(K - l' (K - 1) / (l_max - l_min)),  l' = l - l_min
    logarithmic:  K at l'' = 1, else floor((K - 1) / log2(l'')),  l'' = l - l_min + 1
    """
    if not sched.l_min <= l <= sched.l_max:
        raise ParameterError(f"depth {l} outside [{sched.l_min}, {sched.l_max}]")
    K = sched.K
    if sched.kind == "none":
        r = K
    elif sched.kind == "linear":
        span = sched.l_max - sched.l_min
        if span == 0:
            r = K
        else:
            # integer form of the floor avoids rounding at exact multiples
            r = (K * span - (l - sched.l_min) * (K - 1)) // span
    else:
        depth = l - sched.l_min + 1
        r = K if depth == 1 else math.floor((K - 1) / math.log2(depth))
    return max(1, min(K, r))


def schedule_ranks(kind: str, K: int, n_layers: int) -> list[int]:
    """Ranks for ``n_layers`` consecutive eligible layers at depths ``0..n_layers-1``."""
    if n_layers < 1:
        return []
    sched = RankSchedule(kind, K, 0, n_layers - 1)
    return [rank_at_depth(sched, l) for l in range(n_layers)]


def default_hyperparams(r_per_layer: Sequence[int]) -> dict:
    """Rule-based defaults: lambda1 = 1e-4 * r per layer, lambda2 = 1e-4, gamma = 0.3."""
    for r in r_per_layer:
        if r < 1:
            raise ParameterError(f"ranks must be >= 1, got {r}")
    return {
        "lambda1_per_layer": [DEFAULT_LAMBDA1_BASE * r for r in r_per_layer],
        "lambda2": DEFAULT_LAMBDA2,
        "gamma": DEFAULT_GAMMA,
    }
