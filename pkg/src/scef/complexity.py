"""Trainable-parameter and multiply-accumulate counts for Conv2D and SCEF layers.

Counts follow the closed forms

    N(Conv2D) = c_in c_out h^2            F(Conv2D) = t h^2 c_in c_out
    N(SCEF)   = c_in h^2 r + c_in c_out r F(SCEF)   = t c_in r (h^2 + c_out)

with ``t = floor(H / stride) * floor(W / stride)`` regardless of padding
mode.  Biases are not counted for convolution layers.  The eigen-filter
term is dropped when the eigen-filters are frozen or ``r == h^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParameterError

LAYER_KINDS = ("conv2d", "scef")


@dataclass(frozen=True)
class LayerComplexity:
    params: int
    flops: int
    spatial_positions: int = 0
    breakdown: dict = field(default_factory=dict)


def _check_dims(**dims):
    for name, v in dims.items():
        if v is None or int(v) != v or v < 1:
            raise ParameterError(f"{name} must be a positive integer, got {v!r}")


def _check_kind(kind):
    if kind not in LAYER_KINDS:
        raise ParameterError(f"layer kind must be one of {LAYER_KINDS}, got {kind!r}")


def scef_param_breakdown(c_in: int, c_out: int, h: int, r: int, frozen: bool = False) -> tuple[int, int]:
    """``(N_u, N_a)`` for an SCEF layer."""
    _check_dims(c_in=c_in, c_out=c_out, h=h, r=r)
    if r > h * h:
        raise ParameterError(f"rank r={r} exceeds h^2={h * h}")
    n_u = 0 if frozen or r == h * h else c_in * h * h * r
    return n_u, c_in * c_out * r


def count_params(layer_kind: str, c_in: int, c_out: int, h: int, r: int | None = None,
                 frozen: bool = False) -> int:
    _check_kind(layer_kind)
    if layer_kind == "conv2d":
        _check_dims(c_in=c_in, c_out=c_out, h=h)
        return c_in * c_out * h * h
    return sum(scef_param_breakdown(c_in, c_out, h, r, frozen))


def spatial_positions(H: int, W: int, stride: int) -> int:
    _check_dims(H=H, W=W, stride=stride)
    return (H // stride) * (W // stride)


def count_flops(layer_kind: str, H: int, W: int, stride: int, c_in: int, c_out: int, h: int,
                r: int | None = None, mult_add: bool = False) -> int:
    """Multiply-accumulate count; ``mult_add=True`` counts multiplies and adds separately."""
    _check_kind(layer_kind)
    t = spatial_positions(H, W, stride)
    if layer_kind == "conv2d":
        _check_dims(c_in=c_in, c_out=c_out, h=h)
        f = t * h * h * c_in * c_out
    else:
        _check_dims(c_in=c_in, c_out=c_out, h=h, r=r)
        f = t * c_in * r * (h * h + c_out)
    return 2 * f if mult_add else f


def layer_complexity(layer_kind: str, H: int, W: int, stride: int, c_in: int, c_out: int, h: int,
                     r: int | None = None, frozen: bool = False, mult_add: bool = False) -> LayerComplexity:
    t = spatial_positions(H, W, stride)
    flops = count_flops(layer_kind, H, W, stride, c_in, c_out, h, r, mult_add)
    if layer_kind == "scef":
        n_u, n_a = scef_param_breakdown(c_in, c_out, h, r, frozen)
        return LayerComplexity(n_u + n_a, flops, t, {"N_u": n_u, "N_a": n_a})
    return LayerComplexity(count_params("conv2d", c_in, c_out, h), flops, t)


@dataclass
class SummaryRow:
    index: int
    kind: str
    c_in: int
    c_out: int
    h: int
    rank: int | None
    complexity: LayerComplexity


@dataclass
class NetworkSummary:
    rows: list
    total_params: int
    total_flops: int

    def as_dict(self) -> dict:
        return {
            "schema": 1,
            "layers": [
                {
                    "index": row.index,
                    "kind": row.kind,
                    "c_in": row.c_in,
                    "c_out": row.c_out,
                    "h": row.h,
                    "rank": row.rank,
                    "params": row.complexity.params,
                    "flops": row.complexity.flops,
                    **row.complexity.breakdown,
                }
                for row in self.rows
            ],
            "total_params": self.total_params,
            "total_flops": self.total_flops,
        }

    def to_csv(self) -> str:
        lines = ["layer,kind,c_in,c_out,h,rank,params,flops"]
        for row in self.rows:
            rank = "" if row.rank is None else str(row.rank)
            lines.append(f"{row.index},{row.kind},{row.c_in},{row.c_out},{row.h},{rank},"
                         f"{row.complexity.params},{row.complexity.flops}")
        lines.append(f"total,,,,,,{self.total_params},{self.total_flops}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        head = f"{'layer':>5} {'kind':<7} {'c_in':>6} {'c_out':>6} {'h':>3} {'rank':>5} {'params':>12} {'flops':>16}"
        lines = [head, "-" * len(head)]
        for row in self.rows:
            rank = "-" if row.rank is None else str(row.rank)
            lines.append(
                f"{row.index:>5} {row.kind:<7} {row.c_in:>6} {row.c_out:>6} {row.h:>3} {rank:>5} "
                f"{row.complexity.params:>12} {row.complexity.flops:>16}"
            )
        lines.append("-" * len(head))
        lines.append(f"{'total':>5} {'':<7} {'':>6} {'':>6} {'':>3} {'':>5} {self.total_params:>12} {self.total_flops:>16}")
        return "\n".join(lines)


def network_summary(config, mult_add: bool = False) -> NetworkSummary:
    """Per-layer counts for a :class:`~scef.network.NetworkConfig`, in depth order.

    Dense classifier rows include their bias; pooling rows count zero.  The
    config need not end in a classifier.
    """
    from .network import resolve_layers

    rows = []
    for row_cfg in resolve_layers(config, require_classifier=False):
        if row_cfg.kind in LAYER_KINDS:
            H, W = row_cfg.in_hw
            cx = layer_complexity(row_cfg.kind, H, W, row_cfg.stride, row_cfg.c_in, row_cfg.c_out, row_cfg.h,
                                  row_cfg.rank, row_cfg.frozen, mult_add)
        elif row_cfg.kind == "dense":
            macc = row_cfg.c_in * row_cfg.c_out
            cx = LayerComplexity(macc + row_cfg.c_out, 2 * macc if mult_add else macc, 1)
        else:
            cx = LayerComplexity(0, 0, 0)
        rows.append(SummaryRow(row_cfg.index, row_cfg.kind, row_cfg.c_in, row_cfg.c_out, row_cfg.h, row_cfg.rank, cx))
    return NetworkSummary(rows, sum(r.complexity.params for r in rows), sum(r.complexity.flops for r in rows))
