"""SCEF and baseline Conv2D layers with hand-written backward passes.

An SCEF layer stores, per input channel ``i``, ``r`` eigen-filters
``u_k^(i)`` (shape ``(c_in, r, h, h)``) and coefficients ``a_{k,j}^(i)``
(shape ``(c_in, c_out, r)``).  The dense filter it represents is

    w_j^(i) = sum_k a_{k,j}^(i) u_k^(i)

and the forward pass is computed as a depthwise convolution with the
eigen-filters (intermediate channel ``i * r + k``) followed by a pointwise
combination with the coefficients.  Neither layer type has a bias.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .tensor_core import (
    FilterBank,
    as_bank,
    as_tensor4,
    batched_svd,
    conv2d,
    extract_patches,
    fold_patches,
)


@dataclass
class ScefParams:
    eigen_filters: np.ndarray
    coefficients: np.ndarray
    frozen: bool = False

    def __post_init__(self):
        self.eigen_filters = np.asarray(self.eigen_filters, dtype=np.float64)
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        u, a = self.eigen_filters, self.coefficients
        if u.ndim != 4 or u.shape[2] != u.shape[3]:
            raise DimensionError(f"eigen_filters must have shape (c_in, r, h, h), got {u.shape}")
        if a.ndim != 3 or a.shape[0] != u.shape[0] or a.shape[2] != u.shape[1]:
            raise DimensionError(
                f"coefficients must have shape (c_in, c_out, r) = ({u.shape[0]}, *, {u.shape[1]}), got {a.shape}"
            )
        if not 1 <= self.r <= self.K:
            raise ParameterError(f"rank r={self.r} outside [1, {self.K}]")

    @property
    def c_in(self) -> int:
        return self.eigen_filters.shape[0]

    @property
    def c_out(self) -> int:
        return self.coefficients.shape[1]

    @property
    def r(self) -> int:
        return self.eigen_filters.shape[1]

    @property
    def h(self) -> int:
        return self.eigen_filters.shape[2]

    @property
    def K(self) -> int:
        return self.h * self.h

    def basis(self) -> np.ndarray:
        """Per-channel ``K x r`` matrices of vectorized eigen-filters, shape ``(c_in, K, r)``."""
        ut = np.swapaxes(self.eigen_filters, 2, 3).reshape(self.c_in, self.r, self.K)
        return np.ascontiguousarray(np.swapaxes(ut, 1, 2))


@dataclass
class Conv2dParams:
    bank: FilterBank
    stride: int = 1
    padding: str = "same"

    def __post_init__(self):
        self.bank = as_bank(self.bank)


@dataclass
class ScefGrads:
    eigen_filters: np.ndarray
    coefficients: np.ndarray


@dataclass
class Conv2dGrads:
    weights: np.ndarray


@dataclass
class _ScefCache:
    lhs: np.ndarray  # (c_in, B*oh*ow, h*h) patch matrix
    inter: np.ndarray  # (B, c_in*r, oh, ow) depthwise output
    input_shape: tuple = field(default=())


def default_coef_scale(c_in: int, r: int) -> float:
    return float(np.sqrt(2.0 / (c_in * r)))


def init_scef(c_in: int, c_out: int, h: int, r: int, seed, coef_scale: float | None = None,
              frozen: bool = False) -> ScefParams:
    """Random SCEF layer: orthonormal eigen-filters from the SVD of Gaussian matrices.

    For each input channel a ``K x r`` standard-normal matrix is drawn and
    its left singular vectors become the eigen-filters.  Coefficients are
    normal with standard deviation ``coef_scale`` (default ``sqrt(2/(c_in r))``).
    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    K = h * h
    if not 1 <= r <= K:
        raise ParameterError(f"rank r={r} outside [1, {K}]")
    if min(c_in, c_out, h) < 1:
        raise ParameterError(f"dimensions must be positive, got c_in={c_in}, c_out={c_out}, h={h}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    A = rng.standard_normal((c_in, K, r))
    U = batched_svd(A).left  # (c_in, K, r)
    eig = np.swapaxes(np.swapaxes(U, 1, 2).reshape(c_in, r, h, h), 2, 3)
    scale = default_coef_scale(c_in, r) if coef_scale is None else coef_scale
    coef = rng.standard_normal((c_in, c_out, r)) * scale
    return ScefParams(np.ascontiguousarray(eig), coef, frozen=frozen)


def compose_filters(params: ScefParams) -> FilterBank:
    """Dense ``(c_out, c_in, h, h)`` bank represented by an SCEF layer."""
    w = np.einsum("ijk,ikpq->jipq", params.coefficients, params.eigen_filters)
    return FilterBank(w)


def project_bank(eigen_filters, bank) -> np.ndarray:
    """Coefficients ``a_j^(i) = U^(i)T vec(w_j^(i))`` of a bank in a given basis."""
    bank = as_bank(bank)
    u = np.asarray(eigen_filters, dtype=np.float64)
    if u.shape[0] != bank.c_in or u.shape[2] != bank.h:
        raise DimensionError(f"basis shape {u.shape} incompatible with bank {bank.weights.shape}")
    return np.einsum("jipq,ikpq->ijk", bank.weights, u)


def _pointwise_matrix(params: ScefParams) -> np.ndarray:
    # row i*r + k, column j holds a_{k,j}^(i)
    return params.coefficients.transpose(0, 2, 1).reshape(params.c_in * params.r, params.c_out)


def _scef_forward(params: ScefParams, x: np.ndarray, stride: int, padding: str):
    x = as_tensor4(x)
    if x.shape[1] != params.c_in:
        raise DimensionError(f"input has {x.shape[1]} channels, SCEF layer expects {params.c_in}")
    C, r, h = params.c_in, params.r, params.h
    cols = extract_patches(x, h, stride, padding)
    B, _, oh, ow = cols.shape[:4]
    lhs = cols.transpose(1, 0, 2, 3, 4, 5).reshape(C, B * oh * ow, h * h)
    u = params.eigen_filters.reshape(C, r, h * h)
    inter = np.matmul(lhs, u.transpose(0, 2, 1))  # (C, P, r)
    inter = inter.reshape(C, B, oh, ow, r).transpose(1, 0, 4, 2, 3).reshape(B, C * r, oh, ow)
    out = np.tensordot(inter, _pointwise_matrix(params), axes=([1], [0])).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), _ScefCache(lhs=lhs, inter=inter, input_shape=x.shape)


def scef_forward(params: ScefParams, input, stride: int = 1, padding: str = "same") -> np.ndarray:
    """Depthwise convolution with the eigen-filters, then pointwise mixing."""
    return _scef_forward(params, input, stride, padding)[0]


def scef_backward(params: ScefParams, input, upstream_grad, stride: int = 1, padding: str = "same",
                  cache: _ScefCache | None = None) -> tuple[ScefGrads, np.ndarray]:
    """Gradients of ``sum(upstream_grad * scef_forward(...))``.

    Returns ``(ScefGrads, input_grad)``.  The eigen-filter gradient is
    exactly zero when ``params.frozen`` is set.
    """
    if cache is None:
        out, cache = _scef_forward(params, input, stride, padding)
        out_shape = out.shape
    else:
        out_shape = (cache.inter.shape[0], params.c_out) + cache.inter.shape[2:]
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != out_shape:
        raise DimensionError(f"upstream gradient shape {g.shape} != forward output shape {out_shape}")
    C, r, h, O = params.c_in, params.r, params.h, params.c_out
    B, _, oh, ow = cache.inter.shape

    dM = np.tensordot(cache.inter, g, axes=([0, 2, 3], [0, 2, 3]))  # (C*r, O)
    d_coef = dM.reshape(C, r, O).transpose(0, 2, 1)

    d_inter = np.tensordot(g, _pointwise_matrix(params), axes=([1], [1]))  # (B, oh, ow, C*r)
    d_inter = d_inter.reshape(B, oh, ow, C, r).transpose(3, 0, 1, 2, 4).reshape(C, B * oh * ow, r)

    if params.frozen:
        d_eig = np.zeros_like(params.eigen_filters)
    else:
        d_eig = np.matmul(d_inter.transpose(0, 2, 1), cache.lhs).reshape(C, r, h, h)

    d_cols = np.matmul(d_inter, params.eigen_filters.reshape(C, r, h * h))  # (C, P, h*h)
    d_cols = d_cols.reshape(C, B, oh, ow, h, h).transpose(1, 0, 2, 3, 4, 5)
    dx = fold_patches(d_cols, cache.input_shape, stride, padding)
    return ScefGrads(eigen_filters=d_eig, coefficients=np.ascontiguousarray(d_coef)), dx


def conv2d_forward(params: Conv2dParams, input) -> np.ndarray:
    return conv2d(input, params.bank, params.stride, params.padding)


def conv2d_backward(params: Conv2dParams, input, upstream_grad,
                    cols: np.ndarray | None = None) -> tuple[Conv2dGrads, np.ndarray]:
    """Gradients of ``sum(upstream_grad * conv2d_forward(params, input))``."""
    x = as_tensor4(input)
    bank = params.bank
    if x.shape[1] != bank.c_in:
        raise DimensionError(f"input has {x.shape[1]} channels, filter bank expects {bank.c_in}")
    if cols is None:
        cols = extract_patches(x, bank.h, params.stride, params.padding)
    B, _, oh, ow = cols.shape[:4]
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != (B, bank.c_out, oh, ow):
        raise DimensionError(f"upstream gradient shape {g.shape} != forward output shape {(B, bank.c_out, oh, ow)}")
    dw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
    d_cols = np.tensordot(g, bank.weights, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
    dx = fold_patches(d_cols, x.shape, params.stride, params.padding)
    return Conv2dGrads(weights=np.ascontiguousarray(dw)), dx
