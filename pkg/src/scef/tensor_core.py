"""Dense tensor primitives: 2-D convolution, depthwise convolution, filter
vectorization, norms and a small-matrix SVD.

Tensors are plain ``numpy`` arrays laid out as ``(batch, channels, height,
width)``.  All arithmetic is carried out in float64; float32 inputs are
upcast on entry.

Convolution is cross-correlation (the kernel is not flipped).  ``"same"``
padding zero-fills so the output has ``floor(H / stride)`` rows and
``floor(W / stride)`` columns; when the total padding is odd the extra
row/column goes to the bottom/right.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, NumericError

PADDING_MODES = ("valid", "same")

_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 60
_SVD_MAX_DIM = 64


@dataclass(frozen=True)
class FilterBank:
    """Convolution weights of shape ``(c_out, c_in, h, h)``.

    ``weights[j, i]`` is the ``h x h`` filter connecting input channel ``i``
    to output channel ``j``.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 4:
            raise DimensionError(f"filter bank must be 4-D (c_out, c_in, h, h), got shape {w.shape}")
        if w.shape[2] != w.shape[3]:
            raise DimensionError(f"filters must be square, got {w.shape[2]}x{w.shape[3]}")
        if w.shape[2] % 2 == 0:
            raise DimensionError(f"filter size must be odd, got {w.shape[2]}")
        if w.size == 0:
            raise DimensionError("filter bank is empty")
        object.__setattr__(self, "weights", w)

    @property
    def c_out(self) -> int:
        return self.weights.shape[0]

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def h(self) -> int:
        return self.weights.shape[2]

    @property
    def K(self) -> int:
        return self.h * self.h

    def channel_matrix(self, i: int) -> np.ndarray:
        """``K x c_out`` matrix whose column ``j`` is ``vec(w_j^(i))``."""
        return np.stack([vectorize_filter(self.weights[j, i]) for j in range(self.c_out)], axis=1)

    def channel_matrices(self) -> np.ndarray:
        """All per-input-channel matrices stacked, shape ``(c_in, K, c_out)``."""
        # column-major vec of an h x h filter == row-major ravel of its transpose
        wt = np.swapaxes(self.weights, 2, 3).reshape(self.c_out, self.c_in, self.K)
        return np.ascontiguousarray(np.transpose(wt, (1, 2, 0)))

    @classmethod
    def from_channel_matrices(cls, mats: np.ndarray) -> "FilterBank":
        """Inverse of :meth:`channel_matrices`."""
        mats = np.asarray(mats, dtype=np.float64)
        c_in, K, c_out = mats.shape
        h = int(round(np.sqrt(K)))
        if h * h != K:
            raise DimensionError(f"row count {K} is not a perfect square")
        w = np.transpose(mats, (2, 0, 1)).reshape(c_out, c_in, h, h)
        return cls(np.ascontiguousarray(np.swapaxes(w, 2, 3)))


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``m = left @ diag(singular) @ right.T``.

    For a stacked input every field carries the same leading batch axes.
    """

    left: np.ndarray
    singular: np.ndarray
    right: np.ndarray


def as_bank(filters) -> FilterBank:
    return filters if isinstance(filters, FilterBank) else FilterBank(filters)


def as_tensor4(x, name: str = "input") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise DimensionError(f"{name} must be 4-D (batch, channels, height, width), got shape {x.shape}")
    if x.size == 0:
        raise DimensionError(f"{name} has zero size: {x.shape}")
    return x


def output_size(size: int, h: int, stride: int, padding: str) -> tuple[int, int, int]:
    """Return ``(out, pad_before, pad_after)`` along one spatial axis."""
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")
    if padding == "valid":
        out = (size - h) // stride + 1 if size >= h else 0
        before = after = 0
    elif padding == "same":
        out = size // stride
        total = max((out - 1) * stride + h - size, 0)
        before = total // 2
        after = total - before
    else:
        raise DimensionError(f"padding must be one of {PADDING_MODES}, got {padding!r}")
    if out <= 0:
        raise DimensionError(f"spatial size {size} too small for filter {h} with stride {stride} ({padding})")
    return out, before, after


def extract_patches(x: np.ndarray, h: int, stride: int, padding: str) -> np.ndarray:
    """Strided view of all ``h x h`` input patches, shape ``(B, C, oH, oW, h, h)``."""
    _, _, H, W = x.shape
    oh, top, bottom = output_size(H, h, stride, padding)
    ow, left, right = output_size(W, h, stride, padding)
    if top or bottom or left or right:
        x = np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)))
    win = sliding_window_view(x, (h, h), axis=(2, 3))
    return win[:, :, ::stride, ::stride][:, :, :oh, :ow]


def fold_patches(cols: np.ndarray, input_shape, stride: int, padding: str) -> np.ndarray:
    """Adjoint of :func:`extract_patches`: scatter-add patch gradients back to the input."""
    B, C, H, W = input_shape
    _, _, oh, ow, h, _ = cols.shape
    _, top, bottom = output_size(H, h, stride, padding)
    _, left, right = output_size(W, h, stride, padding)
    out = np.zeros((B, C, H + top + bottom, W + left + right))
    for p in range(h):
        for q in range(h):
            out[:, :, p:p + stride * (oh - 1) + 1:stride, q:q + stride * (ow - 1) + 1:stride] += cols[..., p, q]
    return out[:, :, top:top + H, left:left + W]


def conv2d(input, filters, stride: int = 1, padding: str = "valid") -> np.ndarray:
    """Multi-channel 2-D cross-correlation.

    ``out[b, j] = sum_i input[b, i] (*) filters[j, i]`` where ``(*)`` is
    correlation without kernel flip.
    """
    x = as_tensor4(input)
    bank = as_bank(filters)
    if x.shape[1] != bank.c_in:
        raise DimensionError(f"input has {x.shape[1]} channels, filter bank expects {bank.c_in}")
    cols = extract_patches(x, bank.h, stride, padding)
    out = np.tensordot(cols, bank.weights, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def depthwise_conv(input, per_channel_filters, stride: int = 1, padding: str = "valid") -> np.ndarray:
    """Correlate each input channel with its own ``r`` filters.

    ``per_channel_filters`` has shape ``(c_in, r, h, h)``.  Output channel
    ``i * r + k`` is input channel ``i`` correlated with filter ``(i, k)``.
    """
    x = as_tensor4(input)
    f = np.asarray(per_channel_filters, dtype=np.float64)
    if f.ndim != 4 or f.shape[2] != f.shape[3]:
        raise DimensionError(f"per-channel filters must have shape (c_in, r, h, h), got {f.shape}")
    if f.shape[0] != x.shape[1]:
        raise DimensionError(f"input has {x.shape[1]} channels, filters expect {f.shape[0]}")
    C, r, h, _ = f.shape
    cols = extract_patches(x, h, stride, padding)
    B, _, oh, ow = cols.shape[:4]
    # (C, B*oh*ow, h*h) @ (C, h*h, r) -> (C, B*oh*ow, r)
    lhs = cols.transpose(1, 0, 2, 3, 4, 5).reshape(C, B * oh * ow, h * h)
    res = np.matmul(lhs, f.reshape(C, r, h * h).transpose(0, 2, 1))
    res = res.reshape(C, B, oh, ow, r).transpose(1, 0, 4, 2, 3)
    return np.ascontiguousarray(res.reshape(B, C * r, oh, ow))


def vectorize_filter(w) -> np.ndarray:
    """Column-major flattening of an ``h x h`` filter."""
    return np.asarray(w, dtype=np.float64).ravel(order="F")


def unvectorize_filter(v, h: int) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape((h, h), order="F")


def _complete_basis(cols: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace the columns not in ``keep`` with an orthonormal completion.

    Candidates are the standard basis vectors in index order, each
    Gram-Schmidt-orthogonalized (twice) against the columns accepted so far.
    """
    m, n = cols.shape
    out = cols.copy()
    basis = [out[:, j] for j in range(n) if keep[j]]
    fill = [j for j in range(n) if not keep[j]]
    e = 0
    for j in fill:
        while True:
            v = np.zeros(m)
            v[e] = 1.0
            e += 1
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 0.5:
                break
        v /= nv
        out[:, j] = v
        basis.append(v)
    return out


def _jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic one-sided Jacobi on a stack of matrices ``(n, m, q)``.

    Rotates column pairs until every pair is orthogonal to a relative
    tolerance of 1e-12 (or 60 sweeps).  Returns the rotated columns and the
    accumulated rotations ``V`` so that ``a_in @ V == a_out``.
    """
    a = a.copy()
    n, m, q = a.shape
    v = np.broadcast_to(np.eye(q), (n, q, q)).copy()
    fro = np.sqrt(np.einsum("nij,nij->n", a, a))
    # columns below this squared norm are rounding noise and never rotated
    floor = (max(m, q) * np.finfo(np.float64).eps * fro) ** 2
    for _ in range(_JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(q - 1):
            for r in range(p + 1, q):
                ap, ar = a[:, :, p], a[:, :, r]
                alpha = np.einsum("nm,nm->n", ap, ap)
                beta = np.einsum("nm,nm->n", ar, ar)
                gamma = np.einsum("nm,nm->n", ap, ar)
                denom = np.sqrt(alpha * beta)
                active = (alpha > floor) & (beta > floor) & (np.abs(gamma) > _JACOBI_TOL * denom)
                if not active.any():
                    continue
                rotated = True
                g = np.where(active, gamma, 1.0)
                zeta = (beta - alpha) / (2.0 * g)
                sgn = np.where(zeta >= 0, 1.0, -1.0)
                t = sgn / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = np.where(active, 1.0 / np.sqrt(1.0 + t * t), 1.0)
                s = np.where(active, c * t, 0.0)
                c1, s1 = c[:, None], s[:, None]
                a[:, :, p], a[:, :, r] = c1 * ap - s1 * ar, s1 * ap + c1 * ar
                vp, vr = v[:, :, p].copy(), v[:, :, r].copy()
                v[:, :, p], v[:, :, r] = c1 * vp - s1 * vr, s1 * vp + c1 * vr
        if not rotated:
            break
    return a, v


def batched_svd(stack) -> SvdResult:
    """Thin SVD of every matrix in a ``(n, K, c)`` stack.

    Returns factors with ``p = min(K, c)`` columns; singular values are
    descending and each left singular vector has its largest-magnitude entry
    (lowest index on ties) non-negative.
    """
    ms = np.asarray(stack, dtype=np.float64)
    if ms.ndim != 3:
        raise DimensionError(f"expected a stack of matrices (n, K, c), got shape {ms.shape}")
    n, K, c = ms.shape
    if K == 0 or c == 0:
        raise DimensionError(f"cannot decompose an empty {K}x{c} matrix")
    if min(K, c) > _SVD_MAX_DIM:
        raise DimensionError(f"small_svd handles min(K, c) <= {_SVD_MAX_DIM}, got {K}x{c}")
    if not np.all(np.isfinite(ms)):
        raise NumericError("small_svd input contains non-finite entries")

    transposed = K < c
    work = np.swapaxes(ms, 1, 2) if transposed else ms
    rot, v = _jacobi(work)
    sigma = np.sqrt(np.einsum("nij,nij->nj", rot, rot))
    order = np.argsort(-sigma, axis=1, kind="stable")
    sigma = np.take_along_axis(sigma, order, axis=1)
    rot = np.take_along_axis(rot, order[:, None, :], axis=2)
    v = np.take_along_axis(v, order[:, None, :], axis=2)

    fro = np.sqrt(np.einsum("nij,nij->n", ms, ms))
    tiny = max(K, c) * np.finfo(np.float64).eps * fro
    normalized = np.empty_like(rot)
    for b in range(n):
        keep = sigma[b] > tiny[b]
        safe = np.where(keep, sigma[b], 1.0)
        cols = rot[b] / safe
        normalized[b] = cols if keep.all() else _complete_basis(cols, keep)

    if transposed:
        left, right = v, normalized
    else:
        left, right = normalized, v

    idx = np.argmax(np.abs(left), axis=1)
    pivot = np.take_along_axis(left, idx[:, None, :], axis=1)[:, 0, :]
    flip = np.where(pivot < 0, -1.0, 1.0)
    left = left * flip[:, None, :]
    right = right * flip[:, None, :]
    return SvdResult(left=left, singular=sigma, right=right)


def small_svd(m) -> SvdResult:
    """Deterministic thin SVD of a small ``K x c`` matrix (one-sided Jacobi)."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"small_svd expects a matrix, got shape {m.shape}")
    res = batched_svd(m[None])
    return SvdResult(left=res.left[0], singular=res.singular[0], right=res.right[0])


def spectral_norm(m) -> float:
    """Largest singular value of a matrix."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"spectral_norm expects a matrix, got shape {m.shape}")
    if m.size == 0:
        return 0.0
    return float(small_svd(m).singular[0])


def spectral_norms(stack) -> np.ndarray:
    """Largest singular value of every matrix in a ``(n, a, b)`` stack."""
    return batched_svd(stack).singular[:, 0]


def inf_norm(t) -> float:
    """Maximum absolute entry (0 for an empty or all-zero tensor)."""
    t = np.asarray(t, dtype=np.float64)
    return float(np.max(np.abs(t))) if t.size else 0.0
