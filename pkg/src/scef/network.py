"""Sequential CNN built from Conv2D / SCEF blocks, global average pooling and
a dense softmax classifier.

Parameters live in a flat ``{name: ndarray}`` dict keyed
``layer{idx}.{param}`` so they map one-to-one onto checkpoint entries:

    conv2d  -> layer{idx}.weight           (c_out, c_in, h, h)
    scef    -> layer{idx}.eigen_filters    (c_in, r, h, h)
               layer{idx}.coefficients     (c_in, c_out, r)
    dense   -> layer{idx}.weight           (c_in, c_out)
               layer{idx}.bias             (c_out,)

Every convolution block is followed by a ReLU.  ``pool`` is a global
average pool.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import ConfigError, DimensionError
from .layers import (
    Conv2dParams,
    ScefParams,
    compose_filters,
    conv2d_backward,
    init_scef,
    _scef_forward,
    scef_backward,
)
from .schedules import normalize_kind, schedule_ranks
from .tensor_core import FilterBank, as_tensor4, extract_patches, output_size

KINDS = ("conv2d", "scef", "pool", "dense")
CONV_KINDS = ("conv2d", "scef")


@dataclass
class LayerConfig:
    kind: str
    c_in: int
    c_out: int
    h: int = 1
    stride: int = 1
    padding: str = "same"
    rank: int | None = None
    frozen: bool = False


@dataclass
class NetworkConfig:
    input_shape: tuple
    layers: list
    rank_decay: str = "none"
    activation: str = "relu"

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.layers = [l if isinstance(l, LayerConfig) else LayerConfig(**l) for l in self.layers]

    @property
    def scef_set(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.kind == "scef"]

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [asdict(l) for l in self.layers],
            "rank_decay": self.rank_decay,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        try:
            return cls(
                input_shape=d["input_shape"],
                layers=[LayerConfig(**l) for l in d["layers"]],
                rank_decay=d.get("rank_decay", "none"),
                activation=d.get("activation", "relu"),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed network config: {exc}") from exc


@dataclass
class ResolvedLayer:
    index: int
    kind: str
    c_in: int
    c_out: int
    h: int
    stride: int
    padding: str
    rank: int | None
    frozen: bool
    in_hw: tuple
    out_hw: tuple


def tinynet(input_shape=(1, 16, 16), n_classes: int = 4, scef: bool = False,
            rank_decay: str = "linear", frozen: bool = False) -> NetworkConfig:
    """Reference desk-scale topology: three 3x3 blocks (16, 32, 64 channels),
    stride-2 downsampling in blocks two and three, global average pool and a
    dense softmax classifier."""
    kind = "scef" if scef else "conv2d"
    c = input_shape[0]
    layers = [
        LayerConfig(kind, c, 16, 3, 1, frozen=frozen),
        LayerConfig(kind, 16, 32, 3, 2, frozen=frozen),
        LayerConfig(kind, 32, 64, 3, 2, frozen=frozen),
        LayerConfig("pool", 64, 64),
        LayerConfig("dense", 64, n_classes),
    ]
    return NetworkConfig(input_shape, layers, rank_decay if scef else "none")


def replace_with_scef(config: NetworkConfig, indices=None, rank_decay: str | None = None) -> NetworkConfig:
    """Swap eligible Conv2D layers (``h > 1``) for SCEF layers."""
    layers = []
    for i, l in enumerate(config.layers):
        take = l.kind == "conv2d" and l.h > 1 and (indices is None or i in indices)
        layers.append(replace(l, kind="scef") if take else replace(l))
    return NetworkConfig(config.input_shape, layers, rank_decay or config.rank_decay, config.activation)


def resolve_layers(config: NetworkConfig, require_classifier: bool = True) -> list[ResolvedLayer]:
    """Validate the topology and fill in spatial sizes and scheduled ranks.

    A trainable network must end in the dense classifier; pass
    ``require_classifier=False`` to resolve a bare stack of convolutions
    (useful for complexity accounting).  Raises :class:`ConfigError`
    naming the first offending layer.
    """
    try:
        decay = normalize_kind(config.rank_decay)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if len(config.input_shape) != 3 or min(config.input_shape) < 1:
        raise ConfigError(f"input_shape must be (channels, height, width), got {config.input_shape}")
    if not config.layers:
        raise ConfigError("network has no layers")

    eligible = [i for i, l in enumerate(config.layers) if l.kind in CONV_KINDS and l.h > 1]
    sched = {}
    for K in {config.layers[i].h ** 2 for i in eligible}:
        ranks = schedule_ranks(decay, K, len(eligible))
        sched.update({i: ranks[d] for d, i in enumerate(eligible) if config.layers[i].h ** 2 == K})

    c, H, W = config.input_shape
    pooled = False
    out = []
    for idx, l in enumerate(config.layers):
        where = f"layer {idx} ({l.kind})"
        if l.kind not in KINDS:
            raise ConfigError(f"{where}: unknown kind, expected one of {KINDS}")
        if l.c_in != c:
            raise ConfigError(f"{where}: c_in={l.c_in} but previous layer produces {c} channels")
        if l.c_out < 1:
            raise ConfigError(f"{where}: c_out must be positive")
        rank = None
        frozen = False
        in_hw = (H, W)
        if l.kind in CONV_KINDS:
            if pooled:
                raise ConfigError(f"{where}: convolution after global pooling")
            if l.h < 1 or l.h % 2 == 0:
                raise ConfigError(f"{where}: filter size must be odd and positive, got {l.h}")
            try:
                H = output_size(H, l.h, l.stride, l.padding)[0]
                W = output_size(W, l.h, l.stride, l.padding)[0]
            except DimensionError as exc:
                raise ConfigError(f"{where}: {exc}") from exc
            if l.kind == "scef":
                if l.h <= 1:
                    raise ConfigError(f"{where}: SCEF layers need h > 1")
                rank = l.rank if l.rank is not None else sched[idx]
                if not 1 <= rank <= l.h ** 2:
                    raise ConfigError(f"{where}: rank {rank} outside [1, {l.h ** 2}]")
                # r == h^2 spans the whole filter space: the basis needs no training
                frozen = l.frozen or rank == l.h ** 2
            c = l.c_out
        elif l.kind == "pool":
            if l.c_out != l.c_in:
                raise ConfigError(f"{where}: pooling cannot change channel count")
            pooled = True
            H = W = 1
        else:
            if not pooled:
                raise ConfigError(f"{where}: dense layer requires a preceding pool layer")
            c = l.c_out
        out.append(ResolvedLayer(idx, l.kind, l.c_in, l.c_out, l.h, l.stride, l.padding, rank, frozen,
                                 in_hw, (H, W)))
    if require_classifier and out[-1].kind != "dense":
        raise ConfigError(f"layer {len(out) - 1}: the last layer must be the dense classifier")
    return out


class Network:
    """Parameters plus forward/backward for a resolved :class:`NetworkConfig`."""

    def __init__(self, config: NetworkConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.layers = resolve_layers(config)
        self.params = params
        missing = [n for n in self.expected_shapes() if n not in params]
        if missing:
            raise ConfigError(f"missing parameters: {', '.join(missing)}")
        for name, shape in self.expected_shapes().items():
            if params[name].shape != shape:
                raise ConfigError(f"parameter {name} has shape {params[name].shape}, expected {shape}")

    def expected_shapes(self) -> dict[str, tuple]:
        shapes = {}
        for L in self.layers:
            p = f"layer{L.index}."
            if L.kind == "conv2d":
                shapes[p + "weight"] = (L.c_out, L.c_in, L.h, L.h)
            elif L.kind == "scef":
                shapes[p + "eigen_filters"] = (L.c_in, L.rank, L.h, L.h)
                shapes[p + "coefficients"] = (L.c_in, L.c_out, L.rank)
            elif L.kind == "dense":
                shapes[p + "weight"] = (L.c_in, L.c_out)
                shapes[p + "bias"] = (L.c_out,)
        return shapes

    def scef_params(self, index: int) -> ScefParams:
        L = self.layers[index]
        p = f"layer{index}."
        return ScefParams(self.params[p + "eigen_filters"], self.params[p + "coefficients"], frozen=L.frozen)

    def scef_layers(self) -> list[tuple[int, ScefParams]]:
        return [(L.index, self.scef_params(L.index)) for L in self.layers if L.kind == "scef"]

    def dense_bank(self, index: int) -> FilterBank:
        """Dense filter bank of a convolution layer (composed for SCEF)."""
        L = self.layers[index]
        if L.kind == "conv2d":
            return FilterBank(self.params[f"layer{index}.weight"])
        if L.kind == "scef":
            return compose_filters(self.scef_params(index))
        raise ConfigError(f"layer {index} ({L.kind}) has no filter bank")

    def trainable_names(self) -> list[str]:
        names = []
        for name in self.expected_shapes():
            idx = int(name.split(".")[0][5:])
            if name.endswith("eigen_filters") and self.layers[idx].frozen:
                continue
            names.append(name)
        return names

    def n_trainable(self) -> int:
        return sum(self.params[n].size for n in self.trainable_names())

    def forward(self, x, keep_cache: bool = False):
        x = as_tensor4(x)
        if x.shape[1:] != self.config.input_shape:
            raise DimensionError(f"input shape {x.shape[1:]} != network input {self.config.input_shape}")
        caches = []
        for L in self.layers:
            p = f"layer{L.index}."
            if L.kind == "conv2d":
                w = self.params[p + "weight"]
                cols = extract_patches(x, L.h, L.stride, L.padding)
                z = np.ascontiguousarray(np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2))
                cache = (x, cols, z)
                x = np.maximum(z, 0.0)
            elif L.kind == "scef":
                z, sc = _scef_forward(self.scef_params(L.index), x, L.stride, L.padding)
                cache = (x, sc, z)
                x = np.maximum(z, 0.0)
            elif L.kind == "pool":
                cache = x.shape
                x = x.mean(axis=(2, 3))
            else:
                cache = x
                x = x @ self.params[p + "weight"] + self.params[p + "bias"]
            if keep_cache:
                caches.append(cache)
        return (x, caches) if keep_cache else x

    def backward(self, dout: np.ndarray, caches) -> dict[str, np.ndarray]:
        grads = {}
        g = dout
        for L, cache in zip(reversed(self.layers), reversed(caches)):
            p = f"layer{L.index}."
            if L.kind == "dense":
                grads[p + "weight"] = cache.T @ g
                grads[p + "bias"] = g.sum(axis=0)
                g = g @ self.params[p + "weight"].T
            elif L.kind == "pool":
                B, C, H, W = cache
                g = np.broadcast_to(g[:, :, None, None] / (H * W), cache)
            elif L.kind == "conv2d":
                x, cols, z = cache
                g = np.where(z > 0, g, 0.0)
                cp = Conv2dParams(FilterBank(self.params[p + "weight"]), L.stride, L.padding)
                lg, g = conv2d_backward(cp, x, g, cols=cols)
                grads[p + "weight"] = lg.weights
            else:
                x, sc, z = cache
                g = np.where(z > 0, g, 0.0)
                lg, g = scef_backward(self.scef_params(L.index), x, g, L.stride, L.padding, cache=sc)
                grads[p + "eigen_filters"] = lg.eigen_filters
                grads[p + "coefficients"] = lg.coefficients
        return grads

    def predict(self, x, batch_size: int = 256) -> np.ndarray:
        out = [np.argmax(self.forward(x[s:s + batch_size]), axis=1) for s in range(0, len(x), batch_size)]
        return np.concatenate(out)


def build_network(config: NetworkConfig, seed, coef_scale: float | None = None) -> Network:
    """Initialize all parameters from one seeded generator, layer by layer.

    SCEF layers use :func:`~scef.layers.init_scef` with their scheduled
    rank; Conv2D weights are normal with std ``sqrt(2 / (c_in h^2))``; dense
    weights are normal with std ``sqrt(1 / c_in)`` and zero bias.
    """
    layers = resolve_layers(config)
    rng = np.random.default_rng(seed)
    params = {}
    for L in layers:
        p = f"layer{L.index}."
        if L.kind == "conv2d":
            std = np.sqrt(2.0 / (L.c_in * L.h * L.h))
            params[p + "weight"] = rng.standard_normal((L.c_out, L.c_in, L.h, L.h)) * std
        elif L.kind == "scef":
            sp = init_scef(L.c_in, L.c_out, L.h, L.rank, rng, coef_scale=coef_scale, frozen=L.frozen)
            params[p + "eigen_filters"] = sp.eigen_filters
            params[p + "coefficients"] = sp.coefficients
        elif L.kind == "dense":
            params[p + "weight"] = rng.standard_normal((L.c_in, L.c_out)) * np.sqrt(1.0 / L.c_in)
            params[p + "bias"] = np.zeros(L.c_out)
    return Network(config, params)
