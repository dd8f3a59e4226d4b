"""Separable convolutional eigen-filter (SCEF) layers in plain numpy.

A SCEF layer expresses each input channel's filters as linear combinations
of ``r`` orthonormal ``h x h`` eigen-filters, so a convolution becomes a
depthwise pass with the eigen-filters followed by a pointwise mix.
"""
__version__ = "0.1.0"

from .errors import (ConfigError, ConsistencyError, DimensionError, FormatError, NumericError,
                     ParameterError, PreconditionError, ScefError)
from .tensor_core import FilterBank, batched_svd, conv2d, small_svd
from .layers import ScefParams, compose_filters, conv2d_backward, conv2d_forward, init_scef, scef_backward, scef_forward
from .objective import RegWeights, phi1, phi2, total_loss
from .complexity import count_flops, count_params, network_summary
from .schedules import rank_at_depth, schedule_ranks
from .network import LayerConfig, Network, NetworkConfig, build_network, tinynet
from .rank_analysis import (RobustnessCheckConfig, analyze_network, channel_effective_rank, layer_effective_rank,
                            rank_trajectory, verify_robustness_bound)
from .compressor import compress_conv_to_scef, compress_network
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, load_cifar10, synthetic_bars
from .training import TrainConfig, train
