import itertools

import pytest
from hypothesis import given, strategies as st

from scef.complexity import count_flops, count_params, layer_complexity, network_summary, scef_param_breakdown
from scef.errors import ConfigError, ParameterError
from scef.network import LayerConfig, NetworkConfig, build_network, tinynet


def test_worked_example_params():
    assert count_params("conv2d", 128, 128, 3) == 147456
    assert count_params("scef", 128, 128, 3, 8) == 140288
    assert count_params("scef", 128, 128, 3, 4) == 70144
    assert count_params("conv2d", 1, 1, 1) == 1


def test_worked_example_flops():
    assert count_flops("conv2d", 100, 100, 1, 128, 128, 3) == 1_474_560_000
    assert count_flops("scef", 100, 100, 1, 128, 128, 3, 8) == 1_402_880_000
    assert count_flops("scef", 100, 100, 1, 128, 128, 3, 4) == 701_440_000
    assert count_flops("conv2d", 4, 4, 2, 1, 1, 1) == 4
    assert layer_complexity("conv2d", 4, 4, 2, 1, 1, 1).spatial_positions == 4
    assert count_flops("conv2d", 4, 4, 2, 1, 1, 1, mult_add=True) == 8


def test_breakdown_and_full_rank_frozen():
    assert scef_param_breakdown(128, 128, 3, 4) == (128 * 9 * 4, 128 * 128 * 4)
    assert scef_param_breakdown(2, 3, 3, 4, frozen=True) == (0, 24)
    for c_in, c_out, h in itertools.product([1, 3, 16], [1, 5, 32], [1, 3, 5]):
        assert count_params("scef", c_in, c_out, h, h * h, frozen=True) == count_params("conv2d", c_in, c_out, h)


@given(c_in=st.integers(1, 64), c_out=st.integers(1, 64), h=st.sampled_from([1, 3, 5, 7]),
       H=st.integers(1, 64), stride=st.integers(1, 3))
def test_monotone_in_rank_and_flop_inequality(c_in, c_out, h, H, stride):
    K = h * h
    ranks = range(1, K)  # r = K switches N_u off, so strict growth is asserted below K
    params = [count_params("scef", c_in, c_out, h, r) for r in ranks]
    assert all(a < b for a, b in zip(params, params[1:]))
    if H >= stride:
        flops = [count_flops("scef", H, H, stride, c_in, c_out, h, r) for r in range(1, K + 1)]
        assert all(a < b for a, b in zip(flops, flops[1:]))
        dense = count_flops("conv2d", H, H, stride, c_in, c_out, h)
        for r in range(1, K + 1):
            assert (flops[r - 1] < dense) == (r * (K + c_out) < K * c_out)


def test_errors():
    with pytest.raises(ParameterError):
        count_params("scef", 2, 2, 3, 10)
    with pytest.raises(ParameterError):
        count_params("scef", 2, 2, 3)
    with pytest.raises(ParameterError):
        count_params("pool", 2, 2, 3)
    with pytest.raises(ParameterError):
        count_flops("conv2d", 0, 4, 1, 1, 1, 1)


def test_summary_single_layer_and_totals():
    cfg = NetworkConfig((128, 100, 100), [LayerConfig("scef", 128, 128, 3, rank=4)])
    s = network_summary(cfg)
    assert s.rows[0].complexity.params == count_params("scef", 128, 128, 3, 4)
    assert s.rows[0].complexity.flops == count_flops("scef", 100, 100, 1, 128, 128, 3, 4)
    t = network_summary(tinynet(scef=True))
    assert t.total_params == sum(r.complexity.params for r in t.rows)
    assert t.total_flops == sum(r.complexity.flops for r in t.rows)
    assert t.as_dict()["schema"] == 1
    assert t.to_csv().splitlines()[-1].startswith("total,")


def test_summary_matches_built_network():
    for cfg in (tinynet(), tinynet(scef=True), tinynet(scef=True, rank_decay="log")):
        assert network_summary(cfg).total_params == build_network(cfg, 0).n_trainable()


def test_tinynet_scef_smaller_when_rank_below_threshold():
    conv, scef = tinynet(), tinynet(scef=True, rank_decay="linear")
    layers = [r for r in network_summary(scef).rows if r.kind == "scef"]
    below = all(r.rank <= (r.c_out * r.h ** 2) // (r.c_out + r.h ** 2) or r.rank == r.h ** 2 for r in layers)
    assert below
    assert network_summary(scef).total_params < network_summary(conv).total_params


def test_summary_invalid_config_names_layer():
    cfg = NetworkConfig((1, 8, 8), [LayerConfig("conv2d", 1, 4, 3), LayerConfig("scef", 5, 4, 3, rank=2)])
    with pytest.raises(ConfigError, match="layer 1"):
        network_summary(cfg)
