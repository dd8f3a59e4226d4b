import numpy as np
import pytest

from oracles import bank_from_subspaces, channel_matrix, random_orthonormal, svd_tail
from scef.errors import DimensionError, ParameterError
from scef.compressor import compress_conv_to_scef, compress_network, rank_for_error_budget, reconstruction_error
from scef.layers import ScefParams, compose_filters, init_scef
from scef.network import build_network, tinynet
from scef.objective import orthonormality_defect


def test_full_rank_reproduces_bank():
    rng = np.random.default_rng(0)
    for c_out in (4, 9, 12):
        w = rng.standard_normal((c_out, 3, 3, 3))
        p, rep = compress_conv_to_scef(w, min(9, c_out))
        np.testing.assert_allclose(compose_filters(p).weights, w, atol=1e-10)
        assert rep.total_error < 1e-10 and not p.frozen


def test_exact_subspace_has_zero_error():
    w = bank_from_subspaces(np.random.default_rng(1), 3, 8, 3, 2)
    _, rep = compress_conv_to_scef(w, 2)
    assert np.all(rep.per_channel_error < 1e-10)


def test_eckart_young_tail_and_monotone():
    rng = np.random.default_rng(2)
    for _ in range(20):
        c_in, c_out, h = int(rng.integers(1, 5)), int(rng.integers(1, 12)), int(rng.choice([3, 5]))
        w = rng.standard_normal((c_out, c_in, h, h))
        prev = np.inf
        for r in range(1, min(h * h, c_out) + 1):
            p, rep = compress_conv_to_scef(w, r)
            ref = [svd_tail(channel_matrix(w, i), r) for i in range(c_in)]
            np.testing.assert_allclose(rep.per_channel_error, ref, rtol=0, atol=1e-10)
            assert rep.total_error <= prev + 1e-12
            prev = rep.total_error
            assert orthonormality_defect(p).max() < 1e-10


def test_svd_truncation_beats_random_bases():
    rng = np.random.default_rng(3)
    w = rng.standard_normal((6, 2, 3, 3))
    _, best = compress_conv_to_scef(w, 3)
    for _ in range(200):
        eig = np.stack([random_orthonormal(rng, 9, 3).T.reshape(3, 3, 3).transpose(0, 2, 1) for _ in range(2)])
        # optimal coefficients for a fixed orthonormal basis are the projections
        coef = np.einsum("jipq,ikpq->ijk", w, eig)
        per, _ = reconstruction_error(w, ScefParams(eig, coef))
        assert np.all(per >= best.per_channel_error - 1e-12)


def test_reconstruction_error_oracles():
    rng = np.random.default_rng(4)
    p = init_scef(3, 4, 3, 5, seed=5)
    per, total = reconstruction_error(compose_filters(p), p)
    assert total < 1e-14
    w = rng.standard_normal((4, 3, 3, 3))
    per, total = reconstruction_error(w, p)
    diff = w - compose_filters(p).weights
    np.testing.assert_allclose(per, [np.linalg.norm(diff[:, i]) for i in range(3)], rtol=1e-13)
    assert total == pytest.approx(np.linalg.norm(diff), rel=1e-13)
    q, rep = compress_conv_to_scef(w, 2)
    per, total = reconstruction_error(w, q)
    assert np.array_equal(per, rep.per_channel_error) and total == rep.total_error
    with pytest.raises(DimensionError):
        reconstruction_error(np.zeros((4, 3, 5, 5)), p)


def test_report_counts():
    w = np.random.default_rng(6).standard_normal((128, 128, 3, 3))
    _, rep = compress_conv_to_scef(w, 4, input_hw=(100, 100))
    assert (rep.params_before, rep.params_after) == (147456, 70144)
    assert (rep.flops_before, rep.flops_after) == (1_474_560_000, 701_440_000)
    assert rep.as_dict()["method"] == "per-channel truncated SVD"


def test_rank_bounds_and_budget():
    w = bank_from_subspaces(np.random.default_rng(7), 2, 8, 3, 3, spectrum=[1.0, 0.8, 0.6])
    with pytest.raises(ParameterError):
        compress_conv_to_scef(w, 0)
    with pytest.raises(ParameterError):
        compress_conv_to_scef(w, 9)  # min(K, c_out) = 8
    assert rank_for_error_budget(w, 0.0) == 3
    assert rank_for_error_budget(w, 1.0) == 1
    r = rank_for_error_budget(w, 0.5)
    assert compress_conv_to_scef(w, r)[1].relative_error <= 0.5
    assert compress_conv_to_scef(w, r - 1)[1].relative_error > 0.5 if r > 1 else True


def test_compress_network_loads_as_scef():
    net = build_network(tinynet(), seed=0)
    x = np.random.default_rng(8).standard_normal((2, 1, 16, 16))
    full, reports = compress_network(net, rank=9)
    assert [L.kind for L in full.layers if L.h > 1] == ["scef"] * 3
    np.testing.assert_allclose(full.forward(x), net.forward(x), atol=1e-10)
    small, reports = compress_network(net, rank_decay="linear")
    assert [r["rank_used"] for r in reports] == [9, 5, 1]
    assert small.n_trainable() < net.n_trainable()
    budget, reports = compress_network(net, error_budget=0.2)
    assert all(r["relative_error"] <= 0.2 for r in reports)
    with pytest.raises(ParameterError):
        compress_network(net)
    with pytest.raises(ParameterError):
        compress_network(net, rank=2, error_budget=0.1)
