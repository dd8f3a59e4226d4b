import csv

import numpy as np
import pytest

from scef.checkpoint import load_checkpoint
from scef.data import Dataset, synthetic_bars
from scef.errors import NumericError, ParameterError
from scef.network import build_network, tinynet
from scef.objective import RegWeights
from scef.training import METRIC_FIELDS, TrainConfig, train


def _small_run(tmp_path, name, **kw):
    cfg = TrainConfig(**{"epochs": 3, "seed": 2, **kw})
    net = build_network(tinynet(scef=True), cfg.seed)
    return train(net, cfg, synthetic_bars(120, seed=2), out_dir=tmp_path / name)


def test_zero_learning_rate_leaves_parameters(tmp_path):
    net = build_network(tinynet(scef=True), 0)
    before = {k: v.copy() for k, v in net.params.items()}
    train(net, TrainConfig(learning_rate=0.0, epochs=2), synthetic_bars(64, seed=0))
    assert all(np.array_equal(before[k], net.params[k]) for k in before)


def test_single_sample_is_memorized():
    d = synthetic_bars(8, seed=1)
    one = d.subset([3])
    res = train(build_network(tinynet(), 1), TrainConfig(epochs=40, learning_rate=0.05, batch_size=1), one, val=one)
    assert res.metrics[-1]["train_acc"] == 1.0


def test_metrics_csv_and_checkpoints(tmp_path):
    res = _small_run(tmp_path, "run")
    out = tmp_path / "run"
    names = sorted(p.name for p in out.glob("ckpt_epoch*.zip"))
    assert names == [f"ckpt_epoch{e:04d}.zip" for e in range(4)]
    with open(out / "metrics.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == METRIC_FIELDS
    epochs = [int(r[0]) for r in rows[1:]]
    assert epochs == sorted(set(epochs)) == [1, 2, 3]
    for r in rows[1:]:
        task, p1, p2, total = map(float, r[1:5])
        assert abs(total - (task + p1 + p2)) <= 1e-9
    assert res.metrics[-1]["phi2"] > 0
    _, manifest = load_checkpoint(out / "ckpt_epoch0003.zip")
    assert manifest["epoch"] == 3 and manifest["metrics"]["val_acc"] == res.metrics[-1]["val_acc"]


def test_frozen_eigen_filters_do_not_move(tmp_path):
    cfg = TrainConfig(epochs=2, seed=0)
    net = build_network(tinynet(scef=True, frozen=True), 0)
    train(net, cfg, synthetic_bars(96, seed=0), out_dir=tmp_path / "f")
    nets = [load_checkpoint(tmp_path / "f" / f"ckpt_epoch{e:04d}.zip")[0] for e in range(3)]
    for i, _ in nets[0].scef_layers():
        key = f"layer{i}.eigen_filters"
        assert nets[0].params[key].tobytes() == nets[1].params[key].tobytes() == nets[2].params[key].tobytes()
    net = build_network(tinynet(scef=True), 0)
    train(net, cfg, synthetic_bars(96, seed=0), out_dir=tmp_path / "t")
    a, b = (load_checkpoint(tmp_path / "t" / f"ckpt_epoch{e:04d}.zip")[0] for e in (1, 2))
    # layer 0 has r = K and is frozen automatically; the lower-rank layers train
    assert a.params["layer1.eigen_filters"].tobytes() != b.params["layer1.eigen_filters"].tobytes()
    assert a.params["layer0.eigen_filters"].tobytes() == b.params["layer0.eigen_filters"].tobytes()


def test_serial_runs_are_identical(tmp_path):
    a = _small_run(tmp_path, "a")
    b = _small_run(tmp_path, "b")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    for pa, pb in zip(a.checkpoints, b.checkpoints):
        assert pa.read_bytes() == pb.read_bytes()
    assert round(a.metrics[-1]["val_acc"], 3) == round(b.metrics[-1]["val_acc"], 3)


def test_phi1_switch(tmp_path):
    off = _small_run(tmp_path, "off", reg=RegWeights(lambda1_base=0.0))
    assert all(m["phi1"] == 0.0 for m in off.metrics)
    on = _small_run(tmp_path, "on", reg={"lambda1_base": 1e-4})
    assert on.metrics[-1]["phi1"] > 0


def test_divergence_raises_numeric_error():
    d = synthetic_bars(64, seed=0)
    d = Dataset(d.images * 1e300, d.labels)
    with pytest.raises(NumericError, match=r"epoch 1, batch \d+"):
        train(build_network(tinynet(), 0), TrainConfig(epochs=1), d)


def test_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ParameterError):
        TrainConfig(batch_size=0)
