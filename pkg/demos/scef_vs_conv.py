"""SCEF layers next to the Conv2D layers they replace.

The same TinyNet topology is trained twice with identical seeds: once with
dense 3x3 convolutions, once with SCEF layers whose rank decays linearly
with depth (9, 5, 1).  The first SCEF layer has r = K, so its basis spans
the whole filter space and stays frozen.
"""
from scef import (RegWeights, TrainConfig, build_network, network_summary, synthetic_bars, tinynet, train)
from scef.objective import orthonormality_defect

data = synthetic_bars(1500, classes=4, seed=1)
cfg = TrainConfig(epochs=10, seed=1, reg=RegWeights(lambda1_base=1e-4, lambda2=1e-4))

for name, topology in [("Conv2D", tinynet()), ("SCEF  ", tinynet(scef=True, rank_decay="linear"))]:
    net = build_network(topology, seed=1)
    res = train(net, cfg, data)
    summary = network_summary(topology)
    print(f"{name}: {net.n_trainable():6d} trainable params, {summary.total_flops:9d} MACs, "
          f"val acc {res.metrics[-1]['val_acc']:.3f}")
    for idx, params in net.scef_layers():
        d = orthonormality_defect(params)
        print(f"    layer {idx} (r={params.r}{', frozen' if params.frozen else ''}): "
              f"max ||U^T U - I||_F = {d.max():.3f}")

print()
print(network_summary(tinynet(scef=True)).to_text())
