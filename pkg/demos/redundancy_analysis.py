"""How much of a trained Conv2D layer's filter space is actually used?

Train the plain TinyNet for a few epochs on oriented bars, then look at the
singular-value spectrum of every input channel's filter matrix.  Channels
whose normalized spectrum drops below gamma after a few components are
redundant: a low-rank basis per channel would describe them just as well.
"""
import numpy as np

from scef import TrainConfig, analyze_network, build_network, synthetic_bars, tinynet, train

data = synthetic_bars(1200, classes=4, seed=0)
net = build_network(tinynet(), seed=0)
res = train(net, TrainConfig(epochs=8, seed=0), data)
print(f"validation accuracy after {len(res.metrics)} epochs: {res.metrics[-1]['val_acc']:.3f}")

for gamma in (0.1, 0.3, 0.5):
    reports = analyze_network(net, gamma)
    ranks = ", ".join(f"layer {r.layer_index}: {r.layer_rank}" for r in reports)
    print(f"gamma={gamma}: effective layer ranks (K = 9) -> {ranks}")

report = analyze_network(net, 0.3)[-1]
print("deepest layer, mean normalized spectrum:", np.round(report.normalized_spectrum, 3))
print("share of channels with effective rank k:",
      {k + 1: round(float(v), 3) for k, v in enumerate(report.histogram) if v > 0})
