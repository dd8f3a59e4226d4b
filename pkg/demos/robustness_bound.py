"""Monte-Carlo look at the perturbation bound for orthonormal SCEF layers.

With orthonormal eigen-filters and every coefficient vector inside the
epsilon-ball, a perturbation dI of the input changes each output channel by
at most  eps * h * r * sum_i ||dI_i||_2  in max-norm.  The observed ratio
LHS / RHS shows how loose the bound is in practice.
"""
import numpy as np

from scef import RobustnessCheckConfig, init_scef, verify_robustness_bound

rng = np.random.default_rng(0)
for r in (1, 3, 5, 9):
    p = init_scef(3, 4, 3, r, rng)
    norms = np.linalg.norm(p.coefficients, axis=2, keepdims=True)
    p.coefficients = p.coefficients / norms  # every ||a|| = eps = 1, the tightest admissible case
    rep = verify_robustness_bound(p, RobustnessCheckConfig(1.0, trials=500, image_size=(16, 16)), seed=r)
    print(f"r={r}: {rep['violations']} violations in {rep['comparisons']} comparisons, "
          f"largest LHS/RHS = {rep['max_ratio']:.4f}")
