#!/usr/bin/env python3
"""Exploratory checks that motivate the structured covariance.

Run with ``python3 demos/03_diagnostics.py``.
"""

import numpy as np

import darkmix as dm

sim = dm.simulate_panel(dm.preset_atik(3, replicates=5), n=30000, seed=3)
panel = sim.panel

# Trimming the bright tail is a quick, model-free screen.
trim = dm.trim_by_mean(panel, 400.0)
print(f"trim at 400: kept {trim.kept_fraction:.3%} of pixels")

# A fitted mixture gives a cleaner split: keep pixels classified ordinary.
res = dm.fit(panel, 3)
ordinary = np.flatnonzero(dm.classify(res).labels == 0)
calm = panel.take(ordinary)
print(f"classified ordinary: {calm.n} pixels")

# Within-pixel, across-frame covariances averaged over pixels estimate
# tau_e tau_f; the true values are printed alongside.
block = dm.block_avg_cov(calm)
tau = sim.model.taus()[0]
np.set_printoptions(precision=1, suppress=True, linewidth=120)
print("block-averaged covariance (last 3 conditions):")
print(block.matrix[-3:, -3:])
print("tau tau' (truth):")
print(np.outer(tau, tau)[-3:, -3:])

# A rank-one (multiplicative) pattern is what tau tau' implies.
hm = dm.hm_test(block)
print(f"hm ratio = {hm.ratio:.4f}, multiplicative = {hm.multiplicative}")

# Normal Q-Q of one condition's pixel means among ordinary pixels.
qq = dm.qq_data(calm.condition_means[:, 0])
print(f"Q-Q slope {qq.slope:.3f}, flagged = {qq.flagged}")

# Pixel averages in two warm conditions: the slope reflects how the
# fixed-pattern term grows with exposure (attenuated by read noise).
means = calm.condition_means
xr = dm.cross_condition_regression(means[:, 7], means[:, 9], threshold=360.0)
print(f"cross-condition slope {xr.slope:.3f} over {xr.n_used} pixels")
