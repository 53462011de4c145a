#!/usr/bin/env python3
"""Simulate a dark-frame panel and recover the mixture by EM.

Run with ``python3 demos/01_simulate_and_fit.py``.
"""

import numpy as np

import darkmix as dm

# A 3-component preset: ordinary pixels, warm pixels and a rare hot tail,
# observed under 10 temperature/exposure conditions with 5 frames each.
truth = dm.preset_atik(3, replicates=5)
sim = dm.simulate_panel(truth, n=20000, seed=1)
panel = sim.panel
print("panel:", panel.n, "pixels x", panel.design.n_conditions, "conditions x", panel.design.replicates, "frames")
print("true proportions:", np.round(truth.weights.pi, 4))

# Fit the unrestricted-mean (NPM) model and the log-linear (LEI) one.
npm = dm.fit(panel, 3, mean="npm")
lei = dm.fit(panel, 3, mean="lei")
for name, res in [("npm", npm), ("lei", lei)]:
    print(f"{name}: loglik={res.loglik:.2f} iters={res.iterations} converged={res.converged}")
    print("   proportions:", np.round(res.model.weights.pi, 4))

# Agreement of hard labels with the simulated truth.
labels = dm.classify(npm).labels
print("label agreement:", np.mean(labels == sim.labels))

# Trend of the ordinary component against temperature and exposure.
print("\ncomp  temp  dur      mu       sigma   tau")
for k, t, d, mu, s, tau in dm.trend_table(npm.model):
    if k == 0:
        print(f"{k:4d} {t:5.0f} {d:6.2f} {mu:9.2f} {s:7.2f} {tau:6.2f}")
