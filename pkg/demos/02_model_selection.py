#!/usr/bin/env python3
"""Choose the number of components and test the LEI mean restriction.

Run with ``python3 demos/02_model_selection.py``.
"""

import darkmix as dm

panel = dm.simulate_panel(dm.preset_atik(3, replicates=5), n=10000, seed=2).panel

# BIC and ICL are minimized; NEC below 1 favours K clusters over one.
sweep = dm.sweep_k(panel, [1, 2, 3, 4])
print(" K      loglik     p         BIC         ICL      NEC")
for row in sweep.rows:
    nec = "" if row.nec is None else f"{row.nec:8.4f}"
    print(f"{row.K:2d} {row.loglik:11.2f} {row.params:5d} {row.bic:11.2f} {row.icl:11.2f} {nec}")
print("best by BIC:", sweep.best("bic"), " best by ICL:", sweep.best("icl"))

# Likelihood ratio: does the unrestricted mean improve on the LEI trend?
lei = dm.fit(panel, 3, mean="lei")
npm = dm.fit(panel, 3, init=lei.model.to_npm())
lr = dm.lr_test(npm, lei)
print(f"\nLR = {lr.statistic:.2f} on {lr.df} df, p = {lr.p_value:.3g}")
