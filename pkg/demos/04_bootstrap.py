#!/usr/bin/env python3
"""Bootstrap standard errors for a fitted mixture.

Run with ``python3 demos/04_bootstrap.py`` (a minute or two on one core).
"""

import darkmix as dm

panel = dm.simulate_panel(dm.preset_atik(3, replicates=5), n=10000, seed=4).panel
res = dm.fit(panel, 3, mean="lei")

# Replicates are keyed by (seed, b), so results do not depend on threads.
table = dm.bootstrap_se(panel, res.model, B=20, seed=4)
print(f"B={table.B}, failures={table.failures}")
for name, est, se in table.as_rows():
    print(f"{name:24s} {est:12.5g} {se:10.3g}")
