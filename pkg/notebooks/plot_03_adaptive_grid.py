"""
Placing anchors where the estimate breaks down
==============================================

The sampler walks along a direction from the start point and re-anchors
whenever the generalised path's cost exceeds the first-order estimate by more
than a threshold, or after a fixed number of steps. The result is a line of
primitives that can be blended at any goal in the region. This run takes a
few minutes.
"""

import numpy as np

from optdmp.config import RunConfig
from optdmp.experiment import run_sampling
from optdmp.sampler import query, uniform_count

cfg = RunConfig.example()
grid = run_sampling(cfg)
print("anchors at x1 =", np.round(grid.line_points()[:, 0], 3))
print("decisions:", [r.decision for r in grid.trace])

###############################################################################
# A uniform grid at the smallest adaptive spacing, for comparison.
print("uniform nodes needed:", uniform_count(1.0, 9.0, grid.min_spacing()))

###############################################################################
# Blend the two neighbouring primitives at a goal between anchors.
res = query(grid, np.array([6.3, 5.0]), cfg.setup())
print("blend", res.blended_from)
print(f"dmp cost {res.report.dmp_cost:.4f}  gap {res.report.gap:.4f}")
