"""
Encoding an optimal path and moving its goal
============================================

An optimal path is encoded as a critically damped movement primitive. Rolling
the primitive out towards a different goal gives a feasible but generally
suboptimal path; its input is recovered by inverting the actuation matrix and
its cost compared with a first-order estimate of the optimum.
"""

import numpy as np

from optdmp.config import RunConfig
from optdmp.dmp import deviation

cfg = RunConfig.example()
setup = cfg.setup()
anchor = setup.build_anchor(np.array([5.0, 5.0]))
print(f"anchor cost {anchor.value.cost:.4f}, fit residual {anchor.dmp.fit_residual:.3e}")

###############################################################################
# Reproduce the anchor and generalise to nearby goals along x1.
for dx in (0.0, 0.2, 0.4, 0.8):
    goal = anchor.xf + [dx, 0.0]
    traj, rep = setup.report(anchor.dmp, goal, anchor.value)
    print(f"goal {goal}  dmp cost {rep.dmp_cost:9.4f}  estimate {rep.estimated_optimal_cost:9.4f}"
          f"  gap {rep.gap:8.4f}")

###############################################################################
# The two rollouts differ by a closed-form step response of the damped
# spring, independent of the learned forcing.
a = setup.generalize(anchor.dmp, anchor.xf).states
b = setup.generalize(anchor.dmp, anchor.xf + [0.4, 0.0]).states
t = np.linspace(0, cfg.ocp.tf, len(a))
closed = deviation(anchor.dmp.params, t, 0.4)
print("max |measured - closed form|", np.abs(np.linalg.norm(a - b, axis=1) - closed).max())
