"""Yosida approximations of a box normal cone converging to the cone itself.

Run: python3 demos/yosida_convergence.py
"""
import numpy as np

from rescomp import calculus as C
from rescomp.analysis import SweepSpec, gamma_sweep, hausdorff_estimate
from rescomp.operators import Box, NormalCone

cone = C.Leaf(NormalCone(Box(np.zeros(1), np.ones(1))))

spec = SweepSpec("Cor515", [1.0, 0.1, 0.01, 0.001], rho=1.0, delta=2.0, n=400, seed=3, a=cone)
rep = gamma_sweep(spec, experiment_id="yosida-demo")
print(rep.to_csv())

# the same picture from the graph side
for lam in (1.0, 0.1, 0.01):
    rec = hausdorff_estimate(C.Yosida(cone, lam), cone, 1.0, 1.0, 1000, 3)
    print(f"lam={lam:<6} haus in [{rec.haus_lower:.4f}, {rec.haus_upper_bound:.4f}]")
