"""Douglas-Rachford as a single resolvent.

The DR operator for (A1, A2) is the resolvent of a composite node, so the
usual splitting iteration is just repeated resolvent evaluation.  Here A1 is
the normal cone of [0, 1] and A2 = Id - 2, so zer(A1 + A2) = {1} and the
shadow sequence J_A1 x_k should settle there.

Run: python3 demos/douglas_rachford.py
"""
import numpy as np

from rescomp import calculus as C
from rescomp.operators import Box, NormalCone, ScaledIdentity

a1 = C.Leaf(NormalCone(Box(np.zeros(1), np.ones(1))))
a2 = C.TranslateOut(C.Leaf(ScaledIdentity(1.0, 1)), np.array([2.0]))
node = C.DouglasRachford(a1, a2)
lifted = C.dr_via_composition(a1, a2)

x = np.array([5.0])
for k in range(12):
    shadow = C.resolvent(a1, 1.0, x)
    nxt = C.resolvent(node, 1.0, x)
    gap = np.abs(nxt - C.resolvent(lifted, 1.0, x)).max()
    print(f"{k:2d}  x={x[0]: .6f}  shadow={shadow[0]: .6f}  lifted gap={gap:.1e}")
    x = nxt
