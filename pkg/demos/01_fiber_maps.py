"""Fiber maps and the metric pair.

Builds a two-dimensional system whose velocity-to-momentum map is
nonlinear, runs a point through the map and back, and prints the two
metric blocks together with their product deviation. The inverse here
has no closed form, so the round trip exercises the Newton path.
"""

import numpy as np

from normality_lab import (PhasePoint, SystemDef, legendre_forward,
                           legendre_inverse, metric, parse)

n = 2
legendre = [parse("v1 + 0.1*v1^3 + 0.05*x2*v2", n, ("x", "v")),
            parse("v2 + 0.1*v2^3", n, ("x", "v"))]
sysdef = SystemDef(n, legendre)

pt = PhasePoint.velocity([0.3, -0.2], [0.9, 1.1])
image = legendre_forward(sysdef, pt)
print("velocity point   x =", pt.x, " v =", pt.fiber)
print("momentum image   p =", image.fiber)

back = legendre_inverse(sysdef, image)
print("round trip       v =", back.point.fiber,
      " error =", float(np.max(np.abs(back.point.fiber - pt.fiber))))

pair = metric(sysdef, pt)
print("\nlower metric block:")
print(pair.lower)
print("upper metric block:")
print(pair.upper)
print("product deviation:", pair.product_deviation)

# the lower block need not be symmetric; that is the point of keeping
# two separate blocks instead of one matrix and its inverse
print("lower block asymmetry:",
      float(np.max(np.abs(pair.lower - pair.lower.T))))
