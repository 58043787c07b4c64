"""Every derived field, computed twice.

Each field in the chain has a velocity-side recipe and a momentum-side
recipe. Running both at paired points and comparing is the main
correctness instrument of the package: a sign error in either route
shows up as a deviation far above round-off. The built-in mutation
switch demonstrates what a deliberately broken route looks like.
"""

import numpy as np

from normality_lab import (CROSS_FIELDS, PhasePoint, SystemDef,
                           cross_check_all, parse)

rng = np.random.default_rng(21)
n = 2
sysdef = SystemDef(
    n,
    [parse("v1 + 0.1*v1^3 + 0.05*x2*v2", n, ("x", "v")),
     parse("v2 + 0.1*v2^3", n, ("x", "v"))],
    force=[parse("0.2*x1 + 0.1*v2", n, ("x", "v")),
           parse("-0.3*x2*v1", n, ("x", "v"))])

worst = {field: 0.0 for field in CROSS_FIELDS}
for _ in range(25):
    pt = PhasePoint.velocity(rng.uniform(-1, 1, n), rng.uniform(0.5, 1.5, n))
    out = cross_check_all(sysdef, pt)
    for field in CROSS_FIELDS:
        worst[field] = max(worst[field], out[field].deviation)

print("field  worst relative deviation over 25 points")
for field in CROSS_FIELDS:
    print(f"  {field:<6} {worst[field]:.2e}")

# now corrupt one term of the velocity route on purpose
pt = PhasePoint.velocity([0.4, -0.1], [1.0, 0.8])
broken = cross_check_all(sysdef, pt, mutate="flip-beta-term")
print("\nwith mutation flip-beta-term:")
for field in CROSS_FIELDS:
    marker = "  <-- detected" if broken[field].deviation > 1e-6 else ""
    print(f"  {field:<6} {broken[field].deviation:.2e}{marker}")
