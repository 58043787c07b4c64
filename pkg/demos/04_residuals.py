"""Normality residuals on a conforming and a non-conforming system.

The free flat system satisfies every residual equation identically.
A shear coupling between the two velocity components breaks them, and
the residual norms report by how much. The decisive flag marks the
equations that actually settle the verdict at the given dimension;
the remaining ones vanish identically below n = 3.
"""

import numpy as np

from normality_lab import PhasePoint, SystemDef, normality_residuals, parse

rng = np.random.default_rng(3)


def show(title, sysdef):
    print(f"--- {title} ---")
    worst = {}
    for _ in range(20):
        pt = PhasePoint.velocity(rng.uniform(-1, 1, sysdef.n),
                                 rng.uniform(0.5, 1.5, sysdef.n))
        for res in normality_residuals(sysdef, pt):
            key = (res.check_id, res.decisive)
            worst[key] = max(worst.get(key, 0.0), res.norm)
    for (check_id, decisive), norm in worst.items():
        tag = "decisive" if decisive else "identically zero at this n"
        print(f"  {check_id:<12} {norm:.2e}  ({tag})")


flat = SystemDef(2, [parse("v1", 2, ("x", "v")), parse("v2", 2, ("x", "v"))])
show("flat free system", flat)

shear = SystemDef(2, [parse("v1 + 0.4*v2", 2, ("x", "v")),
                      parse("v2", 2, ("x", "v"))],
                  force=[parse("0.3*x1", 2, ("x", "v")),
                         parse("0", 2, ("x", "v"))])
show("sheared system", shear)
