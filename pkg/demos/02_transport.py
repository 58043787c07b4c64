"""Transport identities for derivatives along the fiber maps.

A scalar or covector field can be written in either representation.
Differentiating it in one representation and pushing the result
through the fiber map must agree with differentiating the pushed
field directly. This script measures that agreement for random
polynomial fields on two systems.
"""

import numpy as np

from normality_lab import SystemDef, PhasePoint, parse
from normality_lab.calculus import (LOWER, horizontal_transport_momentum,
                                    horizontal_transport_velocity,
                                    vertical_transport_momentum,
                                    vertical_transport_velocity)

rng = np.random.default_rng(7)
n = 2


def random_field(kind):
    a, b = rng.integers(1, n + 1, size=2)
    c = rng.uniform(-0.5, 0.5, 3).round(4)
    src = f"({c[0]}) + ({c[1]})*x{a}*{kind}{b} + ({c[2]})*{kind}{a}^2"
    return parse(src, n, ("x", kind))


systems = {
    "flat": SystemDef(n, [parse("v1", n, ("x", "v")),
                          parse("v2", n, ("x", "v"))]),
    "cubic": SystemDef(n, [parse("v1 + 0.1*v1^3 + 0.05*x2*v2", n, ("x", "v")),
                           parse("v2 + 0.1*v2^3", n, ("x", "v"))]),
}

for name, sysdef in systems.items():
    print(f"--- {name} ---")
    for trial in range(3):
        x = rng.uniform(-1, 1, n)
        v = rng.uniform(0.5, 1.5, n)
        pt = PhasePoint.velocity(x, v)

        sv = random_field("v")
        sp = random_field("p")
        cv = [random_field("v") for _ in range(n)]
        cp = [random_field("p") for _ in range(n)]

        print(f"  trial {trial}:",
              f"vert(v) {vertical_transport_velocity(sysdef, pt, sv):.2e}",
              f"vert(p) {vertical_transport_momentum(sysdef, pt, sp):.2e}",
              f"horiz(v) {horizontal_transport_velocity(sysdef, pt, cv, (LOWER,)):.2e}",
              f"horiz(p) {horizontal_transport_momentum(sysdef, pt, cp, (LOWER,)):.2e}")
