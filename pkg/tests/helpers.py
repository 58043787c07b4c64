"""Shared test oracles, written independently of the code they check.

- central finite differences (the derivative oracle for the jet kernel)
- a reference interpreter that round-trips expression source through
  Python's own eval(), independent of the package evaluator
- a seeded random expression generator that stays inside the domains
  of ln/sqrt/division on the standard sampling box
"""

import math

import numpy as np

FD_STEP = 1e-5


def fd_gradient(f, x0, h=FD_STEP):
    x0 = np.asarray(x0, dtype=float)
    g = np.zeros_like(x0)
    for i in range(x0.size):
        e = np.zeros_like(x0)
        e[i] = h
        g[i] = (f(x0 + e) - f(x0 - e)) / (2 * h)
    return g


def fd_hessian(f, x0, h=FD_STEP):
    x0 = np.asarray(x0, dtype=float)
    m = x0.size
    H = np.zeros((m, m))
    f0 = f(x0)
    for i in range(m):
        ei = np.zeros(m)
        ei[i] = h
        H[i, i] = (f(x0 + ei) - 2 * f0 + f(x0 - ei)) / (h * h)
        for j in range(i + 1, m):
            ej = np.zeros(m)
            ej[j] = h
            H[i, j] = (f(x0 + ei + ej) - f(x0 + ei - ej)
                       - f(x0 - ei + ej) + f(x0 - ei - ej)) / (4 * h * h)
            H[j, i] = H[i, j]
    return H


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / scale


_PY_FUNCS = {
    "sin": math.sin, "cos": math.cos, "exp": math.exp,
    "ln": math.log, "sqrt": math.sqrt, "tanh": math.tanh,
}


def python_eval(source: str, env: dict) -> float:
    """Independent evaluation: translate ^ to ** and hand the string to
    Python's eval with the math library."""
    translated = source.replace("^", "**")
    namespace = dict(_PY_FUNCS)
    namespace.update(env)
    return float(eval(translated, {"__builtins__": {}}, namespace))


def random_source(rng, dimension, kinds=("x", "v"), depth=3) -> str:
    """Random expression source whose value and first two derivatives
    stay finite and moderate on x in [-1,1], fiber in [0.5,1.5]."""

    def leaf():
        if rng.random() < 0.35:
            return f"{rng.integers(1, 20) / 10.0}"
        kind = kinds[rng.integers(0, len(kinds))]
        return f"{kind}{rng.integers(1, dimension + 1)}"

    def positive(d):
        # strictly positive subexpression, safe under ln/sqrt/division
        inner = build(d - 1) if d > 0 else leaf()
        return f"(1.5+0.5*tanh({inner}))"

    def build(d):
        if d <= 0:
            return leaf()
        roll = rng.random()
        a = build(d - 1)
        if roll < 0.18:
            return f"({a}+{build(d - 1)})"
        if roll < 0.36:
            return f"({a}-{build(d - 1)})"
        if roll < 0.54:
            return f"({a}*{build(d - 1)})"
        if roll < 0.62:
            return f"({a}/{positive(d - 1)})"
        if roll < 0.70:
            fn = ("sin", "cos", "tanh")[rng.integers(0, 3)]
            return f"{fn}({a})"
        if roll < 0.76:
            return f"exp(0.3*tanh({a}))"
        if roll < 0.82:
            return f"ln{positive(d - 1)}"
        if roll < 0.88:
            return f"sqrt{positive(d - 1)}"
        if roll < 0.95:
            return f"{leaf()}^{rng.integers(2, 4)}"
        return f"(-{a})"

    return build(depth)


def random_box_point(rng, n, x_lo=-1.0, x_hi=1.0, f_lo=0.5, f_hi=1.5):
    x = rng.uniform(x_lo, x_hi, n)
    fiber = rng.uniform(f_lo, f_hi, n)
    return x, fiber


# ---------------------------------------------------------------------------
# shared system fixtures

def parse_all(sources, n, kinds=("x", "v")):
    from normality_lab import expr
    return [expr.parse(s, n, kinds=kinds) for s in sources]


def parse_surface(sources):
    """Parametric map sources over u1..u(n-1), n = len(sources)."""
    from normality_lab import expr
    m = len(sources) - 1
    return tuple(expr.parse(s, m, kinds=("u",)) for s in sources)


def make_connection(n, entries=None):
    """Nested component list from a sparse {(k, i, j): source} dict.
    Entries are mirrored in the lower index pair; the rest are zero."""
    from normality_lab import expr
    from normality_lab.system import ConstFunc

    zero = ConstFunc(0.0, n)
    out = [[[zero for _ in range(n)] for _ in range(n)] for _ in range(n)]
    for (k, i, j), source in (entries or {}).items():
        comp = expr.parse(source, n, kinds=("x", "v"))
        out[k][i][j] = comp
        out[k][j][i] = comp
    return out


def sys_identity(n=2):
    """Trivial fiber map p_i = v_i, no force, flat connection."""
    from normality_lab.system import SystemDef
    return SystemDef(n, parse_all([f"v{i + 1}" for i in range(n)], n))


def sys_cubic():
    """Nonlinear diagonal fiber map with position coupling, velocity
    dependent connection and a generic force. Mode-B inverse only."""
    from normality_lab.system import SystemDef
    n = 2
    L = parse_all(["v1 + 0.1*v1^3 + 0.05*x1*v1",
                   "v2 + 0.1*v2^3 - 0.04*x2*v2"], n)
    phi = parse_all(["sin(x1)*v2", "0.3*v1^2"], n)
    conn = make_connection(n, {(0, 0, 1): "0.1*v1",
                               (1, 0, 0): "0.15*x1",
                               (1, 1, 1): "0.05*v2 + 0.1*x2"})
    return SystemDef(n, L, force=phi, connection=conn)


def sys_lagrangian():
    """Fiber map generated as the velocity gradient of a scalar, so the
    lower metric is automatically symmetric."""
    from normality_lab import expr
    from normality_lab.system import SystemDef, lagrangian_to_legendre
    n = 2
    lag = expr.parse(
        "0.5*v1^2 + 0.5*v2^2 + 0.1*v1^2*v2^2 + 0.2*sin(x1)*v2^2", n,
        kinds=("x", "v"))
    phi = parse_all(["0.2*x2*v1", "0"], n)
    conn = make_connection(n, {(0, 1, 1): "0.1*x1"})
    return SystemDef(n, lagrangian_to_legendre(lag), force=phi, connection=conn)


def sys_linear_mode_a(with_inverse=True):
    """Triangular linear-in-v map with a closed-form inverse."""
    from normality_lab.system import SystemDef
    n = 2
    L = parse_all(["(2 + x1^2)*v1", "1.5*v2 + 0.3*x2*v1"], n)
    phi = parse_all(["0.1*v2", "0"], n)
    v_inv = None
    if with_inverse:
        v_inv = parse_all(["p1/(2 + x1^2)",
                           "(p2 - 0.3*x2*p1/(2 + x1^2))/1.5"], n,
                          kinds=("x", "p"))
    return SystemDef(n, L, force=phi, v_inverse=v_inv)


def sys_cubic3():
    """Three-dimensional variant of the cubic fixture with a metric
    cross term, so the lower metric is not symmetric and every
    additional normality field carries content."""
    from normality_lab.system import SystemDef
    n = 3
    L = parse_all(["v1 + 0.1*v1^3 + 0.05*x1*v1",
                   "v2 + 0.1*v2^3 - 0.04*x2*v2 + 0.2*x1*v1",
                   "v3 + 0.08*v3^3 + 0.03*x1*v3"], n)
    phi = parse_all(["sin(x1)*v2", "0.3*v1^2", "0.1*x3*v1"], n)
    conn = make_connection(n, {(0, 0, 1): "0.1*v1",
                               (1, 0, 0): "0.15*x1",
                               (2, 1, 2): "0.05*v3"})
    return SystemDef(n, L, force=phi, connection=conn)


def sys_shear():
    """Trivial fiber map plus a shear force that breaks normality."""
    from normality_lab.system import SystemDef
    n = 2
    L = parse_all(["v1", "v2"], n)
    phi = parse_all(["0.5*v2^2*(1 + x1)", "0"], n)
    return SystemDef(n, L, force=phi)


def sys_parallel(c=0.7, n=2):
    """Trivial fiber map with force proportional to velocity; satisfies
    the weak normality conditions at every point."""
    from normality_lab.system import SystemDef
    L = parse_all([f"v{i + 1}" for i in range(n)], n)
    phi = parse_all([f"{c}*v{i + 1}" for i in range(n)], n)
    return SystemDef(n, L, force=phi)
