"""Gauge freedom of the connection and the hypersurface shift.

The connection entering the covariant machinery is a bookkeeping
choice: shifting it by a symmetric tensor, with the plain force
components held fixed, changes each derived field by a closed-form
amount and leaves the normality content untouched. The report built
here certifies those transformation rules numerically, row by row.

The second half drives the shift itself. A parametric hypersurface is
seeded with covectors along its normals, every sample point travels
along a trajectory of the system, and the per-time trace records how
far the momentum drifts from the normal direction of the moving
surface.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import jets
from .calculus import (LOWER, UPPER, FieldValue, curvature, dynamic_curvature,
                       field_of, horizontal_derivative, vertical_derivative)
from .errors import (AsymmetricGauge, DegeneratePoint, DegenerateSurface,
                     DimensionError, IntegrationFailure, MissingGaugeTensor,
                     MixedRepresentationError, ValidationError)
from .normality import (RESIDUAL_IDS, _relative_deviation, residual_arrays,
                        velocity_bundle)
from .phase import PhasePoint, Rep
from .system import (ConstFunc, SystemDef, SumFunc, VContext, _as_jet,
                     _component_array, _float_env, _newton_solve,
                     theta_from_phi, zero_connection)

SURFACE_RANK_FLOOR = 1e-10

INVARIANT_ROWS = ("metric", "legendre", "legendre-dual", "Omega", "P", "A",
                  "alpha")
RULE_ROWS = ("U", "D", "R", "B", "C", "beta", "eta")

# Residual norms stay put under a gauge change only while the listed
# lower equations hold; the rows carry that dependency explicitly.
RESIDUAL_NEEDS = {
    "weak-alpha": (),
    "weak-eta": ("weak-alpha",),
    "skew-A": (),
    "trace-B": ("skew-A",),
    "skew-C": ("skew-A", "trace-B"),
}


def _gauge_tensor(sysdef, gauge):
    tensor = gauge if gauge is not None else sysdef.gauge
    if tensor is None:
        raise MissingGaugeTensor(
            "system carries no gauge tensor and none was supplied")
    tensor = _component_array(tensor, sysdef.n, "gauge")
    rng = np.random.default_rng(11)
    for _ in range(6):
        env = {}
        for i in range(sysdef.n):
            env[f"x{i + 1}"] = rng.uniform(-1.0, 1.0)
            env[f"v{i + 1}"] = rng.uniform(-1.0, 1.0)
        for k in range(sysdef.n):
            for i in range(sysdef.n):
                for j in range(i + 1, sysdef.n):
                    a = float(tensor[k, i, j].evaluate(env))
                    b = float(tensor[k, j, i].evaluate(env))
                    if abs(a - b) > 1e-10 * max(1.0, abs(a), abs(b)):
                        raise AsymmetricGauge(
                            f"gauge tensor is asymmetric at [{k}][{i}][{j}]")
    return tensor


def apply_gauge(sysdef: SystemDef, gauge=None) -> SystemDef:
    """Shift the connection by the gauge tensor, keeping the plain
    force components. The full force vector picks up the matching
    quadratic fiber term on its own, so the trajectories of the
    returned system are the same curves."""
    tensor = _gauge_tensor(sysdef, gauge)
    n = sysdef.n
    conn = [[[SumFunc(sysdef.connection[k, i, j], tensor[k, i, j])
              for j in range(n)] for i in range(n)] for k in range(n)]
    return SystemDef(n, sysdef.legendre, sysdef.force, conn,
                     v_inverse=sysdef.v_inverse,
                     newton_guess=sysdef.newton_guess)


def connection_free_mode(sysdef: SystemDef) -> SystemDef:
    """The same system with the connection dropped entirely, so every
    covariant derivative collapses to a plain coordinate one."""
    flat = sysdef.connection.flat
    if all(isinstance(f, ConstFunc) and f.value == 0.0 for f in flat):
        return sysdef
    return SystemDef(sysdef.n, sysdef.legendre, sysdef.force,
                     zero_connection(sysdef.n), v_inverse=sysdef.v_inverse,
                     gauge=sysdef.gauge, newton_guess=sysdef.newton_guess)


@dataclass(frozen=True)
class GaugeRow:
    quantity: str
    kind: str          # "invariant" | "rule" | "residual"
    deviation: float
    requires: tuple = ()


@dataclass(frozen=True)
class GaugeReport:
    rows: tuple
    points: int

    def row(self, quantity: str) -> GaugeRow:
        for row in self.rows:
            if row.quantity == quantity:
                return row
        raise KeyError(quantity)

    def worst(self, kind: str = None) -> float:
        picked = [r.deviation for r in self.rows
                  if kind is None or r.kind == kind]
        return max(picked) if picked else 0.0


def _point_deviations(sysdef, gauged, tensor, pt):
    n = sysdef.n
    ctx = VContext(sysdef, pt.x, pt.fiber)
    ctx2 = VContext(gauged, pt.x, pt.fiber)
    vb = velocity_bundle(ctx)
    vb2 = velocity_bundle(ctx2)
    v = np.asarray(pt.fiber, dtype=float)

    Lv = np.array([j.value for j in ctx.L])
    Lv2 = np.array([j.value for j in ctx2.L])
    W, P, A, B, alpha = vb.W, vb.P, vb.A, vb.B, vb.alpha

    out = {
        "metric": max(_relative_deviation(ctx.g_values, ctx2.g_values),
                      _relative_deviation(ctx.g_inv_values, ctx2.g_inv_values)),
        "legendre": _relative_deviation(Lv, Lv2),
        "legendre-dual": _relative_deviation(W, vb2.W),
        "Omega": _relative_deviation(np.array([vb.Omega]),
                                     np.array([vb2.Omega])),
        "P": _relative_deviation(P, vb2.P),
        "A": _relative_deviation(A, vb2.A),
        "alpha": _relative_deviation(alpha, vb2.alpha),
    }

    Tfield = field_of(ctx, tensor, (UPPER, LOWER, LOWER))
    Tvals = Tfield.values()
    vertT = vertical_derivative(Tfield).values()    # [k,i,r,j] = dT^k_ir/dv^j
    gradT = horizontal_derivative(Tfield).values()  # [k,i,r,m] = grad_m T^k_ir
    D1 = jets.values(dynamic_curvature(ctx))
    D2 = jets.values(dynamic_curvature(ctx2))
    R1 = jets.values(curvature(ctx))
    R2 = jets.values(curvature(ctx2))

    out["U"] = _relative_deviation(
        vb2.U, vb.U + np.einsum("q,riq,r->i", W, Tvals, Lv))
    out["D"] = _relative_deviation(D2, D1 - vertT.transpose(0, 2, 1, 3))
    rule_r = (R1
              + np.einsum("kjri->krij", gradT)
              - np.einsum("kirj->krij", gradT)
              - np.einsum("m,sjm,kirs->krij", v, Tvals, D1)
              + np.einsum("m,sim,kjrs->krij", v, Tvals, D1)
              + np.einsum("kim,mjr->krij", Tvals, Tvals)
              - np.einsum("kjm,mir->krij", Tvals, Tvals)
              + np.einsum("m,sjm,kirs->krij", v, Tvals, vertT)
              - np.einsum("m,sim,kjrs->krij", v, Tvals, vertT))
    out["R"] = _relative_deviation(R2, rule_r)
    out["B"] = _relative_deviation(
        vb2.B, B + np.einsum("m,msq,qk,rk->rs", Lv, Tvals, P, A - A.T))
    # the C rule pins down the skew part only; its symmetric remainder
    # is not reproduced here, so compare after antisymmetrizing
    shift_c = (np.einsum("brq,b,qm,ms->rs", Tvals, Lv, P, B)
               + np.einsum("brq,b,qm,ma,ca,esc,e->rs",
                           Tvals, Lv, P, A, P, Tvals, Lv))
    lhs_c = (vb2.C - vb.C) - (vb2.C - vb.C).T
    out["C"] = _relative_deviation(lhs_c, shift_c - shift_c.T)
    out["beta"] = _relative_deviation(
        vb2.beta, vb.beta + np.einsum("ekq,e,q->k", Tvals, Lv, alpha))
    out["eta"] = _relative_deviation(
        vb2.eta, vb.eta + np.einsum("ekq,e,qs,s->k", Tvals, Lv, P, alpha))

    res1 = residual_arrays(vb)
    res2 = residual_arrays(vb2)
    for rid in RESIDUAL_IDS:
        out[rid] = abs(float(np.max(np.abs(res1[rid])))
                       - float(np.max(np.abs(res2[rid]))))
    return out


def gauge_invariance_report(sysdef: SystemDef, points,
                            gauge=None) -> GaugeReport:
    """Deviation table for one gauge change, aggregated over points.

    Invariant rows compare a quantity before and after the change.
    Rule rows recompute a quantity on the gauged system and compare it
    against the transformation rule applied to un-gauged values, which
    exercises the cancellations behind each rule. Residual rows compare
    normality residual norms; the conditional ones list the residuals
    whose vanishing they rely on."""
    tensor = _gauge_tensor(sysdef, gauge)
    gauged = apply_gauge(sysdef, tensor)
    worst = {}
    count = 0
    for pt in points:
        if pt.rep is not Rep.VELOCITY:
            raise MixedRepresentationError(
                "gauge report evaluates at velocity points")
        for name, dev in _point_deviations(sysdef, gauged, tensor, pt).items():
            worst[name] = max(worst.get(name, 0.0), dev)
        count += 1
    if count == 0:
        raise ValidationError("gauge report needs at least one point")
    rows = [GaugeRow(name, "invariant", worst[name])
            for name in INVARIANT_ROWS]
    rows += [GaugeRow(name, "rule", worst[name]) for name in RULE_ROWS]
    rows += [GaugeRow(rid, "residual", worst[rid],
                      requires=RESIDUAL_NEEDS[rid]) for rid in RESIDUAL_IDS]
    return GaugeReport(tuple(rows), count)


@dataclass(frozen=True)
class ShiftRun:
    """Configuration of one hypersurface shift.

    `surface` holds n expressions in u1..u(n-1); `nu` scales the
    initial normal covector and may be a constant or an expression in
    the same variables. Grid fields accept one value per parameter
    axis or a single value broadcast to all of them. A periodic axis
    omits its endpoint and wraps the tangent stencil."""

    surface: tuple
    nu: object = 1.0
    u_start: object = 0.0
    u_stop: object = 1.0
    u_samples: object = 32
    periodic: object = False
    t_final: float = 1.0
    time_steps: int = 10
    rtol: float = 1e-10


@dataclass(frozen=True)
class ShiftResult:
    times: np.ndarray       # (T+1,)
    points: np.ndarray      # (T+1, grid..., n)
    covectors: np.ndarray   # (T+1, grid..., n)
    deviations: np.ndarray  # (T+1,) collinearity trace, worst node per time


def _per_axis(value, m, name):
    if isinstance(value, (list, tuple, np.ndarray)):
        if len(value) != m:
            raise ValidationError(
                f"{name} needs one entry per parameter axis ({m}), "
                f"got {len(value)}")
        return list(value)
    return [value] * m


def _run_dims(run: ShiftRun):
    n = len(run.surface)
    if n < 2:
        raise ValidationError("a hypersurface needs ambient dimension >= 2")
    m = n - 1
    for f in run.surface:
        if f.dimension != m:
            raise ValidationError(
                f"surface components must use u1..u{m}")
    return n, m


def _axes(run: ShiftRun, m):
    starts = _per_axis(run.u_start, m, "u_start")
    stops = _per_axis(run.u_stop, m, "u_stop")
    counts = _per_axis(run.u_samples, m, "u_samples")
    wraps = [bool(w) for w in _per_axis(run.periodic, m, "periodic")]
    axes = []
    for d in range(m):
        count = int(counts[d])
        if count < 3:
            raise ValidationError("tangent stencils need u_samples >= 3")
        lo, hi = float(starts[d]), float(stops[d])
        if not hi > lo:
            raise ValidationError("u_stop must exceed u_start")
        if wraps[d]:
            axes.append(lo + (hi - lo) * np.arange(count) / count)
        else:
            axes.append(np.linspace(lo, hi, count))
    return axes, wraps


def _surface_frame(run: ShiftRun, u):
    n, m = _run_dims(run)
    u = np.asarray(u, dtype=float).reshape(-1)
    if len(u) != m:
        raise DimensionError(f"expected {m} surface parameters, got {len(u)}")
    seeded = jets.seeds(list(u), order=1)
    env = {f"u{d + 1}": seeded[d] for d in range(m)}
    comps = [_as_jet(f.evaluate(env), m, order=1) for f in run.surface]
    x = np.array([c.value for c in comps])
    tangents = np.array([[comps[i].grad[d] for i in range(n)]
                         for d in range(m)])
    return x, tangents


def _normal_of(tangents):
    _, sing, vt = np.linalg.svd(tangents)
    if sing.size and sing[-1] < SURFACE_RANK_FLOOR:
        raise DegenerateSurface(
            f"tangent directions collapse (smallest singular value "
            f"{sing[-1]:.3e})")
    normal = vt[-1]
    # orientation: tangent rows followed by the normal make a
    # positively oriented frame
    if np.linalg.det(np.vstack([tangents, normal])) < 0.0:
        normal = -normal
    return normal


def hypersurface_normal(run: ShiftRun, u) -> np.ndarray:
    """Unit covector annihilating the surface tangents at u."""
    _, tangents = _surface_frame(run, u)
    return _normal_of(tangents)


def _nu_value(run: ShiftRun, u, m):
    if isinstance(run.nu, (int, float)):
        return float(run.nu)
    env = {f"u{d + 1}": float(u[d]) for d in range(m)}
    return float(run.nu.evaluate(env))


def _trajectory_rhs(sysdef: SystemDef):
    n = sysdef.n
    state = {"guess": None}

    def rhs(t, y):
        x, p = y[:n], y[n:]
        if sysdef.v_inverse is not None:
            env = _float_env(sysdef, x, p, "p")
            v = np.array([float(f.evaluate(env)) for f in sysdef.v_inverse])
        else:
            v = _newton_solve(sysdef, x, p, guess=state["guess"])
            state["guess"] = v
        theta = theta_from_phi(sysdef, PhasePoint.velocity(x, v))
        return np.concatenate([v, theta])

    return rhs


def _collinearity(x_grid, p_grid, axes, wraps):
    """Worst normalized pairing between the momentum and any estimated
    tangent direction of the moved surface. Tangents come from central
    differences along each grid axis; a non-periodic axis contributes
    only its interior nodes."""
    m = len(axes)
    worst = 0.0
    for d in range(m):
        h = axes[d][1] - axes[d][0]
        if wraps[d]:
            tau = (np.roll(x_grid, -1, axis=d)
                   - np.roll(x_grid, 1, axis=d)) / (2.0 * h)
            p_part, x_part = p_grid, x_grid
        else:
            inner = [slice(None)] * m
            lead, trail = list(inner), list(inner)
            lead[d] = slice(2, None)
            trail[d] = slice(None, -2)
            inner[d] = slice(1, -1)
            tau = (x_grid[tuple(lead)] - x_grid[tuple(trail)]) / (2.0 * h)
            p_part, x_part = p_grid[tuple(inner)], x_grid[tuple(inner)]
        tau_norm = np.linalg.norm(tau, axis=-1)
        p_norm = np.linalg.norm(p_part, axis=-1)
        floor = 1e-12 * max(1.0, float(np.max(np.abs(x_part))))
        if np.any(tau_norm <= floor):
            raise DegenerateSurface(
                "moved surface loses rank along a parameter axis")
        if np.any(p_norm <= 1e-12):
            raise DegeneratePoint("momentum vanishes on a shift trajectory")
        pairing = np.abs(np.sum(p_part * tau, axis=-1)) / (p_norm * tau_norm)
        worst = max(worst, float(np.max(pairing)))
    return worst


def shift_integrate(sysdef: SystemDef, run: ShiftRun) -> ShiftResult:
    """Integrate the shift of the run's hypersurface and trace the
    collinearity between momenta and moving-surface normals."""
    n, m = _run_dims(run)
    if n != sysdef.n:
        raise ValidationError(
            f"surface is for ambient dimension {n}, system has {sysdef.n}")
    axes, wraps = _axes(run, m)
    shape = tuple(len(a) for a in axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    nodes = mesh.reshape(-1, m)
    times = np.linspace(0.0, float(run.t_final), run.time_steps + 1)

    raw = np.empty((len(nodes), 2 * n, len(times)))
    for w, u in enumerate(nodes):
        x0, tangents = _surface_frame(run, u)
        normal = _normal_of(tangents)
        scale = _nu_value(run, u, m)
        if abs(scale) < 1e-14:
            raise ValidationError(
                f"normal scale vanishes at u={u.tolist()}")
        sol = solve_ivp(_trajectory_rhs(sysdef), (0.0, float(run.t_final)),
                        np.concatenate([x0, scale * normal]),
                        method="RK45", rtol=run.rtol, atol=1e-12,
                        t_eval=times)
        if not sol.success:
            raise IntegrationFailure(
                f"trajectory from u={u.tolist()} aborted: {sol.message}")
        raw[w] = sol.y

    # (nodes, 2n, T) -> time-major grids of positions and momenta
    per_time = raw.transpose(2, 0, 1)
    points = per_time[:, :, :n].reshape((len(times),) + shape + (n,))
    covectors = per_time[:, :, n:].reshape((len(times),) + shape + (n,))
    deviations = np.array([_collinearity(points[t], covectors[t], axes, wraps)
                           for t in range(len(times))])
    return ShiftResult(times, points, covectors, deviations)
