"""Derivative calculus for extended tensor fields.

Fields live on one of the two evaluation contexts and are stored as
object arrays of jets, one axis per tensor index. Each axis is marked
upper ("u") or lower ("l"); new axes from differentiation are appended
last, so the entry order of a derivative array is [field indices...,
derivative index].

The fiber derivative lowers an index in the velocity representation
and raises one in the momentum representation. The horizontal
derivative is covariant: a base-coordinate derivative, a fiber
correction built from the connection, and one connection term per
tensor index. Applying it twice demotes entries to order zero, which
is fine for value-level use and raises MissingJets on any attempt to
extract further derivatives.
"""

from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import DimensionError, MixedRepresentationError
from .phase import PhasePoint, Rep
from .system import PContext, SystemDef, VContext, legendre_forward

UPPER = "u"
LOWER = "l"


def _is_momentum(ctx) -> bool:
    return isinstance(ctx, PContext)


def _connection_of(ctx):
    return ctx.gamma_p if _is_momentum(ctx) else ctx.gamma


class FieldValue:
    """Tensor field evaluated at one context."""

    __slots__ = ("ctx", "data", "variance")

    def __init__(self, ctx, data, variance=()):
        self.ctx = ctx
        self.variance = tuple(variance)
        arr = np.empty((ctx.n,) * len(self.variance), dtype=object)
        if self.variance:
            src = np.asarray(data, dtype=object)
            if src.shape != arr.shape:
                raise DimensionError(
                    f"field data shape {src.shape} does not match rank "
                    f"{len(self.variance)} at n={ctx.n}")
            arr[...] = src
        else:
            arr[()] = data
        self.data = arr

    @property
    def rank(self) -> int:
        return len(self.variance)

    def values(self) -> np.ndarray:
        return jets.values(self.data)

    def _compatible(self, other):
        return self.ctx is other.ctx and self.variance == other.variance

    def __add__(self, other):
        if not isinstance(other, FieldValue) or not self._compatible(other):
            return NotImplemented
        out = np.empty(self.data.shape, dtype=object)
        for idx in np.ndindex(self.data.shape):
            out[idx] = self.data[idx] + other.data[idx]
        return FieldValue(self.ctx, out, self.variance)

    def __sub__(self, other):
        if not isinstance(other, FieldValue) or not self._compatible(other):
            return NotImplemented
        out = np.empty(self.data.shape, dtype=object)
        for idx in np.ndindex(self.data.shape):
            out[idx] = self.data[idx] - other.data[idx]
        return FieldValue(self.ctx, out, self.variance)


def field_of(ctx, components, variance=(), evaluate=None):
    """Build a FieldValue by evaluating expression-like components.

    `components` is a scalar component for rank 0 or nested sequences
    matching the variance. The default evaluator treats components as
    native to the context's representation; pass e.g.
    ctx.eval_velocity_native to compose through the fiber map instead."""
    evaluate = evaluate or ctx.eval_native
    rank = len(variance)
    if rank == 0:
        return FieldValue(ctx, evaluate(components), ())
    data = np.empty((ctx.n,) * rank, dtype=object)
    for idx in np.ndindex(data.shape):
        comp = components
        for t in idx:
            comp = comp[t]
        data[idx] = evaluate(comp)
    return FieldValue(ctx, data, variance)


def tensor_product(a: FieldValue, b: FieldValue) -> FieldValue:
    if a.ctx is not b.ctx:
        raise DimensionError("tensor product needs fields on a single context")
    out = np.empty(a.data.shape + b.data.shape, dtype=object)
    for ia in np.ndindex(a.data.shape):
        for ib in np.ndindex(b.data.shape):
            out[ia + ib] = a.data[ia] * b.data[ib]
    return FieldValue(a.ctx, out, a.variance + b.variance)


def vertical_derivative(field: FieldValue) -> FieldValue:
    """Fiber derivative. Appends an upper index in the momentum
    representation and a lower index in the velocity representation."""
    ctx = field.ctx
    n = ctx.n
    out = np.empty(field.data.shape + (n,), dtype=object)
    for idx in np.ndindex(field.data.shape):
        for k in range(n):
            out[idx + (k,)] = ctx.dfiber(field.data[idx], k)
    mark = UPPER if _is_momentum(ctx) else LOWER
    return FieldValue(ctx, out, field.variance + (mark,))


def horizontal_derivative(field: FieldValue) -> FieldValue:
    """Covariant base derivative; appends a lower index.

    Velocity representation:
        D_m X = dX/dx^m - sum_ab v^a G^b_am dX/dv^b  (+ index terms)
    Momentum representation:
        D_m X = dX/dx^m + sum_ab p_a G^a_mb dX/dp_b  (+ index terms)
    where G is the connection in the matching representation; each
    upper index k contributes +sum_a G^k_ma X[..a..] and each lower
    index k contributes -sum_b G^b_mk X[..b..]."""
    ctx = field.ctx
    n = ctx.n
    conn = _connection_of(ctx)
    fiber = [ctx.seeds[n + a] for a in range(n)]
    momentum = _is_momentum(ctx)
    out = np.empty(field.data.shape + (n,), dtype=object)
    for idx in np.ndindex(field.data.shape):
        entry = field.data[idx]
        for m in range(n):
            acc = ctx.dx(entry, m)
            for a in range(n):
                for b in range(n):
                    if momentum:
                        acc = acc + fiber[a] * conn[a, m, b] * ctx.dfiber(entry, b)
                    else:
                        acc = acc - fiber[a] * conn[b, a, m] * ctx.dfiber(entry, b)
            for t, mark in enumerate(field.variance):
                k = idx[t]
                for a in range(n):
                    swapped = idx[:t] + (a,) + idx[t + 1:]
                    if mark == UPPER:
                        acc = acc + conn[k, m, a] * field.data[swapped]
                    else:
                        acc = acc - conn[a, m, k] * field.data[swapped]
            out[idx + (m,)] = acc
    return FieldValue(ctx, out, field.variance + (LOWER,))


def dynamic_curvature(ctx) -> np.ndarray:
    """Fiber derivative of the connection, sign-flipped.

    Layout [k][r][i][j]: in the velocity representation the entry is
    -dG^k_ir/dv^j (one upper, three lower indices); in the momentum
    representation it is -dG^k_ij/dp_r (upper pair k,r; lower pair i,j)."""
    n = ctx.n
    conn = _connection_of(ctx)
    out = np.empty((n, n, n, n), dtype=object)
    for k in range(n):
        for r in range(n):
            for i in range(n):
                for j in range(n):
                    if _is_momentum(ctx):
                        out[k, r, i, j] = -ctx.dfiber(conn[k, i, j], r)
                    else:
                        out[k, r, i, j] = -ctx.dfiber(conn[k, i, r], j)
    return out


def curvature(ctx) -> np.ndarray:
    """Curvature of the connection, layout [k][r][i][j], antisymmetric
    in the last index pair. The fiber-correction terms carry opposite
    signs in the two representations, matching the horizontal
    derivative they come from."""
    n = ctx.n
    conn = _connection_of(ctx)
    fiber = [ctx.seeds[n + a] for a in range(n)]
    momentum = _is_momentum(ctx)
    out = np.empty((n, n, n, n), dtype=object)
    for k in range(n):
        for r in range(n):
            for i in range(n):
                for j in range(n):
                    acc = ctx.dx(conn[k, j, r], i) - ctx.dx(conn[k, i, r], j)
                    for m in range(n):
                        acc = acc + conn[k, i, m] * conn[m, j, r]
                        acc = acc - conn[k, j, m] * conn[m, i, r]
                        for s in range(n):
                            lead = fiber[s]
                            if momentum:
                                acc = acc + lead * conn[s, m, i] * ctx.dfiber(conn[k, j, r], m)
                                acc = acc - lead * conn[s, m, j] * ctx.dfiber(conn[k, i, r], m)
                            else:
                                acc = acc - lead * conn[m, i, s] * ctx.dfiber(conn[k, j, r], m)
                                acc = acc + lead * conn[m, j, s] * ctx.dfiber(conn[k, i, r], m)
                    out[k, r, i, j] = acc
    return out


@dataclass(frozen=True)
class RelationCheck:
    """Two independently computed sides of a tensor identity."""

    lhs: np.ndarray
    rhs: np.ndarray
    deviation: float


def _relation(lhs: np.ndarray, rhs: np.ndarray) -> RelationCheck:
    scale = max(1.0, float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
    dev = float(np.max(np.abs(lhs - rhs))) / scale
    return RelationCheck(lhs, rhs, dev)


def _paired_contexts(sysdef: SystemDef, pt: PhasePoint):
    if pt.rep is not Rep.VELOCITY:
        raise MixedRepresentationError("paired evaluation starts from a velocity point")
    vctx = VContext(sysdef, pt.x, pt.fiber)
    image = legendre_forward(sysdef, pt)
    pctx = PContext(sysdef, image.x, image.fiber)
    return vctx, pctx


def dynamic_curvature_relation(sysdef: SystemDef, pt: PhasePoint) -> RelationCheck:
    """Momentum-representation dynamic curvature at the image point
    against the metric-contracted velocity-representation one."""
    vctx, pctx = _paired_contexts(sysdef, pt)
    lhs = jets.values(dynamic_curvature(pctx))
    dv = jets.values(dynamic_curvature(vctx))
    rhs = np.einsum("sr,kijs->krij", vctx.g_inv_values, dv)
    return _relation(lhs, rhs)


def curvature_relation(sysdef: SystemDef, pt: PhasePoint) -> RelationCheck:
    """Momentum-representation curvature at the image point against the
    velocity-representation curvature plus its fiber-map correction."""
    vctx, pctx = _paired_contexts(sysdef, pt)
    lhs = jets.values(curvature(pctx))
    rv = jets.values(curvature(vctx))
    dv = jets.values(dynamic_curvature(vctx))
    L_field = FieldValue(vctx, np.array(vctx.L, dtype=object), (LOWER,))
    grad_L = horizontal_derivative(L_field).values()       # [q, m]
    g_inv = vctx.g_inv_values
    corr = (np.einsum("qi,sq,kjrs->krij", grad_L, g_inv, dv)
            - np.einsum("qj,sq,kirs->krij", grad_L, g_inv, dv))
    return _relation(lhs, rv + corr)


# --- transport of derivatives through the fiber map ---------------------

def vertical_transport_velocity(sysdef, pt, func) -> float:
    """For a velocity-native scalar X: fiber derivative taken directly
    versus through the inverse map, dX/dv^k = sum_q g_qk d(X o inv)/dp_q."""
    vctx, pctx = _paired_contexts(sysdef, pt)
    n = sysdef.n
    direct = vctx.eval_native(func)
    lhs = direct.grad[n:]
    composed = pctx.eval_velocity_native(func)
    rhs = vctx.g_values.T @ composed.grad[n:]
    return _relation(lhs, rhs).deviation


def vertical_transport_momentum(sysdef, pt, func) -> float:
    """For a momentum-native scalar X: dX/dp_k = sum_q g^{qk} d(X o map)/dv^q."""
    vctx, pctx = _paired_contexts(sysdef, pt)
    n = sysdef.n
    direct = pctx.eval_native(func)
    lhs = direct.grad[n:]
    composed = vctx.eval_momentum_native(func)
    rhs = vctx.g_inv_values.T @ composed.grad[n:]
    return _relation(lhs, rhs).deviation


def horizontal_transport_momentum(sysdef, pt, components, variance=()) -> float:
    """For a momentum-native field X: covariant base derivative taken
    natively versus through the fiber map,
    D_m X = D_m(X o map) + sum_q D_m V^q d(X o map)/dv^q."""
    vctx, pctx = _paired_contexts(sysdef, pt)
    n = sysdef.n
    native = field_of(pctx, components, variance)
    lhs = horizontal_derivative(native).values()
    composed = field_of(vctx, components, variance,
                        evaluate=vctx.eval_momentum_native)
    base = horizontal_derivative(composed).values()
    v_field = FieldValue(pctx, np.array(pctx.V, dtype=object), (UPPER,))
    grad_v = horizontal_derivative(v_field).values()       # [q, m]
    rhs = base.copy()
    for idx in np.ndindex(composed.data.shape):
        vert = np.array([jets.value_of(vctx.dfiber(composed.data[idx], q))
                         for q in range(n)])
        for m in range(n):
            rhs[idx + (m,)] += grad_v[:, m] @ vert
    return _relation(lhs, rhs).deviation


def horizontal_transport_velocity(sysdef, pt, components, variance=()) -> float:
    """For a velocity-native field X: covariant base derivative taken
    natively versus through the inverse map,
    D_m X = D_m(X o inv) + sum_q D_m L_q d(X o inv)/dp_q."""
    vctx, pctx = _paired_contexts(sysdef, pt)
    n = sysdef.n
    native = field_of(vctx, components, variance)
    lhs = horizontal_derivative(native).values()
    composed = field_of(pctx, components, variance,
                        evaluate=pctx.eval_velocity_native)
    base = horizontal_derivative(composed).values()
    L_field = FieldValue(vctx, np.array(vctx.L, dtype=object), (LOWER,))
    grad_L = horizontal_derivative(L_field).values()       # [q, m]
    rhs = base.copy()
    for idx in np.ndindex(composed.data.shape):
        vert = np.array([jets.value_of(pctx.dfiber(composed.data[idx], q))
                         for q in range(n)])
        for m in range(n):
            rhs[idx + (m,)] += grad_L[:, m] @ vert
    return _relation(lhs, rhs).deviation
