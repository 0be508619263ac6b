"""Rebuilding the field from a system, and lifting smaller systems to a full one.

Every reconstruction is computed from one default choice (probe, order,
anchor or reference configuration) and then recomputed from alternative
choices.  For a consistent input they must agree; a disagreement beyond
tolerance is reported as a :class:`ReconstructionError` carrying the two
choices that disagree.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import settings
from ._tables import align, bits, check_seed, mask_of, popcount, submasks, violation
from .errors import DomainError, ReconstructionError
from .lattice import Configuration
from .measures import FiniteField
from .specifications import FSpec, OneFSpec, PalmSpec, SpecSystem, check_size


@dataclass
class Reconstruction:
    """A reconstructed field with the evidence gathered while building it."""

    field: FiniteField
    method: str
    defect: float
    checked: int
    disagreement: float
    sampled: bool = False
    details: dict = field(default_factory=dict)


def _config(spec: SpecSystem, mask: int, idx) -> Configuration:
    symbols = spec.alphabet.symbols
    return Configuration(spec.window(mask), tuple(symbols[int(i)] for i in idx))


def _worst(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(violation(a, b))) if a.size else 0.0


def _finish(spec: SpecSystem, joint: np.ndarray, method: str, checked: int,
            disagreement: float, sampled: bool, tol_norm: float, **details) -> Reconstruction:
    total = float(joint.sum())
    defect = abs(total - 1.0)
    if defect > 100 * tol_norm:
        raise ReconstructionError(
            f"{method}: assembled joint sums to {total!r}; defect {defect:.3e} exceeds "
            f"{100 * tol_norm:.1e}",
            disagreement=defect,
        )
    P = FiniteField(spec.master, spec.alphabet, joint / total)
    return Reconstruction(P, method, defect, checked, disagreement, sampled, dict(details))


def _to_master_order(arr: np.ndarray, labels) -> np.ndarray:
    """Transpose an array with one axis per site into ascending site order."""
    return align(arr, tuple(labels), tuple(sorted(labels)))


# -- from the f-specification ---------------------------------------------------


def _probe_joints(Q: FSpec, imask: int) -> np.ndarray:
    """Joints reconstructed from every probe y on I, stacked along I's axes.

    P_R(x) = [q_R^y(x) / q_I^x(y)] / sum_a [q_R^y(a) / q_I^a(y)] with R the rest
    of the master window, then P(x y') = P_R(x) q_I^x(y').
    """
    full = Q.full_mask
    rmask = full & ~imask
    ni, nr = popcount(imask), popcount(rmask)
    a = Q.array(rmask, imask)  # (I..., R...)
    b = Q.array(imask, rmask)  # (R..., I...)
    b_y = np.moveaxis(b, tuple(range(nr, nr + ni)), tuple(range(ni)))  # (I..., R...)
    ratio = a / b_y
    r_axes = tuple(range(ni, ni + nr))
    p_r = ratio / ratio.sum(axis=r_axes, keepdims=True)
    joint = p_r.reshape(p_r.shape + (1,) * ni) * b  # (I_probe..., R..., I...)
    labels = bits(rmask) + bits(imask)
    # move the reconstructed axes into ascending site order behind the probe axes
    order = sorted(range(len(labels)), key=labels.__getitem__)
    return joint.transpose(tuple(range(ni)) + tuple(ni + o for o in order))


def reconstruct_fspec(Q: FSpec, *, tol: float = settings.TAU_EQ,
                      tol_norm: float = settings.TAU_NORM, seed: int = 0,
                      probe_limit: int = settings.PROBE_LIMIT,
                      probe_samples: int = settings.PROBE_SAMPLES) -> Reconstruction:
    """Field of an f-specification from boundary probes (I, y), cross-checked.

    The default probe is the first master point with the first symbol.  All
    probes are compared when there are at most ``probe_limit`` of them,
    otherwise ``probe_samples`` seeded ones.  Entries with empty boundary
    are not used.
    """
    if not isinstance(Q, FSpec):
        raise DomainError(f"expected an FSpec, got {type(Q).__name__}")
    n, k = Q.n, Q.k
    if n == 1:
        joint = np.array(Q.array(Q.full_mask, 0))
        return _finish(Q, joint, "single_site", 0, 0.0, False, tol_norm)
    full = Q.full_mask
    base = _probe_joints(Q, 1)[(0,)]
    probes = [m for m in range(1, full) if m != full]
    total = sum(k ** popcount(m) for m in probes)
    worst, checked, where = 0.0, 0, None
    sampled = total > probe_limit
    if not sampled:
        for imask in probes:
            joints = _probe_joints(Q, imask)
            ni = popcount(imask)
            v = violation(joints, base.reshape((1,) * ni + base.shape))
            v = v.reshape(k**ni, -1).max(axis=1)
            checked += v.size
            j = int(np.argmax(v))
            if v[j] > worst:
                worst, where = float(v[j]), (imask, np.unravel_index(j, (k,) * ni))
    else:
        rng = check_seed(seed, "reconstruct_fspec")
        for _ in range(probe_samples):
            imask = int(rng.integers(1, full))
            ni = popcount(imask)
            y = tuple(int(i) for i in rng.integers(k, size=ni))
            joint = _probe_joints(Q, imask)[y]
            v = _worst(joint, base)
            checked += 1
            if v > worst:
                worst, where = v, (imask, y)
    if worst > tol:
        imask, y = where
        raise ReconstructionError(
            f"probes disagree by {worst:.3e}",
            witness={"probe_a": (Q.window(1), _config(Q, 1, (0,))),
                     "probe_b": (Q.window(imask), _config(Q, imask, y))},
            disagreement=worst,
        )
    return _finish(Q, np.array(base), "fspec_probe", checked, worst, sampled, tol_norm)


def field_from_fspec(Q: FSpec, **kw) -> FiniteField:
    """The unique field compatible with a consistent f-specification."""
    return reconstruct_fspec(Q, **kw).field


# -- from the one-point specification ----------------------------------------------


def _site_marginal(Q: SpecSystem, t: int, s: int, y: int) -> np.ndarray:
    """P_t(u) = [q_t^y(u) / q_s^u(y)] normalized, probe y at s."""
    a = Q.array(1 << t, 1 << s)[y]
    b = Q.array(1 << s, 1 << t)[:, y]
    r = a / b
    return r / r.sum()


def _site_marginal_alt(Q: SpecSystem, t: int, s: int) -> np.ndarray:
    """P_t(u) = 1 / sum_b [q_s^u(b) / q_t^b(u)]."""
    qs = Q.array(1 << s, 1 << t)  # (u at t, b at s)
    qt = Q.array(1 << t, 1 << s)  # (b at s, u at t)
    return 1.0 / (qs / qt.T).sum(axis=1)


def _site_marginals(Q: SpecSystem, tol: float):
    """One marginal per site, checked across every probe and both formulas."""
    n, k = Q.n, Q.k
    marg, worst, checked, where = [], 0.0, 0, None
    for t in range(n):
        s0 = 1 if t == 0 else 0
        ref = _site_marginal(Q, t, s0, 0)
        for s in range(n):
            if s == t:
                continue
            cands = [(("probe", s, y), _site_marginal(Q, t, s, y)) for y in range(k)]
            cands.append((("inverse_sum", s), _site_marginal_alt(Q, t, s)))
            for tag, p in cands:
                v = _worst(p, ref)
                checked += 1
                if v > worst:
                    worst, where = v, (t, tag)
        marg.append(ref)
    if worst > tol:
        t, tag = where
        raise ReconstructionError(
            f"single-site marginal at {Q.master.points[t]} depends on the probe ({worst:.3e})",
            witness={"site": Q.master.points[t], "probe_a": ("probe", 1 if t == 0 else 0, 0),
                     "probe_b": tag},
            disagreement=worst,
        )
    return marg, worst, checked


def _chain(Q: SpecSystem, order, p_first: np.ndarray) -> np.ndarray:
    """P(x) = P_{t1}(x_{t1}) prod_j q_{tj}^{x_{t1} ... x_{t(j-1)}}(x_{tj}) along ``order``."""
    joint = p_first
    labels = (order[0],)
    for t in order[1:]:
        prev = mask_of(labels)
        table = Q.array(1 << t, prev)
        target = labels + (t,)
        joint = joint[..., None] * align(table, bits(prev) + (t,), target)
        labels = target
    return _to_master_order(joint, labels)


def _orders(n: int, seed: int, name: str):
    if n <= settings.ORDER_LIMIT:
        return list(itertools.permutations(range(n))), False
    rng = check_seed(seed, name)
    out = [tuple(range(n - 1, -1, -1))]
    for _ in range(settings.ORDER_SAMPLES - 1):
        out.append(tuple(int(i) for i in rng.permutation(n)))
    return out, True


def reconstruct_1fspec(Q1: OneFSpec, *, tol: float = settings.TAU_EQ,
                       tol_norm: float = settings.TAU_NORM, seed: int = 0) -> Reconstruction:
    """Field of a one-point specification by the chain rule, order-checked.

    Every enumeration order is compared for windows of up to
    ``settings.ORDER_LIMIT`` points, a seeded sample (always including the
    reversed order) beyond that.
    """
    if not isinstance(Q1, OneFSpec):
        raise DomainError(f"expected a OneFSpec, got {type(Q1).__name__}")
    n = Q1.n
    if n == 1:
        # no probe point exists; the only stored distribution is the field
        joint = np.array(Q1.array(1, 0))
        return _finish(Q1, joint, "single_site", 0, 0.0, False, tol_norm)
    marg, worst, checked = _site_marginals(Q1, tol)
    base = _chain(Q1, tuple(range(n)), marg[0])
    orders, sampled = _orders(n, seed, "reconstruct_1fspec")
    for order in orders:
        joint = _chain(Q1, order, marg[order[0]])
        v = _worst(joint, base)
        checked += 1
        if v > tol:
            raise ReconstructionError(
                f"enumeration orders disagree by {v:.3e}",
                witness={"order_a": [Q1.master.points[i] for i in range(n)],
                         "order_b": [Q1.master.points[i] for i in order]},
                disagreement=v,
            )
        worst = max(worst, v)
    return _finish(Q1, base, "onef_chain", checked, worst, sampled, tol_norm)


def field_from_1fspec(Q1: OneFSpec, **kw) -> FiniteField:
    return reconstruct_1fspec(Q1, **kw).field


# -- from the Palm specification ------------------------------------------------


def reconstruct_palm(Q: PalmSpec, *, tol: float = settings.TAU_EQ,
                     tol_norm: float = settings.TAU_NORM) -> Reconstruction:
    """P(x) = P_t(x_t) q_{rest}^{x_t}(x_rest), compared over every anchor t."""
    if not isinstance(Q, PalmSpec):
        raise DomainError(f"expected a PalmSpec, got {type(Q).__name__}")
    n = Q.n
    if n < 2:
        raise DomainError("a Palm specification needs at least two master points")
    marg, worst, checked = _site_marginals(Q, tol)
    full = Q.full_mask

    def anchored(t):
        rest = full & ~(1 << t)
        table = Q.array(rest, 1 << t)  # (t, rest...)
        joint = marg[t].reshape((-1,) + (1,) * popcount(rest)) * table
        return _to_master_order(joint, (t,) + bits(rest))

    base = anchored(0)
    for t in range(1, n):
        v = _worst(anchored(t), base)
        checked += 1
        if v > tol:
            raise ReconstructionError(
                f"anchors disagree by {v:.3e}",
                witness={"anchor_a": Q.master.points[0], "anchor_b": Q.master.points[t]},
                disagreement=v,
            )
        worst = max(worst, v)
    return _finish(Q, base, "palm_anchor", checked, worst, False, tol_norm)


def field_from_palm(Q: PalmSpec, **kw) -> FiniteField:
    return reconstruct_palm(Q, **kw).field


# -- lifts -----------------------------------------------------------------------


def _fspec_like(Q: SpecSystem, tables: dict) -> FSpec:
    return FSpec(Q.master, Q.alphabet, tables, validate=False)


def _verify_tables(name: str, Q: SpecSystem, a: dict, b: dict, tol: float, what: str):
    worst, where = 0.0, None
    for pair, arr in a.items():
        v = _worst(arr, b[pair])
        if v > worst:
            worst, where = v, pair
    if worst > tol:
        vm, sm = where
        raise ReconstructionError(
            f"{name}: {what} disagree by {worst:.3e}",
            witness={"V": Q.window(vm), "S": Q.window(sm)},
            disagreement=worst,
        )
    return worst


def lift_1f_to_f_product(Q1: OneFSpec, *, tol: float = settings.TAU_EQ, verify: bool = True,
                         max_entries: int = settings.MAX_TABLE_ENTRIES) -> FSpec:
    """q_V^z(x) = q_{t1}^z(x_{t1}) q_{t2}^{z x_{t1}}(x_{t2}) ... in canonical order.

    With ``verify`` the same product is rebuilt in the reversed order
    (last point drawn first) and compared entry by entry.
    """
    if not isinstance(Q1, OneFSpec):
        raise DomainError(f"expected a OneFSpec, got {type(Q1).__name__}")
    check_size(FSpec, Q1.n, Q1.k, max_entries=max_entries)
    pairs = sorted(FSpec.pairs_for(Q1.n), key=lambda p: popcount(p[0]))

    forward: dict = {}
    for v, s in pairs:
        if popcount(v) == 1:
            forward[(v, s)] = Q1.array(v, s)
            continue
        m = bits(v)[-1]
        rest = v & ~(1 << m)
        head = forward[(rest, s)]  # (S..., rest...)
        last = Q1.array(1 << m, s | rest)  # (S u rest..., m)
        target = bits(s) + bits(v)
        forward[(v, s)] = head[..., None] * align(last, bits(s | rest) + (m,), target)
    out = _fspec_like(Q1, forward)
    if verify:
        backward: dict = {}
        for v, s in pairs:
            if popcount(v) == 1:
                backward[(v, s)] = Q1.array(v, s)
                continue
            m = bits(v)[-1]
            rest = v & ~(1 << m)
            first = Q1.array(1 << m, s)  # (S..., m)
            tail = backward[(rest, s | (1 << m))]  # (S u m..., rest...)
            target = bits(s) + bits(v)
            backward[(v, s)] = (align(first, bits(s) + (m,), target)
                                * align(tail, bits(s | (1 << m)) + bits(rest), target))
        _verify_tables("lift_1f_to_f_product", Q1, forward, backward, tol, "enumeration orders")
    return out


def _ratio_table(Q1: OneFSpec, v: int, s: int, u: tuple[int, ...]) -> np.ndarray:
    """prod_j q_{tj}^{z (xu)_j}(x_j) / q_{tj}^{z (xu)_j}(u_j), normalized over x."""
    ts = bits(v)
    target = bits(s) + ts
    acc = None
    for j, t in enumerate(ts):
        cond = s | (v & ~(1 << t))
        table = Q1.array(1 << t, cond)  # (cond..., t)
        labels = bits(cond)
        idx = tuple(u[ts.index(i)] if i in ts[j + 1:] else slice(None) for i in labels)
        sub = table[idx + (slice(None),)]
        kept = tuple(i for i in labels if i not in ts[j + 1:])
        num = align(sub, kept + (t,), target)
        den = align(sub[..., u[j]], kept, target)
        term = num / den
        acc = term if acc is None else acc * term
    acc = np.broadcast_to(acc, (Q1.k,) * len(target))
    v_axes = tuple(range(popcount(s), len(target)))
    return acc / acc.sum(axis=v_axes, keepdims=True)


def _recurrent_tables(Q1: OneFSpec, pairs, u_of) -> dict:
    """q_{s u V}^z(yx) proportional to q_s^{zu}(y) q_V^{zy}(x) / q_V^{zy}(u), s the first point."""
    out: dict = {}
    for v, s in pairs:
        if popcount(v) == 1:
            out[(v, s)] = np.array(Q1.array(v, s))
            continue
        first = bits(v)[0]
        rest = v & ~(1 << first)
        u = u_of(rest)
        head = Q1.array(1 << first, s | rest)  # (S u rest..., first)
        labels = bits(s | rest)
        idx = tuple(u[bits(rest).index(i)] if rest >> i & 1 else slice(None) for i in labels)
        head = head[idx + (slice(None),)]  # (S..., first)
        tail = out[(rest, s | (1 << first))]  # (S u first..., rest...)
        tail_u = tail[(Ellipsis,) + u] if u else tail
        target = bits(s) + bits(v)
        lab_sf = bits(s | (1 << first))
        w = (align(head, bits(s) + (first,), target)
             * align(tail, lab_sf + bits(rest), target)
             / align(tail_u, lab_sf, target))
        v_axes = tuple(range(popcount(s), len(target)))
        out[(v, s)] = w / w.sum(axis=v_axes, keepdims=True)
    return out


def lift_1f_to_f_ratio(Q1: OneFSpec, *, u=None, recurrent: bool = False,
                       tol: float = settings.TAU_EQ, verify: bool = True,
                       max_entries: int = settings.MAX_TABLE_ENTRIES) -> FSpec:
    """Lift by normalized ratios against a reference configuration u.

    ``u`` is a symbol used at every point (default: the first symbol).
    ``recurrent`` builds each table from the one on V minus its first
    point instead of from one-point entries only.  With ``verify`` the
    tables are recomputed with the last symbol as reference and compared.
    """
    if not isinstance(Q1, OneFSpec):
        raise DomainError(f"expected a OneFSpec, got {type(Q1).__name__}")
    check_size(FSpec, Q1.n, Q1.k, max_entries=max_entries)
    pairs = sorted(FSpec.pairs_for(Q1.n), key=lambda p: popcount(p[0]))
    ui = 0 if u is None else Q1.alphabet.index(u)

    def build(ref: int) -> dict:
        if recurrent:
            return _recurrent_tables(Q1, pairs, lambda m: (ref,) * popcount(m))
        # for one point the ratio reduces to the input table itself
        return {(v, s): np.array(Q1.array(v, s)) if popcount(v) == 1
                else _ratio_table(Q1, v, s, (ref,) * popcount(v)) for v, s in pairs}

    tables = build(ui)
    if verify:
        alt = Q1.k - 1 if ui != Q1.k - 1 else 0
        _verify_tables("lift_1f_to_f_ratio", Q1, tables, build(alt), tol,
                       "reference configurations")
    return _fspec_like(Q1, tables)


def lift_palm_to_f(Q: PalmSpec, *, tol: float = settings.TAU_EQ, verify: bool = True,
                   max_entries: int = settings.MAX_TABLE_ENTRIES) -> FSpec:
    """q_V^z(x) = q_{V u L'}^{z_t}(x z_{L'}) / q_{L'}^{z_t}(z_{L'}) with L' = s(z) minus t.

    The anchor t is the first point of s(z); ``verify`` recomputes with the
    last point and compares.  Entries with empty boundary are the
    marginals of the field reconstructed from the Palm system.
    """
    if not isinstance(Q, PalmSpec):
        raise DomainError(f"expected a PalmSpec, got {type(Q).__name__}")
    check_size(FSpec, Q.n, Q.k, max_entries=max_entries)
    P = field_from_palm(Q, tol=tol)

    def anchored(v, s, t):
        rest = s & ~(1 << t)
        target = bits(s) + bits(v)
        if not rest:
            return np.array(Q.array(v, s))
        num = Q.array(v | rest, 1 << t)
        den = Q.array(rest, 1 << t)
        return (align(num, (t,) + bits(v | rest), target)
                / align(den, (t,) + bits(rest), target))

    tables, alt = {}, {}
    for v, s in FSpec.pairs_for(Q.n):
        if s == 0:
            tables[(v, s)] = P.marginal_array(v)
            continue
        tables[(v, s)] = anchored(v, s, bits(s)[0])
        if verify and popcount(s) > 1:
            alt[(v, s)] = anchored(v, s, bits(s)[-1])
    if verify:
        _verify_tables("lift_palm_to_f", Q, {p: tables[p] for p in alt}, alt, tol, "anchors")
    return _fspec_like(Q, tables)


# -- DLR residual ---------------------------------------------------------------


def dlr_residual(Q: FSpec, P: FiniteField) -> float:
    """max |P_V(x) - sum_z q_V^z(x) P_L(z)| over disjoint V, L (L may be empty) and x."""
    if Q.master != P.master or Q.alphabet != P.alphabet:
        raise DomainError("specification and field live on different spaces")
    worst = 0.0
    full = Q.full_mask
    for v in range(1, full + 1):
        pv = P.marginal_array(v)
        for lam in submasks(full & ~v):
            table = Q.array(v, lam)
            nl = popcount(lam)
            mixed = np.tensordot(P.marginal_array(lam), table, axes=nl) if nl else table
            worst = max(worst, float(np.max(np.abs(mixed - pv))))
    return worst
