"""Markov property, Sullivan bounds, mixing and Dobrushin coefficients.

All quantities are finite-volume: boundaries live in the master window and
sums over the lattice are truncated to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import settings
from ._tables import align, bits, check_seed, mask_of, popcount, submasks
from .consistency import Report, ReportBundle
from .errors import DomainError
from .lattice import Configuration, LatticePoint, NeighborhoodSystem, Window, as_point
from .measures import Distribution, FiniteField
from .reconstruct import lift_1f_to_f_product
from .specifications import (
    DSpecFinite,
    FSpec,
    OneFSpec,
    SpecSystem,
    dspec_from_field,
    fspec_from_field,
)


@dataclass
class RhoMatrix:
    """Ordered-pair coefficients keyed (target t, source s), diagonal absent.

    ``kind`` is "mixing" (partial boundaries, sup of one-point differences)
    or "dobrushin" (full boundaries, total variation).  A sampled matrix
    holds lower bounds of the true sups.
    """

    master: Window
    values: dict
    kind: str
    sampled: bool = False

    def __getitem__(self, key) -> float:
        t, s = key
        return self.values[(as_point(t), as_point(s))]

    def as_array(self) -> np.ndarray:
        n = len(self.master)
        out = np.full((n, n), np.nan)
        for (t, s), v in self.values.items():
            out[self.master.index(t), self.master.index(s)] = v
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sampled": self.sampled,
            "entries": [[list(t.coords), list(s.coords), v]
                        for (t, s), v in sorted(self.values.items())],
        }


def _config(spec, mask: int, idx) -> Configuration:
    symbols = spec.alphabet.symbols
    return Configuration(spec.window(mask), tuple(symbols[int(i)] for i in idx))


def _boundary_mask(spec, nbhd: NeighborhoodSystem, v: int) -> int:
    pts = set()
    for i in bits(v):
        pts.update(nbhd.neighbors(spec.master.points[i]).points)
    idx = [spec._index[p] for p in pts if p in spec._index]
    return mask_of(idx) & ~v


def _select(items, cost, budget: int, seed: int, name: str):
    """All items if their total cost fits the budget, else a seeded subset that does."""
    total = sum(cost(it) for it in items)
    if total <= budget:
        return items, False, total
    rng = check_seed(seed, name)
    chosen, spent = [], 0
    for i in rng.permutation(len(items)):
        c = cost(items[int(i)])
        if spent + c > budget and chosen:
            continue
        chosen.append(items[int(i)])
        spent += c
    return sorted(chosen), True, total


def _markov_report(name, spec, nbhd, pairs_to_check, tol, budget, seed) -> Report:
    k = spec.k
    items = []
    for v, s in pairs_to_check:
        b = _boundary_mask(spec, nbhd, v)
        if b & ~s:
            continue
        items.append((v, s, b))
    chosen, sampled, _ = _select(items, lambda it: k ** (popcount(it[0]) + popcount(it[1])),
                                 budget, seed, name)
    worst, where, count = 0.0, None, 0
    for v, s, b in chosen:
        full = spec.array(v, s)
        local = spec.array(v, b)
        ref = align(local, bits(b) + bits(v), bits(s) + bits(v))
        diff = np.abs(full - ref)
        count += diff.size
        j = int(np.argmax(diff))
        if diff.flat[j] > worst:
            worst = float(diff.flat[j])
            where = (v, s, b, np.unravel_index(j, diff.shape))
    witness = None
    if where is not None and worst > tol:
        v, s, b, idx = where
        ns = popcount(s)
        witness = {"V": spec.window(v), "boundary": spec.window(b),
                   "z": _config(spec, s, idx[:ns]), "x": _config(spec, v, idx[ns:])}
    return Report(name, worst <= tol, worst, count, witness=witness, sampled=sampled,
                  tolerance=tol)


def is_markov_fspec(Q: FSpec, nbhd: NeighborhoodSystem, *, tol: float = settings.TAU_EQ,
                    budget: int = settings.WORK_BUDGET, seed: int = 0) -> Report:
    """Q_V^z = Q_V^{z restricted to the boundary of V} whenever that boundary lies in s(z)."""
    if not isinstance(Q, FSpec):
        raise DomainError(f"expected an FSpec, got {type(Q).__name__}")
    return _markov_report("markov_f", Q, nbhd, sorted(Q.pairs()), tol, budget, seed)


def is_markov_1f(Q1: OneFSpec, nbhd: NeighborhoodSystem, *, tol: float = settings.TAU_EQ,
                 budget: int = settings.WORK_BUDGET, seed: int = 0) -> Report:
    if not isinstance(Q1, OneFSpec):
        raise DomainError(f"expected a OneFSpec, got {type(Q1).__name__}")
    return _markov_report("markov_1f", Q1, nbhd, sorted(Q1.pairs()), tol, budget, seed)


def is_markov_dspec(QD: DSpecFinite, nbhd: NeighborhoodSystem, *,
                    tol: float = settings.TAU_EQ) -> Report:
    """Full-boundary form: each q_V^z is constant in z off the boundary of V."""
    worst, where, count = 0.0, None, 0
    for v, s in sorted(QD.pairs()):
        b = _boundary_mask(QD, nbhd, v)
        table = QD.array(v, s)
        labels = bits(s)
        idx = tuple(slice(None) if i in bits(b) else slice(0, 1) for i in labels)
        diff = np.abs(table - table[idx])
        count += diff.size
        j = int(np.argmax(diff))
        if diff.flat[j] > worst:
            worst = float(diff.flat[j])
            where = (v, s, b, np.unravel_index(j, diff.shape))
    witness = None
    if where is not None and worst > tol:
        v, s, b, idx = where
        ns = popcount(s)
        witness = {"V": QD.window(v), "boundary": QD.window(b),
                   "z": _config(QD, s, idx[:ns]), "x": _config(QD, v, idx[ns:])}
    return Report("markov_d", worst <= tol, worst, count, witness=witness, tolerance=tol)


def _agreement(name: str, a: Report, b: Report, tol: float) -> Report:
    agree = a.passed == b.passed
    details = {a.check_name: a.passed, b.check_name: b.passed,
               f"{a.check_name}_worst": a.worst_violation,
               f"{b.check_name}_worst": b.worst_violation}
    witness = None if agree else {"verdicts": dict(details)}
    return Report(name, agree, 0.0 if agree else 1.0, 2, witness=witness,
                  sampled=a.sampled or b.sampled, tolerance=tol, details=details)


def markov_lift_preservation(Q1: OneFSpec, nbhd: NeighborhoodSystem, *,
                             tol: float = settings.TAU_EQ, budget: int = settings.WORK_BUDGET,
                             seed: int = 0) -> Report:
    """Passes when Q1 and its lift to an f-specification get the same Markov verdict."""
    r1 = is_markov_1f(Q1, nbhd, tol=tol, budget=budget, seed=seed)
    rf = is_markov_fspec(lift_1f_to_f_product(Q1), nbhd, tol=tol, budget=budget, seed=seed)
    return _agreement("markov_lift_preservation", r1, rf, tol)


def sullivan_check(P: FiniteField, *, tol: float = settings.TAU_NORM) -> Report:
    """min over full extensions <= Q_V^z(x) <= max over full extensions.

    Runs over every V, every partial boundary z (empty included) and every x.
    ``details`` counts the cases where both bounds hold strictly.
    """
    full = P.full_mask
    worst, where, count, strict = 0.0, None, 0, 0
    for v in range(1, full + 1):
        comp = full & ~v
        d = P.conditional_array(v, comp)  # (comp..., V...)
        for s in submasks(comp):
            if s == comp:
                continue
            w = comp & ~s
            target = bits(s) + bits(w) + bits(v)
            dd = align(d, bits(comp) + bits(v), target)
            w_axes = tuple(range(popcount(s), popcount(s) + popcount(w)))
            lo = dd.min(axis=w_axes)
            hi = dd.max(axis=w_axes)
            q = P.conditional_array(v, s)
            excess = np.maximum(lo - q, q - hi)
            count += q.size
            strict += int(np.count_nonzero((lo < q) & (q < hi)))
            j = int(np.argmax(excess))
            if excess.flat[j] > worst:
                worst = float(excess.flat[j])
                where = (v, s, np.unravel_index(j, q.shape))
    witness = None
    if worst > tol:
        v, s, idx = where
        ns = popcount(s)
        witness = {"V": P.window(v), "z": _config(P, s, idx[:ns]), "x": _config(P, v, idx[ns:])}
    return Report("sullivan", worst <= tol, worst, count, witness=witness, tolerance=tol,
                  details={"strict": strict})


def markov_equivalence_check(P: FiniteField, nbhd: NeighborhoodSystem, *,
                             tol: float = settings.TAU_EQ, sullivan_tol: float = settings.TAU_NORM,
                             budget: int = settings.WORK_BUDGET, seed: int = 0) -> ReportBundle:
    """The f-side and full-boundary Markov verdicts must agree; Sullivan bounds must hold.

    The bundle passes when both conditions hold, whatever the verdicts are.
    """
    rf = is_markov_fspec(fspec_from_field(P), nbhd, tol=tol, budget=budget, seed=seed)
    rd = is_markov_dspec(dspec_from_field(P), nbhd, tol=tol)
    agree = _agreement("markov_equivalence", rf, rd, tol)
    sul = sullivan_check(P, tol=sullivan_tol)
    return ReportBundle("markov_equivalence", [agree, sul],
                        {"markov_f": rf.to_dict(), "markov_d": rd.to_dict(),
                         "markov": rf.passed})


def mixing_rho_matrix(P: FiniteField, *, budget: int = settings.WORK_BUDGET,
                      seed: int = 0) -> RhoMatrix:
    """rho_ts = sup over partial w off {t, s}, y and v at s, x at t of |Q_t^{wy}(x) - Q_t^{wv}(x)|."""
    n, k = P.n, P.k
    full = P.full_mask
    items = [(t, s, w) for t in range(n) for s in range(n) if s != t
             for w in submasks(full & ~(1 << t) & ~(1 << s))]
    chosen, sampled, _ = _select(items, lambda it: k ** (popcount(it[2]) + 2), budget, seed,
                                 "mixing_rho_matrix")
    vals = {(t, s): 0.0 for t in range(n) for s in range(n) if s != t}
    for t, s, w in chosen:
        table = P.conditional_array(1 << t, w | (1 << s))  # (w u s..., t)
        ax = bits(w | (1 << s)).index(s)
        spread = float((table.max(axis=ax) - table.min(axis=ax)).max())
        if spread > vals[(t, s)]:
            vals[(t, s)] = spread
    pts = P.master.points
    return RhoMatrix(P.master, {(pts[t], pts[s]): v for (t, s), v in vals.items()},
                     "mixing", sampled)


def mixing_bound_check(P: FiniteField, V: Window, L: Window, *, rho: RhoMatrix | None = None,
                       tol: float = settings.TAU_EQ, budget: int = settings.WORK_BUDGET,
                       seed: int = 0) -> Report:
    """sup_{x, z} |P_V(x) - Q_V^z(x)| <= sum over t in V, s in L of rho_ts."""
    if len(V) == 0 or len(L) == 0:
        raise DomainError("both windows must be nonempty")
    if not V.isdisjoint(L):
        raise DomainError("V and L must be disjoint")
    vm, lm = P.mask(V), P.mask(L)
    if rho is None:
        rho = mixing_rho_matrix(P, budget=budget, seed=seed)
    q = P.conditional_array(vm, lm)  # (L..., V...)
    pv = P.marginal_array(vm)
    diff = np.abs(q - pv)
    j = int(np.argmax(diff))
    lhs = float(diff.flat[j])
    rhs = float(sum(rho[(t, s)] for t in V for s in L))
    excess = max(0.0, lhs - rhs)
    witness = None
    if excess > tol:
        idx = np.unravel_index(j, diff.shape)
        nl = len(L)
        witness = {"V": V, "L": L, "z": _config(P, lm, idx[:nl]), "x": _config(P, vm, idx[nl:])}
    return Report("mixing_bound", excess <= tol, excess, diff.size, witness=witness,
                  sampled=rho.sampled, tolerance=tol,
                  details={"lhs": lhs, "rhs": rhs})


def _dobrushin_terms(P: FiniteField, t: int) -> dict[int, float]:
    full = P.full_mask
    comp = full & ~(1 << t)
    table = P.conditional_array(1 << t, comp)  # (comp..., t)
    labels = bits(comp)
    out = {}
    for s in labels:
        ax = labels.index(s)
        a = np.expand_dims(table, ax)
        b = np.expand_dims(table, ax + 1)
        tv = 0.5 * np.abs(a - b).sum(axis=-1)
        out[s] = float(tv.max())
    return out


def dobrushin_coefficient(P: FiniteField, t: LatticePoint) -> float:
    """Finite-volume sum over s of the worst total-variation change of q_t under a flip at s.

    Boundaries are full configurations on the master window minus t.
    """
    return float(sum(_dobrushin_terms(P, P.site(t)).values()))


def dobrushin_rho_matrix(P: FiniteField) -> RhoMatrix:
    pts = P.master.points
    vals = {}
    for t in range(P.n):
        for s, v in _dobrushin_terms(P, t).items():
            vals[(pts[t], pts[s])] = v
    return RhoMatrix(P.master, vals, "dobrushin")


def dobrushin_summary(P: FiniteField) -> dict:
    """Per-point finite-volume coefficients and their maximum."""
    rho = dobrushin_rho_matrix(P)
    per = {}
    for (t, s), v in rho.values.items():
        per[t] = per.get(t, 0.0) + v
    return {"per_point": per, "max": max(per.values(), default=0.0), "rho": rho}


def positivity_check(obj) -> Report:
    """Smallest stored probability; passes iff it is strictly positive."""
    if isinstance(obj, FiniteField):
        arrays = [obj.array]
    elif isinstance(obj, Distribution):
        arrays = [obj.array]
    elif isinstance(obj, SpecSystem):
        arrays = [a for _, a in sorted(obj.tables(), key=lambda kv: kv[0])]
    elif isinstance(obj, dict):
        arrays = [np.asarray(a, dtype=float) for a in obj.values()]
    else:
        arrays = [np.asarray(obj, dtype=float)]
    mins = [float(a.min()) for a in arrays if a.size]
    lo = min(mins) if mins else float("inf")
    count = sum(a.size for a in arrays)
    passed = lo > 0
    tiny = np.finfo(float).tiny
    worst = 0.0 if passed else float(tiny - lo)
    witness = None if passed else {"min_entry": lo, "table": mins.index(lo)}
    return Report("positivity", passed, worst, count, witness=witness, tolerance=0.0,
                  details={"min_entry": lo})
