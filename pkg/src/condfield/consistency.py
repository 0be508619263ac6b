"""Numerical verification of the consistency identities of each system.

Every identity is declared once as an :class:`_Identity`: the site sets it
quantifies over (roles), the configuration variables living on those sets,
and two callables building the left and right sides from table lookups.
A single evaluator then walks all admissible blocks of disjoint sets,
broadcasting each side over every configuration at once.

Table lookups are written as ``c.q("x@V y@I", "z@Z")``, read as
q_{V u I}^{z}(xy): each token binds a variable to the sites of a role.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import settings
from ._tables import Role, bits, plan_blocks, popcount, violation
from .errors import DomainError
from .lattice import Configuration, Window
from .specifications import (
    DSpecFinite,
    FSpec,
    OneDSpecFinite,
    OneFSpec,
    PalmSpec,
    SpecSystem,
)

# largest broadcast grid evaluated in one numpy pass
CHUNK = 2**22


@dataclass
class Report:
    check_name: str
    passed: bool
    worst_violation: float
    count_checked: int
    witness: dict | None = None
    sampled: bool = False
    tolerance: float = settings.TAU_EQ
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check": self.check_name,
            "passed": self.passed,
            "worst_violation": self.worst_violation,
            "count_checked": self.count_checked,
            "sampled": self.sampled,
            "tolerance": self.tolerance,
            "witness": witness_to_json(self.witness),
            "details": self.details,
        }

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        extra = " (sampled)" if self.sampled else ""
        return (f"{status} {self.check_name}: worst={self.worst_violation:.3e} "
                f"over {self.count_checked} evaluations{extra}")


@dataclass
class ReportBundle:
    name: str
    reports: list[Report]
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def worst_violation(self) -> float:
        return max((r.worst_violation for r in self.reports), default=0.0)

    @property
    def sampled(self) -> bool:
        return any(r.sampled for r in self.reports)

    @property
    def count_checked(self) -> int:
        return sum(r.count_checked for r in self.reports)

    def __getitem__(self, name: str) -> Report:
        for r in self.reports:
            if r.check_name == name:
                return r
        raise KeyError(name)

    def __iter__(self) -> Iterator[Report]:
        return iter(self.reports)

    def __len__(self):
        return len(self.reports)


def witness_to_json(w):
    """Windows and configurations become coordinate lists."""
    if w is None:
        return None
    out = {}
    for key, val in w.items():
        if isinstance(val, Window):
            out[key] = [list(p.coords) for p in val]
        elif isinstance(val, Configuration):
            out[key] = [[list(p.coords), v] for p, v in val.items()]
        elif isinstance(val, (np.floating, np.integer)):
            out[key] = val.item()
        else:
            out[key] = val
    return out


# -- identity engine ----------------------------------------------------------


@dataclass(frozen=True)
class _Identity:
    name: str
    roles: tuple[tuple[str, Role], ...]
    free: tuple[tuple[str, str], ...]
    lhs: Callable
    rhs: Callable
    bound: tuple[tuple[str, str], ...] = ()
    remainder: str | None = None  # role that takes every site left over


@functools.lru_cache(maxsize=None)
def _tokens(spec: str) -> tuple[tuple[str, str], ...]:
    return tuple(tuple(tok.split("@")) for tok in spec.split())


class _Ctx:
    def __init__(self, spec: SpecSystem, masks: dict, target: list, fixed: tuple):
        self.spec = spec
        self.masks = masks
        self.target = target
        self.pos = {lab: i for i, lab in enumerate(target)}
        self.fixed = fixed

    def _bind(self, tokens: str, sites: dict) -> int:
        m = 0
        for var, role in _tokens(tokens):
            rm = self.masks[role]
            m |= rm
            for i in bits(rm):
                sites[i] = self.pos[(var, i)]
        return m

    def q(self, v: str, s: str = "") -> np.ndarray:
        """The table q_V^S with its axes placed on the target grid."""
        where: dict[int, int] = {}
        vm = self._bind(v, where)
        sm = self._bind(s, where)
        arr = self.spec.array(vm, sm)
        axes = [where[i] for i in bits(sm)] + [where[i] for i in bits(vm)]
        order = sorted(range(len(axes)), key=axes.__getitem__)
        if order != list(range(len(axes))):
            arr = arr.transpose(order)
        shape = [1] * len(self.target)
        for ax in axes:
            shape[ax] = self.spec.k
        a = arr.reshape(shape)
        if self.fixed:
            idx = tuple(
                slice(j, j + 1) if a.shape[ax] > 1 else slice(None)
                for ax, j in enumerate(self.fixed)
            )
            a = a[idx]
        return a

    def sum(self, arr: np.ndarray, variables: str) -> np.ndarray:
        names = set(variables.split())
        axes = tuple(ax for ax, (var, _) in enumerate(self.target) if var in names)
        return arr.sum(axis=axes, keepdims=True)


class _Worst:
    """Running maximum of the residual, keeping the first maximal witness."""

    def __init__(self):
        self.value = -1.0
        self.where = None
        self.count = 0

    def update(self, viol, lhs, rhs, masks, target, prefix):
        self.count += viol.size
        if viol.size == 0:
            return
        flat = int(np.argmax(viol))
        v = float(viol.flat[flat])
        if v > self.value:
            idx = np.unravel_index(flat, viol.shape)
            full = tuple(prefix) + tuple(int(i) for i in idx[len(prefix):])
            self.value = v
            self.where = (dict(masks), list(target), full,
                          float(lhs.flat[flat]), float(rhs.flat[flat]))


def _decode(spec: SpecSystem, ident: _Identity, where) -> dict:
    masks, target, full, lhs, rhs = where
    out: dict = {}
    for role, _ in ident.roles:
        out[role] = spec.window(masks[role])
    if ident.remainder:
        out[ident.remainder] = spec.window(masks[ident.remainder])
    symbols = spec.alphabet.symbols
    for var, role in ident.free:
        vals = {}
        for ax, (tv, site) in enumerate(target):
            if tv == var:
                vals[spec.master.points[site]] = symbols[full[ax] if ax < len(full) else 0]
        out[var] = Configuration.from_mapping(vals)
    out["lhs"] = lhs
    out["rhs"] = rhs
    return out


def _block_cost(ident: _Identity, k: int):
    names = [r for r, _ in ident.roles] + ([ident.remainder] if ident.remainder else [])
    uses = [role for _, role in ident.free + ident.bound]

    def cost(sizes):
        size = dict(zip(names, sizes))
        return k ** sum(size[r] for r in uses)

    return cost


def run_identity(spec: SpecSystem, ident: _Identity, *, tol: float = settings.TAU_EQ,
                 budget: int = settings.WORK_BUDGET, seed: int = 0) -> Report:
    n, k = spec.n, spec.k
    plan = plan_blocks(
        n, [r for _, r in ident.roles], _block_cost(ident, k),
        budget=budget, seed=seed, name=ident.name, complement=ident.remainder is not None,
    )
    names = [r for r, _ in ident.roles] + ([ident.remainder] if ident.remainder else [])
    free_vars = {v for v, _ in ident.free}
    worst = _Worst()
    try:
        for block in plan.blocks:
            masks = dict(zip(names, block))
            target = [(var, i) for var, role in ident.free + ident.bound
                      for i in bits(masks[role])]
            _eval_block(spec, ident, masks, target, free_vars, worst)
    except KeyError as exc:
        return Report(ident.name, False, float("inf"), worst.count,
                      witness={"missing": str(exc)}, sampled=plan.sampled, tolerance=tol,
                      details={"structural": f"table lookup failed: {exc}"})
    value = max(worst.value, 0.0)
    passed = value <= tol
    witness = _decode(spec, ident, worst.where) if worst.where is not None else None
    details = {"blocks": len(plan.blocks), "total_work": plan.total_work}
    if plan.sampled:
        details["planned_work"] = plan.planned_work
    return Report(ident.name, passed, value, worst.count, witness=witness,
                  sampled=plan.sampled, tolerance=tol, details=details)


def _eval_block(spec, ident, masks, target, free_vars, worst):
    k = spec.k
    nfree = sum(1 for var, _ in target if var in free_vars)
    p = 0
    while p < nfree and k ** (len(target) - p) > CHUNK:
        p += 1
    for prefix in itertools.product(range(k), repeat=p):
        ctx = _Ctx(spec, masks, target, prefix)
        lhs, rhs = np.broadcast_arrays(ident.lhs(ctx), ident.rhs(ctx))
        worst.update(violation(lhs, rhs), lhs, rhs, masks, target, prefix)


# -- identity catalogue -------------------------------------------------------

ANY = Role(0)
SOME = Role(1)
ONE = Role(1, 1)


def _four_by_four(name, a, b):
    """q_a^{zy}(x) q_b^{zx}(v) q_a^{zv}(u) q_b^{zu}(y) = q_a^{zy}(u) q_b^{zu}(v) q_a^{zv}(x) q_b^{zx}(y)"""
    xa, ua, yb, vb = f"x@{a}", f"u@{a}", f"y@{b}", f"v@{b}"

    def lhs(c):
        return (c.q(xa, f"z@Z {yb}") * c.q(vb, f"z@Z {xa}")
                * c.q(ua, f"z@Z {vb}") * c.q(yb, f"z@Z {ua}"))

    def rhs(c):
        return (c.q(ua, f"z@Z {yb}") * c.q(vb, f"z@Z {ua}")
                * c.q(xa, f"z@Z {vb}") * c.q(yb, f"z@Z {xa}"))

    return lhs, rhs


def _three_by_three(a, b, j):
    """q_a^w(x) q_b^x(y) q_j^y(w) = q_b^w(y) q_a^y(x) q_j^x(w)"""
    x, y, w = f"x@{a}", f"y@{b}", f"w@{j}"

    def lhs(c):
        return c.q(x, w) * c.q(y, x) * c.q(w, y)

    def rhs(c):
        return c.q(y, w) * c.q(x, y) * c.q(w, x)

    return lhs, rhs


def _ratio_rhs(c):
    num = c.q("x@V", "z@Z y@I") / c.q("y@I", "z@Z x@V")
    den = c.sum(c.q("a@V", "z@Z y@I") / c.q("y@I", "z@Z a@V"), "a")
    return num / den


FSPEC_CONSISTENCY = _Identity(
    "fspec_consistency",
    roles=(("V", SOME), ("I", SOME), ("Z", ANY)),
    free=(("z", "Z"), ("x", "V"), ("y", "I")),
    lhs=lambda c: c.q("x@V y@I", "z@Z"),
    rhs=lambda c: c.q("x@V", "z@Z") * c.q("y@I", "z@Z x@V"),
)

FSPEC_DERIVED = (
    _Identity(
        "four_by_four",
        roles=(("V", SOME), ("I", SOME), ("Z", ANY)),
        free=(("z", "Z"), ("x", "V"), ("u", "V"), ("y", "I"), ("v", "I")),
        lhs=_four_by_four("four_by_four", "V", "I")[0],
        rhs=_four_by_four("four_by_four", "V", "I")[1],
    ),
    _Identity(
        "three_by_three",
        roles=(("V", SOME), ("I", SOME), ("J", SOME)),
        free=(("x", "V"), ("y", "I"), ("w", "J")),
        lhs=_three_by_three("V", "I", "J")[0],
        rhs=_three_by_three("V", "I", "J")[1],
    ),
    _Identity(
        "fraction",
        roles=(("V", SOME), ("I", SOME), ("L", SOME)),
        free=(("x", "V"), ("y", "I"), ("z", "L")),
        lhs=lambda c: c.q("x@V z@L", "y@I") / c.q("y@I z@L", "x@V"),
        rhs=lambda c: c.q("x@V", "y@I") / c.q("y@I", "x@V"),
    ),
    _Identity(
        "exchange",
        roles=(("V", SOME), ("I", SOME), ("Z", ANY)),
        free=(("z", "Z"), ("x", "V"), ("y", "I")),
        lhs=lambda c: c.q("x@V", "z@Z") * c.q("y@I", "z@Z x@V"),
        rhs=lambda c: c.q("y@I", "z@Z") * c.q("x@V", "z@Z y@I"),
    ),
    _Identity(
        "fixed_boundary_kolmogorov",
        roles=(("V", SOME), ("I", SOME), ("Z", ANY)),
        free=(("z", "Z"), ("x", "V")),
        bound=(("y", "I"),),
        lhs=lambda c: c.sum(c.q("x@V y@I", "z@Z"), "y"),
        rhs=lambda c: c.q("x@V", "z@Z"),
    ),
    _Identity(
        "cross_exchange",
        roles=(("V", SOME), ("I", SOME), ("Z", ANY)),
        free=(("z", "Z"), ("x", "V"), ("y", "I"), ("v", "I")),
        lhs=lambda c: c.q("x@V y@I", "z@Z") * c.q("v@I", "z@Z x@V"),
        rhs=lambda c: c.q("x@V v@I", "z@Z") * c.q("y@I", "z@Z x@V"),
    ),
    _Identity(
        "single_site_exchange",
        roles=(("V", SOME), ("S", ONE), ("Z", ANY)),
        free=(("z", "Z"), ("x", "V"), ("u", "V"), ("y", "S")),
        lhs=lambda c: c.q("x@V y@S", "z@Z") * c.q("u@V", "z@Z y@S"),
        rhs=lambda c: c.q("u@V y@S", "z@Z") * c.q("x@V", "z@Z y@S"),
    ),
    _Identity(
        "boundary_reduction",
        roles=(("V", SOME), ("I", SOME), ("Z", ANY)),
        free=(("z", "Z"), ("x", "V"), ("y", "I")),
        bound=(("a", "V"),),
        lhs=lambda c: c.q("x@V", "z@Z"),
        rhs=_ratio_rhs,
    ),
)

ONEF_CONSISTENCY = _Identity(
    "onef_consistency",
    roles=(("T", ONE), ("S", ONE), ("Z", ANY)),
    free=(("z", "Z"), ("x", "T"), ("y", "S")),
    lhs=lambda c: c.q("x@T", "z@Z") * c.q("y@S", "z@Z x@T"),
    rhs=lambda c: c.q("y@S", "z@Z") * c.q("x@T", "z@Z y@S"),
)

ONEF_DERIVED = (
    _Identity(
        "onef_four_by_four",
        roles=(("T", ONE), ("S", ONE), ("Z", ANY)),
        free=(("z", "Z"), ("x", "T"), ("u", "T"), ("y", "S"), ("v", "S")),
        lhs=_four_by_four("onef_four_by_four", "T", "S")[0],
        rhs=_four_by_four("onef_four_by_four", "T", "S")[1],
    ),
    _Identity(
        "onef_three_by_three",
        roles=(("T", ONE), ("S", ONE), ("R", ONE)),
        free=(("x", "T"), ("y", "S"), ("w", "R")),
        lhs=_three_by_three("T", "S", "R")[0],
        rhs=_three_by_three("T", "S", "R")[1],
    ),
)

PALM_IDENTITIES = (
    _Identity(
        "palm_exchange",
        roles=(("T", ONE), ("S", ONE), ("V", ANY)),
        free=(("x", "T"), ("y", "S"), ("u", "V")),
        lhs=lambda c: c.q("x@T", "y@S") * c.q("y@S u@V", "x@T"),
        rhs=lambda c: c.q("y@S", "x@T") * c.q("x@T u@V", "y@S"),
    ),
    _Identity(
        "palm_kolmogorov",
        roles=(("V", SOME), ("I", SOME), ("Z", ONE)),
        free=(("z", "Z"), ("x", "V")),
        bound=(("y", "I"),),
        lhs=lambda c: c.sum(c.q("x@V y@I", "z@Z"), "y"),
        rhs=lambda c: c.q("x@V", "z@Z"),
    ),
)

DSPEC_IDENTITIES = (
    _Identity(
        "dspec_consistency",
        roles=(("V", SOME), ("I", SOME)),
        remainder="Z",
        free=(("z", "Z"), ("x", "V"), ("y", "I")),
        bound=(("b", "I"),),
        lhs=lambda c: c.q("x@V y@I", "z@Z"),
        rhs=lambda c: c.q("y@I", "z@Z x@V") * c.sum(c.q("x@V b@I", "z@Z"), "b"),
    ),
    _Identity(
        "dspec_exchange",
        roles=(("V", SOME), ("I", SOME)),
        remainder="Z",
        free=(("z", "Z"), ("x", "V"), ("u", "V"), ("y", "I")),
        lhs=lambda c: c.q("x@V y@I", "z@Z") * c.q("u@V", "z@Z y@I"),
        rhs=lambda c: c.q("u@V y@I", "z@Z") * c.q("x@V", "z@Z y@I"),
    ),
)

ONED_CONSISTENCY = _Identity(
    "oned_consistency",
    roles=(("T", ONE), ("S", ONE)),
    remainder="Z",
    free=(("z", "Z"), ("x", "T"), ("u", "T"), ("y", "S"), ("v", "S")),
    lhs=_four_by_four("oned_consistency", "T", "S")[0],
    rhs=_four_by_four("oned_consistency", "T", "S")[1],
)


# -- public checkers ----------------------------------------------------------


def _require(spec, cls):
    if not isinstance(spec, cls):
        raise DomainError(f"expected a {cls.__name__}, got {type(spec).__name__}")


def check_fspec(Q: FSpec, *, tol: float = settings.TAU_EQ,
                budget: int = settings.WORK_BUDGET, seed: int = 0) -> Report:
    """q_{V u I}^z(xy) = q_V^z(x) q_I^{zx}(y) for all disjoint V, I and every z, empty included."""
    _require(Q, FSpec)
    return run_identity(Q, FSPEC_CONSISTENCY, tol=tol, budget=budget, seed=seed)


def check_fspec_derived(Q: FSpec, *, base: Report | None = None, tol: float = settings.TAU_EQ,
                        budget: int = settings.WORK_BUDGET, seed: int = 0) -> ReportBundle:
    """Identities implied by f-consistency, each over its full quantifier range.

    When the base consistency check fails the sub-reports are still
    produced but marked as derivative.
    """
    _require(Q, FSpec)
    if base is None:
        base = check_fspec(Q, tol=tol, budget=budget, seed=seed)
    reports = [run_identity(Q, ident, tol=tol, budget=budget, seed=seed)
               for ident in FSPEC_DERIVED]
    if not base.passed:
        for r in reports:
            r.details["derivative"] = True
    return ReportBundle("fspec_derived", reports, {"base_passed": base.passed})


def check_1fspec(Q1: OneFSpec, *, tol: float = settings.TAU_EQ,
                 budget: int = settings.WORK_BUDGET, seed: int = 0) -> Report:
    """q_t^z(x) q_s^{zx}(y) = q_s^z(y) q_t^{zy}(x) for t != s and every z off {t, s}."""
    _require(Q1, OneFSpec)
    return run_identity(Q1, ONEF_CONSISTENCY, tol=tol, budget=budget, seed=seed)


def check_1f_derived(Q1: OneFSpec, *, base: Report | None = None,
                     tol: float = settings.TAU_EQ, budget: int = settings.WORK_BUDGET,
                     seed: int = 0) -> ReportBundle:
    _require(Q1, OneFSpec)
    if base is None:
        base = check_1fspec(Q1, tol=tol, budget=budget, seed=seed)
    reports = [run_identity(Q1, ident, tol=tol, budget=budget, seed=seed)
               for ident in ONEF_DERIVED]
    if not base.passed:
        for r in reports:
            r.details["derivative"] = True
    return ReportBundle("onef_derived", reports, {"base_passed": base.passed})


def check_palm(Q: PalmSpec, *, tol: float = settings.TAU_EQ,
               budget: int = settings.WORK_BUDGET, seed: int = 0) -> ReportBundle:
    """The exchange identity across two anchors, and summing out under a fixed anchor."""
    _require(Q, PalmSpec)
    return ReportBundle("palm", [run_identity(Q, ident, tol=tol, budget=budget, seed=seed)
                                 for ident in PALM_IDENTITIES])


def check_dspec(QD: DSpecFinite, *, tol: float = settings.TAU_EQ,
                budget: int = settings.WORK_BUDGET, seed: int = 0) -> ReportBundle:
    """Full-complement consistency, in its main form and its exchange form."""
    _require(QD, DSpecFinite)
    return ReportBundle("dspec", [run_identity(QD, ident, tol=tol, budget=budget, seed=seed)
                                  for ident in DSPEC_IDENTITIES])


def check_1dspec(Q1D: OneDSpecFinite | DSpecFinite, *, tol: float = settings.TAU_EQ,
                 budget: int = settings.WORK_BUDGET, seed: int = 0) -> Report:
    """The eight-factor identity for one-point kernels with full boundaries."""
    if isinstance(Q1D, DSpecFinite):
        Q1D = Q1D.one_point()
    _require(Q1D, OneDSpecFinite)
    return run_identity(Q1D, ONED_CONSISTENCY, tol=tol, budget=budget, seed=seed)


CHECKERS = {
    "f": lambda Q, **kw: ReportBundle("f", [check_fspec(Q, **kw)]),
    "1f": lambda Q, **kw: ReportBundle("1f", [check_1fspec(Q, **kw)]),
    "palm": check_palm,
    "d": check_dspec,
    "1d": lambda Q, **kw: ReportBundle("1d", [check_1dspec(Q, **kw)]),
}


def check_system(spec: SpecSystem, *, tol: float = settings.TAU_EQ,
                 budget: int = settings.WORK_BUDGET, seed: int = 0) -> ReportBundle:
    """Run the consistency checker that matches the system's kind."""
    return CHECKERS[spec.kind](spec, tol=tol, budget=budget, seed=seed)


# -- perturbation harness -----------------------------------------------------


def perturb(spec: SpecSystem, *, key: tuple[int, int] | None = None, row: int | None = None,
            entry: int | None = None, delta: float = 0.05, seed: int = 0):
    """Add ``delta`` to one stored probability and renormalize its distribution.

    ``key`` is a (V mask, S mask) pair, ``row`` the index of z among the
    boundary configurations and ``entry`` the index of x; unspecified parts
    are drawn from a generator seeded by ``seed``.  Returns the perturbed
    system and a description of the touched entry.
    """
    rng = np.random.default_rng(seed)
    pairs = sorted(spec.pairs())
    if key is None:
        key = pairs[int(rng.integers(len(pairs)))]
    v, s = key
    arr = np.array(spec.array(v, s), dtype=float)
    k = spec.k
    rows = arr.reshape(k ** popcount(s), k ** popcount(v))
    if row is None:
        row = int(rng.integers(rows.shape[0]))
    if entry is None:
        entry = int(rng.integers(rows.shape[1]))
    rows[row, entry] += delta
    rows[row] /= rows[row].sum()
    new = spec.replace({key: rows.reshape(arr.shape)})
    symbols = spec.alphabet.symbols
    V, S = spec.window(v), spec.window(s)
    zvals = np.unravel_index(row, (k,) * len(S)) if len(S) else ()
    xvals = np.unravel_index(entry, (k,) * len(V))
    info = {
        "V": V,
        "z": Configuration(S, tuple(symbols[int(i)] for i in zvals)),
        "x": Configuration(V, tuple(symbols[int(i)] for i in xvals)),
        "delta": delta,
    }
    return new, info
