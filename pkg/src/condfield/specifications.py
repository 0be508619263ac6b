"""Systems of conditional distributions indexed by (conditioned set, boundary).

All four systems share one dense layout: for each admissible pair of site
masks (V, S) an ndarray holds q_V^z(x) for every z on S and x on V, with
axes ordered (S sites..., V sites...), both ascending.  A system differs
only in which (V, S) pairs it admits:

* FSpec          every nonempty V, every S disjoint from V (S may be empty)
* OneFSpec       singleton V, every S disjoint from V
* PalmSpec       every nonempty V, singleton S disjoint from V
* DSpecFinite    every nonempty V, S the rest of the master window
* OneDSpecFinite singleton V, S the rest of the master window
"""

from __future__ import annotations

import itertools
from typing import Iterator, Mapping

import numpy as np

from . import settings
from ._tables import align, bits, mask_of, popcount
from .errors import BudgetError, DomainError, InvalidDistributionError
from .lattice import Alphabet, Configuration, Window, as_point
from .measures import Distribution, FiniteField, Potential


class SpecSystem:
    kind = "system"

    def __init__(self, master: Window, alphabet: Alphabet,
                 tables: Mapping[tuple[int, int], np.ndarray], *,
                 validate: bool = True, tol: float = settings.TAU_NORM):
        if len(master) == 0:
            raise DomainError("the master window must be nonempty")
        self.master = master
        self.alphabet = alphabet
        self.n = len(master)
        self.k = len(alphabet)
        self._index = {p: i for i, p in enumerate(master.points)}
        self._windows: dict[int, Window] = {}
        expected = set(self.pairs_for(self.n))
        got = set(tables)
        if got != expected:
            missing = sorted(expected - got)
            extra = sorted(got - expected)
            raise DomainError(
                f"{self.kind} key space mismatch: {len(missing)} missing, {len(extra)} unexpected"
                + (f"; first missing (V, S) = {self._describe(missing[0])}" if missing else "")
            )
        self._tables: dict[tuple[int, int], np.ndarray] = {}
        for pair in sorted(tables):
            v, s = pair
            arr = np.array(tables[pair], dtype=float)
            shape = (self.k,) * (popcount(s) + popcount(v))
            if arr.shape != shape:
                arr = arr.reshape(shape)
            if validate:
                self._validate(pair, arr, tol)
            arr.flags.writeable = False
            self._tables[pair] = arr

    # -- key space -------------------------------------------------------

    @classmethod
    def pairs_for(cls, n: int) -> Iterator[tuple[int, int]]:
        raise NotImplementedError

    @classmethod
    def entry_count(cls, n: int, k: int) -> int:
        return sum(k ** (popcount(v) + popcount(s)) for v, s in cls.pairs_for(n))

    def _validate(self, pair, arr, tol):
        v, s = pair
        if not np.all(np.isfinite(arr)):
            raise InvalidDistributionError(f"non-finite entry at {self._describe(pair)}")
        if arr.size and arr.min() <= 0:
            raise InvalidDistributionError(
                f"non-positive entry {arr.min()!r} at {self._describe(pair)}"
            )
        sums = arr.reshape(self.k ** popcount(s), -1).sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > tol:
            raise InvalidDistributionError(f"table at {self._describe(pair)} is not normalized")

    def _describe(self, pair) -> str:
        v, s = pair
        return f"V={self.window(v)}, S={self.window(s)}"

    # -- site/mask conversion ----------------------------------------------

    def site(self, p) -> int:
        try:
            return self._index[as_point(p)]
        except KeyError:
            raise DomainError(f"{as_point(p)} is outside the master window") from None

    def mask(self, window: Window) -> int:
        return mask_of(self.site(p) for p in window)

    def window(self, mask: int) -> Window:
        w = self._windows.get(mask)
        if w is None:
            w = Window(tuple(self.master.points[i] for i in bits(mask)))
            self._windows[mask] = w
        return w

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    # -- table access --------------------------------------------------------

    def array(self, vmask: int, smask: int) -> np.ndarray:
        """The raw table for (V, S), axes (S sites..., V sites...)."""
        try:
            return self._tables[(vmask, smask)]
        except KeyError:
            raise KeyError(
                f"{self.kind} has no table for {self._describe((vmask, smask))}"
            ) from None

    def has(self, vmask: int, smask: int) -> bool:
        return (vmask, smask) in self._tables

    def tables(self):
        return self._tables.items()

    def pairs(self):
        return self._tables.keys()

    def __getitem__(self, key) -> Distribution:
        V, z = key
        if not isinstance(V, Window):
            V = Window(tuple(V) if not isinstance(V, int) else (V,))
        arr = self.array(self.mask(V), self.mask(z.support))
        return Distribution(V, self.alphabet, arr[z.indices(self.alphabet)], validate=False)

    def __contains__(self, key) -> bool:
        V, z = key
        try:
            return self.has(self.mask(V), self.mask(z.support))
        except DomainError:
            return False

    def keys(self) -> Iterator[tuple[Window, Configuration]]:
        for v, s in self._tables:
            V, S = self.window(v), self.window(s)
            for vals in itertools.product(self.alphabet.symbols, repeat=len(S)):
                yield V, Configuration(S, vals)

    def __len__(self):
        return sum(self.k ** popcount(s) for _, s in self._tables)

    @property
    def size(self) -> int:
        """Total number of stored probabilities."""
        return sum(a.size for a in self._tables.values())

    def replace(self, updates: Mapping[tuple[int, int], np.ndarray], *,
                validate: bool = True) -> "SpecSystem":
        tables = dict(self._tables)
        tables.update(updates)
        return type(self)(self.master, self.alphabet, tables, validate=validate)

    def min_entry(self) -> float:
        return min(float(a.min()) for a in self._tables.values())

    def max_abs_diff(self, other: "SpecSystem") -> float:
        if set(self._tables) != set(other._tables):
            raise DomainError("systems have different key spaces")
        return max(
            float(np.max(np.abs(a - other._tables[p]))) for p, a in self._tables.items()
        )

    def __repr__(self):
        return f"{type(self).__name__}(master={self.master}, |X|={self.k}, tables={len(self._tables)})"

    # -- serialization -------------------------------------------------------

    def to_records(self) -> Iterator[dict]:
        """One record per (V, z) key: window, boundary and probabilities."""
        for v, s in self._tables:
            arr = self._tables[(v, s)]
            V, S = self.window(v), self.window(s)
            rows = arr.reshape(self.k ** len(S), -1)
            for i, vals in enumerate(itertools.product(self.alphabet.symbols, repeat=len(S))):
                yield {
                    "V": [list(p.coords) for p in V],
                    "z": [[list(p.coords), val] for p, val in zip(S, vals)],
                    "p": [float(x) for x in rows[i]],
                }

    @classmethod
    def from_records(cls, master: Window, alphabet: Alphabet, records, *,
                     validate: bool = True) -> "SpecSystem":
        k = len(alphabet)
        index = {p: i for i, p in enumerate(master.points)}
        tables: dict[tuple[int, int], np.ndarray] = {}
        filled: dict[tuple[int, int], int] = {}
        for rec in records:
            try:
                vs = [index[as_point(c)] for c in rec["V"]]
                zs = [(index[as_point(c)], alphabet.index(val)) for c, val in rec["z"]]
            except KeyError as exc:
                raise DomainError(f"record refers to a point outside the master window: {exc}")
            v, s = mask_of(vs), mask_of(i for i, _ in zs)
            if len(set(vs)) != len(vs) or v & s:
                raise DomainError("record has overlapping or repeated points")
            arr = tables.get((v, s))
            if arr is None:
                arr = tables[(v, s)] = np.full((k,) * (len(zs) + len(vs)), np.nan)
                filled[(v, s)] = 0
            row = tuple(j for _, j in sorted(zs))
            p = np.asarray(rec["p"], dtype=float)
            if p.size != k ** len(vs):
                raise DomainError(f"record for V={rec['V']} has {p.size} probabilities")
            # record points may come in any order; tables are stored ascending
            order = np.argsort(vs)
            arr[row] = p.reshape((k,) * len(vs)).transpose(order)
            filled[(v, s)] += 1
        for pair, arr in tables.items():
            if np.isnan(arr).any():
                raise DomainError(f"incomplete table for V mask {pair[0]}, S mask {pair[1]}")
        return cls(master, alphabet, tables, validate=validate)


class FSpec(SpecSystem):
    """Distributions q_V^z for every nonempty V and every finite z outside V."""

    kind = "f"

    @classmethod
    def pairs_for(cls, n):
        full = (1 << n) - 1
        for v in range(1, full + 1):
            rest = full & ~v
            s = rest
            while True:
                yield v, s
                if s == 0:
                    break
                s = (s - 1) & rest

    @classmethod
    def entry_count(cls, n, k):
        return (1 + 2 * k) ** n - (1 + k) ** n

    def one_point(self) -> "OneFSpec":
        return OneFSpec(self.master, self.alphabet,
                        {p: a for p, a in self._tables.items() if popcount(p[0]) == 1},
                        validate=False)

    def palm(self) -> "PalmSpec":
        return PalmSpec(self.master, self.alphabet,
                        {p: a for p, a in self._tables.items() if popcount(p[1]) == 1},
                        validate=False)

    def dobrushin(self) -> "DSpecFinite":
        full = self.full_mask
        return DSpecFinite(self.master, self.alphabet,
                           {p: a for p, a in self._tables.items() if p[0] | p[1] == full},
                           validate=False)


class OneFSpec(SpecSystem):
    """One-point distributions q_t^z for every finite z outside t."""

    kind = "1f"

    @classmethod
    def pairs_for(cls, n):
        full = (1 << n) - 1
        for t in range(n):
            v = 1 << t
            rest = full & ~v
            s = rest
            while True:
                yield v, s
                if s == 0:
                    break
                s = (s - 1) & rest

    @classmethod
    def entry_count(cls, n, k):
        return n * k * (1 + k) ** (n - 1)


class PalmSpec(SpecSystem):
    """Distributions q_V^z with z supported on a single point outside V."""

    kind = "palm"

    @classmethod
    def pairs_for(cls, n):
        full = (1 << n) - 1
        for v in range(1, full + 1):
            for t in range(n):
                if not v >> t & 1:
                    yield v, 1 << t

    @classmethod
    def entry_count(cls, n, k):
        return n * k * ((1 + k) ** (n - 1) - 1)


class DSpecFinite(SpecSystem):
    """Distributions q_V^z with z a full configuration on the rest of the master window."""

    kind = "d"

    @classmethod
    def pairs_for(cls, n):
        full = (1 << n) - 1
        for v in range(1, full + 1):
            yield v, full & ~v

    @classmethod
    def entry_count(cls, n, k):
        return ((1 << n) - 1) * k**n

    def one_point(self) -> "OneDSpecFinite":
        return OneDSpecFinite(self.master, self.alphabet,
                              {p: a for p, a in self._tables.items() if popcount(p[0]) == 1},
                              validate=False)


class OneDSpecFinite(SpecSystem):
    """One-point distributions q_t^z with z a full configuration off t."""

    kind = "1d"

    @classmethod
    def pairs_for(cls, n):
        full = (1 << n) - 1
        for t in range(n):
            yield 1 << t, full & ~(1 << t)

    @classmethod
    def entry_count(cls, n, k):
        return n * k**n


SYSTEMS = {cls.kind: cls for cls in (FSpec, OneFSpec, PalmSpec, DSpecFinite, OneDSpecFinite)}


def check_size(cls, n: int, k: int, *, max_states: int = settings.MAX_JOINT_STATES,
               max_entries: int = settings.MAX_TABLE_ENTRIES):
    states = k**n
    if states > max_states:
        raise BudgetError(
            f"{k}^{n} = {states} joint states exceed the cap {max_states}",
            required=states, cap=max_states,
        )
    entries = cls.entry_count(n, k)
    if entries > max_entries:
        raise BudgetError(
            f"a {cls.kind} system on {n} sites with |X|={k} needs {entries} entries; cap is {max_entries}",
            required=entries, cap=max_entries,
        )


def _from_field(cls, P: FiniteField, max_states, max_entries):
    check_size(cls, P.n, P.k, max_states=max_states, max_entries=max_entries)
    tables = {pair: P.conditional_array(*pair) for pair in cls.pairs_for(P.n)}
    return cls(P.master, P.alphabet, tables, validate=False)


def fspec_from_field(P: FiniteField, *, max_states: int = settings.MAX_JOINT_STATES,
                     max_entries: int = settings.MAX_TABLE_ENTRIES) -> FSpec:
    """The f-distribution of P: q_V^z = P_{V u S}(xz) / P_S(z) for every key."""
    return _from_field(FSpec, P, max_states, max_entries)


def onefspec_from_field(P: FiniteField, *, max_states: int = settings.MAX_JOINT_STATES,
                        max_entries: int = settings.MAX_TABLE_ENTRIES) -> OneFSpec:
    return _from_field(OneFSpec, P, max_states, max_entries)


def palm_from_field(P: FiniteField, *, max_states: int = settings.MAX_JOINT_STATES,
                    max_entries: int = settings.MAX_TABLE_ENTRIES) -> PalmSpec:
    return _from_field(PalmSpec, P, max_states, max_entries)


def dspec_from_field(P: FiniteField, *, max_states: int = settings.MAX_JOINT_STATES,
                     max_entries: int = settings.MAX_TABLE_ENTRIES) -> DSpecFinite:
    return _from_field(DSpecFinite, P, max_states, max_entries)


def onedspec_from_field(P: FiniteField, *, max_states: int = settings.MAX_JOINT_STATES,
                        max_entries: int = settings.MAX_TABLE_ENTRIES) -> OneDSpecFinite:
    return _from_field(OneDSpecFinite, P, max_states, max_entries)


def onefspec_from_potential(master: Window, X: Alphabet, phi: Potential, beta: float, *,
                            max_states: int = settings.MAX_JOINT_STATES,
                            max_entries: int = settings.MAX_TABLE_ENTRIES) -> OneFSpec:
    """Local Boltzmann kernels built from the potential alone.

    q_t^z(x) is proportional to exp(-beta * (site energy at t plus the pair
    energies between t and the points of s(z))).  Pairs reaching outside
    s(z) are ignored, so this matches the field's conditionals only when
    s(z) covers every interaction partner of t.
    """
    phi.check_within(master, X)
    check_size(OneFSpec, len(master), len(X), max_states=max_states, max_entries=max_entries)
    n, k = len(master), len(X)
    idx = {p: i for i, p in enumerate(master.points)}
    site_e = {idx[t]: e for t, e in phi.site_terms.items()}
    # partner -> energy matrix with axes (t symbol, partner symbol)
    partners: dict[int, dict[int, np.ndarray]] = {i: {} for i in range(n)}
    for (a, b), e in phi.pair_terms.items():
        ia, ib = idx[a], idx[b]
        partners[ia][ib] = partners[ia].get(ib, 0) + e
        partners[ib][ia] = partners[ib].get(ia, 0) + e.T
    tables = {}
    for v, s in OneFSpec.pairs_for(n):
        t = bits(v)[0]
        target = bits(s) + (t,)
        logits = np.zeros((1,) * len(bits(s)) + (k,))
        if t in site_e:
            logits = logits + align(site_e[t], (t,), target)
        for r in bits(s):
            if r in partners[t]:
                logits = logits + align(partners[t][r], (t, r), target)
        logits = -beta * np.broadcast_to(logits, (k,) * len(target))
        logits = logits - logits.max(axis=-1, keepdims=True)
        w = np.exp(logits)
        tables[(v, s)] = w / w.sum(axis=-1, keepdims=True)
    return OneFSpec(master, X, tables, validate=False)
