"""Lattice points, windows, alphabets, configurations and neighborhood systems.

Everything here is immutable.  Windows keep their points in lexicographic
order of the coordinate vectors; that order fixes table layouts, splice
indices and enumeration order everywhere else in the package.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from .errors import BudgetError, DomainError

DEFAULT_ENUMERATION_CAP = 2**24


@dataclass(frozen=True, order=True)
class LatticePoint:
    coords: tuple[int, ...]

    def __post_init__(self):
        coords = tuple(int(c) for c in self.coords)
        if not coords:
            raise DomainError("a lattice point needs at least one coordinate")
        object.__setattr__(self, "coords", coords)

    @property
    def dimension(self) -> int:
        return len(self.coords)

    def __repr__(self):
        return f"LatticePoint{self.coords}"


def as_point(obj) -> LatticePoint:
    """Coerce an int, a coordinate sequence or a LatticePoint."""
    if isinstance(obj, LatticePoint):
        return obj
    if isinstance(obj, int):
        return LatticePoint((obj,))
    return LatticePoint(tuple(obj))


@dataclass(frozen=True)
class Window:
    """A finite set of lattice points of one dimension, stored sorted."""

    points: tuple[LatticePoint, ...] = ()

    def __post_init__(self):
        pts = [as_point(p) for p in self.points]
        dims = {p.dimension for p in pts}
        if len(dims) > 1:
            raise DomainError(f"window mixes lattice dimensions {sorted(dims)}")
        pts.sort()
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise DomainError(f"duplicate point {a} in window")
        object.__setattr__(self, "points", tuple(pts))

    @classmethod
    def of(cls, *points) -> "Window":
        return cls(tuple(points))

    @property
    def dimension(self) -> int | None:
        return self.points[0].dimension if self.points else None

    def __len__(self):
        return len(self.points)

    def __iter__(self) -> Iterator[LatticePoint]:
        return iter(self.points)

    def __contains__(self, p):
        return as_point(p) in self._set

    @property
    def _set(self) -> frozenset:
        try:
            return self.__dict__["_cached_set"]
        except KeyError:
            s = frozenset(self.points)
            object.__setattr__(self, "_cached_set", s)
            return s

    def index(self, p) -> int:
        return self.points.index(as_point(p))

    def issubset(self, other: "Window") -> bool:
        return self._set <= other._set

    def isdisjoint(self, other: "Window") -> bool:
        return self._set.isdisjoint(other._set)

    def union(self, other: "Window") -> "Window":
        _check_dims(self, other)
        return Window(tuple(self._set | other._set))

    def difference(self, other: "Window") -> "Window":
        return Window(tuple(p for p in self.points if p not in other._set))

    def intersection(self, other: "Window") -> "Window":
        return Window(tuple(p for p in self.points if p in other._set))

    __or__ = union
    __sub__ = difference
    __and__ = intersection

    def __repr__(self):
        return "Window{" + ", ".join(str(p.coords) for p in self.points) + "}"


def _check_dims(a: Window, b: Window):
    if a.dimension is not None and b.dimension is not None and a.dimension != b.dimension:
        raise DomainError(
            f"cannot combine windows of dimension {a.dimension} and {b.dimension}"
        )


def line_window(n: int, start: int = 0) -> Window:
    """The one-dimensional window {start, ..., start + n - 1}."""
    return Window(tuple(LatticePoint((start + i,)) for i in range(n)))


def grid_window(*shape: int) -> Window:
    """The box {0..shape[0]-1} x ... x {0..shape[-1]-1}."""
    return Window(
        tuple(LatticePoint(c) for c in itertools.product(*(range(s) for s in shape)))
    )


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if len(symbols) < 2:
            raise DomainError("an alphabet needs at least two symbols")
        if len(set(symbols)) != len(symbols):
            raise DomainError(f"alphabet symbols are not distinct: {symbols}")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(symbols)})

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __contains__(self, s):
        return s in self._index

    def index(self, s) -> int:
        try:
            return self._index[s]
        except KeyError:
            raise DomainError(f"symbol {s!r} not in alphabet {self.symbols}") from None


@dataclass(frozen=True)
class Configuration:
    """An assignment of one symbol to each point of ``support``.

    ``values[i]`` is the symbol at ``support.points[i]``.
    """

    support: Window = Window()
    values: tuple = ()

    def __post_init__(self):
        values = tuple(self.values)
        if len(values) != len(self.support):
            raise DomainError(
                f"{len(values)} values given for a support of {len(self.support)} points"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "Configuration":
        items = sorted((as_point(p), v) for p, v in mapping.items())
        return cls(Window(tuple(p for p, _ in items)), tuple(v for _, v in items))

    @classmethod
    def empty(cls) -> "Configuration":
        return cls()

    def __len__(self):
        return len(self.values)

    def __getitem__(self, p):
        return self.values[self.support.index(p)]

    def items(self):
        return zip(self.support.points, self.values)

    def as_dict(self) -> dict:
        return dict(self.items())

    def indices(self, alphabet: Alphabet) -> tuple[int, ...]:
        return tuple(alphabet.index(v) for v in self.values)

    def __repr__(self):
        inner = ", ".join(f"{p.coords}->{v!r}" for p, v in self.items())
        return "{" + inner + "}"


EMPTY = Configuration()


def concat(x: Configuration, y: Configuration) -> Configuration:
    _check_dims(x.support, y.support)
    common = x.support.intersection(y.support)
    if len(common):
        raise DomainError(f"supports overlap at {common.points[0]}")
    merged = dict(x.items())
    merged.update(y.items())
    return Configuration.from_mapping(merged)


def restrict(x: Configuration, T: Window) -> Configuration:
    if not T.issubset(x.support):
        missing = T.difference(x.support)
        raise DomainError(f"{missing.points[0]} is outside the support of x")
    return Configuration(T, tuple(x[p] for p in T))


def splice(
    x: Configuration,
    u: Configuration,
    j: int,
    enumeration: Sequence | None = None,
) -> Configuration:
    """The configuration x_1 ... x_{j-1} u_{j+1} ... u_n, with j 1-based.

    Both ``x`` and ``u`` must be supported on the enumerated window; the
    enumeration defaults to the canonical point order of that support.
    """
    if enumeration is None:
        order = list(x.support.points)
    else:
        order = [as_point(p) for p in enumeration]
    window = Window(tuple(order))
    if x.support != window or u.support != window:
        raise DomainError("x and u must both be supported on the enumerated window")
    n = len(order)
    if not 1 <= j <= n:
        raise DomainError(f"splice index {j} outside 1..{n}")
    left = {p: x[p] for p in order[: j - 1]}
    right = {p: u[p] for p in order[j:]}
    return Configuration.from_mapping({**left, **right})


class NeighborhoodSystem:
    """A symmetric, irreflexive neighbor relation on the lattice.

    ``rule`` is either a mapping from points to neighbor collections or a
    callable returning them.  Points absent from a mapping have no
    neighbors.
    """

    def __init__(self, rule: Mapping | Callable | None = None):
        self._rule = rule if rule is not None else {}

    @classmethod
    def empty(cls) -> "NeighborhoodSystem":
        return cls({})

    @classmethod
    def from_edges(cls, edges: Iterable) -> "NeighborhoodSystem":
        nbrs: dict[LatticePoint, set] = {}
        for a, b in edges:
            a, b = as_point(a), as_point(b)
            if a == b:
                raise DomainError(f"self-loop at {a}")
            nbrs.setdefault(a, set()).add(b)
            nbrs.setdefault(b, set()).add(a)
        return cls({p: Window(tuple(s)) for p, s in nbrs.items()})

    @classmethod
    def nearest(cls, dimension: int) -> "NeighborhoodSystem":
        """Nearest neighbors on the infinite lattice Z^d."""

        def rule(t: LatticePoint):
            if t.dimension != dimension:
                raise DomainError(f"expected a point of dimension {dimension}")
            out = []
            for axis in range(dimension):
                for step in (-1, 1):
                    c = list(t.coords)
                    c[axis] += step
                    out.append(LatticePoint(tuple(c)))
            return out

        return cls(rule)

    def neighbors(self, t) -> Window:
        t = as_point(t)
        if callable(self._rule):
            nb = self._rule(t)
        else:
            nb = self._rule.get(t, ())
        w = nb if isinstance(nb, Window) else Window(tuple(nb))
        if t in w:
            raise DomainError(f"{t} is its own neighbor")
        return w

    def restricted(self, window: Window) -> "NeighborhoodSystem":
        """The induced system on ``window`` (neighbors outside are dropped)."""
        return NeighborhoodSystem(
            {t: self.neighbors(t).intersection(window) for t in window}
        )

    def edges(self, window: Window) -> list[tuple[LatticePoint, LatticePoint]]:
        out = []
        for t in window:
            for s in self.neighbors(t):
                if s in window and t < s:
                    out.append((t, s))
        return out

    def is_symmetric_on(self, window: Window) -> bool:
        for t in window:
            for s in window:
                if (s in self.neighbors(t)) != (t in self.neighbors(s)):
                    return False
        return True


def boundary(nbhd: NeighborhoodSystem, V: Window) -> Window:
    """The outer boundary {s not in V : s is a neighbor of some t in V}."""
    pts = set()
    for t in V:
        pts.update(nbhd.neighbors(t).points)
    return Window(tuple(p for p in pts if p not in V))


def configuration_count(V: Window, X: Alphabet) -> int:
    return len(X) ** len(V)


def enumerate_configurations(
    V: Window, X: Alphabet, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[Configuration]:
    """All configurations on V in canonical order (last point varies fastest)."""
    required = configuration_count(V, X)
    if required > cap:
        raise BudgetError(
            f"enumerating {len(X)}^{len(V)} = {required} configurations exceeds the cap {cap}",
            required=required,
            cap=cap,
        )
    return (Configuration(V, vals) for vals in itertools.product(X.symbols, repeat=len(V)))
