"""Positive distributions on finite windows and the model families built from them."""

from __future__ import annotations

import itertools
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from . import settings
from ._tables import bits, mask_of
from .errors import BudgetError, DomainError, InvalidDistributionError
from .lattice import (
    Alphabet,
    Configuration,
    NeighborhoodSystem,
    Window,
    as_point,
)


def _validate_probs(arr: np.ndarray, tol: float, what: str):
    if not np.all(np.isfinite(arr)):
        raise InvalidDistributionError(f"{what} has non-finite entries")
    if arr.size and arr.min() <= 0:
        raise InvalidDistributionError(
            f"{what} has a non-positive entry {arr.min()!r}; only positive fields are supported"
        )
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        raise InvalidDistributionError(f"{what} sums to {total!r}, not 1")


class Distribution(Mapping):
    """A positive, normalized table on X^window.

    Behaves as a read-only mapping from configurations (in canonical
    order) to probabilities; ``array`` exposes the table with one axis per
    window point.
    """

    def __init__(self, window: Window, alphabet: Alphabet, probs, *, validate=True,
                 tol=settings.TAU_NORM):
        k, m = len(alphabet), len(window)
        if isinstance(probs, Mapping):
            arr = np.empty((k,) * m)
            seen = 0
            for cfg, p in probs.items():
                if cfg.support != window:
                    raise DomainError(f"configuration {cfg} is not supported on {window}")
                arr[cfg.indices(alphabet)] = p
                seen += 1
            if seen != k**m:
                raise InvalidDistributionError(
                    f"table has {seen} entries, expected {k**m} for the full window"
                )
        else:
            arr = np.array(probs, dtype=float)
            if arr.size != k**m:
                raise InvalidDistributionError(
                    f"table has {arr.size} entries, expected {k**m} for the full window"
                )
            arr = arr.reshape((k,) * m)
        if validate:
            _validate_probs(arr, tol, f"distribution on {window}")
        arr.flags.writeable = False
        self.window = window
        self.alphabet = alphabet
        self.array = arr

    def __getitem__(self, x: Configuration) -> float:
        if x.support != self.window:
            raise KeyError(x)
        return float(self.array[x.indices(self.alphabet)])

    def __iter__(self):
        for vals in itertools.product(self.alphabet.symbols, repeat=len(self.window)):
            yield Configuration(self.window, vals)

    def __len__(self):
        return self.array.size

    def __eq__(self, other):
        if not isinstance(other, Distribution):
            return NotImplemented
        return (
            self.window == other.window
            and self.alphabet == other.alphabet
            and np.array_equal(self.array, other.array)
        )

    __hash__ = None

    def max_abs_diff(self, other: "Distribution") -> float:
        _same_space(self, other)
        return float(np.max(np.abs(self.array - other.array))) if self.array.size else 0.0

    def allclose(self, other: "Distribution", tol: float = settings.TAU_EQ) -> bool:
        return self.max_abs_diff(other) <= tol

    def __repr__(self):
        return f"Distribution({self.window}, {self.array.ravel().tolist()})"


def _same_space(P: Distribution, Q: Distribution):
    if P.window != Q.window or P.alphabet != Q.alphabet:
        raise DomainError(f"distributions live on different spaces: {P.window} vs {Q.window}")


class FiniteField:
    """A positive joint distribution on the master window.

    Marginals are memoized per site mask; the object is otherwise
    immutable.
    """

    def __init__(self, master: Window, alphabet: Alphabet, joint, *, validate=True,
                 tol=settings.TAU_NORM):
        if len(master) == 0:
            raise DomainError("the master window must be nonempty")
        if not isinstance(joint, Distribution):
            joint = Distribution(master, alphabet, joint, validate=validate, tol=tol)
        elif joint.window != master or joint.alphabet != alphabet:
            raise DomainError("joint distribution does not live on the master window")
        self.master = master
        self.alphabet = alphabet
        self.joint = joint
        self.n = len(master)
        self.k = len(alphabet)
        self._index = {p: i for i, p in enumerate(master.points)}
        self._marginals: dict[int, np.ndarray] = {}

    @property
    def array(self) -> np.ndarray:
        return self.joint.array

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    def site(self, p) -> int:
        try:
            return self._index[as_point(p)]
        except KeyError:
            raise DomainError(f"{as_point(p)} is outside the master window") from None

    def mask(self, window: Window) -> int:
        return mask_of(self.site(p) for p in window)

    def window(self, mask: int) -> Window:
        return Window(tuple(self.master.points[i] for i in bits(mask)))

    def marginal_array(self, mask: int) -> np.ndarray:
        """P_U as an array with axes in ascending site order."""
        try:
            return self._marginals[mask]
        except KeyError:
            pass
        keep = set(bits(mask))
        drop = tuple(i for i in range(self.n) if i not in keep)
        arr = self.array.sum(axis=drop) if drop else self.array
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self._marginals[mask] = arr
        return arr

    def conditional_array(self, vmask: int, smask: int) -> np.ndarray:
        """Q_V^z for every z on S, axes ordered (S sites..., V sites...)."""
        if vmask & smask:
            raise DomainError("conditioned set and boundary overlap")
        union = vmask | smask
        labels = bits(union)
        pos = {s: i for i, s in enumerate(labels)}
        order = [pos[s] for s in bits(smask)] + [pos[s] for s in bits(vmask)]
        joint = self.marginal_array(union).transpose(order)
        denom = self.marginal_array(smask)
        out = joint / denom.reshape(denom.shape + (1,) * len(bits(vmask)))
        return np.ascontiguousarray(out)

    def __repr__(self):
        return f"FiniteField(master={self.master}, alphabet={self.alphabet.symbols})"


def marginal(P, V: Window) -> Distribution:
    """P_V(x) = sum over the remaining sites of the joint; V = {} gives the unit mass."""
    if isinstance(P, Distribution):
        P = FiniteField(P.window, P.alphabet, P, validate=False)
    if not V.issubset(P.master):
        raise DomainError(f"{V} is not contained in the window {P.master}")
    arr = P.marginal_array(P.mask(V))
    return Distribution(V, P.alphabet, arr, validate=False)


def conditional(P: FiniteField, V: Window, z: Configuration) -> Distribution:
    """Q_V^z(x) = P_{V u s(z)}(xz) / P_{s(z)}(z)."""
    if not V.issubset(P.master):
        raise DomainError(f"{V} is not contained in the master window")
    if not z.support.issubset(P.master):
        raise DomainError(f"boundary support {z.support} leaves the master window")
    if not V.isdisjoint(z.support):
        common = V.intersection(z.support)
        raise DomainError(f"boundary condition overlaps V at {common.points[0]}")
    table = P.conditional_array(P.mask(V), P.mask(z.support))
    row = table[z.indices(P.alphabet)]
    return Distribution(V, P.alphabet, row, validate=False)


def total_variation(P: Distribution, Q: Distribution) -> float:
    _same_space(P, Q)
    return 0.5 * float(np.abs(P.array - Q.array).sum())


def product_field(master: Window, X: Alphabet, p) -> FiniteField:
    """Independent sites: joint(x) = prod_t p_t(x_t).

    ``p`` maps each master point to a sequence of |X| probabilities; a
    single sequence is used for every site.
    """
    if isinstance(p, Mapping):
        p = {as_point(t): v for t, v in p.items()}
    else:
        p = {t: p for t in master}
    factors = []
    for t in master:
        if t not in p:
            raise DomainError(f"no site distribution for {t}")
        pt = np.asarray(p[t], dtype=float)
        if pt.shape != (len(X),):
            raise InvalidDistributionError(f"site distribution at {t} must have {len(X)} entries")
        _validate_probs(pt, settings.TAU_NORM, f"site distribution at {t}")
        factors.append(pt)
    joint = factors[0]
    for f in factors[1:]:
        joint = np.multiply.outer(joint, f)
    return FiniteField(master, X, joint)


@dataclass(frozen=True)
class Potential:
    """Site and pair energies.

    ``site_terms[t][i]`` is the energy of symbol i at t; ``pair_terms[(a, b)][i][j]``
    is the energy of symbol i at a together with symbol j at b.
    """

    site_terms: dict = field(default_factory=dict)
    pair_terms: dict = field(default_factory=dict)

    def __post_init__(self):
        sites = {as_point(t): np.asarray(e, dtype=float) for t, e in self.site_terms.items()}
        pairs = {}
        for (a, b), e in self.pair_terms.items():
            a, b = as_point(a), as_point(b)
            e = np.asarray(e, dtype=float)
            if a == b:
                raise DomainError(f"pair term on a single point {a}")
            if b < a:
                a, b, e = b, a, e.T
            key = (a, b)
            pairs[key] = pairs[key] + e if key in pairs else e
        for e in list(sites.values()) + list(pairs.values()):
            if not np.all(np.isfinite(e)):
                raise DomainError("potential terms must be finite")
        object.__setattr__(self, "site_terms", sites)
        object.__setattr__(self, "pair_terms", pairs)

    def interaction_graph(self) -> NeighborhoodSystem:
        return NeighborhoodSystem.from_edges(self.pair_terms.keys())

    def check_within(self, master: Window, X: Alphabet):
        k = len(X)
        for t, e in self.site_terms.items():
            if t not in master:
                raise DomainError(f"site term at {t} lies outside the master window")
            if e.shape != (k,):
                raise DomainError(f"site term at {t} must have {k} energies")
        for (a, b), e in self.pair_terms.items():
            if a not in master or b not in master:
                raise DomainError(f"pair term ({a}, {b}) leaves the master window")
            if e.shape != (k, k):
                raise DomainError(f"pair term ({a}, {b}) must be {k}x{k}")


def ising_potential(master: Window, X: Alphabet, J: float = 1.0, h: float = 0.0,
                    edges=None) -> Potential:
    """E(x) = -J sum_{<a,b>} x_a x_b - h sum_t x_t, symbols used as spin values.

    ``edges`` defaults to nearest-neighbor pairs inside ``master``.
    """
    s = np.asarray(X.symbols, dtype=float)
    if edges is None:
        edges = NeighborhoodSystem.nearest(master.dimension).edges(master)
    pair = -J * np.multiply.outer(s, s)
    site = -h * s
    return Potential(
        site_terms={t: site for t in master} if h else {},
        pair_terms={(a, b): pair for a, b in edges},
    )


def energy_array(master: Window, X: Alphabet, phi: Potential) -> np.ndarray:
    """Total energy of every joint configuration, one axis per master point."""
    phi.check_within(master, X)
    n, k = len(master), len(X)
    idx = {p: i for i, p in enumerate(master.points)}
    E = np.zeros((k,) * n)
    for t, e in phi.site_terms.items():
        shape = [1] * n
        shape[idx[t]] = k
        E = E + e.reshape(shape)
    for (a, b), e in phi.pair_terms.items():
        shape = [1] * n
        shape[idx[a]] = k
        shape[idx[b]] = k
        E = E + e.reshape(shape)
    return E


def gibbs_field(master: Window, X: Alphabet, phi: Potential, beta: float,
                cap: int = 2**24) -> FiniteField:
    """joint(x) proportional to exp(-beta * energy(x)), normalized in the log domain."""
    states = len(X) ** len(master)
    if states > cap:
        raise BudgetError(
            f"{len(X)}^{len(master)} = {states} joint states exceed the cap {cap}",
            required=states, cap=cap,
        )
    logw = -beta * energy_array(master, X, phi)
    logw = logw - logw.max()
    w = np.exp(logw)
    return FiniteField(master, X, w / w.sum())


def random_positive_field(master: Window, X: Alphabet, seed: int,
                          floor: float | None = None) -> FiniteField:
    """Seeded joint with every entry at least ``floor``.

    Entries are floor + (1 - N * floor) * w / sum(w) for uniform weights w,
    N = |X|^|master|.  ``floor`` defaults to 0.1 / N.
    """
    N = len(X) ** len(master)
    if floor is None:
        floor = 0.1 / N
    if not 0 < floor < 1.0 / N:
        raise DomainError(f"floor must lie in (0, 1/{N}); got {floor!r}")
    rng = np.random.default_rng(seed)
    w = rng.random(N)
    joint = floor + (1.0 - N * floor) * w / w.sum()
    return FiniteField(master, X, joint.reshape((len(X),) * len(master)))
