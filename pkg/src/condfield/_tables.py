"""Bitmask and axis plumbing shared by the table-based modules.

Sites of a master window are numbered 0..n-1 in canonical order and a set
of sites is an int bitmask.  A table is an ndarray with one axis of length
|X| per site; its axes are described by a tuple of labels.
"""

from __future__ import annotations

import functools
import itertools
import math
import zlib
from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

import numpy as np

from . import settings


@functools.lru_cache(maxsize=1 << 16)
def bits(mask: int) -> tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def mask_of(sites) -> int:
    m = 0
    for s in sites:
        m |= 1 << s
    return m


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def submasks(mask: int):
    """All submasks of ``mask`` including 0 and ``mask`` itself, ascending."""
    sites = bits(mask)
    for r in range(len(sites) + 1):
        for combo in itertools.combinations(sites, r):
            yield mask_of(combo)


def align(arr: np.ndarray, labels: Sequence[Hashable], target: Sequence[Hashable]) -> np.ndarray:
    """View ``arr`` (axes named by ``labels``) broadcast against ``target``.

    Axes are permuted into target order and size-1 axes are inserted for
    target labels the array does not carry.
    """
    pos = {lab: i for i, lab in enumerate(target)}
    order = sorted(range(len(labels)), key=lambda i: pos[labels[i]])
    if order != list(range(len(labels))):
        arr = arr.transpose(order)
    if len(labels) == len(target):
        return arr
    present = set(labels)
    shape = []
    it = iter(arr.shape)
    for lab in target:
        shape.append(next(it) if lab in present else 1)
    return arr.reshape(shape)


def violation(lhs, rhs) -> np.ndarray:
    """Mixed residual: relative where either side exceeds RELATIVE_FLOOR,
    absolute otherwise."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    diff = np.abs(lhs - rhs)
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    big = scale > settings.RELATIVE_FLOOR
    return np.where(big, diff / np.where(big, scale, 1.0), diff)


def check_seed(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())])


@dataclass(frozen=True)
class Role:
    """Size constraint for one set in a quantifier block."""

    lo: int = 1
    hi: int | None = None


@dataclass
class BlockPlan:
    blocks: list[tuple[int, ...]]
    sampled: bool
    total_work: int
    planned_work: int


def _strata(n: int, roles: Sequence[Role], complement: bool):
    ranges = [range(r.lo, (n if r.hi is None else min(r.hi, n)) + 1) for r in roles]
    for sizes in itertools.product(*ranges):
        if sum(sizes) <= n:
            yield sizes


def _stratum_count(n: int, sizes: Sequence[int]) -> int:
    rest = n - sum(sizes)
    c = math.factorial(n) // math.factorial(rest)
    for a in sizes:
        c //= math.factorial(a)
    return c


def _stratum_blocks(n: int, sizes: Sequence[int]):
    def rec(avail: tuple[int, ...], i: int):
        if i == len(sizes):
            yield ()
            return
        for combo in itertools.combinations(avail, sizes[i]):
            left = tuple(s for s in avail if s not in combo)
            m = mask_of(combo)
            for tail in rec(left, i + 1):
                yield (m,) + tail

    yield from rec(tuple(range(n)), 0)


def plan_blocks(
    n: int,
    roles: Sequence[Role],
    cost: Callable[[tuple[int, ...]], int],
    *,
    budget: int = settings.WORK_BUDGET,
    seed: int = 0,
    name: str = "",
    complement: bool = False,
) -> BlockPlan:
    """Blocks of pairwise disjoint site sets obeying ``roles``.

    ``cost(sizes)`` gives the identity evaluations of one block; for
    ``complement`` plans the size of the remaining sites is appended to
    ``sizes`` and every block gets that remainder as a last mask.  When the
    total work exceeds ``budget`` a seeded sample is drawn in every size
    stratum, proportional to the stratum's share of the work.
    """
    full = (1 << n) - 1
    strata = []
    total = 0
    for sizes in _strata(n, roles, complement):
        key = sizes + (n - sum(sizes),) if complement else sizes
        count = _stratum_count(n, sizes)
        w = cost(key)
        strata.append((sizes, count, w))
        total += count * w

    def finish(ms):
        if complement:
            used = 0
            for m in ms:
                used |= m
            return ms + (full & ~used,)
        return ms

    if total <= budget:
        blocks = [finish(b) for sizes, _, _ in strata for b in _stratum_blocks(n, sizes)]
        return BlockPlan(blocks, False, total, total)

    rng = check_seed(seed, name)
    blocks = []
    planned = 0
    for sizes, count, w in strata:
        quota = max(1, min(count, int(count * budget / total)))
        if quota == count:
            chosen = list(_stratum_blocks(n, sizes))
        else:
            seen = set()
            attempts = 0
            while len(seen) < quota and attempts < 50 * quota:
                attempts += 1
                perm = rng.permutation(n)
                ms, at = [], 0
                for a in sizes:
                    ms.append(mask_of(int(s) for s in perm[at : at + a]))
                    at += a
                seen.add(tuple(ms))
            chosen = sorted(seen)
        planned += len(chosen) * w
        blocks.extend(finish(b) for b in chosen)
    return BlockPlan(blocks, True, total, planned)
