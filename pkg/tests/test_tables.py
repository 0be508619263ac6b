import itertools

import numpy as np
from hypothesis import given, strategies as st

from condfield._tables import (
    Role,
    align,
    bits,
    check_seed,
    mask_of,
    plan_blocks,
    popcount,
    submasks,
)


def test_bit_helpers():
    assert bits(0b1011) == (0, 1, 3)
    assert mask_of([0, 1, 3]) == 0b1011
    assert popcount(0b1011) == 3
    assert list(submasks(0b101)) == [0, 0b001, 0b100, 0b101]
    assert list(submasks(0)) == [0]


@given(st.integers(0, 2**10 - 1))
def test_submasks_are_exactly_the_subsets(mask):
    subs = list(submasks(mask))
    assert len(subs) == 2 ** popcount(mask) == len(set(subs))
    assert all(s & ~mask == 0 for s in subs)
    assert mask_of(bits(mask)) == mask


def test_align_permutes_and_inserts_axes():
    a = np.arange(6).reshape(2, 3)  # labels (5, 2)
    out = align(a, (5, 2), (2, 7, 5))
    assert out.shape == (3, 1, 2)
    assert out[2, 0, 1] == a[1, 2]


def brute_blocks(n, sizes):
    out = []
    for assign in itertools.product(range(len(sizes) + 1), repeat=n):
        ms = tuple(mask_of(i for i in range(n) if assign[i] == r + 1) for r in range(len(sizes)))
        if all(popcount(m) == a for m, a in zip(ms, sizes)):
            out.append(ms)
    return out


def test_plan_enumerates_every_block_within_budget():
    roles = (Role(1), Role(1), Role(0))
    plan = plan_blocks(4, roles, lambda sizes: 2 ** sum(sizes))
    assert not plan.sampled
    expected = [b for a in itertools.product(range(5), repeat=3) if a[0] >= 1 and a[1] >= 1
                and sum(a) <= 4 for b in brute_blocks(4, a)]
    assert sorted(plan.blocks) == sorted(expected)
    assert plan.total_work == plan.planned_work == sum(2 ** sum(map(popcount, b)) for b in expected)


def test_plan_with_complement_appends_the_rest():
    plan = plan_blocks(3, (Role(1, 1), Role(1, 1)), lambda sizes: 1, complement=True)
    for t, s, rest in plan.blocks:
        assert t | s | rest == 0b111 and not (t & s or t & rest or s & rest)


def test_sampled_plan_is_seeded_and_covers_each_stratum():
    roles = (Role(1), Role(1), Role(0))
    cost = lambda sizes: 2 ** sum(sizes)
    full = plan_blocks(7, roles, cost)
    a = plan_blocks(7, roles, cost, budget=full.total_work // 20, seed=3, name="x")
    b = plan_blocks(7, roles, cost, budget=full.total_work // 20, seed=3, name="x")
    c = plan_blocks(7, roles, cost, budget=full.total_work // 20, seed=4, name="x")
    assert a.sampled and a.blocks == b.blocks and a.blocks != c.blocks
    assert a.planned_work < full.total_work
    strata = {tuple(map(popcount, blk)) for blk in full.blocks}
    assert {tuple(map(popcount, blk)) for blk in a.blocks} == strata


def test_check_seed_depends_on_name():
    assert check_seed(1, "a").random() == check_seed(1, "a").random()
    assert check_seed(1, "a").random() != check_seed(1, "b").random()
