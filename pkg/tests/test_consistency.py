import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from condfield import (
    Alphabet,
    Configuration,
    DomainError,
    Report,
    ReportBundle,
    Window,
    check_1dspec,
    check_1f_derived,
    check_1fspec,
    check_dspec,
    check_fspec,
    check_fspec_derived,
    check_palm,
    check_system,
    concat,
    dspec_from_field,
    enumerate_configurations,
    fspec_from_field,
    line_window,
    onedspec_from_field,
    onefspec_from_field,
    palm_from_field,
    perturb,
    random_positive_field,
)
from condfield._tables import violation

X01 = Alphabet((0, 1))
X012 = Alphabet((0, 1, 2))
TOL = 1e-10


def residual(a, b):
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 1e-8 else abs(a - b)


def subsets(points):
    for r in range(len(points) + 1):
        yield from itertools.combinations(points, r)


def configs(points, X):
    return list(enumerate_configurations(Window(tuple(points)), X))


def brute_fspec_worst(Q):
    """Walk every (V, I, z, x, y) with dictionary lookups only."""
    pts = list(Q.master)
    worst = 0.0
    for Vp in subsets(pts):
        if not Vp:
            continue
        rest = [p for p in pts if p not in Vp]
        for Ip in subsets(rest):
            if not Ip:
                continue
            V, I = Window(Vp), Window(Ip)
            for Zp in subsets([p for p in rest if p not in Ip]):
                for z in configs(Zp, Q.alphabet):
                    big = Q[(V | I, z)]
                    for x in configs(Vp, Q.alphabet):
                        qx = Q[(V, z)][x]
                        qy = Q[(I, concat(z, x))]
                        for y in configs(Ip, Q.alphabet):
                            worst = max(worst, residual(big[concat(x, y)], qx * qy[y]))
    return worst


def brute_onef_worst(Q1):
    pts = list(Q1.master)
    worst = 0.0
    for t, s in itertools.permutations(pts, 2):
        T, S = Window((t,)), Window((s,))
        for Zp in subsets([p for p in pts if p not in (t, s)]):
            for z in configs(Zp, Q1.alphabet):
                for x in configs((t,), Q1.alphabet):
                    for y in configs((s,), Q1.alphabet):
                        lhs = Q1[(T, z)][x] * Q1[(S, concat(z, x))][y]
                        rhs = Q1[(S, z)][y] * Q1[(T, concat(z, y))][x]
                        worst = max(worst, residual(lhs, rhs))
    return worst


def brute_dspec_worst(QD):
    """q_{V u I}^z(xy) = q_I^{zx}(y) * sum_b q_{V u I}^z(xb), z on the rest."""
    pts = list(QD.master)
    worst = 0.0
    for Vp in subsets(pts):
        if not Vp:
            continue
        rest = [p for p in pts if p not in Vp]
        for Ip in subsets(rest):
            if not Ip:
                continue
            V, I = Window(Vp), Window(Ip)
            Zp = [p for p in rest if p not in Ip]
            for z in configs(Zp, QD.alphabet):
                big = QD[(V | I, z)]
                for x in configs(Vp, QD.alphabet):
                    mass = sum(big[concat(x, b)] for b in configs(Ip, QD.alphabet))
                    for y in configs(Ip, QD.alphabet):
                        rhs = QD[(I, concat(z, x))][y] * mass
                        worst = max(worst, residual(big[concat(x, y)], rhs))
    return worst


@pytest.mark.parametrize("X,seed", [(X01, 0), (X012, 1)])
def test_fspec_check_matches_brute_force(X, seed):
    Q = fspec_from_field(random_positive_field(line_window(3), X, seed))
    r = check_fspec(Q)
    assert r.passed and r.worst_violation <= TOL
    assert brute_fspec_worst(Q) <= TOL
    bad, _ = perturb(Q, delta=0.05, seed=seed)
    r = check_fspec(bad)
    assert not r.passed
    assert r.worst_violation == pytest.approx(brute_fspec_worst(bad), rel=1e-9)


def test_fspec_evaluation_count():
    # ordered disjoint nonempty (V, I) with any Z in the rest, times |X|^(|Z|+|V|+|I|)
    n, k = 3, 2
    expected = 0
    for assign in itertools.product(range(4), repeat=n):  # 0 unused, 1 V, 2 I, 3 Z
        if 1 in assign and 2 in assign:
            expected += k ** sum(a > 0 for a in assign)
    Q = fspec_from_field(random_positive_field(line_window(n), X01, 2))
    assert check_fspec(Q).count_checked == expected


def test_fspec_witness_reproduces_the_violation():
    Q = fspec_from_field(random_positive_field(line_window(3), X01, 4))
    bad, info = perturb(Q, delta=0.05, seed=9)
    r = check_fspec(bad)
    w = r.witness
    V, I, z, x, y = w["V"], w["I"], w["z"], w["x"], w["y"]
    lhs = bad[(V | I, z)][concat(x, y)]
    rhs = bad[(V, z)][x] * bad[(I, concat(z, x))][y]
    assert lhs == pytest.approx(w["lhs"], rel=1e-12)
    assert rhs == pytest.approx(w["rhs"], rel=1e-12)
    assert residual(lhs, rhs) == pytest.approx(r.worst_violation, rel=1e-9)
    assert set(info) == {"V", "z", "x", "delta"}


@pytest.mark.parametrize("X,seed", [(X01, 5), (X012, 6)])
def test_onef_check_matches_brute_force(X, seed):
    Q1 = onefspec_from_field(random_positive_field(line_window(4), X, seed))
    assert check_1fspec(Q1).passed and brute_onef_worst(Q1) <= TOL
    bad, _ = perturb(Q1, delta=0.05, seed=seed)
    r = check_1fspec(bad)
    assert not r.passed and r.witness is not None
    assert r.worst_violation == pytest.approx(brute_onef_worst(bad), rel=1e-9)


@pytest.mark.parametrize("X,seed", [(X01, 7), (X012, 8)])
def test_dspec_check_matches_brute_force(X, seed):
    QD = dspec_from_field(random_positive_field(line_window(3), X, seed))
    b = check_dspec(QD)
    assert b.passed and brute_dspec_worst(QD) <= TOL
    bad, _ = perturb(QD, delta=0.05, seed=seed)
    b = check_dspec(bad)
    assert not b.passed
    assert b["dspec_consistency"].worst_violation == pytest.approx(brute_dspec_worst(bad),
                                                                    rel=1e-9)


def test_palm_exchange_brute_force():
    Q = palm_from_field(random_positive_field(line_window(3), X01, 10))
    pts = list(Q.master)
    worst = 0.0
    for t, s in itertools.permutations(pts, 2):
        T, S = Window((t,)), Window((s,))
        others = [p for p in pts if p not in (t, s)]
        for Up in subsets(others):
            U = Window(Up)
            for x in configs((t,), X01):
                for y in configs((s,), X01):
                    for u in configs(Up, X01):
                        lhs = Q[(T, y)][x] * Q[(S | U, x)][concat(y, u)]
                        rhs = Q[(S, x)][y] * Q[(T | U, y)][concat(x, u)]
                        worst = max(worst, residual(lhs, rhs))
    b = check_palm(Q)
    assert worst <= TOL and b.passed


@pytest.mark.parametrize("derive,check", [
    (fspec_from_field, check_fspec),
    (onefspec_from_field, check_1fspec),
    (palm_from_field, check_palm),
    (dspec_from_field, check_dspec),
    (onedspec_from_field, check_1dspec),
])
@pytest.mark.parametrize("seed", range(4))
def test_perturbations_are_detected(derive, check, seed):
    P = random_positive_field(line_window(3), X012 if seed % 2 else X01, 100 + seed)
    assert check(derive(P)).passed
    bad, _ = perturb(derive(P), delta=0.05, seed=seed)
    r = check(bad)
    members = list(r) if isinstance(r, ReportBundle) else [r]
    failing = [m for m in members if not m.passed]
    assert failing and all(m.witness is not None and m.worst_violation > TOL for m in failing)


def test_palm_checks_are_vacuous_on_two_sites():
    # with two points the exchange identity reads ab = ba; nothing can be caught
    P = random_positive_field(line_window(2), X01, 3)
    bad, _ = perturb(palm_from_field(P), delta=0.2, seed=0)
    assert check_palm(bad).passed


def test_one_point_full_boundary_check_accepts_dspec():
    QD = dspec_from_field(random_positive_field(line_window(3), X01, 11))
    assert check_1dspec(QD).passed
    assert check_1dspec(QD).count_checked == check_1dspec(QD.one_point()).count_checked


def test_derived_bundles_flag_a_failed_base():
    Q = fspec_from_field(random_positive_field(line_window(3), X01, 12))
    good = check_fspec_derived(Q)
    assert good.passed and good.details["base_passed"]
    assert {r.check_name for r in good} == {
        "four_by_four", "three_by_three", "fraction", "exchange",
        "fixed_boundary_kolmogorov", "cross_exchange", "single_site_exchange",
        "boundary_reduction"}
    bad, _ = perturb(Q, delta=0.05, seed=1)
    b = check_fspec_derived(bad)
    assert not b.details["base_passed"]
    assert all(r.details.get("derivative") for r in b)
    Q1 = onefspec_from_field(random_positive_field(line_window(3), X01, 12))
    assert check_1f_derived(Q1).passed


def test_sampling_is_flagged_and_seeded():
    Q = fspec_from_field(random_positive_field(line_window(5), X01, 13))
    full = check_fspec(Q)
    assert not full.sampled
    a = check_fspec(Q, budget=500, seed=1)
    b = check_fspec(Q, budget=500, seed=1)
    assert a.sampled and a.passed
    assert a.count_checked < full.count_checked
    assert (a.count_checked, a.worst_violation) == (b.count_checked, b.worst_violation)


def test_check_system_and_type_errors():
    P = random_positive_field(line_window(3), X01, 14)
    for derive in (fspec_from_field, onefspec_from_field, palm_from_field,
                   dspec_from_field, onedspec_from_field):
        assert check_system(derive(P)).passed
    with pytest.raises(DomainError):
        check_fspec(onefspec_from_field(P))
    with pytest.raises(DomainError):
        check_palm(fspec_from_field(P))


def test_report_rendering():
    r = Report("demo", False, 0.5, 10, witness={"V": Window.of(0),
                                               "x": Configuration(Window.of(0), (1,))},
               sampled=True)
    assert str(r).startswith("FAIL demo") and "(sampled)" in str(r)
    d = r.to_dict()
    assert d["witness"] == {"V": [[0]], "x": [[[0], 1]]}
    b = ReportBundle("b", [r, Report("ok", True, 0.0, 1)])
    assert not b.passed and b.sampled and b.count_checked == 11 and b["ok"].passed


def test_violation_metric():
    v = violation(np.array([1.0, 1e-9, 0.0]), np.array([1.0 + 1e-11, 2e-9, 1e-12]))
    assert v[0] == pytest.approx(1e-11 / (1 + 1e-11))
    assert v[1] == pytest.approx(1e-9)  # both below the floor: absolute
    assert v[2] == pytest.approx(1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.integers(2, 3), st.integers(0, 2**31))
def test_field_derived_systems_always_pass(n, k, seed):
    P = random_positive_field(line_window(n), Alphabet(tuple(range(k))), seed)
    for derive in (fspec_from_field, onefspec_from_field, palm_from_field,
                   dspec_from_field, onedspec_from_field):
        b = check_system(derive(P))
        assert b.passed and b.worst_violation <= TOL


@pytest.mark.parametrize("derive,check", [
    (fspec_from_field, check_fspec),
    (onefspec_from_field, check_1fspec),
    (palm_from_field, check_palm),
    (dspec_from_field, check_dspec),
    (onedspec_from_field, check_1dspec),
])
def test_smallest_flagged_perturbation(derive, check):
    # a perturbation of 100 * tau_eq still stands out of the rounding noise
    P = random_positive_field(line_window(3), X01, 77)
    for seed in range(3):
        bad, _ = perturb(derive(P), delta=100 * TOL, seed=seed)
        assert not check(bad).passed
