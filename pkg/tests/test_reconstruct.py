import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from condfield import (
    Alphabet,
    Configuration,
    DomainError,
    FSpec,
    ReconstructionError,
    Window,
    check_fspec,
    dlr_residual,
    enumerate_configurations,
    field_from_1fspec,
    field_from_fspec,
    field_from_palm,
    fspec_from_field,
    gibbs_field,
    grid_window,
    ising_potential,
    lift_1f_to_f_product,
    lift_1f_to_f_ratio,
    lift_palm_to_f,
    line_window,
    marginal,
    onefspec_from_field,
    palm_from_field,
    perturb,
    product_field,
    random_positive_field,
    reconstruct_1fspec,
    reconstruct_fspec,
    reconstruct_palm,
)

X01 = Alphabet((0, 1))
X012 = Alphabet((0, 1, 2))
TOL = 1e-10

SHAPES = [
    (line_window(1), X01),
    (line_window(2), X01),
    (line_window(3), X012),
    (grid_window(2, 2), X01),
    (line_window(5), X01),
    (grid_window(2, 3), X01),
]


def brook_oracle(Q1):
    """P(x) / P(u) = prod_j q_j^{x_<j u_>j}(x_j) / q_j^{x_<j u_>j}(u_j), u the first symbol."""
    pts = list(Q1.master)
    u0 = Q1.alphabet.symbols[0]
    weights = {}
    for x in enumerate_configurations(Q1.master, Q1.alphabet):
        w = 1.0
        for j, t in enumerate(pts):
            cond = {p: x[p] for p in pts[:j]}
            cond.update({p: u0 for p in pts[j + 1:]})
            z = Configuration.from_mapping(cond)
            q = Q1[(Window((t,)), z)]
            w *= q[Configuration(Window((t,)), (x[t],))] / q[Configuration(Window((t,)), (u0,))]
        weights[x.values] = w
    total = sum(weights.values())
    return {k: v / total for k, v in weights.items()}


def test_brook_oracle_agrees_with_one_point_reconstruction():
    P = random_positive_field(line_window(3), X012, 21)
    rebuilt = field_from_1fspec(onefspec_from_field(P))
    for key, p in brook_oracle(onefspec_from_field(P)).items():
        assert rebuilt.joint[Configuration(P.master, key)] == pytest.approx(p, rel=1e-12)
        assert P.joint[Configuration(P.master, key)] == pytest.approx(p, rel=1e-12)


@pytest.mark.parametrize("window,X", SHAPES)
def test_round_trips(window, X):
    P = random_positive_field(window, X, len(window))
    rec = reconstruct_fspec(fspec_from_field(P))
    assert np.max(np.abs(rec.field.array - P.array)) <= TOL
    assert rec.defect <= 1e-12
    rec1 = reconstruct_1fspec(onefspec_from_field(P))
    assert np.max(np.abs(rec1.field.array - P.array)) <= TOL
    if len(window) >= 2:
        recp = reconstruct_palm(palm_from_field(P))
        assert np.max(np.abs(recp.field.array - P.array)) <= TOL
    else:
        with pytest.raises(DomainError):
            reconstruct_palm(palm_from_field(P))


def test_reconstruction_cross_checks_are_reported():
    P = random_positive_field(line_window(4), X01, 2)
    rec = reconstruct_fspec(fspec_from_field(P))
    assert rec.checked > 0 and rec.disagreement <= TOL and not rec.sampled
    small = reconstruct_fspec(fspec_from_field(P), probe_limit=2, probe_samples=2)
    assert small.sampled
    rec1 = reconstruct_1fspec(onefspec_from_field(P))
    assert rec1.method and rec1.checked > 0


def test_reconstructed_field_is_fixed_by_rederiving():
    P = random_positive_field(grid_window(2, 2), X012, 5)
    Q = fspec_from_field(P)
    assert fspec_from_field(field_from_fspec(Q)).max_abs_diff(Q) <= TOL


@pytest.mark.parametrize("derive,rebuild", [
    (fspec_from_field, reconstruct_fspec),
    (onefspec_from_field, reconstruct_1fspec),
    (palm_from_field, reconstruct_palm),
])
def test_inconsistent_systems_are_refused(derive, rebuild):
    P = random_positive_field(line_window(3), X01, 1)
    bad, _ = perturb(derive(P), delta=0.05, seed=2)
    with pytest.raises(ReconstructionError) as info:
        rebuild(bad)
    assert info.value.witness is not None


@pytest.mark.parametrize("window,X", SHAPES[1:])
def test_lifts_reproduce_the_field_system(window, X):
    P = random_positive_field(window, X, 7)
    truth = fspec_from_field(P)
    Q1 = onefspec_from_field(P)
    product = lift_1f_to_f_product(Q1)
    ratio = lift_1f_to_f_ratio(Q1)
    recurrent = lift_1f_to_f_ratio(Q1, recurrent=True)
    other_ref = lift_1f_to_f_ratio(Q1, u=X.symbols[-1])
    palm = lift_palm_to_f(palm_from_field(P))
    for lifted in (product, ratio, recurrent, other_ref, palm):
        assert isinstance(lifted, FSpec)
        assert lifted.max_abs_diff(truth) <= TOL
        assert check_fspec(lifted).passed


def test_lifts_keep_one_point_tables_exactly():
    Q1 = onefspec_from_field(random_positive_field(line_window(4), X012, 3))
    for lifted in (lift_1f_to_f_product(Q1), lift_1f_to_f_ratio(Q1),
                   lift_1f_to_f_ratio(Q1, recurrent=True)):
        sl = lifted.one_point()
        for pair, table in Q1.tables():
            np.testing.assert_array_equal(sl.array(*pair), table)


def test_lifts_of_a_product_field():
    P = product_field(line_window(3), X01, [0.2, 0.8])
    lifted = lift_1f_to_f_product(onefspec_from_field(P))
    for (v, s), table in lifted.tables():
        expected = np.ones(())
        for _ in range(bin(v).count("1")):
            expected = np.multiply.outer(expected, [0.2, 0.8])
        np.testing.assert_allclose(table, np.broadcast_to(expected, table.shape), atol=1e-15)


@pytest.mark.parametrize("lift", [lift_1f_to_f_product, lift_1f_to_f_ratio])
def test_lifts_refuse_inconsistent_one_point_systems(lift):
    P = random_positive_field(line_window(3), X01, 1)
    bad, _ = perturb(onefspec_from_field(P), delta=0.05, seed=2)
    with pytest.raises(ReconstructionError):
        lift(bad)


def test_commuting_routes_on_ising():
    S = Alphabet((-1, 1))
    W = grid_window(2, 3)
    P = gibbs_field(W, S, ising_potential(W, S, J=0.7, h=0.1), 1.0)
    a = field_from_1fspec(onefspec_from_field(P))
    b = field_from_fspec(lift_1f_to_f_product(onefspec_from_field(P)))
    c = field_from_palm(palm_from_field(P))
    d = field_from_fspec(lift_palm_to_f(palm_from_field(P)))
    for f in (a, b, c, d):
        assert np.max(np.abs(f.array - P.array)) <= TOL


def test_dlr_residual():
    P = random_positive_field(line_window(3), X01, 31)
    other = random_positive_field(line_window(3), X01, 32)
    assert dlr_residual(fspec_from_field(P), P) <= TOL
    assert dlr_residual(fspec_from_field(other), P) >= 1e-3


def test_dlr_residual_brute_force():
    """P_{V u L}(x, y) summed against kernels: sum_w P_{L}(w) q_V^w(x) = P_V(x)."""
    P = random_positive_field(line_window(3), X01, 33)
    Q = fspec_from_field(random_positive_field(line_window(3), X01, 34))
    worst = 0.0
    pts = list(P.master)
    for r in range(1, 4):
        for Vp in itertools.combinations(pts, r):
            V = Window(Vp)
            rest = [p for p in pts if p not in Vp]
            for q in range(len(rest) + 1):
                for Lp in itertools.combinations(rest, q):
                    L = Window(Lp)
                    mV, mL = marginal(P, V), marginal(P, L)
                    for x in enumerate_configurations(V, X01):
                        s = sum(mL[w] * Q[(V, w)][x] for w in enumerate_configurations(L, X01))
                        worst = max(worst, abs(s - mV[x]))
    assert dlr_residual(Q, P) == pytest.approx(worst, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 4), st.integers(2, 3), st.integers(0, 2**31))
def test_every_route_round_trips(n, k, seed):
    P = random_positive_field(line_window(n), Alphabet(tuple(range(k))), seed)
    for f in (field_from_fspec(fspec_from_field(P)),
              field_from_1fspec(onefspec_from_field(P)),
              field_from_palm(palm_from_field(P))):
        assert np.max(np.abs(f.array - P.array)) <= TOL


def test_lift_outputs_are_positive():
    P = random_positive_field(line_window(4), X01, 41)
    for lifted in (lift_1f_to_f_product(onefspec_from_field(P)),
                   lift_1f_to_f_ratio(onefspec_from_field(P)),
                   lift_palm_to_f(palm_from_field(P))):
        assert lifted.min_entry() > 0
