from dataclasses import replace
from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from fragmc.casegen import fx_intro, gen_fx
from fragmc.model import parse_model
from fragmc.oracle import (
    NonStochasticAtPoint,
    can_reach,
    instantiate,
    oracle_reach,
    relative_error,
    solve_reach,
)
from helpers import points, random_model

RETRY = """param p
param r
init 0
label 1 succ
trans 0 1 p
trans 0 0 (1 - p) * r
trans 0 2 (1 - p) * (1 - r)
trans 1 1 1
trans 2 2 1
"""


def value_iteration(c, sweeps=20_000):
    """Plain fixed-point iteration in floats: an independent cross-check."""
    x = {s: (1.0 if s in c.targets else 0.0) for s in range(c.n)}
    for _ in range(sweeps):
        new = {s: 1.0 if s in c.targets else sum(float(p) * x[t] for t, p in c.rows[s].items())
               for s in range(c.n)}
        if max(abs(new[s] - x[s]) for s in x) < 1e-15:
            return new[c.initial]
        x = new
    return x[c.initial]


def sympy_reach(c):
    """Direct dense solve with sympy rationals on the non-target states."""
    useful = sorted(can_reach(c) - set(c.targets))
    idx = {s: i for i, s in enumerate(useful)}
    n = len(useful)
    if c.initial in c.targets:
        return Fraction(1)
    if c.initial not in idx:
        return Fraction(0)
    A = sympy.zeros(n, n)
    b = sympy.zeros(n, 1)
    for s in useful:
        A[idx[s], idx[s]] += 1
        for t, p in c.rows[s].items():
            q = sympy.Rational(p.numerator, p.denominator)
            if t in c.targets:
                b[idx[s], 0] += q
            elif t in idx:
                A[idx[s], idx[t]] -= q
    x = A.LUsolve(b)
    v = sympy.nsimplify(x[idx[c.initial]])
    return Fraction(int(v.p), int(v.q))


def test_instantiate_fx_intro():
    c = instantiate(fx_intro(), {0: Fraction(1, 2), 1: Fraction(1, 2)}, {2})
    assert c.n == 4 and c.rows[0] == {2: Fraction(1, 2), 1: Fraction(1, 2)}


def test_instantiate_seq_r():
    m = gen_fx("SEQ_R", 2)
    c = instantiate(m, points(m, 1)[0])
    assert c.n == 29
    assert all(sum(r.values()) == 1 for r in c.rows.values())


def test_non_stochastic_point():
    with pytest.raises(NonStochasticAtPoint) as e:
        instantiate(fx_intro(), {0: Fraction(6, 5), 1: Fraction(1, 2)})
    assert e.value.rows


def test_fx_intro_exact():
    assert oracle_reach(fx_intro(), {2}, {0: Fraction("0.95"), 1: Fraction("0.8")}) == Fraction(99, 100)


def test_unreachable_target_is_zero():
    m = parse_model("init 0\ntrans 0 0 1\ntrans 1 1 1\n")
    assert oracle_reach(m, {1}, {}) == 0


def test_retry_loop():
    m = parse_model(RETRY)
    assert oracle_reach(m, {1}, {0: Fraction(1, 2), 1: Fraction(1, 2)}) == Fraction(2, 3)


def test_target_is_initial():
    assert oracle_reach(fx_intro(), {0}, {0: Fraction(1, 3), 1: Fraction(1, 3)}) == 1


def test_relative_error():
    assert relative_error(Fraction(1), Fraction(1)) == 0
    assert relative_error(0, 0) == 0
    assert relative_error(Fraction(1), Fraction(11, 10)) == pytest.approx(1 / 11)


@pytest.mark.parametrize("seed", range(8))
def test_against_sympy_and_iteration(seed):
    m = random_model(seed)
    for pt in points(m, 2, seed=seed):
        c = instantiate(m, pt, m.states_with_label("target"))
        exact = solve_reach(c)
        assert exact == sympy_reach(c)
        assert abs(float(exact) - value_iteration(c)) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_pruning_and_float_mode(seed):
    m = random_model(seed, n_states=None)
    for pt in points(m, 2, seed=seed):
        c = instantiate(m, pt, m.states_with_label("target"))
        pruned = solve_reach(c)
        assert 0 <= pruned <= 1
        assert solve_reach(c, prune=False) == pruned
        assert abs(solve_reach(c, exact=False) - float(pruned)) <= 1e-12
        dead = set(range(c.n)) - can_reach(c)
        for s in dead:
            assert solve_reach(replace(c, initial=s)) == 0


def test_absorbing_mass_gives_one():
    m = parse_model("param p\ninit 0\ntrans 0 1 p\ntrans 0 2 1-p\ntrans 1 3 1\ntrans 2 3 1\ntrans 3 3 1\n")
    assert oracle_reach(m, {3}, {0: Fraction(1, 7)}) == 1
