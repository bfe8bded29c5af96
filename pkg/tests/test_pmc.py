import time
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fragmc.casegen import fx_intro, gen_fx
from fragmc.fragmentation import Fragment, fragmentation
from fragmc.model import parse_model
from fragmc.oracle import oracle_reach
from fragmc.pmc import (
    NotAMultiStateFragment,
    ELIM_ORDERS,
    PmcBudgetExceeded,
    PmcTimeout,
    SelfLoopProbabilityOne,
    eliminate_reach,
    fragment_model,
    fragment_reach_all,
    monolithic,
)
from fragmc.ratfun import parse_expr, rf_eval
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

# two services with retries: s1=0, f1=1, s2=2, f2=3, ok=4, ko=5
SEQ_R_BLOCK = """param p1
param r1
param p2
param r2
init 0
trans 0 4 p1
trans 0 1 1 - p1
trans 1 0 r1
trans 1 2 1 - r1
trans 2 4 p2
trans 2 3 1 - p2
trans 3 2 r2
trans 3 5 1 - r2
trans 4 4 1
trans 5 5 1
"""

# input 0, inner 1 and 2, outputs 3 and 4, exits to 5 and 6
TWO_OUTPUTS = """param a
param b
param c
init 0
trans 0 1 a
trans 0 2 1 - a
trans 1 3 b
trans 1 2 1 - b
trans 2 4 c
trans 2 1 1 - c
trans 3 5 1
trans 4 6 1
trans 5 5 1
trans 6 6 1
"""


def test_fx_intro_formula():
    m = fx_intro()
    got = eliminate_reach(m, {2})[2]
    want = parse_expr("p1 + (1 - p1) * p2", m.params)
    for pt in points(m, 20):
        assert rf_eval(got, pt) == rf_eval(want, pt)


def test_retry_loop_formula():
    m = parse_model(RETRY)
    got = eliminate_reach(m, {1})[1]
    want = parse_expr("p / (1 - (1 - p) * r)", m.params)
    for pt in points(m, 20):
        assert rf_eval(got, pt) == rf_eval(want, pt) == oracle_reach(m, {1}, pt)


def test_target_is_initial():
    m = fx_intro()
    assert eliminate_reach(m, {0})[0].constant_value() == 1


def test_seq_r_block_geometric_series():
    m = parse_model(SEQ_R_BLOCK)
    reach = eliminate_reach(m, {4, 5})
    P = m.params
    a1 = parse_expr("p1 / (1 - (1 - p1) * r1)", P)
    f1 = parse_expr("(1 - p1) * (1 - r1) / (1 - (1 - p1) * r1)", P)
    a2 = parse_expr("p2 / (1 - (1 - p2) * r2)", P)
    f2 = parse_expr("(1 - p2) * (1 - r2) / (1 - (1 - p2) * r2)", P)
    for pt in points(m, 10):
        A1, F1, A2, F2 = (rf_eval(f, pt) for f in (a1, f1, a2, f2))
        assert rf_eval(reach[4], pt) == A1 + F1 * A2
        assert rf_eval(reach[5], pt) == F1 * F2


def test_seq_r_block_as_fragment():
    m = parse_model(SEQ_R_BLOCK)
    fr = fragmentation(m, {4, 5})
    multi = [f for f in fr.fragments if not f.is_single]
    assert len(multi) == 1
    reach = fragment_reach_all(fr.model, multi[0])
    assert len(reach) >= 2
    for pt in points(m, 10):
        assert sum(rf_eval(f, pt) for f in reach.values()) == 1


def test_fragment_model_two_outputs():
    m = parse_model(TWO_OUTPUTS)
    f = Fragment(frozenset({0, 1, 2, 3, 4}), 0, frozenset({3, 4}))
    fm = fragment_model(m, f)
    assert fm.model.n_states == 5 and fm.model.initial == 0
    for o in fm.outputs:
        lo = fm.local[o]
        assert list(fm.model.successors(lo)) == [lo]
    reach = fragment_reach_all(m, f)
    for pt in points(m, 10):
        assert sum(rf_eval(g, pt) for g in reach.values()) == 1


def test_fragment_model_drops_output_edge_to_input():
    m = parse_model("param p\ninit 0\ntrans 0 1 1\ntrans 1 0 p\ntrans 1 2 1-p\ntrans 2 2 1\n")
    f = Fragment(frozenset({0, 1}), 0, frozenset({1}))
    fm = fragment_model(m, f)
    assert fm.model.successors(fm.local[1]) == {fm.local[1]: fm.model.successors(fm.local[1])[fm.local[1]]}
    assert fragment_reach_all(m, f)[1].constant_value() == 1


def test_single_fragment_cases():
    m = fx_intro()
    with pytest.raises(NotAMultiStateFragment):
        fragment_model(m, Fragment.single(1))
    assert fragment_reach_all(m, Fragment.single(1))[1].constant_value() == 1


def test_self_loop_probability_one():
    m = parse_model("init 0\ntrans 0 1 1\ntrans 1 1 1\ntrans 2 2 1\n")
    # state 1 absorbs everything but is no target; pruning removes it, so the answer is 0
    assert eliminate_reach(m, {2})[2].is_zero()
    m2 = parse_model("param p\ninit 0\ntrans 0 1 p\ntrans 0 2 1-p\ntrans 1 1 1\ntrans 1 2 0\ntrans 2 2 1\n")
    assert eliminate_reach(m2, {2})[2].structurally_equal(parse_expr("1 - p", m2.params))
    # a self-loop of one on a state that still reaches the target structurally
    m3 = parse_model("param p\ninit 0\ntrans 0 1 1\ntrans 1 1 1\ntrans 1 3 p\n"
                     "trans 3 2 1\ntrans 2 2 1\n")
    with pytest.raises(SelfLoopProbabilityOne):
        eliminate_reach(m3, {2})


def test_timeout_and_budget():
    m = gen_fx("SEQ_R", 2)
    target = m.states_with_label("successFX")
    with pytest.raises(PmcTimeout):
        eliminate_reach(m, target, deadline=time.monotonic() - 1)
    with pytest.raises(PmcBudgetExceeded):
        monolithic(m, target, max_terms=500)


def test_elimination_orders_agree():
    m = gen_fx("SEQ", 1)
    target = m.states_with_label("successFX")
    forms = [monolithic(m, target, order=o) for o in ELIM_ORDERS]
    for pt in points(m, 20):
        vals = {rf_eval(f, pt) for f in forms}
        assert len(vals) == 1 and vals == {oracle_reach(m, target, pt)}


def test_parameter_free_matches_oracle():
    m = parse_model("init 0\ntrans 0 1 1/3\ntrans 0 0 1/3\ntrans 0 2 1/3\ntrans 1 1 1\ntrans 2 2 1\n")
    assert eliminate_reach(m, {1})[1].constant_value() == oracle_reach(m, {1}, {}) == Fraction(1, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_random_models_match_oracle_in_unit_interval(seed):
    m = random_model(seed, n_states=min(3 + seed % 8, 10))
    target = m.states_with_label("target")
    f = monolithic(m, target, max_terms=50_000)
    other = monolithic(m, target, order="id", max_terms=50_000)
    for pt in points(m, 3, seed=seed):
        v = rf_eval(f, pt)
        assert 0 <= v <= 1
        assert v == oracle_reach(m, target, pt) == rf_eval(other, pt)
