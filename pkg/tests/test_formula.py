from __future__ import annotations

import random

import pytest
from hypothesis import given, strategies as st

from circ.formula import (
    Address,
    Atom,
    Bin,
    Fix,
    FormulaError,
    Occurrence,
    Unit,
    Var,
    build_priority_order,
    closure,
    connect,
    dual_address,
    has_additives,
    negate,
    parse_address,
    parse_formula,
    render,
    unfold,
    unfold_formula,
)

NU_ID = parse_formula("nu X. X")
MU_ID = parse_formula("mu X. X")
NAT = parse_formula("mu X. 1 + X")
STREAM = parse_formula("nu Y. (mu X. 1 + X) * Y")


# ---------------------------------------------------------------- negation

def test_negate_nu_id():
    assert negate(NU_ID) == MU_ID


def test_negate_involution_example():
    phi = parse_formula("mu X. X * X")
    assert negate(negate(phi)) == phi


def test_negate_par_of_atoms():
    assert negate(parse_formula("a | ~b")) == parse_formula("~a * b")


def _random_formula(rng: random.Random, depth: int, binders: int):
    roll = rng.random()
    if depth == 0 or roll < 0.25:
        choices = [Atom("a"), Atom("b", False), Unit("one"), Unit("bot")]
        if binders:
            choices.append(Var(rng.randrange(binders)))
        return rng.choice(choices)
    if roll < 0.6:
        op = rng.choice(["tensor", "par", "plus", "with"])
        return Bin(op, _random_formula(rng, depth - 1, binders), _random_formula(rng, depth - 1, binders))
    op = rng.choice(["mu", "nu"])
    return Fix(op, _random_formula(rng, depth - 1, binders + 1))


def test_negate_involution_random():
    rng = random.Random(7)
    for _ in range(300):
        phi = _random_formula(rng, 5, 0)
        assert negate(negate(phi)) == phi


@given(st.integers(min_value=0, max_value=10_000))
def test_negate_involution_hypothesis(seed):
    phi = _random_formula(random.Random(seed), 4, 0)
    assert negate(negate(phi)) == phi


def test_parse_render_roundtrip_random():
    rng = random.Random(11)
    for _ in range(200):
        phi = _random_formula(rng, 5, 0)
        assert parse_formula(render(phi)) == phi


# ---------------------------------------------------------------- unfolding

def test_unfold_nu_id():
    occ = Occurrence(NU_ID, parse_address("al"))
    out = unfold(occ)
    assert out.formula == NU_ID
    assert str(out.address) == "al:i"


def test_unfold_nat():
    occ = Occurrence(NAT, parse_address("be"))
    out = unfold(occ)
    assert out.formula == parse_formula("1 + (mu X. 1 + X)")
    assert out.address == parse_address("be").child("i")


def test_unfold_stream():
    occ = Occurrence(STREAM, parse_address("ga"))
    out = unfold(occ)
    assert out.formula == Bin("tensor", NAT, STREAM)


def test_unfold_requires_fixed_point():
    with pytest.raises(FormulaError):
        unfold(Occurrence(parse_formula("a"), parse_address("al")))


# ---------------------------------------------------------------- connect

def test_connect_par():
    phi = parse_formula("nu X. X")
    left = Occurrence(phi, parse_address("al:l"))
    right = Occurrence(phi, parse_address("al:r"))
    got = connect("par", left, right)
    assert got.formula == Bin("par", phi, phi)
    assert got.address == parse_address("al")


def test_connect_mismatch():
    left = Occurrence(Unit("one"), parse_address("al:l"))
    right = Occurrence(Unit("bot"), parse_address("be:r"))
    with pytest.raises(FormulaError):
        connect("tensor", left, right)


def test_connect_units():
    left = Occurrence(Unit("one"), parse_address("ga:l"))
    right = Occurrence(Unit("bot"), parse_address("ga:r"))
    got = connect("tensor", left, right)
    assert got.formula == parse_formula("1 * bot")
    assert got.address == parse_address("ga")


# ---------------------------------------------------------------- addresses

def test_dual_address():
    alpha = parse_address("al:ri")
    assert str(dual_address(alpha)) == "al^:ri"
    beta = parse_address("be:l")
    assert dual_address(dual_address(beta)) == beta


def test_dual_occurrence():
    occ = Occurrence(NU_ID, parse_address("al"))
    dual = occ.dual()
    assert dual.formula == MU_ID
    assert dual.address == parse_address("al^")


def test_address_prefix_and_disjoint():
    a = parse_address("al")
    b = parse_address("al:ri")
    c = parse_address("al:l")
    assert a.is_prefix_of(b)
    assert not b.is_prefix_of(a)
    assert b.disjoint(c)
    assert not a.disjoint(b)
    assert a.disjoint(dual_address(a))


# ---------------------------------------------------------------- closure & priorities

def test_closure_is_closed():
    rng = random.Random(3)
    for _ in range(50):
        phi = _random_formula(rng, 4, 0)
        cl = set(closure([phi]))
        for member in cl:
            if isinstance(member, Bin):
                assert member.left in cl and member.right in cl
            if isinstance(member, Fix):
                assert unfold_formula(member) in cl


def test_priority_nu_is_even():
    order = build_priority_order([Occurrence(NU_ID, parse_address("al"))])
    assert order.priority(NU_ID) % 2 == 0


def test_priority_outer_mu_dominates_inner_nu():
    phi = parse_formula("mu X. nu Y. X")
    order = build_priority_order([Occurrence(phi, parse_address("al"))])
    inner = unfold_formula(phi)  # nu Y. (mu X. nu Y. X)
    assert isinstance(inner, Fix) and inner.op == "nu"
    assert order.priority(phi) < order.priority(inner)
    assert order.priority(phi) % 2 == 1


def test_priority_both_parities():
    order = build_priority_order(
        [Occurrence(NU_ID, parse_address("al")), Occurrence(MU_ID, parse_address("be"))]
    )
    assert order.priority(NU_ID) % 2 == 0
    assert order.priority(MU_ID) % 2 == 1
    assert order.priority(NU_ID) != order.priority(MU_ID)


def test_priority_respects_subformulas():
    order = build_priority_order([Occurrence(STREAM, parse_address("al"))])
    assert order.priority(NAT) < order.priority(STREAM)


def test_additive_flag():
    assert has_additives(parse_formula("top * a"))
    assert has_additives(parse_formula("nu X. X + X"))
    assert not has_additives(parse_formula("nu X. X * (bot | 1)"))
