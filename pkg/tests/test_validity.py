from __future__ import annotations

import pytest

from circ.proof import Graph, Lasso, parse_proof, validate
from circ.shortcuts import build_effect_table
from circ.validity import (
    build_automaton,
    check_k_valid,
    check_straight,
    check_weak,
    find_min_k,
    oracle_check,
)
from circ.threads import UnsupportedFragment

from conftest import load_graph


# ---------------------------------------------------------------- golden verdicts

def test_pi0_k1_valid(pi0):
    assert check_k_valid(pi0, 1).valid


def test_pi0_k0_invalid(pi0):
    verdict = check_k_valid(pi0, 0)
    assert not verdict.valid
    assert verdict.witness is not None
    assert set(verdict.witness.loop) == {"cut", "nu1", "nu2"}


def test_pi0_straight_invalid(pi0):
    assert not check_straight(pi0).valid


def test_pi0_min_k(pi0):
    k, bound = find_min_k(pi0, 4)
    assert k == 1
    assert bound >= k


def test_validproofs_left(valid_left):
    assert check_k_valid(valid_left, 0).valid
    k, bound = find_min_k(valid_left, 4)
    assert k == 0
    assert not check_straight(valid_left).valid


def test_validproofs_right(valid_right):
    for k in range(9):
        assert not check_k_valid(valid_right, k).valid
    k, _bound = find_min_k(valid_right, 8)
    assert k is None


def test_unsound_bouncing_invalid(unsound):
    for k in range(9):
        assert not check_k_valid(unsound, k).valid


def test_unsound_weak_valid(unsound):
    assert check_weak(unsound, 2).valid


def test_validproofs_right_weak_valid(valid_right):
    assert check_weak(valid_right, 2).valid


def test_straight_valid_cut_free_loop():
    text = """
proof nuloop
node n0
  seq nu X. X @ a
  rule nu@a
  prem back(n0; a->a:i)
root n0
"""
    proof = parse_proof(text)
    assert validate(proof) == []
    graph = Graph(proof)
    assert check_straight(graph).valid
    assert check_k_valid(graph, 0).valid
    assert check_weak(graph, 1).valid


# ---------------------------------------------------------------- hierarchy

def test_monotone_in_k(pi0, valid_left, valid_right, unsound):
    for graph in (pi0, valid_left, valid_right, unsound):
        table = build_effect_table(graph, 8)
        previous = False
        for k in range(9):
            now = check_k_valid(graph, k, table).valid
            assert not (previous and not now), f"validity lost at k={k}"
            previous = now


def test_straight_implies_zero_implies_weak(pi0, valid_left, valid_right, unsound):
    for graph in (pi0, valid_left, valid_right, unsound):
        straight = check_straight(graph).valid
        zero = check_k_valid(graph, 0).valid
        two = check_k_valid(graph, 2).valid
        weak = check_weak(graph, 2).valid
        if straight:
            assert zero
        if zero:
            assert two
        if two:
            assert weak


# ---------------------------------------------------------------- oracle

def test_oracle_agrees_on_golden(pi0, valid_left, valid_right, unsound):
    for graph in (pi0, valid_left, valid_right, unsound):
        for k in (0, 1, 2):
            fast = check_k_valid(graph, k).valid
            slow = oracle_check(graph, k, len(graph.proof.nodes) + 2).valid
            assert fast == slow, (graph.proof.name, k)


def test_oracle_confirms_pi0_witness(pi0):
    verdict = check_k_valid(pi0, 0)
    assert not verdict.valid
    oracle = oracle_check(pi0, 0, len(pi0.proof.nodes) + 2)
    assert not oracle.valid


def test_inclusion_self_test(pi0):
    # L(A) included in L(A): every lasso accepted by the automaton at k=1
    table = build_effect_table(pi0, 1)
    aut = build_automaton(pi0, table)
    assert check_k_valid(pi0, 1, table).valid
    assert aut.transitions


# ---------------------------------------------------------------- errors

def test_additive_rejected():
    graph = load_graph("additive.proof")
    with pytest.raises(UnsupportedFragment):
        check_k_valid(graph, 1)
    with pytest.raises(UnsupportedFragment):
        check_straight(graph)


# ---------------------------------------------------------------- height family

def test_deep_bounce_family():
    from randgraphs import deep_bounce

    for n in (1, 2, 3):
        graph = deep_bounce(n)
        for k in range(n):
            assert not check_k_valid(graph, k).valid
        assert check_k_valid(graph, n).valid
        min_k, bound = find_min_k(graph, n + 2)
        assert min_k == n
        assert bound >= min_k


# ---------------------------------------------------------------- random differential

def test_oracle_agreement_random_graphs():
    from randgraphs import random_cyclic_graphs

    graphs = random_cyclic_graphs(60, start_seed=1000)
    assert len(graphs) == 60
    for graph in graphs:
        for k in (0, 1, 2):
            fast = check_k_valid(graph, k).valid
            slow = oracle_check(graph, k, len(graph.proof.nodes) + 2).valid
            assert fast == slow, (graph.proof.name, k)
