from __future__ import annotations

import pytest

from circ.proof import PointedSequent, parse_proof, validate, Graph
from circ.shortcuts import (
    DEAD_END,
    NOT_AXIOM_FIRST,
    OVERFLOW,
    NoShortcut,
    Shortcut,
    build_effect_table,
    minimal_shortcut,
    resolve,
)
from circ.threads import UnsupportedFragment

from conftest import load_graph


# ---------------------------------------------------------------- resolve

def test_resolve_empty(pi0):
    p = PointedSequent("cut", 0)
    assert resolve((), p, pi0) == p


def test_resolve_cut_then_unfold(pi0):
    p = PointedSequent("cut", 0)
    end = resolve(("c_r", "i"), p, pi0)
    assert end == PointedSequent("nu2", 0)


def test_resolve_side_condition(pi0):
    # the followed occurrence is not principal at the cut node
    assert resolve(("l",), PointedSequent("cut", 0), pi0) is None


# ---------------------------------------------------------------- minimal shortcuts

def test_pi0_shortcut(pi0):
    sc = minimal_shortcut(pi0, PointedSequent("cut", 0), 1)
    assert isinstance(sc, Shortcut)
    assert sc.max_height == 1
    assert sc.effect == ("c_r", "i")
    assert sc.end == PointedSequent("nu2", 0)
    # endpoints are structurally equivalent
    assert pi0.occurrence(sc.start).formula == pi0.occurrence(sc.end).formula


def test_pi0_shortcut_overflow_at_zero(pi0):
    out = minimal_shortcut(pi0, PointedSequent("cut", 0), 0)
    assert isinstance(out, NoShortcut) and out.reason == OVERFLOW


def test_validproofs_right_not_axiom_first(valid_right):
    out = minimal_shortcut(valid_right, PointedSequent("cut", 0), 1)
    assert isinstance(out, NoShortcut) and out.reason == NOT_AXIOM_FIRST


def test_validproofs_left_height_zero(valid_left):
    sc = minimal_shortcut(valid_left, PointedSequent("cut", 0), 0)
    assert isinstance(sc, Shortcut)
    assert sc.max_height == 0
    assert sc.effect == ("c_r",)


# ---------------------------------------------------------------- effect table

def test_pi0_effect_table(pi0):
    table = build_effect_table(pi0, 1)
    some = {p: e for p, e in table.entries.items() if isinstance(e, Shortcut)}
    assert set(some) == {PointedSequent("cut", 0)}
    assert len(table.entries) == 7


def test_effect_resolves(pi0, valid_left, unsound):
    for graph in (pi0, valid_left, unsound):
        table = build_effect_table(graph, 3)
        for p, entry in table.entries.items():
            if isinstance(entry, Shortcut):
                assert resolve(entry.effect, p, graph) == entry.end


def test_shortcut_determinism(pi0):
    first = minimal_shortcut(pi0, PointedSequent("cut", 0), 2)
    second = minimal_shortcut(pi0, PointedSequent("cut", 0), 2)
    assert first == second


def test_table_monotone_in_k(pi0, valid_left, unsound):
    for graph in (pi0, valid_left, unsound):
        for k in range(3):
            small = build_effect_table(graph, k)
            big = build_effect_table(graph, k + 1)
            for p, entry in small.entries.items():
                if isinstance(entry, Shortcut):
                    assert big.entries[p] == entry
        bigger = build_effect_table(graph, 4)
        assert bigger.restrict(2).entries == build_effect_table(graph, 2).entries


def test_axiom_free_graph_all_none():
    text = """
proof loop
node n0
  seq nu X. X @ a
  rule nu@a
  prem back(n0; a->a:i)
root n0
"""
    proof = parse_proof(text)
    assert validate(proof) == []
    table = build_effect_table(Graph(proof), 2)
    assert all(isinstance(e, NoShortcut) for e in table.entries.values())


def test_additive_rejected():
    graph = load_graph("additive.proof")
    with pytest.raises(UnsupportedFragment):
        build_effect_table(graph, 1)
