from __future__ import annotations

import pytest

from circ.formula import Sequent, parse_formula
from circ.multicut import (
    ReduceReport,
    apply_reduction,
    enumerate_redexes,
    fair_reduce,
    format_log,
    init_multicut,
    prefix_proof,
    trace_of,
    view_rule,
    view_sequent,
)
from circ.proof import Graph, parse_proof, serialize, unfold_to_depth, validate
from circ.threads import UnsupportedFragment

from conftest import load_graph


NU_LOOP = """
proof nuloop
node n0
  seq nu X. X @ a
  rule nu@a
  prem back(n0; a->a:i)
root n0
"""


def _graph(text: str) -> Graph:
    proof = parse_proof(text)
    assert validate(proof) == []
    return Graph(proof)


# ---------------------------------------------------------------- init

def test_init_state(pi0):
    state = init_multicut(pi0)
    assert len(state.frontier) == 1
    mc = state.frontier[0]
    assert len(mc.premises) == 1
    assert mc.conclusion == pi0.node("cut").conclusion
    assert mc.iota == {occ.address: occ.address for occ in mc.conclusion}
    assert len(state.trace) == 1  # the conclusion sequent opens the trace
    assert state.check_invariants() == []


def test_init_first_redex_is_merge(pi0):
    state = init_multicut(pi0)
    labels = enumerate_redexes(state)
    assert len(labels) == 1
    assert labels[0][0] == "merge"


# ---------------------------------------------------------------- pi0 loop

def test_pi0_reduction_pattern(pi0):
    state = init_multicut(pi0)
    report = fair_reduce(state, depth=4)
    assert report.outcome == "ReachedDepth"
    kinds = [label[0] for label, _step in state.log]
    assert kinds == ["merge", "princ", "cutax", "ext"] * 4
    proof = prefix_proof(state)
    rules = [node.rule.kind for node in proof]
    assert rules == ["nu", "nu", "nu", "nu", "open"]


def test_pi0_conclusion_preserved(pi0):
    state = init_multicut(pi0)
    original = state.conclusion
    labels = []
    for _ in range(12):
        enabled = enumerate_redexes(state)
        assert enabled
        apply_reduction(state, enabled[0])
        assert state.check_invariants() == []
        assert state.conclusion == original


def test_pi0_log_replay_determinism(pi0):
    first = init_multicut(pi0)
    fair_reduce(first, depth=3)
    second = init_multicut(pi0)
    for label, _step in first.log:
        apply_reduction(second, label)
    assert serialize(prefix_proof(first)) == serialize(prefix_proof(second))
    assert format_log(first) == format_log(second)


# ---------------------------------------------------------------- cut-free proofs

def test_cut_free_proof_reduces_to_its_unfolding():
    graph = _graph(NU_LOOP)
    state = init_multicut(graph)
    report = fair_reduce(state, depth=3)
    assert report.outcome == "ReachedDepth"
    assert all(label[0] == "ext" for label, _ in state.log)
    prefix = prefix_proof(state)

    tree = unfold_to_depth(graph.proof, 3)
    flat_prefix = []
    for node in prefix:
        flat_prefix.append((node.rule.kind, str(node.conclusion)))
    flat_tree = []

    def walk(t):
        if t.children is None:
            flat_tree.append(("open", str(t.conclusion)))
            return
        flat_tree.append((t.rule.split("@")[0], str(t.conclusion)))
        for child in t.children:
            walk(child)

    walk(tree)
    assert flat_prefix == flat_tree


def test_axiom_proof_emits_itself():
    text = """
proof axonly
node n0
  seq nu X. X @ a, mu X. X @ b
  rule ax(a, b)
root n0
"""
    graph = _graph(text)
    state = init_multicut(graph)
    report = fair_reduce(state, depth=2)
    assert report.outcome == "ReachedDepth"
    prefix = prefix_proof(state)
    rules = [node.rule.kind for node in prefix]
    assert rules == ["ax"]


def test_tensor_split():
    text = """
proof tensorsplit
node n0
  seq (1 * 1) @ a
  rule tensor@a
  prem n1
  prem n2
node n1
  seq 1 @ a:l
  rule one@a:l
node n2
  seq 1 @ a:r
  rule one@a:r
root n0
"""
    graph = _graph(text)
    state = init_multicut(graph)
    report = fair_reduce(state, depth=3)
    assert report.outcome == "ReachedDepth"
    prefix = prefix_proof(state)
    rules = [node.rule.kind for node in prefix]
    assert rules == ["tensor", "one", "one"]


# ---------------------------------------------------------------- unsound loop

def test_unsound_reduction_never_productive(unsound):
    state = init_multicut(unsound)
    report = fair_reduce(state, depth=1, step_budget=300)
    assert report.outcome == "BudgetExhausted"
    assert report.emitted == 0
    assert all(label[0] in ("merge", "cutax", "princ") for label, _ in state.log)


# ---------------------------------------------------------------- trace

def test_trace_monotone_and_borders(pi0):
    state = init_multicut(pi0)
    sizes = [len(state.trace)]
    for _ in range(8):
        labels = enumerate_redexes(state)
        apply_reduction(state, labels[0])
        sizes.append(len(state.trace))
    assert sizes == sorted(sizes)
    report = trace_of(state)
    border_cursors = {cursor for cursor, _seq, _d in report.borders}
    for mc in state.frontier.values():
        for cursor in mc.premises:
            assert cursor in border_cursors


def test_trace_border_has_distinguished_occurrence():
    # a premise that enters the multicut but never reduces: the par side of
    # the unsound proof's outer cut
    graph = load_graph("unsound.proof")
    state = init_multicut(graph)
    fair_reduce(state, depth=1, step_budget=40)
    report = trace_of(state)
    stuck = [b for b in report.borders if b[2] is not None]
    assert stuck, "expected at least one border with a principal occurrence"


# ---------------------------------------------------------------- fragment guard

def test_additive_rejected():
    graph = load_graph("additive.proof")
    with pytest.raises(UnsupportedFragment):
        init_multicut(graph)
