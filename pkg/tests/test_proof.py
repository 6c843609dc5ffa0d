from __future__ import annotations

import pytest

from circ.proof import (
    Graph,
    PreProof,
    ProofError,
    TreeEdge,
    enumerate_lassos,
    parse_proof,
    serialize,
    unfold_to_depth,
    validate,
)

from conftest import DATA, GOLDEN_FILES, load_graph, load_proof


# ---------------------------------------------------------------- parsing

@pytest.mark.parametrize("name", GOLDEN_FILES)
def test_roundtrip(name):
    text = (DATA / name).read_text()
    once = serialize(parse_proof(text))
    twice = serialize(parse_proof(once))
    assert once == twice


def test_unknown_node_reference():
    text = (DATA / "pi0.proof").read_text().replace("prem muN", "prem n9")
    with pytest.raises(ProofError, match="unknown node"):
        parse_proof(text)


def test_duplicate_node_id():
    text = (DATA / "pi0.proof").read_text() + "\nnode cut\n  seq 1 @ z\n  rule one@z\nroot cut\n"
    with pytest.raises(ProofError):
        parse_proof(text)


def test_pi0_shape(pi0):
    proof = pi0.proof
    assert len(proof.nodes) == 5
    backs = [e for n in proof for e in n.premises if not isinstance(e, TreeEdge)]
    assert len(backs) == 1


# ---------------------------------------------------------------- validation

@pytest.mark.parametrize("name", GOLDEN_FILES)
def test_golden_files_validate(name):
    assert validate(load_proof(name)) == []


def test_tensor_context_not_partitioned():
    text = """
proof bad
node n0
  seq a @ x, ~a @ y, (1 * 1) @ z
  rule tensor@z
  prem n1
  prem n2
node n1
  seq a @ x, ~a @ y, 1 @ z:l
  rule open
node n2
  seq a @ x, ~a @ y, 1 @ z:r
  rule open
root n0
"""
    diagnostics = validate(parse_proof(text))
    assert any("not partitioned" in d for d in diagnostics)


def test_renaming_not_total():
    text = (DATA / "pi0.proof").read_text().replace("back(cut; a->b^:ii)", "back(cut; )")
    diagnostics = validate(parse_proof(text))
    assert any("renaming not total" in d for d in diagnostics)


def test_back_edge_must_be_ancestor():
    text = """
proof bad
node n0
  seq nu X. X @ a
  rule nu@a
  prem n1
node n1
  seq nu X. X @ a:i
  rule nu@a:i
  prem back(n2; a->a:ii)
node n2
  seq nu X. X @ a
  rule open
root n0
"""
    diagnostics = validate(parse_proof(text))
    assert any(d for d in diagnostics)


# ---------------------------------------------------------------- unfolding

def test_unfold_depth_zero(pi0):
    tree = unfold_to_depth(pi0.proof, 0)
    assert tree.children is None
    assert tree.conclusion == pi0.node("cut").conclusion


def test_unfold_prefix_coherence(pi0):
    deep = unfold_to_depth(pi0.proof, 6)
    shallow = unfold_to_depth(pi0.proof, 5)

    def truncate(tree, depth):
        if depth == 0 or tree.children is None:
            return (tree.conclusion, tree.rule, None)
        return (tree.conclusion, tree.rule, tuple(truncate(c, depth - 1) for c in tree.children))

    assert truncate(deep, 5) == truncate(shallow, 5)


def test_unfold_loop_body_renamed(pi0):
    tree = unfold_to_depth(pi0.proof, 6)

    def collect(tree, out):
        out.append(tree)
        for child in tree.children or []:
            collect(child, out)
        return out

    nodes = collect(tree, [])
    cuts = [t for t in nodes if t.rule.startswith("cut")]
    assert len(cuts) >= 2
    addresses = [str(t.conclusion[0].address) for t in cuts]
    assert len(set(addresses)) == len(addresses)
    for t in nodes:
        seen_addrs = [str(o.address) for o in t.conclusion]
        assert len(set(seen_addrs)) == len(seen_addrs)


# ---------------------------------------------------------------- lassos

def test_pi0_single_lasso(pi0):
    lassos = enumerate_lassos(pi0.proof, 10)
    assert len(lassos) == 1
    (lasso,) = lassos
    assert lasso.loop == ("cut", "nu1", "nu2")
    assert lasso.stem == ()


def test_acyclic_graph_has_no_lassos():
    text = """
proof finite
node n0
  seq 1 @ a
  rule one@a
root n0
"""
    assert enumerate_lassos(parse_proof(text), 10) == []


def test_validproofs_right_lasso(valid_right):
    lassos = enumerate_lassos(valid_right.proof, 10)
    assert len(lassos) == 1
    assert lassos[0].loop == ("cut",)
