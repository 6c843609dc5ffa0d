"""Finite graphs of circular pre-proofs.

A pre-proof is a rooted graph of rule nodes.  Premises are either tree
edges to child nodes or back-edges to an ancestor, carrying an explicit
renaming of the ancestor conclusion's atomic addresses (renaming values may
be full addresses, which is how a loop re-enters deeper address territory).
The infinite derivation it denotes is the unfolding along these edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .formula import (
    Address,
    Bin,
    Fix,
    Formula,
    FormulaError,
    Occurrence,
    Sequent,
    Unit,
    dual_address,
    has_additives,
    negate,
    parse_address,
    parse_formula,
    render,
    unfold_formula,
)

AX, CUT, TENSOR_R, PAR_R, ONE_R, BOT_R, MU_R, NU_R = (
    "ax",
    "cut",
    "tensor",
    "par",
    "one",
    "bot",
    "mu",
    "nu",
)
WITH_R, PLUS1_R, PLUS2_R, TOP_R = "with", "plus1", "plus2", "top"
OPEN_R = "open"

ARITY = {
    AX: 0,
    ONE_R: 0,
    TOP_R: 0,
    OPEN_R: 0,
    CUT: 2,
    TENSOR_R: 2,
    WITH_R: 2,
    PAR_R: 1,
    BOT_R: 1,
    MU_R: 1,
    NU_R: 1,
    PLUS1_R: 1,
    PLUS2_R: 1,
}
ADDITIVE_RULES = frozenset({WITH_R, PLUS1_R, PLUS2_R, TOP_R})
LOGICAL_RULES = frozenset({TENSOR_R, PAR_R, ONE_R, BOT_R, MU_R, NU_R, WITH_R, PLUS1_R, PLUS2_R, TOP_R})


class ProofError(ValueError):
    pass


@dataclass(frozen=True)
class Rule:
    kind: str
    principal: Address | None = None  # logical rules and cut (cut address)
    cut_formula: Formula | None = None
    ax_pair: tuple[Address, Address] | None = None

    def __str__(self) -> str:
        if self.kind == AX:
            a, b = self.ax_pair
            return f"ax({a}, {b})"
        if self.kind == CUT:
            return f"cut({render(self.cut_formula)} @ {self.principal})"
        if self.kind == OPEN_R:
            return "open"
        return f"{self.kind}@{self.principal}"


Renaming = dict  # (base, dual) -> Address


def dual_address_of_cut(rule: "Rule", edge: int) -> Address:
    """Address of the occurrence a cut introduces in its left/right premise."""
    return rule.principal if edge == 0 else dual_address(rule.principal)


def apply_renaming(renaming: Renaming, alpha: Address) -> Address:
    target = renaming.get((alpha.base, alpha.dual))
    if target is None:
        return alpha
    return target.extend(alpha.path)


@dataclass(frozen=True)
class TreeEdge:
    child: str


@dataclass(frozen=True)
class BackEdge:
    target: str
    renaming: tuple  # sorted tuple of ((base, dual), Address)

    def renaming_map(self) -> Renaming:
        return dict(self.renaming)


def make_back_edge(target: str, renaming: Renaming) -> BackEdge:
    return BackEdge(target, tuple(sorted(renaming.items())))


@dataclass(frozen=True)
class ProofNode:
    id: str
    conclusion: Sequent
    rule: Rule
    premises: tuple


@dataclass
class PreProof:
    nodes: dict  # id -> ProofNode, insertion-ordered
    root: str
    name: str = "proof"

    def node(self, node_id: str) -> ProofNode:
        return self.nodes[node_id]

    def __iter__(self) -> Iterator[ProofNode]:
        return iter(self.nodes.values())


@dataclass(frozen=True)
class PointedSequent:
    node: str
    index: int


@dataclass(frozen=True)
class Lasso:
    stem: tuple  # node ids from the root
    loop: tuple  # node ids; the loop's last node closes back to loop[0]

    def __str__(self) -> str:
        return f"{' '.join(self.stem)} ({' '.join(self.loop)})*"


# ---------------------------------------------------------------------------
# Rule schemas
# ---------------------------------------------------------------------------


def _without(seq: Sequent, occ: Occurrence) -> list:
    out = list(seq)
    out.remove(occ)
    return out


def _principal(seq: Sequent, alpha: Address) -> Occurrence:
    for occ in seq:
        if occ.address == alpha:
            return occ
    raise ProofError(f"no occurrence at {alpha} in: {seq}")


def check_node_schema(node: ProofNode, views: list[Sequent]) -> list[str]:
    """Diagnostics for one node against its rule schema and premise views."""
    out: list[str] = []
    seq = node.conclusion
    rule = node.rule
    kind = rule.kind

    def fail(msg: str) -> list[str]:
        out.append(f"{node.id}: {msg}")
        return out

    if not seq.disjoint_addresses():
        fail("conclusion addresses are not pairwise disjoint")
    if len(views) != ARITY[kind]:
        return fail(f"rule {kind} expects {ARITY[kind]} premises, has {len(views)}")
    for i, view in enumerate(views):
        if not view.disjoint_addresses():
            fail(f"premise {i} addresses are not pairwise disjoint")

    if kind == OPEN_R:
        return out

    if kind == AX:
        if len(seq) != 2:
            return fail("axiom conclusion must have exactly two occurrences")
        a, b = rule.ax_pair
        try:
            occ_a = _principal(seq, a)
            occ_b = _principal(seq, b)
        except ProofError as exc:
            return fail(str(exc))
        if occ_a is occ_b:
            return fail("axiom addresses coincide")
        if occ_b.formula != negate(occ_a.formula):
            fail("axiom occurrences are not dual formulas")
        return out

    if kind == ONE_R:
        if len(seq) != 1 or not isinstance(seq[0].formula, Unit) or seq[0].formula.kind != "one":
            return fail("unit rule needs conclusion with exactly the unit occurrence")
        if seq[0].address != rule.principal:
            return fail("unit rule address mismatch")
        return out

    if kind == TOP_R:
        try:
            occ = _principal(seq, rule.principal)
        except ProofError as exc:
            return fail(str(exc))
        if not (isinstance(occ.formula, Unit) and occ.formula.kind == "top"):
            fail("top rule principal is not the additive unit")
        return out

    if kind == CUT:
        beta = rule.principal
        if beta.path:
            fail("cut address must be atomic")
        phi = rule.cut_formula
        left_occ = Occurrence(phi, beta)
        right_occ = Occurrence(negate(phi), dual_address(beta))
        left, right = views
        if left_occ not in left:
            return fail(f"left cut premise misses {left_occ}")
        if right_occ not in right:
            return fail(f"right cut premise misses {right_occ}")
        ctx = _without(left, left_occ) + _without(right, right_occ)
        if frozenset(ctx) != frozenset(seq) or len(ctx) != len(seq):
            fail("cut context not partitioned between the premises")
        return out

    # logical rules with a principal occurrence
    try:
        occ = _principal(seq, rule.principal)
    except ProofError as exc:
        return fail(str(exc))
    ctx = _without(seq, occ)
    alpha = occ.address
    phi = occ.formula

    if kind in (MU_R, NU_R):
        if not isinstance(phi, Fix) or phi.op != kind:
            return fail(f"principal of {kind} is {render(phi)}")
        sub = Occurrence(unfold_formula(phi), alpha.child("i"))
        (view,) = views
        if frozenset(view) != frozenset(ctx + [sub]):
            fail("unfolding premise mismatch")
        return out

    if kind in (PAR_R, TENSOR_R, WITH_R, PLUS1_R, PLUS2_R):
        if not isinstance(phi, Bin):
            return fail(f"principal of {kind} is {render(phi)}")
        expected_op = {PAR_R: "par", TENSOR_R: "tensor", WITH_R: "with", PLUS1_R: "plus", PLUS2_R: "plus"}[kind]
        if phi.op != expected_op:
            return fail(f"principal connective mismatch for {kind}: {render(phi)}")
        left_sub = Occurrence(phi.left, alpha.child("l"))
        right_sub = Occurrence(phi.right, alpha.child("r"))
        if kind == PAR_R:
            (view,) = views
            if frozenset(view) != frozenset(ctx + [left_sub, right_sub]):
                fail("par premise mismatch")
            return out
        if kind == TENSOR_R:
            left, right = views
            if left_sub not in left:
                return fail(f"left tensor premise misses {left_sub}")
            if right_sub not in right:
                return fail(f"right tensor premise misses {right_sub}")
            split = _without(left, left_sub) + _without(right, right_sub)
            if frozenset(split) != frozenset(ctx) or len(split) != len(ctx):
                fail("context not partitioned")
            return out
        if kind == WITH_R:
            left, right = views
            if frozenset(left) != frozenset(ctx + [left_sub]):
                fail("first with-premise mismatch")
            if frozenset(right) != frozenset(ctx + [right_sub]):
                fail("second with-premise mismatch")
            return out
        sub = left_sub if kind == PLUS1_R else right_sub
        (view,) = views
        if frozenset(view) != frozenset(ctx + [sub]):
            fail(f"{kind} premise mismatch")
        return out

    if kind == BOT_R:
        if not (isinstance(phi, Unit) and phi.kind == "bot"):
            return fail("principal of bot rule is not the bottom unit")
        (view,) = views
        if frozenset(view) != frozenset(ctx):
            fail("bot premise mismatch")
        return out

    return fail(f"unknown rule kind {kind}")


# ---------------------------------------------------------------------------
# Graph wrapper: views, validation, stepping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PremiseView:
    """One resolved premise of a node: where it leads and what it reads."""

    edge_index: int
    node: str  # child node (tree) or back-edge target
    sequent: Sequent  # in the landing node's occurrence order
    is_back: bool
    renaming: Renaming | None  # for back edges


class Graph:
    """Validated pre-proof with cached premise views and navigation helpers."""

    def __init__(self, proof: PreProof):
        self.proof = proof
        self._views: dict[str, list[PremiseView]] = {}
        self._tree_parent: dict[str, tuple[str, int]] = {}

    def node(self, node_id: str) -> ProofNode:
        return self.proof.node(node_id)

    @property
    def root(self) -> str:
        return self.proof.root

    def views(self, node_id: str) -> list[PremiseView]:
        cached = self._views.get(node_id)
        if cached is not None:
            return cached
        node = self.proof.node(node_id)
        views = []
        for i, edge in enumerate(node.premises):
            if isinstance(edge, TreeEdge):
                child = self.proof.node(edge.child)
                views.append(PremiseView(i, edge.child, child.conclusion, False, None))
            else:
                target = self.proof.node(edge.target)
                renaming = edge.renaming_map()
                seq = Sequent(
                    Occurrence(occ.formula, apply_renaming(renaming, occ.address))
                    for occ in target.conclusion
                )
                views.append(PremiseView(i, edge.target, seq, True, renaming))
        self._views[node_id] = views
        return views

    def tree_parent(self, node_id: str) -> tuple[str, int] | None:
        """(parent id, premise index) via the unique tree edge, None at root."""
        if not self._tree_parent:
            for node in self.proof:
                for i, edge in enumerate(node.premises):
                    if isinstance(edge, TreeEdge):
                        self._tree_parent[edge.child] = (node.id, i)
        return self._tree_parent.get(node_id)

    def ancestors(self, node_id: str) -> list[str]:
        out = [node_id]
        cur = node_id
        while True:
            parent = self.tree_parent(cur)
            if parent is None:
                return out
            cur = parent[0]
            out.append(cur)

    def principal_index(self, node_id: str) -> int | None:
        node = self.node(node_id)
        if node.rule.principal is None or node.rule.kind == CUT:
            return None
        for i, occ in enumerate(node.conclusion):
            if occ.address == node.rule.principal:
                return i
        return None

    def occurrence(self, p: PointedSequent) -> Occurrence:
        return self.node(p.node).conclusion[p.index]

    def has_additives(self) -> bool:
        for node in self.proof:
            if node.rule.kind in ADDITIVE_RULES:
                return True
            for occ in node.conclusion:
                if has_additives(occ.formula):
                    return True
        return False

    def cut_formulas(self) -> list[Formula]:
        return [n.rule.cut_formula for n in self.proof if n.rule.kind == CUT]

    def pointed_sequents(self) -> Iterator[PointedSequent]:
        for node in self.proof:
            for i in range(len(node.conclusion)):
                yield PointedSequent(node.id, i)


def validate(proof: PreProof) -> list[str]:
    """All well-formedness diagnostics; empty list means the graph is valid."""
    out: list[str] = []
    if proof.root not in proof.nodes:
        return [f"root node {proof.root!r} does not exist"]

    # edge sanity and tree shape
    tree_parents: dict[str, list[str]] = {}
    for node in proof:
        for edge in node.premises:
            ref = edge.child if isinstance(edge, TreeEdge) else edge.target
            if ref not in proof.nodes:
                out.append(f"{node.id}: unknown node {ref!r}")
            elif isinstance(edge, TreeEdge):
                tree_parents.setdefault(edge.child, []).append(node.id)
    if out:
        return out
    for child, parents in tree_parents.items():
        if len(parents) > 1:
            out.append(f"{child}: multiple tree parents {parents}")
    if proof.root in tree_parents:
        out.append(f"root {proof.root} cannot be a tree child")
    if out:
        return out

    # reachability along tree edges and the ancestor condition
    graph = Graph(proof)
    reachable = set()
    stack = [proof.root]
    while stack:
        cur = stack.pop()
        if cur in reachable:
            continue
        reachable.add(cur)
        for edge in proof.node(cur).premises:
            if isinstance(edge, TreeEdge):
                stack.append(edge.child)
    for node in proof:
        if node.id not in reachable:
            out.append(f"{node.id}: not reachable from the root by tree edges")
    if out:
        return out
    for node in proof:
        for edge in node.premises:
            if isinstance(edge, BackEdge) and edge.target not in graph.ancestors(node.id):
                out.append(f"{node.id}: back-edge target {edge.target} is not an ancestor")

    # back-edge renamings: total and injective on the target conclusion bases
    for node in proof:
        for edge in node.premises:
            if not isinstance(edge, BackEdge):
                continue
            renaming = edge.renaming_map()
            target = proof.node(edge.target)
            bases = {(occ.address.base, occ.address.dual) for occ in target.conclusion}
            missing = bases - set(renaming)
            if missing:
                out.append(f"{node.id}: renaming not total (misses {sorted(missing)})")
            extra = set(renaming) - bases
            if extra:
                out.append(f"{node.id}: renaming mentions unused bases {sorted(extra)}")
            values = list(renaming.values())
            if len(set(values)) != len(values):
                out.append(f"{node.id}: renaming not injective")

    # rule schemas
    for node in proof:
        out.extend(check_node_schema(node, [v.sequent for v in graph.views(node.id)]))

    # cut address freshness: one introducing cut per base, none clashing with root
    cut_bases: dict[str, str] = {}
    for node in proof:
        if node.rule.kind == CUT:
            base = node.rule.principal.base
            if base in cut_bases:
                out.append(f"{node.id}: cut base {base!r} already introduced at {cut_bases[base]}")
            cut_bases[base] = node.id
    for occ in proof.node(proof.root).conclusion:
        if occ.address.base in cut_bases:
            out.append(f"root conclusion base {occ.address.base!r} collides with a cut")

    return out


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------


def _parse_occurrence(text: str) -> Occurrence:
    if "@" not in text:
        raise ProofError(f"occurrence needs 'FORMULA @ ADDRESS': {text!r}")
    formula_text, addr_text = text.rsplit("@", 1)
    return Occurrence(parse_formula(formula_text), parse_address(addr_text))


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def _parse_rule(text: str) -> Rule:
    text = text.strip()
    if text == "open":
        return Rule(OPEN_R)
    if text.startswith("ax(") and text.endswith(")"):
        parts = [p.strip() for p in text[3:-1].split(",")]
        if len(parts) != 2:
            raise ProofError(f"axiom rule needs two addresses: {text!r}")
        return Rule(AX, ax_pair=(parse_address(parts[0]), parse_address(parts[1])))
    if text.startswith("cut(") and text.endswith(")"):
        occ = _parse_occurrence(text[4:-1])
        return Rule(CUT, principal=occ.address, cut_formula=occ.formula)
    if "@" in text:
        kind, addr = text.split("@", 1)
        kind = kind.strip()
        if kind not in ARITY or kind in (AX, CUT, OPEN_R):
            raise ProofError(f"unknown rule kind {kind!r}")
        return Rule(kind, principal=parse_address(addr))
    raise ProofError(f"cannot parse rule {text!r}")


def _parse_prem(text: str):
    text = text.strip()
    if text.startswith("back(") and text.endswith(")"):
        inner = text[5:-1]
        if ";" in inner:
            target, entries_text = inner.split(";", 1)
        else:
            target, entries_text = inner, ""
        renaming: Renaming = {}
        for entry in entries_text.split(","):
            entry = entry.strip()
            if not entry:
                continue
            if "->" not in entry:
                raise ProofError(f"bad renaming entry {entry!r}")
            src, dst = entry.split("->", 1)
            src_addr = parse_address(src)
            if src_addr.path:
                raise ProofError(f"renaming keys must be atomic: {entry!r}")
            key = (src_addr.base, src_addr.dual)
            if key in renaming:
                raise ProofError(f"duplicate renaming key {src.strip()!r}")
            renaming[key] = parse_address(dst)
        return make_back_edge(target.strip(), renaming)
    return TreeEdge(text)


def parse_proof(text: str) -> PreProof:
    name = "proof"
    nodes: dict[str, ProofNode] = {}
    root: str | None = None
    cur_id: str | None = None
    cur_seq: Sequent | None = None
    cur_rule: Rule | None = None
    cur_prems: list = []

    def flush(lineno: int) -> None:
        nonlocal cur_id, cur_seq, cur_rule, cur_prems
        if cur_id is None:
            return
        if cur_seq is None or cur_rule is None:
            raise ProofError(f"line {lineno}: node {cur_id} misses seq or rule")
        if cur_id in nodes:
            raise ProofError(f"line {lineno}: duplicate node id {cur_id!r}")
        nodes[cur_id] = ProofNode(cur_id, cur_seq, cur_rule, tuple(cur_prems))
        cur_id, cur_seq, cur_rule, cur_prems = None, None, None, []

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("proof "):
                name = line[6:].strip()
            elif line.startswith("node "):
                flush(lineno)
                cur_id = line[5:].strip()
                if not cur_id:
                    raise ProofError("empty node id")
            elif line == "seq" or line.startswith("seq "):
                body = line[3:].strip()
                occs = [_parse_occurrence(p) for p in _split_top(body, ",") if p.strip()] if body else []
                cur_seq = Sequent(occs)
            elif line.startswith("rule "):
                cur_rule = _parse_rule(line[5:])
            elif line.startswith("prem "):
                cur_prems.append(_parse_prem(line[5:]))
            elif line.startswith("root "):
                flush(lineno)
                root = line[5:].strip()
            else:
                raise ProofError(f"cannot parse line: {raw!r}")
        except (ProofError, FormulaError) as exc:
            raise ProofError(f"line {lineno}: {exc}") from None
    flush(len(text.splitlines()))
    if root is None:
        raise ProofError("missing 'root' line")
    if root not in nodes:
        raise ProofError(f"unknown node {root!r} named as root")
    for node in nodes.values():
        for edge in node.premises:
            ref = edge.child if isinstance(edge, TreeEdge) else edge.target
            if ref not in nodes:
                raise ProofError(f"unknown node {ref!r} referenced by {node.id}")
    return PreProof(nodes, root, name)


def serialize(proof: PreProof) -> str:
    lines = [f"proof {proof.name}"]
    for node in proof:
        lines.append(f"node {node.id}")
        if node.conclusion:
            lines.append("  seq " + ", ".join(str(occ) for occ in node.conclusion))
        else:
            lines.append("  seq")
        lines.append(f"  rule {node.rule}")
        for edge in node.premises:
            if isinstance(edge, TreeEdge):
                lines.append(f"  prem {edge.child}")
            else:
                entries = ", ".join(
                    f"{Address(base, dual, ())}->{addr}" for (base, dual), addr in edge.renaming
                )
                lines.append(f"  prem back({edge.target}; {entries})")
    lines.append(f"root {proof.root}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Unfolding to a finite depth
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    conclusion: Sequent
    rule: str
    children: list | None  # None marks an open leaf beyond the depth bound


def unfold_to_depth(proof: PreProof, depth: int) -> TreeNode:
    """Explicit finite prefix of the denoted infinite derivation.

    Back-edge renamings are applied cumulatively; atomic bases introduced
    inside a loop body (cuts) are freshened per crossing so distinct loop
    iterations never share addresses.
    """
    graph = Graph(proof)
    counter = [0]

    def subst_occ(subst: Renaming, occ: Occurrence) -> Occurrence:
        return Occurrence(occ.formula, apply_renaming(subst, occ.address))

    def build(node_id: str, subst: Renaming, remaining: int) -> TreeNode:
        node = proof.node(node_id)
        seq = Sequent(subst_occ(subst, occ) for occ in node.conclusion)
        if remaining == 0:
            return TreeNode(seq, str(node.rule), None)
        children = []
        for view in graph.views(node_id):
            if not view.is_back:
                children.append(build(view.node, subst, remaining - 1))
            else:
                counter[0] += 1
                stamp = counter[0]
                new_subst: Renaming = {}
                for key, addr in view.renaming.items():
                    new_subst[key] = apply_renaming(subst, addr)
                for other in proof:
                    if other.rule.kind == CUT:
                        beta = other.rule.principal
                        for key in ((beta.base, False), (beta.base, True)):
                            if key not in new_subst:
                                new_subst[key] = Address(f"{beta.base}_u{stamp}", key[1], ())
                children.append(build(view.node, new_subst, remaining - 1))
        return TreeNode(seq, str(node.rule), children)

    return build(proof.root, {}, depth)


# ---------------------------------------------------------------------------
# Lassos
# ---------------------------------------------------------------------------


def enumerate_lassos(proof: PreProof, max_len: int) -> list[Lasso]:
    """All simple lassos (no repeated node in stem+loop) up to max_len."""
    graph = Graph(proof)
    out: list[Lasso] = []

    def dfs(path: list[str], on_path: set) -> None:
        if len(path) > max_len:
            return
        node_id = path[-1]
        for view in graph.views(node_id):
            if view.node in on_path:
                idx = path.index(view.node)
                if len(path) <= max_len:
                    out.append(Lasso(tuple(path[:idx]), tuple(path[idx:])))
            else:
                on_path.add(view.node)
                path.append(view.node)
                dfs(path, on_path)
                path.pop()
                on_path.remove(view.node)

    dfs([proof.root], {proof.root})
    out.sort(key=lambda l: (len(l.stem) + len(l.loop), l.stem, l.loop))
    return out
