"""Random well-formed multiplicative pre-proof graphs for differential tests.

Builds small derivations top-down: each open sequent is either closed by an
axiom, a unit, or a back-edge to a matching ancestor, or expanded by a rule
drawn from what its occurrences allow.  Retries until the node budget works
out, so every returned graph passes `validate`.
"""

from __future__ import annotations

import random

from circ.formula import (
    Address,
    Occurrence,
    Sequent,
    negate,
    parse_formula,
    unfold_formula,
    Bin,
    Fix,
    Unit,
)
from circ.proof import (
    Graph,
    PreProof,
    ProofNode,
    Rule,
    TreeEdge,
    make_back_edge,
    validate,
)

POOL = [
    parse_formula("nu X. X"),
    parse_formula("mu X. X"),
    parse_formula("nu X. (X | X)"),
    parse_formula("mu X. (X * X)"),
    parse_formula("nu X. (bot | X)"),
    parse_formula("mu X. (1 * X)"),
]


class _Budget(Exception):
    pass


class _Builder:
    def __init__(self, rng: random.Random, max_nodes: int):
        self.rng = rng
        self.max_nodes = max_nodes
        self.nodes: dict = {}
        self.counter = 0
        self.base_counter = 0

    def fresh_id(self) -> str:
        self.counter += 1
        return f"n{self.counter}"

    def fresh_base(self) -> str:
        self.base_counter += 1
        return f"c{self.base_counter}"

    def build(self, seq: Sequent, ancestors: list) -> str:
        if len(self.nodes) >= self.max_nodes:
            raise _Budget
        node_id = self.fresh_id()
        self.nodes[node_id] = None  # reserve the slot and the budget
        rng = self.rng
        low_budget = len(self.nodes) >= self.max_nodes - 1

        options = []
        if len(seq) == 2 and seq[1].formula == negate(seq[0].formula):
            options.append(("ax", None))
        if len(seq) == 1 and seq[0].formula == Unit("one"):
            options.append(("one", None))
        for anc_id, anc_seq in ancestors:
            renaming = _match_renaming(anc_seq, seq)
            if renaming is not None:
                options.append(("back", (anc_id, renaming)))
        expansions = []
        for idx, occ in enumerate(seq):
            if isinstance(occ.formula, Fix):
                expansions.append(("fix", idx))
            elif isinstance(occ.formula, Bin) and occ.formula.op == "par":
                expansions.append(("par", idx))
            elif isinstance(occ.formula, Bin) and occ.formula.op == "tensor":
                expansions.append(("tensor", idx))
            elif occ.formula == Unit("bot") and len(seq) > 1:
                expansions.append(("bot", idx))

        if options and (low_budget or rng.random() < 0.4 or not expansions):
            kind, data = rng.choice(options)
            if kind == "ax":
                self.nodes[node_id] = ProofNode(
                    node_id, seq, Rule("ax", ax_pair=(seq[0].address, seq[1].address)), ()
                )
                return node_id
            if kind == "one":
                self.nodes[node_id] = ProofNode(node_id, seq, Rule("one", principal=seq[0].address), ())
                return node_id
            # a back-edge closes this slot without consuming the reserved node
            del self.nodes[node_id]
            self.counter -= 1
            anc_id, renaming = data
            return ("__back__", anc_id, renaming)
        if not expansions:
            raise _Budget  # stuck sequent

        kind, idx = rng.choice(expansions)
        occ = seq[idx]
        rest = [o for i, o in enumerate(seq) if i != idx]
        here = ancestors + [(node_id, seq)]
        if rng.random() < 0.15 and len(seq) <= 2 and len(self.nodes) + 3 < self.max_nodes:
            # wrap in a cut instead
            del self.nodes[node_id]
            self.counter -= 1
            return self.cut(seq, ancestors)
        if kind == "fix":
            phi = occ.formula
            sub = Occurrence(unfold_formula(phi), occ.address.child("i"))
            child = self.link(Sequent(rest[:idx] + [sub] + rest[idx:]), here)
            rule = Rule(phi.op, principal=occ.address)
            self.nodes[node_id] = ProofNode(node_id, seq, rule, (child,))
            return node_id
        if kind == "par":
            left = Occurrence(occ.formula.left, occ.address.child("l"))
            right = Occurrence(occ.formula.right, occ.address.child("r"))
            child = self.link(Sequent(rest + [left, right]), here)
            self.nodes[node_id] = ProofNode(node_id, seq, Rule("par", principal=occ.address), (child,))
            return node_id
        if kind == "bot":
            child = self.link(Sequent(rest), here)
            self.nodes[node_id] = ProofNode(node_id, seq, Rule("bot", principal=occ.address), (child,))
            return node_id
        # tensor
        left = Occurrence(occ.formula.left, occ.address.child("l"))
        right = Occurrence(occ.formula.right, occ.address.child("r"))
        split = [self.rng.random() < 0.5 for _ in rest]
        gamma = [o for o, s in zip(rest, split) if s]
        delta = [o for o, s in zip(rest, split) if not s]
        child_l = self.link(Sequent(gamma + [left]), here)
        child_r = self.link(Sequent([right] + delta), here)
        self.nodes[node_id] = ProofNode(
            node_id, seq, Rule("tensor", principal=occ.address), (child_l, child_r)
        )
        return node_id

    def cut(self, seq: Sequent, ancestors: list) -> str:
        node_id = self.fresh_id()
        self.nodes[node_id] = None
        phi = self.rng.choice(POOL)
        base = Address(self.fresh_base(), False, ())
        left_occ = Occurrence(phi, base)
        right_occ = Occurrence(negate(phi), Address(base.base, True, ()))
        split = [self.rng.random() < 0.5 for _ in seq]
        gamma = [o for o, s in zip(seq, split) if s]
        delta = [o for o, s in zip(seq, split) if not s]
        here = ancestors + [(node_id, seq)]
        child_l = self.link(Sequent(gamma + [left_occ]), here)
        child_r = self.link(Sequent([right_occ] + delta), here)
        rule = Rule("cut", principal=base, cut_formula=phi)
        self.nodes[node_id] = ProofNode(node_id, seq, rule, (child_l, child_r))
        return node_id

    def link(self, seq: Sequent, ancestors: list):
        result = self.build(seq, ancestors)
        if isinstance(result, tuple) and result[0] == "__back__":
            return make_back_edge(result[1], result[2])
        return TreeEdge(result)


def _match_renaming(anc_seq: Sequent, seq: Sequent):
    """Base renaming with ρ(ancestor conclusion) == seq, or None."""
    if len(anc_seq) != len(seq):
        return None
    remaining = list(range(len(seq)))
    rho: dict = {}
    values: dict = {}
    for anc in anc_seq:
        chosen = None
        for idx in remaining:
            occ = seq[idx]
            if occ.formula != anc.formula:
                continue
            w = anc.address.path
            v = occ.address.path
            if len(v) < len(w) or v[len(v) - len(w) :] != w:
                continue
            target = Address(occ.address.base, occ.address.dual, v[: len(v) - len(w)])
            key = (anc.address.base, anc.address.dual)
            if key in rho and rho[key] != target:
                continue
            if target in values and values[target] != key:
                continue
            chosen = (idx, key, target)
            break
        if chosen is None:
            return None
        idx, key, target = chosen
        remaining.remove(idx)
        rho[key] = target
        values[target] = key
    return rho


def random_graph(seed: int, max_nodes: int = 8) -> Graph | None:
    rng = random.Random(seed)
    for _attempt in range(40):
        builder = _Builder(rng, max_nodes)
        roots = rng.choice(
            [
                [rng.choice(POOL)],
                [rng.choice(POOL)],
                [rng.choice(POOL), rng.choice(POOL)],
            ]
        )
        seq = Sequent(
            Occurrence(phi, Address(f"r{i}", False, ())) for i, phi in enumerate(roots)
        )
        try:
            if rng.random() < 0.5:
                root = builder.cut(seq, [])
            else:
                root = builder.build(seq, [])
                if isinstance(root, tuple):
                    continue
        except (_Budget, RecursionError):
            continue
        proof = PreProof(dict(builder.nodes), root, f"random{seed}")
        if any(node is None for node in proof.nodes.values()):
            continue
        if validate(proof):
            continue
        return Graph(proof)
    return None


def random_cyclic_graphs(count: int, start_seed: int = 0, max_nodes: int = 8):
    """The first `count` generated graphs that contain at least one cycle."""
    out = []
    seed = start_seed
    while len(out) < count and seed < start_seed + 40_000:
        graph = random_graph(seed, max_nodes)
        seed += 1
        if graph is None:
            continue
        from circ.proof import enumerate_lassos

        if enumerate_lassos(graph.proof, max_nodes + 2):
            out.append(graph)
    return out


def deep_bounce(n: int) -> Graph:
    """Bounce family with minimal validating height exactly ``n``: the axiom
    sits above ``n`` unfoldings of the cut formula, so the silent detour has
    to remember ``n`` constraints before the loop's unfoldings release them."""
    nu_id = parse_formula("nu X. X")
    mu_id = parse_formula("mu X. X")
    a = Address("a", False, ())
    b = Address("b", False, ())
    bd = Address("b", True, ())
    nodes: dict = {}

    left_ids = [f"mu{i}" for i in range(n)] + ["axn"]
    for i in range(n):
        seq = Sequent([Occurrence(nu_id, a), Occurrence(mu_id, b.extend("i" * i))])
        rule = Rule("mu", principal=b.extend("i" * i))
        nodes[left_ids[i]] = ProofNode(left_ids[i], seq, rule, (TreeEdge(left_ids[i + 1]),))
    ax_addr = b.extend("i" * n)
    ax_seq = Sequent([Occurrence(nu_id, a), Occurrence(mu_id, ax_addr)])
    nodes["axn"] = ProofNode("axn", ax_seq, Rule("ax", ax_pair=(a, ax_addr)), ())

    right_ids = [f"nu{i}" for i in range(n + 1)]
    for i in range(n + 1):
        seq = Sequent([Occurrence(nu_id, bd.extend("i" * i))])
        rule = Rule("nu", principal=bd.extend("i" * i))
        if i < n:
            prem = TreeEdge(right_ids[i + 1])
        else:
            prem = make_back_edge("cut", {("a", False): bd.extend("i" * (n + 1))})
        nodes[right_ids[i]] = ProofNode(right_ids[i], seq, rule, (prem,))

    root_seq = Sequent([Occurrence(nu_id, a)])
    rule = Rule("cut", principal=b, cut_formula=mu_id)
    nodes["cut"] = ProofNode("cut", root_seq, rule, (TreeEdge(left_ids[0]), TreeEdge(right_ids[0])))
    ordered = {"cut": nodes["cut"]}
    ordered.update({k: v for k, v in nodes.items() if k != "cut"})
    proof = PreProof(ordered, "cut", f"deep_bounce_{n}")
    assert validate(proof) == [], validate(proof)
    return Graph(proof)
