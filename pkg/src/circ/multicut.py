"""Productive cut elimination through the multicut rule.

The state keeps an emitted cut-free prefix whose holes are multicut nodes.
Each multicut holds cursors into the lazy unfolding of the circular proof
(a node plus an address substitution composed along back-edge crossings,
with loop-local cut bases freshened per crossing), an injection from its
conclusion into the premises and the symmetric cut-connection relation.
Axioms are resolved by rewiring the injection and the connections, never
by substituting into subderivations.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .formula import (
    Address,
    Occurrence,
    Sequent,
    dual_address,
    negate,
    parse_address,
    unfold_formula,
)
from .proof import (
    AX,
    BOT_R,
    CUT,
    Graph,
    MU_R,
    NU_R,
    ONE_R,
    PAR_R,
    PreProof,
    ProofNode,
    Rule,
    TENSOR_R,
    TreeEdge,
    apply_renaming,
)
from .threads import UnsupportedFragment

MULTIPLICATIVE_RULES = (AX, CUT, TENSOR_R, PAR_R, ONE_R, BOT_R, MU_R, NU_R)
LOGICAL = (TENSOR_R, PAR_R, MU_R, NU_R, BOT_R, ONE_R)


class ReductionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Cursors into the unfolding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cursor:
    node: str
    subst: tuple  # sorted ((base, dual), Address) pairs

    def subst_map(self) -> dict:
        return dict(self.subst)


def make_cursor(node: str, subst: dict) -> Cursor:
    return Cursor(node, tuple(sorted(subst.items())))


def view_address(cursor_subst: dict, alpha: Address) -> Address:
    return apply_renaming(cursor_subst, alpha)


def view_sequent(graph: Graph, cursor: Cursor) -> Sequent:
    cache = getattr(graph, "_cursor_views", None)
    if cache is None:
        cache = {}
        graph._cursor_views = cache
    hit = cache.get(cursor)
    if hit is not None:
        return hit
    subst = cursor.subst_map()
    node = graph.node(cursor.node)
    out = Sequent(Occurrence(o.formula, view_address(subst, o.address)) for o in node.conclusion)
    cache[cursor] = out
    return out


def view_rule(graph: Graph, cursor: Cursor) -> Rule:
    cache = getattr(graph, "_cursor_rules", None)
    if cache is None:
        cache = {}
        graph._cursor_rules = cache
    hit = cache.get(cursor)
    if hit is not None:
        return hit
    subst = cursor.subst_map()
    rule = graph.node(cursor.node).rule
    if rule.kind == AX:
        a, b = rule.ax_pair
        out = Rule(AX, ax_pair=(view_address(subst, a), view_address(subst, b)))
    elif rule.principal is not None:
        out = Rule(rule.kind, principal=view_address(subst, rule.principal), cut_formula=rule.cut_formula)
    else:
        out = rule
    cache[cursor] = out
    return out


class _Freshener:
    def __init__(self):
        self.counter = 0

    def advance(self, graph: Graph, cursor: Cursor, edge_idx: int) -> Cursor:
        node = graph.node(cursor.node)
        edge = node.premises[edge_idx]
        if isinstance(edge, TreeEdge):
            return Cursor(edge.child, cursor.subst)
        subst = cursor.subst_map()
        renaming = edge.renaming_map()
        new_subst = {key: view_address(subst, addr) for key, addr in renaming.items()}
        self.counter += 1
        stamp = self.counter
        for other in graph.proof:
            if other.rule.kind == CUT:
                base = other.rule.principal.base
                for dual in (False, True):
                    key = (base, dual)
                    if key not in new_subst:
                        new_subst[key] = Address(f"{base}_u{stamp}", dual, ())
        return make_cursor(edge.target, new_subst)


# ---------------------------------------------------------------------------
# Multicuts
# ---------------------------------------------------------------------------


class Multicut:
    """Premises are kept as an ordered set of cursors with two maintained
    indexes: occurrence address -> cursor and viewed principal -> cursor."""

    def __init__(self, conclusion: Sequent, premises, iota: dict, connections: dict, graph: Graph | None = None):
        self.conclusion = conclusion
        self.premises: dict = {}
        self.iota = iota
        self.connections = connections
        self.occ_index: dict = {}
        self.principal_index: dict = {}
        self._graph = graph
        for cursor in premises:
            if graph is not None:
                self.add_premise(graph, cursor)
            else:
                self.premises[cursor] = None

    def bind(self, graph: Graph) -> None:
        cursors = list(self.premises)
        self.premises = {}
        self._graph = graph
        for cursor in cursors:
            self.add_premise(graph, cursor)

    def add_premise(self, graph: Graph, cursor: Cursor) -> None:
        self.premises[cursor] = None
        for occ in view_sequent(graph, cursor):
            self.occ_index[occ.address] = cursor
        rule = view_rule(graph, cursor)
        if rule.principal is not None:
            self.principal_index[rule.principal] = cursor

    def remove_premise(self, graph: Graph, cursor: Cursor) -> None:
        del self.premises[cursor]
        for occ in view_sequent(graph, cursor):
            if self.occ_index.get(occ.address) is cursor:
                del self.occ_index[occ.address]
        rule = view_rule(graph, cursor)
        if rule.principal is not None and self.principal_index.get(rule.principal) is cursor:
            del self.principal_index[rule.principal]

    def partner(self, alpha: Address):
        return self.connections.get(alpha)

    def connect(self, a: Address, b: Address) -> None:
        self.connections[a] = b
        self.connections[b] = a

    def disconnect(self, a: Address):
        b = self.connections.pop(a, None)
        if b is not None:
            self.connections.pop(b, None)
        return b

    def pairs(self) -> list:
        out = []
        seen = set()
        for a, b in self.connections.items():
            key = frozenset({a, b})
            if key not in seen:
                seen.add(key)
                out.append((a, b))
        return out

    def premise_sequents(self, graph: Graph) -> list:
        return [view_sequent(graph, c) for c in self.premises]

    def locate(self, graph: Graph, alpha: Address):
        """(cursor, occurrence) holding the given address."""
        cursor = self.occ_index.get(alpha)
        if cursor is None:
            raise ReductionError(f"address {alpha} not found among the premises")
        for occ in view_sequent(graph, cursor):
            if occ.address == alpha:
                return cursor, occ
        raise ReductionError(f"address {alpha} not found among the premises")

    def image_of_iota(self) -> set:
        return set(self.iota.values())

    def check_invariants(self, graph: Graph) -> list:
        out = []
        all_occs = {}
        for i, cursor in enumerate(self.premises):
            for occ in view_sequent(graph, cursor):
                if occ.address in all_occs:
                    out.append(f"duplicate premise address {occ.address}")
                all_occs[occ.address] = (i, occ)
        if set(self.occ_index) != set(all_occs):
            out.append("occurrence index out of sync")
        for c_addr, p_addr in self.iota.items():
            c_occ = next((o for o in self.conclusion if o.address == c_addr), None)
            if c_occ is None:
                out.append(f"iota key {c_addr} not in the conclusion")
                continue
            target = all_occs.get(p_addr)
            if target is None:
                out.append(f"iota image {p_addr} not among the premises")
            elif target[1].formula != c_occ.formula:
                out.append(f"iota breaks structural equivalence at {c_addr}")
        image = self.image_of_iota()
        connected = set()
        edges = []
        pair_count: dict = {}
        for a, b in self.pairs():
            connected.update((a, b))
            occ_a, occ_b = all_occs.get(a), all_occs.get(b)
            if occ_a is None or occ_b is None:
                out.append(f"dangling connection {a} -- {b}")
                continue
            if occ_b[1].formula != negate(occ_a[1].formula):
                out.append(f"connection {a} -- {b} is not dual")
            edges.append((occ_a[0], occ_b[0]))
            key = frozenset({occ_a[0], occ_b[0]})
            pair_count[key] = pair_count.get(key, 0) + 1
        for key, count in pair_count.items():
            if count > 1:
                out.append(f"premises {sorted(key)} connected on more than one pair")
        if connected != set(all_occs) - image:
            out.append("connection domain is not the complement of the injection image")
        n = len(self.premises)
        if n > 0:
            parent = list(range(n))

            def find(x):
                while parent[x] != x:
                    parent[x] = parent[parent[x]]
                    x = parent[x]
                return x

            cycles = 0
            for ia, ib in edges:
                ra, rb = find(ia), find(ib)
                if ra == rb:
                    cycles += 1
                else:
                    parent[ra] = rb
            if len({find(i) for i in range(n)}) != 1:
                out.append("connection graph is not connected")
            if cycles:
                out.append("connection graph has a cycle")
        return out


@dataclass
class Hole:
    multicut_id: int


@dataclass
class PrefixNode:
    conclusion: Sequent
    rule: Rule
    children: list  # of PrefixNode | Hole


@dataclass
class ReductionState:
    graph: Graph
    prefix: object  # PrefixNode | Hole
    frontier: dict  # id -> Multicut
    depths: dict  # id -> depth of the hole
    log: list = field(default_factory=list)  # (label, step index)
    trace: dict = field(default_factory=dict)  # Cursor -> Sequent of entered premises
    reduced: set = field(default_factory=set)  # cursors that were reduced away
    steps: int = 0
    next_id: int = 1
    freshener: _Freshener = field(default_factory=_Freshener)
    last_change: object = None  # ([(mc_id, cursor) dirty], [new mc ids])

    @property
    def conclusion(self) -> Sequent:
        if isinstance(self.prefix, Hole):
            return self.frontier[self.prefix.multicut_id].conclusion
        return self.prefix.conclusion

    def check_invariants(self) -> list:
        out = []
        for mc in self.frontier.values():
            out.extend(mc.check_invariants(self.graph))
        return out


def init_multicut(graph: Graph) -> ReductionState:
    for node in graph.proof:
        if node.rule.kind not in MULTIPLICATIVE_RULES:
            raise UnsupportedFragment(f"cannot reduce through rule {node.rule.kind}")
    root = graph.node(graph.root)
    cursor = make_cursor(graph.root, {})
    iota = {occ.address: occ.address for occ in root.conclusion}
    mc = Multicut(root.conclusion, [cursor], iota, {}, graph=graph)
    state = ReductionState(graph, Hole(0), {0: mc}, {0: 0})
    state.trace[cursor] = view_sequent(graph, cursor)
    state.last_change = ([(0, cursor)], [0])
    return state


# ---------------------------------------------------------------------------
# Redex enumeration
# ---------------------------------------------------------------------------


def _premise_labels(state: ReductionState, mc: Multicut, cursor: Cursor) -> list:
    """Labels of the redexes this premise takes part in."""
    graph = state.graph
    rule = view_rule(graph, cursor)
    out = []
    if rule.kind == CUT:
        out.append(("merge", frozenset({str(rule.principal), str(dual_address(rule.principal))})))
        return out
    if rule.kind == AX:
        seq = view_sequent(graph, cursor)
        o1, o2 = seq[0].address, seq[1].address
        image = mc.image_of_iota()
        if o1 in image and o2 in image:
            out.append(("extax", tuple(sorted((str(o1), str(o2))))))
        else:
            out.append(("cutax", frozenset({str(o1), str(o2)})))
        return out
    if rule.kind in LOGICAL:
        principal = rule.principal
        if principal in mc.image_of_iota():
            concl = next(a for a, p in mc.iota.items() if p == principal)
            out.append(("ext", str(concl)))
            return out
        partner = mc.partner(principal)
        if partner is not None:
            try:
                pcursor, _occ = mc.locate(graph, partner)
            except ReductionError:
                return out
            prule = view_rule(graph, pcursor)
            if prule.kind in LOGICAL and prule.principal == partner:
                out.append(("princ", frozenset({str(principal), str(partner)})))
        return out
    raise UnsupportedFragment(f"rule {rule.kind} in a reduction premise")


def enumerate_redexes(state: ReductionState) -> list:
    labels = []
    seen = set()
    for mc_id in sorted(state.frontier):
        mc = state.frontier[mc_id]
        for cursor in mc.premises:
            for label in _premise_labels(state, mc, cursor):
                if label not in seen:
                    seen.add(label)
                    labels.append(label)
    return labels


# ---------------------------------------------------------------------------
# Applying reductions
# ---------------------------------------------------------------------------


def _find_multicut(state: ReductionState, label) -> int:
    for mc_id in sorted(state.frontier):
        mc = state.frontier[mc_id]
        for cursor in mc.premises:
            if label in _premise_labels(state, mc, cursor):
                return mc_id
    raise ReductionError(f"label {label} is not enabled")


def _advance(state: ReductionState, cursor: Cursor, edge_idx: int) -> Cursor:
    nxt = state.freshener.advance(state.graph, cursor, edge_idx)
    state.trace[nxt] = view_sequent(state.graph, nxt)
    return nxt


def _emit(state: ReductionState, mc_id: int, rule: Rule, child_multicuts: list) -> list:
    """Replace the hole of mc_id by an emitted rule over fresh holes."""
    depth = state.depths.pop(mc_id)
    old_mc = state.frontier.pop(mc_id)
    children = []
    new_ids = []
    for mc in child_multicuts:
        new_id = state.next_id
        state.next_id += 1
        state.frontier[new_id] = mc
        state.depths[new_id] = depth + 1
        new_ids.append(new_id)
        children.append(Hole(new_id))
    new_node = PrefixNode(old_mc.conclusion, rule, children)

    def replace(tree):
        if isinstance(tree, Hole):
            return new_node if tree.multicut_id == mc_id else tree
        tree.children = [replace(c) for c in tree.children]
        return tree

    state.prefix = replace(state.prefix)
    state.last_change = ([], new_ids)
    return new_ids


def apply_reduction(state: ReductionState, label, mc_id: int | None = None) -> ReductionState:
    if mc_id is None:
        mc_id = _find_multicut(state, label)
    mc = state.frontier[mc_id]
    graph = state.graph
    kind = label[0]

    if kind == "merge":
        found = None
        for addr in sorted(label[1]):
            alpha = parse_address(addr)
            if alpha.dual:
                continue
            found = _premise_with_rule(state, mc, CUT, alpha)
        if found is None:
            raise ReductionError(f"label {label} is not enabled")
        rule, cursor = found
        left = _advance(state, cursor, 0)
        right = _advance(state, cursor, 1)
        state.reduced.add(cursor)
        beta = rule.principal
        mc.remove_premise(graph, cursor)
        mc.add_premise(graph, left)
        mc.add_premise(graph, right)
        mc.connect(beta, dual_address(beta))
        state.last_change = ([(mc_id, left), (mc_id, right)], [])

    elif kind == "cutax":
        a1, a2 = sorted(label[1])
        alpha1, alpha2 = parse_address(a1), parse_address(a2)
        ax_cursor, _occ = mc.locate(graph, alpha1)
        if view_rule(graph, ax_cursor).kind != AX:
            raise ReductionError(f"label {label} does not point at an axiom")
        state.reduced.add(ax_cursor)
        mc.remove_premise(graph, ax_cursor)
        partner1 = mc.disconnect(alpha1)
        partner2 = mc.disconnect(alpha2)
        remap = {}
        for side, partner in ((alpha1, partner2), (alpha2, partner1)):
            for c_addr, p_addr in mc.iota.items():
                if p_addr == side:
                    if partner is None:
                        raise ReductionError("axiom with an injected side needs a connected dual")
                    remap[c_addr] = partner
        mc.iota.update(remap)
        if partner1 is not None and partner2 is not None:
            mc.connect(partner1, partner2)
        dirty = []
        for target in (partner1, partner2):
            if target is not None:
                holder, _o = mc.locate(graph, target)
                dirty.append((mc_id, holder))
        state.last_change = (dirty, [])

    elif kind == "princ":
        a1, a2 = sorted(label[1])
        alpha1, alpha2 = parse_address(a1), parse_address(a2)
        c1, _o1 = mc.locate(graph, alpha1)
        c2, _o2 = mc.locate(graph, alpha2)
        rule1 = view_rule(graph, c1)
        rule2 = view_rule(graph, c2)
        if rule1.kind in (PAR_R, NU_R, ONE_R):
            c1, c2 = c2, c1
            alpha1, alpha2 = alpha2, alpha1
            rule1, rule2 = rule2, rule1
        mc.disconnect(alpha1)
        if rule1.kind == TENSOR_R and rule2.kind == PAR_R:
            tl = _advance(state, c1, 0)
            tr = _advance(state, c1, 1)
            pc = _advance(state, c2, 0)
            state.reduced.update((c1, c2))
            mc.remove_premise(graph, c1)
            mc.remove_premise(graph, c2)
            for fresh in (tl, tr, pc):
                mc.add_premise(graph, fresh)
            mc.connect(alpha1.child("l"), alpha2.child("l"))
            mc.connect(alpha1.child("r"), alpha2.child("r"))
            dirty_cursors = [tl, tr, pc]
        elif rule1.kind == MU_R and rule2.kind == NU_R:
            u1 = _advance(state, c1, 0)
            u2 = _advance(state, c2, 0)
            state.reduced.update((c1, c2))
            mc.remove_premise(graph, c1)
            mc.remove_premise(graph, c2)
            for fresh in (u1, u2):
                mc.add_premise(graph, fresh)
            mc.connect(alpha1.child("i"), alpha2.child("i"))
            dirty_cursors = [u1, u2]
        elif rule1.kind == BOT_R and rule2.kind == ONE_R:
            b1 = _advance(state, c1, 0)
            state.reduced.update((c1, c2))
            mc.remove_premise(graph, c1)
            mc.remove_premise(graph, c2)
            mc.add_premise(graph, b1)
            dirty_cursors = [b1]
        else:
            raise ReductionError(f"principal pair {label} has non-dual rules")
        state.last_change = ([(mc_id, c) for c in dirty_cursors], [])

    elif kind == "extax":
        if len(mc.premises) != 1:
            raise ReductionError("axiom emission needs a lone axiom premise")
        cursor = next(iter(mc.premises))
        rule = view_rule(graph, cursor)
        state.reduced.add(cursor)
        _emit(state, mc_id, rule, [])

    elif kind == "ext":
        _apply_external(state, mc_id, mc, label)

    else:
        raise ReductionError(f"unknown label {label}")

    state.steps += 1
    state.log.append((label, state.steps))
    return state


def _apply_external(state: ReductionState, mc_id: int, mc: Multicut, label) -> None:
    graph = state.graph
    concl_addr = parse_address(label[1])
    c_occ = next(o for o in mc.conclusion if o.address == concl_addr)
    p_addr = mc.iota[concl_addr]
    cursor, _p_occ = mc.locate(graph, p_addr)
    rule = view_rule(graph, cursor)
    if rule.principal != p_addr:
        raise ReductionError(f"label {label} is not enabled: principal mismatch")

    if rule.kind == ONE_R:
        state.reduced.add(cursor)
        _emit(state, mc_id, Rule(ONE_R, principal=concl_addr), [])
        return
    if rule.kind == BOT_R:
        child = _advance(state, cursor, 0)
        state.reduced.add(cursor)
        new_concl = Sequent(o for o in mc.conclusion if o.address != concl_addr)
        iota = {a: p for a, p in mc.iota.items() if a != concl_addr}
        premises = [child if c is cursor else c for c in mc.premises]
        child_mc = Multicut(new_concl, premises, iota, dict(mc.connections), graph=graph)
        _emit(state, mc_id, Rule(BOT_R, principal=concl_addr), [child_mc])
        return
    if rule.kind in (MU_R, NU_R):
        child = _advance(state, cursor, 0)
        state.reduced.add(cursor)
        new_occ = Occurrence(unfold_formula(c_occ.formula), concl_addr.child("i"))
        new_concl = Sequent(new_occ if o.address == concl_addr else o for o in mc.conclusion)
        iota = dict(mc.iota)
        del iota[concl_addr]
        iota[new_occ.address] = p_addr.child("i")
        premises = [child if c is cursor else c for c in mc.premises]
        child_mc = Multicut(new_concl, premises, iota, dict(mc.connections), graph=graph)
        _emit(state, mc_id, Rule(rule.kind, principal=concl_addr), [child_mc])
        return
    if rule.kind == PAR_R:
        child = _advance(state, cursor, 0)
        state.reduced.add(cursor)
        left = Occurrence(c_occ.formula.left, concl_addr.child("l"))
        right = Occurrence(c_occ.formula.right, concl_addr.child("r"))
        new_concl = []
        for o in mc.conclusion:
            if o.address == concl_addr:
                new_concl.extend((left, right))
            else:
                new_concl.append(o)
        iota = dict(mc.iota)
        del iota[concl_addr]
        iota[left.address] = p_addr.child("l")
        iota[right.address] = p_addr.child("r")
        premises = [child if c is cursor else c for c in mc.premises]
        child_mc = Multicut(Sequent(new_concl), premises, iota, dict(mc.connections), graph=graph)
        _emit(state, mc_id, Rule(PAR_R, principal=concl_addr), [child_mc])
        return
    if rule.kind == TENSOR_R:
        tl = _advance(state, cursor, 0)
        tr = _advance(state, cursor, 1)
        state.reduced.add(cursor)
        seq_l = view_sequent(graph, tl)
        side_of = _component_sides(state, mc, cursor, {o.address for o in seq_l})
        left_sub = Occurrence(c_occ.formula.left, concl_addr.child("l"))
        right_sub = Occurrence(c_occ.formula.right, concl_addr.child("r"))
        concl_a, concl_b = [], []
        iota_a, iota_b = {}, {}
        for o in mc.conclusion:
            if o.address == concl_addr:
                concl_a.append(left_sub)
                iota_a[left_sub.address] = p_addr.child("l")
                concl_b.append(right_sub)
                iota_b[right_sub.address] = p_addr.child("r")
                continue
            target = mc.iota[o.address]
            if side_of[target] == "L":
                concl_a.append(o)
                iota_a[o.address] = target
            else:
                concl_b.append(o)
                iota_b[o.address] = target
        prem_a, prem_b = [], []
        for c in mc.premises:
            if c is cursor:
                prem_a.append(tl)
                prem_b.append(tr)
                continue
            side = side_of[view_sequent(graph, c)[0].address]
            (prem_a if side == "L" else prem_b).append(c)
        conn_a, conn_b = {}, {}
        for a, b in mc.pairs():
            if side_of[a] == "L":
                conn_a[a] = b
                conn_a[b] = a
            else:
                conn_b[a] = b
                conn_b[b] = a
        mc_a = Multicut(Sequent(concl_a), prem_a, iota_a, conn_a, graph=graph)
        mc_b = Multicut(Sequent(concl_b), prem_b, iota_b, conn_b, graph=graph)
        _emit(state, mc_id, Rule(TENSOR_R, principal=concl_addr), [mc_a, mc_b])
        return
    raise ReductionError(f"external reduction on rule {rule.kind}")


def _premise_with_rule(state: ReductionState, mc: Multicut, kind: str, principal: Address):
    cursor = mc.principal_index.get(principal)
    if cursor is None:
        return None
    rule = view_rule(state.graph, cursor)
    if rule.kind != kind:
        return None
    return rule, cursor


def _component_sides(state: ReductionState, mc: Multicut, tensor_cursor: Cursor, left_addrs: set) -> dict:
    """Map every premise occurrence address to the tensor side its
    connection component hangs off ('L' or 'R')."""
    graph = state.graph
    addr_to_premise = {}
    for cursor in mc.premises:
        for occ in view_sequent(graph, cursor):
            addr_to_premise[occ.address] = cursor

    adjacency: dict = {}
    for a, b in mc.pairs():
        pa, pb = addr_to_premise[a], addr_to_premise[b]
        adjacency.setdefault(pa, []).append((pb, a))
        adjacency.setdefault(pb, []).append((pa, b))

    side_of_premise: dict = {}
    work = deque()
    for neighbour, mine in adjacency.get(tensor_cursor, ()):
        side = "L" if mine in left_addrs else "R"
        if neighbour not in side_of_premise:
            side_of_premise[neighbour] = side
            work.append(neighbour)
    while work:
        cur = work.popleft()
        for neighbour, _mine in adjacency.get(cur, ()):
            if neighbour is tensor_cursor or neighbour in side_of_premise:
                continue
            side_of_premise[neighbour] = side_of_premise[cur]
            work.append(neighbour)

    out = {}
    for addr, premise in addr_to_premise.items():
        if premise is tensor_cursor:
            out[addr] = "L" if addr in left_addrs else "R"
        else:
            out[addr] = side_of_premise.get(premise, "L")
    return out


# ---------------------------------------------------------------------------
# The fair scheduler
# ---------------------------------------------------------------------------


@dataclass
class ReduceReport:
    outcome: str  # ReachedDepth | BudgetExhausted
    state: ReductionState
    emitted: int


def fair_reduce(
    state: ReductionState,
    depth: int,
    step_budget: int = 10_000,
    invariants: str = "full",
) -> ReduceReport:
    """Round-robin scheduler: a FIFO of enabled labels realizes fairness
    (a fired or disabled label leaves the queue, fresh labels join at the
    back).  Stops once every hole of the emitted prefix sits at depth >=
    `depth`, or the frontier is empty, or the budget runs out.

    ``invariants``: "full" re-checks every multicut after each step,
    "light" checks the conclusion per step and everything at the end,
    "off" skips checking.
    """
    queue: deque = deque()
    queued: set = set()
    origin: dict = {}  # label -> (mc_id, cursor) where it was last seen enabled
    emitted = 0
    conclusion = state.conclusion

    def add_labels(mc_id: int, cursor: Cursor) -> None:
        mc = state.frontier.get(mc_id)
        if mc is None or cursor not in mc.premises:
            return
        for label in _premise_labels(state, mc, cursor):
            origin[label] = (mc_id, cursor)
            if label not in queued:
                queued.add(label)
                queue.append(label)

    def refresh_from_change() -> None:
        dirty, new_ids = state.last_change or ([], [])
        for mc_id in new_ids:
            mc = state.frontier.get(mc_id)
            if mc is None:
                continue
            for cursor in list(mc.premises):
                add_labels(mc_id, cursor)
        for mc_id, cursor in dirty:
            add_labels(mc_id, cursor)

    def enabled(label):
        hint = origin.get(label)
        if hint is not None:
            mc_id, cursor = hint
            mc = state.frontier.get(mc_id)
            if mc is not None and cursor in mc.premises and label in _premise_labels(state, mc, cursor):
                return mc_id
        try:
            return _find_multicut(state, label)
        except ReductionError:
            return None

    def done() -> bool:
        if not state.frontier:
            return True
        return all(d >= depth for d in state.depths.values())

    def final_check() -> None:
        if invariants in ("light", "full"):
            problems = state.check_invariants()
            if problems:
                raise ReductionError("; ".join(problems))

    refresh_from_change()
    while not done():
        if state.steps >= step_budget or not queue:
            final_check()
            return ReduceReport("BudgetExhausted", state, emitted)
        label = queue.popleft()
        queued.discard(label)
        mc_id = enabled(label)
        if mc_id is None:
            continue
        apply_reduction(state, label, mc_id)
        if label[0] in ("ext", "extax"):
            emitted += 1
        if invariants == "full":
            problems = state.check_invariants()
            if problems:
                raise ReductionError("; ".join(problems))
        if state.conclusion != conclusion:
            raise ReductionError("reduction changed the conclusion sequent")
        refresh_from_change()
    final_check()
    return ReduceReport("ReachedDepth", state, emitted)


# ---------------------------------------------------------------------------
# Trace and prefix extraction
# ---------------------------------------------------------------------------


@dataclass
class TraceReport:
    sequents: list  # (Cursor, Sequent) of every visited premise
    borders: list  # (Cursor, Sequent, distinguished Occurrence | None)


def trace_of(state: ReductionState) -> TraceReport:
    sequents = sorted(state.trace.items(), key=lambda kv: (kv[0].node, str(kv[0].subst)))
    borders = []
    for cursor, seq in sequents:
        if cursor in state.reduced:
            continue
        rule = view_rule(state.graph, cursor)
        distinguished = None
        if rule.principal is not None and rule.kind != CUT:
            for occ in seq:
                if occ.address == rule.principal:
                    distinguished = occ
                    break
        borders.append((cursor, seq, distinguished))
    return TraceReport(sequents, borders)


def prefix_proof(state: ReductionState, name: str = "prefix") -> PreProof:
    """The emitted prefix as a proof object with `open` leaves at holes."""
    nodes: dict = {}
    counter = [0]

    def walk(tree) -> str:
        counter[0] += 1
        node_id = f"p{counter[0]}"
        if isinstance(tree, Hole):
            mc = state.frontier[tree.multicut_id]
            nodes[node_id] = ProofNode(node_id, mc.conclusion, Rule("open"), ())
            return node_id
        children = tuple(TreeEdge(walk(c)) for c in tree.children)
        nodes[node_id] = ProofNode(node_id, tree.conclusion, tree.rule, children)
        return node_id

    root = walk(state.prefix)
    ordered: dict = {}

    def order(tree_id: str) -> None:
        ordered[tree_id] = nodes[tree_id]
        for edge in nodes[tree_id].premises:
            order(edge.child)

    order(root)
    return PreProof(ordered, root, name)


def format_log(state: ReductionState) -> str:
    lines = []
    for label, step in state.log:
        if label[0] in ("merge", "cutax", "princ"):
            parts = ",".join(sorted(label[1]))
        elif label[0] == "extax":
            parts = ",".join(label[1])
        else:
            parts = label[1]
        lines.append(f"{label[0]}({parts})@{step}")
    return "\n".join(lines) + ("\n" if lines else "")
