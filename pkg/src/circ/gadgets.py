"""Two-counter machines and their compilation into stress-test pre-proofs.

A machine run is encoded in the constraint stack of one bouncing thread:
counter values ride as blocks of unfolding constraints, machine states
become loop nodes of the graph, and every action is a gadget whose axioms
force the matching stack transformation.  The forward half of the graph
accumulates garbage constraints recording test outcomes; a mirrored half
erases them by rewinding the computation, so the thread returns to the
main loop with one spare constraint, pops it, and performs the visible
unfolding that validates the branch.  The graph is a valid proof exactly
when the machine halts with both counters at zero.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .formula import (
    Address,
    Bin,
    Occurrence,
    Sequent,
    negate,
    parse_formula,
)
from .proof import (
    Graph,
    PreProof,
    ProofNode,
    Rule,
    TreeEdge,
    make_back_edge,
    validate,
)
from .threads import ThreadDriver

# The followed formula, its dual, the side-branch validator and the
# duplication budget carried by the root.
F_FORMULA = parse_formula("nu X. (X | X)")
G_FORMULA = parse_formula("mu X. (X * X)")
A_FORMULA = parse_formula("nu X. (X | X) * X")
B_FORMULA = parse_formula("mu X. X | ((nu Y. (Y | Y) * Y) | (nu Y. (Y | Y) * Y))")

AP = Bin("par", A_FORMULA, A_FORMULA)
APT = Bin("tensor", AP, A_FORMULA)  # one unfolding of A
FP = Bin("par", F_FORMULA, F_FORMULA)  # one unfolding of F
GT = Bin("tensor", G_FORMULA, G_FORMULA)  # one unfolding of G


class MachineError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Machines and runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Machine:
    states: tuple
    initial: str
    final: str
    delta: dict  # state -> ("inc", counter, next) | ("dec", counter, next)
    #                   | ("test", counter, zero_next, positive_next)

    def check(self) -> None:
        named = set(self.states)
        if self.initial not in named or self.final not in named:
            raise MachineError("initial and final states must be declared")
        for state in self.states:
            if state == self.final:
                if state in self.delta:
                    raise MachineError("the final state has no action")
                continue
            action = self.delta.get(state)
            if action is None:
                raise MachineError(f"state {state} has no action")
            targets = action[2:4] if action[0] == "test" else action[2:3]
            for target in targets:
                if target not in named:
                    raise MachineError(f"unknown target state {target}")
            if action[1] not in (1, 2):
                raise MachineError("counters are numbered 1 and 2")


@dataclass(frozen=True)
class Configuration:
    state: str
    counter1: int
    counter2: int


@dataclass
class RunResult:
    outcome: str  # Halts | Stuck | OutOfFuel
    configurations: list
    final_zero: bool = False


def run_machine(machine: Machine, fuel: int = 100_000) -> RunResult:
    machine.check()
    config = Configuration(machine.initial, 0, 0)
    trail = [config]
    for _ in range(fuel):
        if config.state == machine.final:
            return RunResult("Halts", trail, config.counter1 == 0 and config.counter2 == 0)
        action = machine.delta[config.state]
        kind, counter = action[0], action[1]
        value = config.counter1 if counter == 1 else config.counter2
        if kind == "inc":
            value += 1
            nxt = action[2]
        elif kind == "dec":
            if value == 0:
                return RunResult("Stuck", trail)
            value -= 1
            nxt = action[2]
        else:
            nxt = action[2] if value == 0 else action[3]
        if counter == 1:
            config = Configuration(nxt, value, config.counter2)
        else:
            config = Configuration(nxt, config.counter1, value)
        trail.append(config)
    return RunResult("OutOfFuel", trail)


_ACTION_LINE = re.compile(
    r"^state\s+(\w+)\s*:\s*(?:(inc|dec)\s+([12])\s*->\s*(\w+)|test\s+([12])\s*\?\s*(\w+)\s*:\s*(\w+))$"
)


def parse_machine(text: str) -> Machine:
    states: list = []
    delta: dict = {}
    final = None
    initial = None

    def note(name: str) -> None:
        if name not in states:
            states.append(name)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("final "):
            final = line[6:].strip()
            note(final)
            continue
        m = _ACTION_LINE.match(line)
        if not m:
            raise MachineError(f"line {lineno}: cannot parse {raw!r}")
        name = m.group(1)
        if initial is None:
            initial = name
        note(name)
        if m.group(2):
            target = m.group(4)
            note(target)
            delta[name] = (m.group(2), int(m.group(3)), target)
        else:
            qz, qp = m.group(6), m.group(7)
            note(qz)
            note(qp)
            delta[name] = ("test", int(m.group(5)), qz, qp)
    if final is None:
        raise MachineError("missing 'final' line")
    if initial is None:
        raise MachineError("no state lines")
    machine = Machine(tuple(states), initial, final, delta)
    machine.check()
    return machine


def machine_text(machine: Machine) -> str:
    lines = []
    for state in machine.states:
        action = machine.delta.get(state)
        if action is None:
            continue
        if action[0] == "test":
            lines.append(f"state {state}: test {action[1]} ? {action[2]} : {action[3]}")
        else:
            lines.append(f"state {state}: {action[0]} {action[1]} -> {action[2]}")
    lines.append(f"final {machine.final}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Spec trees for the pairing machineries
# ---------------------------------------------------------------------------


@dataclass
class AxLeaf:
    partner: Occurrence  # occurrence the axiom pairs with this spine end


@dataclass
class InfLeaf:
    extras: tuple  # dead occurrences (must include one A) absorbed here


@dataclass
class Split:
    left: object
    right: object


def _needs(spec) -> list:
    if isinstance(spec, AxLeaf):
        return [spec.partner]
    if isinstance(spec, InfLeaf):
        return list(spec.extras)
    return _needs(spec.left) + _needs(spec.right)


# ---------------------------------------------------------------------------
# The graph builder
# ---------------------------------------------------------------------------


class Builder:
    def __init__(self):
        self.nodes: dict = {}
        self.order: list = []
        self.node_counter = 0
        self.base_counter = 0
        self.tags: dict = {}
        self.main_choices: dict = {}

    def reserve(self, hint: str) -> str:
        self.node_counter += 1
        node_id = f"{hint}_{self.node_counter}"
        self.order.append(node_id)
        self.nodes[node_id] = None
        return node_id

    def define(self, node_id: str, seq, rule: Rule, premises) -> str:
        self.nodes[node_id] = ProofNode(node_id, Sequent(seq), rule, tuple(premises))
        return node_id

    def node(self, hint: str, seq, rule: Rule, premises) -> str:
        return self.define(self.reserve(hint), seq, rule, premises)

    def fresh_base(self, hint: str = "c") -> str:
        self.base_counter += 1
        return f"{hint}{self.base_counter}"

    def tag(self, name: str, node_id: str) -> str:
        self.tags.setdefault(name, []).append(node_id)
        return node_id

    def finish(self, root: str, name: str) -> PreProof:
        ordered = {node_id: self.nodes[node_id] for node_id in self.order}
        missing = [k for k, v in ordered.items() if v is None]
        if missing:
            raise MachineError(f"unfinished nodes: {missing}")
        return PreProof(ordered, root, name)

    # ------------------------------------------------------------- plumbing

    def rebase(self, seq: list, cont) -> str:
        """Cut each deep-addressed occurrence against an axiom so the node
        `cont` builds has an all-atomic conclusion (a loop target must).
        Threads pass through silently in both directions."""
        seq = list(seq)
        for i, o in enumerate(seq):
            if o.address.path:
                base = self.fresh_base("n")
                fresh = Occurrence(o.formula, Address(base, False, ()))
                rest = seq[:i] + [fresh] + seq[i + 1 :]
                me = self.reserve("rb")
                ax = self.node(
                    "rbax",
                    [Occurrence(negate(o.formula), Address(base, True, ())), o],
                    Rule("ax", ax_pair=(Address(base, True, ()), o.address)),
                    [],
                )
                upper = self.rebase(rest, cont)
                return self.define(
                    me,
                    seq,
                    Rule("cut", principal=fresh.address, cut_formula=o.formula),
                    [TreeEdge(upper), TreeEdge(ax)],
                )
        return cont(seq)

    def inf(self, seq: list) -> str:
        """Axiom-free valid endless proof of any sequent carrying an A."""

        def core(seq2: list) -> str:
            a2 = next(o for o in seq2 if o.formula == A_FORMULA)
            others = [o for o in seq2 if o is not a2]
            alpha = a2.address
            n0 = self.reserve("inf")
            unfolded = Occurrence(APT, alpha.child("i"))
            pair = Occurrence(AP, alpha.extend("il"))
            left = Occurrence(A_FORMULA, alpha.extend("ill"))
            right = Occurrence(A_FORMULA, alpha.extend("ilr"))
            pair_node = self.node(
                "infpar",
                [pair],
                Rule("par", principal=pair.address),
                [TreeEdge(self.pair_loop(left, right))],
            )
            tens = self.node(
                "inftens",
                others + [unfolded],
                Rule("tensor", principal=unfolded.address),
                [
                    TreeEdge(pair_node),
                    make_back_edge(
                        n0,
                        {
                            **{(o.address.base, o.address.dual): o.address for o in others},
                            (alpha.base, alpha.dual): alpha.child("i").child("r"),
                        },
                    ),
                ],
            )
            self.define(n0, seq2, Rule("nu", principal=alpha), [TreeEdge(tens)])
            return self.tag("inf", n0)

        if not any(o.formula == A_FORMULA for o in seq):
            raise MachineError("an endless branch needs an A occurrence")
        return self.rebase(seq, core)

    def pair_loop(self, left: Occurrence, right: Occurrence) -> str:
        """Endless proof of a pair of A occurrences."""

        def core(seq2: list) -> str:
            u, v = seq2
            m0 = self.reserve("infpl")
            unfolded = Occurrence(APT, v.address.child("i"))
            pair = Occurrence(AP, v.address.extend("il"))
            pair_node = self.node(
                "infplpar",
                [pair],
                Rule("par", principal=pair.address),
                [
                    make_back_edge(
                        m0,
                        {
                            (u.address.base, u.address.dual): v.address.extend("ill"),
                            (v.address.base, v.address.dual): v.address.extend("ilr"),
                        },
                    )
                ],
            )
            tens = self.node(
                "infpltens",
                [u, unfolded],
                Rule("tensor", principal=unfolded.address),
                [
                    TreeEdge(pair_node),
                    make_back_edge(
                        m0,
                        {
                            (u.address.base, u.address.dual): u.address,
                            (v.address.base, v.address.dual): v.address.extend("ir"),
                        },
                    ),
                ],
            )
            self.define(m0, seq2, Rule("nu", principal=v.address), [TreeEdge(tens)])
            return m0

        return self.rebase([left, right], core)

    def par_a(self, seq: list, a_occ: Occurrence, cont) -> str:
        """Duplicate the A occurrence; cont gets the sequent with two copies."""
        others = [o for o in seq if o is not a_occ]
        alpha = a_occ.address
        unfolded = Occurrence(APT, alpha.child("i"))
        pair = Occurrence(AP, alpha.extend("il"))
        spare = Occurrence(A_FORMULA, alpha.extend("ir"))
        a1 = Occurrence(A_FORMULA, alpha.extend("ill"))
        a2 = Occurrence(A_FORMULA, alpha.extend("ilr"))
        top = cont(others + [a1, a2])
        par_node = self.node("parA", others + [pair], Rule("par", principal=pair.address), [TreeEdge(top)])
        tens = self.node(
            "parAtens",
            others + [unfolded],
            Rule("tensor", principal=unfolded.address),
            [TreeEdge(par_node), TreeEdge(self.inf([spare]))],
        )
        return self.node("parAnu", seq, Rule("nu", principal=alpha), [TreeEdge(tens)])

    def acut(self, g, f, a, left_cont, right_cont, *, tag=None) -> str:
        """Cut with A duplication: the followed formula is introduced on the
        left premise, its dual on the right, one A copy each side."""

        def after_par(seq2: list) -> str:
            g2 = next(o for o in seq2 if o.address == g.address)
            f2 = next(o for o in seq2 if o.address == f.address)
            a1, a2 = [o for o in seq2 if o not in (g2, f2)]
            base = self.fresh_base("c")
            fcut = Occurrence(F_FORMULA, Address(base, False, ()))
            gcut = Occurrence(G_FORMULA, Address(base, True, ()))
            left = left_cont(g2, fcut, a1)
            right = right_cont(gcut, f2, a2)
            out = self.node(
                "acut",
                seq2,
                Rule("cut", principal=fcut.address, cut_formula=F_FORMULA),
                [TreeEdge(left), TreeEdge(right)],
            )
            if tag:
                self.tag(tag, out)
            return out

        return self.par_a([g, f, a], a, after_par)

    # ------------------------------------------------------- formula trees

    def f_tree(self, seq: list, f: Occurrence, leaves: list, cont) -> str:
        """Unfold the followed formula along every path in `leaves`; cont
        receives the expanded sequent and the path -> occurrence map (the
        map also covers dead siblings)."""
        leaf_map: dict = {}

        def expand(seq2: list, target: Occurrence, paths: list, prefix: tuple):
            keep_l = sorted({p for p in paths if p and p[0] == "l"})
            keep_r = sorted({p for p in paths if p and p[0] == "r"})
            if not keep_l and not keep_r:
                leaf_map[prefix] = target
                return seq2, []
            alpha = target.address
            unfolded = Occurrence(FP, alpha.child("i"))
            left = Occurrence(F_FORMULA, alpha.extend("il"))
            right = Occurrence(F_FORMULA, alpha.extend("ir"))
            chain = [(list(seq2), Rule("nu", principal=alpha))]
            seq3 = [unfolded if o is target else o for o in seq2]
            chain.append((list(seq3), Rule("par", principal=unfolded.address)))
            seq4 = []
            for o in seq3:
                if o is unfolded:
                    seq4.extend((left, right))
                else:
                    seq4.append(o)
            if keep_l:
                seq4, more = expand(seq4, left, [p[1:] for p in keep_l], prefix + ("l",))
                chain.extend(more)
            else:
                leaf_map[prefix + ("l",)] = left
            if keep_r:
                seq4, more = expand(seq4, right, [p[1:] for p in keep_r], prefix + ("r",))
                chain.extend(more)
            else:
                leaf_map[prefix + ("r",)] = right
            return seq4, chain

        top_seq, chain = expand(list(seq), f, [tuple(p) for p in leaves], ())
        node_id = cont(top_seq, leaf_map)
        for seq_i, rule in reversed(chain):
            node_id = self.node("fu", seq_i, rule, [TreeEdge(node_id)])
        return node_id

    def g_tree(self, seq: list, g: Occurrence, spec) -> str:
        """Decompose the dual formula along a Split/AxLeaf/InfLeaf spec; the
        context must be exactly what the leaves declare they need."""
        ctx = [o for o in seq if o is not g]
        declared = _needs(spec)
        if len(ctx) != len(declared) or any(o not in declared for o in ctx):
            raise MachineError(
                f"context mismatch: have {[str(o) for o in ctx]}, "
                f"need {[str(o) for o in declared]}"
            )
        return self._g_spec(ctx, g, spec)

    def _g_spec(self, ctx: list, g: Occurrence, spec) -> str:
        if isinstance(spec, AxLeaf):
            return self.node(
                "gax",
                [g, spec.partner],
                Rule("ax", ax_pair=(g.address, spec.partner.address)),
                [],
            )
        if isinstance(spec, InfLeaf):
            return self.inf([g] + ctx)
        alpha = g.address
        unfolded = Occurrence(GT, alpha.child("i"))
        left_g = Occurrence(G_FORMULA, alpha.extend("il"))
        right_g = Occurrence(G_FORMULA, alpha.extend("ir"))
        left_needs = _needs(spec.left)
        left_ctx = [o for o in ctx if o in left_needs]
        right_ctx = [o for o in ctx if o not in left_needs]
        left_node = self._g_spec(left_ctx, left_g, spec.left)
        right_node = self._g_spec(right_ctx, right_g, spec.right)
        tens = self.node(
            "gt",
            ctx + [unfolded],
            Rule("tensor", principal=unfolded.address),
            [TreeEdge(left_node), TreeEdge(right_node)],
        )
        return self.node("gm", ctx + [g], Rule("mu", principal=alpha), [TreeEdge(tens)])


@dataclass
class ContLeaf:
    cont: object  # callable (g_component, ctx) -> node id | Edge
    needs: tuple


def _edge(value):
    if isinstance(value, str):
        return TreeEdge(value)
    return value


# extend the spec walker to continuation leaves
_OLD_NEEDS = _needs


def _needs(spec):  # noqa: F811
    if isinstance(spec, ContLeaf):
        return list(spec.needs)
    if isinstance(spec, AxLeaf):
        return [spec.partner]
    if isinstance(spec, InfLeaf):
        return list(spec.extras)
    return _needs(spec.left) + _needs(spec.right)


def _gspec_cont(builder: Builder, ctx: list, g: Occurrence, spec):
    return _edge(spec.cont(g, ctx))


class GadgetBuilder(Builder):
    """Metarules of the counter-machine encoding, forward and mirrored."""

    def _g_spec(self, ctx: list, g: Occurrence, spec) -> str:
        if isinstance(spec, ContLeaf):
            edge = _edge(spec.cont(g, ctx))
            if isinstance(edge, TreeEdge):
                return edge.child
            # wrap a bare back-edge in nothing: callers embed it directly
            raise MachineError("continuation leaves must be embedded by _g_split")
        return super()._g_spec(ctx, g, spec)

    def g_split(self, seq: list, g: Occurrence, spec) -> str:
        """Like g_tree but Split children may be ContLeaf edges."""
        ctx = [o for o in seq if o is not g]
        declared = _needs(spec)
        if len(ctx) != len(declared) or any(o not in declared for o in ctx):
            raise MachineError(
                f"context mismatch: have {[str(o) for o in ctx]}, need {[str(o) for o in declared]}"
            )
        return self._g_split(ctx, g, spec)

    def _g_split(self, ctx: list, g: Occurrence, spec) -> str:
        if isinstance(spec, ContLeaf):
            raise MachineError("a continuation cannot sit at the root of a split")
        if isinstance(spec, (AxLeaf, InfLeaf)):
            return super()._g_spec(ctx, g, spec)
        alpha = g.address
        unfolded = Occurrence(GT, alpha.child("i"))
        left_g = Occurrence(G_FORMULA, alpha.extend("il"))
        right_g = Occurrence(G_FORMULA, alpha.extend("ir"))
        left_needs = _needs(spec.left)
        left_ctx = [o for o in ctx if o in left_needs]
        right_ctx = [o for o in ctx if o not in left_needs]

        def side(sub, g_occ, sub_ctx):
            if isinstance(sub, ContLeaf):
                return _edge(sub.cont(g_occ, sub_ctx))
            if isinstance(sub, (AxLeaf, InfLeaf)):
                return TreeEdge(super(GadgetBuilder, self)._g_spec(sub_ctx, g_occ, sub))
            return TreeEdge(self._g_split(sub_ctx, g_occ, sub))

        left_edge = side(spec.left, left_g, left_ctx)
        right_edge = side(spec.right, right_g, right_ctx)
        tens = self.node(
            "gt",
            ctx + [unfolded],
            Rule("tensor", principal=unfolded.address),
            [left_edge, right_edge],
        )
        return self.node("gm", ctx + [g], Rule("mu", principal=alpha), [TreeEdge(tens)])

    def g_path_spec(self, targets: dict, fillers: list):
        """Build a Split tree from bold-path -> leaf, off-path siblings
        becoming endless branches fed from the filler queue."""

        def rec(paths: dict):
            if set(paths) == {()}:
                return paths[()]
            l_sub = {p[1:]: s for p, s in paths.items() if p and p[0] == "l"}
            r_sub = {p[1:]: s for p, s in paths.items() if p and p[0] == "r"}
            left = rec(l_sub) if l_sub else InfLeaf(tuple(fillers.pop(0)))
            right = rec(r_sub) if r_sub else InfLeaf(tuple(fillers.pop(0)))
            return Split(left, right)

        return rec(dict(targets))

    # ------------------------------------------------------- simple bounces

    def pi_rci(self, g, f, a) -> str:
        return self.g_tree([g, f, a], g, Split(InfLeaf((a,)), AxLeaf(f)))

    def pi_lci(self, g, f, a) -> str:
        return self.g_tree([g, f, a], g, Split(AxLeaf(f), InfLeaf((a,))))

    def rci(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(g, f, a, cont, self.pi_rci, reserved=reserved, tag="rci")

    def lci(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(g, f, a, cont, self.pi_lci, reserved=reserved, tag="lci")

    def acut2(self, g, f, a, left_cont, right_cont, *, reserved=None, tag=None) -> str:
        """acut with edge-valued continuations and an optional pre-reserved
        bottom node (the conclusion node, used as a loop target)."""

        def after_par(seq2: list) -> str:
            g2 = next(o for o in seq2 if o.address == g.address)
            f2 = next(o for o in seq2 if o.address == f.address)
            a1, a2 = [o for o in seq2 if o not in (g2, f2)]
            base = self.fresh_base("c")
            fcut = Occurrence(F_FORMULA, Address(base, False, ()))
            gcut = Occurrence(G_FORMULA, Address(base, True, ()))
            left = _edge(left_cont(g2, fcut, a1))
            right = _edge(right_cont(gcut, f2, a2))
            out = self.node(
                "acut",
                seq2,
                Rule("cut", principal=fcut.address, cut_formula=F_FORMULA),
                [left, right],
            )
            if tag:
                self.tag(tag, out)
            return out

        return self.par_a2([g, f, a], a, after_par, reserved=reserved)

    def par_a2(self, seq: list, a_occ: Occurrence, cont, reserved=None) -> str:
        others = [o for o in seq if o is not a_occ]
        alpha = a_occ.address
        unfolded = Occurrence(APT, alpha.child("i"))
        pair = Occurrence(AP, alpha.extend("il"))
        spare = Occurrence(A_FORMULA, alpha.extend("ir"))
        a1 = Occurrence(A_FORMULA, alpha.extend("ill"))
        a2 = Occurrence(A_FORMULA, alpha.extend("ilr"))
        top = cont(others + [a1, a2])
        par_node = self.node("parA", others + [pair], Rule("par", principal=pair.address), [TreeEdge(top)])
        tens = self.node(
            "parAtens",
            others + [unfolded],
            Rule("tensor", principal=unfolded.address),
            [TreeEdge(par_node), TreeEdge(self.inf([spare]))],
        )
        bottom = reserved if reserved is not None else self.reserve("parAnu")
        return self.define(bottom, seq, Rule("nu", principal=alpha), [TreeEdge(tens)])

    # ------------------------------------------------------- copy gadgets

    def exp(self, g, f, a, left_cont, right_cont, *, reserved=None, tag=None) -> str:
        """Unfold both formulas once, pairing left with left and right with
        right, so one constraint is read and copied back."""

        def after_par(seq2: list) -> str:
            g2 = next(o for o in seq2 if o.address == g.address)
            f2 = next(o for o in seq2 if o.address == f.address)
            a1, a2 = [o for o in seq2 if o not in (g2, f2)]

            def after_f(seq3: list, leaves: dict) -> str:
                fl, fr = leaves[("l",)], leaves[("r",)]
                spec = Split(
                    ContLeaf(lambda gl, ctx: left_cont(gl, fl, a1), (fl, a1)),
                    ContLeaf(lambda gr, ctx: right_cont(gr, fr, a2), (fr, a2)),
                )
                return self.g_split(seq3, g2, spec)

            return self.f_tree(seq2, f2, [("l",), ("r",)], after_f)

        out = self.par_a2([g, f, a], a, after_par, reserved=reserved)
        if tag:
            self.tag(tag, out)
        return out

    def rc(self, g, f, a, cont, *, reserved=None, tag=None) -> str:
        return self.exp(
            g,
            f,
            a,
            lambda gl, fl, al: self.inf([gl, fl, al]),
            cont,
            reserved=reserved,
            tag=tag or "rc",
        )

    def lc(self, g, f, a, cont, *, reserved=None) -> str:
        return self.exp(
            g,
            f,
            a,
            cont,
            lambda gr, fr, ar: self.inf([gr, fr, ar]),
            reserved=reserved,
            tag="lc",
        )

    def counter(self, g, f, a, cont, *, tag="counter") -> str:
        """Skip one full counter block: read and copy its constraints,
        looping on the low bits until the closing one."""

        def after_rc(g1, f1, a1):
            def core(seq2: list) -> str:
                g2, f2, a2 = seq2
                entry = self.reserve("cnt")

                def left_back(gl, fl, al):
                    return make_back_edge(
                        entry,
                        {
                            (g2.address.base, g2.address.dual): gl.address,
                            (f2.address.base, f2.address.dual): fl.address,
                            (a2.address.base, a2.address.dual): al.address,
                        },
                    )

                return self.exp(g2, f2, a2, left_back, cont, reserved=entry)

            return self.rebase([g1, f1, a1], core)

        out = self.rc(g, f, a, after_rc)
        self.tag(tag, out)
        return out

    # ------------------------------------------------------- forward actions

    def inc1(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(
            g,
            f,
            a,
            cont,
            lambda g2, f2, a2: self.rc(g2, f2, a2, self.pi_lci),
            reserved=reserved,
            tag="inc1",
        )

    def inc2(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(
            g,
            f,
            a,
            cont,
            lambda g2, f2, a2: self.counter(
                g2, f2, a2, lambda g3, f3, a3: self.rc(g3, f3, a3, self.pi_lci)
            ),
            reserved=reserved,
            tag="inc2",
        )

    def dec_machinery(self, g, f, a) -> str:
        def after_f(seq2: list, leaves: dict) -> str:
            dead_l, active, dead_rr = leaves[("l",)], leaves[("r", "l")], leaves[("r", "r")]
            return self.g_tree(seq2, g, Split(InfLeaf((dead_l, dead_rr, a)), AxLeaf(active)))

        return self.f_tree([g, f, a], f, [("r", "l")], after_f)

    def dec1(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(g, f, a, cont, self.dec_machinery, reserved=reserved, tag="dec1")

    def dec2(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(
            g,
            f,
            a,
            cont,
            lambda g2, f2, a2: self.counter(g2, f2, a2, self.dec_machinery),
            reserved=reserved,
            tag="dec2",
        )

    def test1(self, g, f, a, cont_zero, cont_positive, reserved=None) -> str:
        out = self.rc(
            g,
            f,
            a,
            lambda g1, f1, a1: self.exp(
                g1,
                f1,
                a1,
                lambda gl, fl, al: self.lci(
                    gl, fl, al, lambda g2, f2, a2: self.rci(g2, f2, a2, cont_positive)
                ),
                lambda gr, fr, ar: self.rci(
                    gr, fr, ar, lambda g2, f2, a2: self.rci(g2, f2, a2, cont_zero)
                ),
            ),
            reserved=reserved,
            tag="test1",
        )
        return out

    def qf_gadget(self, g, f, a, reserved=None) -> str:
        def core(seq2: list) -> str:
            g2, f2, a2 = seq2

            def after_f(seq3: list, leaves: dict) -> str:
                dead, active = leaves[("l",)], leaves[("r",)]
                return self.g_tree(seq3, g2, Split(InfLeaf((dead, a2)), AxLeaf(active)))

            return self.f_tree(seq2, f2, [("r",)], after_f)

        entry = self.rebase([g, f, a], core) if reserved is None else None
        if reserved is not None:
            # callers wanting a fixed entry wrap the rebased chain themselves
            raise MachineError("qf entry cannot be pre-reserved")
        self.tag("qf", entry)
        return entry

    # --------------------------------------------------- second-counter test

    def shift(self, g, f, a) -> str:
        """Loop gadget rolling one low bit across the stored test token."""

        def core(seq2: list) -> str:
            g2, f2, a2 = seq2
            entry = self.reserve("shift")

            def left_piece(gl, fcut, al) -> str:
                def after_f(seq3: list, leaves: dict) -> str:
                    fl, fr = leaves[("l",)], leaves[("r",)]
                    spec = Split(
                        ContLeaf(
                            lambda gcomp, ctx: make_back_edge(
                                entry,
                                {
                                    (g2.address.base, g2.address.dual): gcomp.address,
                                    (f2.address.base, f2.address.dual): fl.address,
                                    (a2.address.base, a2.address.dual): al.address,
                                },
                            ),
                            (fl, al),
                        ),
                        AxLeaf(fr),
                    )
                    return self.g_split(seq3, gl, spec)

                return self.f_tree([gl, fcut, al], fcut, [("l",), ("r",)], after_f)

            def right_piece(gcut, f3, a3) -> str:
                def after_par(seq3: list) -> str:
                    g4 = next(o for o in seq3 if o.address == gcut.address)
                    f4 = next(o for o in seq3 if o.address == f3.address)
                    a_one, a_two = [o for o in seq3 if o not in (g4, f4)]

                    def after_f(seq4: list, leaves: dict) -> str:
                        f_ll = leaves[("l", "l")]
                        f_lr = leaves[("l", "r")]
                        f_r = leaves[("r",)]
                        spec = Split(
                            Split(AxLeaf(f_ll), InfLeaf((f_r, a_one))),
                            ContLeaf(
                                lambda gcomp, ctx: self.shift_aux(gcomp, f_lr, a_two),
                                (f_lr, a_two),
                            ),
                        )
                        return self.g_split(seq4, g4, spec)

                    return self.f_tree(seq3, f4, [("l", "l"), ("l", "r")], after_f)

                return self.par_a2([gcut, f3, a3], a3, after_par)

            return self.acut2(g2, f2, a2, left_piece, right_piece, reserved=entry, tag="shift")

        return self.rebase([g, f, a], core)

    def shift_aux(self, g, f, a) -> str:
        return self.exp(
            g,
            f,
            a,
            lambda gl, fl, al: self.inf([gl, fl, al]),
            self.shift_aux_machinery,
        )

    def shift_aux_machinery(self, g, f, a) -> str:
        def after_par(seq2: list) -> str:
            g2 = next(o for o in seq2 if o.address == g.address)
            f2 = next(o for o in seq2 if o.address == f.address)
            a1, a2 = [o for o in seq2 if o not in (g2, f2)]

            def after_f(seq3: list, leaves: dict) -> str:
                f_l, f_r = leaves[("l",)], leaves[("r",)]
                spec = Split(
                    Split(AxLeaf(f_l), InfLeaf((a1,))),
                    Split(AxLeaf(f_r), InfLeaf((a2,))),
                )
                return self.g_split(seq3, g2, spec)

            return self.f_tree(seq2, f2, [("l",), ("r",)], after_f)

        return self.par_a2([g, f, a], a, after_par)

    def copl(self, g, f, a, cont, *, reserved=None) -> str:
        def machinery(gcut, f2, a2) -> str:
            def after_f(seq2: list, leaves: dict) -> str:
                f_l, f_r = leaves[("l",)], leaves[("r",)]
                spec = Split(Split(AxLeaf(f_l), InfLeaf((a2,))), AxLeaf(f_r))
                return self.g_split(seq2, gcut, spec)

            return self.f_tree([gcut, f2, a2], f2, [("l",), ("r",)], after_f)

        return self.acut2(g, f, a, cont, machinery, reserved=reserved, tag="copl")

    def move(self, g, f, a) -> str:
        """Iterate shift until the token reaches the top of the stack."""

        def core(seq2: list) -> str:
            g2, f2, a2 = seq2
            entry = self.reserve("move")

            def x_machinery(g1, f1, a1) -> str:
                def after_f(seq3: list, leaves: dict) -> str:
                    fl, fr = leaves[("l",)], leaves[("r",)]
                    spec = Split(
                        ContLeaf(
                            lambda gcomp, ctx: self.acut2(
                                gcomp,
                                fl,
                                a1,
                                lambda gb, fb, ab: make_back_edge(
                                    entry,
                                    {
                                        (g2.address.base, g2.address.dual): gb.address,
                                        (f2.address.base, f2.address.dual): fb.address,
                                        (a2.address.base, a2.address.dual): ab.address,
                                    },
                                ),
                                lambda gs, fs, as_: self.shift(gs, fs, as_),
                            ),
                            (fl, a1),
                        ),
                        AxLeaf(fr),
                    )
                    return self.g_split(seq3, g1, spec)

                return self.f_tree([g1, f1, a1], f1, [("l",), ("r",)], after_f)

            out = self.copl(g2, f2, a2, x_machinery, reserved=entry)
            self.tag("move", out)
            return out

        return self.rebase([g, f, a], core)

    def prep_machinery(self, g, f, a) -> str:
        """Duplicate the stored token: pops the opener and the test bit,
        pushes them back twice with the extra marker block."""
        stock: list = []

        def with_stock(seq2: list, remaining: int, cont) -> str:
            if remaining == 0:
                return cont(seq2)
            a_occ = next(o for o in reversed(seq2) if o.formula == A_FORMULA and o not in stock)

            def deeper(seq3: list) -> str:
                fresh = [o for o in seq3 if o not in seq2]
                stock.extend(fresh[:1])
                return with_stock(seq3, remaining - 1, cont)

            return self.par_a(seq2, a_occ, deeper)

        def core(seq2: list) -> str:
            g2 = next(o for o in seq2 if o.address == g.address)
            f2 = next(o for o in seq2 if o.address == f.address)
            a_all = [o for o in seq2 if o.formula == A_FORMULA]

            def after_f(seq3: list, leaves: dict) -> str:
                dead = leaves[("l",)]
                f_rl, f_rr = leaves[("r", "l")], leaves[("r", "r")]
                a_copies = [o for o in seq3 if o.formula == A_FORMULA]
                fillers = [[dead, a_copies[0]]] + [[x] for x in a_copies[1:7]]
                spec = self.g_path_spec(
                    {
                        ("r", "l", "r", "r", "l"): AxLeaf(f_rl),
                        ("r", "r", "r", "r", "r"): AxLeaf(f_rr),
                    },
                    fillers,
                )
                return self.g_split(seq3, g2, spec)

            return self.f_tree(seq2, f2, [("r", "l"), ("r", "r")], after_f)

        # one A arrives; six more copies feed the off-path endless branches
        return with_stock([g, f, a], 6, core)

    def prep(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(
            g,
            f,
            a,
            cont,
            lambda g2, f2, a2: self.counter(g2, f2, a2, self.prep_machinery, tag="prep_counter"),
            reserved=reserved,
            tag="prep",
        )

    def result(self, g, f, a, cont, reserved=None) -> str:
        out = self.prep(
            g,
            f,
            a,
            lambda g1, f1, a1: self.rc(
                g1,
                f1,
                a1,
                lambda g2, f2, a2: self.acut2(
                    g2, f2, a2, cont, lambda g3, f3, a3: self.move(g3, f3, a3)
                ),
            ),
            reserved=reserved,
        )
        self.tag("result", out)
        return out

    def test2(self, g, f, a, cont_zero, cont_positive, reserved=None) -> str:
        def club(g1, f1, a1) -> str:
            def core(seq2: list) -> str:
                g2, f2, a2 = seq2
                entry = self.reserve("club")

                def left_back(gl, fl, al):
                    return make_back_edge(
                        entry,
                        {
                            (g2.address.base, g2.address.dual): gl.address,
                            (f2.address.base, f2.address.dual): fl.address,
                            (a2.address.base, a2.address.dual): al.address,
                        },
                    )

                return self.exp(
                    g2,
                    f2,
                    a2,
                    left_back,
                    lambda g3, f3, a3: self.rc(
                        g3,
                        f3,
                        a3,
                        lambda g4, f4, a4: self.exp(
                            g4,
                            f4,
                            a4,
                            lambda gl, fl, al: self.rci(gl, fl, al, cont_positive),
                            lambda gr, fr, ar: self.rci(gr, fr, ar, cont_zero),
                        ),
                    ),
                    reserved=entry,
                )

            return self.rebase([g1, f1, a1], core)

        out = self.result(g, f, a, club, reserved=reserved)
        self.tag("test2", out)
        return out

    # ------------------------------------------------------- mirrored actions

    def pi_rci_d(self, g, f, a) -> str:
        def after_f(seq2: list, leaves: dict) -> str:
            dead_l, dead_rl, active = leaves[("l",)], leaves[("r", "l")], leaves[("r", "r")]
            return self.g_tree(seq2, g, Split(InfLeaf((dead_l, dead_rl, a)), AxLeaf(active)))

        return self.f_tree([g, f, a], f, [("r", "r")], after_f)

    def pi_lci_d(self, g, f, a) -> str:
        def after_f(seq2: list, leaves: dict) -> str:
            dead_l, active, dead_rr = leaves[("l",)], leaves[("r", "l")], leaves[("r", "r")]
            return self.g_tree(seq2, g, Split(InfLeaf((dead_l, dead_rr, a)), AxLeaf(active)))

        return self.f_tree([g, f, a], f, [("r", "l")], after_f)

    def rci_d(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(g, f, a, self.pi_rci_d, cont, reserved=reserved, tag="rci_d")

    def lci_d(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(g, f, a, self.pi_lci_d, cont, reserved=reserved, tag="lci_d")

    def inc1_d(self, g, f, a, cont, reserved=None) -> str:
        out = self.lci_d(g, f, a, cont, reserved=reserved)
        self.tag("inc1_d", out)
        return out

    def inc2_d(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(
            g,
            f,
            a,
            lambda g2, f2, a2: self.counter(g2, f2, a2, self.pi_lci_d),
            cont,
            reserved=reserved,
            tag="inc2_d",
        )

    def dec_machinery_d(self, g, f, a) -> str:
        return self.g_tree([g, f, a], g, Split(AxLeaf(f), InfLeaf((a,))))

    def dec1_d(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(
            g,
            f,
            a,
            lambda g2, f2, a2: self.rc(g2, f2, a2, self.dec_machinery_d),
            cont,
            reserved=reserved,
            tag="dec1_d",
        )

    def dec2_d(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(
            g,
            f,
            a,
            lambda g2, f2, a2: self.counter(
                g2, f2, a2, lambda g3, f3, a3: self.rc(g3, f3, a3, self.dec_machinery_d)
            ),
            cont,
            reserved=reserved,
            tag="dec2_d",
        )

    def rxcop_machinery(self, g, f, a) -> str:
        def after_f(seq2: list, leaves: dict) -> str:
            deads = [leaves[p] for p in (("l",), ("r", "l", "l"), ("r", "l", "r", "r"), ("r", "r", "l"), ("r", "r", "r", "l"))]
            ax_l = leaves[("r", "l", "r", "l")]
            ax_r = leaves[("r", "r", "r", "r")]
            spec = Split(InfLeaf((*deads, a)), Split(AxLeaf(ax_l), AxLeaf(ax_r)))
            return self.g_tree(seq2, g, spec)

        return self.f_tree([g, f, a], f, [("r", "l", "r", "l"), ("r", "r", "r", "r")], after_f)

    def rxcop(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(g, f, a, self.rxcop_machinery, cont, reserved=reserved, tag="rxcop")

    def test1_d(self, g, f, a, cont_zero, cont_positive, reserved=None) -> str:
        out = self.rxcop(
            g,
            f,
            a,
            lambda g1, f1, a1: self.rc(
                g1,
                f1,
                a1,
                lambda g2, f2, a2: self.exp(g2, f2, a2, cont_positive, cont_zero),
            ),
            reserved=reserved,
        )
        self.tag("test1_d", out)
        return out

    def rxr_machinery(self, g, f, a) -> str:
        def after_f(seq2: list, leaves: dict) -> str:
            deads = [leaves[p] for p in (("l",), ("r", "l", "l"), ("r", "r", "l"))]
            ax_l = leaves[("r", "l", "r")]
            ax_r = leaves[("r", "r", "r")]
            spec = Split(InfLeaf((*deads, a)), Split(AxLeaf(ax_l), AxLeaf(ax_r)))
            return self.g_tree(seq2, g, spec)

        return self.f_tree([g, f, a], f, [("r", "l", "r"), ("r", "r", "r")], after_f)

    def rxr_i(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(g, f, a, self.rxr_machinery, cont, reserved=reserved, tag="rxr_i")

    def shift_d(self, g, f, a) -> str:
        def core(seq2: list) -> str:
            g2, f2, a2 = seq2
            entry = self.reserve("shiftd")

            def machinery(gl, fcut, al) -> str:
                def after_par(seq3: list) -> str:
                    g4 = next(o for o in seq3 if o.address == gl.address)
                    f4 = next(o for o in seq3 if o.address == fcut.address)
                    a_one, a_two = [o for o in seq3 if o not in (g4, f4)]

                    def after_f(seq4: list, leaves: dict) -> str:
                        f_ll = leaves[("l", "l")]
                        f_rrll = leaves[("r", "r", "l", "l")]
                        f_rrrl = leaves[("r", "r", "r", "l")]
                        deads = [leaves[p] for p in (("l", "r"), ("r", "l"), ("r", "r", "l", "r"), ("r", "r", "r", "r"))]
                        aux = Split(
                            AxLeaf(f_ll),
                            Split(
                                InfLeaf((deads[2], deads[3], a_one)),
                                Split(AxLeaf(f_rrll), AxLeaf(f_rrrl)),
                            ),
                        )
                        spec = Split(aux, InfLeaf((deads[0], deads[1], a_two)))
                        return self.g_split(seq4, g4, spec)

                    return self.f_tree(
                        seq3, f4, [("l", "l"), ("r", "r", "l", "l"), ("r", "r", "r", "l")], after_f
                    )

                return self.par_a2([gl, fcut, al], al, after_par)

            def return_piece(gcut, f3, a3) -> str:
                def after_f(seq3: list, leaves: dict) -> str:
                    fl, fr = leaves[("l",)], leaves[("r",)]
                    spec = Split(
                        ContLeaf(
                            lambda gcomp, ctx: make_back_edge(
                                entry,
                                {
                                    (g2.address.base, g2.address.dual): gcomp.address,
                                    (f2.address.base, f2.address.dual): fl.address,
                                    (a2.address.base, a2.address.dual): a3.address,
                                },
                            ),
                            (fl, a3),
                        ),
                        AxLeaf(fr),
                    )
                    return self.g_split(seq3, gcut, spec)

                return self.f_tree([gcut, f3, a3], f3, [("l",), ("r",)], after_f)

            return self.acut2(g2, f2, a2, machinery, return_piece, reserved=entry, tag="shift_d")

        return self.rebase([g, f, a], core)

    def copl_d(self, g, f, a, cont, *, reserved=None) -> str:
        def machinery(gl, fcut, al) -> str:
            def after_f(seq2: list, leaves: dict) -> str:
                f_ll, f_rr = leaves[("l", "l")], leaves[("r", "r")]
                deads = [leaves[("l", "r")], leaves[("r", "l")]]
                spec = Split(AxLeaf(f_ll), Split(InfLeaf((*deads, al)), AxLeaf(f_rr)))
                return self.g_split(seq2, gl, spec)

            return self.f_tree([gl, fcut, al], fcut, [("l", "l"), ("r", "r")], after_f)

        return self.acut2(g, f, a, machinery, cont, reserved=reserved, tag="copl_d")

    def move_d(self, g, f, a) -> str:
        def core(seq2: list) -> str:
            g2, f2, a2 = seq2
            entry = self.reserve("moved")

            def x_machinery(g1, f1, a1) -> str:
                def after_f(seq3: list, leaves: dict) -> str:
                    fl, fr = leaves[("l",)], leaves[("r",)]
                    spec = Split(
                        ContLeaf(
                            lambda gcomp, ctx: self.acut2(
                                gcomp,
                                fl,
                                a1,
                                lambda gs, fs, as_: self.shift_d(gs, fs, as_),
                                lambda gb, fb, ab: make_back_edge(
                                    entry,
                                    {
                                        (g2.address.base, g2.address.dual): gb.address,
                                        (f2.address.base, f2.address.dual): fb.address,
                                        (a2.address.base, a2.address.dual): ab.address,
                                    },
                                ),
                            ),
                            (fl, a1),
                        ),
                        AxLeaf(fr),
                    )
                    return self.g_split(seq3, g1, spec)

                return self.f_tree([g1, f1, a1], f1, [("l",), ("r",)], after_f)

            out = self.copl_d(g2, f2, a2, x_machinery, reserved=entry)
            self.tag("move_d", out)
            return out

        return self.rebase([g, f, a], core)

    def prep_machinery_d(self, g, f, a) -> str:
        def after_f(seq2: list, leaves: dict) -> str:
            ax_l = leaves[("r", "l", "r", "r", "l")]
            ax_r = leaves[("r", "r", "r", "r", "r")]
            deads = [
                leaves[p]
                for p in (
                    ("l",),
                    ("r", "l", "l"),
                    ("r", "l", "r", "l"),
                    ("r", "l", "r", "r", "r"),
                    ("r", "r", "l"),
                    ("r", "r", "r", "l"),
                    ("r", "r", "r", "r", "l"),
                )
            ]
            spec = Split(InfLeaf((*deads, a)), Split(AxLeaf(ax_l), AxLeaf(ax_r)))
            return self.g_tree(seq2, g, spec)

        return self.f_tree(
            [g, f, a], f, [("r", "l", "r", "r", "l"), ("r", "r", "r", "r", "r")], after_f
        )

    def prep_d(self, g, f, a, cont, reserved=None) -> str:
        return self.acut2(
            g,
            f,
            a,
            lambda g2, f2, a2: self.counter(g2, f2, a2, self.prep_machinery_d, tag="prep_d_counter"),
            cont,
            reserved=reserved,
            tag="prep_d",
        )

    def result_d(self, g, f, a, cont, reserved=None) -> str:
        out = self.prep_d(
            g,
            f,
            a,
            lambda g1, f1, a1: self.rc(
                g1,
                f1,
                a1,
                lambda g2, f2, a2: self.acut2(
                    g2, f2, a2, lambda g3, f3, a3: self.move_d(g3, f3, a3), cont
                ),
            ),
            reserved=reserved,
        )
        self.tag("result_d", out)
        return out

    def test2_d(self, g, f, a, cont_zero, cont_positive, reserved=None) -> str:
        def club(g1, f1, a1) -> str:
            def core(seq2: list) -> str:
                g2, f2, a2 = seq2
                entry = self.reserve("clubd")

                def left_back(gl, fl, al):
                    return make_back_edge(
                        entry,
                        {
                            (g2.address.base, g2.address.dual): gl.address,
                            (f2.address.base, f2.address.dual): fl.address,
                            (a2.address.base, a2.address.dual): al.address,
                        },
                    )

                return self.exp(
                    g2,
                    f2,
                    a2,
                    left_back,
                    lambda g3, f3, a3: self.rxr_i(
                        g3,
                        f3,
                        a3,
                        lambda g4, f4, a4: self.rc(
                            g4,
                            f4,
                            a4,
                            lambda g5, f5, a5: self.exp(g5, f5, a5, cont_positive, cont_zero),
                        ),
                    ),
                    reserved=entry,
                )

            return self.rebase([g1, f1, a1], core)

        out = self.result_d(g, f, a, club, reserved=reserved)
        self.tag("test2_d", out)
        return out

    # ------------------------------------------------------------ state trees

    def build_states(self, machine: Machine, dual: bool) -> "callable":
        """Returns cont(g, f, a) entering the initial state's gadget; states
        already on the current expansion path close with back-edges."""
        suffix = "_d" if dual else ""

        def state_cont(state: str, path: dict):
            def cont(g, f, a):
                if state in path:
                    target, (g0, f0, a0) = path[state]
                    return make_back_edge(
                        target,
                        {
                            (g0.address.base, g0.address.dual): g.address,
                            (f0.address.base, f0.address.dual): f.address,
                            (a0.address.base, a0.address.dual): a.address,
                        },
                    )
                return TreeEdge(self.build_state(machine, state, path, g, f, a, dual))
            return cont

        self._state_cont = state_cont
        return state_cont(machine.initial, {})

    def build_state(self, machine: Machine, state: str, path: dict, g, f, a, dual: bool) -> str:
        suffix = "_d" if dual else ""
        if state == machine.final:
            def core(seq2: list) -> str:
                g2, f2, a2 = seq2

                def after_f(seq3: list, leaves: dict) -> str:
                    dead, active = leaves[("l",)], leaves[("r",)]
                    return self.g_tree(seq3, g2, Split(InfLeaf((dead, a2)), AxLeaf(active)))

                return self.f_tree(seq2, f2, [("r",)], after_f)

            out = self.rebase([g, f, a], core)
            self.tag(f"state{suffix}:{state}", out)
            self.tag("qf" + suffix, out)
            return out

        def core(seq2: list) -> str:
            g2, f2, a2 = seq2
            entry = self.reserve(f"st{suffix}_{state}")
            new_path = dict(path)
            new_path[state] = (entry, (g2, f2, a2))
            action = machine.delta[state]
            kind = action[0]
            if kind == "test":
                cont_zero = self._state_cont(action[2], new_path)
                cont_positive = self._state_cont(action[3], new_path)
                if action[1] == 1:
                    build = self.test1_d if dual else self.test1
                else:
                    build = self.test2_d if dual else self.test2
                out = build(g2, f2, a2, cont_zero, cont_positive, reserved=entry)
            else:
                cont = self._state_cont(action[2], new_path)
                table = {
                    ("inc", 1, False): self.inc1,
                    ("inc", 2, False): self.inc2,
                    ("dec", 1, False): self.dec1,
                    ("dec", 2, False): self.dec2,
                    ("inc", 1, True): self.inc1_d,
                    ("inc", 2, True): self.inc2_d,
                    ("dec", 1, True): self.dec1_d,
                    ("dec", 2, True): self.dec2_d,
                }
                out = table[(kind, action[1], dual)](g2, f2, a2, cont, reserved=entry)
            self.tag(f"state{suffix}:{state}", entry)
            return out

        return self.rebase([g, f, a], core)


# ---------------------------------------------------------------------------
# The whole pre-proof
# ---------------------------------------------------------------------------


@dataclass
class GadgetProof:
    graph: Graph
    machine: Machine
    tags: dict  # gadget name -> node ids
    main_choices: dict  # node id -> branch letter at free visible choices
    root_thread_index: int  # index of the followed occurrence in the root
    cut_bases: tuple  # atomic bases of the two main cuts (forward, mirror)


def compile_machine(machine: Machine) -> GadgetProof:
    machine.check()
    b = GadgetBuilder()
    g0 = Occurrence(G_FORMULA, Address("g", False, ()))
    f0 = Occurrence(F_FORMULA, Address("f", False, ()))
    b0 = Occurrence(B_FORMULA, Address("b", False, ()))

    # unfolding of the duplication budget: B | (A | A)
    b_unf = Occurrence(
        Bin("par", B_FORMULA, Bin("par", A_FORMULA, A_FORMULA)), b0.address.child("i")
    )
    b_next = Occurrence(B_FORMULA, b0.address.extend("il"))
    a_pair = Occurrence(Bin("par", A_FORMULA, A_FORMULA), b0.address.extend("ir"))
    a_one = Occurrence(A_FORMULA, b0.address.extend("irl"))
    a_two = Occurrence(A_FORMULA, b0.address.extend("irr"))

    root = b.reserve("root")

    fcut1 = Occurrence(F_FORMULA, Address("c_m", False, ()))
    gcut1 = Occurrence(G_FORMULA, Address("c_m", True, ()))
    fcut2 = Occurrence(F_FORMULA, Address("c_r", False, ()))
    gcut2 = Occurrence(G_FORMULA, Address("c_r", True, ()))

    # the forward simulation: four opening blocks then the initial state
    forward_cont = b.build_states(machine, dual=False)

    def init_chain(g, f, a):
        return b.rci(
            g,
            f,
            a,
            lambda g1, f1, a1: b.rci(
                g1,
                f1,
                a1,
                lambda g2, f2, a2: b.rci(
                    g2,
                    f2,
                    a2,
                    lambda g3, f3, a3: b.rci(g3, f3, a3, forward_cont),
                ),
            ),
        )

    pi_m = init_chain(gcut1, f0, a_two)
    b.tag("init", pi_m)

    mirror_cont = b.build_states(machine, dual=True)

    def init_chain_d(g, f, a):
        return b.rci_d(
            g,
            f,
            a,
            lambda g1, f1, a1: b.rci_d(
                g1, f1, a1, lambda g2, f2, a2: b.rci_d(g2, f2, a2, mirror_cont)
            ),
        )

    pi_r = init_chain_d(gcut2, fcut1, a_one)
    b.tag("init_d", pi_r)

    # the visible turn of the main loop
    f_unf1 = Occurrence(FP, fcut2.address.child("i"))
    f_l1 = Occurrence(F_FORMULA, fcut2.address.extend("il"))
    f_r1 = Occurrence(F_FORMULA, fcut2.address.extend("ir"))
    g_unf1 = Occurrence(GT, g0.address.child("i"))
    g_l1 = Occurrence(G_FORMULA, g0.address.extend("il"))
    g_r1 = Occurrence(G_FORMULA, g0.address.extend("ir"))
    f_unf2 = Occurrence(FP, f_r1.address.child("i"))
    f_l2 = Occurrence(F_FORMULA, f_r1.address.extend("il"))
    f_r2 = Occurrence(F_FORMULA, f_r1.address.extend("ir"))
    g_unf2 = Occurrence(GT, g_r1.address.child("i"))
    g_l2 = Occurrence(G_FORMULA, g_r1.address.extend("il"))
    g_r2 = Occurrence(G_FORMULA, g_r1.address.extend("ir"))

    ax1 = b.node("starax", [g_l1, f_l1], Rule("ax", ax_pair=(g_l1.address, f_l1.address)), [])
    ax2 = b.node("starax", [g_r2, f_r2], Rule("ax", ax_pair=(g_r2.address, f_r2.address)), [])
    loop_back = make_back_edge(
        root,
        {
            ("g", False): g_l2.address,
            ("f", False): f_l2.address,
            ("b", False): b_next.address,
        },
    )
    s9 = b.node(
        "startens2",
        [f_l2, f_r2, b_next, g_unf2],
        Rule("tensor", principal=g_unf2.address),
        [loop_back, TreeEdge(ax2)],
    )
    s8 = b.node("starmu2", [f_l2, f_r2, b_next, g_r1], Rule("mu", principal=g_r1.address), [TreeEdge(s9)])
    s7 = b.node("starpar2", [f_unf2, b_next, g_r1], Rule("par", principal=f_unf2.address), [TreeEdge(s8)])
    b.main_choices[s7] = "l"
    s6 = b.node("starnu2", [f_r1, b_next, g_r1], Rule("nu", principal=f_r1.address), [TreeEdge(s7)])
    s5 = s6
    s4 = b.node(
        "startens1",
        [f_l1, f_r1, b_next, g_unf1],
        Rule("tensor", principal=g_unf1.address),
        [TreeEdge(ax1), TreeEdge(s6)],
    )
    s3 = b.node("starmu1", [f_l1, f_r1, b_next, g0], Rule("mu", principal=g0.address), [TreeEdge(s4)])
    s2 = b.node("starpar1", [f_unf1, b_next, g0], Rule("par", principal=f_unf1.address), [TreeEdge(s3)])
    s1 = b.node("starnu1", [fcut2, b_next, g0], Rule("nu", principal=fcut2.address), [TreeEdge(s2)])
    b.tag("star", s1)

    cut2 = b.node(
        "maincut2",
        [g0, b_next, a_one, fcut1],
        Rule("cut", principal=fcut2.address, cut_formula=F_FORMULA),
        [TreeEdge(s1), TreeEdge(pi_r)],
    )
    b.tag("cut_mirror", cut2)
    cut1 = b.node(
        "maincut1",
        [g0, f0, b_next, a_one, a_two],
        Rule("cut", principal=fcut1.address, cut_formula=F_FORMULA),
        [TreeEdge(cut2), TreeEdge(pi_m)],
    )
    b.tag("cut_forward", cut1)
    par2 = b.node("rootpar2", [g0, f0, b_next, a_pair], Rule("par", principal=a_pair.address), [TreeEdge(cut1)])
    par1 = b.node("rootpar1", [g0, f0, b_unf], Rule("par", principal=b_unf.address), [TreeEdge(par2)])
    b.define(root, [g0, f0, b0], Rule("mu", principal=b0.address), [TreeEdge(par1)])
    b.tag("root", root)

    proof = b.finish(root, f"machine_{machine.initial}")
    diagnostics = validate(proof)
    if diagnostics:
        raise MachineError("compiled graph is malformed: " + "; ".join(diagnostics[:5]))
    graph = Graph(proof)
    return GadgetProof(
        graph=graph,
        machine=machine,
        tags=dict(b.tags),
        main_choices=dict(b.main_choices),
        root_thread_index=1,
        cut_bases=("c_m", "c_r"),
    )


# ---------------------------------------------------------------------------
# Direct bouncing simulation
# ---------------------------------------------------------------------------


def bold_word(stack) -> str:
    """Render a raw constraint stack as the block letters threads read."""
    out = []
    rest = list(stack)
    while rest:
        top = rest.pop()
        if top == "i" and rest:
            out.append(rest.pop())
        else:
            out.append(f"?{top}")
    return "".join(out)


@dataclass
class SimulationResult:
    outcome: str  # Exits | Lost | OutOfFuel
    steps: int
    forward_exit: str | None = None  # garbage word on leaving the simulation half
    mirror_exit: str | None = None  # leftover word on leaving the erasure half
    visible_loop_node: str | None = None


def simulate_main_thread(gp: GadgetProof, fuel: int = 100_000) -> SimulationResult:
    from .proof import PointedSequent

    graph = gp.graph
    root = gp.graph.root
    start = PointedSequent(root, gp.root_thread_index)

    def chooser(node, occurrence):
        return gp.main_choices.get(node.id)

    drive = ThreadDriver(
        graph,
        start,
        chooser=chooser,
        detect_loops=True,
        fuel=fuel,
    ).run()

    forward_base, mirror_base = gp.cut_bases
    forward_exit = None
    mirror_exit = None
    visible_loop = None
    exits = False
    for n, step in enumerate(drive.thread.steps):
        if n == 0:
            continue
        addr = step.occurrence.address
        stack = drive.stacks[n] if n < len(drive.stacks) else drive.stacks[-1]
        if step.up and addr.base == forward_base and not addr.dual and not addr.path:
            if forward_exit is None:
                forward_exit = bold_word(stack)
        if step.up and addr.base == mirror_base and not addr.dual and not addr.path:
            if mirror_exit is None:
                mirror_exit = bold_word(stack)
        if step.position == start and step.up and n > 0:
            exits = True
            break
    outcome = "Exits" if exits else ("Lost" if drive.outcome in ("loop", "deadend") else "OutOfFuel")
    return SimulationResult(
        outcome=outcome,
        steps=len(drive.thread.steps),
        forward_exit=forward_exit,
        mirror_exit=mirror_exit,
        visible_loop_node=visible_loop,
    )
