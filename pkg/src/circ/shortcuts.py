"""Relative addresses, minimal bounce shortcuts and the per-graph effect table.

A shortcut is the silent detour a thread takes through an axiom and back
down to a cut: its weight is a climb of ``W``s, one ``A`` and a balanced
bounce word.  At bounded stack height there is at most one minimal shortcut
per pointed sequent, computable on the finite graph, and its endpoint is
reachable from its start by a relative address, so the validity checker can
treat the whole detour as a single hidden jump.
"""

from __future__ import annotations

from dataclasses import dataclass

from .formula import Bin, Fix, Occurrence, dual_address
from .proof import CUT, Graph, MU_R, NU_R, PAR_R, PointedSequent, TENSOR_R
from .threads import ThreadDriver, UnsupportedFragment

JUMP_LETTERS = ("W", "i", "l", "r", "c_l", "c_r")

NOT_AXIOM_FIRST = "NotAxiomFirst"
OVERFLOW = "Overflow"
LOOP = "Loop"
DEAD_END = "DeadEnd"

_OUTCOME_REASON = {
    "nonaxiom": NOT_AXIOM_FIRST,
    "overflow": OVERFLOW,
    "loop": LOOP,
    "deadend": DEAD_END,
    "exit_down": DEAD_END,  # the detour left the subtree of its start
    "fuel": LOOP,
}


@dataclass(frozen=True)
class Shortcut:
    start: PointedSequent
    end: PointedSequent
    step_count: int
    max_height: int
    effect: tuple  # relative-address letters


@dataclass(frozen=True)
class NoShortcut:
    reason: str


@dataclass
class EffectTable:
    graph: Graph
    k: int
    entries: dict  # PointedSequent -> Shortcut | NoShortcut

    def shortcut(self, p: PointedSequent):
        entry = self.entries[p]
        return entry if isinstance(entry, Shortcut) else None

    def restrict(self, k: int) -> "EffectTable":
        """The table at a smaller height bound is a filter of this one."""
        if k > self.k:
            raise ValueError(f"cannot raise the bound from {self.k} to {k}")
        out = {}
        for p, entry in self.entries.items():
            if isinstance(entry, Shortcut) and entry.max_height > k:
                out[p] = NoShortcut(OVERFLOW)
            else:
                out[p] = entry
        return EffectTable(self.graph, k, out)


def resolve(tau, p: PointedSequent, graph: Graph) -> PointedSequent | None:
    """Navigate a relative address upward from a pointed sequent.

    ``W`` follows the (unique) premise containing the occurrence; ``i``,
    ``l`` and ``r`` require the occurrence to be principal and descend into
    the named component's premise; ``c_l``/``c_r`` require the node's rule
    to be a cut and jump to the cut occurrence of that premise.  Returns
    None when a side condition fails.
    """
    for letter in tau:
        node = graph.node(p.node)
        occ = graph.occurrence(p)
        if letter == "W":
            found = None
            for view in graph.views(p.node):
                for i, premise_occ in enumerate(view.sequent):
                    if premise_occ.address == occ.address:
                        found = PointedSequent(view.node, i)
                        break
                if found:
                    break
            if found is None:
                return None
            p = found
        elif letter in ("i", "l", "r"):
            principal = graph.principal_index(p.node)
            if principal != p.index:
                return None
            kind = node.rule.kind
            if letter == "i":
                if kind not in (MU_R, NU_R):
                    return None
                edge = 0
            elif kind == PAR_R:
                edge = 0
            elif kind == TENSOR_R:
                edge = 0 if letter == "l" else 1
            else:
                return None
            sub_addr = occ.address.child(letter)
            view = graph.views(p.node)[edge]
            try:
                idx = view.sequent.index_of_address(sub_addr)
            except Exception:
                return None
            p = PointedSequent(view.node, idx)
        elif letter in ("c_l", "c_r"):
            if node.rule.kind != CUT:
                return None
            beta = node.rule.principal
            edge = 0 if letter == "c_l" else 1
            cut_addr = beta if edge == 0 else dual_address(beta)
            view = graph.views(p.node)[edge]
            try:
                idx = view.sequent.index_of_address(cut_addr)
            except Exception:
                return None
            p = PointedSequent(view.node, idx)
        else:
            return None
    return p


def minimal_shortcut(graph: Graph, p: PointedSequent, k: int):
    """The unique minimal shortcut from ``p`` at height bound ``k``.

    Drives the forced pre-thread: silent climbs to the first axiom, the
    bounce, the forced descent toward a cut and the forced pops, ending at
    the first ascending point with an empty constraint stack.  Failures are
    tagged: an unfolding of the followed occurrence before any axiom, a
    stack beyond ``k``, a repeated (pointed sequent, stack) state, or a
    move that leaves the start's subtree or has no continuation.
    """
    drive = ThreadDriver(
        graph,
        p,
        max_stack=k,
        require_axiom_first=True,
        stop_at_empty_stack=True,
        fuel=1_000_000,
    ).run()
    if drive.outcome == "end":
        return Shortcut(
            start=p,
            end=drive.end,
            step_count=len(drive.thread.steps),
            max_height=drive.max_height,
            effect=tuple(drive.effect),
        )
    return NoShortcut(_OUTCOME_REASON.get(drive.outcome, DEAD_END))


def build_effect_table(graph: Graph, k: int) -> EffectTable:
    if graph.has_additives():
        raise UnsupportedFragment("effect tables cover the multiplicative fragment only")
    entries = {}
    for p in graph.pointed_sequents():
        entries[p] = minimal_shortcut(graph, p, k)
    return EffectTable(graph, k, entries)


def dump_effect_table(table: EffectTable) -> str:
    lines = []
    for p, entry in table.entries.items():
        key = f"{p.node}:{p.index}"
        if isinstance(entry, Shortcut):
            effect = "".join(entry.effect) or "eps"
            lines.append(
                f"{key}  ->  Some(height={entry.max_height}, effect={effect}, "
                f"end={entry.end.node}:{entry.end.index})"
            )
        else:
            lines.append(f"{key}  ->  None({entry.reason})")
    return "\n".join(lines) + "\n"
