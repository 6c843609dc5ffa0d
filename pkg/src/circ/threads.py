"""Bouncing pre-threads, weights, the stack recognizer and thread validity.

Weight letters are single characters: ``l r i`` (address extensions),
``L R I`` (the matching retractions), ``A`` (axiom bounce), ``C`` (cut
bounce) and ``W`` (no address change).  The recognizer is a two-state
deterministic pushdown machine; a pre-thread is a thread exactly when its
weight survives the run.  The context-free block grammars act as an
independent oracle for the recognizer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

from .formula import Fix, Occurrence, PriorityOrder, dual_address
from .proof import (
    AX,
    BOT_R,
    CUT,
    Graph,
    MU_R,
    NU_R,
    ONE_R,
    OPEN_R,
    PAR_R,
    PointedSequent,
    TENSOR_R,
    TOP_R,
    apply_renaming,
)

UPS = "up"
DOWNS = "down"

EXTENSIONS = ("l", "r", "i")
RETRACTIONS = ("L", "R", "I")
ALPHABET = ("l", "r", "i", "L", "R", "I", "A", "C", "W")

_BAR = {"l": "L", "r": "R", "i": "I"}
_UNBAR = {v: k for k, v in _BAR.items()}


def pretty_letter(letter: str) -> str:
    return "~" + _UNBAR[letter] if letter in _UNBAR else letter


def pretty_word(word: Iterable[str]) -> str:
    return " ".join(pretty_letter(x) for x in word)


class UnsupportedFragment(Exception):
    """Raised when a checker meets an additive rule or formula."""


# ---------------------------------------------------------------------------
# Pre-threads as explicit step sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThreadStep:
    occurrence: Occurrence
    up: bool
    position: PointedSequent | None = None  # optional graph location


@dataclass
class PreThread:
    """Finite pre-thread, or a lasso when ``loop_start`` is set.

    Lassos carry the wrap step explicitly: ``steps[loop_start]`` and
    ``steps[-1]`` denote the same point of the proof graph (their addresses
    may differ by the loop renaming), so the letters from ``loop_start`` on
    are exactly one loop period.
    """

    steps: list  # of ThreadStep
    loop_start: int | None = None

    def __len__(self) -> int:
        return len(self.steps)


class ThreadError(ValueError):
    pass


def weight(t: PreThread) -> list[str]:
    """One letter per consecutive step pair."""
    return [_pair_letter(a, b) for a, b in zip(t.steps, t.steps[1:])]


def _pair_letter(a: ThreadStep, b: ThreadStep) -> str:
    if a.up and not b.up:
        return "A"
    if not a.up and b.up:
        return "C"
    aa, ba = a.occurrence.address, b.occurrence.address
    if aa == ba:
        return "W"
    if aa.base == ba.base and aa.dual == ba.dual:
        if len(ba.path) == len(aa.path) + 1 and ba.path[: len(aa.path)] == aa.path:
            return ba.path[-1]
        if len(aa.path) == len(ba.path) + 1 and aa.path[: len(ba.path)] == ba.path:
            return _BAR[aa.path[-1]]
    raise ThreadError(f"malformed step pair: {a.occurrence} -> {b.occurrence}")


# ---------------------------------------------------------------------------
# The thread recognizer (deterministic pushdown machine)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunPoint:
    mode: str  # up | down
    stack: tuple
    visible: bool  # the letter consumed to reach this point was a visible move


@dataclass
class RunResult:
    accepted: bool
    trace: list  # RunPoint after each letter; trace[0] is the start
    reject_at: int | None = None
    reason: str | None = None

    @property
    def max_height(self) -> int:
        return max(len(p.stack) for p in self.trace)


def athread_run(word: Iterable[str]) -> RunResult:
    """Run the two-state pushdown recognizer over a weight word.

    Start ascending with an empty stack.  Ascending: an extension letter
    with empty stack is the visible move, with a matching stack top it pops,
    with a clashing top it rejects; ``W`` is silent; ``A`` turns around.
    Descending: retractions push, ``W`` is silent, ``C`` turns back up.
    Every surviving run accepts.
    """
    mode = UPS
    stack: list[str] = []
    trace = [RunPoint(mode, (), False)]
    for n, letter in enumerate(word):
        visible = False
        if letter not in ALPHABET:
            return RunResult(False, trace, n, f"unknown letter {letter!r}")
        if mode == UPS:
            if letter in EXTENSIONS:
                if not stack:
                    visible = True
                elif stack[-1] == letter:
                    stack.pop()
                else:
                    return RunResult(False, trace, n, f"{pretty_letter(letter)} against stack top {stack[-1]}")
            elif letter == "W":
                pass
            elif letter == "A":
                mode = DOWNS
            else:
                return RunResult(False, trace, n, f"{pretty_letter(letter)} while ascending")
        else:
            if letter in RETRACTIONS:
                stack.append(_UNBAR[letter])
            elif letter == "W":
                pass
            elif letter == "C":
                mode = UPS
            else:
                return RunResult(False, trace, n, f"{pretty_letter(letter)} while descending")
        trace.append(RunPoint(mode, tuple(stack), visible))
    return RunResult(True, trace)


def is_thread(t: PreThread) -> bool:
    letters = weight(t)
    if t.loop_start is None:
        return athread_run(letters).accepted
    return _lasso_run(letters[: t.loop_start], letters[t.loop_start :])[0]


def _lasso_run(prefix: list, loop: list, max_periods: int = 512):
    """(accepted, height) of prefix . loop^omega under the recognizer."""
    run = athread_run(prefix)
    if not run.accepted:
        return False, None
    mode, stack = run.trace[-1].mode, list(run.trace[-1].stack)
    height = run.max_height
    seen = {}
    for period in range(max_periods):
        key = (mode, tuple(stack))
        if key in seen:
            return True, height
        seen[key] = period
        for letter in loop:
            if mode == UPS:
                if letter in EXTENSIONS:
                    if stack:
                        if stack[-1] == letter:
                            stack.pop()
                        else:
                            return False, None
                elif letter == "A":
                    mode = DOWNS
                elif letter != "W":
                    return False, None
            else:
                if letter in RETRACTIONS:
                    stack.append(_UNBAR[letter])
                elif letter == "C":
                    mode = UPS
                elif letter != "W":
                    return False, None
            height = max(height, len(stack))
    return True, float("inf")  # stack keeps growing, never crashes


def height(t: PreThread):
    """Supremum of the recognizer stack along the run (omega as inf)."""
    letters = weight(t)
    if t.loop_start is None:
        run = athread_run(letters)
        if not run.accepted:
            raise ThreadError("not a thread")
        return run.max_height
    ok, h = _lasso_run(letters[: t.loop_start], letters[t.loop_start :])
    if not ok:
        raise ThreadError("not a thread")
    return h


# ---------------------------------------------------------------------------
# Block grammars (independent oracle)
# ---------------------------------------------------------------------------


def grammar_member(word, which: str) -> bool:
    """Membership of a finite word in the bounce grammar ``B`` or ``H``.

    B := C | B W* A W* B | xbar W* B W* x        H := eps | A W* B
    """
    word = tuple(word)
    n = len(word)
    if which == "H":
        if n == 0:
            return True
        if word[0] != "A":
            return False
        for m in range(1, n + 1):
            if all(c == "W" for c in word[1:m]) and grammar_member(word[m:], "B"):
                return True
        return False
    if which != "B":
        raise ValueError("which must be 'B' or 'H'")

    memo: dict = {}

    def bmatch(i: int, j: int) -> bool:
        if (i, j) in memo:
            return memo[i, j]
        memo[i, j] = False  # guards the left recursion; chains found by length
        ok = False
        if j - i == 1 and word[i] == "C":
            ok = True
        if not ok and word[i] in RETRACTIONS and word[j - 1] == _UNBAR[word[i]]:
            for a in range(i + 1, j):
                if not all(c == "W" for c in word[i + 1 : a]):
                    continue
                for b in range(a + 1, j):
                    if bmatch(a, b) and all(c == "W" for c in word[b : j - 1]):
                        ok = True
                        break
                if ok:
                    break
        if not ok:
            # B W* A W* B, splitting on every A position
            for p in range(i + 1, j - 1):
                if word[p] != "A":
                    continue
                for m in range(i + 1, p + 1):
                    if not (bmatch(i, m) and all(c == "W" for c in word[m:p])):
                        continue
                    for q in range(p + 1, j):
                        if all(c == "W" for c in word[p + 1 : q]) and bmatch(q, j):
                            ok = True
                            break
                    if ok:
                        break
                if ok:
                    break
        memo[i, j] = ok
        return ok

    return n > 0 and bmatch(0, n)


# Incremental recognizer for prefixes of thread-shaped weight words, driven
# purely by the grammar productions (left recursion unrolled):
#   T  -> Vs Tl        Tl -> eps | Hc Vs Tl      Hc -> A Ws B
#   Vs -> eps | v Vs   Ws -> eps | W Ws
#   B  -> Bh Bt        Bt -> eps | Ws A Ws B Bt
#   Bh -> C | xbar Ws B Ws x
_V_SYMS = ("l", "r", "i", "W")

_PRODUCTIONS = {
    "T": (("Vs", "Tl"),),
    "Tl": ((), ("Hc", "Vs", "Tl")),
    "Hc": (("A", "Ws", "B"),),
    "Vs": ((),) + tuple((v, "Vs") for v in _V_SYMS),
    "Ws": ((), ("W", "Ws")),
    "B": (("Bh", "Bt"),),
    "Bt": ((), ("Ws", "A", "Ws", "B", "Bt")),
    "Bh": (("C",),)
    + tuple((bar, "Ws", "B", "Ws", x) for x, bar in _BAR.items()),
}


class ThreadShapePrefixMachine:
    """Tracks whether the letters consumed so far form a viable prefix of a
    thread-shaped weight word, by expanding grammar stacks top-down."""

    def __init__(self, configs: frozenset | None = None):
        if configs is None:
            configs = self._close((("T",),))
        self.configs = configs

    @staticmethod
    def _close(stacks) -> frozenset:
        out = set()
        work = [tuple(s) for s in stacks]
        seen = set()
        while work:
            stack = work.pop()
            if stack in seen:
                continue
            seen.add(stack)
            if not stack:
                continue  # complete word; cannot consume more letters
            top, rest = stack[0], stack[1:]
            if top in _PRODUCTIONS:
                for prod in _PRODUCTIONS[top]:
                    work.append(tuple(prod) + rest)
            else:
                out.add(stack)
        return frozenset(out)

    @property
    def alive(self) -> bool:
        return bool(self.configs)

    def step(self, letter: str) -> "ThreadShapePrefixMachine":
        nxt = [s[1:] for s in self.configs if s[0] == letter]
        return ThreadShapePrefixMachine(self._close(nxt))

    def key(self) -> frozenset:
        return self.configs


def thread_shaped_prefix(word: Iterable[str]) -> bool:
    machine = ThreadShapePrefixMachine()
    for letter in word:
        machine = machine.step(letter)
        if not machine.alive:
            return False
    return True


# ---------------------------------------------------------------------------
# Decomposition into visible and hidden blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    kind: str  # 'V' | 'H'
    start: int  # first step index
    end: int  # last step index (blocks share boundary steps)

    def letters(self, letters: list) -> list:
        return letters[self.start : self.end]


@dataclass
class Decomposition:
    blocks: list
    letters: list
    visible_letter_indices: list


def decompose(t: PreThread) -> Decomposition:
    """Unique split into visible ascents and hidden bounce blocks."""
    letters = weight(t)
    run = athread_run(letters)
    if not run.accepted:
        raise ThreadError(f"not a thread: rejected at {run.reject_at} ({run.reason})")
    marks = []
    visible_idx = []
    for n, letter in enumerate(letters):
        before = run.trace[n]
        if letter == "W":
            vis = before.mode == UPS and not before.stack
        elif letter in EXTENSIONS:
            vis = before.mode == UPS and not before.stack
        else:
            vis = False
        marks.append("V" if vis else "H")
        if vis:
            visible_idx.append(n)
    blocks = []
    start = 0
    for n in range(1, len(marks) + 1):
        if n == len(marks) or marks[n] != marks[start]:
            blocks.append(Block(marks[start], start, n))
            start = n
    for block in blocks:
        seg = letters[block.start : block.end]
        if block.kind == "H" and not _hidden_block_ok(seg):
            raise ThreadError(f"hidden block {pretty_word(seg)} is not bounce-shaped")
    return Decomposition(blocks, letters, visible_idx)


def _hidden_block_ok(seg: list) -> bool:
    """A hidden block must be a bounce word or an unfinished prefix of one."""
    if grammar_member(seg, "H"):
        return True
    machine = ThreadShapePrefixMachine(ThreadShapePrefixMachine._close((("Hc",),)))
    for letter in seg:
        machine = machine.step(letter)
        if not machine.alive:
            return False
    return True


def visible_part(t: PreThread) -> list:
    dec = decompose(t)
    return [b for b in dec.blocks if b.kind == "V"]


def hidden_part(t: PreThread) -> list:
    dec = decompose(t)
    return [b for b in dec.blocks if b.kind == "H"]


def thread_validity(t: PreThread, order: PriorityOrder) -> str:
    """'valid' / 'invalid' / 'stationary' for a lasso-shaped thread."""
    letters = weight(t)
    if t.loop_start is None:
        return "stationary"
    run_prefix = letters[: t.loop_start]
    loop_letters = letters[t.loop_start :]
    ok, _ = _lasso_run(run_prefix, loop_letters)
    if not ok:
        raise ThreadError("not a thread")
    # visible unfolding events inside the loop, judged on recognizer state
    events = _loop_visible_unfoldings(t, letters, order)
    if events is None:
        return "stationary"
    if not events:
        return "invalid"
    return "valid" if min(events) % 2 == 0 else "invalid"


def _loop_visible_unfoldings(t: PreThread, letters: list, order: PriorityOrder):
    """Priorities of visible fixed-point unfoldings along the recurring part
    of the loop.  Returns None when that visible part is empty or all-W
    (a stationary thread)."""
    run = athread_run(letters[: t.loop_start])
    mode, stack = run.trace[-1].mode, list(run.trace[-1].stack)
    loop = letters[t.loop_start :]
    loop_steps = t.steps[t.loop_start :]
    seen: dict = {}
    records = []  # (events, visible_non_w) per period
    while (mode, tuple(stack)) not in seen and len(records) <= 512:
        seen[(mode, tuple(stack))] = len(records)
        events = []
        visible_non_w = False
        for idx, letter in enumerate(loop):
            visible = False
            if mode == UPS:
                if letter in EXTENSIONS:
                    if not stack:
                        visible = True
                    else:
                        stack.pop()
                elif letter == "A":
                    mode = DOWNS
            else:
                if letter in RETRACTIONS:
                    stack.append(_UNBAR[letter])
                elif letter == "C":
                    mode = UPS
            if visible:
                visible_non_w = True
                if letter == "i":
                    phi = loop_steps[idx].occurrence.formula
                    if isinstance(phi, Fix):
                        events.append(order.priority(phi))
        records.append((events, visible_non_w))
    state = (mode, tuple(stack))
    if state not in seen:
        return None  # stack grows forever: every visible event dries up
    first = seen[state]
    recurring = records[first:]
    if not any(v for _, v in recurring):
        return None
    out: list = []
    for events, _ in recurring:
        out.extend(events)
    return out


def thread_valid(t: PreThread, order: PriorityOrder) -> bool:
    return thread_validity(t, order) == "valid"


# ---------------------------------------------------------------------------
# Deterministic thread driver over a proof graph
# ---------------------------------------------------------------------------


@dataclass
class DriveResult:
    outcome: str  # end | deadend | overflow | loop | fuel | exit_down | stopped | nonaxiom
    thread: PreThread
    letters: list
    stacks: list  # stack tuple after each letter
    end: PointedSequent | None
    effect: list  # relative-address letters of the current access path
    max_height: int
    exit_stack: tuple | None = None
    stop_node: str | None = None
    initial_stack: tuple = ()


class ThreadDriver:
    """Drives the unique pre-thread from a pointed sequent, ascending first.

    The driver is anchored: the path context starts empty at the start
    position, descending below it exits downwards, and a cut bounce at the
    anchor itself pivots in place.  Free choices (visible moves with an
    empty constraint stack at a binary principal occurrence) are answered by
    the ``chooser`` callback; every other move is forced by the stack.
    """

    def __init__(
        self,
        graph: Graph,
        start: PointedSequent,
        *,
        max_stack: int | None = None,
        fuel: int = 100_000,
        chooser: Callable | None = None,
        detect_loops: bool = True,
        stop_nodes: frozenset = frozenset(),
        require_axiom_first: bool = False,
        stop_at_empty_stack: bool = False,
        initial_stack: Iterable = (),
    ):
        self.graph = graph
        self.start = start
        self.max_stack = max_stack
        self.fuel = fuel
        self.chooser = chooser
        self.detect_loops = detect_loops
        self.stop_nodes = stop_nodes
        self.require_axiom_first = require_axiom_first
        self.stop_at_empty_stack = stop_at_empty_stack
        self.initial_stack = tuple(initial_stack)

    def run(self) -> DriveResult:
        graph = self.graph
        pos = self.start
        occ = graph.occurrence(pos)
        up = True
        stack: list = list(self.initial_stack)
        path: list = []  # (node, edge_index, tau_letter)
        steps = [ThreadStep(occ, True, pos)]
        letters: list[str] = []
        stacks: list[tuple] = [tuple(stack)]
        seen_up: set = set()
        outcome = "fuel"
        exit_stack = None
        stop_node = None
        saw_bounce = False
        saw_cut_bounce = False

        def record(letter: str) -> None:
            letters.append(letter)
            stacks.append(tuple(stack))

        for _ in range(self.fuel):
            node = graph.node(pos.node)
            if up:
                if self.stop_at_empty_stack and saw_cut_bounce and not stack:
                    outcome = "end"
                    break
                state = (pos, tuple(stack))
                if self.detect_loops:
                    if state in seen_up:
                        outcome = "loop"
                        break
                    seen_up.add(state)
                if pos.node in self.stop_nodes and (pos != self.start or len(steps) > 1):
                    outcome = "stopped"
                    stop_node = pos.node
                    break
                kind = node.rule.kind
                if kind == AX:
                    other = 1 - pos.index
                    pos = PointedSequent(pos.node, other)
                    occ = graph.occurrence(pos)
                    up = False
                    saw_bounce = True
                    steps.append(ThreadStep(occ, False, pos))
                    record("A")
                    continue
                if kind in (ONE_R, TOP_R, OPEN_R):
                    outcome = "deadend"
                    break
                principal_idx = graph.principal_index(pos.node)
                if principal_idx == pos.index:
                    if kind not in (MU_R, NU_R, PAR_R, TENSOR_R, BOT_R):
                        raise UnsupportedFragment(f"additive rule {kind} at {pos.node}")
                    if self.require_axiom_first and not saw_bounce:
                        outcome = "nonaxiom"
                        break
                    step = self._principal_step(node, occ, stack)
                    if step is None:
                        outcome = "deadend"
                        break
                    letter, edge_idx, sub_addr = step
                    view = graph.views(pos.node)[edge_idx]
                    sub_idx = view.sequent.index_of_address(sub_addr)
                    if stack and stack[-1] == letter:
                        stack.pop()
                    path.append((pos.node, edge_idx, letter))
                    pos = PointedSequent(view.node, sub_idx)
                    occ = graph.occurrence(pos)
                    steps.append(ThreadStep(occ, True, pos))
                    record(letter)
                    continue
                # context occurrence: the unique premise holding it
                found = None
                for view in graph.views(pos.node):
                    for i, premise_occ in enumerate(view.sequent):
                        if premise_occ.address == occ.address:
                            found = (view, i)
                            break
                    if found:
                        break
                if found is None:
                    outcome = "deadend"
                    break
                view, idx = found
                path.append((pos.node, view.edge_index, "W"))
                pos = PointedSequent(view.node, idx)
                occ = graph.occurrence(pos)
                steps.append(ThreadStep(occ, True, pos))
                record("W")
                continue

            # descending
            if not path:
                outcome = "exit_down"
                exit_stack = tuple(stack)
                break
            parent_id, edge_idx, _tau = path[-1]
            parent = graph.node(parent_id)
            view = graph.views(parent_id)[edge_idx]
            local_addr = occ.address
            if view.is_back:
                local_addr = apply_renaming(view.renaming, occ.address)
            ctx_idx = None
            for i, below in enumerate(parent.conclusion):
                if below.address == local_addr:
                    ctx_idx = i
                    break
            if ctx_idx is not None:
                path.pop()
                pos = PointedSequent(parent_id, ctx_idx)
                occ = graph.occurrence(pos)
                steps.append(ThreadStep(occ, False, pos))
                record("W")
                continue
            if (
                parent.rule.kind in (MU_R, NU_R, PAR_R, TENSOR_R)
                and local_addr.path
                and local_addr.parent == parent.rule.principal
            ):
                letter = local_addr.path[-1]
                stack.append(letter)
                if self.max_stack is not None and len(stack) > self.max_stack:
                    record(_BAR[letter])
                    outcome = "overflow"
                    break
                path.pop()
                idx = parent.conclusion.index_of_address(parent.rule.principal)
                pos = PointedSequent(parent_id, idx)
                occ = graph.occurrence(pos)
                steps.append(ThreadStep(occ, False, pos))
                record(_BAR[letter])
                continue
            if parent.rule.kind == CUT and not local_addr.path and local_addr.base == parent.rule.principal.base:
                sibling_edge = 1 - edge_idx
                sib_view = graph.views(parent_id)[sibling_edge]
                beta = parent.rule.principal
                cut_addr = beta if sibling_edge == 0 else dual_address(beta)
                sib_idx = sib_view.sequent.index_of_address(cut_addr)
                path.pop()
                path.append((parent_id, sibling_edge, "c_l" if sibling_edge == 0 else "c_r"))
                pos = PointedSequent(sib_view.node, sib_idx)
                occ = graph.occurrence(pos)
                up = True
                saw_cut_bounce = True
                steps.append(ThreadStep(occ, True, pos))
                record("C")
                continue
            outcome = "deadend"
            break

        thread = PreThread(steps, None)
        return DriveResult(
            outcome=outcome,
            thread=thread,
            letters=letters,
            stacks=stacks,
            end=pos,
            effect=[entry[2] for entry in path],
            max_height=max((len(s) for s in stacks), default=0),
            exit_stack=exit_stack,
            stop_node=stop_node,
            initial_stack=self.initial_stack,
        )

    def _principal_step(self, node, occ: Occurrence, stack: list):
        """(letter, edge_index, sub_address) for the forced or chosen move."""
        kind = node.rule.kind
        alpha = occ.address
        if kind == BOT_R:
            return None  # the unit occurrence has no sub-occurrence to follow
        if kind in (MU_R, NU_R):
            if stack and stack[-1] != "i":
                return None
            return ("i", 0, alpha.child("i"))
        if kind == PAR_R:
            letter = self._binary_choice(node, occ, stack)
            if letter is None:
                return None
            return (letter, 0, alpha.child(letter))
        if kind == TENSOR_R:
            letter = self._binary_choice(node, occ, stack)
            if letter is None:
                return None
            return (letter, 0 if letter == "l" else 1, alpha.child(letter))
        return None

    def _binary_choice(self, node, occ: Occurrence, stack: list):
        if stack:
            return stack[-1] if stack[-1] in ("l", "r") else None
        if self.chooser is None:
            return None
        return self.chooser(node, occ)
