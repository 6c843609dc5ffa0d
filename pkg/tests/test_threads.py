from __future__ import annotations

import itertools
import random

import pytest

from circ.formula import Occurrence, Unit, build_priority_order, negate, parse_address, parse_formula
from circ.threads import (
    ALPHABET,
    PreThread,
    ThreadDriver,
    ThreadShapePrefixMachine,
    ThreadStep,
    athread_run,
    decompose,
    grammar_member,
    height,
    is_thread,
    thread_shaped_prefix,
    thread_validity,
    weight,
)
from circ.proof import PointedSequent

PHI = parse_formula("nu X. X")
PSI = parse_formula("1")


def _occ(formula, addr):
    return Occurrence(formula, parse_address(addr))


def _bounce_example(first_branch: str):
    """The two pre-threads of the worked example: both climb into the tensor's
    axioms, bounce, descend to the cut and climb the dual compound.  The one
    entering on the left closes its brackets; the right one clashes."""
    up, down = True, False
    compound = Occurrence(parse_formula("(nu X. X) | 1"), parse_address("d"))
    if first_branch == "l":
        mine, mine_ax, partner = _occ(PHI, "d:l"), _occ(negate(PHI), "e:l"), "l"
    else:
        mine, mine_ax, partner = _occ(PSI, "d:r"), _occ(negate(PSI), "e:r"), "r"
    steps = [
        ThreadStep(compound, up),
        ThreadStep(compound, up),
        ThreadStep(mine, up),
        ThreadStep(mine_ax, down),
        ThreadStep(_occ(parse_formula("(mu X. X) * bot"), "e"), down),
        ThreadStep(_occ(parse_formula("(nu X. X) | 1"), "e^"), up),
        ThreadStep(_occ(PHI, "e^:l"), up),
        ThreadStep(_occ(PHI, "e^:li"), up),
    ]
    return PreThread(steps)


# ---------------------------------------------------------------- weights

def test_weight_blue():
    assert weight(_bounce_example("l")) == ["W", "l", "A", "L", "C", "l", "i"]


def test_weight_red():
    assert weight(_bounce_example("r")) == ["W", "r", "A", "R", "C", "l", "i"]


def test_weight_stationary_step():
    occ = _occ(PHI, "a")
    t = PreThread([ThreadStep(occ, True), ThreadStep(occ, True)])
    assert weight(t) == ["W"]


# ---------------------------------------------------------------- recognizer

def test_recognizer_blue():
    run = athread_run(["W", "l", "A", "L", "C", "l", "i"])
    assert run.accepted
    assert run.max_height == 1
    visible = [i for i, p in enumerate(run.trace[1:]) if p.visible]
    assert visible == [1, 6]  # the first l (empty stack) and the final i


def test_recognizer_red():
    run = athread_run(["W", "r", "A", "R", "C", "l", "i"])
    assert not run.accepted
    assert run.reject_at == 5
    assert "stack top r" in run.reason


def test_recognizer_empty():
    run = athread_run([])
    assert run.accepted and run.max_height == 0


def test_is_thread_examples():
    assert is_thread(_bounce_example("l"))
    assert not is_thread(_bounce_example("r"))


def test_purely_upward_prethread_is_thread():
    steps = [
        ThreadStep(_occ(parse_formula("nu X. X | X"), "a"), True),
        ThreadStep(_occ(parse_formula("(nu X. X | X) | (nu X. X | X)"), "a:i"), True),
        ThreadStep(_occ(parse_formula("nu X. X | X"), "a:il"), True),
    ]
    assert is_thread(PreThread(steps))


# ---------------------------------------------------------------- grammars

def test_grammar_examples():
    assert grammar_member(["C"], "B")
    assert grammar_member(["A", "C"], "H")
    assert not grammar_member(["L", "C", "r"], "B")
    assert grammar_member(["L", "C", "l"], "B")
    assert grammar_member(["L", "W", "C", "W", "l"], "B")
    assert grammar_member(["C", "A", "C"], "B")
    assert grammar_member(["C", "W", "A", "W", "C"], "B")
    assert not grammar_member([], "B")
    assert grammar_member([], "H")
    assert grammar_member(["I", "L", "C", "l", "A", "C", "i"], "B")


def test_grammar_vs_recognizer_small_words():
    # exhaustive agreement on all words up to length 4
    for n in range(5):
        for word in itertools.product(ALPHABET, repeat=n):
            dpda = athread_run(word).accepted
            cfg = thread_shaped_prefix(word)
            assert dpda == cfg, f"disagree on {word}: dpda={dpda} cfg={cfg}"


def test_grammar_vs_recognizer_random_words():
    rng = random.Random(5)
    for _ in range(2000):
        n = rng.randrange(0, 13)
        word = [rng.choice(ALPHABET) for _ in range(n)]
        assert athread_run(word).accepted == thread_shaped_prefix(word)


# ---------------------------------------------------------------- decomposition

def test_decompose_blue():
    dec = decompose(_bounce_example("l"))
    kinds = [(b.kind, b.start, b.end) for b in dec.blocks]
    assert kinds == [("V", 0, 2), ("H", 2, 6), ("V", 6, 7)]


def test_decompose_pure_upward():
    steps = [
        ThreadStep(_occ(PHI, "a"), True),
        ThreadStep(_occ(PHI, "a"), True),
        ThreadStep(_occ(PHI, "a:i"), True),
    ]
    dec = decompose(PreThread(steps))
    assert [b.kind for b in dec.blocks] == ["V"]


def test_decompose_initial_bounce():
    t = PreThread(
        [
            ThreadStep(_occ(PHI, "a"), True),
            ThreadStep(_occ(negate(PHI), "b"), False),
            ThreadStep(_occ(PHI, "b^"), True),
        ]
    )
    assert weight(t) == ["A", "C"]
    dec = decompose(t)
    assert [b.kind for b in dec.blocks] == ["H"]


def test_decompose_reconstruct():
    t = _bounce_example("l")
    dec = decompose(t)
    assert dec.blocks[0].start == 0
    assert dec.blocks[-1].end == len(dec.letters)
    for a, b in zip(dec.blocks, dec.blocks[1:]):
        assert a.end == b.start  # blocks share their boundary step


# ---------------------------------------------------------------- height

def test_height_blue():
    assert height(_bounce_example("l")) == 1


def test_height_straight():
    steps = [ThreadStep(_occ(PHI, "a"), True), ThreadStep(_occ(PHI, "a:i"), True)]
    assert height(PreThread(steps)) == 0


def test_height_nested_bounce_loop():
    # weight (A L L C l l)^n keeps height 2 however often it repeats
    word = []
    for _ in range(6):
        word += ["A", "L", "L", "C", "l", "l"]
    run = athread_run(word)
    assert run.accepted and run.max_height == 2


# ---------------------------------------------------------------- validity

def test_thread_validity_nu_loop():
    occ = _occ(PHI, "a")
    steps = [ThreadStep(occ, True), ThreadStep(_occ(PHI, "a:i"), True)]
    # loop over a single unfolding: lasso from step 0
    t = PreThread(steps, loop_start=0)
    order = build_priority_order([occ])
    assert thread_validity(t, order) == "valid"


def test_thread_validity_mu_dominates():
    phi = parse_formula("mu X. nu Y. X")
    inner = parse_formula("nu Y. mu X. nu Y. X")
    steps = [
        ThreadStep(_occ(phi, "a"), True),
        ThreadStep(_occ(inner, "a:i"), True),
        ThreadStep(_occ(phi, "a:ii"), True),
    ]
    t = PreThread(steps, loop_start=0)
    order = build_priority_order([_occ(phi, "a")])
    assert thread_validity(t, order) == "invalid"


def test_thread_validity_stationary():
    occ = _occ(PHI, "a")
    t = PreThread([ThreadStep(occ, True), ThreadStep(occ, True)], loop_start=0)
    order = build_priority_order([occ])
    assert thread_validity(t, order) == "stationary"


# ---------------------------------------------------------------- graph driver

def test_driver_pi0_weight(pi0):
    drive = ThreadDriver(
        pi0,
        PointedSequent("cut", 0),
        require_axiom_first=True,
        stop_at_empty_stack=True,
    ).run()
    assert drive.outcome == "end"
    assert drive.letters == ["W", "W", "A", "I", "C", "i"]
    assert drive.max_height == 1
    assert drive.effect == ["c_r", "i"]
    assert drive.end == PointedSequent("nu2", 0)


def test_driver_overflow_at_zero(pi0):
    drive = ThreadDriver(
        pi0,
        PointedSequent("cut", 0),
        max_stack=0,
        require_axiom_first=True,
        stop_at_empty_stack=True,
    ).run()
    assert drive.outcome == "overflow"


def test_driver_nonaxiom(valid_right):
    drive = ThreadDriver(
        valid_right,
        PointedSequent("cut", 0),
        require_axiom_first=True,
        stop_at_empty_stack=True,
    ).run()
    assert drive.outcome == "nonaxiom"
