"""Formulas, addresses, occurrences, sequents and the unfolding priority order.

Formulas are stored in positive form (negation is a function, not a
connective) with nameless bound variables, so that syntactic equality is
definitional equality.  Additive connectives parse and dualize but are
flagged, letting the validity and reduction modules reject them early.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator

# ---------------------------------------------------------------------------
# Formula syntax
# ---------------------------------------------------------------------------

TENSOR, PAR, PLUS, WITH = "tensor", "par", "plus", "with"
MU, NU = "mu", "nu"
ONE, BOT, TOP, ZERO = "one", "bot", "top", "zero"

_DUAL_BIN = {TENSOR: PAR, PAR: TENSOR, PLUS: WITH, WITH: PLUS}
_DUAL_UNIT = {ONE: BOT, BOT: ONE, TOP: ZERO, ZERO: TOP}
_DUAL_FIX = {MU: NU, NU: MU}

ADDITIVE_BIN = frozenset({PLUS, WITH})
ADDITIVE_UNIT = frozenset({TOP, ZERO})


class Formula:
    """Base class; concrete nodes are Atom, Unit, Bin, Fix and Var."""

    __slots__ = ()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class Atom(Formula):
    name: str
    positive: bool = True


@dataclass(frozen=True)
class Unit(Formula):
    kind: str  # one | bot | top | zero


@dataclass(frozen=True)
class Bin(Formula):
    op: str  # tensor | par | plus | with
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Fix(Formula):
    op: str  # mu | nu
    body: Formula  # index 0 bound by this node


@dataclass(frozen=True)
class Var(Formula):
    index: int  # de Bruijn index


class FormulaError(ValueError):
    pass


def negate(phi: Formula) -> Formula:
    """Dual formula: swaps mu/nu, tensor/par, plus/with, units and atom sign."""
    if isinstance(phi, Atom):
        return Atom(phi.name, not phi.positive)
    if isinstance(phi, Unit):
        return Unit(_DUAL_UNIT[phi.kind])
    if isinstance(phi, Bin):
        return Bin(_DUAL_BIN[phi.op], negate(phi.left), negate(phi.right))
    if isinstance(phi, Fix):
        return Fix(_DUAL_FIX[phi.op], negate(phi.body))
    if isinstance(phi, Var):
        return phi
    raise FormulaError(f"not a formula: {phi!r}")


def _subst_top(body: Formula, repl: Formula, depth: int = 0) -> Formula:
    """Substitute the closed formula `repl` for de Bruijn index `depth`."""
    if isinstance(body, Var):
        if body.index == depth:
            return repl
        if body.index > depth:
            return Var(body.index - 1)
        return body
    if isinstance(body, Bin):
        return Bin(body.op, _subst_top(body.left, repl, depth), _subst_top(body.right, repl, depth))
    if isinstance(body, Fix):
        return Fix(body.op, _subst_top(body.body, repl, depth + 1))
    return body


def unfold_formula(phi: Formula) -> Formula:
    """One unfolding of a fixed-point formula: body with the binder substituted."""
    if not isinstance(phi, Fix):
        raise FormulaError(f"cannot unfold non-fixed-point formula {phi}")
    return _subst_top(phi.body, phi)


def is_closed(phi: Formula, depth: int = 0) -> bool:
    if isinstance(phi, Var):
        return phi.index < depth
    if isinstance(phi, Bin):
        return is_closed(phi.left, depth) and is_closed(phi.right, depth)
    if isinstance(phi, Fix):
        return is_closed(phi.body, depth + 1)
    return True


def has_additives(phi: Formula) -> bool:
    if isinstance(phi, Unit):
        return phi.kind in ADDITIVE_UNIT
    if isinstance(phi, Bin):
        return phi.op in ADDITIVE_BIN or has_additives(phi.left) or has_additives(phi.right)
    if isinstance(phi, Fix):
        return has_additives(phi.body)
    return False


def size(phi: Formula) -> int:
    if isinstance(phi, Bin):
        return 1 + size(phi.left) + size(phi.right)
    if isinstance(phi, Fix):
        return 1 + size(phi.body)
    return 1


# ---------------------------------------------------------------------------
# Rendering and parsing (named binder syntax <-> nameless representation)
# ---------------------------------------------------------------------------

_UNIT_TEXT = {ONE: "1", BOT: "bot", TOP: "top", ZERO: "0"}
_TEXT_UNIT = {v: k for k, v in _UNIT_TEXT.items()}
_BIN_TEXT = {TENSOR: "*", PAR: "|", PLUS: "+", WITH: "&"}
_TEXT_BIN = {v: k for k, v in _BIN_TEXT.items()}
_BIN_LEVEL = {TENSOR: 2, WITH: 2, PAR: 1, PLUS: 1}

_VAR_NAMES = "XYZUVW"


def _var_name(depth: int) -> str:
    if depth < len(_VAR_NAMES):
        return _VAR_NAMES[depth]
    return f"X{depth}"


def render(phi: Formula, depth: int = 0, level: int = 0) -> str:
    if isinstance(phi, Atom):
        return phi.name if phi.positive else "~" + phi.name
    if isinstance(phi, Unit):
        return _UNIT_TEXT[phi.kind]
    if isinstance(phi, Var):
        name_depth = depth - 1 - phi.index
        return _var_name(name_depth) if name_depth >= 0 else f"?{phi.index}"
    if isinstance(phi, Fix):
        inner = f"{phi.op} {_var_name(depth)}. {render(phi.body, depth + 1, 0)}"
        return f"({inner})" if level > 0 else inner
    if isinstance(phi, Bin):
        lv = _BIN_LEVEL[phi.op]
        left = render(phi.left, depth, lv)
        right = render(phi.right, depth, lv + 1)
        text = f"{left} {_BIN_TEXT[phi.op]} {right}"
        return f"({text})" if level > lv else text
    raise FormulaError(f"not a formula: {phi!r}")


_TOKEN = re.compile(r"\s*(mu\b|nu\b|bot\b|top\b|[A-Za-z_][A-Za-z0-9_]*|~|[10()|*&+.])")


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise FormulaError(f"cannot tokenize formula at: {text[pos:]!r}")
            break
        tokens.append(m.group(1))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise FormulaError("unexpected end of formula")
        self.pos += 1
        return tok

    def parse(self, binders: tuple[str, ...], level: int = 1) -> Formula:
        # level 1: par/plus, level 2: tensor/with, level 3: atoms
        if level > 2:
            return self.parse_atomic(binders)
        left = self.parse(binders, level + 1)
        while True:
            tok = self.peek()
            if tok in _TEXT_BIN and _BIN_LEVEL[_TEXT_BIN[tok]] == level:
                self.next()
                right = self.parse(binders, level + 1)
                left = Bin(_TEXT_BIN[tok], left, right)
            else:
                return left

    def parse_atomic(self, binders: tuple[str, ...]) -> Formula:
        tok = self.next()
        if tok == "(":
            inner = self.parse(binders)
            if self.next() != ")":
                raise FormulaError("expected ')'")
            return inner
        if tok in ("mu", "nu"):
            name = self.next()
            if not name[0].isalpha():
                raise FormulaError(f"bad binder variable {name!r}")
            if self.next() != ".":
                raise FormulaError("expected '.' after binder variable")
            body = self.parse(binders + (name,))
            return Fix(tok, body)
        if tok in _TEXT_UNIT:
            return Unit(_TEXT_UNIT[tok])
        if tok == "~":
            name = self.next()
            if name in binders:
                raise FormulaError("bound variables cannot be negated")
            return Atom(name, positive=False)
        if tok[0].isalpha() or tok[0] == "_":
            if tok in binders:
                # innermost binding wins
                return Var(len(binders) - 1 - max(i for i, b in enumerate(binders) if b == tok))
            return Atom(tok, positive=True)
        raise FormulaError(f"unexpected token {tok!r} in formula")


def parse_formula(text: str) -> Formula:
    parser = _Parser(_tokenize(text))
    phi = parser.parse(())
    if parser.peek() is not None:
        raise FormulaError(f"trailing tokens in formula: {parser.tokens[parser.pos:]}")
    return phi


# ---------------------------------------------------------------------------
# Addresses
# ---------------------------------------------------------------------------

PATH_LETTERS = ("l", "r", "i")


@dataclass(frozen=True)
class Address:
    base: str
    dual: bool
    path: tuple[str, ...]

    def child(self, letter: str) -> "Address":
        if letter not in PATH_LETTERS:
            raise FormulaError(f"bad path letter {letter!r}")
        return Address(self.base, self.dual, self.path + (letter,))

    def extend(self, letters: Iterable[str]) -> "Address":
        out = self
        for letter in letters:
            out = out.child(letter)
        return out

    @property
    def parent(self) -> "Address":
        if not self.path:
            raise FormulaError("atomic address has no parent")
        return Address(self.base, self.dual, self.path[:-1])

    @property
    def atomic(self) -> "Address":
        return Address(self.base, self.dual, ())

    def is_prefix_of(self, other: "Address") -> bool:
        return (
            self.base == other.base
            and self.dual == other.dual
            and other.path[: len(self.path)] == self.path
        )

    def disjoint(self, other: "Address") -> bool:
        return not self.is_prefix_of(other) and not other.is_prefix_of(self)

    def __str__(self) -> str:
        mark = "^" if self.dual else ""
        if not self.path:
            return f"{self.base}{mark}"
        return f"{self.base}{mark}:{''.join(self.path)}"


def dual_address(alpha: Address) -> Address:
    return Address(alpha.base, not alpha.dual, alpha.path)


_ADDR = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(\^?)(?::([lri]*))?$")


def parse_address(text: str) -> Address:
    m = _ADDR.match(text.strip())
    if not m:
        raise FormulaError(f"bad address {text!r}")
    base, dual, path = m.group(1), m.group(2) == "^", tuple(m.group(3) or "")
    return Address(base, dual, path)


# ---------------------------------------------------------------------------
# Occurrences and sequents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Occurrence:
    formula: Formula
    address: Address

    def __str__(self) -> str:
        return f"{render(self.formula)} @ {self.address}"

    def dual(self) -> "Occurrence":
        return Occurrence(negate(self.formula), dual_address(self.address))

    def equivalent(self, other: "Occurrence") -> bool:
        """Structural equivalence: same formula, addresses ignored."""
        return self.formula == other.formula


def unfold(occ: Occurrence) -> Occurrence:
    """Unfold a fixed-point occurrence; the address gains one inner step."""
    return Occurrence(unfold_formula(occ.formula), occ.address.child("i"))


def connect(op: str, left: Occurrence, right: Occurrence) -> Occurrence:
    """Rebuild the compound occurrence from its two immediate components."""
    if op not in _DUAL_BIN:
        raise FormulaError(f"not a binary connective: {op}")
    la, ra = left.address, right.address
    if not la.path or la.path[-1] != "l" or not ra.path or ra.path[-1] != "r":
        raise FormulaError("component addresses must end in l and r")
    if la.parent != ra.parent:
        raise FormulaError(f"component addresses disagree: {la} vs {ra}")
    return Occurrence(Bin(op, left.formula, right.formula), la.parent)


class Sequent(tuple):
    """An ordered tuple of occurrences with set semantics.

    Order is fixed when the sequent is built (parse order), giving stable
    occurrence indices; equality for rule-schema checks compares as sets.
    """

    def __new__(cls, occurrences: Iterable[Occurrence]):
        return super().__new__(cls, tuple(occurrences))

    def __str__(self) -> str:
        return ", ".join(str(occ) for occ in self)

    def same_set(self, other: "Sequent") -> bool:
        return frozenset(self) == frozenset(other)

    def index_of_address(self, alpha: Address) -> int:
        for i, occ in enumerate(self):
            if occ.address == alpha:
                return i
        raise FormulaError(f"no occurrence at address {alpha}")

    def disjoint_addresses(self) -> bool:
        for i, a in enumerate(self):
            for b in self[i + 1 :]:
                if not a.address.disjoint(b.address):
                    return False
        return True


# ---------------------------------------------------------------------------
# Closure and priority order
# ---------------------------------------------------------------------------


def decompositions(phi: Formula) -> Iterator[Formula]:
    """Immediate successors under rule decomposition / unfolding."""
    if isinstance(phi, Bin):
        yield phi.left
        yield phi.right
    elif isinstance(phi, Fix):
        yield unfold_formula(phi)


def closure(formulas: Iterable[Formula]) -> list[Formula]:
    """All formulas reachable by decomposition and unfolding (finite)."""
    seen: dict[Formula, None] = {}
    stack = list(formulas)
    for phi in stack:
        if not is_closed(phi):
            raise FormulaError(f"closure requires closed formulas: {phi}")
    while stack:
        phi = stack.pop()
        if phi in seen:
            continue
        seen[phi] = None
        stack.extend(decompositions(phi))
        if len(seen) > 100_000:
            raise FormulaError("closure unexpectedly large")
    return list(seen)


def _subterms(phi: Formula) -> Iterator[Formula]:
    yield phi
    if isinstance(phi, Bin):
        yield from _subterms(phi.left)
        yield from _subterms(phi.right)
    elif isinstance(phi, Fix):
        yield from _subterms(phi.body)


@dataclass(frozen=True)
class PriorityOrder:
    """Min-parity priorities over a closure set.

    Fixed-point formulas get priorities respecting the subformula order on
    their closed representations (a proper subterm is strictly more
    significant, i.e. smaller); greatest fixed points are even, least odd.
    All other closure members share the neutral (maximal, odd) priority, so
    a trace whose unfoldings die out can never validate.
    """

    priorities: dict  # Formula -> int
    neutral: int

    def priority(self, phi: Formula) -> int:
        return self.priorities.get(phi, self.neutral)

    def is_winning(self, prio: int) -> bool:
        return prio % 2 == 0


def build_priority_order(root: Iterable[Occurrence], cut_formulas: Iterable[Formula] = ()) -> PriorityOrder:
    seeds = [occ.formula for occ in root] + list(cut_formulas)
    cl = closure(seeds)
    fixpoints = [phi for phi in cl if isinstance(phi, Fix)]
    # A proper closed subterm has strictly smaller size, so sorting by size
    # (with a deterministic tiebreak) linearizes the subterm partial order.
    fixpoints.sort(key=lambda phi: (size(phi), render(phi)))
    prios: dict[Formula, int] = {}
    for rank, phi in enumerate(fixpoints):
        base = 2 * rank
        prios[phi] = base if phi.op == NU else base + 1
    neutral = 2 * len(fixpoints) + 1
    for phi in cl:
        if phi not in prios:
            prios[phi] = neutral
    return PriorityOrder(prios, neutral)
