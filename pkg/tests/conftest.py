from __future__ import annotations

import pathlib

import pytest

from circ.proof import Graph, PreProof, parse_proof, validate

DATA = pathlib.Path(__file__).parent / "data"

GOLDEN_FILES = [
    "pi0.proof",
    "validproofs_left.proof",
    "validproofs_right.proof",
    "unsound.proof",
    "additive.proof",
]


def load_proof(name: str) -> PreProof:
    return parse_proof((DATA / name).read_text())


def load_graph(name: str) -> Graph:
    proof = load_proof(name)
    diagnostics = validate(proof)
    assert diagnostics == [], diagnostics
    return Graph(proof)


@pytest.fixture
def pi0() -> Graph:
    return load_graph("pi0.proof")


@pytest.fixture
def valid_left() -> Graph:
    return load_graph("validproofs_left.proof")


@pytest.fixture
def valid_right() -> Graph:
    return load_graph("validproofs_right.proof")


@pytest.fixture
def unsound() -> Graph:
    return load_graph("unsound.proof")
