"""Circular proofs for multiplicative linear logic with fixed points.

Subpackages cover the formula language, the finite proof-graph
representation, bouncing-thread recognition, bounded-height validity
checking, productive multicut cut-elimination and the two-counter-machine
stress compiler.  The ``circ`` command line tool binds them together.
"""

__version__ = "0.1.0"
