"""spical: a synchronous pi-calculus workbench.

Parsing, typechecking, intra-instant and end-of-instant semantics, a
multi-instant interpreter, and bounded checkers for strong/labelled/barbed
bisimulation equivalences.
"""

__version__ = "0.1.0"
