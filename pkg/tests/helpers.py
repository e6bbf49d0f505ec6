"""Shared test plumbing: compile source text into a typed program + universe."""

from spical.lts import Explorer, ValueUniverse
from spical.surface import desugar, parse
from spical.typecheck import check


def compile_src(src, depth=2, quota=1, state_bound=4000):
    sf = desugar(parse(src))
    typed = check(sf.program, sf.defs, sf.signal_types, sf.ctor_sigs)
    u = ValueUniverse(typed.ctor_sigs, depth, quota)
    ex = Explorer(typed.defs, u, state_bound)
    return typed, u, ex


def signal(typed, text):
    for n in typed.signal_types:
        if n.text == text:
            return n
    raise KeyError(text)
