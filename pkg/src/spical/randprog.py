"""Seeded random generation of well-typed closed programs and contexts.

Used by the property-based parts of the test suite and by the
congruence-probing command: programs are built type-directed, so every
generated term typechecks by construction.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .lts import ValueUniverse
from .syntax import (
    Call,
    Definition,
    Definitions,
    Emit,
    MatchSig,
    MatchVal,
    Name,
    New,
    Nil,
    Par,
    Present,
    Program,
    Term,
    Var,
    free_names,
    fresh_name,
)
from .typecheck import ListT, SigT, Type, UNIT_T


@dataclass
class GenConfig:
    depth: int = 3
    max_par: int = 3
    max_new: int = 2
    value_depth: int = 2
    allow_calls: bool = True


def default_signals() -> list:
    """A standing typing context: unit, list and name-carrying signals."""
    return [
        fresh_name("a", SigT(UNIT_T)),
        fresh_name("b", SigT(ListT(UNIT_T))),
        fresh_name("c", SigT(SigT(UNIT_T))),
    ]


def standard_defs(signals) -> Definitions:
    """A small pool of recursive definitions the generator may call."""
    table = {}
    s = fresh_name("s", SigT(UNIT_T))
    x = fresh_name("x", UNIT_T)
    table["Wait"] = Definition(
        (s,), Present(s, x, Nil(), Call("Wait", (Var(s),)))
    )
    t = fresh_name("t", SigT(UNIT_T))
    table["Ping"] = Definition((t,), Emit(t, _unit()))
    return Definitions(table)


def _unit():
    from .syntax import UNIT

    return UNIT


class ProgramGen:
    def __init__(self, rng: random.Random, signals: list,
                 ctor_sigs=None, cfg: GenConfig | None = None):
        self.rng = rng
        self.signals = list(signals)
        self.cfg = cfg or GenConfig()
        self.u = ValueUniverse(dict(ctor_sigs or {}), self.cfg.value_depth,
                               fresh_quota=0)
        self.defs = standard_defs(signals) if self.cfg.allow_calls else Definitions({})

    # -- helpers ------------------------------------------------------------

    def _sig_names(self, scope) -> list:
        return [n for n in scope if isinstance(n.ty, SigT)]

    def _value(self, ty: Type, scope) -> Term | None:
        vals = self.u.values_of_type(ty, frozenset(scope))
        if not vals:
            return None
        return self.rng.choice(vals)

    def program(self) -> Program:
        scope = list(self.signals)
        return self._proc(self.cfg.depth, scope, self.cfg.max_new,
                          self.cfg.max_par)

    def _leaf(self, scope) -> Program:
        for _ in range(4):
            if self.rng.random() < 0.25:
                return Nil()
            s = self.rng.choice(self._sig_names(scope))
            v = self._value(s.ty.elem, scope)
            if v is not None:
                return Emit(s, v)
        return Nil()

    def _proc(self, d: int, scope: list, news_left: int, par_left: int) -> Program:
        if d <= 0:
            return self._leaf(scope)
        kinds = ["leaf", "present", "matchsig", "matchval"]
        if news_left > 0:
            kinds.append("new")
        if par_left > 1:
            kinds += ["par", "par"]
        if self.cfg.allow_calls and self.rng.random() < 0.15:
            kinds = ["call"]
        kind = self.rng.choice(kinds)
        if kind == "leaf":
            return self._leaf(scope)
        if kind == "call":
            units = [n for n in scope if n.ty == SigT(UNIT_T)]
            if units:
                ident = self.rng.choice(self.defs.idents())
                return Call(ident, (Var(self.rng.choice(units)),))
            return self._leaf(scope)
        if kind == "present":
            s = self.rng.choice(self._sig_names(scope))
            x = fresh_name("x", s.ty.elem)
            body = self._proc(d - 1, scope + [x], news_left, par_left)
            alt: Program = Nil()
            if self.cfg.allow_calls and self.rng.random() < 0.3:
                units = [n for n in scope if n.ty == SigT(UNIT_T)]
                if units:
                    alt = Call("Wait", (Var(self.rng.choice(units)),))
            return Present(s, x, body, alt)
        if kind == "matchsig":
            sigs = self._sig_names(scope)
            l, r = self.rng.choice(sigs), self.rng.choice(sigs)
            return MatchSig(
                l, r,
                self._proc(d - 1, scope, news_left, par_left),
                self._proc(d - 1, scope, news_left, par_left),
            )
        if kind == "matchval":
            ty = self.rng.choice([UNIT_T, ListT(UNIT_T)])
            v = self._value(ty, scope)
            if v is None:
                return self._leaf(scope)
            if self.rng.random() < 0.5:
                x = fresh_name("y", ty)
                pattern: Term = Var(x)
                inner_scope = scope + [x]
            else:
                pattern = self._value(ty, scope)
                inner_scope = scope
            return MatchVal(
                v, pattern,
                self._proc(d - 1, inner_scope, news_left, par_left),
                self._proc(d - 1, scope, news_left, par_left),
            )
        if kind == "new":
            ty = self.rng.choice([SigT(UNIT_T), SigT(ListT(UNIT_T))])
            t = fresh_name("t", ty)
            return New(t, self._proc(d - 1, scope + [t], news_left - 1,
                                     par_left))
        # par
        split = self.rng.randint(1, par_left - 1)
        return Par(
            self._proc(d - 1, scope, news_left, split),
            self._proc(d - 1, scope, news_left, par_left - split),
        )


def random_program(rng: random.Random, signals=None, cfg=None):
    """Returns (program, defs, signal_types)."""
    signals = signals if signals is not None else default_signals()
    gen = ProgramGen(rng, signals, cfg=cfg)
    p = gen.program()
    return p, gen.defs, {n: n.ty for n in signals}


# ---------------------------------------------------------------------------
# Static contexts C ::= [] | C|P | new s in C.
# ---------------------------------------------------------------------------


def sample_static_context(rng: random.Random, signals, cfg=None) -> list:
    """A context as a list of operations applied around the hole, inner
    to outer: ("par", program) composes, ("new", name) restricts."""
    cfg = cfg or GenConfig(depth=2, max_par=2, max_new=1)
    ops = []
    for _ in range(rng.randint(0, 3)):
        if rng.random() < 0.6:
            gen = ProgramGen(rng, signals, cfg=cfg)
            ops.append(("par", gen.program()))
        else:
            sig = rng.choice(list(signals))
            ops.append(("new", sig))
    return ops


def apply_context(ops: list, p: Program) -> Program:
    for op, arg in ops:
        if op == "par":
            p = Par(p, arg)
        else:
            p = New(arg, p)
    return p


def context_label(ops: list) -> str:
    from .surface import print_program

    out = "[]"
    for op, arg in ops:
        if op == "par":
            out = f"({out} | {print_program(arg)})"
        else:
            out = f"new {arg.text} in {out}"
    return out
