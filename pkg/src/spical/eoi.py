"""End-of-instant evaluation and the instant-advance relation.

A suspended program emits a set of values per signal (`emissions`); a
value choice V fixes, per signal, a duplicate-free listing of that set.
`eoi_step` rewrites the program under a given V: emitters die, suspended
readers take their continuation with every `!s` replaced by the listed
values, and restrictions extend the choice with an internal listing.
`next_instants` enumerates every listing (external and internal), i.e.
the full nondeterminism of value-collection order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .lts import canonical_state, is_suspended
from .syntax import (
    Call,
    Definitions,
    Deref,
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
    list_value,
    program_key,
    substitute_term,
    term_key,
)


class EoiError(Exception):
    pass


class NotSuspended(EoiError):
    pass


class PreconditionViolated(EoiError):
    def __init__(self, rule: str, message: str):
        super().__init__(f"rule ({rule}): {message}")
        self.rule = rule


class CombinatoricBound(EoiError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"{count} value choices exceed the cap of {cap}")
        self.count = count
        self.cap = cap


@dataclass(frozen=True)
class EmissionMap:
    """Signal -> finite set of emitted values (empty by default)."""

    table: tuple = ()  # tuple[(Name, frozenset[Term]), ...] sorted by uid

    @staticmethod
    def of(mapping: dict) -> "EmissionMap":
        items = tuple(
            (s, frozenset(vs))
            for s, vs in sorted(mapping.items(), key=lambda kv: kv[0].uid)
            if vs
        )
        return EmissionMap(items)

    def get(self, s: Name) -> frozenset:
        for name, vs in self.table:
            if name == s:
                return vs
        return frozenset()

    def signals(self) -> list:
        return [s for s, _ in self.table]

    def union(self, other: "EmissionMap") -> "EmissionMap":
        out: dict = {s: set(vs) for s, vs in self.table}
        for s, vs in other.table:
            out.setdefault(s, set()).update(vs)
        return EmissionMap.of(out)

    def without(self, s: Name) -> "EmissionMap":
        return EmissionMap(tuple((n, vs) for n, vs in self.table if n != s))

    def as_dict(self) -> dict:
        return {s: set(vs) for s, vs in self.table}


@dataclass(frozen=True)
class ValueChoice:
    """Signal -> duplicate-free list of values; dom(V) = nonempty lists."""

    table: tuple = ()  # tuple[(Name, tuple[Term, ...]), ...]

    @staticmethod
    def of(mapping: dict) -> "ValueChoice":
        items = tuple(
            (s, tuple(vs))
            for s, vs in sorted(mapping.items(), key=lambda kv: kv[0].uid)
            if vs
        )
        return ValueChoice(items)

    def get(self, s: Name) -> tuple:
        for name, vs in self.table:
            if name == s:
                return vs
        return ()

    def domain(self) -> frozenset:
        return frozenset(s for s, vs in self.table if vs)

    def set(self, s: Name, listing: tuple) -> "ValueChoice":
        table = {name: vs for name, vs in self.table}
        table[s] = tuple(listing)
        return ValueChoice.of(table)

    def as_dict(self) -> dict:
        return {s: list(vs) for s, vs in self.table}


def represents(listing, values) -> bool:
    """True iff the listing is a duplicate-free permutation of the set."""
    listing = list(listing)
    if len(set(map(term_key, listing))) != len(listing):
        return False
    return {term_key(v) for v in listing} == {term_key(v) for v in set(values)}


def choice_represents(choice: ValueChoice, emap: EmissionMap) -> bool:
    signals = set(choice.domain()) | set(emap.signals())
    return all(represents(choice.get(s), emap.get(s)) for s in signals)


# ---------------------------------------------------------------------------
# E: collected emissions of a suspended program.
# ---------------------------------------------------------------------------


def _require_suspended_shape(p: Program):
    if isinstance(p, (MatchSig, MatchVal, Call)):
        raise NotSuspended(f"pending internal step at {type(p).__name__}")


def _emissions(p: Program) -> EmissionMap:
    if isinstance(p, Nil):
        return EmissionMap()
    if isinstance(p, Emit):
        return EmissionMap.of({p.signal: {p.payload}})
    if isinstance(p, Present):
        return EmissionMap()
    if isinstance(p, Par):
        return _emissions(p.left).union(_emissions(p.right))
    if isinstance(p, New):
        return _emissions(p.body).without(p.binder)
    _require_suspended_shape(p)
    raise TypeError(p)


def emissions(p: Program) -> EmissionMap:
    """The E of a suspended program: bottom-up union, restrictions erased."""
    # suspension also requires that no reader can see an emitted value
    _check_no_internal_synch(p)
    return _emissions(p)


def _check_no_internal_synch(p: Program):
    def walk(q: Program):
        if isinstance(q, Nil):
            return frozenset(), frozenset()
        if isinstance(q, Emit):
            return frozenset(), frozenset((q.signal,))
        if isinstance(q, Present):
            return frozenset((q.signal,)), frozenset()
        if isinstance(q, Par):
            i1, o1 = walk(q.left)
            i2, o2 = walk(q.right)
            if (i1 & o2) or (i2 & o1):
                raise NotSuspended("an emitted value has a pending reader")
            return i1 | i2, o1 | o2
        if isinstance(q, New):
            ins, outs = walk(q.body)
            return ins - {q.binder}, outs - {q.binder}
        _require_suspended_shape(q)
        raise TypeError(q)

    walk(p)


# ---------------------------------------------------------------------------
# The judgement P =(E,V)=> P'.
# ---------------------------------------------------------------------------


def _apply_choice_to_cont(k: Program, choice: ValueChoice) -> Program:
    """V(K): replace every !s in the continuation's arguments by V(s)."""
    if isinstance(k, Nil):
        return k
    if isinstance(k, Call):
        args = []
        for a in k.args:
            args.append(_resolve_rexp(a, choice))
        return Call(k.ident, tuple(args))
    raise EoiError(f"continuation is neither 0 nor a call: {k!r}")


def _resolve_rexp(t: Term, choice: ValueChoice) -> Term:
    if isinstance(t, Deref):
        return list_value(choice.get(t.signal))
    if isinstance(t, Var):
        return t
    return type(t)(t.sym, tuple(_resolve_rexp(a, choice) for a in t.args))


def _default_listing(values: frozenset) -> tuple:
    return tuple(sorted(values, key=term_key))


def _eoi(p: Program, choice: ValueChoice, pick) -> Program:
    if isinstance(p, Nil):
        return p
    if isinstance(p, Emit):
        if not any(term_key(v) == term_key(p.payload)
                   for v in choice.get(p.signal)):
            raise PreconditionViolated(
                "out", f"emitted value on {p.signal.text} missing from V")
        return Nil()
    if isinstance(p, Present):
        if p.signal in choice.domain():
            raise PreconditionViolated(
                "in", f"suspended reader on {p.signal.text} in dom(V)")
        return _apply_choice_to_cont(p.alt, choice)
    if isinstance(p, Par):
        return Par(_eoi(p.left, choice, pick), _eoi(p.right, choice, pick))
    if isinstance(p, New):
        internal = _emissions(p.body).get(p.binder)
        listing = pick(p.binder, internal)
        if not represents(listing, internal):
            raise PreconditionViolated(
                "nu", f"internal listing for {p.binder.text} does not "
                      "represent its emissions")
        return New(p.binder, _eoi(p.body, choice.set(p.binder, listing), pick))
    _require_suspended_shape(p)
    raise TypeError(p)


def eoi_step(p: Program, choice: ValueChoice, defs: Definitions | None = None,
             pick=None) -> Program:
    """One end-of-instant rewrite under the value choice `choice`.

    `choice` must represent the emissions on free signals. Restricted
    signals get their listing from `pick` (default: sorted order); use
    `next_instants` to enumerate every internal and external listing.
    """
    if defs is not None and not is_suspended(p, defs):
        raise NotSuspended("program still has internal steps")
    _check_no_internal_synch(p)
    emap = _emissions(p)
    if not choice_represents(choice, emap):
        raise PreconditionViolated(
            "top", "V does not represent the collected emissions")
    if pick is None:
        pick = lambda s, values: _default_listing(values)
    return _eoi(p, choice, pick)


def instant_choices(p: Program, cap: int = 20000) -> list:
    """All external value choices V with V |= emissions(p)."""
    emap = emissions(p)
    signals = emap.signals()
    perms = []
    total = 1
    for s in signals:
        listing = sorted(emap.get(s), key=term_key)
        options = list(itertools.permutations(listing))
        total *= len(options)
        if total > cap:
            raise CombinatoricBound(total, cap)
        perms.append(options)
    out = []
    for combo in itertools.product(*perms):
        out.append(ValueChoice.of(dict(zip(signals, combo))))
    return out or [ValueChoice()]


def _eoi_all(p: Program, choice: ValueChoice, cap: int) -> list:
    """All successors under every internal listing (external V fixed)."""
    if isinstance(p, Nil):
        return [p]
    if isinstance(p, Emit):
        if not any(term_key(v) == term_key(p.payload)
                   for v in choice.get(p.signal)):
            raise PreconditionViolated(
                "out", f"emitted value on {p.signal.text} missing from V")
        return [Nil()]
    if isinstance(p, Present):
        if p.signal in choice.domain():
            raise PreconditionViolated(
                "in", f"suspended reader on {p.signal.text} in dom(V)")
        return [_apply_choice_to_cont(p.alt, choice)]
    if isinstance(p, Par):
        lefts = _eoi_all(p.left, choice, cap)
        rights = _eoi_all(p.right, choice, cap)
        if len(lefts) * len(rights) > cap:
            raise CombinatoricBound(len(lefts) * len(rights), cap)
        return [Par(l, r) for l in lefts for r in rights]
    if isinstance(p, New):
        internal = _emissions(p.body).get(p.binder)
        out = []
        listings = list(itertools.permutations(sorted(internal, key=term_key)))
        for listing in listings:
            for q in _eoi_all(p.body, choice.set(p.binder, tuple(listing)), cap):
                out.append(New(p.binder, q))
                if len(out) > cap:
                    raise CombinatoricBound(len(out), cap)
        return out
    _require_suspended_shape(p)
    raise TypeError(p)


def next_instants(p: Program, defs: Definitions | None = None,
                  cap: int = 20000) -> list:
    """The canonicalised set of all instant-advance successors of p.

    Every permutation listing, at free and at restricted signals, is
    enumerated; exceeding `cap` raises CombinatoricBound rather than
    silently truncating.
    """
    if defs is not None and not is_suspended(p, defs):
        raise NotSuspended("program still has internal steps")
    _check_no_internal_synch(p)
    out: dict = {}
    for choice in instant_choices(p, cap):
        for q in _eoi_all(p, choice, cap):
            c = canonical_state(q)
            out[program_key(c)] = c
        if len(out) > cap:
            raise CombinatoricBound(len(out), cap)
    return sorted(out.values(), key=program_key)


def instant_successors_with_choices(p: Program, cap: int = 20000) -> list:
    """(V, successor) pairs over external choices (internal picks default)."""
    out = []
    for choice in instant_choices(p, cap):
        q = _eoi_all(p, choice, cap)
        for succ in q:
            out.append((choice, canonical_state(succ)))
    return out
