"""Core syntax trees: values, patterns, expressions and thread compositions.

Signal names double as signal constants (free occurrences) and as variables
(bound occurrences), so a single `Name` type backs both.  All nodes are
immutable and hashable; substitution is capture-avoiding and alpha-equality
is decided through a canonical binder-indexing pass.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

_uids = itertools.count(1)


@dataclass(frozen=True, eq=False, repr=False)
class Name:
    """Globally unique name: `text` is cosmetic, `uid` is the identity.

    `ty` caches the signal/value type assigned by the typechecker; it is
    deliberately excluded from equality so typed and untyped occurrences
    of the same name mix freely.
    """

    text: str
    uid: int
    ty: object | None = field(default=None, compare=False)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Name) and self.uid == other.uid

    def __hash__(self) -> int:
        return hash(self.uid)

    def __repr__(self) -> str:
        return f"{self.text}#{self.uid}"

    def with_type(self, ty: object) -> "Name":
        return Name(self.text, self.uid, ty)


def fresh_name(text: str, ty: object | None = None) -> Name:
    return Name(text, next(_uids), ty)


def fresh_like(n: Name) -> Name:
    return Name(n.text, next(_uids), n.ty)


# ---------------------------------------------------------------------------
# Terms: values, patterns, expressions, and end-of-instant expressions.
#
# A closed Var/Ctor term is a value; a Var under a binder is a variable
# occurrence; Deref is legal only inside continuation arguments.
# ---------------------------------------------------------------------------


class Term:
    __slots__ = ()


@dataclass(frozen=True)
class Var(Term):
    name: Name


@dataclass(frozen=True)
class Ctor(Term):
    sym: str
    args: tuple = ()


@dataclass(frozen=True)
class Deref(Term):
    signal: Name


UNIT = Ctor("*")
NIL_LIST = Ctor("nil")


def cons(head: Term, tail: Term) -> Ctor:
    return Ctor("cons", (head, tail))


def list_value(items: Iterable[Term]) -> Term:
    out: Term = NIL_LIST
    for item in reversed(list(items)):
        out = cons(item, out)
    return out


def list_items(term: Term) -> list[Term] | None:
    """Decompose a cons/nil spine; None if the term is not a list value."""
    items = []
    while True:
        if term == NIL_LIST:
            return items
        if isinstance(term, Ctor) and term.sym == "cons" and len(term.args) == 2:
            items.append(term.args[0])
            term = term.args[1]
        else:
            return None


# ---------------------------------------------------------------------------
# Programs.
# ---------------------------------------------------------------------------


class Program:
    __slots__ = ()


@dataclass(frozen=True)
class Nil(Program):
    """The terminated thread; also the null continuation."""


@dataclass(frozen=True)
class Call(Program):
    """Recursive call A(e...); as a continuation the arguments may deref."""

    ident: str
    args: tuple = ()


@dataclass(frozen=True)
class Emit(Program):
    signal: Name
    payload: Term


@dataclass(frozen=True)
class Present(Program):
    """The present statement s(x).P,K: read a value on s, else continue as K."""

    signal: Name
    binder: Name
    body: Program
    alt: Program  # continuation: Nil or Call

    def __post_init__(self):
        if not isinstance(self.alt, (Nil, Call)):
            raise ValueError("present continuation must be a call or 0")


@dataclass(frozen=True)
class MatchSig(Program):
    """Name matching [s1 = s2]P1,P2; both sides are free occurrences."""

    lhs: Name
    rhs: Name
    then: Program
    orelse: Program


@dataclass(frozen=True)
class MatchVal(Program):
    """Pattern matching [u |> p]P1,P2; names in `pattern` bind in `then`."""

    scrutinee: Term
    pattern: Term
    then: Program
    orelse: Program


@dataclass(frozen=True)
class New(Program):
    binder: Name
    body: Program


@dataclass(frozen=True)
class Par(Program):
    left: Program
    right: Program


def par(*components: Program) -> Program:
    """Left-associated parallel composition; empty means 0."""
    if not components:
        return Nil()
    out = components[0]
    for c in components[1:]:
        out = Par(out, c)
    return out


def news(binders: Iterable[Name], body: Program) -> Program:
    out = body
    for b in reversed(list(binders)):
        out = New(b, out)
    return out


@dataclass(frozen=True)
class Definition:
    params: tuple  # tuple[Name, ...]
    body: Program


@dataclass(frozen=True)
class Definitions:
    """Identifier -> unique defining equation A(x...) = P."""

    table: Mapping[str, Definition] = field(default_factory=dict)

    def __getitem__(self, ident: str) -> Definition:
        return self.table[ident]

    def __contains__(self, ident: str) -> bool:
        return ident in self.table

    def idents(self) -> list[str]:
        return sorted(self.table)

    def extended(self, ident: str, definition: Definition) -> "Definitions":
        if ident in self.table:
            raise ValueError(f"duplicate definition for {ident}")
        table = dict(self.table)
        table[ident] = definition
        return Definitions(table)


EMPTY_DEFS = Definitions({})


# ---------------------------------------------------------------------------
# Free names.
# ---------------------------------------------------------------------------


def term_names(t: Term) -> frozenset:
    if isinstance(t, Var):
        return frozenset((t.name,))
    if isinstance(t, Deref):
        return frozenset((t.signal,))
    if isinstance(t, Ctor):
        out: frozenset = frozenset()
        for a in t.args:
            out |= term_names(a)
        return out
    raise TypeError(t)


def free_names(p: Program) -> frozenset:
    """Free names of a program: signal constants and unbound variables alike.

    Memoised on the (immutable) node."""
    cached = p.__dict__.get("_fns")
    if cached is None:
        cached = _free_names(p)
        object.__setattr__(p, "_fns", cached)
    return cached


def _free_names(p: Program) -> frozenset:
    if isinstance(p, Nil):
        return frozenset()
    if isinstance(p, Call):
        out: frozenset = frozenset()
        for a in p.args:
            out |= term_names(a)
        return out
    if isinstance(p, Emit):
        return frozenset((p.signal,)) | term_names(p.payload)
    if isinstance(p, Present):
        body = free_names(p.body) - {p.binder}
        return frozenset((p.signal,)) | body | free_names(p.alt)
    if isinstance(p, MatchSig):
        return frozenset((p.lhs, p.rhs)) | free_names(p.then) | free_names(p.orelse)
    if isinstance(p, MatchVal):
        bound = term_names(p.pattern)
        return (
            term_names(p.scrutinee)
            | (free_names(p.then) - bound)
            | free_names(p.orelse)
        )
    if isinstance(p, New):
        return free_names(p.body) - {p.binder}
    if isinstance(p, Par):
        return free_names(p.left) | free_names(p.right)
    raise TypeError(p)


# ---------------------------------------------------------------------------
# Substitution.
# ---------------------------------------------------------------------------


class SubstitutionError(Exception):
    """A constructed value landed in a position that requires a bare name."""


def _subst_name(n: Name, subst: Mapping[Name, Term]) -> Name:
    v = subst.get(n)
    if v is None:
        return n
    if isinstance(v, Var):
        return v.name
    raise SubstitutionError(f"name position {n!r} cannot take value {v!r}")


def substitute_term(t: Term, subst: Mapping[Name, Term]) -> Term:
    if not subst:
        return t
    if isinstance(t, Var):
        return subst.get(t.name, t)
    if isinstance(t, Deref):
        return Deref(_subst_name(t.signal, subst))
    if isinstance(t, Ctor):
        return Ctor(t.sym, tuple(substitute_term(a, subst) for a in t.args))
    raise TypeError(t)


def _range_names(subst: Mapping[Name, Term]) -> frozenset:
    out: frozenset = frozenset()
    for v in subst.values():
        out |= term_names(v)
    return out


def _enter_binders(
    binders: tuple, body_free: frozenset, subst: Mapping[Name, Term]
) -> tuple:
    """Restrict a substitution under binders, renaming to avoid capture.

    Returns (renamed binders, substitution for the body).
    """
    live = {k: v for k, v in subst.items() if k not in binders and k in body_free}
    if not live:
        return binders, {}
    clash = _range_names(live)
    renamed = []
    for b in binders:
        if b in clash:
            nb = fresh_like(b)
            live[b] = Var(nb)
            renamed.append(nb)
        else:
            renamed.append(b)
    return tuple(renamed), live


def substitute(p: Program, subst: Mapping[Name, Term]) -> Program:
    """Capture-avoiding simultaneous substitution of values for names."""
    if not subst:
        return p
    if isinstance(p, Nil):
        return p
    if isinstance(p, Call):
        return Call(p.ident, tuple(substitute_term(a, subst) for a in p.args))
    if isinstance(p, Emit):
        return Emit(_subst_name(p.signal, subst), substitute_term(p.payload, subst))
    if isinstance(p, Present):
        (binder,), inner = _enter_binders((p.binder,), free_names(p.body), subst)
        return Present(
            _subst_name(p.signal, subst),
            binder,
            substitute(p.body, inner),
            substitute(p.alt, subst),
        )
    if isinstance(p, MatchSig):
        return MatchSig(
            _subst_name(p.lhs, subst),
            _subst_name(p.rhs, subst),
            substitute(p.then, subst),
            substitute(p.orelse, subst),
        )
    if isinstance(p, MatchVal):
        pat_vars = tuple(sorted(term_names(p.pattern), key=lambda n: n.uid))
        renamed, inner = _enter_binders(pat_vars, free_names(p.then), subst)
        pattern = p.pattern
        if renamed != pat_vars:
            pattern = substitute_term(
                pattern,
                {o: Var(n) for o, n in zip(pat_vars, renamed) if o != n},
            )
        return MatchVal(
            substitute_term(p.scrutinee, subst),
            pattern,
            substitute(p.then, inner),
            substitute(p.orelse, subst),
        )
    if isinstance(p, New):
        (binder,), inner = _enter_binders((p.binder,), free_names(p.body), subst)
        return New(binder, substitute(p.body, inner))
    if isinstance(p, Par):
        return Par(substitute(p.left, subst), substitute(p.right, subst))
    raise TypeError(p)


def rename(p: Program, mapping: Mapping[Name, Name]) -> Program:
    return substitute(p, {old: Var(new) for old, new in mapping.items()})


def refresh_binders(p: Program) -> Program:
    """Rename every bound name to a fresh one (used when copying definition
    bodies, so unrelated copies never share binder identities)."""
    if isinstance(p, (Nil, Call, Emit)):
        return p
    if isinstance(p, Present):
        nb = fresh_like(p.binder)
        body = refresh_binders(rename(p.body, {p.binder: nb}))
        return Present(p.signal, nb, body, refresh_binders(p.alt))
    if isinstance(p, MatchSig):
        return MatchSig(
            p.lhs, p.rhs, refresh_binders(p.then), refresh_binders(p.orelse)
        )
    if isinstance(p, MatchVal):
        pat_vars = sorted(term_names(p.pattern), key=lambda n: n.uid)
        mapping = {v: fresh_like(v) for v in pat_vars}
        pattern = substitute_term(p.pattern, {o: Var(n) for o, n in mapping.items()})
        then = refresh_binders(rename(p.then, mapping))
        return MatchVal(p.scrutinee, pattern, then, refresh_binders(p.orelse))
    if isinstance(p, New):
        nb = fresh_like(p.binder)
        return New(nb, refresh_binders(rename(p.body, {p.binder: nb})))
    if isinstance(p, Par):
        return Par(refresh_binders(p.left), refresh_binders(p.right))
    raise TypeError(p)


# ---------------------------------------------------------------------------
# Alpha equivalence via canonical binder indexing.
# ---------------------------------------------------------------------------


def _canon_pool(i: int) -> Name:
    # Negative uids keep canonical names disjoint from generated ones.
    return Name(f"_{i}", -(i + 1))


def alpha_canonical(p: Program) -> Program:
    """Rename binders to position-indexed names; equal outputs <=> alpha-equal.

    Memoised on the node."""
    cached = p.__dict__.get("_alpha")
    if cached is None:
        cached = _alpha_canonical(p)
        object.__setattr__(p, "_alpha", cached)
    return cached


def _alpha_canonical(p: Program) -> Program:
    counter = itertools.count()

    def canon_term(t: Term, env: dict) -> Term:
        if isinstance(t, Var):
            return Var(env.get(t.name, t.name))
        if isinstance(t, Deref):
            return Deref(env.get(t.signal, t.signal))
        return Ctor(t.sym, tuple(canon_term(a, env) for a in t.args))

    def bind(names: Iterable[Name], env: dict) -> dict:
        env = dict(env)
        for n in names:
            env[n] = _canon_pool(next(counter))
        return env

    def go(p: Program, env: dict) -> Program:
        if isinstance(p, Nil):
            return p
        if isinstance(p, Call):
            return Call(p.ident, tuple(canon_term(a, env) for a in p.args))
        if isinstance(p, Emit):
            return Emit(env.get(p.signal, p.signal), canon_term(p.payload, env))
        if isinstance(p, Present):
            inner = bind((p.binder,), env)
            return Present(
                env.get(p.signal, p.signal),
                inner[p.binder],
                go(p.body, inner),
                go(p.alt, env),
            )
        if isinstance(p, MatchSig):
            return MatchSig(
                env.get(p.lhs, p.lhs),
                env.get(p.rhs, p.rhs),
                go(p.then, env),
                go(p.orelse, env),
            )
        if isinstance(p, MatchVal):
            pat_vars = _pattern_binding_order(p.pattern)
            inner = bind(pat_vars, env)
            return MatchVal(
                canon_term(p.scrutinee, env),
                canon_term(p.pattern, inner),
                go(p.then, inner),
                go(p.orelse, env),
            )
        if isinstance(p, New):
            inner = bind((p.binder,), env)
            return New(inner[p.binder], go(p.body, inner))
        if isinstance(p, Par):
            return Par(go(p.left, env), go(p.right, env))
        raise TypeError(p)

    return go(p, {})


def _pattern_binding_order(pattern: Term) -> list[Name]:
    """Pattern variables in first-occurrence order (canonical binding order)."""
    seen: list[Name] = []

    def walk(t: Term):
        if isinstance(t, Var):
            if t.name not in seen:
                seen.append(t.name)
        elif isinstance(t, Ctor):
            for a in t.args:
                walk(a)
        else:
            raise TypeError(f"deref in pattern: {t!r}")

    walk(pattern)
    return seen


def alpha_equal(p: Program, q: Program) -> bool:
    return alpha_canonical(p) == alpha_canonical(q)


# ---------------------------------------------------------------------------
# Structural keys (deterministic ordering / hashing aid).
# ---------------------------------------------------------------------------


def term_key(t: Term, blind: frozenset | None = None) -> str:
    if isinstance(t, Var):
        n = t.name
        return "?" if (blind is not None and n in blind) else f"{n.text}#{n.uid}"
    if isinstance(t, Deref):
        n = t.signal
        base = "?" if (blind is not None and n in blind) else f"{n.text}#{n.uid}"
        return f"!{base}"
    return f"{t.sym}({','.join(term_key(a, blind) for a in t.args)})"


def program_key(p: Program, blind_free: bool = False) -> str:
    """Total-order key on programs; alpha-invariant, optionally free-name-blind.

    Memoised on the node."""
    attr = "_pkb" if blind_free else "_pk"
    cached = p.__dict__.get(attr)
    if cached is None:
        cached = _program_key(p, blind_free)
        object.__setattr__(p, attr, cached)
    return cached


def _program_key(p: Program, blind_free: bool) -> str:
    canon = alpha_canonical(p)
    blind = free_names(canon) if blind_free else None

    def go(p: Program) -> str:
        if isinstance(p, Nil):
            return "0"
        if isinstance(p, Call):
            return f"{p.ident}({','.join(term_key(a, blind) for a in p.args)})"
        if isinstance(p, Emit):
            return f"em[{_nk(p.signal)};{term_key(p.payload, blind)}]"
        if isinstance(p, Present):
            return f"pr[{_nk(p.signal)};{_nk(p.binder)};{go(p.body)};{go(p.alt)}]"
        if isinstance(p, MatchSig):
            return f"ms[{_nk(p.lhs)};{_nk(p.rhs)};{go(p.then)};{go(p.orelse)}]"
        if isinstance(p, MatchVal):
            return (
                f"mv[{term_key(p.scrutinee, blind)};{term_key(p.pattern, blind)};"
                f"{go(p.then)};{go(p.orelse)}]"
            )
        if isinstance(p, New):
            return f"nu[{_nk(p.binder)};{go(p.body)}]"
        if isinstance(p, Par):
            return f"({go(p.left)}|{go(p.right)})"
        raise TypeError(p)

    def _nk(n: Name) -> str:
        return "?" if (blind is not None and n in blind) else f"{n.text}#{n.uid}"

    return go(canon)


# ---------------------------------------------------------------------------
# Well-formedness: deref only in continuation arguments; patterns deref-free.
# ---------------------------------------------------------------------------


class WellFormednessError(Exception):
    pass


def _check_no_deref(t: Term, where: str):
    if isinstance(t, Deref):
        raise WellFormednessError(f"dereference !{t.signal.text} not allowed {where}")
    if isinstance(t, Ctor):
        for a in t.args:
            _check_no_deref(a, where)


def check_wellformed(p: Program):
    """Reject Deref outside end-of-instant continuation arguments."""
    if isinstance(p, Nil):
        return
    if isinstance(p, Call):
        for a in p.args:
            _check_no_deref(a, "outside a continuation")
        return
    if isinstance(p, Emit):
        _check_no_deref(p.payload, "in an emission")
        return
    if isinstance(p, Present):
        check_wellformed(p.body)
        # p.alt is the continuation position: deref is legal there.
        return
    if isinstance(p, MatchSig):
        check_wellformed(p.then)
        check_wellformed(p.orelse)
        return
    if isinstance(p, MatchVal):
        _check_no_deref(p.scrutinee, "in a match scrutinee")
        _check_no_deref(p.pattern, "in a pattern")
        check_wellformed(p.then)
        check_wellformed(p.orelse)
        return
    if isinstance(p, New):
        check_wellformed(p.body)
        return
    if isinstance(p, Par):
        check_wellformed(p.left)
        check_wellformed(p.right)
        return
    raise TypeError(p)


def iter_subterms(p: Program) -> Iterator[Program]:
    yield p
    if isinstance(p, Present):
        yield from iter_subterms(p.body)
        yield from iter_subterms(p.alt)
    elif isinstance(p, (MatchSig, MatchVal)):
        yield from iter_subterms(p.then)
        yield from iter_subterms(p.orelse)
    elif isinstance(p, New):
        yield from iter_subterms(p.body)
    elif isinstance(p, Par):
        yield from iter_subterms(p.left)
        yield from iter_subterms(p.right)
