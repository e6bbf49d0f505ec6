"""Intra-instant labelled transition system and matching.

Implements the rules (out), (in), (par), (synch), (nu), (nu_ex), the two
signal- and two value-matching rules and (rec).  Emission is persistent
(outputs are self-loops) and an input leaves a parallel copy of the received
emission behind.  Input transitions are the only finitized part: they are
instantiated at values drawn from a `ValueUniverse` (free names in scope,
constructor terms up to a depth bound, plus a quota of fresh names per
signal type).  Synchronisation never consults the universe: it feeds the
emitted value directly to the receiver, so scope extrusion is exact.

States are normalised into a canonical form that quotients by the strong
structural laws (parallel unit/associativity/commutativity, restriction
reordering and non-capturing hoisting, idempotent emissions) plus alpha;
this form is itself a strong labelled bisimulation, so merging is sound
for every checked equivalence.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .syntax import (
    Call,
    Ctor,
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
    alpha_canonical,
    free_names,
    fresh_name,
    news,
    par,
    program_key,
    refresh_binders,
    substitute,
    term_key,
    term_names,
)
from .typecheck import ListT, SigT, Type, UNIT_T, Unit, DeclT


class LtsError(Exception):
    pass


class UnboundDefinition(LtsError):
    pass


class BoundExceeded(LtsError):
    def __init__(self, message: str, frontier: int):
        super().__init__(f"{message} (frontier {frontier})")
        self.frontier = frontier


# ---------------------------------------------------------------------------
# Actions.
# ---------------------------------------------------------------------------


class Action:
    __slots__ = ()


@dataclass(frozen=True)
class Tau(Action):
    def __str__(self) -> str:
        return "tau"


TAU = Tau()


@dataclass(frozen=True)
class Input(Action):
    signal: Name
    value: Term

    def __str__(self) -> str:
        return f"{self.signal.text}?{term_key(self.value)}"


@dataclass(frozen=True)
class Output(Action):
    extruded: tuple  # tuple[Name, ...]
    signal: Name
    value: Term

    def __post_init__(self):
        seen = set()
        vnames = term_names(self.value)
        for t in self.extruded:
            if t in seen or t == self.signal or t not in vnames:
                raise ValueError(f"ill-formed output action {self!r}")
            seen.add(t)

    def __str__(self) -> str:
        nu = f"(nu {','.join(n.text for n in self.extruded)})" if self.extruded else ""
        return f"{nu}{self.signal.text}!{term_key(self.value)}"


def action_fn(a: Action) -> frozenset:
    if isinstance(a, Tau):
        return frozenset()
    if isinstance(a, Input):
        return frozenset((a.signal,)) | term_names(a.value)
    return (frozenset((a.signal,)) | term_names(a.value)) - set(a.extruded)


def action_bn(a: Action) -> frozenset:
    return frozenset(a.extruded) if isinstance(a, Output) else frozenset()


def action_names(a: Action) -> frozenset:
    return action_fn(a) | action_bn(a)


def _extrusion_order(a: Output) -> list:
    """Extruded names by first occurrence in the emitted value."""
    order = []

    def walk(t: Term):
        if isinstance(t, Var):
            if t.name in a.extruded and t.name not in order:
                order.append(t.name)
        elif isinstance(t, Ctor):
            for x in t.args:
                walk(x)

    walk(a.value)
    return order


def action_key(a: Action) -> tuple:
    """Hashable alpha-invariant key; bound outputs match up to renaming."""
    if isinstance(a, Tau):
        return ("tau",)
    if isinstance(a, Input):
        return ("in", a.signal.uid, term_key(a.value))
    order = _extrusion_order(a)
    placeholder = {n: Name(f"_x{i}", -(1000 + i)) for i, n in enumerate(order)}

    def blindkey(t: Term) -> str:
        if isinstance(t, Var):
            n = placeholder.get(t.name, t.name)
            return f"{n.text}#{n.uid}" if n.uid >= 0 else n.text
        return f"{t.sym}({','.join(blindkey(x) for x in t.args)})"

    return ("out", a.signal.uid, blindkey(a.value), len(order))


def unify_outputs(a: Output, b: Output) -> dict | None:
    """If the labels are alpha-equal, map b's extruded names to a's."""
    if action_key(a) != action_key(b):
        return None
    return dict(zip(_extrusion_order(b), _extrusion_order(a)))


# ---------------------------------------------------------------------------
# Matching substitution.
# ---------------------------------------------------------------------------

NO_MATCH = None


def match_value(value: Term, pattern: Term):
    """Compute the matching substitution, or None (the paper's bottom case).

    All names occurring in the pattern are variables; nonlinear occurrences
    must agree on the matched value.
    """
    subst: dict = {}

    def walk(v: Term, p: Term) -> bool:
        if isinstance(p, Var):
            prev = subst.get(p.name)
            if prev is None:
                subst[p.name] = v
                return True
            return prev == v
        if isinstance(p, Ctor):
            return (
                isinstance(v, Ctor)
                and v.sym == p.sym
                and len(v.args) == len(p.args)
                and all(walk(va, pa) for va, pa in zip(v.args, p.args))
            )
        raise LtsError(f"dereference in pattern {p!r}")

    return subst if walk(value, pattern) else NO_MATCH


# ---------------------------------------------------------------------------
# Value universe (finitization of the early input rule).
# ---------------------------------------------------------------------------


@dataclass
class ValueUniverse:
    """Finite value domain used to instantiate input transitions.

    Checker verdicts are always relative to a universe: names in scope are
    combined with `fresh_quota` reserved fresh names per signal type, and
    constructed values are enumerated up to `depth`.
    """

    ctor_sigs: dict = field(default_factory=dict)
    depth: int = 2
    fresh_quota: int = 1
    _pools: dict = field(default_factory=dict, repr=False)

    def fresh_names(self, ty: Type, scope: frozenset) -> list:
        pool = self._pools.setdefault(ty, [])
        out = []
        i = 0
        while len(out) < self.fresh_quota:
            while i >= len(pool):
                pool.append(fresh_name("f", ty))
            cand = pool[i]
            i += 1
            if cand not in scope:
                out.append(cand)
        return out

    def values_of_type(self, ty: Type, scope: frozenset) -> list:
        return self._values(ty, scope, self.depth)

    def _values(self, ty: Type, scope: frozenset, depth: int) -> list:
        if isinstance(ty, Unit):
            return [Ctor("*")]
        if isinstance(ty, SigT):
            names = sorted((n for n in scope if n.ty == ty), key=lambda n: n.uid)
            return [Var(n) for n in names + self.fresh_names(ty, scope)]
        if isinstance(ty, ListT):
            elems = self._values(ty.elem, scope, depth - 1) if depth > 0 else []
            out = [Ctor("nil")]
            layer = [Ctor("nil")]
            for _ in range(max(depth, 0)):
                layer = [Ctor("cons", (e, t)) for e in elems for t in layer]
                out.extend(layer)
            return _dedupe_terms(out)
        if isinstance(ty, DeclT):
            out = []
            for sym in sorted(self.ctor_sigs):
                sig = self.ctor_sigs[sym]
                if sig.result != ty:
                    continue
                if not sig.arg_types:
                    out.append(Ctor(sym))
                elif depth > 0:
                    choices = [self._values(t, scope, depth - 1)
                               for t in sig.arg_types]
                    for combo in itertools.product(*choices):
                        out.append(Ctor(sym, tuple(combo)))
            return _dedupe_terms(out)
        raise LtsError(f"cannot enumerate values of type {ty}")


def _dedupe_terms(terms: list) -> list:
    seen = set()
    out = []
    for t in sorted(terms, key=term_key):
        k = term_key(t)
        if k not in seen:
            seen.add(k)
            out.append(t)
    return out


# ---------------------------------------------------------------------------
# Suspension (no tau possible) -- exact, universe-free.
# ---------------------------------------------------------------------------


def _sync_summary(p: Program, defs: Definitions):
    """(has_tau, ready input subjects, ready output subjects)."""
    if isinstance(p, Nil):
        return False, frozenset(), frozenset()
    if isinstance(p, Emit):
        return False, frozenset(), frozenset((p.signal,))
    if isinstance(p, Present):
        return False, frozenset((p.signal,)), frozenset()
    if isinstance(p, (MatchSig, MatchVal)):
        return True, frozenset(), frozenset()
    if isinstance(p, Call):
        if p.ident not in defs:
            raise UnboundDefinition(p.ident)
        return True, frozenset(), frozenset()
    if isinstance(p, New):
        tau, ins, outs = _sync_summary(p.body, defs)
        return tau, ins - {p.binder}, outs - {p.binder}
    if isinstance(p, Par):
        t1, i1, o1 = _sync_summary(p.left, defs)
        t2, i2, o2 = _sync_summary(p.right, defs)
        tau = t1 or t2 or bool(i1 & o2) or bool(i2 & o1)
        return tau, i1 | i2, o1 | o2
    raise TypeError(p)


def is_suspended(p: Program, defs: Definitions) -> bool:
    """True iff the program has no tau transition (end of instant reached)."""
    return not _sync_summary(p, defs)[0]


# ---------------------------------------------------------------------------
# Transitions.
# ---------------------------------------------------------------------------


def input_successors(p: Program, signal: Name, value: Term) -> list:
    """All P' with P --signal?value--> P' (exact; used for synchronisation)."""
    if isinstance(p, Present):
        if p.signal == signal:
            body = substitute(p.body, {p.binder: value})
            return [Par(body, Emit(signal, value))]
        return []
    if isinstance(p, Par):
        return [Par(l, p.right) for l in input_successors(p.left, signal, value)] + [
            Par(p.left, r) for r in input_successors(p.right, signal, value)
        ]
    if isinstance(p, New):
        if p.binder == signal or p.binder in term_names(value):
            return []
        return [New(p.binder, b) for b in input_successors(p.body, signal, value)]
    return []


def _collect(p: Program, defs: Definitions, u: ValueUniverse, scope: frozenset):
    """Raw transition list per Table 1 (inputs finitized by the universe)."""
    if isinstance(p, Nil):
        return []
    if isinstance(p, Emit):
        return [(Output((), p.signal, p.payload), p)]
    if isinstance(p, Present):
        if p.signal.ty is None:
            raise LtsError(f"untyped signal {p.signal!r}; typecheck first")
        elem = p.signal.ty.elem  # type: ignore[union-attr]
        out = []
        for v in u.values_of_type(elem, scope):
            body = substitute(p.body, {p.binder: v})
            out.append((Input(p.signal, v), Par(body, Emit(p.signal, v))))
        return out
    if isinstance(p, MatchSig):
        return [(TAU, p.then if p.lhs == p.rhs else p.orelse)]
    if isinstance(p, MatchVal):
        sigma = match_value(p.scrutinee, p.pattern)
        if sigma is NO_MATCH:
            return [(TAU, p.orelse)]
        return [(TAU, substitute(p.then, sigma))]
    if isinstance(p, Call):
        if p.ident not in defs:
            raise UnboundDefinition(p.ident)
        definition = defs[p.ident]
        if len(definition.params) != len(p.args):
            raise LtsError(f"arity mismatch calling {p.ident}")
        body = refresh_binders(definition.body)
        return [(TAU, substitute(body, dict(zip(definition.params, p.args))))]
    if isinstance(p, New):
        out = []
        for a, q in _collect(p.body, defs, u, scope):
            if isinstance(a, Output):
                if p.binder == a.signal:
                    continue  # restricted subject: no rule applies
                if p.binder in a.extruded:
                    continue  # shadowed binder; inner name is unrelated
                if p.binder in term_names(a.value):
                    out.append((Output((p.binder, *a.extruded), a.signal, a.value), q))
                    continue
            if p.binder in action_names(a):
                continue
            out.append((a, New(p.binder, q)))
        return out
    if isinstance(p, Par):
        left = _collect(p.left, defs, u, scope)
        right = _collect(p.right, defs, u, scope)
        out = []
        for a, q in left:
            if action_bn(a) & free_names(p.right):
                a, q = _freshen_extrusion(a, q)
            out.append((a, Par(q, p.right)))
        for a, q in right:
            if action_bn(a) & free_names(p.left):
                a, q = _freshen_extrusion(a, q)
            out.append((a, Par(p.left, q)))
        for a, q in left:
            if isinstance(a, Output):
                if set(a.extruded) & free_names(p.right):
                    a, q = _freshen_extrusion(a, q)
                for r in input_successors(p.right, a.signal, a.value):
                    out.append((TAU, news(a.extruded, Par(q, r))))
        for a, q in right:
            if isinstance(a, Output):
                if set(a.extruded) & free_names(p.left):
                    a, q = _freshen_extrusion(a, q)
                for r in input_successors(p.left, a.signal, a.value):
                    out.append((TAU, news(a.extruded, Par(r, q))))
        return out
    raise TypeError(p)


def _freshen_extrusion(a: Output, q: Program):
    """Alpha-rename extruded names that would clash with a sibling."""
    mapping = {t: fresh_name(t.text, t.ty) for t in a.extruded}
    value = substitute(
        a.value, {o: Var(n) for o, n in mapping.items()}
    )
    q2 = substitute(q, {o: Var(n) for o, n in mapping.items()})
    return Output(tuple(mapping[t] for t in a.extruded), a.signal, value), q2


def transitions(p: Program, defs: Definitions, u: ValueUniverse) -> tuple:
    """Deduplicated, deterministically ordered transitions from p.

    Successor programs are returned in canonical form.
    """
    scope = free_names(p)
    raw = _collect(p, defs, u, scope)
    seen = set()
    out = []
    for a, q in raw:
        cq = canonical_state(q)
        k = (action_key(a), program_key(cq))
        if k not in seen:
            seen.add(k)
            out.append((a, cq))
    out.sort(key=lambda aq: (action_key(aq[0]), program_key(aq[1])))
    return tuple(out)


# ---------------------------------------------------------------------------
# Canonical state form.
# ---------------------------------------------------------------------------

_PERM_CAP = 720


def _flatten(p: Program, binders: list, comps: list, taken: set):
    if isinstance(p, Par):
        _flatten(p.left, binders, comps, taken)
        _flatten(p.right, binders, comps, taken)
    elif isinstance(p, New):
        binder, body = p.binder, p.body
        if binder in taken:  # hoisting must not capture an unrelated occurrence
            nb = fresh_name(binder.text, binder.ty)
            body = substitute(body, {binder: Var(nb)})
            binder = nb
        taken.add(binder)
        binders.append(binder)
        _flatten(body, binders, comps, taken)
    elif isinstance(p, Nil):
        pass
    else:
        comps.append(p)


def _occurrence_order(comps: list, binders: set) -> list:
    """Hoisted binders in structural first-occurrence order (alpha-invariant)."""
    order: list = []

    def note(n: Name):
        if n in binders and n not in order:
            order.append(n)

    def walk_term(t: Term):
        if isinstance(t, Var):
            note(t.name)
        elif isinstance(t, Deref):
            note(t.signal)
        else:
            for a in t.args:
                walk_term(a)

    def walk(q: Program):
        if isinstance(q, Nil):
            return
        if isinstance(q, Call):
            for a in q.args:
                walk_term(a)
        elif isinstance(q, Emit):
            note(q.signal)
            walk_term(q.payload)
        elif isinstance(q, Present):
            note(q.signal)
            walk(q.body)
            walk(q.alt)
        elif isinstance(q, MatchSig):
            note(q.lhs)
            note(q.rhs)
            walk(q.then)
            walk(q.orelse)
        elif isinstance(q, MatchVal):
            walk_term(q.scrutinee)
            walk(q.then)
            walk(q.orelse)
        elif isinstance(q, New):
            walk(q.body)
        elif isinstance(q, Par):
            walk(q.left)
            walk(q.right)

    for c in comps:
        walk(c)
    return order


def canonical_state(p: Program) -> Program:
    """Representative of p modulo the structural laws + alpha.

    The returned program uses real (globally unique) names, so it can be
    composed further; use `program_key` on it for hashing/equality.
    """
    binders: list = []
    comps: list = []
    _flatten(p, binders, comps, set(free_names(p)))
    # idempotent emissions: duplicate copies of the same emission collapse
    seen_emits = set()
    filtered = []
    for c in comps:
        if isinstance(c, Emit):
            k = (c.signal, term_key(c.payload))
            if k in seen_emits:
                continue
            seen_emits.add(k)
        filtered.append(c)
    comps = filtered
    if not comps:
        return Nil()
    used = frozenset().union(*(free_names(c) for c in comps))
    binders = [b for b in binders if b in used]
    comps.sort(key=lambda c: program_key(c, blind_free=True))
    # group positions with identical name-blind keys; choose the ordering of
    # each group that minimises the alpha-canonical key of the whole state
    groups: list = []
    for c in comps:
        k = program_key(c, blind_free=True)
        if groups and groups[-1][0] == k:
            groups[-1][1].append(c)
        else:
            groups.append((k, [c]))
    combos = 1
    for _, g in groups:
        for i in range(2, len(g) + 1):
            combos *= i
        if combos > _PERM_CAP:
            break
    if combos > _PERM_CAP:
        orderings = [list(itertools.chain.from_iterable(
            sorted(g, key=program_key) for _, g in groups))]
    elif combos == 1:
        orderings = [comps]
    else:
        orderings = [
            list(itertools.chain.from_iterable(perm))
            for perm in itertools.product(
                *[[list(o) for o in _distinct_perms(g)] for _, g in groups]
            )
        ]
    best = None
    best_key = None
    for ordering in orderings:
        rebuilt = _rebuild(binders, ordering)
        key = program_key(rebuilt)
        if best_key is None or key < best_key:
            best_key = key
            best = rebuilt
    return best  # type: ignore[return-value]


def _distinct_perms(items: list):
    seen = set()
    for perm in itertools.permutations(range(len(items))):
        if perm not in seen:
            seen.add(perm)
            yield [items[i] for i in perm]


def _rebuild(binders: list, comps: list) -> Program:
    body = par(*comps)
    order = _occurrence_order(comps, set(binders))
    for b in binders:
        if b not in order:
            order.append(b)
    return news(order, body)


def state_key(p: Program) -> str:
    return program_key(p)


# ---------------------------------------------------------------------------
# Weak transitions / bounded exploration.
# ---------------------------------------------------------------------------


class Explorer:
    """Caches transitions and closures over canonical states."""

    def __init__(self, defs: Definitions, u: ValueUniverse, state_bound: int = 4000):
        self.defs = defs
        self.u = u
        self.state_bound = state_bound
        self._reps: dict = {}
        self._trans: dict = {}
        self._tau_closure: dict = {}
        self._weak: dict = {}

    def rep(self, p: Program) -> Program:
        c = canonical_state(p)
        k = program_key(c)
        return self._reps.setdefault(k, c)

    def key(self, p: Program) -> str:
        return program_key(self.rep(p))

    def transitions(self, p: Program) -> tuple:
        r = self.rep(p)
        k = program_key(r)
        if k not in self._trans:
            self._trans[k] = transitions(r, self.defs, self.u)
        return self._trans[k]

    def suspended(self, p: Program) -> bool:
        return is_suspended(self.rep(p), self.defs)

    def tau_closure(self, p: Program) -> tuple:
        """All states reachable by tau steps (reflexive)."""
        start = self.rep(p)
        k0 = program_key(start)
        if k0 in self._tau_closure:
            return self._tau_closure[k0]
        seen = {k0: start}
        frontier = [start]
        while frontier:
            q = frontier.pop()
            for a, succ in self.transitions(q):
                if not isinstance(a, Tau):
                    continue
                sk = program_key(succ)
                if sk not in seen:
                    if len(seen) >= self.state_bound:
                        raise BoundExceeded("tau closure", len(frontier))
                    seen[sk] = succ
                    frontier.append(succ)
        out = tuple(sorted(seen.values(), key=program_key))
        self._tau_closure[k0] = out
        return out

    def weak_successors(self, p: Program, action: Action) -> tuple:
        """tau* a tau* successors; for a = tau this is the tau closure."""
        if isinstance(action, Tau):
            return self.tau_closure(p)
        cache_key = (self.key(p), action)
        cached = self._weak.get(cache_key)
        if cached is not None:
            return cached
        want = action_key(action)
        mids = []
        for q in self.tau_closure(p):
            for a, succ in self.transitions(q):
                if action_key(a) != want:
                    continue
                if isinstance(a, Output):
                    renaming = unify_outputs(action, a)
                    if renaming:
                        succ = substitute(
                            succ, {o: Var(n) for o, n in renaming.items()}
                        )
                        succ = self.rep(succ)
                mids.append(succ)
        out: dict = {}
        for m in mids:
            for q in self.tau_closure(m):
                out[program_key(q)] = q
        result = tuple(sorted(out.values(), key=program_key))
        self._weak[cache_key] = result
        return result

    def reachable(self, p: Program, bound: int | None = None) -> tuple:
        """All states reachable by any transitions, bounded."""
        bound = bound or self.state_bound
        start = self.rep(p)
        seen = {program_key(start): start}
        frontier = [start]
        while frontier:
            q = frontier.pop()
            for _, succ in self.transitions(q):
                sk = program_key(succ)
                if sk not in seen:
                    if len(seen) >= bound:
                        raise BoundExceeded("state exploration", len(frontier))
                    seen[sk] = succ
                    frontier.append(succ)
        return tuple(sorted(seen.values(), key=program_key))


def weak_transitions(
    p: Program,
    action: Action,
    defs: Definitions,
    u: ValueUniverse,
    bound: int = 4000,
) -> tuple:
    """All weak alpha-successors of p under `action` within the state budget.

    Raises BoundExceeded (with the frontier size) when the budget is hit,
    which is reported distinctly from an empty result.
    """
    return Explorer(defs, u, bound).weak_successors(p, action)


# ---------------------------------------------------------------------------
# JSON dump of an explored transition graph.
# ---------------------------------------------------------------------------


def graph_dump(p: Program, defs: Definitions, u: ValueUniverse,
               bound: int = 4000) -> dict:
    from .surface import print_program

    ex = Explorer(defs, u, bound)
    states = ex.reachable(p)
    index = {program_key(s): i for i, s in enumerate(states)}
    nodes = []
    edges = []
    for s in states:
        nodes.append({
            "id": index[program_key(s)],
            "program": print_program(s),
            "suspended": ex.suspended(s),
        })
        for a, succ in ex.transitions(s):
            edge = {
                "source": index[program_key(s)],
                "target": index[program_key(succ)],
            }
            if isinstance(a, Tau):
                edge["kind"] = "tau"
            elif isinstance(a, Input):
                edge["kind"] = "input"
                edge["signal"] = a.signal.text
                edge["value"] = term_key(a.value)
            else:
                edge["kind"] = "output"
                edge["signal"] = a.signal.text
                edge["value"] = term_key(a.value)
                edge["extruded"] = [n.text for n in a.extruded]
            edges.append(edge)
    return {
        "version": 1,
        "root": index[program_key(ex.rep(p))],
        "nodes": nodes,
        "edges": edges,
    }
