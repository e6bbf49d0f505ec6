"""Bounded checkers for strong, labelled and barbed bisimulation.

All three run as on-the-fly games over the product of explored state
graphs with a memoised pair table (partition refinement does not apply:
the input clause may be answered by an internal move with the emission
composed onto the defender residual, and the end-of-instant clause
quantifies over emission contexts).  A pair loses when some attacker
move has no surviving defender answer; the greatest fixpoint over the
explored graph yields the witness relation.

Negative verdicts are only reported when every enumeration they rest on
was complete: if a weak-closure or context bound was hit on the winning
attack path, the result degrades to BoundExceeded.  Positive verdicts
are always relative to the explored graph and the value universe, which
the verdict discloses.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .eoi import CombinatoricBound, next_instants
from .lts import (
    BoundExceeded,
    Explorer,
    Input,
    Output,
    Tau,
    TAU,
    ValueUniverse,
    action_key,
    canonical_state,
    is_suspended,
    _freshen_extrusion,
)
from .surface import print_program
from .syntax import (
    Definitions,
    Deref,
    Emit,
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
    iter_subterms,
    par,
    program_key,
    substitute_term,
    term_names,
)
from .typecheck import SigT

IMMEDIATE = "immediate"
WEAK = "weak"
LABELLED = "labelled"
SUSPENSION_KINDS = (IMMEDIATE, WEAK, LABELLED)


@dataclass
class Bounds:
    state_bound: int = 4000
    pair_bound: int = 20000
    context_cap: int = 64
    eoi_cap: int = 20000


@dataclass
class Verdict:
    kind: str  # "equivalent" | "inequivalent" | "bound_exceeded"
    relation: list = field(default_factory=list)
    play: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def equivalent(self) -> bool:
        return self.kind == "equivalent"

    @property
    def inequivalent(self) -> bool:
        return self.kind == "inequivalent"

    def clause_tags(self) -> list:
        return [step["clause"] for step in self.play]

    def to_json(self) -> dict:
        return {
            "verdict": self.kind,
            "relation_size": len(self.relation),
            "relation": self.relation,
            "play": self.play,
            "stats": self.stats,
        }


# ---------------------------------------------------------------------------
# Suspension predicates.
# ---------------------------------------------------------------------------


def _search_suspended(ex: Explorer, p: Program, labelled: bool, bound: int) -> bool:
    start = ex.rep(p)
    if ex.suspended(start):
        return True
    seen = {program_key(start)}
    frontier = [start]
    while frontier:
        q = frontier.pop()
        for a, succ in ex.transitions(q):
            if not labelled and not isinstance(a, Tau):
                continue
            k = program_key(succ)
            if k in seen:
                continue
            if ex.suspended(succ):
                return True
            if len(seen) >= bound:
                raise BoundExceeded("suspension search", len(frontier))
            seen.add(k)
            frontier.append(succ)
    return False


def suspends(
    p: Program,
    kind: str,
    defs: Definitions,
    u: ValueUniverse,
    bound: int = 4000,
    ex: Explorer | None = None,
) -> bool:
    """The suspension predicate family: immediate, weak (tau-only
    reachability of a suspended state) or labelled (any-label
    reachability).  Raises BoundExceeded when the search is cut off."""
    if kind not in SUSPENSION_KINDS:
        raise ValueError(f"unknown suspension kind {kind!r}")
    ex = ex or Explorer(defs, u, bound)
    if kind == IMMEDIATE:
        return ex.suspended(p)
    return _search_suspended(ex, p, kind == LABELLED, bound)


def commits(p: Program, signal: Name, defs: Definitions, u: ValueUniverse,
            ex: Explorer | None = None) -> bool:
    """P commits to emit on the signal (some output with that subject)."""
    ex = ex or Explorer(defs, u)
    return any(
        isinstance(a, Output) and a.signal == signal
        for a, _ in ex.transitions(p)
    )


def _commit_subjects(ex: Explorer, p: Program) -> frozenset:
    return frozenset(
        a.signal for a, _ in ex.transitions(p) if isinstance(a, Output)
    )


# ---------------------------------------------------------------------------
# Constructive witness for L-suspension (the "some context suspends" proof).
# ---------------------------------------------------------------------------


def lsuspension_path(ex: Explorer, p: Program, bound: int) -> list | None:
    """A shortest label path from p to a suspended state, or None."""
    start = ex.rep(p)
    if ex.suspended(start):
        return []
    seen = {program_key(start)}
    frontier = [(start, [])]
    while frontier:
        nxt = []
        for q, path in frontier:
            for a, succ in ex.transitions(q):
                k = program_key(succ)
                if k in seen:
                    continue
                seen.add(k)
                if ex.suspended(succ):
                    return path + [a]
                if len(seen) >= bound:
                    raise BoundExceeded("witness search", len(frontier))
                nxt.append((succ, path + [a]))
        frontier = nxt
    return None


def witness_for_lsuspension(
    p: Program,
    defs: Definitions,
    u: ValueUniverse,
    bound: int = 4000,
) -> Program:
    """Build Q such that (P | Q) weakly suspends, from a recorded label path.

    tau steps need no help; an input is answered by the matching emission;
    an output is consumed by a receiver that, for constructed values,
    matches the shape with fresh stand-ins for the free names."""
    ex = Explorer(defs, u, bound)
    path = lsuspension_path(ex, p, bound)
    if path is None:
        raise ValueError("program does not L-suspend within the bound")
    q: Program = Nil()
    for action in reversed(path):
        if isinstance(action, Tau):
            continue
        if isinstance(action, Input):
            q = Par(q, Emit(action.signal, action.value))
            continue
        assert isinstance(action, Output)
        elem = action.signal.ty.elem if isinstance(action.signal.ty, SigT) else None
        if isinstance(action.value, Var):
            binder = action.value.name
            q = Present(action.signal, binder, q, Nil())
            continue
        frees = sorted(
            (n for n in term_names(action.value) if n not in action.extruded),
            key=lambda n: n.uid,
        )
        standins = {n: fresh_name(n.text + "w", n.ty) for n in frees}
        pattern = substitute_term(
            action.value, {o: Var(n) for o, n in standins.items()}
        )
        x = fresh_name("w", elem)
        q = Present(action.signal, x,
                    MatchVal(Var(x), pattern, q, Nil()), Nil())
    return q


# ---------------------------------------------------------------------------
# Emission contexts S for the end-of-instant clauses.
# ---------------------------------------------------------------------------


def _deref_signals(p: Program) -> frozenset:
    out = set()
    for node in iter_subterms(p):
        if isinstance(node, Present):
            out |= _deref_in_cont(node.alt)
    return frozenset(out)


def _deref_in_cont(k: Program) -> set:
    out: set = set()
    if not hasattr(k, "args"):
        return out

    def walk(t: Term):
        if isinstance(t, Deref):
            out.add(t.signal)
        elif hasattr(t, "args"):
            for a in t.args:
                walk(a)

    for a in k.args:
        walk(a)
    return out


def emission_contexts(
    p: Program,
    q: Program,
    u: ValueUniverse,
    cap: int = 64,
) -> tuple:
    """The finite family of contexts S = s1!v1 | ... | sn!vn used by the
    end-of-instant clauses: subsets of candidate (signal, value) pairs over
    the free signals of the pair under test, the empty context included.

    When the full subset lattice exceeds the cap, candidates are narrowed
    to end-of-instant dereferenced signals (the only ones whose emissions
    can influence the next instant of a suspended program)."""
    scope = free_names(p) | free_names(q)
    sig_names = sorted(
        (n for n in scope if isinstance(n.ty, SigT)), key=lambda n: n.uid
    )

    def candidates(names) -> list:
        cands = []
        for s in names:
            for v in u.values_of_type(s.ty.elem, frozenset(scope)):
                cands.append((s, v))
        return cands

    cands = candidates(sig_names)
    capped = False
    if 2 ** len(cands) > cap:
        derefd = _deref_signals(p) | _deref_signals(q)
        cands = candidates([n for n in sig_names if n in derefd])
    subsets: list = [()]
    for r in range(1, len(cands) + 1):
        for combo in itertools.combinations(cands, r):
            subsets.append(combo)
            if len(subsets) >= cap:
                capped = True
                break
        if len(subsets) >= cap:
            break
    return tuple(subsets), capped


def compose_context(p: Program, s_ctx: tuple) -> Program:
    return par(p, *[Emit(s, v) for s, v in s_ctx])


# ---------------------------------------------------------------------------
# The bisimulation games.
# ---------------------------------------------------------------------------

STRONG = "strong"
LABELLED_GAME = "labelled"
BARBED = "barbed"


@dataclass
class _Move:
    clause: str
    side: str  # "left" | "right" (the attacker)
    action: str
    options: list  # list of conjunctions; each conjunction: list of pair keys
    complete: bool = True  # defender enumeration fully explored
    certain: bool = True  # attacker move known to exist


class _Checker:
    def __init__(
        self,
        game: str,
        defs: Definitions,
        u: ValueUniverse,
        bounds: Bounds,
        susp: str = LABELLED,
        l4_contexts: str = "full",
    ):
        self.game = game
        self.defs = defs
        self.u = u
        self.bounds = bounds
        self.susp_kind = susp
        self.l4_contexts = l4_contexts
        self.ex = Explorer(defs, u, bounds.state_bound)
        self.states: dict = {}
        self.pairs: dict = {}  # key -> list[_Move]
        self.bound_events: list = []
        self._susp_cache: dict = {}
        self._next_cache: dict = {}

    # -- state helpers ------------------------------------------------------

    def _state(self, p: Program) -> Program:
        r = self.ex.rep(p)
        self.states[program_key(r)] = r
        return r

    def _susp_holds(self, p: Program):
        """The gating predicate of (L2)/(B2); None when the search bounds out."""
        k = (program_key(self.ex.rep(p)), self.susp_kind)
        if k not in self._susp_cache:
            try:
                self._susp_cache[k] = suspends(
                    p, self.susp_kind, self.defs, self.u,
                    self.bounds.state_bound, ex=self.ex)
            except BoundExceeded as e:
                self.bound_events.append(str(e))
                self._susp_cache[k] = None
        return self._susp_cache[k]

    def _next_instants(self, p: Program) -> list | None:
        k = program_key(self.ex.rep(p))
        if k not in self._next_cache:
            try:
                succs = next_instants(self.ex.rep(p), cap=self.bounds.eoi_cap)
                self._next_cache[k] = [self._state(s) for s in succs]
            except CombinatoricBound as e:
                self.bound_events.append(str(e))
                self._next_cache[k] = None
        return self._next_cache[k]

    def _weak(self, p: Program, action) -> tuple | None:
        try:
            return tuple(self._state(s) for s in self.ex.weak_successors(p, action))
        except BoundExceeded as e:
            self.bound_events.append(str(e))
            return None

    def _tau_closure(self, p: Program) -> tuple | None:
        try:
            return tuple(self._state(s) for s in self.ex.tau_closure(p))
        except BoundExceeded as e:
            self.bound_events.append(str(e))
            return None

    # -- pair expansion -----------------------------------------------------

    def pair_key(self, p: Program, q: Program) -> tuple:
        return (program_key(p), program_key(q))

    def expand(self, p: Program, q: Program) -> list:
        key = self.pair_key(p, q)
        if key in self.pairs:
            return self.pairs[key]
        self.pairs[key] = []  # mark in progress (identity pairs stay empty)
        if key[0] == key[1]:
            return self.pairs[key]
        moves: list = []
        moves += self._moves_from(p, q, "left")
        moves += self._moves_from(q, p, "right")
        self.pairs[key] = moves
        return moves

    def _oriented(self, side: str, attacker_succ: Program,
                  defender_succ: Program) -> tuple:
        if side == "left":
            return self.pair_key(attacker_succ, defender_succ)
        return self.pair_key(defender_succ, attacker_succ)

    def _moves_from(self, a_state: Program, d_state: Program, side: str) -> list:
        if self.game == STRONG:
            return (self._strong_action_moves(a_state, d_state, side)
                    + self._eoi_moves(a_state, d_state, side, strong=True))
        if self.game == LABELLED_GAME:
            return (self._labelled_action_moves(a_state, d_state, side)
                    + self._eoi_moves(a_state, d_state, side, strong=False))
        return (self._barbed_moves(a_state, d_state, side)
                + self._barbed_eoi_moves(a_state, d_state, side))

    # (S1)
    def _strong_action_moves(self, P: Program, Q: Program, side: str) -> list:
        moves = []
        d_trans = self.ex.transitions(Q)
        for a, p2 in self.ex.transitions(P):
            if isinstance(a, Output) and set(a.extruded) & free_names(Q):
                a, p2 = _freshen_extrusion(a, p2)
                p2 = self._state(p2)
            options = []
            for b, q2 in d_trans:
                if action_key(b) != action_key(a):
                    continue
                if isinstance(a, Output):
                    from .lts import unify_outputs

                    ren = unify_outputs(a, b)
                    if ren:
                        q2 = self._state(
                            canonical_state(
                                _subst_names(q2, ren)))
                options.append([self._oriented(side, self._state(p2),
                                               self._state(q2))])
            moves.append(_Move("S1", side, str(a), options))
        return moves

    # (L1)-(L3)
    def _labelled_action_moves(self, P: Program, Q: Program, side: str) -> list:
        moves = []
        for a, p2 in self.ex.transitions(P):
            p2 = self._state(p2)
            if isinstance(a, Tau):
                weak = self._weak(Q, TAU)
                options = (
                    [[self._oriented(side, p2, q2)] for q2 in weak]
                    if weak is not None else []
                )
                moves.append(_Move("L1", side, "tau", options,
                                   complete=weak is not None))
            elif isinstance(a, Output):
                holds = self._susp_holds(P)
                if holds is False:
                    continue
                if set(a.extruded) & free_names(Q):
                    a, p2 = _freshen_extrusion(a, p2)
                    p2 = self._state(p2)
                weak = self._weak(Q, a)
                options = (
                    [[self._oriented(side, p2, q2)] for q2 in weak]
                    if weak is not None else []
                )
                moves.append(_Move("L2", side, str(a), options,
                                   complete=weak is not None,
                                   certain=holds is True))
            else:
                assert isinstance(a, Input)
                weak_in = self._weak(Q, a)
                weak_tau = self._weak(Q, TAU)
                options = []
                complete = weak_in is not None and weak_tau is not None
                if weak_in is not None:
                    options += [[self._oriented(side, p2, q2)] for q2 in weak_in]
                if weak_tau is not None:
                    for q2 in weak_tau:
                        composed = self._state(
                            Par(q2, Emit(a.signal, a.value)))
                        options.append([self._oriented(side, p2, composed)])
                moves.append(_Move("L3", side, str(a), options,
                                   complete=complete))
        return moves

    # (L4) / (S2)
    def _eoi_moves(self, P: Program, Q: Program, side: str, strong: bool) -> list:
        moves = []
        # composing emissions only adds synchronisation opportunities, so
        # (P|S) can only be suspended when P itself is
        if not self.ex.suspended(P):
            return moves
        if self.l4_contexts == "empty":
            contexts, capped = ((),), False
        else:
            contexts, capped = emission_contexts(
                P, Q, self.u, self.bounds.context_cap)
        if capped:
            self.bound_events.append("emission context cap reached")
        seen_ctx = set()
        for s_ctx in contexts:
            ps = self._state(compose_context(P, s_ctx))
            ck = program_key(ps)
            if ck in seen_ctx:
                continue
            seen_ctx.add(ck)
            if not self.ex.suspended(ps):
                continue
            succs = self._next_instants(ps)
            qs = self._state(compose_context(Q, s_ctx))
            ctx_label = "|".join(f"{s.text}!" for s, _ in s_ctx) or "empty"
            if succs is None:
                moves.append(_Move("S2" if strong else "L4", side,
                                   f"S={ctx_label}", [], certain=False))
                continue
            if strong:
                d_succs = (self._next_instants(qs)
                           if self.ex.suspended(qs) else [])
                for p2 in succs:
                    options = []
                    if d_succs is not None:
                        for q2 in d_succs:
                            options.append([
                                self._oriented(side, ps, qs),
                                self._oriented(side, p2, q2),
                            ])
                    moves.append(_Move(
                        "S2", side, f"S={ctx_label} |-> {print_program(p2)}",
                        options, complete=d_succs is not None))
                continue
            closure = self._tau_closure(qs)
            for p2 in succs:
                options = []
                complete = closure is not None
                for q1 in closure or ():
                    if not self.ex.suspended(q1):
                        continue
                    d_succs = self._next_instants(q1)
                    if d_succs is None:
                        complete = False
                        continue
                    for q2 in d_succs:
                        options.append([
                            self._oriented(side, ps, q1),
                            self._oriented(side, p2, q2),
                        ])
                moves.append(_Move(
                    "L4", side, f"S={ctx_label} |-> {print_program(p2)}",
                    options, complete=complete))
        return moves

    # (B1)/(B2)
    def _barbed_moves(self, P: Program, Q: Program, side: str) -> list:
        moves = []
        for a, p2 in self.ex.transitions(P):
            if isinstance(a, Tau):
                weak = self._weak(Q, TAU)
                options = (
                    [[self._oriented(side, self._state(p2), q2)] for q2 in weak]
                    if weak is not None else []
                )
                moves.append(_Move("B1", side, "tau", options,
                                   complete=weak is not None))
        holds = self._susp_holds(P)
        if holds is not False:
            closure = self._tau_closure(Q)
            for subject in sorted(_commit_subjects(self.ex, P),
                                  key=lambda n: n.uid):
                options = []
                for q1 in closure or ():
                    if subject in _commit_subjects(self.ex, q1):
                        options.append([self._oriented(side, P, q1)])
                moves.append(_Move(
                    "B2", side, f"commit {subject.text}!", options,
                    complete=closure is not None,
                    certain=holds is True))
        return moves

    # (B3)
    def _barbed_eoi_moves(self, P: Program, Q: Program, side: str) -> list:
        moves = []
        if not self.ex.suspended(P):
            return moves
        succs = self._next_instants(P)
        if succs is None:
            moves.append(_Move("B3", side, "end-of-instant", [], certain=False))
            return moves
        closure = self._tau_closure(Q)
        for p2 in succs:
            options = []
            complete = closure is not None
            for q1 in closure or ():
                if not self.ex.suspended(q1):
                    continue
                d_succs = self._next_instants(q1)
                if d_succs is None:
                    complete = False
                    continue
                for q2 in d_succs:
                    options.append([
                        self._oriented(side, P, q1),
                        self._oriented(side, p2, q2),
                    ])
            moves.append(_Move("B3", side, f"|-> {print_program(p2)}",
                               options, complete=complete))
        return moves

    # -- solving ------------------------------------------------------------

    def check(self, p: Program, q: Program) -> Verdict:
        P = self._state(canonical_state(p))
        Q = self._state(canonical_state(q))
        root = self.pair_key(P, Q)
        # expand the product graph reachable through defender options
        agenda = [root]
        expanded = set()
        over_budget = False
        while agenda:
            key = agenda.pop()
            if key in expanded:
                continue
            expanded.add(key)
            if len(expanded) > self.bounds.pair_bound:
                over_budget = True
                break
            moves = self.expand(self.states[key[0]], self.states[key[1]])
            for m in moves:
                for option in m.options:
                    for sub in option:
                        if sub not in expanded:
                            agenda.append(sub)
        if over_budget:
            return Verdict("bound_exceeded", stats=self._stats(len(expanded)))
        losing = self._solve(strict=False)
        if root not in losing:
            relation = sorted(
                f"{print_program(self.states[k[0]])}  ~  "
                f"{print_program(self.states[k[1]])}"
                for k in self.pairs if k not in losing
            )
            stats = self._stats(len(expanded))
            return Verdict("equivalent", relation=relation, stats=stats)
        strict_losing = self._solve(strict=True)
        if root in strict_losing:
            play = self._extract_play(root, strict_losing)
            return Verdict("inequivalent", play=play,
                           stats=self._stats(len(expanded)))
        return Verdict("bound_exceeded", stats=self._stats(len(expanded)))

    def _solve(self, strict: bool) -> dict:
        """Layered attractor of the losing predicate; returns key -> rank.

        Ranks are strictly causal: a pair at rank r loses through a move
        all of whose defender options already fail at rank < r.
        strict=True only counts moves whose existence is certain and whose
        defender enumeration was complete (used to confirm Inequivalent)."""
        losing: dict = {}
        rank = 0
        while True:
            rank += 1
            layer = []
            for key, moves in self.pairs.items():
                if key in losing:
                    continue
                for m in moves:
                    if strict and not (m.certain and m.complete):
                        continue
                    if all(any(sub in losing for sub in option)
                           for option in m.options):
                        layer.append(key)
                        break
            if not layer:
                return losing
            for key in layer:
                losing[key] = rank

    def _extract_play(self, root: tuple, losing: dict) -> list:
        play = []
        key = root
        guard = 0
        while key in losing and guard < 200:
            guard += 1
            moves = self.pairs[key]
            my_rank = losing[key]
            chosen = None
            for m in moves:
                if not (m.certain and m.complete):
                    continue
                if all(any(sub in losing and losing[sub] < my_rank
                           for sub in option)
                       for option in m.options):
                    chosen = m
                    break
            if chosen is None:
                break
            play.append({
                "from": [print_program(self.states[key[0]]),
                         print_program(self.states[key[1]])],
                "attacker": chosen.side,
                "clause": chosen.clause,
                "action": chosen.action,
                "defender_options": len(chosen.options),
            })
            if not chosen.options:
                break
            # follow the defender option that survives longest
            best_next = None
            best_rank = -1
            for option in chosen.options:
                fails = [sub for sub in option if sub in losing]
                sub = min(fails, key=lambda s: losing[s])
                if losing[sub] > best_rank:
                    best_rank = losing[sub]
                    best_next = sub
            if best_next is None or losing[best_next] >= losing.get(key, 1 << 30):
                break
            key = best_next
        return play

    def _stats(self, pairs_explored: int) -> dict:
        return {
            "game": self.game,
            "suspension": self.susp_kind,
            "pairs": pairs_explored,
            "states": len(self.states),
            "bounds": {
                "state_bound": self.bounds.state_bound,
                "pair_bound": self.bounds.pair_bound,
                "context_cap": self.bounds.context_cap,
            },
            "bound_events": sorted(set(self.bound_events)),
            "universe": {
                "depth": self.u.depth,
                "fresh_quota": self.u.fresh_quota,
            },
        }


def _subst_names(p: Program, mapping: dict) -> Program:
    from .syntax import substitute

    return substitute(p, {o: Var(n) for o, n in mapping.items()})


def strong_bisim(
    p: Program, q: Program, defs: Definitions, u: ValueUniverse,
    bounds: Bounds | None = None,
) -> Verdict:
    checker = _Checker(STRONG, defs, u, bounds or Bounds())
    return checker.check(p, q)


def labelled_bisim(
    p: Program, q: Program, defs: Definitions, u: ValueUniverse,
    bounds: Bounds | None = None, susp: str = LABELLED,
    l4_contexts: str = "full",
) -> Verdict:
    checker = _Checker(LABELLED_GAME, defs, u, bounds or Bounds(),
                       susp=susp, l4_contexts=l4_contexts)
    return checker.check(p, q)


def barbed_bisim(
    p: Program, q: Program, defs: Definitions, u: ValueUniverse,
    bounds: Bounds | None = None, susp: str = LABELLED,
) -> Verdict:
    checker = _Checker(BARBED, defs, u, bounds or Bounds(), susp=susp)
    return checker.check(p, q)


def congruence_probe(
    p: Program, q: Program, contexts: list, defs: Definitions,
    u: ValueUniverse, bounds: Bounds | None = None, susp: str = LABELLED,
) -> dict:
    """Check the pair under each static context; with susp=labelled any
    Inequivalent is an alarm (it would contradict the congruence theorem
    within the explored bounds)."""
    from .randprog import apply_context, context_label

    results = []
    alarms = 0
    for ops in contexts:
        verdict = labelled_bisim(apply_context(ops, p), apply_context(ops, q),
                                 defs, u, bounds, susp=susp)
        alarm = verdict.inequivalent and susp == LABELLED
        alarms += alarm
        results.append({
            "context": context_label(ops),
            "verdict": verdict.kind,
            "alarm": alarm,
            "clauses": verdict.clause_tags(),
        })
    return {
        "version": 1,
        "suspension": susp,
        "contexts": len(contexts),
        "alarms": alarms,
        "results": results,
    }
