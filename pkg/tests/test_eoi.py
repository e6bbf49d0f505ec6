import itertools

import pytest

from helpers import compile_src, signal
from spical.eoi import (
    CombinatoricBound,
    EmissionMap,
    NotSuspended,
    PreconditionViolated,
    ValueChoice,
    emissions,
    eoi_step,
    instant_choices,
    next_instants,
    represents,
)
from spical.lts import Explorer, canonical_state, is_suspended
from spical.syntax import (
    Call,
    Ctor,
    Emit,
    New,
    Nil,
    Par,
    Present,
    UNIT,
    Var,
    alpha_equal,
    fresh_name,
    list_value,
    news,
    par,
    program_key,
)
from spical.typecheck import ListT, SigT, UNIT_T


def test_represents_empty():
    assert represents([], set())


def test_represents_permutations():
    v1, v2 = Ctor("nil"), list_value([UNIT])
    assert represents([v1, v2], {v1, v2})
    assert represents([v2, v1], {v1, v2})
    assert not represents([v1], {v1, v2})


def test_represents_rejects_duplicates():
    v1 = Ctor("nil")
    assert not represents([v1, v1], {v1})


# The displayed end-of-instant judgement:
# new s1 in (s1(x).0, A(!s2) | s2!v3) | (s2!v2 | s1!v1)
JUDGEMENT_SRC = """
signal s1 : sig(unit)
signal s2 : sig(list(unit))
def A(l : list(list(unit))) = 0
run new s1i : sig(unit) in (when s1i(x) do 0 else A(!s2) | s2![*]) | (s2![] | s1!)
"""


def judgement_parts():
    typed, u, ex = compile_src(JUDGEMENT_SRC)
    s1 = signal(typed, "s1")
    s2 = signal(typed, "s2")
    v1 = UNIT
    v2 = Ctor("nil")
    v3 = list_value([UNIT])
    return typed, s1, s2, v1, v2, v3


def test_emissions_of_judgement_example():
    typed, s1, s2, v1, v2, v3 = judgement_parts()
    emap = emissions(typed.program)
    assert emap.get(s1) == frozenset({v1})
    assert emap.get(s2) == frozenset({v2, v3})
    # the restricted s1 does not show up
    assert set(emap.signals()) == {s1, s2}


def test_emissions_nil_empty():
    assert emissions(Nil()).table == ()


def test_emissions_restriction_erases():
    typed, _, _ = compile_src("run new s : sig(unit) in s!")
    assert emissions(typed.program).table == ()


def test_eoi_step_displayed_successor_alpha_exact():
    typed, s1, s2, v1, v2, v3 = judgement_parts()
    choice = ValueChoice.of({s1: (v1,), s2: (v3, v2)})
    result = eoi_step(typed.program, choice, typed.defs)
    # new s1 in (A([v3; v2]) | 0) | (0 | 0)
    inner_binder = typed.program.left.binder
    expected = Par(
        New(inner_binder, Par(Call("A", (list_value([v3, v2]),)), Nil())),
        Par(Nil(), Nil()),
    )
    assert alpha_equal(result, expected)


def test_eoi_step_requires_value_in_choice():
    typed, s1, s2, v1, v2, v3 = judgement_parts()
    bad = ValueChoice.of({s1: (v1,), s2: (v3,)})  # v2 missing
    with pytest.raises(PreconditionViolated):
        eoi_step(typed.program, bad, typed.defs)


def test_eoi_step_nil():
    assert eoi_step(Nil(), ValueChoice()) == Nil()


def test_eoi_step_of_pause_reaches_continuation():
    # pause.K desugars to new s in (when s do 0 else K); V = empty
    typed, u, ex = compile_src("def K() = 0\nrun pause.K()")
    result = eoi_step(typed.program, ValueChoice(), typed.defs)
    assert isinstance(result, New)
    assert result.body == Call("K", ())


def test_eoi_step_not_suspended():
    typed, _, _ = compile_src("signal s : sig(unit)\nrun s! | when s(x) do 0")
    with pytest.raises(NotSuspended):
        eoi_step(typed.program, ValueChoice.of(
            {signal(typed, "s"): (UNIT,)}), typed.defs)


def test_suspended_reader_in_dom_v_rejected():
    typed, _, _ = compile_src("signal s : sig(unit)\nrun when s(x) do 0")
    s = signal(typed, "s")
    with pytest.raises(PreconditionViolated):
        eoi_step(typed.program, ValueChoice.of({s: (UNIT,)}), typed.defs)


# ---------------------------------------------------------------------------
# next_instants
# ---------------------------------------------------------------------------

INSTANT_SRC = """
def A(x : list(unit), y : list(unit)) = 0
def B(l : list(list(unit))) = 0
run new s1 : sig(list(unit)), s2 : sig(unit) in
    (s1![] | s1![*] | when s1(x) do
        (when s1(y) do
            (when s2(z) do A(x, y) else B(!s1))
         else 0)
     else 0)
"""


def test_next_instants_of_walkthrough_suspension():
    typed, u, ex = compile_src(INSTANT_SRC)
    suspended = [s for s in ex.tau_closure(typed.program) if ex.suspended(s)]
    assert suspended
    v1, v2 = Ctor("nil"), list_value([UNIT])
    p = typed.program
    s1, s2 = p.binder, p.body.binder
    expected = {
        program_key(canonical_state(
            news([s1, s2], Call("B", (list_value([v1, v2]),))))),
        program_key(canonical_state(
            news([s1, s2], Call("B", (list_value([v2, v1]),))))),
    }
    for state in suspended:
        succs = next_instants(state, typed.defs)
        assert {program_key(s) for s in succs} == expected


def test_next_instants_nil():
    succ = next_instants(Nil())
    assert len(succ) == 1 and succ[0] == Nil()


def test_next_instants_counts_factorial():
    # k distinct values on a dereferenced signal: k! listings
    for k in (1, 2, 3):
        values = [list_value([UNIT] * i) for i in range(k)]
        s = fresh_name("s", SigT(ListT(UNIT_T)))
        d = fresh_name("d", SigT(UNIT_T))
        x = fresh_name("x", UNIT_T)
        from spical.syntax import Deref
        reader = Present(d, x, Nil(), Call("C", (Deref(s),)))
        p = par(*[Emit(s, v) for v in values], reader)
        succs = next_instants(p)
        # against the independent permutation count
        assert len(succs) == len(list(itertools.permutations(values)))


def test_next_instants_is_total_on_suspended_states():
    sources = [
        "signal s : sig(unit)\nrun s!",
        "signal s : sig(unit)\nrun when s(x) do 0",
        "run new t : sig(unit) in (t! | 0)",
        "signal s : sig(list(unit))\nrun s![] | s![*]",
    ]
    for src in sources:
        typed, u, ex = compile_src(src)
        assert is_suspended(typed.program, typed.defs)
        assert next_instants(typed.program, typed.defs)


def test_eoi_consumes_all_emissions():
    typed, u, ex = compile_src("signal s : sig(unit)\nsignal t : sig(unit)\n"
                               "run s! | t!")
    succs = next_instants(typed.program, typed.defs)
    for s in succs:
        from spical.syntax import iter_subterms
        assert not any(isinstance(n, Emit) for n in iter_subterms(s))


def test_combinatoric_cap_reported():
    values = [list_value([UNIT] * i) for i in range(5)]
    s = fresh_name("s", SigT(ListT(UNIT_T)))
    d = fresh_name("d", SigT(UNIT_T))
    x = fresh_name("x", UNIT_T)
    from spical.syntax import Deref
    reader = Present(d, x, Nil(), Call("C", (Deref(s),)))
    p = par(*[Emit(s, v) for v in values], reader)
    with pytest.raises(CombinatoricBound):
        next_instants(p, cap=10)


def test_signals_reset_no_leak():
    # after the instant, no deref or stored listing except via V(K)
    typed, u, ex = compile_src(
        "signal s : sig(unit)\ndef K() = 0\nrun s! | pause.K()"
    )
    succs = next_instants(typed.program, typed.defs)
    for q in succs:
        from spical.syntax import iter_subterms, Deref
        for node in iter_subterms(q):
            assert not isinstance(node, Emit)


def test_internal_choice_enumerated():
    # emission on a restricted signal, dereferenced by an internal reader
    src = """
def C(l : list(list(unit))) = 0
run new t : sig(list(unit)) in
    (t![] | t![*] | new d : sig(unit) in when d(x) do 0 else C(!t))
"""
    typed, u, ex = compile_src(src)
    succs = next_instants(typed.program, typed.defs)
    assert len(succs) == 2  # two internal listings of {[], [*]}
