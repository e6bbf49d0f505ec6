import pytest

from spical import surface
from spical.surface import (
    Await,
    Choice,
    DesugarError,
    FreshMatch,
    ParseError,
    Pause,
    desugar,
    parse,
    print_file,
    print_program,
)
from spical.syntax import (
    Call,
    Ctor,
    Emit,
    MatchSig,
    MatchVal,
    New,
    Nil,
    Par,
    Present,
    UNIT,
    Var,
    alpha_equal,
    free_names,
    iter_subterms,
    list_value,
)

INSTANT_SRC = """
# the two-reads walkthrough program
signal ignored : sig(unit)
def A(x : list(unit), y : list(unit)) = 0
def B(l : list(list(unit))) = 0
run new s1 : sig(list(unit)), s2 : sig(unit) in
    (s1![] | s1![*] | when s1(x) do
        (when s1(y) do
            (when s2(z) do A(x, y) else B(!s1))
         else 0)
     else 0)
"""


def test_parse_nil():
    sf = parse("run 0")
    assert sf.program == Nil()


def test_parse_instant_walkthrough_shape():
    sf = parse(INSTANT_SRC)
    p = sf.program
    assert isinstance(p, New) and isinstance(p.body, New)
    body = p.body.body
    assert isinstance(body, Par)
    nodes = list(iter_subterms(p))
    assert sum(isinstance(n, Present) for n in nodes) == 3
    assert sum(isinstance(n, Emit) for n in nodes) == 2
    assert free_names(p) == frozenset()
    # the innermost continuation dereferences s1
    derefs = [n for n in nodes if isinstance(n, Present) and
              isinstance(n.alt, Call) and n.alt.ident == "B"]
    assert len(derefs) == 1


def test_when_without_else_is_null_continuation():
    sf = parse("signal s : sig(unit)\nrun when s(x) do 0")
    assert isinstance(sf.program, Present)
    assert sf.program.alt == Nil()


def test_parse_error_has_location():
    with pytest.raises(ParseError) as err:
        parse("run when")
    assert "1:" in str(err.value)


def test_unbound_identifier_rejected():
    with pytest.raises(ParseError):
        parse("run s!")


def test_arity_mismatch_rejected():
    with pytest.raises(ParseError):
        parse("constructor c/2 : (unit, unit) -> pair\nsignal s : sig(pair)\n"
              "run s!c(*)")


def test_print_parse_print_idempotent():
    for src in [
        INSTANT_SRC,
        "signal s : sig(unit)\nrun s! | s! | when s do 0",
        "signal s : sig(unit)\nrun (s! (+) s!) | 0",
        "signal s : sig(unit)\ndef K() = 0\nrun pause.K() | s!",
        "signal s : sig(list(unit))\nrun await s(x).0",
        "signal s : sig(unit)\nrun if s = s then s! else 0",
        "signal s : sig(list(unit))\nrun case [*] of cons(h, t) -> s![h] else 0",
    ]:
        once = print_file(parse(src))
        twice = print_file(parse(once))
        assert once == twice


def test_print_preserves_choice_precedence():
    sf = parse("signal s : sig(unit)\nrun s! (+) s! | s!")
    # (+) binds tighter: Par(Choice(..), Emit)
    assert isinstance(sf.program, Par)
    assert isinstance(sf.program.left, Choice)
    printed = print_program(sf.program)
    assert printed == "s! (+) s! | s!"


# -- desugaring -------------------------------------------------------------


def test_desugar_internal_choice_shape():
    sf = desugar(parse("signal s : sig(unit)\nrun s! (+) 0"))
    p = sf.program
    # new c in (c(x).[x |> []] s!, 0 | c![] | c![*])
    assert isinstance(p, New)
    comps = []
    q = p.body
    while isinstance(q, Par):
        comps.append(q.right)
        q = q.left
    comps.append(q)
    comps.reverse()
    assert len(comps) == 3
    chooser, zero, one = comps
    assert isinstance(chooser, Present) and chooser.signal == p.binder
    assert isinstance(chooser.body, MatchVal)
    assert chooser.body.pattern == Ctor("nil")
    assert zero == Emit(p.binder, Ctor("nil"))
    assert one == Emit(p.binder, list_value([UNIT]))


def test_desugar_pause():
    sf = desugar(parse("def K() = 0\nrun pause.K()"))
    p = sf.program
    assert isinstance(p, New)
    inner = p.body
    assert isinstance(inner, Present)
    assert inner.signal == p.binder
    assert inner.body == Nil()
    assert inner.alt == Call("K", ())
    assert p.binder not in free_names(Call("K", ()))


def test_desugar_await_builds_recursive_definition():
    sf = desugar(parse("signal s : sig(unit)\nsignal t : sig(unit)\n"
                       "run await s(x).t!"))
    p = sf.program
    assert isinstance(p, Present)
    assert isinstance(p.alt, Call)
    ident = p.alt.ident
    assert ident in sf.defs
    definition = sf.defs[ident]
    # parameters: the signal plus the other free names of the body
    assert len(definition.params) == 2
    body = definition.body
    assert isinstance(body, Present)
    assert isinstance(body.alt, Call) and body.alt.ident == ident


def test_desugar_emit_shorthand():
    sf = parse("signal s : sig(unit)\nrun s!")
    assert sf.program == Emit(list(sf.signal_types)[0], UNIT)


def test_desugar_is_idempotent():
    src = ("signal s : sig(unit)\ndef K() = 0\n"
           "run (s! (+) pause.K()) | await s(x).0")
    once = desugar(parse(src))
    twice = desugar(once)
    assert alpha_equal(once.program, twice.program)
    assert set(once.defs.table) == set(twice.defs.table)


def test_desugar_fresh_names_disjoint_from_source():
    src = "signal s : sig(unit)\nrun s! (+) s!"
    sf = desugar(parse(src))
    source_names = set(sf.signal_types)
    assert isinstance(sf.program, New)
    assert sf.program.binder not in source_names


def test_desugar_generalized_match_example():
    # the three-constructor freshness-checking example
    src = """
constructor c/3 : (sig(unit), d, sig(unit)) -> d
constructor e/0 : d
signal s3 : sig(unit)
signal s4 : sig(unit)
signal inp : sig(d)
run when inp(x) do
    casefresh x = new s1, s2 in c(s1, c(s3, s2, s1), s3) avoid s3, s4 then 0
"""
    sf = desugar(parse(src))
    present = sf.program
    assert isinstance(present, Present)
    m = present.body
    # [x |> c(s1, c(s3'', s2, s1), s3'')] [s3''=s3] [s1 not-in {s3,s4}]
    # [s2 not-in {s3,s4}] [s1 <> s2] 0
    assert isinstance(m, MatchVal)
    pat = m.pattern
    assert isinstance(pat, Ctor) and pat.sym == "c"
    s1p, mid, s3pp = pat.args
    assert isinstance(mid, Ctor) and mid.sym == "c"
    assert mid.args[2] == s1p  # nonlinear occurrence of s1
    assert s3pp == mid.args[0]  # the stand-in for s3 occurs twice
    assert m.orelse == Nil()
    eq = m.then
    assert isinstance(eq, MatchSig)  # [s3'' = s3] ...
    assert eq.orelse == Nil()
    chain = eq.then
    # two not-in chains of two checks each, then one distinctness check
    checks = []
    while isinstance(chain, MatchSig):
        checks.append(chain)
        chain = chain.orelse if chain.then == Nil() else chain.then
    assert len(checks) == 5
    assert chain == Nil() or isinstance(chain, Nil)


def test_casefresh_requires_fresh_names_for_avoid():
    src = ("signal s : sig(sig(unit))\nsignal t : sig(unit)\n"
           "run when s(x) do casefresh x = t avoid t then 0")
    with pytest.raises(DesugarError):
        desugar(parse(src))


def test_casefresh_signal_case_is_signal_match():
    src = ("signal s : sig(sig(unit))\nsignal t : sig(unit)\n"
           "run when s(x) do casefresh x = t then 0")
    sf = desugar(parse(src))
    m = sf.program.body
    assert isinstance(m, MatchSig)
    assert m.rhs in sf.signal_types
    assert m.orelse == Nil()


def test_casefresh_fresh_signal_case_is_not_in_chain():
    src = ("signal s : sig(sig(unit))\nsignal a : sig(unit)\n"
           "signal b : sig(unit)\n"
           "run when s(x) do casefresh x = new t in t avoid a, b then s4!"
           .replace("s4!", "a!"))
    sf = desugar(parse(src))
    m = sf.program.body
    # [x=a]0,([x=b]0, a!)
    assert isinstance(m, MatchSig) and m.then == Nil()
    inner = m.orelse
    assert isinstance(inner, MatchSig) and inner.then == Nil()
    assert isinstance(inner.orelse, Emit)
