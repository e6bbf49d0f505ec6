import random

import pytest

from helpers import compile_src, signal
from spical.equivalence import (
    Bounds,
    IMMEDIATE,
    LABELLED,
    WEAK,
    barbed_bisim,
    commits,
    congruence_probe,
    emission_contexts,
    labelled_bisim,
    strong_bisim,
    suspends,
    witness_for_lsuspension,
)
from spical.lts import Explorer, ValueUniverse
from spical.randprog import apply_context
from spical.surface import desugar, parse
from spical.syntax import (
    Definition,
    Definitions,
    Emit,
    New,
    Nil,
    Par,
    Present,
    UNIT,
    Var,
    fresh_name,
    rename,
)
from spical.typecheck import SigT, UNIT_T, check


def merge_sources(*sources, depth=2, quota=1):
    """Compile several files against a shared signal/definition space.

    Signals are identified across files by their declared name."""
    typed_list = []
    by_text: dict = {}
    defs: dict = {}
    ctors: dict = {}
    signal_types: dict = {}
    programs = []
    for src in sources:
        sf = desugar(parse(src))
        mapping = {}
        for n, ty in sf.signal_types.items():
            if n.text in by_text:
                assert by_text[n.text].ty == ty, f"signal {n.text} type clash"
                mapping[n] = by_text[n.text]
            else:
                by_text[n.text] = n
                signal_types[n] = ty
        program = rename(sf.program, mapping)
        for ident, d in sf.defs.table.items():
            body = rename(d.body, mapping)
            if ident not in defs:
                defs[ident] = Definition(d.params, body)
        ctors.update(sf.ctor_sigs)
        programs.append(program)
    all_defs = Definitions(defs)
    typed = None
    out = []
    for program in programs:
        typed = check(program, all_defs, signal_types, ctors)
        out.append(typed.program)
    u = ValueUniverse(dict(ctors), depth, quota)
    return out, typed.defs, u


DECLS = """
signal s1 : sig(unit)
signal s2 : sig(unit)
signal s3 : sig(unit)
"""


# ---------------------------------------------------------------------------
# suspension predicates
# ---------------------------------------------------------------------------


def test_omega_never_suspends():
    typed, u, _ = compile_src("def Omega() = Omega()\nrun Omega()")
    for kind in (IMMEDIATE, WEAK, LABELLED):
        assert suspends(typed.program, kind, typed.defs, u) is False


def test_emission_with_omega_never_suspends():
    typed, u, _ = compile_src(
        "signal s : sig(unit)\ndef Omega() = Omega()\nrun s! | Omega()"
    )
    assert suspends(typed.program, LABELLED, typed.defs, u) is False


def test_suspension_implication_chain():
    sources = [
        "signal s : sig(unit)\nrun s!",
        "signal s : sig(unit)\nrun when s(x) do 0",
        "signal s : sig(unit)\nrun if s = s then s! else 0",
        "signal s : sig(unit)\nrun s! | when s(x) do 0",
        "def Omega() = Omega()\nrun Omega()",
    ]
    for src in sources:
        typed, u, _ = compile_src(src)
        imm = suspends(typed.program, IMMEDIATE, typed.defs, u)
        weak = suspends(typed.program, WEAK, typed.defs, u)
        lab = suspends(typed.program, LABELLED, typed.defs, u)
        assert (not imm or weak) and (not weak or lab), src


# ---------------------------------------------------------------------------
# commitments
# ---------------------------------------------------------------------------


def test_commits_on_emission():
    typed, u, _ = compile_src("signal s : sig(unit)\nrun s!")
    assert commits(typed.program, signal(typed, "s"), typed.defs, u)


def test_no_commit_under_restriction():
    typed, u, _ = compile_src("signal s : sig(unit)\nrun new t : sig(unit) in t!")
    assert not commits(typed.program, signal(typed, "s"), typed.defs, u)
    inner = typed.program.binder
    assert not commits(typed.program, inner, typed.defs, u)


def test_choice_commits_immediately_only_on_unguarded():
    # P = s1! | (s2! (+) s3!) commits on s1 but not (yet) on s2/s3
    (p,), defs, u = merge_sources(DECLS + "run s1! | (s2! (+) s3!)")
    names = {n.text: n for n in __import__("spical.syntax", fromlist=["free_names"]).free_names(p)}
    assert commits(p, names["s1"], defs, u)
    assert not commits(p, names["s2"], defs, u)
    assert not commits(p, names["s3"], defs, u)


# ---------------------------------------------------------------------------
# labelled bisimulation: the discussion examples
# ---------------------------------------------------------------------------


def test_input_prefix_on_silent_signal_equals_nil():
    # there is no reason to distinguish s.0,0 from 0
    (p, q), defs, u = merge_sources(
        "signal s : sig(unit)\nrun when s(x) do 0",
        "signal s : sig(unit)\nrun 0",
    )
    verdict = labelled_bisim(p, q, defs, u)
    assert verdict.equivalent


def test_choice_association_distinguished_by_l1():
    (p, q), defs, u = merge_sources(
        DECLS + "run (s1! (+) s2!) (+) s3!",
        DECLS + "run s1! (+) (s2! (+) s3!)",
    )
    verdict = labelled_bisim(p, q, defs, u)
    assert verdict.inequivalent


def test_non_lsuspending_programs_are_equivalent():
    (p, q), defs, u = merge_sources(
        "signal s : sig(unit)\ndef Omega() = Omega()\nrun Omega()",
        "signal s : sig(unit)\ndef Omega() = Omega()\nrun s! | Omega()",
    )
    verdict = labelled_bisim(p, q, defs, u)
    assert verdict.equivalent


# ---------------------------------------------------------------------------
# the strict-inclusion counterexamples
# ---------------------------------------------------------------------------

PAIR_A_P = DECLS + "run s1! | (s2! (+) s3!)"
PAIR_A_Q = DECLS + "run (s1! | s2!) (+) (s1! | s3!)"


def test_commitment_pair_equivalent_under_immediate():
    (p, q), defs, u = merge_sources(PAIR_A_P, PAIR_A_Q)
    verdict = labelled_bisim(p, q, defs, u, susp=IMMEDIATE)
    assert verdict.equivalent


def test_commitment_pair_inequivalent_under_weak():
    (p, q), defs, u = merge_sources(PAIR_A_P, PAIR_A_Q)
    verdict = labelled_bisim(p, q, defs, u, susp=WEAK)
    assert verdict.inequivalent
    assert any(step["clause"] in ("L2", "B2") for step in verdict.play)


def test_commitment_pair_inequivalent_under_weak_barbed():
    (p, q), defs, u = merge_sources(PAIR_A_P, PAIR_A_Q)
    verdict = barbed_bisim(p, q, defs, u, susp=WEAK)
    assert verdict.inequivalent
    assert any(step["clause"] == "B2" for step in verdict.play)


# The extrusion-gated pair: P1/P2 with the looping reader Q.
PAIR_B_DECLS = """
signal s : sig(list(sig(list(unit))))
signal s1 : sig(unit)
signal s2 : sig(unit)
def Omega() = Omega()
"""

PAIR_B_P1 = PAIR_B_DECLS + """
run new t : sig(list(unit)), tp : sig(list(unit)) in
    ( s![t; tp]
    | (when t do s1! (+) when t do s2!)
    | (when tp(x) do (case x of [] -> 0 else Omega()) | tp![*])
    )
"""

PAIR_B_P2 = PAIR_B_DECLS + """
run new t : sig(list(unit)), tp : sig(list(unit)) in
    ( ( (s![t; tp] | when t do s1!) (+) (s![t; tp] | when t do s2!) )
    | (when tp(x) do (case x of [] -> 0 else Omega()) | tp![*])
    )
"""


def test_extrusion_pair_suspension_profile():
    (p1, p2), defs, u = merge_sources(PAIR_B_P1, PAIR_B_P2)
    for p in (p1, p2):
        assert suspends(p, LABELLED, defs, u, bound=20000) is True
        assert suspends(p, WEAK, defs, u, bound=20000) is False


def test_extrusion_pair_equivalent_under_weak():
    (p1, p2), defs, u = merge_sources(PAIR_B_P1, PAIR_B_P2)
    verdict = labelled_bisim(p1, p2, defs, u, susp=WEAK)
    assert verdict.equivalent


def test_extrusion_pair_inequivalent_under_labelled():
    (p1, p2), defs, u = merge_sources(PAIR_B_P1, PAIR_B_P2)
    verdict = labelled_bisim(p1, p2, defs, u, susp=LABELLED,
                             bounds=Bounds(pair_bound=60000))
    assert verdict.inequivalent


# barbed: s.s1! vs s.s2!, then composed with s!
BARBED_P = DECLS + "signal s : sig(unit)\nrun when s do s1!"
BARBED_Q = DECLS + "signal s : sig(unit)\nrun when s do s2!"


def test_barbed_pair_equivalent():
    (p, q), defs, u = merge_sources(BARBED_P, BARBED_Q)
    verdict = barbed_bisim(p, q, defs, u)
    assert verdict.equivalent


def test_barbed_pair_composed_with_emission_inequivalent():
    (p, q), defs, u = merge_sources(BARBED_P, BARBED_Q)
    s = next(n for n in __import__("spical.syntax", fromlist=["f"]).free_names(p)
             if n.text == "s")
    verdict = barbed_bisim(Par(p, Emit(s, UNIT)), Par(q, Emit(s, UNIT)), defs, u)
    assert verdict.inequivalent


def test_congruence_probe_reproduces_parallel_failure():
    # composing with R makes the weak-suspension variant distinguishable
    src_r = PAIR_B_DECLS + "signal s3 : sig(unit)\n" + """
run when s(x) do
    (case x of [t; tp] ->
        ((t![] | tp![]) (+) (t![] | tp![] | s3!))
     else 0)
"""
    (p1, p2, r), defs, u = merge_sources(PAIR_B_P1, PAIR_B_P2, src_r)
    base = labelled_bisim(p1, p2, defs, u, susp=WEAK)
    assert base.equivalent
    report = congruence_probe(
        p1, p2, [[("par", r)]], defs, u,
        bounds=Bounds(pair_bound=60000), susp=WEAK)
    assert report["results"][0]["verdict"] == "inequivalent"
    # under the weak variant this is expected (not an alarm)
    assert report["alarms"] == 0


# ---------------------------------------------------------------------------
# the end-of-instant context pair
# ---------------------------------------------------------------------------

L4_DECLS = """
signal s1 : sig(unit)
signal s2 : sig(unit)
signal s3 : sig(unit)
def A(l : list(unit)) = case l of [] -> 0 else s3!
"""


def test_l4_pair_distinguished_by_emission_context():
    (p, q), defs, u = merge_sources(
        L4_DECLS + "run when s1 do 0 else A(!s2)",
        L4_DECLS + "run when s1 do 0 else A([])",
    )
    verdict = labelled_bisim(p, q, defs, u)
    assert verdict.inequivalent
    assert any("s2!" in step["action"] and step["clause"] == "L4"
               for step in verdict.play)


def test_l4_pair_equivalent_with_empty_contexts_only():
    (p, q), defs, u = merge_sources(
        L4_DECLS + "run when s1 do 0 else A(!s2)",
        L4_DECLS + "run when s1 do 0 else A([])",
    )
    verdict = labelled_bisim(p, q, defs, u, l4_contexts="empty")
    assert verdict.equivalent


# ---------------------------------------------------------------------------
# strong bisimulation laws
# ---------------------------------------------------------------------------


def test_strong_laws_on_fixed_program():
    typed, u, _ = compile_src(
        "signal s : sig(unit)\nrun new a : sig(unit) in (s! | when a(x) do s!)"
    )
    p = typed.program
    defs = typed.defs
    assert strong_bisim(Par(p, Nil()), p, defs, u).equivalent
    q1, u2, _ = compile_src("signal t : sig(unit)\nrun t!")
    assert strong_bisim(Par(p, q1.program), Par(q1.program, p), defs, u).equivalent


def test_strong_refines_labelled():
    (p, q), defs, u = merge_sources(
        DECLS + "run s1! | s2!",
        DECLS + "run s2! | s1!",
    )
    assert strong_bisim(p, q, defs, u).equivalent
    assert labelled_bisim(p, q, defs, u).equivalent


def test_strong_distinguishes_weak_equal():
    # one extra internal step is visible strongly, invisible weakly
    (p, q), defs, u = merge_sources(
        DECLS + "run if s1 = s1 then s2! else 0",
        DECLS + "run s2!",
    )
    assert strong_bisim(p, q, defs, u).inequivalent
    assert labelled_bisim(p, q, defs, u).equivalent


def test_injective_renaming_preserves_strong_bisim():
    (p, q), defs, u = merge_sources(
        DECLS + "run s1! | (s2! (+) s3!)",
        DECLS + "run (s2! (+) s3!) | s1!",
    )
    assert strong_bisim(p, q, defs, u).equivalent
    from spical.syntax import free_names
    names = sorted(free_names(p) | free_names(q), key=lambda n: n.uid)
    fresh = {n: fresh_name(n.text + "r", n.ty) for n in names}
    p2, q2 = rename(p, fresh), rename(q, fresh)
    assert strong_bisim(p2, q2, defs, u).equivalent


# ---------------------------------------------------------------------------
# witness construction for L-suspension
# ---------------------------------------------------------------------------


def test_witness_single_input():
    typed, u, _ = compile_src("signal s : sig(unit)\nrun when s(x) do 0")
    w = witness_for_lsuspension(typed.program, typed.defs, u)
    # the trivial case: already suspended, so the witness is 0
    assert w == Nil()


def test_witness_for_input_needing_program():
    # when s(x) do (if s = s then 0 else 0): suspends only after input+tau
    typed, u, _ = compile_src(
        "signal s : sig(unit)\ndef Omega() = Omega()\n"
        "run when s(x) do 0 | Omega()"
    )
    # Omega() | present: never suspends on tau alone; labelled can't help
    assert suspends(typed.program, LABELLED, typed.defs, u) is False
    with pytest.raises(ValueError):
        witness_for_lsuspension(typed.program, typed.defs, u, bound=500)


def test_witness_bound_output_case():
    # p = new t in s!t : the witness is a receiver s(t).0
    typed, u, _ = compile_src(
        "signal s : sig(sig(unit))\nsignal go : sig(unit)\n"
        "run when go(x) do (new t : sig(unit) in s!t)"
    )
    # force a path: input go, then suspension (emission only)
    w = witness_for_lsuspension(typed.program, typed.defs, u)
    assert suspends(Par(typed.program, w), WEAK, typed.defs, u) is True


def test_witness_random_paths_execute():
    rng = random.Random(11)
    from spical.randprog import random_program, GenConfig
    validated = 0
    for _ in range(40):
        p, defs, sig_types = random_program(
            rng, cfg=GenConfig(depth=2, max_par=2, max_new=1))
        u = ValueUniverse({}, 2, 1)
        try:
            if not suspends(p, LABELLED, defs, u, bound=800):
                continue
        except Exception:
            continue
        w = witness_for_lsuspension(p, defs, u, bound=800)
        assert suspends(Par(p, w), WEAK, defs, u, bound=2000) is True
        validated += 1
    assert validated >= 10


# ---------------------------------------------------------------------------
# emission context enumeration
# ---------------------------------------------------------------------------


def test_emission_contexts_include_empty_and_are_finite():
    (p, q), defs, u = merge_sources(
        L4_DECLS + "run when s1 do 0 else A(!s2)",
        L4_DECLS + "run when s1 do 0 else A([])",
    )
    contexts, capped = emission_contexts(p, q, u, cap=64)
    assert () in contexts
    assert len(contexts) <= 64
    texts = {tuple(s.text for s, _ in ctx) for ctx in contexts}
    assert ("s2",) in texts


# ---------------------------------------------------------------------------
# checker sanity: reflexivity, symmetry on random programs
# ---------------------------------------------------------------------------


def test_reflexivity_and_symmetry_random():
    rng = random.Random(3)
    from spical.randprog import random_program, GenConfig
    for i in range(8):
        p, defs, _ = random_program(rng, cfg=GenConfig(depth=2, max_par=2,
                                                       max_new=1))
        q, _, _ = random_program(rng, cfg=GenConfig(depth=2, max_par=2,
                                                    max_new=1))
        u = ValueUniverse({}, 2, 1)
        assert labelled_bisim(p, p, defs, u).equivalent
        v1 = labelled_bisim(p, q, defs, u, bounds=Bounds(pair_bound=4000))
        v2 = labelled_bisim(q, p, defs, u, bounds=Bounds(pair_bound=4000))
        assert v1.kind == v2.kind, (i, v1.kind, v2.kind)
