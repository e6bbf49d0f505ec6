"""Command-line front end.

Exit codes: 0 success / Equivalent, 1 definite negative verdict,
2 bound exceeded or suspected divergence, 3 usage, parse or type errors.
All randomized behaviour (scheduling, context sampling) derives from the
single --seed flag, so identical invocations produce identical output.
"""

from __future__ import annotations

import argparse
import json
import random
import sys

from . import equivalence
from .equivalence import Bounds, congruence_probe, suspends
from .eoi import EoiError, next_instants
from .interpreter import RunConfig, run, traces_to_json
from .lts import BoundExceeded, LtsError, ValueUniverse, graph_dump
from .randprog import sample_static_context
from .surface import DesugarError, ParseError, desugar, parse, print_file, print_program
from .syntax import Definition, Definitions, alpha_equal, rename, substitute
from .typecheck import SpiTypeError, check

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_BOUND = 2
EXIT_USAGE = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e}")


def load_file(path: str):
    """Parse, desugar and typecheck one .spi file."""
    try:
        sf = desugar(parse(_read(path)))
        typed = check(sf.program, sf.defs, sf.signal_types, sf.ctor_sigs)
    except (ParseError, DesugarError) as e:
        raise CliError(f"{path}: {e}")
    except SpiTypeError as e:
        raise CliError(f"{path}: type error: {e}")
    return typed


def load_pair(path_a: str, path_b: str):
    """Load two files for comparison, identifying signals by name."""
    a = load_file(path_a)
    b = load_file(path_b)
    by_text = {n.text: n for n in a.signal_types}
    mapping = {}
    for n, ty in b.signal_types.items():
        if n.text in by_text:
            if by_text[n.text].ty != ty:
                raise CliError(
                    f"signal {n.text} declared at different types in "
                    f"{path_a} and {path_b}")
            mapping[n] = by_text[n.text]
    b_program = rename(b.program, mapping)
    signal_types = dict(a.signal_types)
    for n, ty in b.signal_types.items():
        signal_types[mapping.get(n, n)] = ty
    defs = dict(a.defs.table)
    for ident, definition in b.defs.table.items():
        body = rename(definition.body, mapping)
        renamed = Definition(definition.params, body)
        if ident in defs:
            if not (len(defs[ident].params) == len(renamed.params)
                    and alpha_equal(defs[ident].body, renamed.body)):
                raise CliError(
                    f"definition {ident} differs between {path_a} and {path_b}")
        else:
            defs[ident] = renamed
    ctors = dict(a.ctor_sigs)
    for sym, sig in b.ctor_sigs.items():
        if sym in ctors and ctors[sym] != sig:
            raise CliError(f"constructor {sym} declared differently")
        ctors[sym] = sig
    return a, b_program, Definitions(defs), signal_types, ctors


def _universe(args, ctor_sigs) -> ValueUniverse:
    return ValueUniverse(dict(ctor_sigs), args.universe_depth, args.fresh_quota)


def _bounds(args) -> Bounds:
    return Bounds(state_bound=args.state_bound)


def _emit(payload, args) -> None:
    if getattr(args, "json", False):
        sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    else:
        _render_human(payload)


def _render_human(payload) -> None:
    if isinstance(payload, dict):
        for k in sorted(payload):
            v = payload[k]
            if isinstance(v, (dict, list)):
                sys.stdout.write(f"{k}: {json.dumps(v, sort_keys=True)}\n")
            else:
                sys.stdout.write(f"{k}: {v}\n")
    else:
        sys.stdout.write(str(payload) + "\n")


def _add_universe_flags(sp):
    sp.add_argument("--universe-depth", type=int, default=2,
                    help="constructor depth bound for input values")
    sp.add_argument("--fresh-quota", type=int, default=1,
                    help="fresh names offered per signal type on inputs")
    sp.add_argument("--state-bound", type=int, default=4000,
                    help="state budget for closures and searches")
    sp.add_argument("--json", action="store_true", help="machine output")
    sp.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spical",
        description="synchronous pi-calculus workbench",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("parse", help="parse and pretty-print a file")
    sp.add_argument("file")
    sp.add_argument("--desugar", action="store_true")
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("check-types", help="typecheck a file")
    sp.add_argument("file")
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("run", help="multi-instant execution")
    sp.add_argument("file")
    sp.add_argument("--max-instants", type=int, default=1)
    sp.add_argument("--tau-budget", type=int, default=2000)
    sp.add_argument("--policy", choices=["first", "random", "enumerate"],
                    default="first")
    sp.add_argument("--enumerate", action="store_true",
                    help="shorthand for --policy enumerate")
    sp.add_argument("--script", help="JSON emission script file")
    _add_universe_flags(sp)

    sp = sub.add_parser("lts-dump", help="dump the explored transition graph")
    sp.add_argument("file")
    _add_universe_flags(sp)

    sp = sub.add_parser("next-instants", help="instant-advance successors")
    sp.add_argument("file")
    _add_universe_flags(sp)

    sp = sub.add_parser("suspends", help="suspension predicates")
    sp.add_argument("file")
    sp.add_argument("--susp", choices=list(equivalence.SUSPENSION_KINDS),
                    default="labelled")
    _add_universe_flags(sp)

    sp = sub.add_parser("check", help="bisimulation equivalence checking")
    sp.add_argument("relation", choices=["strong", "labelled", "barbed"])
    sp.add_argument("file_a")
    sp.add_argument("file_b")
    sp.add_argument("--susp", choices=list(equivalence.SUSPENSION_KINDS),
                    default="labelled")
    sp.add_argument("--l4-contexts", choices=["full", "empty"], default="full")
    sp.add_argument("--jobs", type=int, default=1)
    _add_universe_flags(sp)

    sp = sub.add_parser("probe-congruence",
                        help="re-check an equivalent pair under sampled "
                             "static contexts")
    sp.add_argument("file_a")
    sp.add_argument("file_b")
    sp.add_argument("--contexts", type=int, default=20)
    sp.add_argument("--susp", choices=list(equivalence.SUSPENSION_KINDS),
                    default="labelled")
    sp.add_argument("--jobs", type=int, default=1)
    _add_universe_flags(sp)

    return ap


def _load_script(path: str | None, typed):
    if not path:
        return ()
    data = json.loads(_read(path))
    by_text = {n.text: n for n in typed.signal_types}
    script = []
    for instant in data:
        emissions = []
        for entry in instant:
            name = by_text.get(entry["signal"])
            if name is None:
                raise CliError(f"script signal {entry['signal']} not declared")
            value = _parse_value(entry.get("value", "*"), typed, name)
            emissions.append((name, value))
        script.append(tuple(emissions))
    return tuple(script)


def _parse_value(text: str, typed, signal):
    from .surface import _Parser, lex

    parser = _Parser(lex(text))
    parser.ctor_sigs = dict(typed.ctor_sigs)

    class _Env:
        def lookup(self, t):
            for n in typed.signal_types:
                if n.text == t:
                    return n
            return None

    term = parser.parse_expr(_Env())
    from .typecheck import sig_elem, SpiTypeError as TE
    try:
        elem = sig_elem(signal.ty, signal.text)
        from .typecheck import _Checker
        _Checker(dict(typed.ctor_sigs), typed.defs).check_term(
            term, elem, dict(typed.signal_types))
    except TE as e:
        raise CliError(f"script value {text!r}: {e}")
    return term


def cmd_parse(args) -> int:
    try:
        sf = parse(_read(args.file))
        if args.desugar:
            sf = desugar(sf)
    except (ParseError, DesugarError) as e:
        sys.stderr.write(f"{args.file}: {e}\n")
        return EXIT_USAGE
    text = print_file(sf)
    if args.json:
        _emit({"version": 1, "file": text}, args)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check_types(args) -> int:
    typed = load_file(args.file)
    _emit({
        "version": 1,
        "ok": True,
        "signals": {n.text: str(t) for n, t in typed.signal_types.items()},
        "definitions": {
            ident: [str(t) for t in types]
            for ident, types in typed.param_types.items()
        },
    }, args)
    return EXIT_OK


def cmd_run(args) -> int:
    typed = load_file(args.file)
    policy = "enumerate" if args.enumerate else args.policy
    cfg = RunConfig(
        max_instants=args.max_instants,
        tau_budget=args.tau_budget,
        policy=policy,
        seed=args.seed,
        script=_load_script(args.script, typed),
    )
    u = _universe(args, typed.ctor_sigs)
    traces = run(typed.program, typed.defs, u, cfg)
    sys.stdout.write(traces_to_json(traces) + "\n")
    if any(t.divergence_suspected for t in traces):
        return EXIT_BOUND
    return EXIT_OK


def cmd_lts_dump(args) -> int:
    typed = load_file(args.file)
    u = _universe(args, typed.ctor_sigs)
    try:
        dump = graph_dump(typed.program, typed.defs, u, args.state_bound)
    except BoundExceeded as e:
        sys.stderr.write(f"bound exceeded: {e}\n")
        return EXIT_BOUND
    sys.stdout.write(json.dumps(dump, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_next_instants(args) -> int:
    typed = load_file(args.file)
    try:
        succs = next_instants(typed.program, typed.defs)
    except EoiError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    _emit({
        "version": 1,
        "successors": [print_program(s) for s in succs],
    }, args)
    return EXIT_OK


def cmd_suspends(args) -> int:
    typed = load_file(args.file)
    u = _universe(args, typed.ctor_sigs)
    try:
        result = suspends(typed.program, args.susp, typed.defs, u,
                          args.state_bound)
    except BoundExceeded as e:
        sys.stderr.write(f"bound exceeded: {e}\n")
        return EXIT_BOUND
    _emit({"version": 1, "suspends": result, "kind": args.susp}, args)
    return EXIT_OK if result else EXIT_NEGATIVE


def cmd_check(args) -> int:
    a, b_program, defs, signal_types, ctors = load_pair(args.file_a, args.file_b)
    typed = check(a.program, defs, signal_types, ctors)
    typed_b = check(b_program, defs, signal_types, ctors)
    u = _universe(args, ctors)
    bounds = _bounds(args)
    if args.relation == "strong":
        verdict = equivalence.strong_bisim(
            typed.program, typed_b.program, typed.defs, u, bounds)
    elif args.relation == "labelled":
        verdict = equivalence.labelled_bisim(
            typed.program, typed_b.program, typed.defs, u, bounds,
            susp=args.susp, l4_contexts=args.l4_contexts)
    else:
        verdict = equivalence.barbed_bisim(
            typed.program, typed_b.program, typed.defs, u, bounds,
            susp=args.susp)
    _emit(verdict.to_json(), args)
    if verdict.kind == "equivalent":
        return EXIT_OK
    if verdict.kind == "inequivalent":
        return EXIT_NEGATIVE
    return EXIT_BOUND


def cmd_probe_congruence(args) -> int:
    a, b_program, defs, signal_types, ctors = load_pair(args.file_a, args.file_b)
    typed = check(a.program, defs, signal_types, ctors)
    typed_b = check(b_program, defs, signal_types, ctors)
    u = _universe(args, ctors)
    bounds = _bounds(args)
    rng = random.Random(args.seed)
    signals = sorted(typed.signal_types, key=lambda n: n.uid)
    contexts = [sample_static_context(rng, signals) for _ in range(args.contexts)]
    report = congruence_probe(typed.program, typed_b.program, contexts,
                              typed.defs, u, bounds, susp=args.susp)
    _emit(report, args)
    return EXIT_OK if report["alarms"] == 0 else EXIT_NEGATIVE


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    handlers = {
        "parse": cmd_parse,
        "check-types": cmd_check_types,
        "run": cmd_run,
        "lts-dump": cmd_lts_dump,
        "next-instants": cmd_next_instants,
        "suspends": cmd_suspends,
        "check": cmd_check,
        "probe-congruence": cmd_probe_congruence,
    }
    try:
        return handlers[args.command](args)
    except CliError as e:
        sys.stderr.write(f"error: {e}\n")
        return e.code
    except BoundExceeded as e:
        sys.stderr.write(f"bound exceeded: {e}\n")
        return EXIT_BOUND
    except (LtsError, EoiError, SpiTypeError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
