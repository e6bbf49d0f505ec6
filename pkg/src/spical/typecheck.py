"""First-order typing: unit, sig(t), list(t) and declared inductive types.

Definitions are monomorphic; unannotated parameters are resolved at the
first call site and later calls must agree.  The checker rebuilds the tree
so that every `Name` carries its type, which downstream phases (value
universe generation, subject-reduction checks) rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .syntax import (
    Call,
    Ctor,
    Definition,
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
)


class Type:
    __slots__ = ()


@dataclass(frozen=True)
class Unit(Type):
    def __str__(self) -> str:
        return "unit"


@dataclass(frozen=True)
class SigT(Type):
    elem: Type

    def __str__(self) -> str:
        return f"sig({self.elem})"


@dataclass(frozen=True)
class ListT(Type):
    elem: Type

    def __str__(self) -> str:
        return f"list({self.elem})"


@dataclass(frozen=True)
class DeclT(Type):
    name: str

    def __str__(self) -> str:
        return self.name


UNIT_T = Unit()


@dataclass(frozen=True)
class CtorSig:
    sym: str
    arg_types: tuple  # tuple[Type, ...]
    result: Type


class SpiTypeError(Exception):
    pass


@dataclass(frozen=True)
class TypedFile:
    """A checked program: every Name in `program` and `defs` carries its type."""

    program: Program
    defs: Definitions
    signal_types: dict  # Name -> Type, free signals of the entry program
    ctor_sigs: dict  # sym -> CtorSig (declared constructors only)
    param_types: dict  # ident -> tuple[Type, ...]


def name_type(n: Name) -> Type:
    if n.ty is None:
        raise SpiTypeError(f"name {n!r} has no assigned type")
    return n.ty  # type: ignore[return-value]


def sig_elem(ty: Type, who: str) -> Type:
    if not isinstance(ty, SigT):
        raise SpiTypeError(f"{who} has type {ty}, expected a signal type")
    return ty.elem


@dataclass
class _Checker:
    ctor_sigs: dict
    raw_defs: Definitions
    # file-declared signals are global constants, visible in definition bodies
    global_env: dict = field(default_factory=dict)
    param_types: dict = field(default_factory=dict)
    checked_defs: dict = field(default_factory=dict)
    in_progress: set = field(default_factory=set)

    # -- terms ------------------------------------------------------------

    def synth_term(self, t: Term, env: dict) -> Type | None:
        """Best-effort type synthesis; None for ambiguous empty lists."""
        if isinstance(t, Var):
            ty = env.get(t.name)
            if ty is None:
                raise SpiTypeError(f"unbound name {t.name.text}")
            return ty
        if isinstance(t, Deref):
            ty = env.get(t.signal)
            if ty is None:
                raise SpiTypeError(f"unbound signal !{t.signal.text}")
            return ListT(sig_elem(ty, f"!{t.signal.text}"))
        if isinstance(t, Ctor):
            if t.sym == "*":
                return UNIT_T
            if t.sym == "nil":
                return None
            if t.sym == "cons":
                head, tail = t.args
                h = self.synth_term(head, env)
                if h is not None:
                    self.check_term(tail, ListT(h), env)
                    return ListT(h)
                tl = self.synth_term(tail, env)
                if tl is not None:
                    self.check_term(head, tl.elem, env)  # type: ignore[union-attr]
                    return tl
                return None
            sig = self.ctor_sigs.get(t.sym)
            if sig is None:
                raise SpiTypeError(f"unknown constructor {t.sym}")
            if len(t.args) != len(sig.arg_types):
                raise SpiTypeError(
                    f"constructor {t.sym} expects {len(sig.arg_types)} arguments"
                )
            for a, ty in zip(t.args, sig.arg_types):
                self.check_term(a, ty, env)
            return sig.result

    def check_term(self, t: Term, expected: Type, env: dict):
        if isinstance(t, Ctor):
            if t.sym == "nil":
                if not isinstance(expected, ListT):
                    raise SpiTypeError(f"[] used at non-list type {expected}")
                if t.args:
                    raise SpiTypeError("nil takes no arguments")
                return
            if t.sym == "cons":
                if not isinstance(expected, ListT):
                    raise SpiTypeError(f"cons used at non-list type {expected}")
                head, tail = t.args
                self.check_term(head, expected.elem, env)
                self.check_term(tail, expected, env)
                return
        got = self.synth_term(t, env)
        if got is not None and got != expected:
            raise SpiTypeError(f"expected {expected}, found {got}")

    def annotate_term(self, t: Term, env: dict) -> Term:
        if isinstance(t, Var):
            return Var(t.name.with_type(env[t.name]))
        if isinstance(t, Deref):
            return Deref(t.signal.with_type(env[t.signal]))
        return Ctor(t.sym, tuple(self.annotate_term(a, env) for a in t.args))

    # -- patterns ----------------------------------------------------------

    def check_pattern(self, pat: Term, expected: Type | None, env: dict) -> dict:
        """Extend env with pattern-variable typings; nonlinear vars must agree."""
        local: dict = {}

        def walk(t: Term, ty: Type | None):
            if isinstance(t, Var):
                if ty is None:
                    raise SpiTypeError(
                        f"cannot type pattern variable {t.name.text}; "
                        "annotate the scrutinee"
                    )
                prev = local.get(t.name)
                if prev is not None and prev != ty:
                    raise SpiTypeError(
                        f"pattern variable {t.name.text} used at {prev} and {ty}"
                    )
                local[t.name] = ty
                return
            if isinstance(t, Deref):
                raise SpiTypeError("dereference not allowed in patterns")
            if t.sym == "*":
                if ty is not None and ty != UNIT_T:
                    raise SpiTypeError(f"* used at type {ty}")
                return
            if t.sym == "nil":
                if ty is not None and not isinstance(ty, ListT):
                    raise SpiTypeError(f"[] used at non-list type {ty}")
                return
            if t.sym == "cons":
                if ty is not None and not isinstance(ty, ListT):
                    raise SpiTypeError(f"cons used at non-list type {ty}")
                elem = ty.elem if isinstance(ty, ListT) else None
                walk(t.args[0], elem)
                walk(t.args[1], ty)
                return
            sig = self.ctor_sigs.get(t.sym)
            if sig is None:
                raise SpiTypeError(f"unknown constructor {t.sym}")
            if ty is not None and ty != sig.result:
                raise SpiTypeError(f"constructor {t.sym} used at type {ty}")
            if len(t.args) != len(sig.arg_types):
                raise SpiTypeError(
                    f"constructor {t.sym} expects {len(sig.arg_types)} arguments"
                )
            for a, aty in zip(t.args, sig.arg_types):
                walk(a, aty)

        walk(pat, expected)
        out = dict(env)
        out.update(local)
        return out

    # -- programs ----------------------------------------------------------

    def check_program(self, p: Program, env: dict) -> Program:
        if isinstance(p, Nil):
            return p
        if isinstance(p, Call):
            return self.check_call(p, env)
        if isinstance(p, Emit):
            sty = env.get(p.signal)
            if sty is None:
                raise SpiTypeError(f"unbound signal {p.signal.text}")
            elem = sig_elem(sty, p.signal.text)
            self.check_term(p.payload, elem, env)
            return Emit(p.signal.with_type(sty), self.annotate_term(p.payload, env))
        if isinstance(p, Present):
            sty = env.get(p.signal)
            if sty is None:
                raise SpiTypeError(f"unbound signal {p.signal.text}")
            elem = sig_elem(sty, p.signal.text)
            if p.binder.ty is not None and p.binder.ty != elem:
                raise SpiTypeError(
                    f"binder {p.binder.text} annotated {p.binder.ty}, "
                    f"signal carries {elem}"
                )
            binder = p.binder.with_type(elem)
            inner = dict(env)
            inner[binder] = elem
            return Present(
                p.signal.with_type(sty),
                binder,
                self.check_program(p.body, inner),
                self.check_program(p.alt, env),
            )
        if isinstance(p, MatchSig):
            lty = env.get(p.lhs)
            rty = env.get(p.rhs)
            if lty is None or rty is None:
                missing = p.lhs.text if lty is None else p.rhs.text
                raise SpiTypeError(f"unbound signal {missing}")
            if not isinstance(lty, SigT) or not isinstance(rty, SigT):
                raise SpiTypeError("signal matching compares non-signals")
            if lty != rty:
                raise SpiTypeError(f"signal matching at {lty} vs {rty}")
            return MatchSig(
                p.lhs.with_type(lty),
                p.rhs.with_type(rty),
                self.check_program(p.then, env),
                self.check_program(p.orelse, env),
            )
        if isinstance(p, MatchVal):
            scrty = self.synth_term(p.scrutinee, env)
            inner = self.check_pattern(p.pattern, scrty, env)
            pat_env = inner
            return MatchVal(
                self.annotate_term(p.scrutinee, env),
                self.annotate_term(p.pattern, pat_env),
                self.check_program(p.then, inner),
                self.check_program(p.orelse, env),
            )
        if isinstance(p, New):
            ty = p.binder.ty
            if ty is None:
                ty = self.infer_new_type(p.binder, p.body, env)
            if not isinstance(ty, SigT):
                raise SpiTypeError(
                    f"new binds {p.binder.text} at non-signal type {ty}"
                )
            binder = p.binder.with_type(ty)
            inner = dict(env)
            inner[binder] = ty
            return New(binder, self.check_program(p.body, inner))
        if isinstance(p, Par):
            return Par(self.check_program(p.left, env), self.check_program(p.right, env))
        raise TypeError(p)

    def check_call(self, p: Call, env: dict) -> Call:
        if p.ident not in self.raw_defs:
            raise SpiTypeError(f"call to undefined {p.ident}")
        definition = self.raw_defs[p.ident]
        if len(p.args) != len(definition.params):
            raise SpiTypeError(
                f"{p.ident} expects {len(definition.params)} arguments, "
                f"got {len(p.args)}"
            )
        arg_types = [self.synth_term(a, env) for a in p.args]
        declared = self.param_types.get(p.ident)
        if declared is None:
            declared = tuple(param.ty for param in definition.params)
            if any(d is None for d in declared):
                merged = []
                for d, got, param in zip(declared, arg_types, definition.params):
                    if d is None:
                        d = got
                    if d is None:
                        raise SpiTypeError(
                            f"cannot infer type of parameter {param.text} "
                            f"of {p.ident}; annotate it"
                        )
                    merged.append(d)
                declared = tuple(merged)
            self.param_types[p.ident] = declared
            self.check_definition(p.ident, declared)
        for got, want in zip(arg_types, declared):
            if got is not None and got != want:
                raise SpiTypeError(
                    f"argument of {p.ident}: expected {want}, found {got}"
                )
        for a, want in zip(p.args, declared):
            self.check_term(a, want, env)
        return Call(p.ident, tuple(self.annotate_term(a, env) for a in p.args))

    def check_definition(self, ident: str, ptypes: tuple):
        if ident in self.checked_defs or ident in self.in_progress:
            return
        self.in_progress.add(ident)
        try:
            definition = self.raw_defs[ident]
            params = tuple(
                param.with_type(ty) for param, ty in zip(definition.params, ptypes)
            )
            env = dict(self.global_env)
            env.update({param: param.ty for param in params})
            body = self.check_program(definition.body, env)
            self.checked_defs[ident] = Definition(params, body)
        finally:
            self.in_progress.discard(ident)

    def infer_new_type(self, binder: Name, body: Program, env: dict) -> Type:
        """Local inference for an unannotated restriction binder."""
        found: list[Type] = []

        def try_term_position(t: Term, expected: Type | None):
            # Look for the binder inside a term with a known expected type.
            if isinstance(t, Var):
                if t.name == binder and expected is not None:
                    found.append(expected)
                return
            if isinstance(t, Deref):
                return
            if t.sym == "cons" and isinstance(expected, ListT):
                try_term_position(t.args[0], expected.elem)
                try_term_position(t.args[1], expected)
                return
            sig = self.ctor_sigs.get(t.sym)
            if sig is not None:
                for a, aty in zip(t.args, sig.arg_types):
                    try_term_position(a, aty)

        def scan(q: Program, env: dict):
            if found:
                return
            if isinstance(q, Emit):
                if q.signal == binder:
                    try:
                        ty = self.synth_term(q.payload, env)
                    except SpiTypeError:
                        ty = None
                    if ty is not None:
                        found.append(SigT(ty))
                else:
                    sty = env.get(q.signal)
                    if isinstance(sty, SigT):
                        try_term_position(q.payload, sty.elem)
            elif isinstance(q, Present):
                if q.signal == binder and q.binder.ty is not None:
                    found.append(SigT(q.binder.ty))
                scan(q.body, env)
                scan(q.alt, env)
            elif isinstance(q, Call):
                declared = self.param_types.get(q.ident)
                if declared is None and q.ident in self.raw_defs:
                    declared = tuple(
                        param.ty for param in self.raw_defs[q.ident].params
                    )
                if declared:
                    for a, want in zip(q.args, declared):
                        if want is not None:
                            try_term_position(a, want)
            elif isinstance(q, (MatchSig, MatchVal)):
                scan(q.then, env)
                scan(q.orelse, env)
            elif isinstance(q, New):
                scan(q.body, env)
            elif isinstance(q, Par):
                scan(q.left, env)
                scan(q.right, env)

        scan(body, env)
        if not found:
            raise SpiTypeError(
                f"cannot infer the type of new signal {binder.text}; annotate it"
            )
        return found[0]


def check(
    program: Program,
    defs: Definitions,
    signal_types: dict,
    ctor_sigs: dict | None = None,
) -> TypedFile:
    """Typecheck a program against its definitions and free-signal typing."""
    env = {name: ty for name, ty in signal_types.items()}
    checker = _Checker(dict(ctor_sigs or {}), defs, dict(env))
    typed_signals = {name.with_type(ty): ty for name, ty in signal_types.items()}
    typed_program = checker.check_program(program, env)
    # Definitions with full annotations are checked even if never called.
    for ident in defs.idents():
        if ident in checker.param_types:
            continue
        ptypes = tuple(param.ty for param in defs[ident].params)
        if all(t is not None for t in ptypes):
            checker.param_types[ident] = ptypes
            checker.check_definition(ident, ptypes)
    typed_defs = Definitions(dict(checker.checked_defs))
    return TypedFile(
        typed_program,
        typed_defs,
        typed_signals,
        dict(ctor_sigs or {}),
        dict(checker.param_types),
    )


def check_state(
    p: Program,
    typed: TypedFile,
) -> None:
    """Re-typecheck a runtime state whose names all carry their types.

    Used by subject-reduction tests: raises SpiTypeError on any violation.
    """
    checker = _Checker(dict(typed.ctor_sigs), typed.defs, dict(typed.signal_types))
    checker.param_types = dict(typed.param_types)
    checker.checked_defs = dict(typed.defs.table)
    from .syntax import free_names

    env = dict(typed.signal_types)
    for n in free_names(p):
        if n.ty is None:
            raise SpiTypeError(f"free name {n!r} carries no type")
        env[n] = n.ty
    checker.check_program(p, env)
