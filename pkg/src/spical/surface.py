"""Concrete `.spi` syntax: lexer, recursive-descent parser, printer, desugarer.

The surface language adds derived operators on top of the core syntax:
internal choice `(+)`, `pause.K`, `await s(x).P`, the freshness-checking
match `casefresh`, bare emissions `s!` and binderless `when s do ...`.
`desugar` eliminates all of them, producing core nodes only.

Grammar sketch (`|` is lowest precedence, `(+)` binds tighter; prefix
operators bind tighter still, so `new s in P | Q` restricts only `P`):

    file   := (constructor | signal | def)* "run" proc
    ctor   := "constructor" IDENT "/" NAT ":" ctortype
    signal := "signal" IDENT ":" type
    def    := "def" IDENT "(" params? ")" "=" proc
    proc   := choice ("|" choice)*
    choice := prefix ("(+)" prefix)*
    prefix := "when" IDENT ["(" IDENT [":" type] ")"] "do" prefix ["else" cont]
            | "await" IDENT "(" IDENT [":" type] ")" "." prefix
            | "if" IDENT "=" IDENT "then" prefix "else" prefix
            | "case" expr "of" pattern "->" prefix "else" prefix
            | "new" binders "in" prefix
            | "pause" "." cont
            | "casefresh" IDENT "=" ["new" names "in"] expr ["avoid" names]
              "then" prefix
            | "0" | "(" proc ")" | IDENT "(" rexps? ")" | IDENT "!" expr?
    cont   := "0" | IDENT "(" rexps? ")"
    rexp   := "!" IDENT | expr
    expr   := "*" | "[" [expr (";" expr)*] "]" | IDENT ["(" expr,... ")"]
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
    UNIT,
    Var,
    free_names,
    fresh_name,
    list_items,
    list_value,
    par,
    term_names,
)
from .typecheck import CtorSig, DeclT, ListT, SigT, Type, UNIT_T

KEYWORDS = {
    "when", "do", "else", "if", "then", "case", "of", "new", "in", "run",
    "def", "constructor", "signal", "pause", "await", "avoid", "casefresh",
    "unit", "sig", "list",
}


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Sugar nodes (eliminated by desugar).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Choice(Program):
    left: Program
    right: Program


@dataclass(frozen=True)
class Pause(Program):
    cont: Program  # Nil or Call


@dataclass(frozen=True)
class Await(Program):
    signal: Name
    binder: Name
    body: Program


@dataclass(frozen=True)
class FreshMatch(Program):
    """`casefresh x = new s... in v avoid X then P` (freshness-checking match)."""

    scrutinee: Name
    news: tuple  # tuple[Name, ...], bound in value and body
    value: Term
    avoid: tuple  # tuple[Name, ...], free
    body: Program


@dataclass
class SourceFile:
    ctor_sigs: dict  # sym -> CtorSig
    signal_types: dict  # Name -> Type
    defs: Definitions
    program: Program
    ctor_order: list = field(default_factory=list)
    signal_order: list = field(default_factory=list)
    def_order: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Lexer.
# ---------------------------------------------------------------------------

_PUNCT = ["(+)", "->", "(", ")", "[", "]", ",", ";", ":", ".", "|", "!", "=", "/", "*"]


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "nat", punctuation text, or "eof"
    text: str
    line: int
    col: int


def lex(source: str) -> list[Token]:
    tokens = []
    line, col, i = 1, 1, 0
    n = len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        matched = None
        for p in _PUNCT:
            if source.startswith(p, i):
                matched = p
                break
        if matched:
            tokens.append(Token(matched, matched, line, col))
            i += len(matched)
            col += len(matched)
            continue
        if c.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            tokens.append(Token("nat", source[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha():
            j = i
            while j < n and (source[j].isalnum() or source[j] in "_'"):
                j += 1
            text = source[i:j]
            kind = text if text in KEYWORDS else "ident"
            tokens.append(Token(kind, text, line, col))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser.
# ---------------------------------------------------------------------------


class _Scope:
    """Lexically scoped name table (text -> Name)."""

    def __init__(self, parent=None):
        self.parent = parent
        self.table: dict = {}

    def lookup(self, text: str):
        scope = self
        while scope is not None:
            if text in scope.table:
                return scope.table[text]
            scope = scope.parent
        return None

    def bind(self, name: Name):
        self.table[name.text] = name


class _Parser:
    def __init__(self, tokens: list):
        self.tokens = tokens
        self.pos = 0
        self.ctor_sigs: dict = {}
        self.defs: dict = {}
        self.def_idents: set = set()
        self.calls: list = []  # (ident, line, col) validated after parsing

    # -- token plumbing -----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, kind: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"expected {kind!r}, found {tok.text or 'eof'!r}",
                             tok.line, tok.col)
        return self.next()

    def fail(self, message: str):
        tok = self.peek()
        raise ParseError(message, tok.line, tok.col)

    # -- file ---------------------------------------------------------------

    def parse_file(self) -> SourceFile:
        scope = _Scope()
        signal_types: dict = {}
        ctor_order: list = []
        signal_order: list = []
        def_order: list = []
        while self.peek().kind in ("constructor", "signal", "def"):
            kind = self.next().kind
            if kind == "constructor":
                sym_tok = self.expect("ident")
                self.expect("/")
                arity = int(self.expect("nat").text)
                self.expect(":")
                arg_types, result = self.parse_ctor_type(arity)
                if sym_tok.text in self.ctor_sigs or sym_tok.text in ("cons", "nil"):
                    raise ParseError(f"duplicate constructor {sym_tok.text}",
                                     sym_tok.line, sym_tok.col)
                self.ctor_sigs[sym_tok.text] = CtorSig(sym_tok.text, arg_types, result)
                ctor_order.append(sym_tok.text)
            elif kind == "signal":
                name_tok = self.expect("ident")
                self.expect(":")
                ty = self.parse_type()
                if not isinstance(ty, SigT):
                    raise ParseError(f"signal {name_tok.text} must have a sig(..) type",
                                     name_tok.line, name_tok.col)
                if scope.lookup(name_tok.text) is not None:
                    raise ParseError(f"duplicate signal {name_tok.text}",
                                     name_tok.line, name_tok.col)
                name = fresh_name(name_tok.text, ty)
                scope.bind(name)
                signal_types[name] = ty
                signal_order.append(name)
            else:  # def
                ident_tok = self.expect("ident")
                if ident_tok.text in self.def_idents:
                    raise ParseError(f"duplicate definition {ident_tok.text}",
                                     ident_tok.line, ident_tok.col)
                self.def_idents.add(ident_tok.text)
                self.expect("(")
                params = []
                if self.peek().kind != ")":
                    while True:
                        ptok = self.expect("ident")
                        pty = None
                        if self.peek().kind == ":":
                            self.next()
                            pty = self.parse_type()
                        params.append(fresh_name(ptok.text, pty))
                        if self.peek().kind != ",":
                            break
                        self.next()
                self.expect(")")
                self.expect("=")
                body_scope = _Scope(scope)
                for p in params:
                    body_scope.bind(p)
                body = self.parse_proc(body_scope)
                self.defs[ident_tok.text] = Definition(tuple(params), body)
                def_order.append(ident_tok.text)
        self.expect("run")
        program = self.parse_proc(scope)
        self.expect("eof")
        for ident, line, col in self.calls:
            if ident not in self.defs:
                raise ParseError(f"call to undefined {ident}", line, col)
        return SourceFile(
            self.ctor_sigs,
            signal_types,
            Definitions(dict(self.defs)),
            program,
            ctor_order,
            signal_order,
            def_order,
        )

    def parse_ctor_type(self, arity: int):
        if self.peek().kind == "(" and arity > 0:
            self.next()
            args = [self.parse_type()]
            while self.peek().kind == ",":
                self.next()
                args.append(self.parse_type())
            self.expect(")")
            self.expect("->")
            result = self.parse_type()
        else:
            args = []
            result = self.parse_type()
        if len(args) != arity:
            self.fail(f"constructor declared with arity {arity} but "
                      f"{len(args)} argument types")
        if isinstance(result, (SigT, ListT)) or result == UNIT_T:
            self.fail("constructor result must be a declared inductive type")
        return tuple(args), result

    def parse_type(self) -> Type:
        tok = self.next()
        if tok.kind == "unit":
            return UNIT_T
        if tok.kind in ("sig", "list"):
            self.expect("(")
            inner = self.parse_type()
            self.expect(")")
            return SigT(inner) if tok.kind == "sig" else ListT(inner)
        if tok.kind == "ident":
            return DeclT(tok.text)
        raise ParseError(f"expected a type, found {tok.text!r}", tok.line, tok.col)

    # -- processes ----------------------------------------------------------

    def parse_proc(self, scope) -> Program:
        out = self.parse_choice(scope)
        while self.peek().kind == "|":
            self.next()
            out = Par(out, self.parse_choice(scope))
        return out

    def parse_choice(self, scope) -> Program:
        out = self.parse_prefix(scope)
        while self.peek().kind == "(+)":
            self.next()
            out = Choice(out, self.parse_prefix(scope))
        return out

    def lookup_name(self, scope, tok) -> Name:
        name = scope.lookup(tok.text)
        if name is None:
            raise ParseError(f"unbound identifier {tok.text}", tok.line, tok.col)
        return name

    def parse_prefix(self, scope) -> Program:
        tok = self.peek()
        if tok.kind == "when":
            self.next()
            sig = self.lookup_name(scope, self.expect("ident"))
            binder = None
            if self.peek().kind == "(":
                self.next()
                btok = self.expect("ident")
                bty = None
                if self.peek().kind == ":":
                    self.next()
                    bty = self.parse_type()
                binder = fresh_name(btok.text, bty)
                self.expect(")")
            self.expect("do")
            inner = _Scope(scope)
            if binder is None:
                binder = fresh_name("_u")
            else:
                inner.bind(binder)
            body = self.parse_prefix(inner)
            alt: Program = Nil()
            if self.peek().kind == "else":
                self.next()
                alt = self.parse_cont(scope)
            return Present(sig, binder, body, alt)
        if tok.kind == "await":
            self.next()
            sig = self.lookup_name(scope, self.expect("ident"))
            self.expect("(")
            btok = self.expect("ident")
            bty = None
            if self.peek().kind == ":":
                self.next()
                bty = self.parse_type()
            binder = fresh_name(btok.text, bty)
            self.expect(")")
            self.expect(".")
            inner = _Scope(scope)
            inner.bind(binder)
            body = self.parse_prefix(inner)
            return Await(sig, binder, body)
        if tok.kind == "if":
            self.next()
            lhs = self.lookup_name(scope, self.expect("ident"))
            self.expect("=")
            rhs = self.lookup_name(scope, self.expect("ident"))
            self.expect("then")
            then = self.parse_prefix(scope)
            self.expect("else")
            orelse = self.parse_prefix(scope)
            return MatchSig(lhs, rhs, then, orelse)
        if tok.kind == "case":
            self.next()
            scrutinee = self.parse_expr(scope)
            self.expect("of")
            inner = _Scope(scope)
            pattern = self.parse_pattern(inner)
            self.expect("->")
            then = self.parse_prefix(inner)
            self.expect("else")
            orelse = self.parse_prefix(scope)
            return MatchVal(scrutinee, pattern, then, orelse)
        if tok.kind == "new":
            self.next()
            inner = _Scope(scope)
            binders = []
            while True:
                btok = self.expect("ident")
                bty = None
                if self.peek().kind == ":":
                    self.next()
                    bty = self.parse_type()
                    if not isinstance(bty, SigT):
                        raise ParseError("new binds signals; annotate with sig(..)",
                                         btok.line, btok.col)
                binder = fresh_name(btok.text, bty)
                inner.bind(binder)
                binders.append(binder)
                if self.peek().kind != ",":
                    break
                self.next()
            self.expect("in")
            body = self.parse_prefix(inner)
            for b in reversed(binders):
                body = New(b, body)
            return body
        if tok.kind == "pause":
            self.next()
            self.expect(".")
            return Pause(self.parse_cont(scope))
        if tok.kind == "casefresh":
            self.next()
            scrut = self.lookup_name(scope, self.expect("ident"))
            self.expect("=")
            inner = _Scope(scope)
            news: list = []
            if self.peek().kind == "new":
                self.next()
                while True:
                    btok = self.expect("ident")
                    binder = fresh_name(btok.text)
                    inner.bind(binder)
                    news.append(binder)
                    if self.peek().kind != ",":
                        break
                    self.next()
                self.expect("in")
            value = self.parse_expr(inner)
            avoid: list = []
            if self.peek().kind == "avoid":
                self.next()
                while True:
                    avoid.append(self.lookup_name(scope, self.expect("ident")))
                    if self.peek().kind != ",":
                        break
                    self.next()
            self.expect("then")
            body = self.parse_prefix(inner)
            return FreshMatch(scrut, tuple(news), value, tuple(avoid), body)
        return self.parse_atom(scope)

    def parse_atom(self, scope) -> Program:
        tok = self.peek()
        if tok.kind == "nat" and tok.text == "0":
            self.next()
            return Nil()
        if tok.kind == "(":
            self.next()
            out = self.parse_proc(scope)
            self.expect(")")
            return out
        if tok.kind == "ident":
            self.next()
            nxt = self.peek()
            if nxt.kind == "(":
                # Call targets may be defined later in the file (mutual
                # recursion); existence is validated after parsing.
                self.calls.append((tok.text, tok.line, tok.col))
                self.next()
                args = []
                if self.peek().kind != ")":
                    while True:
                        args.append(self.parse_rexp(scope))
                        if self.peek().kind != ",":
                            break
                        self.next()
                self.expect(")")
                return Call(tok.text, tuple(args))
            if nxt.kind == "!":
                self.next()
                signal = self.lookup_name(scope, tok)
                if self.peek().kind in ("ident", "*", "["):
                    payload = self.parse_expr(scope)
                else:
                    payload = UNIT
                return Emit(signal, payload)
            raise ParseError(f"expected '(' or '!' after {tok.text}",
                             nxt.line, nxt.col)
        self.fail(f"expected a process, found {tok.text or 'eof'!r}")

    def parse_cont(self, scope) -> Program:
        tok = self.peek()
        if tok.kind == "nat" and tok.text == "0":
            self.next()
            return Nil()
        ident = self.expect("ident")
        self.calls.append((ident.text, ident.line, ident.col))
        self.expect("(")
        args = []
        if self.peek().kind != ")":
            while True:
                args.append(self.parse_rexp(scope))
                if self.peek().kind != ",":
                    break
                self.next()
        self.expect(")")
        return Call(ident.text, tuple(args))

    def parse_rexp(self, scope) -> Term:
        if self.peek().kind == "!":
            self.next()
            sig = self.lookup_name(scope, self.expect("ident"))
            return Deref(sig)
        return self.parse_expr(scope)

    def parse_expr(self, scope) -> Term:
        tok = self.next()
        if tok.kind == "*":
            return UNIT
        if tok.kind == "[":
            items = []
            if self.peek().kind != "]":
                while True:
                    items.append(self.parse_expr(scope))
                    if self.peek().kind != ";":
                        break
                    self.next()
            self.expect("]")
            return list_value(items)
        if tok.kind == "ident":
            if self.peek().kind == "(" and (
                tok.text in self.ctor_sigs or tok.text in ("cons",)
            ):
                self.next()
                args = [self.parse_expr(scope)]
                while self.peek().kind == ",":
                    self.next()
                    args.append(self.parse_expr(scope))
                self.expect(")")
                sig = self.ctor_sigs.get(tok.text)
                if sig is not None and len(args) != len(sig.arg_types):
                    raise ParseError(
                        f"constructor {tok.text} expects {len(sig.arg_types)} "
                        f"arguments, got {len(args)}", tok.line, tok.col)
                if tok.text == "cons" and len(args) != 2:
                    raise ParseError("cons expects 2 arguments", tok.line, tok.col)
                return Ctor(tok.text, tuple(args))
            if tok.text == "nil":
                return Ctor("nil")
            if tok.text in self.ctor_sigs:
                sig = self.ctor_sigs[tok.text]
                if sig.arg_types:
                    raise ParseError(f"constructor {tok.text} expects arguments",
                                     tok.line, tok.col)
                return Ctor(tok.text)
            return Var(self.lookup_name(scope, tok))
        raise ParseError(f"expected an expression, found {tok.text or 'eof'!r}",
                         tok.line, tok.col)

    def parse_pattern(self, scope: _Scope) -> Term:
        """Patterns share the expression grammar; plain idents become binders."""
        tok = self.next()
        if tok.kind == "*":
            return UNIT
        if tok.kind == "[":
            items = []
            if self.peek().kind != "]":
                while True:
                    items.append(self.parse_pattern(scope))
                    if self.peek().kind != ";":
                        break
                    self.next()
            self.expect("]")
            return list_value(items)
        if tok.kind == "ident":
            if self.peek().kind == "(" and (
                tok.text in self.ctor_sigs or tok.text == "cons"
            ):
                self.next()
                args = [self.parse_pattern(scope)]
                while self.peek().kind == ",":
                    self.next()
                    args.append(self.parse_pattern(scope))
                self.expect(")")
                return Ctor(tok.text, tuple(args))
            if tok.text == "nil":
                return Ctor("nil")
            if tok.text in self.ctor_sigs and not self.ctor_sigs[tok.text].arg_types:
                return Ctor(tok.text)
            existing = scope.table.get(tok.text)
            if existing is not None:  # nonlinear pattern reuses the binder
                return Var(existing)
            binder = fresh_name(tok.text)
            scope.bind(binder)
            return Var(binder)
        raise ParseError(f"expected a pattern, found {tok.text or 'eof'!r}",
                         tok.line, tok.col)


def parse(text: str) -> SourceFile:
    return _Parser(lex(text)).parse_file()


# ---------------------------------------------------------------------------
# Pretty printer.
# ---------------------------------------------------------------------------

_PAR, _CHOICE, _PREFIX = 0, 1, 2


def _display_names(p: Program) -> dict:
    """uid -> printed text, disambiguating textual collisions."""
    names: dict = {}

    def note(n: Name):
        names[n.uid] = n.text

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
            note(q.binder)
            walk(q.body)
            walk(q.alt)
        elif isinstance(q, MatchSig):
            note(q.lhs)
            note(q.rhs)
            walk(q.then)
            walk(q.orelse)
        elif isinstance(q, MatchVal):
            walk_term(q.scrutinee)
            walk_term(q.pattern)
            walk(q.then)
            walk(q.orelse)
        elif isinstance(q, New):
            note(q.binder)
            walk(q.body)
        elif isinstance(q, Par):
            walk(q.left)
            walk(q.right)
        elif isinstance(q, Choice):
            walk(q.left)
            walk(q.right)
        elif isinstance(q, Pause):
            walk(q.cont)
        elif isinstance(q, Await):
            note(q.signal)
            note(q.binder)
            walk(q.body)
        elif isinstance(q, FreshMatch):
            note(q.scrutinee)
            for n in q.news:
                note(n)
            walk_term(q.value)
            for n in q.avoid:
                note(n)
            walk(q.body)

    walk(p)
    by_text: dict = {}
    for uid, text in names.items():
        by_text.setdefault(text, []).append(uid)
    out = {}
    for text, uids in by_text.items():
        if len(uids) == 1:
            out[uids[0]] = text
        else:
            for uid in uids:
                out[uid] = f"{text}'{uid}"
    return out


def print_term(t: Term, names: dict | None = None) -> str:
    names = names or {}

    def nm(n: Name) -> str:
        return names.get(n.uid, n.text)

    items = list_items(t)
    if items is not None:
        return "[" + "; ".join(print_term(i, names) for i in items) + "]"
    if isinstance(t, Var):
        return nm(t.name)
    if isinstance(t, Deref):
        return f"!{nm(t.signal)}"
    if t.sym == "*" and not t.args:
        return "*"
    if not t.args:
        return t.sym
    return f"{t.sym}({', '.join(print_term(a, names) for a in t.args)})"


def print_program(p: Program, names: dict | None = None) -> str:
    names = _display_names(p) if names is None else names

    def nm(n: Name) -> str:
        return names.get(n.uid, n.text)

    def go(q: Program, level: int) -> str:
        if isinstance(q, Par):
            s = f"{go(q.left, _PAR)} | {go(q.right, _CHOICE)}"
            return f"({s})" if level > _PAR else s
        if isinstance(q, Choice):
            s = f"{go(q.left, _CHOICE)} (+) {go(q.right, _PREFIX)}"
            return f"({s})" if level > _CHOICE else s
        if isinstance(q, Nil):
            return "0"
        if isinstance(q, Call):
            return f"{q.ident}({', '.join(print_term(a, names) for a in q.args)})"
        if isinstance(q, Emit):
            if q.payload == UNIT:
                return f"{nm(q.signal)}!"
            return f"{nm(q.signal)}!{print_term(q.payload, names)}"
        if isinstance(q, Present):
            head = f"when {nm(q.signal)}"
            if q.binder in free_names(q.body):
                head += f"({nm(q.binder)})"
            s = f"{head} do {go(q.body, _PREFIX)}"
            if not isinstance(q.alt, Nil):
                s += f" else {go(q.alt, _PREFIX)}"
            return s
        if isinstance(q, MatchSig):
            return (f"if {nm(q.lhs)} = {nm(q.rhs)} then {go(q.then, _PREFIX)} "
                    f"else {go(q.orelse, _PREFIX)}")
        if isinstance(q, MatchVal):
            return (f"case {print_term(q.scrutinee, names)} of "
                    f"{print_term(q.pattern, names)} -> {go(q.then, _PREFIX)} "
                    f"else {go(q.orelse, _PREFIX)}")
        if isinstance(q, New):
            binders = [q.binder]
            body = q.body
            while isinstance(body, New):
                binders.append(body.binder)
                body = body.body
            shown = ", ".join(
                nm(b) + (f" : {b.ty}" if b.ty is not None else "") for b in binders
            )
            return f"new {shown} in {go(body, _PREFIX)}"
        if isinstance(q, Pause):
            return f"pause.{go(q.cont, _PREFIX)}"
        if isinstance(q, Await):
            return f"await {nm(q.signal)}({nm(q.binder)}).{go(q.body, _PREFIX)}"
        if isinstance(q, FreshMatch):
            s = f"casefresh {nm(q.scrutinee)} = "
            if q.news:
                s += f"new {', '.join(nm(b) for b in q.news)} in "
            s += print_term(q.value, names)
            if q.avoid:
                s += f" avoid {', '.join(nm(a) for a in q.avoid)}"
            return s + f" then {go(q.body, _PREFIX)}"
        raise TypeError(q)

    return go(p, _PAR)


def _print_type(ty: Type) -> str:
    return str(ty)


def print_file(sf: SourceFile) -> str:
    lines = []
    for sym in sf.ctor_order:
        sig = sf.ctor_sigs[sym]
        if sig.arg_types:
            args = ", ".join(_print_type(t) for t in sig.arg_types)
            lines.append(f"constructor {sym}/{len(sig.arg_types)} : "
                         f"({args}) -> {_print_type(sig.result)}")
        else:
            lines.append(f"constructor {sym}/0 : {_print_type(sig.result)}")
    for name in sf.signal_order:
        lines.append(f"signal {name.text} : {_print_type(sf.signal_types[name])}")
    for ident in sf.def_order:
        definition = sf.defs[ident]
        params = ", ".join(
            p.text + (f" : {_print_type(p.ty)}" if p.ty is not None else "")
            for p in definition.params
        )
        lines.append(f"def {ident}({params}) = {print_program(definition.body)}")
    lines.append(f"run {print_program(sf.program)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Desugarer.
# ---------------------------------------------------------------------------


class DesugarError(Exception):
    pass


_LIST_UNIT = ListT(UNIT_T)
_ZERO = Ctor("nil")  # the paper's 0 = []
_ONE = list_value([UNIT])  # the paper's 1 = [*]


def _sugar_free_names(p: Program) -> frozenset:
    """free_names extended to sugar nodes."""
    if isinstance(p, Choice):
        return _sugar_free_names(p.left) | _sugar_free_names(p.right)
    if isinstance(p, Pause):
        return _sugar_free_names(p.cont)
    if isinstance(p, Await):
        return frozenset((p.signal,)) | (_sugar_free_names(p.body) - {p.binder})
    if isinstance(p, FreshMatch):
        return (
            frozenset((p.scrutinee,))
            | (term_names(p.value) - set(p.news))
            | frozenset(p.avoid)
            | (_sugar_free_names(p.body) - set(p.news))
        )
    if isinstance(p, Present):
        return (frozenset((p.signal,))
                | (_sugar_free_names(p.body) - {p.binder})
                | _sugar_free_names(p.alt))
    if isinstance(p, MatchSig):
        return (frozenset((p.lhs, p.rhs))
                | _sugar_free_names(p.then) | _sugar_free_names(p.orelse))
    if isinstance(p, MatchVal):
        bound = term_names(p.pattern)
        return (term_names(p.scrutinee)
                | (_sugar_free_names(p.then) - bound)
                | _sugar_free_names(p.orelse))
    if isinstance(p, New):
        return _sugar_free_names(p.body) - {p.binder}
    if isinstance(p, Par):
        return _sugar_free_names(p.left) | _sugar_free_names(p.right)
    return free_names(p)


class _Desugarer:
    def __init__(self, defs: Definitions):
        self.new_defs: dict = {}
        self.existing = set(defs.table)
        self.await_count = 0

    def fresh_ident(self) -> str:
        while True:
            self.await_count += 1
            ident = f"Await{self.await_count}"
            if ident not in self.existing and ident not in self.new_defs:
                return ident

    def program(self, p: Program) -> Program:
        if isinstance(p, (Nil, Call, Emit)):
            return p
        if isinstance(p, Present):
            return Present(p.signal, p.binder, self.program(p.body),
                           self.program(p.alt))
        if isinstance(p, MatchSig):
            return MatchSig(p.lhs, p.rhs, self.program(p.then),
                            self.program(p.orelse))
        if isinstance(p, MatchVal):
            return MatchVal(p.scrutinee, p.pattern, self.program(p.then),
                            self.program(p.orelse))
        if isinstance(p, New):
            return New(p.binder, self.program(p.body))
        if isinstance(p, Par):
            return Par(self.program(p.left), self.program(p.right))
        if isinstance(p, Choice):
            left = self.program(p.left)
            right = self.program(p.right)
            s = fresh_name("c", SigT(_LIST_UNIT))
            x = fresh_name("x", _LIST_UNIT)
            chooser = Present(s, x, MatchVal(Var(x), _ZERO, left, right), Nil())
            return New(s, par(chooser, Emit(s, _ZERO), Emit(s, _ONE)))
        if isinstance(p, Pause):
            cont = self.program(p.cont)
            s = fresh_name("p", SigT(UNIT_T))
            x = fresh_name("_u", UNIT_T)
            return New(s, Present(s, x, Nil(), cont))
        if isinstance(p, Await):
            body = self.program(p.body)
            ident = self.fresh_ident()
            rest = sorted(_sugar_free_names(body) - {p.binder, p.signal},
                          key=lambda n: (n.text, n.uid))
            params = (p.signal, *rest)
            rec = Call(ident, tuple(Var(n) for n in params))
            node = Present(p.signal, p.binder, body, rec)
            self.new_defs[ident] = Definition(params, node)
            return node
        if isinstance(p, FreshMatch):
            return self.fresh_match(p)
        raise TypeError(p)

    def fresh_match(self, p: FreshMatch) -> Program:
        body = self.program(p.body)
        news = list(p.news)
        avoid = list(p.avoid)
        value = p.value
        value_names = term_names(value)
        if not set(news) <= value_names:
            raise DesugarError("every fresh name must occur in the matched value")
        if set(news) & set(avoid):
            raise DesugarError("fresh names cannot also be avoided")
        if not news and avoid:
            raise DesugarError("avoid clause requires fresh names")

        def not_in(n: Name, xs: list, k: Program) -> Program:
            # [n not-in xs]k  =  [n=x1]0,([n=x2]0,(...k))
            out = k
            for x in reversed(xs):
                out = MatchSig(n, x, Nil(), out)
            return out

        if isinstance(value, Var) and not news:
            # [x = s]P  =  [x=s]P,0
            return MatchSig(p.scrutinee, value.name, body, Nil())
        if isinstance(value, Var) and news == [value.name]:
            # [x = new s in s]P  =  [x not-in X]P
            return not_in(p.scrutinee, avoid, body)
        # constructed value: match the shape with fresh stand-ins for the
        # free names, then pin those down with name equalities.
        free_in_value = [n for n in _pattern_order(value) if n not in news]
        standins = {n: fresh_name(n.text + "f") for n in free_in_value}
        pattern = Var(standins[value.name]) if isinstance(value, Var) else Ctor(
            value.sym, tuple(_replace_names(a, standins) for a in value.args)
        )
        chain = body
        # [s distinct]: pairwise difference of the fresh names (reversed so the
        # outermost check compares the first pair)
        pairs = [(news[i], news[j])
                 for i in range(len(news)) for j in range(i + 1, len(news))]
        for a, b in reversed(pairs):
            chain = MatchSig(a, b, Nil(), chain)
        for n in reversed(news):
            chain = not_in(n, avoid, chain)
        for n in reversed(free_in_value):
            chain = MatchSig(standins[n], n, chain, Nil())
        return MatchVal(Var(p.scrutinee), pattern, chain, Nil())


def _pattern_order(t: Term) -> list:
    out: list = []

    def walk(q: Term):
        if isinstance(q, Var):
            if q.name not in out:
                out.append(q.name)
        elif isinstance(q, Ctor):
            for a in q.args:
                walk(a)
        else:
            raise DesugarError("dereference not allowed in casefresh values")

    walk(t)
    return out


def _replace_names(t: Term, mapping: dict) -> Term:
    if isinstance(t, Var):
        return Var(mapping.get(t.name, t.name))
    if isinstance(t, Ctor):
        return Ctor(t.sym, tuple(_replace_names(a, mapping) for a in t.args))
    raise DesugarError("dereference not allowed in casefresh values")


def desugar(sf: SourceFile) -> SourceFile:
    """Eliminate all sugar nodes, adding generated definitions as needed."""
    d = _Desugarer(sf.defs)
    program = d.program(sf.program)
    table = {}
    for ident, definition in sf.defs.table.items():
        table[ident] = Definition(definition.params, d.program(definition.body))
    def_order = list(sf.def_order)
    for ident in sorted(d.new_defs):
        table[ident] = d.new_defs[ident]
        def_order.append(ident)
    return SourceFile(
        sf.ctor_sigs,
        sf.signal_types,
        Definitions(table),
        program,
        list(sf.ctor_order),
        list(sf.signal_order),
        def_order,
    )
