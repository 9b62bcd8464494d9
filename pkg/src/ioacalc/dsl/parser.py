"""Lexer and recursive-descent parser for ``.ioa`` files.

Errors never abort the parse: a failed declaration is reported with its span
and parsing resumes at the next declaration.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .syntax import (
    KINDS,
    AcceptDecl,
    AutomatonDecl,
    ChannelDecl,
    ComponentDecl,
    Diagnostic,
    Document,
    FunctionDecl,
    GuardDecl,
    Item,
    MapEntry,
    ProcessDecl,
    ProtocolDecl,
    RuleDecl,
    RulesDecl,
    Span,
    SystemDecl,
    TransitionDecl,
)

FORMAT_VERSION = 1
PUNCT = ("-[", "]->", "->", "!=", "{", "}", "(", ")", ";", ":", ",", ".", "/", "=", "*")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT = re.compile(r"-?[0-9]+")
MAX_INT_DIGITS = 19
MAX_NESTING = 32


@dataclass(frozen=True)
class Token:
    kind: str  # ident | int | string | punct | eof
    value: str
    span: Span


class ParseResult:
    def __init__(self, document: Document, errors: list):
        self.document = document
        self.errors = errors

    @property
    def ok(self) -> bool:
        return not self.errors

    def __iter__(self):
        return iter((self.document, self.errors))


class _Fail(Exception):
    def __init__(self, diag: Diagnostic):
        self.diag = diag


def _byte_offsets(text: str) -> list:
    offs = [0]
    for ch in text:
        offs.append(offs[-1] + (1 if ch < "\x80" else len(ch.encode("utf-8", "surrogatepass"))))
    return offs


def tokenize(text: str):
    """Tokens plus lexical diagnostics."""
    boff = _byte_offsets(text)
    tokens, errors = [], []
    line, line_start = 1, 0
    i, n = 0, len(text)

    def span(a: int, b: int) -> Span:
        return Span(boff[a], boff[b], line, a - line_start + 1)

    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            line_start = i + 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            continue
        if c == "#":
            j = text.find("\n", i)
            i = n if j < 0 else j
            continue
        if c == '"':
            j = i + 1
            buf = []
            closed = False
            while j < n and text[j] != "\n":
                if text[j] == "\\" and j + 1 < n and text[j + 1] in '"\\':
                    buf.append(text[j + 1])
                    j += 2
                    continue
                if text[j] == '"':
                    closed = True
                    break
                buf.append(text[j])
                j += 1
            if not closed:
                errors.append(Diagnostic("unterminated string", span(i, j), "lexical"))
                i = j
                continue
            tokens.append(Token("string", "".join(buf), span(i, j + 1)))
            i = j + 1
            continue
        m = _IDENT.match(text, i)
        if m:
            tokens.append(Token("ident", m.group(), span(i, m.end())))
            i = m.end()
            continue
        m = _INT.match(text, i)
        if m:
            tokens.append(Token("int", m.group(), span(i, m.end())))
            i = m.end()
            continue
        for p in PUNCT:
            if text.startswith(p, i):
                tokens.append(Token("punct", p, span(i, i + len(p))))
                i += len(p)
                break
        else:
            errors.append(Diagnostic(f"unexpected character {c!r}", span(i, i + 1), "lexical"))
            i += 1
    tokens.append(Token("eof", "", span(n, n)))
    return tokens, errors


class _Parser:
    def __init__(self, tokens: list):
        self.toks = tokens
        self.pos = 0

    # -- token helpers --------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.pos += 1
        return t

    def fail(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.value)
        raise _Fail(Diagnostic(f"{msg}, found {found}", tok.span))

    def is_punct(self, p: str, tok: Token | None = None) -> bool:
        tok = tok or self.tok
        return tok.kind == "punct" and tok.value == p

    def is_kw(self, w: str, tok: Token | None = None) -> bool:
        tok = tok or self.tok
        return tok.kind == "ident" and tok.value == w

    def expect(self, p: str) -> Token:
        if not self.is_punct(p):
            self.fail(f"expected {p!r}")
        return self.advance()

    def accept(self, p: str) -> bool:
        if self.is_punct(p):
            self.advance()
            return True
        return False

    def expect_kw(self, w: str) -> Token:
        if not self.is_kw(w):
            self.fail(f"expected {w!r}")
        return self.advance()

    def name(self, what: str = "a name") -> str:
        if self.tok.kind in ("ident", "string"):
            return self.advance().value
        self.fail(f"expected {what}")

    def names(self, what: str = "a name") -> tuple:
        out = [self.name(what)]
        while self.accept(","):
            out.append(self.name(what))
        return tuple(out)

    def span_from(self, start: Token) -> Span:
        last = self.toks[max(self.pos - 1, 0)]
        return start.span.cover(last.span)

    # -- top level ------------------------------------------------------------

    def document(self):
        decls, errors = [], []
        seen_format = False
        while self.tok.kind != "eof":
            start = self.pos
            try:
                if self.is_kw("format"):
                    first = self.advance()
                    if seen_format or decls:
                        raise _Fail(Diagnostic("format header must come first and only once", first.span))
                    if self.tok.kind != "int":
                        self.fail("expected a format version")
                    v = self.advance()
                    if v.value != str(FORMAT_VERSION):
                        raise _Fail(Diagnostic(f"unsupported format version {v.value}", v.span))
                    self.expect(";")
                    seen_format = True
                    continue
                if self.tok.kind == "ident" and self.tok.value in KINDS:
                    decls.append(getattr(self, "decl_" + self.tok.value)())
                else:
                    self.fail("expected a declaration")
            except _Fail as f:
                errors.append(f.diag)
                self.recover(start)
        return Document(tuple(decls)), errors

    def recover(self, start: int):
        depth = 0
        for t in self.toks[start:self.pos]:
            if self.is_punct("{", t):
                depth += 1
            elif self.is_punct("}", t):
                depth -= 1
        if self.pos == start:
            t = self.advance()
            if self.is_punct("{", t):
                depth += 1
            elif self.is_punct("}", t) or self.is_punct(";", t):
                return
        while self.tok.kind != "eof":
            if depth <= 0 and self.tok.kind == "ident" and self.tok.value in KINDS + ("format",):
                return
            t = self.advance()
            if self.is_punct("{", t):
                depth += 1
            elif self.is_punct("}", t):
                depth -= 1
                if depth <= 0:
                    return
            elif self.is_punct(";", t) and depth <= 0:
                return

    # -- automaton --------------------------------------------------------------

    def symbol(self) -> str:
        t = self.tok
        if t.kind == "string":
            return self.advance().value
        if t.kind not in ("ident", "int"):
            self.fail("expected a symbol")
        base = self.advance().value
        if self.is_punct("("):
            self.advance()
            if self.tok.kind in ("ident", "int") or self.is_punct("*"):
                param = self.advance().value
            else:
                param = ""
            self.expect(")")
            return f"{base}({param})"
        return base

    def symbol_set(self) -> tuple:
        self.expect("{")
        out = []
        if not self.is_punct("}"):
            out.append(self.symbol())
            while self.accept(","):
                out.append(self.symbol())
        self.expect("}")
        return tuple(out)

    def name_set(self) -> tuple:
        self.expect("{")
        out = ()
        if not self.is_punct("}"):
            out = self.names("a state")
        self.expect("}")
        return out

    def vector(self, keyword: str) -> tuple:
        if self.is_kw("eps") and not self.is_punct(".", self.peek()):
            self.advance()
            return ()
        if self.is_kw(keyword) and not self.is_punct(".", self.peek()):
            self.advance()
        items = []
        while True:
            first = self.tok
            comp = self.name("a component")
            self.expect(".")
            sym = self.symbol()
            items.append(Item(comp, sym, self.span_from(first)))
            if not self.accept(","):
                break
        return tuple(items)

    def transition(self) -> TransitionDecl:
        first = self.tok
        label = self.name("a transition label")
        self.expect(":")
        src = self.name("a state")
        self.expect("-[")
        ins = self.vector("in")
        guard = ""
        if self.is_kw("when"):
            self.advance()
            guard = self.name("a condition")
        self.expect("/")
        outs = self.vector("out")
        self.expect("]->")
        dst = self.name("a state")
        self.expect(";")
        return TransitionDecl(label, src, dst, ins, outs, guard, self.span_from(first))

    def decl_automaton(self) -> AutomatonDecl:
        first = self.advance()
        name = self.name("an automaton name")
        self.expect("{")
        states, initial, accept = None, None, None
        inputs, outputs, transitions = [], [], []
        while not self.is_punct("}"):
            t = self.tok
            if t.kind in ("ident", "string") and self.is_punct(":", self.peek()):
                transitions.append(self.transition())
            elif self.is_kw("states"):
                if states is not None:
                    self.fail("duplicate states clause")
                self.advance()
                states = self.names("a state")
                self.expect(";")
            elif self.is_kw("initial"):
                if initial is not None:
                    self.fail("duplicate initial clause")
                self.advance()
                initial = self.name("a state")
                self.expect(";")
            elif self.is_kw("accept"):
                if accept is not None:
                    self.fail("duplicate accept clause")
                self.advance()
                if self.is_kw("finite"):
                    self.advance()
                    sets = (self.name_set(),)
                    kind = "finite"
                elif self.is_kw("muller"):
                    self.advance()
                    self.expect("{")
                    family = []
                    if not self.is_punct("}"):
                        family.append(self.name_set())
                        while self.accept(","):
                            family.append(self.name_set())
                    self.expect("}")
                    sets = tuple(family)
                    kind = "muller"
                else:
                    self.fail("expected 'finite' or 'muller'")
                self.expect(";")
                accept = AcceptDecl(kind, sets, self.span_from(t))
            elif self.is_kw("in") or self.is_kw("out"):
                direction = self.advance().value
                comp = self.name("a component name")
                self.expect(":")
                syms = self.symbol_set()
                self.expect(";")
                (inputs if direction == "in" else outputs).append(ComponentDecl(comp, syms, self.span_from(t)))
            else:
                self.fail("expected an automaton clause")
        self.expect("}")
        return AutomatonDecl(name, states or (), initial, accept, tuple(inputs), tuple(outputs),
                             tuple(transitions), self.span_from(first))

    # -- system and function ----------------------------------------------------

    def value(self, allow_eps: bool, depth: int = 0):
        t = self.tok
        if t.kind == "int":
            if len(t.value) > MAX_INT_DIGITS:
                self.fail("integer literal too long")
            self.advance()
            return int(t.value)
        if t.kind == "string":
            return self.advance().value
        if t.kind == "ident":
            if t.value == "eps":
                if not allow_eps:
                    self.fail("eps is not a value here")
                self.advance()
                return None
            return self.advance().value
        if self.is_punct("("):
            if depth >= MAX_NESTING:
                self.fail(f"values nested deeper than {MAX_NESTING}")
            self.advance()
            parts = [self.value(True, depth + 1)]
            while self.accept(","):
                parts.append(self.value(True, depth + 1))
            self.expect(")")
            return tuple(parts)
        self.fail("expected a value")

    def values(self, allow_eps: bool = False) -> tuple:
        out = [self.value(allow_eps)]
        while self.accept(","):
            out.append(self.value(allow_eps))
        return tuple(out)

    def value_set(self) -> tuple:
        self.expect("{")
        out = ()
        if not self.is_punct("}"):
            out = self.values()
        self.expect("}")
        return out

    def decl_system(self) -> SystemDecl:
        first = self.advance()
        name = self.name("a system name")
        self.expect("{")
        fields: dict = {}
        maps = []

        def once(key):
            if key in fields:
                self.fail(f"duplicate {key} clause")

        while not self.is_punct("}"):
            t = self.tok
            if self.is_kw("states"):
                once("states")
                self.advance()
                fields["states"] = self.values()
                self.expect(";")
            elif self.is_kw("initial"):
                once("initial")
                self.advance()
                fields["initial"] = self.value(False)
                self.expect(";")
            elif self.is_kw("in") or self.is_kw("out"):
                key = self.advance().value
                once(key)
                fields[key] = self.value_set()
                self.expect(";")
            elif self.is_kw("clocked"):
                once("clocked")
                self.advance()
                fields["clocked"] = True
                self.expect(";")
            elif self.is_kw("map"):
                self.advance()
                q = self.value(False)
                self.expect(",")
                i = self.value(True)
                self.expect("->")
                nq = self.value(False)
                self.expect(",")
                o = self.value(True)
                self.expect(";")
                maps.append(MapEntry(q, i, nq, o, self.span_from(t)))
            else:
                self.fail("expected a system clause")
        self.expect("}")
        return SystemDecl(name, fields.get("states", ()), fields.get("initial"), fields.get("in", ()),
                          fields.get("out", ()), fields.get("clocked", False), tuple(maps), self.span_from(first))

    def decl_function(self) -> FunctionDecl:
        first = self.advance()
        name = self.name("a function name")
        self.expect("(")
        params = ()
        if not self.is_punct(")"):
            params = self.names("a parameter")
        self.expect(")")
        self.expect("=")
        if self.tok.kind != "string":
            self.fail("expected a quoted expression")
        body = self.advance().value
        self.expect(";")
        return FunctionDecl(name, params, body, self.span_from(first))

    # -- channels, protocols, rules, processes ----------------------------------

    def endpoint(self) -> tuple:
        role = self.name("a role")
        self.expect(".")
        comp = self.name("a component")
        return role, comp

    def decl_channel(self) -> ChannelDecl:
        first = self.advance()
        name = self.name("a channel name")
        self.expect(":")
        src = self.endpoint()
        self.expect("->")
        dst = self.endpoint()
        self.expect(";")
        return ChannelDecl(name, src[0], src[1], dst[0], dst[1], self.span_from(first))

    def decl_protocol(self) -> ProtocolDecl:
        first = self.advance()
        name = self.name("a protocol name")
        self.expect("{")
        roles = channels = None
        tree = False
        while not self.is_punct("}"):
            if self.is_kw("roles"):
                if roles is not None:
                    self.fail("duplicate roles clause")
                self.advance()
                roles = self.names("a role")
            elif self.is_kw("channels"):
                if channels is not None:
                    self.fail("duplicate channels clause")
                self.advance()
                channels = self.names("a channel")
            elif self.is_kw("tree"):
                if tree:
                    self.fail("duplicate tree clause")
                self.advance()
                tree = True
            else:
                self.fail("expected a protocol clause")
            self.expect(";")
        self.expect("}")
        return ProtocolDecl(name, roles or (), channels or (), tree, self.span_from(first))

    def label(self) -> str:
        role = self.name("a role")
        self.expect(".")
        return f"{role}.{self.name('a transition label')}"

    def rule(self) -> RuleDecl:
        first = self.expect_kw("rule")
        name = self.name("a rule name")
        self.expect("{")
        guards, on, forbid = [], None, None
        while not self.is_punct("}"):
            t = self.tok
            if self.is_kw("when"):
                self.advance()
                role = self.name("a role")
                if self.is_kw("in"):
                    self.advance()
                    op, states = "in", self.name_set()
                elif self.is_kw("not"):
                    self.advance()
                    self.expect_kw("in")
                    op, states = "not in", self.name_set()
                elif self.accept("="):
                    op, states = "=", (self.name("a state"),)
                elif self.accept("!="):
                    op, states = "!=", (self.name("a state"),)
                else:
                    self.fail("expected 'in', 'not in', '=' or '!='")
                guards.append(GuardDecl(role, op, states, self.span_from(t)))
            elif self.is_kw("on"):
                if on is not None:
                    self.fail("duplicate on clause")
                self.advance()
                on = self.name("a document class")
            elif self.is_kw("forbid"):
                if forbid is not None:
                    self.fail("duplicate forbid clause")
                self.advance()
                labels = [self.label()]
                while self.accept(","):
                    labels.append(self.label())
                forbid = tuple(labels)
            else:
                self.fail("expected 'when', 'on' or 'forbid'")
            self.expect(";")
        self.expect("}")
        return RuleDecl(name, tuple(guards), on, forbid or (), self.span_from(first))

    def decl_rules(self) -> RulesDecl:
        first = self.advance()
        name = self.name("a rule set name")
        self.expect("{")
        rules = []
        while not self.is_punct("}"):
            rules.append(self.rule())
        self.expect("}")
        return RulesDecl(name, tuple(rules), self.span_from(first))

    def decl_process(self) -> ProcessDecl:
        first = self.advance()
        name = self.name("a process name")
        self.expect("{")
        roles = rule_sets = None
        bindings = []
        while not self.is_punct("}"):
            if self.is_kw("roles"):
                if roles is not None:
                    self.fail("duplicate roles clause")
                self.advance()
                roles = self.names("a role")
            elif self.is_kw("rules"):
                if rule_sets is not None:
                    self.fail("duplicate rules clause")
                self.advance()
                rule_sets = self.names("a rule set")
            elif self.is_kw("bind"):
                self.advance()
                role = self.name("a role")
                self.expect("->")
                bindings.append((role, self.name("a counterparty")))
            else:
                self.fail("expected 'roles', 'rules' or 'bind'")
            self.expect(";")
        self.expect("}")
        return ProcessDecl(name, roles or (), rule_sets or (), tuple(bindings), self.span_from(first))


def parse(text: str) -> ParseResult:
    """Parse ``text`` into a :class:`Document`; ``errors`` lists every diagnostic found."""
    tokens, lex_errors = tokenize(text)
    doc, errors = _Parser(tokens).document()
    return ParseResult(doc, sorted(lex_errors + errors, key=lambda d: d.span.start))
