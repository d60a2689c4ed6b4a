"""Concrete syntax for protocol files: parsing, printing and JSON export.

Grammar sketch (LL(1) with one spot of bounded lookahead):

    file    := decl*
    decl    := "global" NAME params? "=" gtype
             | "local"  NAME params? "=" ltype
             | "proc"   NAME params? "=" proc
             | "channel" NAME ":" "<" NAME ">"
    gtype   := p "->" p ":" U "." G  |  p "->" p "{" l ":" G "," ... "}"
             | "mu" t "." G  |  "R" G "with" "(" i ":" I "," x ")" "{" G "}"
             | "foreach" i "<" e "{" G "}"  |  "foreach_inc" i "<" e "{" G "}"
             | "pi" n ":" I "." G  |  "if" guard "then" G "else" G
             | G "@" e  |  G ";" G  |  "end"  |  t  |  "(" G ")"

Local types use !<p,U>.T, ?<p,U>.T, sel<p>{...}, bra<p>{...} with the same
recursor and application forms. Derived forms (foreach, composition, pi,
boolean tests) are desugared to their recursor encodings while parsing.

Files use extensions .gt for type declarations and .proc for processes.
The JSON export is schema-versioned and key-sorted, so equal terms always
serialise to identical bytes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .diagnostics import Diagnostic, MpstError, Span, diag
from .terms import (
    ChEnd,
    EBool,
    EComplex,
    ENameRef,
    EntryIndex,
    Expr,
    GApp,
    GBra,
    GCond,
    GEnd,
    GLocal,
    GMsg,
    GMu,
    GRec,
    GTVar,
    GlobalType,
    GuardEq,
    GuardIdx,
    ILit,
    IOp,
    IVar,
    IndexExpr,
    IndexSort,
    LApp,
    LBra,
    LCond,
    LEnd,
    LIn,
    LMu,
    LOut,
    LRec,
    LSel,
    LTVar,
    LocalType,
    PAcc,
    PApp,
    PBool,
    PBra,
    PCatch,
    PDeleg,
    PInit,
    PMu,
    PNat,
    PNew,
    PPRec,
    PPar,
    PRecv,
    PSel,
    PSend,
    PSession,
    PShared,
    PVar,
    PZero,
    PAnd,
    PLeq,
    PTrue,
    Participant,
    PayloadType,
    Process,
    ProcessType,
    Prop,
    SConstr,
    SEmpty,
    SNat,
    SessionEnv,
    SessionType,
    TPi,
    TSess,
    alpha_eq,
    gforeach,
    gpi,
    gseq,
    iadd,
    isub,
    lforeach,
    lseq,
    subst_end_with_tvar,
    subst_index,
    ChVar,
)


class ParseError(MpstError):
    pass


# ---------------------------------------------------------------------------
# Declarations


@dataclass(frozen=True)
class GlobalDecl:
    name: str
    params: tuple[tuple[str, IndexSort], ...]
    body: GlobalType


@dataclass(frozen=True)
class LocalDecl:
    name: str
    params: tuple[tuple[str, IndexSort], ...]
    body: LocalType


@dataclass(frozen=True)
class ProcDecl:
    name: str
    params: tuple[tuple[str, IndexSort], ...]
    body: Process


@dataclass(frozen=True)
class SharedChanDecl:
    name: str
    global_ref: str


Decl = Union[GlobalDecl, LocalDecl, ProcDecl, SharedChanDecl]


@dataclass
class SourceFile:
    decls: list[Decl] = field(default_factory=list)

    def lookup(self, name: str) -> Optional[Decl]:
        for d in self.decls:
            if d.name == name:
                return d
        return None


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*|//[^\n]*)
  | (?P<float>\d+\.\d+(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+)
  | (?P<num>\d+)
  | (?P<id>[A-Za-z_%][A-Za-z0-9_%]*)
  | (?P<op>->|\.\.|<=|>=|!!|\?\?|[-+*^<>(){}\[\],.:;=@!?|])
    """,
    re.VERBOSE,
)

KEYWORDS = {
    "global", "local", "proc", "channel", "end", "mu", "R", "with",
    "foreach", "foreach_inc", "pi", "if", "then", "else", "nat", "bool",
    "sel", "bra", "acc", "init", "new", "ext", "true", "false", "complex",
    "and", "catch", "deleg",
}


@dataclass(frozen=True)
class Token:
    kind: str  # num | id | op | kw | eof
    text: str
    line: int
    col: int

    def span(self) -> Span:
        return Span(self.line, self.col)


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(
                Diagnostic("Parse", f"unexpected character {text[pos]!r}", Span(line, col))
            )
        lexeme = m.group(0)
        if m.lastgroup == "num":
            out.append(Token("num", lexeme, line, col))
        elif m.lastgroup == "float":
            out.append(Token("float", lexeme, line, col))
        elif m.lastgroup == "id":
            kind = "kw" if lexeme in KEYWORDS else "id"
            out.append(Token(kind, lexeme, line, col))
        elif m.lastgroup == "op":
            out.append(Token("op", lexeme, line, col))
        nl = lexeme.count("\n")
        if nl:
            line += nl
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    out.append(Token("eof", "", line, col))
    return out


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.pos = 0
        self.tvars_in_scope: set[str] = set()

    # -- token plumbing ---------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            raise ParseError(
                Diagnostic("Parse", f"expected {text!r}, found {t.text!r}", t.span())
            )
        return t

    def accept(self, text: str) -> bool:
        if self.peek().text == text:
            self.next()
            return True
        return False

    def ident(self) -> str:
        t = self.next()
        if t.kind != "id":
            raise ParseError(
                Diagnostic("Parse", f"expected a name, found {t.text!r}", t.span())
            )
        return t.text

    def fail(self, msg: str) -> None:
        raise ParseError(Diagnostic("Parse", msg, self.peek().span()))

    # -- index expressions, sorts, propositions ----------------------------

    def iexpr(self) -> IndexExpr:
        e = self.iterm()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            e = IOp(op, e, self.iterm())
        return e

    def iterm(self) -> IndexExpr:
        e = self.ifactor()
        while self.peek().text == "*":
            self.next()
            e = IOp("*", e, self.ifactor())
        return e

    def ifactor(self) -> IndexExpr:
        t = self.peek()
        if t.kind == "num":
            self.next()
            base = ILit(int(t.text))
            if self.peek().text == "^":
                self.next()
                return IOp("^", base, self.ifactor())
            return base
        if t.text in ("true", "false"):
            self.next()
            return EBool(t.text == "true")  # value position only
        if t.text == "complex":
            self.next()
            self.expect("(")
            re_part = self._number()
            self.expect(",")
            im_part = self._number()
            self.expect(")")
            return EComplex(re_part, im_part)
        if t.kind == "id":
            self.next()
            return IVar(t.text)
        if t.text == "(":
            self.next()
            e = self.iexpr()
            self.expect(")")
            return e
        self.fail(f"expected an index expression, found {t.text!r}")

    def prop(self) -> Prop:
        out = self.cmp()
        while self.accept("and"):
            out = PAnd(out, self.cmp())
        return out

    def cmp(self) -> Prop:
        a = self.iexpr()
        op = self.next().text
        b = self.iexpr()
        if op == "<=":
            return PLeq(a, b)
        if op == ">=":
            return PLeq(b, a)
        if op == "<":
            return PLeq(IOp("+", a, ILit(1)), b)
        if op == "=":
            return PAnd(PLeq(a, b), PLeq(b, a))
        self.fail(f"bad comparison {op!r}")

    def isort(self) -> IndexSort:
        if self.accept("nat"):
            return SNat()
        if self.peek().text == "[":
            self.next()
            lo = self.iexpr()
            self.expect("..")
            hi = self.iexpr()
            self.expect("]")
            if lo != ILit(0):
                self.fail("ranges start at 0")
            from .terms import srange

            return srange(hi)
        if self.peek().text == "{":
            self.next()
            var = self.ident()
            self.expect(":")
            base = self.isort()
            self.expect("|")
            p = self.prop()
            self.expect("}")
            return SConstr(var, base, p)
        self.fail("expected an index sort")

    # -- participants and payloads -----------------------------------------

    def participant(self) -> Participant:
        name = self.ident() if self.peek().kind == "id" else self.next().text
        idx = []
        while self.peek().text == "[":
            self.next()
            idx.append(self.iexpr())
            self.expect("]")
        return Participant(name, tuple(idx))

    def payload(self) -> PayloadType:
        if self.accept("nat"):
            return PNat()
        if self.accept("bool"):
            return PBool()
        if self.accept("<"):
            g = self.gtype()
            self.expect(">")
            return PShared(g)
        if self.accept("("):
            t = self.ltype()
            self.expect(")")
            return PSession(t)
        self.fail("expected a payload type")

    def guard(self):
        save = self.pos
        try:
            p = self.participant()
            if self.accept("="):
                return GuardEq(p, self.participant())
        except ParseError:
            pass
        self.pos = save
        return GuardIdx(self.iexpr())

    # -- global types --------------------------------------------------------

    def gtype(self) -> GlobalType:
        left = self.gterm()
        if self.accept(";"):
            return gseq(left, self.gtype())
        return left

    def gterm(self) -> GlobalType:
        t = self.peek()
        out: GlobalType
        if t.text == "end":
            self.next()
            out = GEnd()
        elif t.text == "mu":
            self.next()
            var = self.ident()
            self.expect(".")
            self.tvars_in_scope.add(var)
            out = GMu(var, self.gtype())
        elif t.text == "R":
            self.next()
            base = self.gterm()
            self.expect("with")
            self.expect("(")
            ivar = self.ident()
            self.expect(":")
            sort = self.isort()
            self.expect(",")
            tvar = self.ident()
            self.expect(")")
            self.expect("{")
            self.tvars_in_scope.add(tvar)
            body = self.gtype()
            self.expect("}")
            out = GRec(base, ivar, sort, tvar, body)
        elif t.text in ("foreach", "foreach_inc"):
            self.next()
            inc = t.text == "foreach_inc"
            var = self.ident()
            self.expect("<")
            bound = self.iexpr()
            self.expect("{")
            body = self.gtype()
            self.expect("}")
            if inc:
                # increasing iteration: flip the index inside the body
                flipped = subst_index(
                    body, var, isub(isub(bound, ILit(1)), IVar(var))
                )
                out = gforeach(var, bound, flipped)
            else:
                out = gforeach(var, bound, body)
        elif t.text == "pi":
            self.next()
            var = self.ident()
            self.expect(":")
            sort = self.isort()
            self.expect(".")
            out = gpi(var, sort, self.gtype())
        elif t.text == "if":
            self.next()
            g = self.guard()
            self.expect("then")
            then = self.gtype()
            self.expect("else")
            els = self.gtype()
            out = GCond(g, then, els)
        elif t.text == "(":
            self.next()
            out = self.gtype()
            self.expect(")")
        elif t.kind == "id":
            if self.peek(1).text in ("->", "["):
                out = self.gmsg()
            else:
                out = GTVar(self.ident())
        else:
            self.fail(f"expected a global type, found {t.text!r}")
        while self.accept("@"):
            out = GApp(out, self.ifactor())
        return out

    def gmsg(self) -> GlobalType:
        frm = self.participant()
        if self.peek().text != "->":
            return GTVar(frm.name) if not frm.indices else self.fail("stray indices")
        self.expect("->")
        to = self.participant()
        if self.accept("{"):
            branches = []
            while True:
                label = self.ident()
                self.expect(":")
                branches.append((label, self.gtype()))
                if not self.accept(","):
                    break
            self.expect("}")
            return GBra(frm, to, tuple(branches))
        self.expect(":")
        u = self.payload()
        if self.accept("."):
            return GMsg(frm, to, u, self.gtype())
        return GMsg(frm, to, u, GEnd())

    # -- local types ----------------------------------------------------------

    def ltype(self) -> LocalType:
        left = self.lterm()
        if self.accept(";"):
            return lseq(left, self.ltype())
        return left

    def lterm(self) -> LocalType:
        t = self.peek()
        out: LocalType
        if t.text == "end":
            self.next()
            out = LEnd()
        elif t.text == "mu":
            self.next()
            var = self.ident()
            self.expect(".")
            out = LMu(var, self.ltype())
        elif t.text == "!":
            self.next()
            self.expect("<")
            to = self.participant()
            self.expect(",")
            u = self.payload()
            self.expect(">")
            self.expect(".")
            out = LOut(to, u, self.ltype())
        elif t.text == "?":
            self.next()
            self.expect("<")
            frm = self.participant()
            self.expect(",")
            u = self.payload()
            self.expect(">")
            self.expect(".")
            out = LIn(frm, u, self.ltype())
        elif t.text in ("sel", "bra"):
            self.next()
            self.expect("<")
            who = self.participant()
            self.expect(">")
            self.expect("{")
            branches = []
            while True:
                label = self.ident()
                self.expect(":")
                branches.append((label, self.ltype()))
                if not self.accept(","):
                    break
            self.expect("}")
            out = (
                LSel(who, tuple(branches))
                if t.text == "sel"
                else LBra(who, tuple(branches))
            )
        elif t.text == "R":
            self.next()
            base = self.lterm()
            self.expect("with")
            self.expect("(")
            ivar = self.ident()
            self.expect(":")
            sort = self.isort()
            self.expect(",")
            tvar = self.ident()
            self.expect(")")
            self.expect("{")
            body = self.ltype()
            self.expect("}")
            out = LRec(base, ivar, sort, tvar, body)
        elif t.text == "foreach":
            self.next()
            var = self.ident()
            self.expect("<")
            bound = self.iexpr()
            self.expect("{")
            body = self.ltype()
            self.expect("}")
            out = lforeach(var, bound, body)
        elif t.text == "if":
            self.next()
            g = self.guard()
            self.expect("then")
            then = self.ltype()
            self.expect("else")
            out = LCond(g, then, self.ltype())
        elif t.text == "(":
            self.next()
            out = self.ltype()
            self.expect(")")
        elif t.kind == "id":
            out = LTVar(self.ident())
        else:
            self.fail(f"expected a local type, found {t.text!r}")
        while self.accept("@"):
            out = LApp(out, self.ifactor())
        return out

    # -- processes --------------------------------------------------------------

    def expr(self) -> Expr:
        t = self.peek()
        if t.text == "true":
            self.next()
            return EBool(True)
        if t.text == "false":
            self.next()
            return EBool(False)
        if t.text == "complex":
            self.next()
            self.expect("(")
            re_tok = self._number()
            self.expect(",")
            im_tok = self._number()
            self.expect(")")
            return EComplex(re_tok, im_tok)
        return self.iexpr()

    def _number(self) -> float:
        neg = self.accept("-")
        t = self.next()
        if t.kind not in ("num", "float"):
            self.fail("expected a number")
        v = float(t.text)
        return -v if neg else v

    def ptau(self) -> ProcessType:
        if self.accept("pi"):
            var = self.ident()
            self.expect(":")
            sort = self.isort()
            self.expect(".")
            return TPi(var, sort, self.ptau())
        self.expect("{")
        entries = []
        if self.peek().text != "}":
            while True:
                chan = self.ident()
                self.expect(":")
                entries.append((ChVar(chan), GLocal(self.ltype())))
                if not self.accept(","):
                    break
        self.expect("}")
        return TSess(SessionEnv(tuple(entries)))

    def proc(self) -> Process:
        t = self.peek()
        out: Process
        if t.text == "0":
            self.next()
            return PZero()
        if t.text == "init":
            self.next()
            chan = self.ident()
            self.expect("[")
            parts = [self.participant()]
            while self.accept(","):
                parts.append(self.participant())
            self.expect("]")
            self.expect("(")
            bind = self.ident()
            self.expect(")")
            self.expect(".")
            return PInit(chan, tuple(parts), bind, self.proc())
        if t.text == "acc":
            self.next()
            chan = self.ident()
            self.expect("[")
            who = self.participant()
            self.expect("]")
            self.expect("(")
            bind = self.ident()
            self.expect(")")
            self.expect(".")
            return PAcc(chan, who, bind, self.proc())
        if t.text == "new":
            self.next()
            name = self.ident()
            annot = None
            if self.accept(":"):
                self.expect("<")
                annot = self.gtype()
                self.expect(">")
            self.expect(".")
            return PNew(name, annot, self.proc())
        if t.text == "mu":
            self.next()
            var = self.ident()
            annot = None
            if self.accept(":"):
                annot = self.ptau()
            self.expect(".")
            return PMu(var, annot, self.proc())
        if t.text == "ext":
            self.next()
            chan = self.ident()
            self.expect("!")
            e = self.expr()
            self.expect(".")
            return PSend(chan, Participant("0"), e, self.proc())
        if t.text == "R":
            self.next()
            base = self.proc()
            self.expect("with")
            self.expect("(")
            ivar = self.ident()
            self.expect(":")
            sort = self.isort()
            self.expect(",")
            pvar = self.ident()
            annot = None
            if self.accept(":"):
                annot = self.ptau()
            self.expect(")")
            self.expect("{")
            body = self.proc()
            self.expect("}")
            out = PPRec(base, ivar, sort, pvar, annot, body)
            while self.accept("@"):
                out = PApp(out, self.ifactor())
            return out
        if t.text == "(":
            self.next()
            out = self.proc()
            while self.accept("|"):
                out = PPar(out, self.proc())
            self.expect(")")
            while self.accept("@"):
                out = PApp(out, self.ifactor())
            return out
        if t.kind == "id":
            nxt = self.peek(1).text
            if nxt in ("!", "?", "sel", "bra", "!!", "??"):
                chan = self.ident()
                return self.prefix(chan)
            return PVar(self.ident())
        self.fail(f"expected a process, found {t.text!r}")

    def prefix(self, chan: str) -> Process:
        t = self.next()
        if t.text == "!":
            self.expect("<")
            to = self.participant()
            self.expect(",")
            e = self.expr()
            self.expect(">")
            self.expect(".")
            return PSend(chan, to, e, self.proc())
        if t.text == "?":
            self.expect("(")
            frm = self.participant()
            self.expect(",")
            var = self.ident()
            annot = None
            if self.accept(":"):
                annot = self.payload()
            self.expect(")")
            self.expect(".")
            return PRecv(chan, frm, var, annot, self.proc())
        if t.text == "!!":
            self.expect("<")
            to = self.participant()
            self.expect(",")
            sent = self.ident()
            self.expect(":")
            sent_type = self.ltype()
            self.expect(">")
            self.expect(".")
            return PDeleg(chan, to, sent, sent_type, self.proc())
        if t.text == "??":
            self.expect("(")
            frm = self.participant()
            self.expect(",")
            bind = self.ident()
            annot = None
            if self.accept(":"):
                annot = self.ltype()
            self.expect(")")
            self.expect(".")
            return PCatch(chan, frm, bind, annot, self.proc())
        if t.text == "sel":
            self.expect("<")
            to = self.participant()
            self.expect(">")
            label = self.ident()
            self.expect(".")
            return PSel(chan, to, label, self.proc())
        if t.text == "bra":
            self.expect("<")
            frm = self.participant()
            self.expect(">")
            self.expect("{")
            branches = []
            while True:
                label = self.ident()
                self.expect(":")
                branches.append((label, self.proc()))
                if not self.accept(","):
                    break
            self.expect("}")
            return PBra(chan, frm, tuple(branches))
        self.fail(f"bad prefix {t.text!r}")

    # -- declarations ---------------------------------------------------------

    def params(self) -> tuple[tuple[str, IndexSort], ...]:
        if not self.accept("("):
            return ()
        out = []
        while True:
            name = self.ident()
            self.expect(":")
            out.append((name, self.isort()))
            if not self.accept(","):
                break
        self.expect(")")
        return tuple(out)

    def file(self) -> SourceFile:
        out = SourceFile()
        names: set[str] = set()
        while self.peek().kind != "eof":
            t = self.next()
            if t.text == "global":
                name = self.ident()
                ps = self.params()
                self.expect("=")
                out.decls.append(GlobalDecl(name, ps, self.gtype()))
            elif t.text == "local":
                name = self.ident()
                ps = self.params()
                self.expect("=")
                out.decls.append(LocalDecl(name, ps, self.ltype()))
            elif t.text == "proc":
                name = self.ident()
                ps = self.params()
                self.expect("=")
                out.decls.append(ProcDecl(name, ps, self.proc()))
            elif t.text == "channel":
                name = self.ident()
                self.expect(":")
                self.expect("<")
                ref = self.ident()
                self.expect(">")
                out.decls.append(SharedChanDecl(name, ref))
                if out.lookup(ref) is None or not isinstance(
                    out.lookup(ref), GlobalDecl
                ):
                    raise ParseError(
                        Diagnostic("Parse", f"unresolved global {ref!r}", t.span())
                    )
            else:
                raise ParseError(
                    Diagnostic("Parse", f"expected a declaration, found {t.text!r}", t.span())
                )
            if out.decls[-1].name in names:
                raise ParseError(
                    Diagnostic("Parse", f"duplicate declaration {out.decls[-1].name!r}", t.span())
                )
            names.add(out.decls[-1].name)
        return out


def parse(text: str) -> SourceFile:
    return Parser(text).file()


def parse_gtype(text: str) -> GlobalType:
    p = Parser(text)
    out = p.gtype()
    if p.peek().kind != "eof":
        p.fail("trailing input after type")
    return out


def parse_ltype(text: str) -> LocalType:
    p = Parser(text)
    out = p.ltype()
    if p.peek().kind != "eof":
        p.fail("trailing input after type")
    return out


def parse_proc(text: str) -> Process:
    p = Parser(text)
    out = p.proc()
    if p.peek().kind != "eof":
        p.fail("trailing input after process")
    return out


# ---------------------------------------------------------------------------
# Printing (inverse of the parser up to alpha-equivalence)


def print_iexpr(e: IndexExpr) -> str:
    if isinstance(e, IVar):
        return e.name
    if isinstance(e, ILit):
        return str(e.value)
    # operands may be value expressions (complex literals) in process bodies
    return f"({print_expr(e.left)} {e.op} {print_expr(e.right)})"


def print_prop(p: Prop) -> str:
    from .terms import prop_conjuncts

    parts = [f"{print_iexpr(c.left)} <= {print_iexpr(c.right)}" for c in prop_conjuncts(p)]
    return " and ".join(parts) if parts else "0 <= 0"


def print_sort(s: IndexSort) -> str:
    from .terms import as_range

    if isinstance(s, SNat):
        return "nat"
    if isinstance(s, SEmpty):
        return "[0..0]"  # only ever appears as a predecessor result
    r = as_range(s)
    if r is not None:
        return f"[0..{print_iexpr(r)}]"
    return f"{{{s.var}:{print_sort(s.base)} | {print_prop(s.constraint)}}}"


def print_participant(p: Participant) -> str:
    return p.name + "".join(f"[{print_iexpr(i)}]" for i in p.indices)


def print_payload(u: PayloadType) -> str:
    if isinstance(u, PNat):
        return "nat"
    if isinstance(u, PBool):
        return "bool"
    if isinstance(u, PShared):
        return f"<{print_type(u.gtype)}>"
    return f"({print_type(u.ltype)})"


def _print_guard(g) -> str:
    if isinstance(g, GuardEq):
        return f"{print_participant(g.left)} = {print_participant(g.right)}"
    return print_iexpr(g.expr)


def print_type(t: SessionType) -> str:
    if isinstance(t, (GEnd, LEnd)):
        return "end"
    if isinstance(t, (GTVar, LTVar)):
        return t.name
    if isinstance(t, GMsg):
        return (
            f"{print_participant(t.frm)} -> {print_participant(t.to)} : "
            f"{print_payload(t.payload)} . {print_type(t.cont)}"
        )
    if isinstance(t, GBra):
        body = ", ".join(f"{l}: {print_type(b)}" for l, b in t.branches)
        return f"{print_participant(t.frm)} -> {print_participant(t.to)} {{ {body} }}"
    if isinstance(t, LOut):
        return f"!<{print_participant(t.to)}, {print_payload(t.payload)}>. {print_type(t.cont)}"
    if isinstance(t, LIn):
        return f"?<{print_participant(t.frm)}, {print_payload(t.payload)}>. {print_type(t.cont)}"
    if isinstance(t, LSel):
        body = ", ".join(f"{l}: {print_type(b)}" for l, b in t.branches)
        return f"sel<{print_participant(t.to)}> {{ {body} }}"
    if isinstance(t, LBra):
        body = ", ".join(f"{l}: {print_type(b)}" for l, b in t.branches)
        return f"bra<{print_participant(t.frm)}> {{ {body} }}"
    if isinstance(t, (GMu, LMu)):
        return f"mu {t.var} . {print_type(t.body)}"
    if isinstance(t, (GRec, LRec)):
        return (
            f"R {_print_atom(t.base)} with ({t.ivar}:{print_sort(t.isort)}, {t.tvar})"
            f" {{ {print_type(t.body)} }}"
        )
    if isinstance(t, (GApp, LApp)):
        return f"({print_type(t.fn)}) @ {_print_arg(t.arg)}"
    if isinstance(t, (GCond, LCond)):
        return (
            f"if {_print_guard(t.guard)} then ({print_type(t.then)}) "
            f"else ({print_type(t.els)})"
        )
    raise TypeError(f"not a type: {t!r}")


def _print_atom(t: SessionType) -> str:
    s = print_type(t)
    if isinstance(t, (GEnd, LEnd, GTVar, LTVar, GApp, LApp)):
        return s
    return f"({s})"


def _print_arg(e: IndexExpr) -> str:
    if isinstance(e, (IVar, ILit)):
        return print_iexpr(e)
    return f"({print_iexpr(e)})"


def print_expr(e: Expr) -> str:
    if isinstance(e, EBool):
        return "true" if e.value else "false"
    if isinstance(e, EComplex):
        return f"complex({e.re!r}, {e.im!r})"
    if isinstance(e, ENameRef):
        return e.name
    return print_iexpr(e)


def print_tau(tau: ProcessType) -> str:
    if isinstance(tau, TPi):
        return f"pi {tau.ivar}:{print_sort(tau.isort)}. {print_tau(tau.body)}"
    inner = ", ".join(
        f"{c.name}: {print_type(g.ltype)}"
        for c, g in tau.env.entries
        if isinstance(c, ChVar) and isinstance(g, GLocal)
    )
    return f"{{{inner}}}"


def print_proc(p: Process) -> str:
    if isinstance(p, PZero):
        return "0"
    if isinstance(p, PInit):
        parts = ", ".join(print_participant(q) for q in p.participants)
        return f"init {p.chan} [{parts}] ({p.bind}) . {print_proc(p.body)}"
    if isinstance(p, PAcc):
        return (
            f"acc {p.chan} [{print_participant(p.participant)}] ({p.bind}) . "
            f"{print_proc(p.body)}"
        )
    if isinstance(p, PSend):
        if isinstance(p.chan, str) and p.to == Participant("0"):
            return f"ext {p.chan} ! {print_expr(p.expr)} . {print_proc(p.cont)}"
        return (
            f"{p.chan} !<{print_participant(p.to)}, {print_expr(p.expr)}> . "
            f"{print_proc(p.cont)}"
        )
    if isinstance(p, PRecv):
        annot = f": {print_payload(p.annot)}" if p.annot else ""
        return (
            f"{p.chan} ?({print_participant(p.frm)}, {p.var}{annot}) . "
            f"{print_proc(p.cont)}"
        )
    if isinstance(p, PDeleg):
        return (
            f"{p.chan} !!<{print_participant(p.to)}, {p.sent}: "
            f"{print_type(p.sent_type)}> . {print_proc(p.cont)}"
        )
    if isinstance(p, PCatch):
        annot = f": {print_type(p.annot)}" if p.annot else ""
        return (
            f"{p.chan} ??({print_participant(p.frm)}, {p.bind}{annot}) . "
            f"{print_proc(p.cont)}"
        )
    if isinstance(p, PSel):
        return (
            f"{p.chan} sel<{print_participant(p.to)}> {p.label} . "
            f"{print_proc(p.cont)}"
        )
    if isinstance(p, PBra):
        body = ", ".join(f"{l}: {print_proc(b)}" for l, b in p.branches)
        return f"{p.chan} bra<{print_participant(p.frm)}> {{ {body} }}"
    if isinstance(p, PMu):
        annot = f": {print_tau(p.annot)}" if p.annot else ""
        return f"mu {p.var}{annot} . {print_proc(p.body)}"
    if isinstance(p, PVar):
        return p.name
    if isinstance(p, PPRec):
        annot = f": {print_tau(p.annot)}" if p.annot else ""
        return (
            f"R ({print_proc(p.base)}) with ({p.ivar}:{print_sort(p.isort)}, "
            f"{p.pvar}{annot}) {{ {print_proc(p.body)} }}"
        )
    if isinstance(p, PApp):
        return f"({print_proc(p.proc)}) @ {_print_arg(p.arg)}"
    if isinstance(p, PNew):
        annot = f": <{print_type(p.annot)}>" if p.annot else ""
        return f"new {p.name}{annot} . {print_proc(p.body)}"
    if isinstance(p, PPar):
        return f"({print_proc(p.left)} | {print_proc(p.right)})"
    raise TypeError(f"cannot print runtime process {p!r}")


def print_decl(d: Decl) -> str:
    if isinstance(d, SharedChanDecl):
        return f"channel {d.name} : <{d.global_ref}>"
    ps = ""
    if d.params:
        ps = "(" + ", ".join(f"{n}: {print_sort(s)}" for n, s in d.params) + ")"
    if isinstance(d, GlobalDecl):
        return f"global {d.name}{ps} = {print_type(d.body)}"
    if isinstance(d, LocalDecl):
        return f"local {d.name}{ps} = {print_type(d.body)}"
    return f"proc {d.name}{ps} = {print_proc(d.body)}"


def print_file(f: SourceFile) -> str:
    return "\n".join(print_decl(d) for d in f.decls) + "\n"


# ---------------------------------------------------------------------------
# JSON export (schema version 1, sorted keys, stable bytes)

SCHEMA_VERSION = 1


def _expr_json(e: IndexExpr) -> object:
    if isinstance(e, IVar):
        return {"t": "var", "name": e.name}
    if isinstance(e, ILit):
        return {"t": "lit", "value": e.value}
    return {"t": "op", "op": e.op, "left": _expr_json(e.left), "right": _expr_json(e.right)}


def _sort_json(s: IndexSort) -> object:
    if isinstance(s, SNat):
        return {"t": "nat"}
    if isinstance(s, SEmpty):
        return {"t": "empty"}
    return {
        "t": "constr",
        "var": s.var,
        "base": _sort_json(s.base),
        "prop": _prop_json(s.constraint),
    }


def _prop_json(p: Prop) -> object:
    if isinstance(p, PTrue):
        return {"t": "true"}
    if isinstance(p, PLeq):
        return {"t": "leq", "left": _expr_json(p.left), "right": _expr_json(p.right)}
    return {"t": "and", "left": _prop_json(p.left), "right": _prop_json(p.right)}


def _part_json(p: Participant) -> object:
    return {"name": p.name, "indices": [_expr_json(i) for i in p.indices]}


def _payload_json(u: PayloadType) -> object:
    if isinstance(u, PNat):
        return {"t": "nat"}
    if isinstance(u, PBool):
        return {"t": "bool"}
    if isinstance(u, PShared):
        return {"t": "shared", "global": _type_json(u.gtype)}
    return {"t": "session", "local": _type_json(u.ltype)}


def _guard_json(g) -> object:
    if isinstance(g, GuardEq):
        return {"t": "eq", "left": _part_json(g.left), "right": _part_json(g.right)}
    return {"t": "idx", "expr": _expr_json(g.expr)}


def _type_json(t: SessionType) -> dict:
    if isinstance(t, (GEnd, LEnd)):
        return {"t": "end"}
    if isinstance(t, (GTVar, LTVar)):
        return {"t": "tvar", "name": t.name}
    if isinstance(t, GMsg):
        return {
            "t": "msg",
            "from": _part_json(t.frm),
            "to": _part_json(t.to),
            "payload": _payload_json(t.payload),
            "cont": _type_json(t.cont),
        }
    if isinstance(t, GBra):
        return {
            "t": "gbra",
            "from": _part_json(t.frm),
            "to": _part_json(t.to),
            "branches": [[l, _type_json(b)] for l, b in t.branches],
        }
    if isinstance(t, LOut):
        return {
            "t": "out",
            "to": _part_json(t.to),
            "payload": _payload_json(t.payload),
            "cont": _type_json(t.cont),
        }
    if isinstance(t, LIn):
        return {
            "t": "in",
            "from": _part_json(t.frm),
            "payload": _payload_json(t.payload),
            "cont": _type_json(t.cont),
        }
    if isinstance(t, LSel):
        return {
            "t": "sel",
            "to": _part_json(t.to),
            "branches": [[l, _type_json(b)] for l, b in t.branches],
        }
    if isinstance(t, LBra):
        return {
            "t": "bra",
            "from": _part_json(t.frm),
            "branches": [[l, _type_json(b)] for l, b in t.branches],
        }
    if isinstance(t, (GMu, LMu)):
        return {"t": "mu", "var": t.var, "body": _type_json(t.body)}
    if isinstance(t, (GRec, LRec)):
        return {
            "t": "rec",
            "base": _type_json(t.base),
            "ivar": t.ivar,
            "isort": _sort_json(t.isort),
            "tvar": t.tvar,
            "body": _type_json(t.body),
        }
    if isinstance(t, (GApp, LApp)):
        return {"t": "app", "fn": _type_json(t.fn), "arg": _expr_json(t.arg)}
    if isinstance(t, (GCond, LCond)):
        return {
            "t": "cond",
            "guard": _guard_json(t.guard),
            "then": _type_json(t.then),
            "else": _type_json(t.els),
        }
    raise TypeError(f"not a type: {t!r}")


def export_json(t: SessionType) -> bytes:
    doc = dict(_type_json(t))
    doc["v"] = SCHEMA_VERSION
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def _detect_local(doc) -> Optional[bool]:
    """Infer the type family from distinctive node tags; None if neutral."""
    tag = doc.get("t") if isinstance(doc, dict) else None
    if tag in ("msg", "gbra"):
        return False
    if tag in ("out", "in", "sel", "bra"):
        return True
    if isinstance(doc, dict):
        for v in doc.values():
            got = _detect_local(v)
            if got is not None:
                return got
    if isinstance(doc, list):
        for v in doc:
            got = _detect_local(v)
            if got is not None:
                return got
    return None


def _expr_from(doc) -> IndexExpr:
    if doc["t"] == "var":
        return IVar(doc["name"])
    if doc["t"] == "lit":
        return ILit(doc["value"])
    return IOp(doc["op"], _expr_from(doc["left"]), _expr_from(doc["right"]))


def _sort_from(doc) -> IndexSort:
    if doc["t"] == "nat":
        return SNat()
    if doc["t"] == "empty":
        return SEmpty()
    return SConstr(doc["var"], _sort_from(doc["base"]), _prop_from(doc["prop"]))


def _prop_from(doc) -> Prop:
    if doc["t"] == "true":
        return PTrue()
    if doc["t"] == "leq":
        return PLeq(_expr_from(doc["left"]), _expr_from(doc["right"]))
    return PAnd(_prop_from(doc["left"]), _prop_from(doc["right"]))


def _part_from(doc) -> Participant:
    return Participant(doc["name"], tuple(_expr_from(i) for i in doc["indices"]))


def _payload_from(doc) -> PayloadType:
    if doc["t"] == "nat":
        return PNat()
    if doc["t"] == "bool":
        return PBool()
    if doc["t"] == "shared":
        return PShared(_type_from(doc["global"], True))
    return PSession(_type_from(doc["local"], False))


def _guard_from(doc):
    if doc["t"] == "eq":
        return GuardEq(_part_from(doc["left"]), _part_from(doc["right"]))
    return GuardIdx(_expr_from(doc["expr"]))


def _type_from(doc, is_glob: bool) -> SessionType:
    k = doc["t"]
    if k == "end":
        return GEnd() if is_glob else LEnd()
    if k == "tvar":
        return GTVar(doc["name"]) if is_glob else LTVar(doc["name"])
    if k == "msg":
        return GMsg(
            _part_from(doc["from"]),
            _part_from(doc["to"]),
            _payload_from(doc["payload"]),
            _type_from(doc["cont"], True),
        )
    if k == "gbra":
        return GBra(
            _part_from(doc["from"]),
            _part_from(doc["to"]),
            tuple((l, _type_from(b, True)) for l, b in doc["branches"]),
        )
    if k == "out":
        return LOut(
            _part_from(doc["to"]),
            _payload_from(doc["payload"]),
            _type_from(doc["cont"], False),
        )
    if k == "in":
        return LIn(
            _part_from(doc["from"]),
            _payload_from(doc["payload"]),
            _type_from(doc["cont"], False),
        )
    if k == "sel":
        return LSel(
            _part_from(doc["to"]),
            tuple((l, _type_from(b, False)) for l, b in doc["branches"]),
        )
    if k == "bra":
        return LBra(
            _part_from(doc["from"]),
            tuple((l, _type_from(b, False)) for l, b in doc["branches"]),
        )
    if k == "mu":
        cls = GMu if is_glob else LMu
        return cls(doc["var"], _type_from(doc["body"], is_glob))
    if k == "rec":
        cls = GRec if is_glob else LRec
        return cls(
            _type_from(doc["base"], is_glob),
            doc["ivar"],
            _sort_from(doc["isort"]),
            doc["tvar"],
            _type_from(doc["body"], is_glob),
        )
    if k == "app":
        cls = GApp if is_glob else LApp
        return cls(_type_from(doc["fn"], is_glob), _expr_from(doc["arg"]))
    if k == "cond":
        cls = GCond if is_glob else LCond
        return cls(
            _guard_from(doc["guard"]),
            _type_from(doc["then"], is_glob),
            _type_from(doc["else"], is_glob),
        )
    raise ParseError(diag("Json", f"unknown node tag {k!r}"))


def import_json(data: bytes) -> SessionType:
    doc = json.loads(data)
    if doc.get("v") != SCHEMA_VERSION:
        raise ParseError(diag("Json", f"unsupported schema version {doc.get('v')}"))
    local = _detect_local(doc)
    return _type_from(doc, not local)
