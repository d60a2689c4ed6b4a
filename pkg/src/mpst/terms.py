"""Syntax trees shared by every pass: index expressions, sorts, participants,
global/local session types, processes, environments and kinds.

All nodes are immutable (frozen dataclasses), so terms can be shared freely,
used as dict keys, and compared structurally. Substitution is capture-avoiding;
``alpha_eq`` compares up to bound-name renaming.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Union


# ---------------------------------------------------------------------------
# Index expressions: arithmetic over naturals


@dataclass(frozen=True)
class IVar:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ILit:
    value: int

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError("index literals are nonnegative")

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class IOp:
    op: str  # one of + - * ^
    left: IndexExpr
    right: IndexExpr

    def __post_init__(self) -> None:
        if self.op not in ("+", "-", "*", "^"):
            raise ValueError(f"bad index operator {self.op!r}")
        # exponentiation is only supported with a literal base (e.g. 2^n)
        if self.op == "^" and not isinstance(self.left, ILit):
            raise ValueError("exponent base must be a literal")

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


IndexExpr = Union[IVar, ILit, IOp]


def ivar(name: str) -> IVar:
    return IVar(name)


def ilit(n: int) -> ILit:
    return ILit(n)


def iadd(a: IndexExpr, b: IndexExpr) -> IndexExpr:
    return IOp("+", a, b)


def isub(a: IndexExpr, b: IndexExpr) -> IndexExpr:
    return IOp("-", a, b)


def imul(a: IndexExpr, b: IndexExpr) -> IndexExpr:
    return IOp("*", a, b)


def ipow2(e: IndexExpr) -> IndexExpr:
    return IOp("^", ILit(2), e)


def free_ivars(e: IndexExpr) -> frozenset[str]:
    if isinstance(e, IVar):
        return frozenset((e.name,))
    if isinstance(e, ILit):
        return frozenset()
    return free_ivars(e.left) | free_ivars(e.right)


def subst_iexpr(e: IndexExpr, var: str, value: IndexExpr) -> IndexExpr:
    if isinstance(e, IVar):
        return value if e.name == var else e
    if isinstance(e, ILit):
        return e
    return IOp(e.op, subst_iexpr(e.left, var, value), subst_iexpr(e.right, var, value))


# ---------------------------------------------------------------------------
# Propositions: conjunctions of inequalities


@dataclass(frozen=True)
class PTrue:
    def __str__(self) -> str:
        return "true"


@dataclass(frozen=True)
class PLeq:
    left: IndexExpr
    right: IndexExpr

    def __str__(self) -> str:
        return f"{self.left} <= {self.right}"


@dataclass(frozen=True)
class PAnd:
    left: Prop
    right: Prop

    def __str__(self) -> str:
        return f"{self.left} and {self.right}"


Prop = Union[PTrue, PLeq, PAnd]


def prop_conjuncts(p: Prop) -> Iterator[PLeq]:
    if isinstance(p, PAnd):
        yield from prop_conjuncts(p.left)
        yield from prop_conjuncts(p.right)
    elif isinstance(p, PLeq):
        yield p


def conj(*ps: Prop) -> Prop:
    out: Prop = PTrue()
    for p in ps:
        if isinstance(p, PTrue):
            continue
        out = p if isinstance(out, PTrue) else PAnd(out, p)
    return out


def free_pvars(p: Prop) -> frozenset[str]:
    out: frozenset[str] = frozenset()
    for leq in prop_conjuncts(p):
        out |= free_ivars(leq.left) | free_ivars(leq.right)
    return out


def subst_prop(p: Prop, var: str, value: IndexExpr) -> Prop:
    if isinstance(p, PTrue):
        return p
    if isinstance(p, PLeq):
        return PLeq(subst_iexpr(p.left, var, value), subst_iexpr(p.right, var, value))
    return PAnd(subst_prop(p.left, var, value), subst_prop(p.right, var, value))


# ---------------------------------------------------------------------------
# Index sorts


@dataclass(frozen=True)
class SNat:
    def __str__(self) -> str:
        return "nat"


@dataclass(frozen=True)
class SConstr:
    """Constrained sort {var : base | constraint}."""

    var: str
    base: IndexSort
    constraint: Prop

    def __str__(self) -> str:
        rng = as_range(self)
        if rng is not None:
            return f"[0..{rng}]"
        return f"{{{self.var}:{self.base} | {self.constraint}}}"


@dataclass(frozen=True)
class SEmpty:
    """The empty sort, produced as the predecessor of [0..0]."""

    def __str__(self) -> str:
        return "empty"


IndexSort = Union[SNat, SConstr, SEmpty]


def srange(hi: IndexExpr, var: str = "%r") -> SConstr:
    """The range sort [0..hi]."""
    return SConstr(var, SNat(), PLeq(IVar(var), hi))


def as_range(sort: IndexSort) -> Optional[IndexExpr]:
    """Return hi when ``sort`` is literally [0..hi], else None."""
    if (
        isinstance(sort, SConstr)
        and isinstance(sort.base, SNat)
        and isinstance(sort.constraint, PLeq)
        and sort.constraint.left == IVar(sort.var)
    ):
        return sort.constraint.right
    return None


def sort_free_vars(sort: IndexSort) -> frozenset[str]:
    if isinstance(sort, (SNat, SEmpty)):
        return frozenset()
    return sort_free_vars(sort.base) | (free_pvars(sort.constraint) - {sort.var})


def subst_sort(sort: IndexSort, var: str, value: IndexExpr) -> IndexSort:
    if isinstance(sort, (SNat, SEmpty)):
        return sort
    if sort.var == var:
        return SConstr(sort.var, subst_sort(sort.base, var, value), sort.constraint)
    return SConstr(
        sort.var,
        subst_sort(sort.base, var, value),
        subst_prop(sort.constraint, var, value),
    )


# ---------------------------------------------------------------------------
# Participants


@dataclass(frozen=True)
class Participant:
    name: str
    indices: tuple[IndexExpr, ...] = ()

    def __str__(self) -> str:
        return self.name + "".join(f"[{i}]" for i in self.indices)

    def is_ground(self) -> bool:
        return all(not free_ivars(i) for i in self.indices)


def part(name: str, *indices: IndexExpr | int) -> Participant:
    return Participant(
        name, tuple(ILit(i) if isinstance(i, int) else i for i in indices)
    )


def subst_participant(p: Participant, var: str, value: IndexExpr) -> Participant:
    return Participant(p.name, tuple(subst_iexpr(i, var, value) for i in p.indices))


def eval_participant_ground(p: Participant) -> Participant:
    """Evaluate all indices of a ground participant to literals."""
    from .indices import eval_nat  # local import: indices depends on terms

    return Participant(p.name, tuple(ILit(eval_nat(i)) for i in p.indices))


# ---------------------------------------------------------------------------
# Payload types


@dataclass(frozen=True)
class PNat:
    def __str__(self) -> str:
        return "nat"


@dataclass(frozen=True)
class PBool:
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class PShared:
    """Shared channel type <G>; always closed."""

    gtype: "GlobalType"

    def __str__(self) -> str:
        return f"<{self.gtype}>"


@dataclass(frozen=True)
class PSession:
    """Delegated session payload."""

    ltype: "LocalType"

    def __str__(self) -> str:
        return f"({self.ltype})"


PayloadType = Union[PNat, PBool, PShared, PSession]


# ---------------------------------------------------------------------------
# Conditional guards (derived form)


@dataclass(frozen=True)
class GuardEq:
    left: Participant
    right: Participant

    def __str__(self) -> str:
        return f"{self.left} = {self.right}"


@dataclass(frozen=True)
class GuardIdx:
    """A 0/1-valued index scrutinee; 0 is false, anything else true."""

    expr: IndexExpr

    def __str__(self) -> str:
        return str(self.expr)


Guard = Union[GuardEq, GuardIdx]


# ---------------------------------------------------------------------------
# Global types


@dataclass(frozen=True)
class GEnd:
    def __str__(self) -> str:
        return "end"


@dataclass(frozen=True)
class GMsg:
    frm: Participant
    to: Participant
    payload: PayloadType
    cont: "GlobalType"

    def __str__(self) -> str:
        return f"{self.frm} -> {self.to} : {self.payload} . {self.cont}"


@dataclass(frozen=True)
class GBra:
    frm: Participant
    to: Participant
    branches: tuple[tuple[str, "GlobalType"], ...]

    def __post_init__(self) -> None:
        labels = [l for l, _ in self.branches]
        if len(labels) != len(set(labels)):
            raise ValueError("duplicate branch label")

    def __str__(self) -> str:
        body = ", ".join(f"{l}: {g}" for l, g in self.branches)
        return f"{self.frm} -> {self.to} {{ {body} }}"


@dataclass(frozen=True)
class GMu:
    var: str
    body: "GlobalType"

    def __str__(self) -> str:
        return f"mu {self.var} . {self.body}"


@dataclass(frozen=True)
class GTVar:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class GRec:
    """Primitive recursor: base when the argument hits 0, else one unrolling
    of ``body`` with ``ivar`` bound to the predecessor and ``tvar`` to the
    recursive occurrence. ``isort`` is the sort of the application argument;
    the body variable ranges over its predecessor sort.
    """

    base: "GlobalType"
    ivar: str
    isort: IndexSort
    tvar: str
    body: "GlobalType"

    def __str__(self) -> str:
        return (
            f"R {self.base} with ({self.ivar}:{self.isort}, {self.tvar})"
            f" {{ {self.body} }}"
        )


@dataclass(frozen=True)
class GApp:
    fn: "GlobalType"
    arg: IndexExpr

    def __str__(self) -> str:
        return f"({self.fn} @ {self.arg})"


@dataclass(frozen=True)
class GCond:
    guard: Guard
    then: "GlobalType"
    els: "GlobalType"

    def __str__(self) -> str:
        return f"if {self.guard} then {self.then} else {self.els}"


GlobalType = Union[GEnd, GMsg, GBra, GMu, GTVar, GRec, GApp, GCond]


# ---------------------------------------------------------------------------
# Local (end-point) types


@dataclass(frozen=True)
class LEnd:
    def __str__(self) -> str:
        return "end"


@dataclass(frozen=True)
class LOut:
    to: Participant
    payload: PayloadType
    cont: "LocalType"

    def __str__(self) -> str:
        return f"!<{self.to}, {self.payload}>. {self.cont}"


@dataclass(frozen=True)
class LIn:
    frm: Participant
    payload: PayloadType
    cont: "LocalType"

    def __str__(self) -> str:
        return f"?<{self.frm}, {self.payload}>. {self.cont}"


@dataclass(frozen=True)
class LSel:
    to: Participant
    branches: tuple[tuple[str, "LocalType"], ...]

    def __post_init__(self) -> None:
        labels = [l for l, _ in self.branches]
        if len(labels) != len(set(labels)):
            raise ValueError("duplicate branch label")

    def __str__(self) -> str:
        body = ", ".join(f"{l}: {t}" for l, t in self.branches)
        return f"sel<{self.to}> {{ {body} }}"


@dataclass(frozen=True)
class LBra:
    frm: Participant
    branches: tuple[tuple[str, "LocalType"], ...]

    def __post_init__(self) -> None:
        labels = [l for l, _ in self.branches]
        if len(labels) != len(set(labels)):
            raise ValueError("duplicate branch label")

    def __str__(self) -> str:
        body = ", ".join(f"{l}: {t}" for l, t in self.branches)
        return f"bra<{self.frm}> {{ {body} }}"


@dataclass(frozen=True)
class LMu:
    var: str
    body: "LocalType"

    def __str__(self) -> str:
        return f"mu {self.var} . {self.body}"


@dataclass(frozen=True)
class LTVar:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class LRec:
    base: "LocalType"
    ivar: str
    isort: IndexSort
    tvar: str
    body: "LocalType"

    def __str__(self) -> str:
        return (
            f"R {self.base} with ({self.ivar}:{self.isort}, {self.tvar})"
            f" {{ {self.body} }}"
        )


@dataclass(frozen=True)
class LApp:
    fn: "LocalType"
    arg: IndexExpr

    def __str__(self) -> str:
        return f"({self.fn} @ {self.arg})"


@dataclass(frozen=True)
class LCond:
    guard: Guard
    then: "LocalType"
    els: "LocalType"

    def __str__(self) -> str:
        return f"if {self.guard} then {self.then} else {self.els}"


LocalType = Union[LEnd, LOut, LIn, LSel, LBra, LMu, LTVar, LRec, LApp, LCond]

SessionType = Union[GlobalType, LocalType]

_GLOBAL_OF = {
    GEnd: (LEnd,),
    GMu: (LMu,),
    GTVar: (LTVar,),
    GRec: (LRec,),
    GApp: (LApp,),
    GCond: (LCond,),
}


def is_global(t: SessionType) -> bool:
    return isinstance(t, (GEnd, GMsg, GBra, GMu, GTVar, GRec, GApp, GCond))


# Constructor families, so shared traversals can rebuild either kind of type.
def _family(t: SessionType) -> dict:
    if is_global(t):
        return {
            "end": GEnd,
            "mu": GMu,
            "tvar": GTVar,
            "rec": GRec,
            "app": GApp,
            "cond": GCond,
        }
    return {
        "end": LEnd,
        "mu": LMu,
        "tvar": LTVar,
        "rec": LRec,
        "app": LApp,
        "cond": LCond,
    }


# ---------------------------------------------------------------------------
# Kinds, process types, environments


@dataclass(frozen=True)
class KType:
    def __str__(self) -> str:
        return "Type"


@dataclass(frozen=True)
class KPi:
    ivar: str
    isort: IndexSort
    body: "Kind"

    def __str__(self) -> str:
        return f"Pi {self.ivar}:{self.isort}. {self.body}"


Kind = Union[KType, KPi]


def subst_kind(k: Kind, var: str, value: IndexExpr) -> Kind:
    if isinstance(k, KType):
        return k
    sort = subst_sort(k.isort, var, value)
    if k.ivar == var:
        return KPi(k.ivar, sort, k.body)
    return KPi(k.ivar, sort, subst_kind(k.body, var, value))


@dataclass(frozen=True)
class ChVar:
    """A session channel variable y."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ChEnd:
    """A session endpoint s[p]."""

    session: str
    participant: Participant

    def __str__(self) -> str:
        return f"{self.session}[{self.participant}]"


Channel = Union[ChVar, ChEnd]


@dataclass(frozen=True)
class MOut:
    """Message-send type: a value or channel of this payload is in transit."""

    to: Participant
    payload: PayloadType

    def __str__(self) -> str:
        return f"!m<{self.to}, {self.payload}>"


@dataclass(frozen=True)
class MSel:
    to: Participant
    label: str

    def __str__(self) -> str:
        return f"+m<{self.to}, {self.label}>"


MessageType = Union[MOut, MSel]


@dataclass(frozen=True)
class GLocal:
    ltype: LocalType

    def __str__(self) -> str:
        return str(self.ltype)


@dataclass(frozen=True)
class GMsgs:
    msgs: tuple[MessageType, ...]

    def __str__(self) -> str:
        return "; ".join(str(m) for m in self.msgs)


@dataclass(frozen=True)
class GMsgsThen:
    msgs: tuple[MessageType, ...]
    ltype: LocalType

    def __str__(self) -> str:
        return "; ".join(str(m) for m in self.msgs) + f"; {self.ltype}"


GeneralisedType = Union[GLocal, GMsgs, GMsgsThen]


def gen_then(msgs: tuple[MessageType, ...], t: LocalType) -> GeneralisedType:
    if not msgs:
        return GLocal(t)
    return GMsgsThen(msgs, t)


@dataclass(frozen=True)
class SessionEnv:
    """Ordered map from channels to generalised types; no duplicate channels."""

    entries: tuple[tuple[Channel, GeneralisedType], ...] = ()

    def __post_init__(self) -> None:
        chans = [c for c, _ in self.entries]
        if len(chans) != len(set(chans)):
            raise ValueError("duplicate channel in session environment")

    def lookup(self, c: Channel) -> Optional[GeneralisedType]:
        for c2, t in self.entries:
            if c2 == c:
                return t
        return None

    def without(self, c: Channel) -> "SessionEnv":
        return SessionEnv(tuple((c2, t) for c2, t in self.entries if c2 != c))

    def updated(self, c: Channel, t: GeneralisedType) -> "SessionEnv":
        if self.lookup(c) is None:
            return SessionEnv(self.entries + ((c, t),))
        return SessionEnv(
            tuple((c2, t if c2 == c else t2) for c2, t2 in self.entries)
        )

    def domain(self) -> tuple[Channel, ...]:
        return tuple(c for c, _ in self.entries)

    def __str__(self) -> str:
        if not self.entries:
            return "{}"
        return "{" + ", ".join(f"{c}: {t}" for c, t in self.entries) + "}"


@dataclass(frozen=True)
class TSess:
    env: SessionEnv

    def __str__(self) -> str:
        return str(self.env)


@dataclass(frozen=True)
class TPi:
    ivar: str
    isort: IndexSort
    body: "ProcessType"

    def __str__(self) -> str:
        return f"Pi {self.ivar}:{self.isort}. {self.body}"


ProcessType = Union[TSess, TPi]


@dataclass(frozen=True)
class EntryPred:
    prop: Prop


@dataclass(frozen=True)
class EntrySort:
    name: str
    payload: PayloadType


@dataclass(frozen=True)
class EntryIndex:
    name: str
    isort: IndexSort


@dataclass(frozen=True)
class EntryProc:
    name: str
    ptype: ProcessType


StdEntry = Union[EntryPred, EntrySort, EntryIndex, EntryProc]


@dataclass(frozen=True)
class StdEnv:
    """The standard environment: predicates, sorted names, index variables and
    process variables, in binding order."""

    entries: tuple[StdEntry, ...] = ()

    def bind_names(self) -> tuple[str, ...]:
        out = []
        for e in self.entries:
            if not isinstance(e, EntryPred):
                out.append(e.name)
        return tuple(out)

    def lookup_sort(self, name: str) -> Optional[PayloadType]:
        for e in reversed(self.entries):
            if isinstance(e, EntrySort) and e.name == name:
                return e.payload
        return None

    def lookup_index(self, name: str) -> Optional[IndexSort]:
        for e in reversed(self.entries):
            if isinstance(e, EntryIndex) and e.name == name:
                return e.isort
        return None

    def lookup_proc(self, name: str) -> Optional[ProcessType]:
        for e in reversed(self.entries):
            if isinstance(e, EntryProc) and e.name == name:
                return e.ptype
        return None

    def add(self, entry: StdEntry) -> "StdEnv":
        return StdEnv(self.entries + (entry,))

    def __str__(self) -> str:
        parts = []
        for e in self.entries:
            if isinstance(e, EntryPred):
                parts.append(f"({e.prop})")
            elif isinstance(e, EntrySort):
                parts.append(f"{e.name}:{e.payload}")
            elif isinstance(e, EntryIndex):
                parts.append(f"{e.name}:{e.isort}")
            else:
                parts.append(f"{e.name}:{e.ptype}")
        return ", ".join(parts) if parts else "(empty)"


# ---------------------------------------------------------------------------
# Runtime values, expressions and messages


@dataclass(frozen=True)
class EBool:
    value: bool

    def __str__(self) -> str:
        return "true" if self.value else "false"


@dataclass(frozen=True)
class EComplex:
    re: float
    im: float

    def __str__(self) -> str:
        return f"complex({self.re!r}, {self.im!r})"

    def value(self) -> complex:
        return complex(self.re, self.im)


@dataclass(frozen=True)
class ENameRef:
    """A shared-channel value in expression position."""

    name: str

    def __str__(self) -> str:
        return self.name


Expr = Union[IVar, ILit, IOp, EBool, EComplex, ENameRef]


def subst_expr(e: Expr, var: str, value: Expr) -> Expr:
    if isinstance(e, IVar):
        return value if e.name == var else e
    if isinstance(e, IOp):
        return IOp(e.op, subst_expr(e.left, var, value), subst_expr(e.right, var, value))
    return e


def expr_free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, IVar):
        return frozenset((e.name,))
    if isinstance(e, IOp):
        return expr_free_vars(e.left) | expr_free_vars(e.right)
    return frozenset()


@dataclass(frozen=True)
class BVal:
    expr: Expr  # a ground value expression (literal)

    def __str__(self) -> str:
        return str(self.expr)


@dataclass(frozen=True)
class BChan:
    session: str
    participant: Participant

    def __str__(self) -> str:
        return f"{self.session}[{self.participant}]"


@dataclass(frozen=True)
class BLabel:
    label: str

    def __str__(self) -> str:
        return self.label


MsgBody = Union[BVal, BChan, BLabel]


@dataclass(frozen=True)
class Message:
    sender: Participant
    receiver: Participant
    body: MsgBody

    def __str__(self) -> str:
        return f"({self.sender}, {self.receiver}, {self.body})"


# ---------------------------------------------------------------------------
# Processes


@dataclass(frozen=True)
class PZero:
    def __str__(self) -> str:
        return "0"


@dataclass(frozen=True)
class PInit:
    """Session initialisation over shared channel ``chan`` by the first
    listed participant, binding ``bind`` in ``body``."""

    chan: str
    participants: tuple[Participant, ...]
    bind: str
    body: "Process"


@dataclass(frozen=True)
class PAcc:
    chan: str
    participant: Participant
    bind: str
    body: "Process"


@dataclass(frozen=True)
class PReq:
    """Runtime only: a pending request for ``participant`` to join ``session``."""

    chan: str
    participant: Participant
    session: str


@dataclass(frozen=True)
class PSend:
    chan: Union[str, ChEnd]
    to: Participant
    expr: Expr
    cont: "Process"


@dataclass(frozen=True)
class PRecv:
    chan: Union[str, ChEnd]
    frm: Participant
    var: str
    annot: Optional[PayloadType]
    cont: "Process"


@dataclass(frozen=True)
class PDeleg:
    chan: Union[str, ChEnd]
    to: Participant
    sent: Union[str, ChEnd]
    sent_type: Optional[LocalType]
    cont: "Process"


@dataclass(frozen=True)
class PCatch:
    chan: Union[str, ChEnd]
    frm: Participant
    bind: str
    annot: Optional[LocalType]
    cont: "Process"


@dataclass(frozen=True)
class PSel:
    chan: Union[str, ChEnd]
    to: Participant
    label: str
    cont: "Process"


@dataclass(frozen=True)
class PBra:
    chan: Union[str, ChEnd]
    frm: Participant
    branches: tuple[tuple[str, "Process"], ...]

    def __post_init__(self) -> None:
        labels = [l for l, _ in self.branches]
        if len(labels) != len(set(labels)):
            raise ValueError("duplicate branch label")


@dataclass(frozen=True)
class PMu:
    var: str
    annot: Optional[ProcessType]
    body: "Process"


@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PPRec:
    """Primitive recursion over processes, annotated with the family type of
    the result (a Pi process type) when used under type checking."""

    base: "Process"
    ivar: str
    isort: IndexSort
    pvar: str
    annot: Optional[ProcessType]
    body: "Process"


@dataclass(frozen=True)
class PApp:
    proc: "Process"
    arg: IndexExpr


@dataclass(frozen=True)
class PNew:
    name: str
    annot: Optional[GlobalType]
    body: "Process"


@dataclass(frozen=True)
class PNewS:
    """Runtime only: session restriction."""

    session: str
    body: "Process"


@dataclass(frozen=True)
class PPar:
    left: "Process"
    right: "Process"


@dataclass(frozen=True)
class PQueue:
    """Runtime only: the message queue of a session."""

    session: str
    msgs: tuple[Message, ...]


Process = Union[
    PZero,
    PInit,
    PAcc,
    PReq,
    PSend,
    PRecv,
    PDeleg,
    PCatch,
    PSel,
    PBra,
    PMu,
    PVar,
    PPRec,
    PApp,
    PNew,
    PNewS,
    PPar,
    PQueue,
]


def par_all(procs: list[Process]) -> Process:
    if not procs:
        return PZero()
    out = procs[0]
    for p in procs[1:]:
        out = PPar(out, p)
    return out


# ---------------------------------------------------------------------------
# Fresh names

_fresh_counter = itertools.count()


def fresh_name(hint: str = "x") -> str:
    return f"{hint}%{next(_fresh_counter)}"


# ---------------------------------------------------------------------------
# Index substitution over types and processes (capture-avoiding)


def _subst_payload(u: PayloadType, var: str, value: IndexExpr) -> PayloadType:
    if isinstance(u, (PNat, PBool)):
        return u
    if isinstance(u, PShared):
        return PShared(subst_index(u.gtype, var, value))
    return PSession(subst_index(u.ltype, var, value))


def _subst_guard(g: Guard, var: str, value: IndexExpr) -> Guard:
    if isinstance(g, GuardEq):
        return GuardEq(
            subst_participant(g.left, var, value),
            subst_participant(g.right, var, value),
        )
    return GuardIdx(subst_iexpr(g.expr, var, value))


def subst_index(t: SessionType, var: str, value: IndexExpr) -> SessionType:
    """Substitute ``value`` for the free index variable ``var`` in a type."""
    if isinstance(t, (GEnd, LEnd, GTVar, LTVar)):
        return t
    if isinstance(t, GMsg):
        return GMsg(
            subst_participant(t.frm, var, value),
            subst_participant(t.to, var, value),
            _subst_payload(t.payload, var, value),
            subst_index(t.cont, var, value),
        )
    if isinstance(t, LOut):
        return LOut(
            subst_participant(t.to, var, value),
            _subst_payload(t.payload, var, value),
            subst_index(t.cont, var, value),
        )
    if isinstance(t, LIn):
        return LIn(
            subst_participant(t.frm, var, value),
            _subst_payload(t.payload, var, value),
            subst_index(t.cont, var, value),
        )
    if isinstance(t, GBra):
        return GBra(
            subst_participant(t.frm, var, value),
            subst_participant(t.to, var, value),
            tuple((l, subst_index(g, var, value)) for l, g in t.branches),
        )
    if isinstance(t, LSel):
        return LSel(
            subst_participant(t.to, var, value),
            tuple((l, subst_index(b, var, value)) for l, b in t.branches),
        )
    if isinstance(t, LBra):
        return LBra(
            subst_participant(t.frm, var, value),
            tuple((l, subst_index(b, var, value)) for l, b in t.branches),
        )
    if isinstance(t, (GMu, LMu)):
        return type(t)(t.var, subst_index(t.body, var, value))
    if isinstance(t, (GRec, LRec)):
        sort = subst_sort(t.isort, var, value)
        if t.ivar == var:
            return type(t)(
                subst_index(t.base, var, value), t.ivar, sort, t.tvar, t.body
            )
        if t.ivar in free_ivars(value):
            # rename the bound index variable to avoid capture
            fresh = fresh_name(t.ivar.split("%")[0])
            body = subst_index(t.body, t.ivar, IVar(fresh))
            return type(t)(
                subst_index(t.base, var, value),
                fresh,
                sort,
                t.tvar,
                subst_index(body, var, value),
            )
        return type(t)(
            subst_index(t.base, var, value),
            t.ivar,
            sort,
            t.tvar,
            subst_index(t.body, var, value),
        )
    if isinstance(t, (GApp, LApp)):
        return type(t)(subst_index(t.fn, var, value), subst_iexpr(t.arg, var, value))
    if isinstance(t, (GCond, LCond)):
        return type(t)(
            _subst_guard(t.guard, var, value),
            subst_index(t.then, var, value),
            subst_index(t.els, var, value),
        )
    raise TypeError(f"not a type: {t!r}")


def subst_tvar(t: SessionType, var: str, repl: SessionType) -> SessionType:
    """Substitute a type for the free type variable ``var`` (capture-avoiding)."""
    if isinstance(t, (GTVar, LTVar)):
        return repl if t.name == var else t
    if isinstance(t, (GEnd, LEnd)):
        return t
    if isinstance(t, GMsg):
        return replace(t, cont=subst_tvar(t.cont, var, repl))
    if isinstance(t, (LOut, LIn)):
        return replace(t, cont=subst_tvar(t.cont, var, repl))
    if isinstance(t, (GBra, LSel, LBra)):
        return replace(
            t, branches=tuple((l, subst_tvar(b, var, repl)) for l, b in t.branches)
        )
    if isinstance(t, (GMu, LMu)):
        if t.var == var:
            return t
        if t.var in free_tvars(repl):
            fresh = fresh_name(t.var.split("%")[0])
            body = subst_tvar(t.body, t.var, _mk_tvar(t, fresh))
            return type(t)(fresh, subst_tvar(body, var, repl))
        return type(t)(t.var, subst_tvar(t.body, var, repl))
    if isinstance(t, (GRec, LRec)):
        base = subst_tvar(t.base, var, repl)
        if t.tvar == var:
            return replace(t, base=base)
        if t.tvar in free_tvars(repl):
            fresh = fresh_name(t.tvar.split("%")[0])
            body = subst_tvar(t.body, t.tvar, _mk_tvar(t, fresh))
            return type(t)(base, t.ivar, t.isort, fresh, subst_tvar(body, var, repl))
        return type(t)(base, t.ivar, t.isort, t.tvar, subst_tvar(t.body, var, repl))
    if isinstance(t, (GApp, LApp)):
        return replace(t, fn=subst_tvar(t.fn, var, repl))
    if isinstance(t, (GCond, LCond)):
        return type(t)(
            t.guard, subst_tvar(t.then, var, repl), subst_tvar(t.els, var, repl)
        )
    raise TypeError(f"not a type: {t!r}")


def _mk_tvar(t: SessionType, name: str) -> SessionType:
    return GTVar(name) if is_global(t) else LTVar(name)


def subst_end_with_tvar(t: SessionType, var: str) -> SessionType:
    """Replace every ``end`` leaf in continuation position by a type variable.

    Used by the derived composition/repetition operators. Payload types are
    left untouched; binders that would capture ``var`` are renamed first.
    """
    if isinstance(t, (GEnd, LEnd)):
        return _mk_tvar_for(t, var)
    if isinstance(t, (GTVar, LTVar)):
        return t
    if isinstance(t, GMsg):
        return replace(t, cont=subst_end_with_tvar(t.cont, var))
    if isinstance(t, (LOut, LIn)):
        return replace(t, cont=subst_end_with_tvar(t.cont, var))
    if isinstance(t, (GBra, LSel, LBra)):
        return replace(
            t, branches=tuple((l, subst_end_with_tvar(b, var)) for l, b in t.branches)
        )
    if isinstance(t, (GMu, LMu)):
        if t.var == var:
            fresh = fresh_name(t.var.split("%")[0])
            body = subst_tvar(t.body, t.var, _mk_tvar(t, fresh))
            return type(t)(fresh, subst_end_with_tvar(body, var))
        return type(t)(t.var, subst_end_with_tvar(t.body, var))
    if isinstance(t, (GRec, LRec)):
        if t.tvar == var:
            fresh = fresh_name(t.tvar.split("%")[0])
            body = subst_tvar(t.body, t.tvar, _mk_tvar(t, fresh))
            return type(t)(
                subst_end_with_tvar(t.base, var),
                t.ivar,
                t.isort,
                fresh,
                subst_end_with_tvar(body, var),
            )
        return type(t)(
            subst_end_with_tvar(t.base, var),
            t.ivar,
            t.isort,
            t.tvar,
            subst_end_with_tvar(t.body, var),
        )
    if isinstance(t, (GApp, LApp)):
        # reach through applications: composing after an applied repetition
        # retargets the end leaves of its recursor base
        return type(t)(subst_end_with_tvar(t.fn, var), t.arg)
    if isinstance(t, (GCond, LCond)):
        return type(t)(
            t.guard,
            subst_end_with_tvar(t.then, var),
            subst_end_with_tvar(t.els, var),
        )
    raise TypeError(f"not a type: {t!r}")


def _mk_tvar_for(t: SessionType, name: str) -> SessionType:
    return GTVar(name) if isinstance(t, GEnd) else LTVar(name)


def free_tvars(t: SessionType) -> frozenset[str]:
    if isinstance(t, (GTVar, LTVar)):
        return frozenset((t.name,))
    if isinstance(t, (GEnd, LEnd)):
        return frozenset()
    if isinstance(t, GMsg):
        out = free_tvars(t.cont)
        if isinstance(t.payload, PShared):
            out |= free_tvars(t.payload.gtype)
        elif isinstance(t.payload, PSession):
            out |= free_tvars(t.payload.ltype)
        return out
    if isinstance(t, (LOut, LIn)):
        out = free_tvars(t.cont)
        if isinstance(t.payload, PShared):
            out |= free_tvars(t.payload.gtype)
        elif isinstance(t.payload, PSession):
            out |= free_tvars(t.payload.ltype)
        return out
    if isinstance(t, (GBra, LSel, LBra)):
        out: frozenset[str] = frozenset()
        for _, b in t.branches:
            out |= free_tvars(b)
        return out
    if isinstance(t, (GMu, LMu)):
        return free_tvars(t.body) - {t.var}
    if isinstance(t, (GRec, LRec)):
        return free_tvars(t.base) | (free_tvars(t.body) - {t.tvar})
    if isinstance(t, (GApp, LApp)):
        return free_tvars(t.fn)
    if isinstance(t, (GCond, LCond)):
        return free_tvars(t.then) | free_tvars(t.els)
    raise TypeError(f"not a type: {t!r}")


def type_free_ivars(t: SessionType) -> frozenset[str]:
    if isinstance(t, (GEnd, LEnd, GTVar, LTVar)):
        return frozenset()
    if isinstance(t, GMsg):
        return (
            _part_vars(t.frm)
            | _part_vars(t.to)
            | _payload_ivars(t.payload)
            | type_free_ivars(t.cont)
        )
    if isinstance(t, LOut):
        return _part_vars(t.to) | _payload_ivars(t.payload) | type_free_ivars(t.cont)
    if isinstance(t, LIn):
        return _part_vars(t.frm) | _payload_ivars(t.payload) | type_free_ivars(t.cont)
    if isinstance(t, GBra):
        out = _part_vars(t.frm) | _part_vars(t.to)
        for _, b in t.branches:
            out |= type_free_ivars(b)
        return out
    if isinstance(t, LSel):
        out = _part_vars(t.to)
        for _, b in t.branches:
            out |= type_free_ivars(b)
        return out
    if isinstance(t, LBra):
        out = _part_vars(t.frm)
        for _, b in t.branches:
            out |= type_free_ivars(b)
        return out
    if isinstance(t, (GMu, LMu)):
        return type_free_ivars(t.body)
    if isinstance(t, (GRec, LRec)):
        return (
            type_free_ivars(t.base)
            | sort_free_vars(t.isort)
            | (type_free_ivars(t.body) - {t.ivar})
        )
    if isinstance(t, (GApp, LApp)):
        return type_free_ivars(t.fn) | free_ivars(t.arg)
    if isinstance(t, (GCond, LCond)):
        return _guard_vars(t.guard) | type_free_ivars(t.then) | type_free_ivars(t.els)
    raise TypeError(f"not a type: {t!r}")


def _part_vars(p: Participant) -> frozenset[str]:
    out: frozenset[str] = frozenset()
    for i in p.indices:
        out |= free_ivars(i)
    return out


def _payload_ivars(u: PayloadType) -> frozenset[str]:
    if isinstance(u, PShared):
        return type_free_ivars(u.gtype)
    if isinstance(u, PSession):
        return type_free_ivars(u.ltype)
    return frozenset()


def _guard_vars(g: Guard) -> frozenset[str]:
    if isinstance(g, GuardEq):
        return _part_vars(g.left) | _part_vars(g.right)
    return free_ivars(g.expr)


# ---------------------------------------------------------------------------
# Alpha-equivalence


def _iexpr_alpha(a: IndexExpr, b: IndexExpr, ienv: dict[str, str]) -> bool:
    if isinstance(a, IVar) and isinstance(b, IVar):
        return ienv.get(a.name, a.name) == b.name
    if isinstance(a, ILit) and isinstance(b, ILit):
        return a.value == b.value
    if isinstance(a, IOp) and isinstance(b, IOp):
        return (
            a.op == b.op
            and _iexpr_alpha(a.left, b.left, ienv)
            and _iexpr_alpha(a.right, b.right, ienv)
        )
    return False


def _part_alpha(a: Participant, b: Participant, ienv: dict[str, str]) -> bool:
    return (
        a.name == b.name
        and len(a.indices) == len(b.indices)
        and all(_iexpr_alpha(x, y, ienv) for x, y in zip(a.indices, b.indices))
    )


def _prop_alpha(a: Prop, b: Prop, ienv: dict[str, str]) -> bool:
    ca, cb = list(prop_conjuncts(a)), list(prop_conjuncts(b))
    if len(ca) != len(cb):
        return False
    return all(
        _iexpr_alpha(x.left, y.left, ienv) and _iexpr_alpha(x.right, y.right, ienv)
        for x, y in zip(ca, cb)
    )


def _sort_alpha(a: IndexSort, b: IndexSort, ienv: dict[str, str]) -> bool:
    if isinstance(a, SNat) and isinstance(b, SNat):
        return True
    if isinstance(a, SEmpty) and isinstance(b, SEmpty):
        return True
    if isinstance(a, SConstr) and isinstance(b, SConstr):
        if not _sort_alpha(a.base, b.base, ienv):
            return False
        inner = dict(ienv)
        inner[a.var] = b.var
        return _prop_alpha(a.constraint, b.constraint, inner)
    return False


def _payload_alpha(
    a: PayloadType, b: PayloadType, ienv: dict[str, str], tenv: dict[str, str]
) -> bool:
    if isinstance(a, PNat) and isinstance(b, PNat):
        return True
    if isinstance(a, PBool) and isinstance(b, PBool):
        return True
    if isinstance(a, PShared) and isinstance(b, PShared):
        return _alpha(a.gtype, b.gtype, ienv, tenv)
    if isinstance(a, PSession) and isinstance(b, PSession):
        return _alpha(a.ltype, b.ltype, ienv, tenv)
    return False


def _guard_alpha(a: Guard, b: Guard, ienv: dict[str, str]) -> bool:
    if isinstance(a, GuardEq) and isinstance(b, GuardEq):
        return _part_alpha(a.left, b.left, ienv) and _part_alpha(a.right, b.right, ienv)
    if isinstance(a, GuardIdx) and isinstance(b, GuardIdx):
        return _iexpr_alpha(a.expr, b.expr, ienv)
    return False


def _branches_alpha(a, b, ienv, tenv) -> bool:
    if {l for l, _ in a} != {l for l, _ in b}:
        return False
    bmap = dict(b)
    return all(_alpha(t, bmap[l], ienv, tenv) for l, t in a)


def _alpha(a: SessionType, b: SessionType, ienv: dict[str, str], tenv) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, (GEnd, LEnd)):
        return True
    if isinstance(a, (GTVar, LTVar)):
        return tenv.get(a.name, a.name) == b.name
    if isinstance(a, GMsg):
        return (
            _part_alpha(a.frm, b.frm, ienv)
            and _part_alpha(a.to, b.to, ienv)
            and _payload_alpha(a.payload, b.payload, ienv, tenv)
            and _alpha(a.cont, b.cont, ienv, tenv)
        )
    if isinstance(a, LOut):
        return (
            _part_alpha(a.to, b.to, ienv)
            and _payload_alpha(a.payload, b.payload, ienv, tenv)
            and _alpha(a.cont, b.cont, ienv, tenv)
        )
    if isinstance(a, LIn):
        return (
            _part_alpha(a.frm, b.frm, ienv)
            and _payload_alpha(a.payload, b.payload, ienv, tenv)
            and _alpha(a.cont, b.cont, ienv, tenv)
        )
    if isinstance(a, GBra):
        return (
            _part_alpha(a.frm, b.frm, ienv)
            and _part_alpha(a.to, b.to, ienv)
            and _branches_alpha(a.branches, b.branches, ienv, tenv)
        )
    if isinstance(a, LSel):
        return _part_alpha(a.to, b.to, ienv) and _branches_alpha(
            a.branches, b.branches, ienv, tenv
        )
    if isinstance(a, LBra):
        return _part_alpha(a.frm, b.frm, ienv) and _branches_alpha(
            a.branches, b.branches, ienv, tenv
        )
    if isinstance(a, (GMu, LMu)):
        inner = dict(tenv)
        inner[a.var] = b.var
        return _alpha(a.body, b.body, ienv, inner)
    if isinstance(a, (GRec, LRec)):
        if not _sort_alpha(a.isort, b.isort, ienv):
            return False
        if not _alpha(a.base, b.base, ienv, tenv):
            return False
        ienv2 = dict(ienv)
        ienv2[a.ivar] = b.ivar
        tenv2 = dict(tenv)
        tenv2[a.tvar] = b.tvar
        return _alpha(a.body, b.body, ienv2, tenv2)
    if isinstance(a, (GApp, LApp)):
        return _alpha(a.fn, b.fn, ienv, tenv) and _iexpr_alpha(a.arg, b.arg, ienv)
    if isinstance(a, (GCond, LCond)):
        return (
            _guard_alpha(a.guard, b.guard, ienv)
            and _alpha(a.then, b.then, ienv, tenv)
            and _alpha(a.els, b.els, ienv, tenv)
        )
    raise TypeError(f"not a type: {a!r}")


def alpha_eq(a: SessionType, b: SessionType) -> bool:
    """Equality up to renaming of bound index and type variables."""
    return _alpha(a, b, {}, {})


# ---------------------------------------------------------------------------
# Derived forms over types (composition, repetition, product, test)


def gseq(g1: GlobalType, g2: GlobalType) -> GlobalType:
    """Sequential composition: run g1, then g2 (encoded with a recursor)."""
    x = fresh_name("x")
    i = fresh_name("i")
    return GApp(GRec(g2, i, srange(ILit(1)), x, subst_end_with_tvar(g1, x)), ILit(1))


def lseq(t1: LocalType, t2: LocalType) -> LocalType:
    x = fresh_name("x")
    i = fresh_name("i")
    return LApp(LRec(t2, i, srange(ILit(1)), x, subst_end_with_tvar(t1, x)), ILit(1))


def gforeach(var: str, bound: IndexExpr, body: GlobalType) -> GlobalType:
    """Repeat ``body`` with ``var`` decreasing from bound-1 to 0."""
    x = fresh_name("x")
    return GApp(
        GRec(GEnd(), var, srange(bound), x, subst_end_with_tvar(body, x)), bound
    )


def lforeach(var: str, bound: IndexExpr, body: LocalType) -> LocalType:
    x = fresh_name("x")
    return LApp(
        LRec(LEnd(), var, srange(bound), x, subst_end_with_tvar(body, x)), bound
    )


def gpi(var: str, sort: IndexSort, body: GlobalType) -> GlobalType:
    """Dependent product over an index, encoded with a recursor."""
    x = fresh_name("x")
    shifted = subst_index(body, var, iadd(IVar(var), ILit(1)))
    return GRec(GEnd(), var, sort, x, shifted)


def gif(guard: IndexExpr, then: GlobalType, els: GlobalType) -> GlobalType:
    return GCond(GuardIdx(guard), then, els)


def cond_encode(t: SessionType) -> SessionType:
    """Encode an index-guarded conditional into its recursor form."""
    if isinstance(t, (GCond, LCond)) and isinstance(t.guard, GuardIdx):
        x = fresh_name("x")
        i = fresh_name("i")
        rec = (GRec if isinstance(t, GCond) else LRec)(
            t.els, i, srange(ILit(1)), x, t.then
        )
        return (GApp if isinstance(t, GCond) else LApp)(rec, t.guard.expr)
    raise ValueError("only index-guarded conditionals have a recursor encoding")


def cond_decode(t: SessionType) -> SessionType:
    """Inverse of cond_encode, recognising the reserved recursor shape."""
    if isinstance(t, (GApp, LApp)) and isinstance(t.fn, (GRec, LRec)):
        rec = t.fn
        if (
            as_range(rec.isort) == ILit(1)
            and rec.ivar not in type_free_ivars(rec.body)
            and rec.tvar not in free_tvars(rec.body)
        ):
            return (GCond if isinstance(t, GApp) else LCond)(
                GuardIdx(t.arg), rec.body, rec.base
            )
    raise ValueError("not an encoded conditional")


# ---------------------------------------------------------------------------
# Substitution over processes


def _subst_chan(c, var: str, value: IndexExpr):
    if isinstance(c, ChEnd):
        return ChEnd(c.session, subst_participant(c.participant, var, value))
    return c


def proc_subst_index(p: Process, var: str, value: IndexExpr) -> Process:
    """Substitute an index expression for a free index variable in a process."""
    f = lambda q: proc_subst_index(q, var, value)
    sp = lambda q: subst_participant(q, var, value)
    se = lambda e: subst_expr(e, var, value)
    if isinstance(p, (PZero, PVar)):
        return p
    if isinstance(p, PInit):
        return PInit(p.chan, tuple(sp(q) for q in p.participants), p.bind, f(p.body))
    if isinstance(p, PAcc):
        return PAcc(p.chan, sp(p.participant), p.bind, f(p.body))
    if isinstance(p, PReq):
        return PReq(p.chan, sp(p.participant), p.session)
    if isinstance(p, PSend):
        return PSend(_subst_chan(p.chan, var, value), sp(p.to), se(p.expr), f(p.cont))
    if isinstance(p, PRecv):
        annot = _subst_payload(p.annot, var, value) if p.annot else None
        return PRecv(_subst_chan(p.chan, var, value), sp(p.frm), p.var, annot, f(p.cont))
    if isinstance(p, PDeleg):
        st = subst_index(p.sent_type, var, value) if p.sent_type else None
        return PDeleg(
            _subst_chan(p.chan, var, value),
            sp(p.to),
            _subst_chan(p.sent, var, value),
            st,
            f(p.cont),
        )
    if isinstance(p, PCatch):
        annot = subst_index(p.annot, var, value) if p.annot else None
        return PCatch(_subst_chan(p.chan, var, value), sp(p.frm), p.bind, annot, f(p.cont))
    if isinstance(p, PSel):
        return PSel(_subst_chan(p.chan, var, value), sp(p.to), p.label, f(p.cont))
    if isinstance(p, PBra):
        return PBra(
            _subst_chan(p.chan, var, value),
            sp(p.frm),
            tuple((l, f(b)) for l, b in p.branches),
        )
    if isinstance(p, PMu):
        annot = subst_proctype(p.annot, var, value) if p.annot else None
        return PMu(p.var, annot, f(p.body))
    if isinstance(p, PPRec):
        sort = subst_sort(p.isort, var, value)
        annot = subst_proctype(p.annot, var, value) if p.annot else None
        base = f(p.base)
        if p.ivar == var:
            return PPRec(base, p.ivar, sort, p.pvar, annot, p.body)
        if p.ivar in free_ivars(value):
            fresh = fresh_name(p.ivar.split("%")[0])
            body = proc_subst_index(p.body, p.ivar, IVar(fresh))
            return PPRec(base, fresh, sort, p.pvar, annot, f(body))
        return PPRec(base, p.ivar, sort, p.pvar, annot, f(p.body))
    if isinstance(p, PApp):
        return PApp(f(p.proc), subst_iexpr(p.arg, var, value))
    if isinstance(p, PNew):
        annot = subst_index(p.annot, var, value) if p.annot else None
        return PNew(p.name, annot, f(p.body))
    if isinstance(p, PNewS):
        return PNewS(p.session, f(p.body))
    if isinstance(p, PPar):
        return PPar(f(p.left), f(p.right))
    if isinstance(p, PQueue):
        return p
    raise TypeError(f"not a process: {p!r}")


def proc_subst_var(p: Process, var: str, q: Process) -> Process:
    """Substitute a process for a free process variable (for recursion)."""
    f = lambda r: proc_subst_var(r, var, q)
    if isinstance(p, PVar):
        return q if p.name == var else p
    if isinstance(p, (PZero, PReq, PQueue)):
        return p
    if isinstance(p, (PInit, PAcc)):
        return replace(p, body=f(p.body))
    if isinstance(p, (PSend, PRecv, PDeleg, PCatch, PSel)):
        return replace(p, cont=f(p.cont))
    if isinstance(p, PBra):
        return replace(p, branches=tuple((l, f(b)) for l, b in p.branches))
    if isinstance(p, PMu):
        if p.var == var:
            return p
        return replace(p, body=f(p.body))
    if isinstance(p, PPRec):
        base = f(p.base)
        if p.pvar == var:
            return replace(p, base=base)
        return replace(p, base=base, body=f(p.body))
    if isinstance(p, PApp):
        return replace(p, proc=f(p.proc))
    if isinstance(p, (PNew, PNewS)):
        return replace(p, body=f(p.body))
    if isinstance(p, PPar):
        return PPar(f(p.left), f(p.right))
    raise TypeError(f"not a process: {p!r}")


def subst_tau_channel(tau: ProcessType, var: str, chan: ChEnd) -> ProcessType:
    if isinstance(tau, TPi):
        return TPi(tau.ivar, tau.isort, subst_tau_channel(tau.body, var, chan))
    out = []
    for c, t in tau.env.entries:
        out.append((chan if c == ChVar(var) else c, t))
    return TSess(SessionEnv(tuple(out)))


def proc_subst_channel(p: Process, var: str, chan: ChEnd) -> Process:
    """Substitute a session endpoint for a channel variable (session join).

    Type annotations are rewritten alongside, so recursor families stay
    meaningful after the substitution.
    """
    f = lambda r: proc_subst_channel(r, var, chan)
    rc = lambda c: chan if c == var else c
    st = lambda tau: subst_tau_channel(tau, var, chan) if tau is not None else None
    if isinstance(p, (PZero, PVar, PReq, PQueue)):
        return p
    if isinstance(p, (PInit, PAcc)):
        if p.bind == var:
            return p
        return replace(p, body=f(p.body))
    if isinstance(p, (PSend, PSel)):
        return replace(p, chan=rc(p.chan), cont=f(p.cont))
    if isinstance(p, PRecv):
        return replace(p, chan=rc(p.chan), cont=f(p.cont))
    if isinstance(p, PDeleg):
        return replace(p, chan=rc(p.chan), sent=rc(p.sent), cont=f(p.cont))
    if isinstance(p, PCatch):
        if p.bind == var:
            return replace(p, chan=rc(p.chan))
        return replace(p, chan=rc(p.chan), cont=f(p.cont))
    if isinstance(p, PBra):
        return replace(
            p, chan=rc(p.chan), branches=tuple((l, f(b)) for l, b in p.branches)
        )
    if isinstance(p, PMu):
        return replace(p, annot=st(p.annot), body=f(p.body))
    if isinstance(p, (PNew, PNewS)):
        return replace(p, body=f(p.body))
    if isinstance(p, PPRec):
        return replace(p, annot=st(p.annot), base=f(p.base), body=f(p.body))
    if isinstance(p, PApp):
        return replace(p, proc=f(p.proc))
    if isinstance(p, PPar):
        return PPar(f(p.left), f(p.right))
    raise TypeError(f"not a process: {p!r}")


def proc_subst_value(p: Process, var: str, value: Expr) -> Process:
    """Substitute a ground value expression for a data variable."""
    f = lambda r: proc_subst_value(r, var, value)
    se = lambda e: subst_expr(e, var, value)
    if isinstance(p, (PZero, PVar, PReq, PQueue)):
        return p
    if isinstance(p, (PInit, PAcc)):
        return replace(p, body=f(p.body))
    if isinstance(p, PSend):
        return replace(p, expr=se(p.expr), cont=f(p.cont))
    if isinstance(p, PRecv):
        if p.var == var:
            return p
        return replace(p, cont=f(p.cont))
    if isinstance(p, (PDeleg, PCatch, PSel)):
        return replace(p, cont=f(p.cont))
    if isinstance(p, PBra):
        return replace(p, branches=tuple((l, f(b)) for l, b in p.branches))
    if isinstance(p, (PMu, PNew, PNewS)):
        return replace(p, body=f(p.body))
    if isinstance(p, PPRec):
        return replace(p, base=f(p.base), body=f(p.body))
    if isinstance(p, PApp):
        return replace(p, proc=f(p.proc))
    if isinstance(p, PPar):
        return PPar(f(p.left), f(p.right))
    raise TypeError(f"not a process: {p!r}")


# ---------------------------------------------------------------------------
# Process type substitution


def subst_proctype(tau: ProcessType, var: str, value: IndexExpr) -> ProcessType:
    if isinstance(tau, TSess):
        return TSess(subst_session_env(tau.env, var, value))
    sort = subst_sort(tau.isort, var, value)
    if tau.ivar == var:
        return TPi(tau.ivar, sort, tau.body)
    return TPi(tau.ivar, sort, subst_proctype(tau.body, var, value))


def subst_session_env(env: SessionEnv, var: str, value: IndexExpr) -> SessionEnv:
    out = []
    for c, t in env.entries:
        c2 = _subst_chan(c, var, value) if isinstance(c, ChEnd) else c
        out.append((c2, subst_gen(t, var, value)))
    return SessionEnv(tuple(out))


def subst_gen(t: GeneralisedType, var: str, value: IndexExpr) -> GeneralisedType:
    if isinstance(t, GLocal):
        return GLocal(subst_index(t.ltype, var, value))
    msgs = tuple(_subst_msgtype(m, var, value) for m in t.msgs)
    if isinstance(t, GMsgs):
        return GMsgs(msgs)
    return GMsgsThen(msgs, subst_index(t.ltype, var, value))


def _subst_msgtype(m: MessageType, var: str, value: IndexExpr) -> MessageType:
    if isinstance(m, MOut):
        return MOut(subst_participant(m.to, var, value), _subst_payload(m.payload, var, value))
    return MSel(subst_participant(m.to, var, value), m.label)
