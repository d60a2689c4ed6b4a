"""Decidable type equivalence, recursive-type isomorphism, and subtyping.

Equivalence enters through weak head normal forms and then proceeds
structurally; two recursors are first compared componentwise and, when that
fails over a finite index sort, extensionally by enumerating every
application (plus the base). Application arguments are compared semantically
through the index engine, never by re-reducing, which keeps the rule system
terminating. The result is three-valued: equal, unequal, or undecided (the
extensional rule over an infinite sort is out of scope).

Isomorphism identifies mu-types with their unfoldings and is used only where
recursion variables are introduced. Subtyping is the standard coinductive
relation: selections may widen their label set on the right, branchings may
narrow it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .indices import (
    INFINITE,
    IndexContext,
    Invalid,
    Undecided,
    Valid,
    enumerate_sort,
    indices_equal,
    participants_equal,
    predecessor_sort,
)
from .reduce import whnf
from .terms import (
    GApp,
    GBra,
    GCond,
    GEnd,
    GLocal,
    GMsg,
    GMsgs,
    GMsgsThen,
    GMu,
    GRec,
    GTVar,
    GuardEq,
    GuardIdx,
    ILit,
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
    PBool,
    PNat,
    PSession,
    PShared,
    ProcessType,
    SessionEnv,
    SessionType,
    StdEnv,
    EntryIndex,
    TPi,
    TSess,
    alpha_eq,
    subst_index,
    subst_tvar,
)

EQUAL = True
UNEQUAL = False
UNDECIDED = "undecided"

Tri = Union[bool, str]


def _tri_all(*parts: Tri) -> Tri:
    if any(p is UNEQUAL for p in parts):
        return UNEQUAL
    if any(p is UNDECIDED for p in parts):
        return UNDECIDED
    return EQUAL


@dataclass
class EquivTrace:
    steps: list[str] = field(default_factory=list)

    def record(self, rule: str, a, b) -> None:
        self.steps.append(f"{rule}: {str(a)[:48]} ~ {str(b)[:48]}")

    def rules(self) -> set[str]:
        return {s.split(":")[0] for s in self.steps}


def type_equiv(
    env: StdEnv,
    a: SessionType,
    b: SessionType,
    trace: Optional[EquivTrace] = None,
) -> tuple[Tri, EquivTrace]:
    """The staged equivalence judgement for global or local types."""
    trace = trace if trace is not None else EquivTrace()
    ctx = IndexContext.from_env(env)
    verdict = _eq(a, b, ctx, {}, trace)
    return verdict, trace


def _eq(a, b, ctx: IndexContext, tvmap: dict[str, str], trace: EquivTrace) -> Tri:
    a2, b2 = whnf(a), whnf(b)
    trace.record("WfBase", a2, b2)
    return _eq_wf(a2, b2, ctx, tvmap, trace)


def _payload_eq(u1, u2, ctx, tvmap, trace) -> Tri:
    if isinstance(u1, PNat) and isinstance(u2, PNat):
        return EQUAL
    if isinstance(u1, PBool) and isinstance(u2, PBool):
        return EQUAL
    if isinstance(u1, PShared) and isinstance(u2, PShared):
        return _eq(u1.gtype, u2.gtype, ctx, tvmap, trace)
    if isinstance(u1, PSession) and isinstance(u2, PSession):
        return _eq(u1.ltype, u2.ltype, ctx, tvmap, trace)
    return UNEQUAL


def _parts_eq(ctx, p, q) -> Tri:
    v = participants_equal(ctx, p, q)
    if isinstance(v, Valid):
        return EQUAL
    if isinstance(v, Invalid):
        return UNEQUAL
    return UNDECIDED


def _branches_eq(abranches, bbranches, ctx, tvmap, trace) -> Tri:
    if {l for l, _ in abranches} != {l for l, _ in bbranches}:
        return UNEQUAL
    bmap = dict(bbranches)
    return _tri_all(*[_eq(t, bmap[l], ctx, tvmap, trace) for l, t in abranches])


def _sorts_eq(ctx, s1, s2) -> Tri:
    from .terms import as_range

    if s1 == s2:
        return EQUAL
    r1, r2 = as_range(s1), as_range(s2)
    if r1 is not None and r2 is not None:
        v = indices_equal(ctx, r1, r2)
        if isinstance(v, Valid):
            return EQUAL
        if isinstance(v, Invalid):
            return UNEQUAL
        return UNDECIDED
    return UNDECIDED


def _eq_wf(a, b, ctx, tvmap, trace) -> Tri:
    if isinstance(a, (GEnd, LEnd)) and isinstance(b, (GEnd, LEnd)):
        trace.record("WfEnd", a, b)
        return EQUAL
    if isinstance(a, (GTVar, LTVar)) and isinstance(b, (GTVar, LTVar)):
        trace.record("WfRVar", a, b)
        return EQUAL if tvmap.get(a.name, a.name) == b.name else UNEQUAL
    if isinstance(a, GMsg) and isinstance(b, GMsg):
        trace.record("WfIO", a, b)
        return _tri_all(
            _parts_eq(ctx, a.frm, b.frm),
            _parts_eq(ctx, a.to, b.to),
            _payload_eq(a.payload, b.payload, ctx, tvmap, trace),
            _eq(a.cont, b.cont, ctx, tvmap, trace),
        )
    if (isinstance(a, LOut) and isinstance(b, LOut)) or (
        isinstance(a, LIn) and isinstance(b, LIn)
    ):
        trace.record("WfIO", a, b)
        pa = a.to if isinstance(a, LOut) else a.frm
        pb = b.to if isinstance(b, LOut) else b.frm
        return _tri_all(
            _parts_eq(ctx, pa, pb),
            _payload_eq(a.payload, b.payload, ctx, tvmap, trace),
            _eq(a.cont, b.cont, ctx, tvmap, trace),
        )
    if isinstance(a, GBra) and isinstance(b, GBra):
        trace.record("WfBra", a, b)
        return _tri_all(
            _parts_eq(ctx, a.frm, b.frm),
            _parts_eq(ctx, a.to, b.to),
            _branches_eq(a.branches, b.branches, ctx, tvmap, trace),
        )
    if (isinstance(a, LSel) and isinstance(b, LSel)) or (
        isinstance(a, LBra) and isinstance(b, LBra)
    ):
        trace.record("WfBra", a, b)
        pa = a.to if isinstance(a, LSel) else a.frm
        pb = b.to if isinstance(b, LSel) else b.frm
        return _tri_all(
            _parts_eq(ctx, pa, pb),
            _branches_eq(a.branches, b.branches, ctx, tvmap, trace),
        )
    if isinstance(a, (GMu, LMu)) and isinstance(b, (GMu, LMu)):
        trace.record("WfPRec", a, b)
        inner = dict(tvmap)
        inner[a.var] = b.var
        return _eq(a.body, b.body, ctx, inner, trace)
    if isinstance(a, (GRec, LRec)) and isinstance(b, (GRec, LRec)):
        sorts = _sorts_eq(ctx, a.isort, b.isort)
        if sorts is UNEQUAL:
            return UNEQUAL
        # WfRec first: componentwise comparison, no reduction of the bodies.
        trace.record("WfRec", a, b)
        base_eq = _eq(a.base, b.base, ctx, tvmap, trace)
        try:
            pred = predecessor_sort(a.isort)
        except Exception:
            pred = a.isort
        inner_ctx = ctx.bind(a.ivar, pred)
        inner_map = dict(tvmap)
        inner_map[a.tvar] = b.tvar
        body_b = b.body
        if b.ivar != a.ivar:
            body_b = subst_index(b.body, b.ivar, _ivar(a.ivar))
        body_eq = _eq(a.body, body_b, inner_ctx, inner_map, trace)
        componentwise = _tri_all(sorts, base_eq, body_eq)
        if componentwise is EQUAL:
            return EQUAL
        # WfRecF: extensional comparison over a finite sort.
        dom = enumerate_sort(a.isort, ctx)
        if dom == INFINITE:
            return UNDECIDED
        trace.record("WfRecF", a, b)
        checks: list[Tri] = [base_eq if base_eq is EQUAL else _eq(a.base, b.base, ctx, tvmap, trace)]
        app = GApp if isinstance(a, GRec) else LApp
        for n in dom:
            checks.append(_eq(app(a, ILit(n)), app(b, ILit(n)), ctx, tvmap, trace))
        out = _tri_all(*checks)
        return out if out is EQUAL else (UNEQUAL if out is UNEQUAL else UNDECIDED)
    if isinstance(a, (GApp, LApp)) and isinstance(b, (GApp, LApp)):
        trace.record("WfApp", a, b)
        v = indices_equal(ctx, a.arg, b.arg)
        arg_eq: Tri = (
            EQUAL if isinstance(v, Valid) else UNEQUAL if isinstance(v, Invalid) else UNDECIDED
        )
        return _tri_all(_eq_wf(a.fn, b.fn, ctx, tvmap, trace), arg_eq)
    if isinstance(a, (GCond, LCond)) and isinstance(b, (GCond, LCond)):
        if _guards_same(a.guard, b.guard):
            return _tri_all(
                _eq(a.then, b.then, ctx, tvmap, trace),
                _eq(a.els, b.els, ctx, tvmap, trace),
            )
        return UNDECIDED
    # a stuck application or symbolic conditional may still equal anything
    if isinstance(a, (GApp, LApp, GCond, LCond)) or isinstance(
        b, (GApp, LApp, GCond, LCond)
    ):
        return UNDECIDED
    return UNEQUAL


def _ivar(name: str):
    from .terms import IVar

    return IVar(name)


def _guards_same(g1, g2) -> bool:
    return g1 == g2


# ---------------------------------------------------------------------------
# Isomorphism: equality up to folding/unfolding of mu-types


def _unfold(t):
    return subst_tvar(t.body, t.var, t)


def iso(a: LocalType, b: LocalType) -> bool:
    """Recursive-type isomorphism on local types (coinductive)."""
    return _iso(a, b, set())


def _iso(a, b, seen) -> bool:
    key = (a, b)
    if key in seen:
        return True
    seen = seen | {key}
    if isinstance(a, (LMu, GMu)):
        return _iso(_unfold(a), b, seen)
    if isinstance(b, (LMu, GMu)):
        return _iso(a, _unfold(b), seen)
    if type(a) is not type(b):
        return False
    if isinstance(a, (LEnd, GEnd)):
        return True
    if isinstance(a, (LTVar, GTVar)):
        return a.name == b.name
    if isinstance(a, LOut):
        return a.to == b.to and _payload_iso(a.payload, b.payload, seen) and _iso(
            a.cont, b.cont, seen
        )
    if isinstance(a, LIn):
        return a.frm == b.frm and _payload_iso(a.payload, b.payload, seen) and _iso(
            a.cont, b.cont, seen
        )
    if isinstance(a, GMsg):
        return (
            a.frm == b.frm
            and a.to == b.to
            and _payload_iso(a.payload, b.payload, seen)
            and _iso(a.cont, b.cont, seen)
        )
    if isinstance(a, (LSel, LBra, GBra)):
        if {l for l, _ in a.branches} != {l for l, _ in b.branches}:
            return False
        who_a = a.to if isinstance(a, LSel) else a.frm
        who_b = b.to if isinstance(b, LSel) else b.frm
        if isinstance(a, GBra) and (a.to != b.to or a.frm != b.frm):
            return False
        if not isinstance(a, GBra) and who_a != who_b:
            return False
        bmap = dict(b.branches)
        return all(_iso(t, bmap[l], seen) for l, t in a.branches)
    if isinstance(a, (LRec, GRec)):
        return (
            a.ivar == b.ivar
            and a.tvar == b.tvar
            and a.isort == b.isort
            and _iso(a.base, b.base, seen)
            and _iso(a.body, b.body, seen)
        )
    if isinstance(a, (LApp, GApp)):
        from .indices import iexpr_eq_syntactic

        return iexpr_eq_syntactic(a.arg, b.arg) and _iso(a.fn, b.fn, seen)
    if isinstance(a, (LCond, GCond)):
        return a.guard == b.guard and _iso(a.then, b.then, seen) and _iso(
            a.els, b.els, seen
        )
    return False


def _payload_iso(u1, u2, seen) -> bool:
    if type(u1) is not type(u2):
        return False
    if isinstance(u1, PShared):
        return _iso(u1.gtype, u2.gtype, seen)
    if isinstance(u1, PSession):
        return _iso(u1.ltype, u2.ltype, seen)
    return True


def iso_tau(a: ProcessType, b: ProcessType) -> bool:
    if isinstance(a, TSess) and isinstance(b, TSess):
        da, db = dict(a.env.entries), dict(b.env.entries)
        if set(da) != set(db):
            return False
        return all(_gen_iso(da[c], db[c]) for c in da)
    if isinstance(a, TPi) and isinstance(b, TPi):
        if a.isort != b.isort:
            return False
        body_b = b.body
        if b.ivar != a.ivar:
            from .terms import IVar, subst_proctype

            body_b = subst_proctype(b.body, b.ivar, IVar(a.ivar))
        return iso_tau(a.body, body_b)
    return False


def _gen_iso(a, b) -> bool:
    if isinstance(a, GLocal) and isinstance(b, GLocal):
        return iso(a.ltype, b.ltype)
    if isinstance(a, GMsgs) and isinstance(b, GMsgs):
        return a.msgs == b.msgs
    if isinstance(a, GMsgsThen) and isinstance(b, GMsgsThen):
        return a.msgs == b.msgs and iso(a.ltype, b.ltype)
    return False


# ---------------------------------------------------------------------------
# Subtyping


def subtype(env: StdEnv, a: LocalType, b: LocalType) -> bool:
    """Coinductive subtype check; selection widens rightward, branching
    narrows rightward."""
    return _sub(whnf(a), whnf(b), IndexContext.from_env(env), set())


def _sub(a, b, ctx, seen) -> bool:
    key = (a, b)
    if key in seen:
        return True
    seen = seen | {key}
    if isinstance(a, LMu):
        return _sub(whnf(_unfold(a)), b, ctx, seen)
    if isinstance(b, LMu):
        return _sub(a, whnf(_unfold(b)), ctx, seen)
    if isinstance(a, LEnd) and isinstance(b, LEnd):
        return True
    if isinstance(a, LTVar) and isinstance(b, LTVar):
        return a.name == b.name
    if isinstance(a, LOut) and isinstance(b, LOut):
        return (
            a.to == b.to
            and a.payload == b.payload
            and _sub(whnf(a.cont), whnf(b.cont), ctx, seen)
        )
    if isinstance(a, LIn) and isinstance(b, LIn):
        return (
            a.frm == b.frm
            and a.payload == b.payload
            and _sub(whnf(a.cont), whnf(b.cont), ctx, seen)
        )
    if isinstance(a, LSel) and isinstance(b, LSel):
        if a.to != b.to:
            return False
        bmap = dict(b.branches)
        return all(
            l in bmap and _sub(whnf(t), whnf(bmap[l]), ctx, seen)
            for l, t in a.branches
        )
    if isinstance(a, LBra) and isinstance(b, LBra):
        if a.frm != b.frm:
            return False
        amap = dict(a.branches)
        return all(
            l in amap and _sub(whnf(amap[l]), whnf(t), ctx, seen)
            for l, t in b.branches
        )
    if isinstance(a, LRec) and isinstance(b, LRec):
        if a.isort != b.isort or a.ivar != b.ivar or a.tvar != b.tvar:
            return False
        try:
            pred = predecessor_sort(a.isort)
        except Exception:
            pred = a.isort
        return _sub(a.base, b.base, ctx, seen) and _sub(
            a.body, b.body, ctx.bind(a.ivar, pred), seen
        )
    if isinstance(a, LApp) and isinstance(b, LApp):
        v = indices_equal(ctx, a.arg, b.arg)
        return isinstance(v, Valid) and _sub(a.fn, b.fn, ctx, seen)
    if isinstance(a, LCond) and isinstance(b, LCond):
        return a.guard == b.guard and _sub(a.then, b.then, ctx, seen) and _sub(
            a.els, b.els, ctx, seen
        )
    return False


# ---------------------------------------------------------------------------
# Family equivalence over a finite parameter domain (the extensional route)


def family_equiv(
    env: StdEnv,
    params: list[tuple[str, object]],
    fam_a: SessionType,
    fam_b: SessionType,
    domain: list[tuple[int, ...]],
    trace: Optional[EquivTrace] = None,
) -> tuple[Tri, EquivTrace]:
    """Compare two type families pointwise over a finite set of ground
    parameter vectors; this is the finite-domain extensional rule applied at
    the level of declared parameters."""
    trace = trace if trace is not None else EquivTrace()
    trace.record("WfRecF", fam_a, fam_b)
    results: list[Tri] = []
    for vector in domain:
        a, b = fam_a, fam_b
        for (name, _sort), value in zip(params, vector):
            a = subst_index(a, name, ILit(value))
            b = subst_index(b, name, ILit(value))
        verdict, _ = type_equiv(env, a, b, trace)
        results.append(verdict)
    return _tri_all(*results), trace
