"""Generic end-point projection of global types, with the mergeability
relation and partial merge operator for branching types.

Projection turns one global view into the local type of a single (possibly
symbolic) participant. Participant equalities that the index engine can
decide are resolved on the spot; undecided ones are kept as conditional
nodes so the result stays a faithful generator for every instantiation.
A non-addressee of a branching receives the merge of the branch projections,
which exists only when the branches are mergeable.
"""

from __future__ import annotations

from typing import Optional

from .diagnostics import MergeFailure, diag
from .indices import (
    IndexContext,
    Invalid,
    Undecided,
    Valid,
    Verdict,
    entails,
    eval_ground,
    iexpr_eq_syntactic,
    is_ground,
    participants_equal,
    participants_overlap,
    predecessor_sort,
)
from .terms import (
    GApp,
    GBra,
    GCond,
    GEnd,
    GMsg,
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
    PLeq,
    Participant,
    GlobalType,
    SessionType,
    alpha_eq,
    free_tvars,
    is_global,
)


def _eq_decision(ctx: IndexContext, p, q) -> Verdict:
    """Valid: always equal; Invalid: never equal; Undecided: instance-
    dependent (the projection keeps a conditional)."""
    eq = participants_equal(ctx, p, q)
    if isinstance(eq, Valid):
        return Valid()
    ov = participants_overlap(ctx, p, q)
    if isinstance(ov, Invalid):
        return Invalid({})
    return Undecided("instance-dependent participant equality")


def _guard_verdict(ctx: IndexContext, g) -> Verdict:
    if isinstance(g, GuardEq):
        return _eq_decision(ctx, g.left, g.right)
    if is_ground(g.expr):
        return Valid() if eval_ground(g.expr) != 0 else Invalid({})
    return Undecided("symbolic scrutinee")


def merge(a: LocalType, b: LocalType, path: tuple[str, ...] = ()) -> LocalType:
    """The partial commutative merge of two end-point types."""
    if alpha_eq(a, b):
        return a
    if isinstance(a, LBra) and isinstance(b, LBra) and a.frm == b.frm:
        amap, bmap = dict(a.branches), dict(b.branches)
        out = []
        for label, t in a.branches:
            if label in bmap:
                out.append((label, merge(t, bmap[label], path + (f"&{label}",))))
            else:
                out.append((label, t))
        for label, t in b.branches:
            if label not in amap:
                out.append((label, t))
        return LBra(a.frm, tuple(out))
    if isinstance(a, LIn) and isinstance(b, LIn):
        if a.frm == b.frm and a.payload == b.payload:
            return LIn(a.frm, a.payload, merge(a.cont, b.cont, path + ("?",)))
    if isinstance(a, LOut) and isinstance(b, LOut):
        if a.to == b.to and a.payload == b.payload:
            return LOut(a.to, a.payload, merge(a.cont, b.cont, path + ("!",)))
    if isinstance(a, LSel) and isinstance(b, LSel) and a.to == b.to:
        if {l for l, _ in a.branches} == {l for l, _ in b.branches}:
            bmap = dict(b.branches)
            return LSel(
                a.to,
                tuple(
                    (l, merge(t, bmap[l], path + (f"+{l}",))) for l, t in a.branches
                ),
            )
    if isinstance(a, LMu) and isinstance(b, LMu):
        if a.var == b.var:
            return LMu(a.var, merge(a.body, b.body, path + ("mu",)))
    if isinstance(a, LRec) and isinstance(b, LRec):
        if a.ivar == b.ivar and a.tvar == b.tvar and a.isort == b.isort:
            return LRec(
                merge(a.base, b.base, path + ("rec-base",)),
                a.ivar,
                a.isort,
                a.tvar,
                merge(a.body, b.body, path + ("rec-body",)),
            )
    if isinstance(a, LApp) and isinstance(b, LApp):
        if iexpr_eq_syntactic(a.arg, b.arg):
            return LApp(merge(a.fn, b.fn, path + ("@",)), a.arg)
    if isinstance(a, LCond) and isinstance(b, LCond) and a.guard == b.guard:
        return LCond(
            a.guard,
            merge(a.then, b.then, path + ("then",)),
            merge(a.els, b.els, path + ("else",)),
        )
    raise MergeFailure(
        diag(
            "Merge",
            f"cannot merge {a} with {b}"
            + (f" (at {'/'.join(path)})" if path else ""),
        )
    )


def mergeable(a: LocalType, b: LocalType) -> bool:
    try:
        merge(a, b)
        return True
    except MergeFailure:
        return False


def merge_all(ts: list[LocalType], path: tuple[str, ...] = ()) -> LocalType:
    out = ts[0]
    for t in ts[1:]:
        out = merge(out, t, path)
    return out


def project(
    g: GlobalType, q: Participant, ctx: Optional[IndexContext] = None
) -> LocalType:
    """Project a global type onto participant ``q``."""
    ctx = ctx or IndexContext()

    def go(t: GlobalType) -> LocalType:
        return _project(t, q, ctx)

    return _project(g, q, ctx)


def _choose(
    verdict: Verdict, guard, then: LocalType, els: LocalType
) -> LocalType:
    if isinstance(verdict, Valid):
        return then
    if isinstance(verdict, Invalid):
        return els
    return LCond(guard, then, els)


def _project(t: GlobalType, q: Participant, ctx: IndexContext) -> LocalType:
    if isinstance(t, GEnd):
        return LEnd()
    if isinstance(t, GTVar):
        return LTVar(t.name)
    if isinstance(t, GMsg):
        cont = _project(t.cont, q, ctx)
        self_case = LOut(t.to, t.payload, LIn(t.frm, t.payload, cont))
        out_case = LOut(t.to, t.payload, cont)
        in_case = LIn(t.frm, t.payload, cont)
        eq_from = _eq_decision(ctx, q, t.frm)
        eq_to = _eq_decision(ctx, q, t.to)
        then = _choose(eq_to, GuardEq(q, t.to), self_case, out_case)
        els = _choose(eq_to, GuardEq(q, t.to), in_case, cont)
        return _choose(eq_from, GuardEq(q, t.frm), then, els)
    if isinstance(t, GBra):
        eq_from = _eq_decision(ctx, q, t.frm)
        eq_to = _eq_decision(ctx, q, t.to)
        sel_case = lambda: LSel(
            t.to, tuple((l, _project(b, q, ctx)) for l, b in t.branches)
        )
        bra_case = lambda: LBra(
            t.frm, tuple((l, _project(b, q, ctx)) for l, b in t.branches)
        )
        other_case = lambda: merge_all([_project(b, q, ctx) for l, b in t.branches])
        if isinstance(eq_from, Valid):
            return sel_case()
        if isinstance(eq_from, Invalid):
            if isinstance(eq_to, Valid):
                return bra_case()
            if isinstance(eq_to, Invalid):
                return other_case()
            return LCond(GuardEq(q, t.to), bra_case(), other_case())
        then = sel_case()
        if isinstance(eq_to, Valid):
            els = bra_case()
        elif isinstance(eq_to, Invalid):
            els = other_case()
        else:
            els = LCond(GuardEq(q, t.to), bra_case(), other_case())
        return LCond(GuardEq(q, t.frm), then, els)
    if isinstance(t, GMu):
        body = _project(t.body, q, ctx)
        if isinstance(body, LTVar) and body.name == t.var:
            return LEnd()  # mu x.x is identified with end
        if t.var not in free_tvars(body):
            return body
        return LMu(t.var, body)
    if isinstance(t, GRec):
        try:
            pred = predecessor_sort(t.isort)
        except Exception:
            pred = t.isort
        inner = ctx.bind(t.ivar, pred)
        return LRec(
            _project(t.base, q, ctx),
            t.ivar,
            t.isort,
            t.tvar,
            _project(t.body, q, inner),
        )
    if isinstance(t, GApp):
        return LApp(_project(t.fn, q, ctx), t.arg)
    if isinstance(t, GCond):
        verdict = _guard_verdict(ctx, t.guard)
        if isinstance(verdict, Valid):
            return _project(t.then, q, ctx)
        if isinstance(verdict, Invalid):
            return _project(t.els, q, ctx)
        return LCond(t.guard, _project(t.then, q, ctx), _project(t.els, q, ctx))
    raise TypeError(f"not a global type: {t!r}")


def simplify_projection(t: LocalType, ctx: IndexContext) -> LocalType:
    """Prune conditional branches whose guards the index engine refutes or
    confirms; undecided guards survive."""
    if isinstance(t, LCond):
        verdict = _guard_verdict(ctx, t.guard)
        if isinstance(verdict, Valid):
            return simplify_projection(t.then, ctx)
        if isinstance(verdict, Invalid):
            return simplify_projection(t.els, ctx)
        return LCond(
            t.guard,
            simplify_projection(t.then, ctx),
            simplify_projection(t.els, ctx),
        )
    if isinstance(t, (LEnd, LTVar)):
        return t
    if isinstance(t, (LOut, LIn)):
        return type(t)(
            t.to if isinstance(t, LOut) else t.frm,
            t.payload,
            simplify_projection(t.cont, ctx),
        )
    if isinstance(t, (LSel, LBra)):
        who = t.to if isinstance(t, LSel) else t.frm
        return type(t)(
            who, tuple((l, simplify_projection(b, ctx)) for l, b in t.branches)
        )
    if isinstance(t, LMu):
        body = simplify_projection(t.body, ctx)
        if isinstance(body, LTVar) and body.name == t.var:
            return LEnd()
        if t.var not in free_tvars(body):
            return body
        return LMu(t.var, body)
    if isinstance(t, LRec):
        try:
            pred = predecessor_sort(t.isort)
        except Exception:
            pred = t.isort
        return LRec(
            simplify_projection(t.base, ctx),
            t.ivar,
            t.isort,
            t.tvar,
            simplify_projection(t.body, ctx.bind(t.ivar, pred)),
        )
    if isinstance(t, LApp):
        return LApp(simplify_projection(t.fn, ctx), t.arg)
    raise TypeError(f"not a local type: {t!r}")


def pid(g: GlobalType) -> set[Participant]:
    """The syntactic participant set of a global type."""
    out: set[Participant] = set()

    def walk(t: GlobalType) -> None:
        if isinstance(t, GMsg):
            out.add(t.frm)
            out.add(t.to)
            walk(t.cont)
        elif isinstance(t, GBra):
            out.add(t.frm)
            out.add(t.to)
            for _, b in t.branches:
                walk(b)
        elif isinstance(t, GMu):
            walk(t.body)
        elif isinstance(t, GRec):
            walk(t.base)
            walk(t.body)
        elif isinstance(t, GApp):
            walk(t.fn)
        elif isinstance(t, GCond):
            walk(t.then)
            walk(t.els)

    walk(g)
    return out


def pid_ground(g: GlobalType) -> set[Participant]:
    """Participant set of a ground (fully normalised) global type, with all
    indices evaluated."""
    out = set()
    for p in pid(g):
        out.add(Participant(p.name, tuple(ILit(eval_ground(i)) for i in p.indices)))
    return out
