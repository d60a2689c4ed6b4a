"""Well-formed environments and kinding for global, local, value, principal,
index and process types.

Recursors introduce the dependent kinds: a recursor over sort I has kind
Pi j:I.k, with its body checked under the predecessor sort of I. Kinds other
than Type arise only through recursors and applications; the checker supports
argument-independent result kinds, which covers every type whose recursor
base is itself fully applied.
"""

from __future__ import annotations

from typing import Optional

from .diagnostics import Diagnostic, KindError, UndecidedError, diag
from .indices import (
    IndexContext,
    Invalid,
    Undecided,
    Valid,
    entails,
    member,
    predecessor_sort,
)
from .terms import (
    EntryIndex,
    EntryPred,
    EntryProc,
    EntrySort,
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
    GLocal,
    GMsgs,
    GMsgsThen,
    ILit,
    IndexExpr,
    IndexSort,
    KPi,
    KType,
    Kind,
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
    PBool,
    PLeq,
    PNat,
    PSession,
    PShared,
    Participant,
    PayloadType,
    ProcessType,
    Prop,
    SConstr,
    SEmpty,
    SNat,
    SessionType,
    StdEnv,
    TPi,
    TSess,
    free_ivars,
    free_pvars,
    free_tvars,
    is_global,
    prop_conjuncts,
    sort_free_vars,
    subst_kind,
)


def _bound_index_vars(env: StdEnv) -> set[str]:
    return {e.name for e in env.entries if isinstance(e, EntryIndex)}


def check_env(env: StdEnv) -> list[Diagnostic]:
    """Environment well-formedness: distinct binders, well-scoped entries."""
    out: list[Diagnostic] = []
    seen: set[str] = set()
    ivars: set[str] = set()
    prefix = StdEnv()
    for entry in env.entries:
        if isinstance(entry, EntryPred):
            loose = free_pvars(entry.prop) - ivars
            if loose:
                out.append(diag("EPre", f"predicate mentions unbound {sorted(loose)}"))
        else:
            if entry.name in seen:
                out.append(diag("EDup", f"duplicate binding for {entry.name}"))
            seen.add(entry.name)
            if isinstance(entry, EntryIndex):
                try:
                    check_sort(prefix, entry.isort)
                except KindError as e:
                    out.append(e.diag)
                ivars.add(entry.name)
            elif isinstance(entry, EntrySort):
                try:
                    kind_payload(prefix, entry.payload)
                except KindError as e:
                    out.append(e.diag)
            elif isinstance(entry, EntryProc):
                try:
                    kind_proctype(prefix, entry.ptype)
                except KindError as e:
                    out.append(e.diag)
        prefix = prefix.add(entry)
    return out


def check_sort(env: StdEnv, sort: IndexSort) -> None:
    if isinstance(sort, (SNat, SEmpty)):
        return
    check_sort(env, sort.base)
    loose = (free_pvars(sort.constraint) - {sort.var}) - _bound_index_vars(env)
    if loose:
        raise KindError(
            diag("KIIndex", f"sort constraint mentions unbound {sorted(loose)}")
        )


def kind_participant(env: StdEnv, p: Participant, trail: tuple[str, ...] = ()) -> None:
    """Every index of a participant must be a provably nonnegative nat
    expression over the environment."""
    ctx = IndexContext.from_env(env)
    bound = _bound_index_vars(env)
    for e in p.indices:
        loose = free_ivars(e) - bound
        if loose:
            raise KindError(
                diag("TP", f"participant {p} mentions unbound {sorted(loose)}", trail)
            )
        verdict = entails(ctx, PLeq(ILit(0), e))
        if isinstance(verdict, Invalid):
            raise KindError(
                diag(
                    "TIOp",
                    f"index {e} of {p} can be negative (witness {verdict.witness})",
                    trail,
                )
            )
        if isinstance(verdict, Undecided):
            raise UndecidedError(
                diag("TIOp", f"nonnegativity of {e} in {p} is undecided", trail)
            )


def kind_payload(env: StdEnv, u: PayloadType, trail: tuple[str, ...] = ()) -> None:
    if isinstance(u, (PNat, PBool)):
        return
    if isinstance(u, PShared):
        if free_tvars(u.gtype):
            raise KindError(
                diag("KMar", "carried shared type has free type variables", trail)
            )
        kind_global(env, u.gtype, trail=trail)
        return
    if free_tvars(u.ltype):
        raise KindError(
            diag("KMar", "delegated session type has free type variables", trail)
        )
    kind_local(env, u.ltype, trail=trail)


def _kind_type(
    env: StdEnv,
    t: SessionType,
    tvars: dict[str, Kind],
    trail: tuple[str, ...],
) -> Kind:
    here = trail + (f"kinding {str(t)[:60]}",)
    if isinstance(t, (GEnd, LEnd)):
        return KType()
    if isinstance(t, (GTVar, LTVar)):
        k = tvars.get(t.name)
        if k is None:
            raise KindError(diag("KVar", f"unbound type variable {t.name}", here))
        return k
    if isinstance(t, GMsg):
        kind_participant(env, t.frm, here)
        kind_participant(env, t.to, here)
        kind_payload(env, t.payload, here)
        _expect_type(env, t.cont, tvars, here, "KIO")
        return KType()
    if isinstance(t, (LOut, LIn)):
        who = t.to if isinstance(t, LOut) else t.frm
        kind_participant(env, who, here)
        kind_payload(env, t.payload, here)
        _expect_type(env, t.cont, tvars, here, "KLOut" if isinstance(t, LOut) else "KLIn")
        return KType()
    if isinstance(t, GBra):
        kind_participant(env, t.frm, here)
        kind_participant(env, t.to, here)
        for label, b in t.branches:
            _expect_type(env, b, tvars, here + (f"branch {label}",), "KBra")
        return KType()
    if isinstance(t, (LSel, LBra)):
        who = t.to if isinstance(t, LSel) else t.frm
        kind_participant(env, who, here)
        rule = "KLSel" if isinstance(t, LSel) else "KLBra"
        for label, b in t.branches:
            _expect_type(env, b, tvars, here + (f"branch {label}",), rule)
        return KType()
    if isinstance(t, (GMu, LMu)):
        inner = dict(tvars)
        inner[t.var] = KType()
        _expect_type(env, t.body, inner, here, "KRec")
        return KType()
    if isinstance(t, (GRec, LRec)):
        check_sort(env, t.isort)
        kb = _kind_type(env, t.base, tvars, here + ("recursor base",))
        pred = predecessor_sort(t.isort)
        if isinstance(pred, SEmpty):
            # the body can never be entered; its check is vacuous
            return KPi(t.ivar, t.isort, kb)
        env2 = env.add(EntryIndex(t.ivar, pred))
        inner = dict(tvars)
        inner[t.tvar] = kb
        kbody = _kind_type(env2, t.body, inner, here + ("recursor body",))
        if kbody != kb:
            raise KindError(
                diag(
                    "KRcr",
                    f"recursor base kinds to {kb} but body to {kbody}",
                    here,
                )
            )
        if isinstance(kb, KPi) and t.ivar in _kind_sort_vars(kb):
            raise KindError(
                diag("KRcr", "argument-dependent result kinds are unsupported", here)
            )
        return KPi(t.ivar, t.isort, kb)
    if isinstance(t, (GApp, LApp)):
        kf = _kind_type(env, t.fn, tvars, here)
        if not isinstance(kf, KPi):
            raise KindError(diag("KApp", f"applying a type of kind {kf}", here))
        verdict = member(IndexContext.from_env(env), t.arg, kf.isort)
        if isinstance(verdict, Invalid):
            raise KindError(
                diag("KApp", f"argument {t.arg} outside sort {kf.isort}", here)
            )
        if isinstance(verdict, Undecided):
            raise UndecidedError(
                diag("KApp", f"membership {t.arg} : {kf.isort} is undecided", here)
            )
        return subst_kind(kf.body, kf.ivar, t.arg)
    if isinstance(t, (GCond, LCond)):
        # derived form: kinded as its recursor encoding would be
        g = t.guard
        if isinstance(g, GuardEq):
            kind_participant(env, g.left, here)
            kind_participant(env, g.right, here)
        else:
            loose = free_ivars(g.expr) - _bound_index_vars(env)
            if loose:
                raise KindError(
                    diag("KApp", f"guard mentions unbound {sorted(loose)}", here)
                )
        _expect_type(env, t.then, tvars, here + ("then",), "KRcr")
        _expect_type(env, t.els, tvars, here + ("else",), "KRcr")
        return KType()
    raise TypeError(f"not a type: {t!r}")


def _kind_sort_vars(k: Kind) -> set[str]:
    if isinstance(k, KType):
        return set()
    return set(sort_free_vars(k.isort)) | _kind_sort_vars(k.body)


def _expect_type(env, t, tvars, trail, rule) -> None:
    k = _kind_type(env, t, tvars, trail)
    if not isinstance(k, KType):
        raise KindError(diag(rule, f"expected kind Type, got {k}", trail))


def kind_global(env: StdEnv, g: SessionType, trail: tuple[str, ...] = ()) -> Kind:
    if not is_global(g):
        raise KindError(diag("KBase", "expected a global type", trail))
    return _kind_type(env, g, {}, trail)


def kind_local(env: StdEnv, t: SessionType, trail: tuple[str, ...] = ()) -> Kind:
    if is_global(t):
        raise KindError(diag("KBase", "expected a local type", trail))
    return _kind_type(env, t, {}, trail)


def kind_type(env: StdEnv, t: SessionType, trail: tuple[str, ...] = ()) -> Kind:
    return _kind_type(env, t, {}, trail)


def kind_proctype(env: StdEnv, tau: ProcessType, trail: tuple[str, ...] = ()) -> Kind:
    if isinstance(tau, TSess):
        for chan, gen in tau.env.entries:
            for lt in _gen_session_parts(gen):
                _expect_type(env, lt, {}, trail + (f"channel {chan}",), "KPCh")
        return KType()
    check_sort(env, tau.isort)
    env2 = env.add(EntryIndex(tau.ivar, tau.isort))
    inner = kind_proctype(env2, tau.body, trail)
    return KPi(tau.ivar, tau.isort, inner)


def _gen_session_parts(gen):
    if isinstance(gen, GLocal):
        return (gen.ltype,)
    if isinstance(gen, GMsgsThen):
        return (gen.ltype,)
    return ()
