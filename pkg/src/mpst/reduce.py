"""Type reduction: one-step head reduction, weak head normal forms, and full
normalisation for global and local types.

Reduction applies a recursor to its argument (base at zero, one unrolling on
a successor), folds ground arguments, resolves ground conditional guards and
collapses degenerate recursion (mu x.x and vacuous mu). The recursor rules
also fire on symbolic successor arguments such as i+1, which the equivalence
checker relies on. mu itself is never unfolded here. Guarded by fuel: strong
normalisation holds for well-kinded inputs, so running out of fuel signals an
ill-kinded term that escaped earlier checks.
"""

from __future__ import annotations

import random
from dataclasses import replace
from typing import Callable, Optional

from .diagnostics import FuelExhausted, diag
from .indices import eval_ground, is_ground, successor_view, eval_nat
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
    IndexExpr,
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
    PSession,
    PShared,
    Participant,
    SessionType,
    free_tvars,
    subst_index,
    subst_tvar,
)

DEFAULT_FUEL = 10**6


def _ground_participant(p: Participant) -> Optional[Participant]:
    if not p.is_ground():
        return None
    vals = []
    for i in p.indices:
        if not isinstance(i, ILit):
            return None
        vals.append(i)
    return p


def _eval_participant(p: Participant) -> Participant:
    return Participant(p.name, tuple(ILit(eval_nat(i)) for i in p.indices))


def _fold_parts(t: SessionType) -> Optional[SessionType]:
    """Evaluate ground participant indices at the head, e.g. W[3+1] to W[4]."""

    def folds(p: Participant) -> bool:
        return p.is_ground() and any(not isinstance(i, ILit) for i in p.indices)

    if isinstance(t, GMsg):
        if folds(t.frm) or folds(t.to):
            return replace(
                t, frm=_eval_participant(t.frm), to=_eval_participant(t.to)
            )
    elif isinstance(t, GBra):
        if folds(t.frm) or folds(t.to):
            return replace(
                t, frm=_eval_participant(t.frm), to=_eval_participant(t.to)
            )
    elif isinstance(t, (LOut, LSel)):
        if folds(t.to):
            return replace(t, to=_eval_participant(t.to))
    elif isinstance(t, (LIn, LBra)):
        if folds(t.frm):
            return replace(t, frm=_eval_participant(t.frm))
    return None


def step(t: SessionType) -> Optional[SessionType]:
    """One head-reduction step, or None when the head is irreducible."""
    folded = _fold_parts(t)
    if folded is not None:
        return folded
    if isinstance(t, (GApp, LApp)):
        fn, arg = t.fn, t.arg
        if isinstance(fn, (GRec, LRec)):
            if not isinstance(arg, ILit) and is_ground(arg):
                return type(t)(fn, ILit(eval_nat(arg)))
            if isinstance(arg, ILit):
                if arg.value == 0:
                    return fn.base
                pred: IndexExpr = ILit(arg.value - 1)
            else:
                sv = successor_view(arg)
                if sv is None:
                    return None  # stuck on a symbolic argument
                pred = sv
            unrolled = subst_index(fn.body, fn.ivar, pred)
            return subst_tvar(unrolled, fn.tvar, type(t)(fn, pred))
        inner = step(fn)
        if inner is not None:
            return type(t)(inner, arg)
        return None
    if isinstance(t, (GCond, LCond)):
        g = t.guard
        if isinstance(g, GuardIdx) and is_ground(g.expr):
            return t.els if eval_ground(g.expr) == 0 else t.then
        if isinstance(g, GuardEq) and g.left.is_ground() and g.right.is_ground():
            same = _eval_participant(g.left) == _eval_participant(g.right)
            return t.then if same else t.els
        return None
    if isinstance(t, (GMu, LMu)):
        if isinstance(t.body, (GTVar, LTVar)) and t.body.name == t.var:
            return GEnd() if isinstance(t, GMu) else LEnd()
        if t.var not in free_tvars(t.body):
            return t.body
        return None
    return None


_whnf_memo: dict = {}


def clear_memo() -> None:
    _whnf_memo.clear()


def whnf(t: SessionType, fuel: int = DEFAULT_FUEL) -> SessionType:
    """Reduce at the head until no rule applies."""
    cached = _whnf_memo.get(t)
    if cached is not None:
        return cached
    orig = t
    for _ in range(fuel):
        nxt = step(t)
        if nxt is None:
            _whnf_memo[orig] = t
            return t
        t = nxt
    raise FuelExhausted(diag("Whnf", f"no weak head normal form within {fuel} steps"))


def _norm_payload(u, fuel):
    if isinstance(u, PShared):
        return PShared(normal_form(u.gtype, fuel))
    if isinstance(u, PSession):
        return PSession(normal_form(u.ltype, fuel))
    return u


def _norm_participant(p: Participant) -> Participant:
    # evaluation contexts fold ground participant indices, e.g. W[3+1] -> W[4]
    if p.is_ground():
        return _eval_participant(p)
    return p


def normal_form(t: SessionType, fuel: int = DEFAULT_FUEL) -> SessionType:
    """Fully normalise: whnf at the head, then recurse into every closed
    position (recursor bodies stay untouched; they live under a binder)."""
    t = whnf(t, fuel)
    if isinstance(t, (GEnd, LEnd, GTVar, LTVar)):
        return t
    if isinstance(t, GMsg):
        return GMsg(
            _norm_participant(t.frm),
            _norm_participant(t.to),
            _norm_payload(t.payload, fuel),
            normal_form(t.cont, fuel),
        )
    if isinstance(t, (LOut, LIn)):
        out = replace(
            t,
            payload=_norm_payload(t.payload, fuel),
            cont=normal_form(t.cont, fuel),
        )
        if isinstance(t, LOut):
            return replace(out, to=_norm_participant(t.to))
        return replace(out, frm=_norm_participant(t.frm))
    if isinstance(t, GBra):
        return replace(
            t,
            frm=_norm_participant(t.frm),
            to=_norm_participant(t.to),
            branches=tuple((l, normal_form(b, fuel)) for l, b in t.branches),
        )
    if isinstance(t, (LSel, LBra)):
        out = replace(
            t, branches=tuple((l, normal_form(b, fuel)) for l, b in t.branches)
        )
        if isinstance(t, LSel):
            return replace(out, to=_norm_participant(t.to))
        return replace(out, frm=_norm_participant(t.frm))
    if isinstance(t, (GMu, LMu)):
        body = normal_form(t.body, fuel)
        out = type(t)(t.var, body)
        # normalising the body may expose mu x.x or a vacuous mu
        again = step(out)
        return normal_form(again, fuel) if again is not None else out
    if isinstance(t, (GRec, LRec)):
        return replace(t, base=normal_form(t.base, fuel))
    if isinstance(t, (GApp, LApp)):
        return replace(t, fn=normal_form(t.fn, fuel))
    if isinstance(t, (GCond, LCond)):
        return type(t)(t.guard, normal_form(t.then, fuel), normal_form(t.els, fuel))
    raise TypeError(f"not a type: {t!r}")


# ---------------------------------------------------------------------------
# Whole-term redex enumeration, for the confluence property tests


def _subterm_sites(t: SessionType) -> list[tuple[SessionType, Callable]]:
    """All positions (subterm, rebuild) reachable without crossing a recursor
    body; used to pick arbitrary redexes."""
    sites: list[tuple[SessionType, Callable]] = [(t, lambda x: x)]

    def extend(sub: SessionType, wrap: Callable) -> None:
        for inner, rebuild in _subterm_sites(sub):
            sites.append((inner, (lambda rb, w: lambda x: w(rb(x)))(rebuild, wrap)))

    if isinstance(t, GMsg):
        extend(t.cont, lambda x: replace(t, cont=x))
    elif isinstance(t, (LOut, LIn)):
        extend(t.cont, lambda x: replace(t, cont=x))
    elif isinstance(t, (GBra, LSel, LBra)):
        for k, (_l, b) in enumerate(t.branches):
            extend(
                b,
                (
                    lambda k_, t_: lambda x: replace(
                        t_,
                        branches=tuple(
                            (l2, x if j == k_ else b2)
                            for j, (l2, b2) in enumerate(t_.branches)
                        ),
                    )
                )(k, t),
            )
    elif isinstance(t, (GMu, LMu)):
        extend(t.body, lambda x: replace(t, body=x))
    elif isinstance(t, (GRec, LRec)):
        extend(t.base, lambda x: replace(t, base=x))
    elif isinstance(t, (GApp, LApp)):
        extend(t.fn, lambda x: replace(t, fn=x))
    elif isinstance(t, (GCond, LCond)):
        extend(t.then, lambda x: replace(t, then=x))
        extend(t.els, lambda x: replace(t, els=x))
    return sites


def reduce_random(t: SessionType, rng: random.Random, fuel: int = DEFAULT_FUEL) -> SessionType:
    """Normalise by firing randomly chosen redexes; agrees with normal_form
    on well-kinded closed types (confluence)."""
    for _ in range(fuel):
        redexes = []
        for sub, rebuild in _subterm_sites(t):
            nxt = step(sub)
            if nxt is not None:
                redexes.append((rebuild, nxt))
        if not redexes:
            return t
        rebuild, nxt = rng.choice(redexes)
        t = rebuild(nxt)
    raise FuelExhausted(diag("Reduce", f"no normal form within {fuel} steps"))
