"""Type reduction: head steps, weak head normal forms, full normalisation."""

import random

import pytest

from mpst.diagnostics import FuelExhausted
from mpst.reduce import normal_form, reduce_random, step, whnf
from mpst.surface import parse_gtype
from mpst.terms import (
    GApp,
    GEnd,
    GMsg,
    GMu,
    GRec,
    GTVar,
    ILit,
    IVar,
    LEnd,
    LMu,
    LOut,
    LTVar,
    PNat,
    alpha_eq,
    gforeach,
    iadd,
    part,
    srange,
    subst_index,
)

NAT = PNat()


def w(i):
    return part("W", i)


def msg(frm, to, cont=GEnd()):
    return GMsg(frm, to, NAT, cont)


def test_recursor_at_zero():
    base = msg(w(0), w(1))
    rec = GRec(base, "i", srange(ILit(3)), "x", msg(w(IVar("i")), w(0), GTVar("x")))
    assert step(GApp(rec, ILit(0))) == base


def test_foreach_unrolls_to_manual_chain():
    # unroll foreach i<2 { W[i+1] -> W[i] : nat } by hand: the body runs at
    # i=1 then i=0, each message chained before the base
    fam = gforeach("i", IVar("n"), msg(w(iadd(IVar("i"), ILit(1))), w(IVar("i"))))
    got = normal_form(subst_index(fam, "n", ILit(2)))
    manual = msg(w(2), w(1), msg(w(1), w(0), GEnd()))
    assert alpha_eq(got, manual)


def test_end_has_no_step():
    assert step(GEnd()) is None


def test_step_deterministic_on_closed_terms():
    fam = gforeach("i", IVar("n"), msg(w(iadd(IVar("i"), ILit(1))), w(IVar("i"))))
    t = subst_index(fam, "n", ILit(3))
    seen = []
    while True:
        nxt = step(t)
        again = step(t)
        assert nxt == again
        if nxt is None:
            break
        seen.append(nxt)
        t = nxt
    assert seen  # it did reduce


def test_whnf_beta_for_pi_sugar():
    # (pi i. G) @ 5 has the same whnf as G[5/i]
    g = parse_gtype("pi i:nat. W[i] -> W[0] : nat . end")
    app = GApp(g, ILit(5))
    assert alpha_eq(whnf(app), whnf(subst_index(parse_gtype("W[i] -> W[0] : nat . end"), "i", ILit(5))))


def test_whnf_idempotent():
    fam = gforeach("i", IVar("n"), msg(w(iadd(IVar("i"), ILit(1))), w(IVar("i"))))
    t = subst_index(fam, "n", ILit(3))
    assert whnf(whnf(t)) == whnf(t)


def test_whnf_end():
    assert whnf(GEnd()) == GEnd()


def test_symbolic_successor_unrolls():
    rec = GRec(GEnd(), "i", srange(IVar("n")), "x", msg(w(0), w(1), GTVar("x")))
    got = whnf(GApp(rec, iadd(IVar("i"), ILit(1))))
    assert isinstance(got, GMsg)
    assert isinstance(got.cont, GApp)
    assert got.cont.arg == IVar("i")


def test_mu_self_loop_collapses_and_vacuous_mu_drops():
    assert step(GMu("x", GTVar("x"))) == GEnd()
    assert step(GMu("x", msg(w(0), w(1)))) == msg(w(0), w(1))
    # a guarded mu is not unfolded by reduction
    t = LMu("x", LOut(w(0), NAT, LTVar("x")))
    assert normal_form(t) == t


def test_fuel_exhaustion_reported():
    from mpst.reduce import clear_memo

    fam = gforeach("i", IVar("n"), msg(w(iadd(IVar("i"), ILit(1))), w(IVar("i"))))
    t = subst_index(fam, "n", ILit(50))
    clear_memo()
    with pytest.raises(FuelExhausted):
        normal_form(t, fuel=1)


def _random_closed_type(rng: random.Random, depth: int = 3):
    """Well-kinded closed global types over ground participants and finite
    sorts; recursion variables occur guarded."""
    if depth == 0:
        return GEnd()
    pick = rng.random()
    frm, to = w(rng.randrange(3)), w(rng.randrange(3))
    if pick < 0.35:
        return msg(frm, to, _random_closed_type(rng, depth - 1))
    if pick < 0.5:
        from mpst.terms import GBra

        labels = rng.sample(["a", "b", "c"], k=rng.randrange(1, 3))
        return GBra(
            frm,
            to,
            tuple((l, _random_closed_type(rng, depth - 1)) for l in labels),
        )
    if pick < 0.75:
        bound = rng.randrange(0, 4)
        tv = f"x{depth}{rng.randrange(100)}"
        body = msg(frm, to, GTVar(tv))
        if rng.random() < 0.5:
            body = msg(frm, to, _wrap_tvar(_random_closed_type(rng, depth - 1), tv))
        return GApp(
            GRec(
                _random_closed_type(rng, depth - 1),
                f"i{depth}",
                srange(ILit(bound)),
                tv,
                body,
            ),
            ILit(rng.randrange(0, bound + 1)),
        )
    if pick < 0.85:
        tv = f"m{depth}{rng.randrange(100)}"
        return GMu(tv, msg(frm, to, GTVar(tv)))
    return msg(frm, to, GEnd())


def _wrap_tvar(t, tv):
    from mpst.terms import subst_end_with_tvar

    return subst_end_with_tvar(t, tv)


def test_strategies_agree_small():
    rng = random.Random(7)
    for k in range(60):
        t = _random_closed_type(rng)
        left = normal_form(t)
        rand = reduce_random(t, random.Random(1000 + k))
        assert alpha_eq(left, rand), f"disagreement on sample {k}"
