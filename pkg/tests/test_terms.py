"""Substitution and alpha-equivalence on the shared syntax trees."""

import re

import pytest

from mpst.surface import parse_gtype, print_type
from mpst.terms import (
    GApp,
    GBra,
    GCond,
    GEnd,
    GMsg,
    GMu,
    GRec,
    GTVar,
    GuardIdx,
    ILit,
    IOp,
    IVar,
    LEnd,
    LMu,
    LOut,
    LTVar,
    PNat,
    Participant,
    alpha_eq,
    cond_decode,
    cond_encode,
    gforeach,
    iadd,
    part,
    srange,
    subst_end_with_tvar,
    subst_index,
    subst_tvar,
)

NAT = PNat()


def w(i):
    return part("W", i)


def msg(frm, to, cont=GEnd()):
    return GMsg(frm, to, NAT, cont)


def test_subst_index_direct():
    t = msg(w(iadd(IVar("i"), ILit(1))), w(IVar("i")))
    got = subst_index(t, "i", ILit(1))
    assert got == msg(w(iadd(ILit(1), ILit(1))), w(ILit(1)))


def test_subst_index_binder_shadowing():
    body = msg(w(IVar("i")), w(0), GTVar("x"))
    rec = GRec(GEnd(), "i", srange(ILit(5)), "x", body)
    assert subst_index(rec, "i", ILit(5)) == rec


def test_subst_index_capture_avoiding():
    # substituting an expression mentioning the bound name renames the binder
    body = msg(w(IVar("i")), w(IVar("n")), GTVar("x"))
    rec = GRec(GEnd(), "i", srange(IVar("n")), "x", body)
    got = subst_index(rec, "n", iadd(IVar("i"), ILit(1)))
    assert isinstance(got, GRec)
    assert got.ivar != "i"
    assert alpha_eq(
        got,
        GRec(
            GEnd(),
            "k",
            srange(iadd(IVar("i"), ILit(1))),
            "x",
            msg(w(IVar("k")), w(iadd(IVar("i"), ILit(1))), GTVar("x")),
        ),
    )


def test_subst_index_string_rewrite_oracle():
    # the fft inner-loop body, on closed alpha-normal display: replacing the
    # loop variable textually must agree with the structural substitution
    body = parse_gtype(
        "M[i*2^(n-l)+j] -> M[i*2^(n-l)+2^(n-l-1)+j] : nat . end"
    )
    structural = subst_index(body, "l", ILit(0))
    text = print_type(body)
    rewritten = re.sub(r"\bl\b", "0", text)
    assert alpha_eq(structural, parse_gtype(rewritten))


def test_subst_end_with_tvar_under_branches():
    t = GBra(
        w(0),
        w(1),
        (("l1", GMsg(w(0), w(1), NAT, GEnd())), ("l2", GEnd())),
    )
    got = subst_end_with_tvar(t, "x")
    assert got == GBra(
        w(0),
        w(1),
        (("l1", GMsg(w(0), w(1), NAT, GTVar("x"))), ("l2", GTVar("x"))),
    )


def test_subst_tvar_basic_and_bound():
    assert subst_tvar(GTVar("x"), "x", GEnd()) == GEnd()
    loop = GMu("x", GTVar("x"))
    assert subst_tvar(loop, "x", msg(w(0), w(1))) == loop


def test_alpha_eq_mu_rename():
    a = LMu("x", LOut(w(0), NAT, LTVar("x")))
    b = LMu("y", LOut(w(0), NAT, LTVar("y")))
    assert alpha_eq(a, b)


def test_alpha_eq_recursor_rename():
    a = GRec(GEnd(), "i", srange(IVar("n")), "x", msg(w(IVar("i")), w(0), GTVar("x")))
    b = GRec(GEnd(), "j", srange(IVar("n")), "z", msg(w(IVar("j")), w(0), GTVar("z")))
    assert alpha_eq(a, b)


def test_alpha_eq_distinguishes_polarity():
    from mpst.terms import LIn

    assert not alpha_eq(LOut(w(0), NAT, LEnd()), LIn(w(0), NAT, LEnd()))


def test_alpha_eq_is_equivalence_on_samples():
    samples = [
        GEnd(),
        msg(w(0), w(1)),
        gforeach("i", IVar("n"), msg(w(IVar("i")), w(0))),
    ]
    for t in samples:
        assert alpha_eq(t, t)
    a = GMu("x", msg(w(0), w(1), GTVar("x")))
    b = GMu("y", msg(w(0), w(1), GTVar("y")))
    c = GMu("z", msg(w(0), w(1), GTVar("z")))
    assert alpha_eq(a, b) and alpha_eq(b, c) and alpha_eq(a, c)
    assert alpha_eq(b, a)


def test_disjoint_substitutions_commute():
    t = msg(w(IVar("i")), w(IVar("j")))
    one = subst_index(subst_index(t, "i", ILit(1)), "j", ILit(2))
    two = subst_index(subst_index(t, "j", ILit(2)), "i", ILit(1))
    assert one == two


def test_subst_respects_alpha():
    a = GRec(GEnd(), "i", srange(IVar("n")), "x", msg(w(IVar("i")), w(0), GTVar("x")))
    b = GRec(GEnd(), "j", srange(IVar("n")), "x", msg(w(IVar("j")), w(0), GTVar("x")))
    assert alpha_eq(subst_index(a, "n", ILit(4)), subst_index(b, "n", ILit(4)))


def test_cond_encode_decode_roundtrip():
    t = GCond(GuardIdx(IVar("b")), msg(w(0), w(1)), GEnd())
    enc = cond_encode(t)
    assert isinstance(enc, GApp)
    assert alpha_eq(cond_decode(enc), t)


def test_cond_encode_reduces_like_a_test():
    from mpst.reduce import normal_form

    t = GCond(GuardIdx(ILit(1)), msg(w(0), w(1)), GEnd())
    enc = cond_encode(t)
    assert alpha_eq(normal_form(enc), msg(w(0), w(1)))
    f = cond_encode(GCond(GuardIdx(ILit(0)), msg(w(0), w(1)), GEnd()))
    assert normal_form(f) == GEnd()
