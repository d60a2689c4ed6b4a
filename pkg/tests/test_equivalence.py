"""Staged type equivalence, isomorphism, subtyping."""

import itertools

import pytest

from mpst.equivalence import family_equiv, iso, subtype, type_equiv
from mpst.projection import project
from mpst.reduce import normal_form
from mpst.surface import parse_gtype, parse_ltype
from mpst.terms import (
    EntryIndex,
    ILit,
    IVar,
    LApp,
    LOut,
    PNat,
    SNat,
    StdEnv,
    alpha_eq,
    iadd,
    part,
    srange,
    subst_index,
)

NAT = PNat()


def test_repetition_teq_step_closes_via_wfbase():
    # Delta(i+1) against the output-prefixed application at i
    gen = parse_ltype("R end with (j:[0..n], x) { !<Bob, nat>. x }")
    env = StdEnv(
        (EntryIndex("n", SNat()), EntryIndex("i", srange(IVar("n"))))
    )
    lhs = LApp(gen, iadd(IVar("i"), ILit(1)))
    rhs = LOut(part("Bob"), NAT, LApp(gen, IVar("i")))
    verdict, trace = type_equiv(env, lhs, rhs)
    assert verdict is True
    assert "WfBase" in trace.rules()


def test_reflexivity():
    t = parse_gtype("mu t . A -> B : nat . t")
    verdict, _ = type_equiv(StdEnv(), t, t)
    assert verdict is True


def test_symmetry_and_transitivity_on_passing_triples():
    a = parse_ltype("(R end with (i:[0..4], x) { !<B, nat>. x }) @ 2")
    b = parse_ltype("!<B, nat>. (R end with (i:[0..4], x) { !<B, nat>. x }) @ 1")
    c = parse_ltype("!<B, nat>. !<B, nat>. end")
    env = StdEnv()
    for x, y in itertools.permutations((a, b, c), 2):
        verdict, _ = type_equiv(env, x, y)
        assert verdict is True


def test_sequence_generator_vs_roles_by_instantiation():
    from mpst.protocols import sequence_family, sequence_role_type

    _, fam = sequence_family()
    for n in range(2, 6):
        ground = subst_index(fam, "n", ILit(n))
        for k in range(n + 1):
            got = normal_form(project(ground, part("W", k)))
            verdict, _ = type_equiv(StdEnv(), got, sequence_role_type(n, k))
            assert verdict is True, (n, k)


def test_wfrec_componentwise_closes_without_enumeration():
    a = parse_ltype("R end with (i:[0..n], x) { !<B, nat>. x }")
    b = parse_ltype("R end with (i:[0..n], x) { !<B, nat>. x }")
    env = StdEnv((EntryIndex("n", SNat()),))
    verdict, trace = type_equiv(env, a, b)
    assert verdict is True
    assert "WfRec" in trace.rules()


def test_wfrecf_closes_where_componentwise_fails():
    # bodies differ syntactically but every finite application agrees: the
    # guard only resolves once the bound index is instantiated
    a = parse_ltype("R end with (i:[0..2], x) { !<B, nat>. x }")
    b = parse_ltype(
        "R end with (i:[0..2], x) "
        "{ if W[i] = W[i+1] then (?<B, nat>. x) else (!<B, nat>. x) }"
    )
    verdict, trace = type_equiv(StdEnv(), a, b)
    assert verdict is True
    assert "WfRecF" in trace.rules()


def test_wfrec_subsumed_by_wfrecf_on_finite_sorts():
    # whenever the componentwise rule succeeds over a finite sort, the
    # extensional rule agrees
    a = parse_ltype("R end with (i:[0..3], x) { !<B, nat>. x }")
    b = parse_ltype("R end with (i:[0..3], x) { !<B, nat>. x }")
    verdict, _ = type_equiv(StdEnv(), a, b)
    assert verdict is True
    for n in range(4):
        va, _ = type_equiv(StdEnv(), LApp(a, ILit(n)), LApp(b, ILit(n)))
        assert va is True


def test_undecided_over_infinite_sort():
    a = parse_ltype("R end with (i:nat, x) { !<B, nat>. x }")
    b = parse_ltype(
        "R end with (i:nat, x) "
        "{ if W[i] = W[i+1] then (?<B, nat>. x) else (!<B, nat>. x) }"
    )
    verdict, _ = type_equiv(StdEnv(), a, b)
    assert verdict == "undecided"


def test_unequal_is_definite():
    verdict, _ = type_equiv(
        StdEnv(), parse_ltype("!<B, nat>. end"), parse_ltype("?<B, nat>. end")
    )
    assert verdict is False


def test_iso_examples():
    t = parse_ltype("mu x . !<p, nat>. x")
    unfolded = parse_ltype("!<p, nat>. mu x . !<p, nat>. x")
    assert iso(t, unfolded)
    assert iso(parse_ltype("end"), parse_ltype("end"))
    assert not iso(parse_ltype("mu x . !<p, nat>. x"), parse_ltype("mu x . ?<p, nat>. x"))


def test_subtype_examples():
    env = StdEnv()
    assert subtype(
        env,
        parse_ltype("sel<p> { ok: end }"),
        parse_ltype("sel<p> { ok: end, quit: end }"),
    )
    assert subtype(
        env,
        parse_ltype("bra<p> { ok: end, quit: end }"),
        parse_ltype("bra<p> { ok: end }"),
    )
    t = parse_ltype("mu x . !<p, nat>. x")
    assert subtype(env, t, t)


def test_subtype_is_a_preorder_on_samples():
    env = StdEnv()
    samples = [
        parse_ltype("sel<p> { ok: end }"),
        parse_ltype("sel<p> { ok: end, quit: end }"),
        parse_ltype("sel<p> { ok: end, quit: end, more: !<p, nat>. end }"),
    ]
    for t in samples:
        assert subtype(env, t, t)
    assert subtype(env, samples[0], samples[1])
    assert subtype(env, samples[1], samples[2])
    assert subtype(env, samples[0], samples[2])


def test_equiv_implies_mutual_subtyping_mu_free():
    env = StdEnv()
    a = parse_ltype("(R end with (i:[0..3], x) { !<B, nat>. x }) @ 2")
    b = parse_ltype("!<B, nat>. !<B, nat>. end")
    verdict, _ = type_equiv(env, a, b)
    assert verdict is True
    assert subtype(env, normal_form(a), normal_form(b))
    assert subtype(env, normal_form(b), normal_form(a))


def test_family_equiv_records_extensional_rule():
    a = parse_ltype("R end with (i:[0..n], x) { !<B, nat>. x }")
    b = parse_ltype("R end with (i:[0..n], x) { !<B, nat>. x }")
    verdict, trace = family_equiv(
        StdEnv(), [("n", SNat())], LApp(a, IVar("n")), LApp(b, IVar("n")),
        [(k,) for k in range(4)],
    )
    assert verdict is True
    assert "WfRecF" in trace.rules()
