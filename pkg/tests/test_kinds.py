"""Environment well-formedness and kinding."""

import pytest

from mpst.diagnostics import KindError
from mpst.kinds import check_env, kind_global, kind_local, kind_participant, kind_proctype
from mpst.surface import parse_gtype, parse_ltype
from mpst.terms import (
    ChVar,
    EntryIndex,
    EntryPred,
    EntrySort,
    GEnd,
    GLocal,
    GMsg,
    GRec,
    GTVar,
    ILit,
    IOp,
    IVar,
    KPi,
    KType,
    LEnd,
    LOut,
    PLeq,
    PNat,
    PShared,
    Participant,
    SNat,
    SessionEnv,
    StdEnv,
    TPi,
    TSess,
    part,
    srange,
)

NAT = PNat()


def test_check_env_empty():
    assert check_env(StdEnv()) == []


def test_check_env_index_with_predicate():
    env = StdEnv((EntryIndex("n", SNat()), EntryPred(PLeq(ILit(2), IVar("n")))))
    assert check_env(env) == []


def test_check_env_duplicate_binding():
    g = parse_gtype("Alice -> Bob : nat . end")
    env = StdEnv((EntrySort("a", PShared(g)), EntrySort("a", PShared(g))))
    diags = check_env(env)
    assert any(d.rule == "EDup" for d in diags)


def test_kind_simple_message():
    g = parse_gtype("Alice -> Bob : nat . end")
    assert kind_global(StdEnv(), g) == KType()


def test_kind_recursor_gives_product():
    env = StdEnv((EntryIndex("n", SNat()),))
    rec = GRec(
        GEnd(),
        "i",
        srange(IVar("n")),
        "x",
        GMsg(
            part("W", IOp("+", IVar("i"), ILit(1))),
            part("W", IVar("i")),
            NAT,
            GTVar("x"),
        ),
    )
    k = kind_global(env, rec)
    assert k == KPi("i", srange(IVar("n")), KType())


def test_kind_rejects_open_carried_type():
    carried = GMsg(part("A"), part("B"), NAT, GTVar("x"))
    g = GMsg(part("A"), part("B"), PShared(carried), GEnd())
    with pytest.raises(KindError):
        kind_global(StdEnv(), g)


def test_kind_local_mirrors():
    t = parse_ltype("!<Bob, nat>. end")
    assert kind_local(StdEnv(), t) == KType()
    env = StdEnv((EntryIndex("n", SNat()),))
    rec = parse_ltype("R end with (i:[0..n], x) { !<Bob, nat>. x }")
    assert kind_local(env, rec) == KPi("i", srange(IVar("n")), KType())


def test_kind_local_rejects_open_payload():
    from mpst.terms import LIn, LTVar, PSession

    t = LOut(part("B"), PSession(LTVar("x")), LEnd())
    with pytest.raises(KindError):
        kind_local(StdEnv(), t)


def test_kind_proctype():
    assert kind_proctype(StdEnv(), TSess(SessionEnv())) == KType()
    d = TSess(SessionEnv(((ChVar("y"), GLocal(LOut(part("p"), NAT, LEnd()))),)))
    assert kind_proctype(StdEnv(), d) == KType()
    fam = TPi("i", srange(IVar("n")), d)
    env = StdEnv((EntryIndex("n", SNat()),))
    assert kind_proctype(env, fam) == KPi("i", srange(IVar("n")), KType())


def test_kind_participant():
    env = StdEnv((EntryIndex("n", SNat()), EntryPred(PLeq(ILit(1), IVar("n")))))
    kind_participant(env, part("W", IOp("-", IVar("n"), ILit(1))))
    kind_participant(StdEnv(), part("Alice"))
    bad_env = StdEnv((EntryIndex("i", srange(ILit(3))),))
    with pytest.raises(KindError):
        kind_participant(bad_env, part("W", IOp("-", IVar("i"), ILit(5))))


def test_kind_application_checks_membership():
    env = StdEnv((EntryIndex("n", SNat()),))
    g = parse_gtype("(R end with (i:[0..n], x) { W[i+1] -> W[i] : nat . x }) @ n")
    assert kind_global(env, g) == KType()
    bad = parse_gtype("(R end with (i:[0..3], x) { W[i+1] -> W[i] : nat . x }) @ 7")
    with pytest.raises(KindError):
        kind_global(StdEnv(), bad)


def test_weakening_preserves_kinding():
    from mpst.protocols import ring_family, sequence_family, fft_family

    for mk in (ring_family, sequence_family, fft_family):
        params, fam = mk()
        env = StdEnv(tuple(EntryIndex(v, s) for v, s in params))
        k = kind_global(env, fam)
        extended = env.add(EntryIndex("fresh_z", SNat())).add(
            EntrySort("fresh_a", PShared(parse_gtype("A -> B : nat . end")))
        )
        assert kind_global(extended, fam) == k


def test_substitution_preserves_kinding():
    from mpst.protocols import sequence_family
    from mpst.terms import subst_index

    params, fam = sequence_family()
    env = StdEnv(tuple(EntryIndex(v, s) for v, s in params))
    k = kind_global(env, fam)
    for n in (0, 1, 4):
        assert kind_global(StdEnv(), subst_index(fam, "n", ILit(n))) == k
