"""Ground evaluation and the semantic index judgements."""

import itertools

import pytest

from mpst.diagnostics import KindError, NegativeResult
from mpst.indices import (
    INFINITE,
    IndexContext,
    Invalid,
    Undecided,
    Valid,
    entails,
    enumerate_sort,
    eval_ground,
    eval_nat,
    member,
    participants_equal,
    participants_overlap,
    predecessor_sort,
    successor_view,
)
from mpst.terms import (
    ILit,
    IOp,
    IVar,
    PAnd,
    PLeq,
    SConstr,
    SEmpty,
    SNat,
    part,
    srange,
)


def leq(a, b):
    return PLeq(a, b)


def test_eval_contexts_fold():
    assert eval_ground(IOp("+", ILit(3), ILit(1))) == 4


def test_eval_pow_minus():
    assert eval_ground(IOp("-", IOp("^", ILit(2), ILit(3)), ILit(1))) == 7


def test_eval_fft_pairing_index():
    # 1*2^(3-1)+0 at n=3, l=1, i=1, j=0
    e = IOp("+", IOp("*", ILit(1), IOp("^", ILit(2), IOp("-", ILit(3), ILit(1)))), ILit(0))
    assert eval_ground(e) == 4


def test_eval_nat_rejects_negative():
    with pytest.raises(NegativeResult):
        eval_nat(IOp("-", ILit(1), ILit(2)))


def test_entails_with_assumption():
    ctx = IndexContext().bind("n", SNat()).assume(leq(ILit(2), IVar("n")))
    assert isinstance(entails(ctx, leq(ILit(1), IOp("-", IVar("n"), ILit(1)))), Valid)


def test_entails_enumeration_cross_check():
    # the same judgement checked by brute force over n in [2..50]
    def holds(n):
        return 1 <= n - 1

    assert all(holds(n) for n in range(2, 51))


def test_entails_trivial_and_witness():
    assert isinstance(entails(IndexContext(), leq(ILit(0), ILit(0))), Valid)
    v = entails(IndexContext().bind("i", SNat()), leq(IVar("i"), ILit(3)))
    assert isinstance(v, Invalid)
    assert v.witness == {"i": 4}


def test_entails_monotone_in_assumptions():
    ctx = IndexContext().bind("i", SNat())
    goal = leq(IVar("i"), ILit(3))
    assert isinstance(entails(ctx, goal), Invalid)
    stronger = ctx.assume(leq(IVar("i"), ILit(2)))
    assert isinstance(entails(stronger, goal), Valid)


def test_entails_soundness_against_enumeration():
    # whenever the procedure says Valid on a ground-boundable context, an
    # exhaustive check over the box agrees
    ctx = (
        IndexContext()
        .bind("i", srange(ILit(9)))
        .bind("j", srange(ILit(9)))
        .assume(leq(IVar("i"), IVar("j")))
    )
    goal = leq(IVar("i"), IOp("+", IVar("j"), ILit(1)))
    assert isinstance(entails(ctx, goal), Valid)
    for i, j in itertools.product(range(10), repeat=2):
        if i <= j:
            assert i <= j + 1


def test_member_examples():
    assert isinstance(
        member(IndexContext(), ILit(2), SConstr("i", SNat(), leq(IVar("i"), ILit(5)))),
        Valid,
    )
    ctx = IndexContext().bind("n", SNat()).assume(leq(ILit(1), IVar("n")))
    e = IOp("-", IVar("n"), ILit(1))
    assert isinstance(member(ctx, e, srange(e)), Valid)
    assert isinstance(member(IndexContext(), ILit(7), srange(ILit(3))), Invalid)


def test_predecessor_sort():
    assert isinstance(predecessor_sort(srange(ILit(0))), SEmpty)
    assert predecessor_sort(srange(ILit(5))) == srange(ILit(5 - 1))
    shifted = predecessor_sort(srange(IVar("n")))
    assert isinstance(shifted, SConstr)
    assert shifted.constraint == leq(IVar(shifted.var), IOp("-", IVar("n"), ILit(1)))


def test_predecessor_rejects_unbounded_constraint():
    lower_only = SConstr("i", SNat(), leq(ILit(2), IVar("i")))
    with pytest.raises(KindError):
        predecessor_sort(lower_only)


def test_member_shifts_into_predecessor():
    # membership at e and the KRcr predecessor obligation at e-1
    sort = srange(ILit(6))
    assert isinstance(member(IndexContext(), ILit(4), sort), Valid)
    assert isinstance(
        member(IndexContext(), ILit(3), predecessor_sort(sort)), Valid
    )


def test_enumerate():
    assert enumerate_sort(srange(ILit(3)), IndexContext()) == [0, 1, 2, 3]
    assert enumerate_sort(SNat(), IndexContext()) == INFINITE
    two_sided = SConstr(
        "i", SNat(), PAnd(leq(IVar("i"), ILit(2)), leq(ILit(1), IVar("i")))
    )
    assert enumerate_sort(two_sided, IndexContext()) == [1, 2]


def test_successor_views():
    assert successor_view(IOp("+", IVar("i"), ILit(1))) == IVar("i")
    assert successor_view(ILit(3)) == ILit(2)
    assert successor_view(IVar("i")) is None


def test_participant_equality_three_ways():
    ctx = IndexContext().bind("n", SNat()).bind("p", srange(IVar("n")))
    w = lambda e: part("W", e)
    assert isinstance(participants_equal(ctx, w(IVar("p")), w(IVar("p"))), Valid)
    # never equal: indices provably differ
    assert isinstance(
        participants_overlap(ctx, w(IVar("p")), w(IOp("+", IVar("p"), ILit(1)))),
        Invalid,
    )
    # instance-dependent: equal exactly when p = n
    eq = participants_equal(ctx, w(IVar("p")), w(IVar("n")))
    ov = participants_overlap(ctx, w(IVar("p")), w(IVar("n")))
    assert not isinstance(eq, Valid)
    assert isinstance(ov, Valid)
