"""End-point projection, mergeability and the merge operator."""

import itertools

import pytest

from mpst.diagnostics import MergeFailure
from mpst.indices import IndexContext
from mpst.projection import merge, mergeable, pid_ground, project, simplify_projection
from mpst.reduce import normal_form
from mpst.surface import parse_gtype, parse_ltype
from mpst.terms import (
    GuardEq,
    ILit,
    IVar,
    LBra,
    LCond,
    LEnd,
    LIn,
    LOut,
    LSel,
    PBool,
    PNat,
    StdEnv,
    alpha_eq,
    part,
    subst_index,
)

NAT, BOOL = PNat(), PBool()


def w(i):
    return part("W", i)


OKQUIT_CORRECTED = parse_gtype(
    """
    W[0] -> W[1] { ok:   W[1] -> W[2] { ok:   W[1] -> W[2] : bool . end },
                   quit: W[1] -> W[2] { quit: W[1] -> W[2] : nat . end } }
    """
)

OKQUIT_NAIVE = parse_gtype(
    "W[0] -> W[1] { ok: W[1] -> W[2] : bool . end, quit: W[1] -> W[2] : nat . end }"
)


def test_corrected_branching_projects_onto_outsider():
    got = normal_form(project(OKQUIT_CORRECTED, w(2)))
    want = LBra(
        w(1),
        (("ok", LIn(w(1), BOOL, LEnd())), ("quit", LIn(w(1), NAT, LEnd()))),
    )
    assert alpha_eq(got, want)


def test_naive_branching_fails_merge():
    with pytest.raises(MergeFailure):
        project(OKQUIT_NAIVE, w(2))


def test_project_end():
    from mpst.terms import GEnd

    assert project(GEnd(), w(0)) == LEnd()


def test_sequence_projection_against_unroll_oracle():
    # brute-force oracle: enumerate the messages of the unrolled chain and
    # read off each worker's actions directly
    from mpst.protocols import sequence_family

    _, fam = sequence_family()
    for n in range(5):
        msgs = [(k + 1, k) for k in range(n - 1, -1, -1)]
        ground = subst_index(fam, "n", ILit(n))
        for me in range(n + 1):
            actions = []
            for snd, rcv in msgs:
                if snd == me:
                    actions.append(("out", rcv))
                elif rcv == me:
                    actions.append(("in", snd))
            expected: object = LEnd()
            for kind, other in reversed(actions):
                cls = LOut if kind == "out" else LIn
                expected = cls(w(other), NAT, expected)
            got = normal_form(project(ground, w(me)))
            assert alpha_eq(got, expected), (n, me)


def test_mergeable_examples():
    t = parse_ltype("?<W[1], nat>. end")
    assert mergeable(t, t)
    assert not mergeable(parse_ltype("?<W[1], bool>. end"), parse_ltype("?<W[1], nat>. end"))
    a = LBra(w(1), (("ok", parse_ltype("!<W[0], nat>. end")),))
    b = LBra(w(1), (("quit", parse_ltype("?<W[0], bool>. end")),))
    assert mergeable(a, b)  # disjoint labels may differ arbitrarily


def test_merge_union_and_idempotence():
    a = LBra(w(1), (("a", LEnd()),))
    b = LBra(w(1), (("b", LEnd()),))
    assert merge(a, b) == LBra(w(1), (("a", LEnd()), ("b", LEnd())))
    t = parse_ltype("mu t . !<W[0], nat>. t")
    assert merge(t, t) == t


def test_merge_failure_on_constructor_clash():
    with pytest.raises(MergeFailure):
        merge(parse_ltype("!<W[1], nat>. end"), parse_ltype("?<W[1], nat>. end"))


def test_merge_commutative_when_defined():
    pairs = [
        (LBra(w(1), (("a", LEnd()),)), LBra(w(1), (("b", LEnd()),))),
        (
            LBra(w(1), (("a", LEnd()), ("c", LIn(w(1), NAT, LEnd())))),
            LBra(w(1), (("b", LEnd()), ("c", LIn(w(1), NAT, LEnd())))),
        ),
    ]
    for a, b in pairs:
        assert alpha_eq(merge(a, b), merge(b, a))


def test_simplify_prunes_impossible_guard():
    t = LCond(
        GuardEq(part("Alice"), part("Bob")),
        LOut(part("Bob"), NAT, LEnd()),
        LIn(part("Bob"), NAT, LEnd()),
    )
    got = simplify_projection(t, IndexContext())
    assert got == LIn(part("Bob"), NAT, LEnd())
    assert simplify_projection(LEnd(), IndexContext()) == LEnd()


def test_mesh_corner_projection_prunes_to_two_inputs():
    from mpst.protocols import mesh_family

    _, fam = mesh_family()
    ground = subst_index(subst_index(fam, "n", ILit(2)), "m", ILit(2))
    corner = part("W", 0, 0)
    got = normal_form(project(ground, corner))
    want = LIn(part("W", 1, 0), NAT, LIn(part("W", 0, 1), NAT, LEnd()))
    assert alpha_eq(got, want)


def test_projection_duality_on_ring_and_mesh():
    from mpst.checker import GLocal, dual, gen_project
    from mpst.protocols import mesh_family, ring_family

    for mk, subst in (
        (ring_family, {"n": 3}),
        (mesh_family, {"n": 2, "m": 2}),
    ):
        _, fam = mk()
        ground = fam
        for k, v in subst.items():
            ground = subst_index(ground, k, ILit(v))
        ground = normal_form(ground)
        parts = sorted(pid_ground(ground), key=str)
        for p, q in itertools.permutations(parts, 2):
            tp = gen_project(GLocal(normal_form(project(ground, p))), q)
            tq = gen_project(GLocal(normal_form(project(ground, q))), p)
            assert dual(tp, tq), (p, q)


def test_merge_is_glb_under_subtyping():
    from mpst.equivalence import subtype

    a = LBra(w(1), (("a", LEnd()),))
    b = LBra(w(1), (("b", LEnd()),))
    m = merge(a, b)
    assert subtype(StdEnv(), m, a)
    assert subtype(StdEnv(), m, b)
    below = LBra(w(1), (("a", LEnd()), ("b", LEnd()), ("c", LEnd())))
    assert subtype(StdEnv(), below, a) and subtype(StdEnv(), below, b)
    assert subtype(StdEnv(), below, m)
