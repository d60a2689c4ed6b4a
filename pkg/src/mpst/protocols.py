"""Programmatic generators for the worked protocol examples: global types
together with processes for every role, ready to kind, project, type check
and execute.

Each generator returns both the parametric type family (free index
variables) and a ground instance with its role processes and the composed
system. Parameter ranges follow the sources: the ring needs at least three
workers, the mesh at least a 3x3 grid, the butterfly any power of two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .diagnostics import ParameterOutOfRange, diag
from .terms import (
    ChEnd,
    EComplex,
    EntryIndex,
    EntrySort,
    Expr,
    GApp,
    GBra,
    GEnd,
    GLocal,
    GMsg,
    GMu,
    GRec,
    GTVar,
    GlobalType,
    ILit,
    IOp,
    IVar,
    IndexExpr,
    LApp,
    LBra,
    LEnd,
    LIn,
    LMu,
    LOut,
    LRec,
    LSel,
    LTVar,
    LocalType,
    PAcc,
    PApp,
    PBra,
    PInit,
    PMu,
    PNat,
    PNew,
    PPRec,
    PPar,
    PRecv,
    PSel,
    PSend,
    PShared,
    PVar,
    PZero,
    Participant,
    PayloadType,
    Process,
    ProcessType,
    SNat,
    SessionEnv,
    StdEnv,
    TPi,
    TSess,
    gforeach,
    gseq,
    iadd,
    imul,
    ipow2,
    isub,
    par_all,
    part,
    subst_index,
)
from .projection import project
from .reduce import normal_form


@dataclass
class Protocol:
    name: str
    params: list[tuple[str, object]]
    family: GlobalType  # free in the declared parameters
    ground: GlobalType  # instantiated at the requested values
    roles: dict[str, Process]
    system: Process
    chan: str = "a"

    def env(self) -> StdEnv:
        return StdEnv((EntrySort(self.chan, PShared(self.ground)),))


NAT = PNat()


def _w(*idx) -> Participant:
    return part("W", *idx)


def _system(chan: str, ground: GlobalType, roles: dict[str, Process]) -> Process:
    return PNew(chan, ground, par_all(list(roles.values())))


def _chain(actions, tail: Process = PZero()) -> Process:
    out = tail
    for act in reversed(actions):
        out = act(out)
    return out


def _send(chan, to, expr):
    return lambda cont: PSend(chan, to, expr, cont)


def _recv(chan, frm, var, sort=NAT):
    return lambda cont: PRecv(chan, frm, var, sort, cont)


# ---------------------------------------------------------------------------
# Sequence: a chain of messages from W[n] down to W[0]


def sequence_family() -> tuple[list[tuple[str, object]], GlobalType]:
    n, i = IVar("n"), IVar("i")
    body = GMsg(_w(iadd(i, ILit(1))), _w(i), NAT, GEnd())
    return [("n", SNat())], gforeach("i", n, body)


def sequence(n: int) -> Protocol:
    if n < 0:
        raise ParameterOutOfRange(diag("Param", "sequence needs n >= 0"))
    params, family = sequence_family()
    ground = normal_form(subst_index(family, "n", ILit(n)))
    roles: dict[str, Process] = {}
    if n >= 1:
        participants = tuple(_w(k) for k in range(n, -1, -1))
        roles[f"W{n}"] = PInit(
            "a",
            participants,
            "y",
            _chain([_send("y", _w(n - 1), ILit(7))]),
        )
        for k in range(n - 1, 0, -1):
            roles[f"W{k}"] = PAcc(
                "a",
                _w(k),
                "y",
                _chain([_recv("y", _w(k + 1), "z"), _send("y", _w(k - 1), IVar("z"))]),
            )
        roles["W0"] = PAcc("a", _w(0), "y", _chain([_recv("y", _w(1), "z")]))
    return Protocol("sequence", params, family, ground, roles, _system("a", ground, roles))


# ---------------------------------------------------------------------------
# Repetition: Alice streams to Bob who forwards to Carol, n rounds


def repetition_family() -> tuple[list[tuple[str, object]], GlobalType]:
    n = IVar("n")
    a, b, c = part("Alice"), part("Bob"), part("Carol")
    body = GMsg(a, b, NAT, GMsg(b, c, NAT, GEnd()))
    return [("n", SNat())], gforeach("i", n, body)


def _loop_tau(gen_local: LocalType, var: str = "j") -> ProcessType:
    """The family Pi j:I. {y: gen @ j} for a projected loop generator, where
    I is the generator's own index sort."""
    from .terms import ChVar

    fam = TSess(SessionEnv(((ChVar("y"), GLocal(LApp(gen_local, IVar(var)))),)))
    return TPi(var, gen_local.isort, fam)


def repetition_processes(arg: IndexExpr) -> dict[str, Process]:
    """Role processes for the repetition protocol, using process recursors
    annotated with the projected loop family; ``arg`` may stay symbolic."""
    _, family = repetition_family()
    a, b, c = part("Alice"), part("Bob"), part("Carol")
    applied = subst_index(family, "n", arg)
    assert isinstance(applied, GApp)
    gen = applied.fn  # the unapplied recursor at the requested argument

    def role(who: Participant, actions) -> Process:
        proj_gen = project(gen, who)
        tau = _loop_tau(proj_gen)
        loop = PApp(
            PPRec(PZero(), "i", proj_gen.isort, "X", tau, _chain(actions, PVar("X"))),
            arg,
        )
        if who == a:
            return PInit("a", (a, b, c), "y", loop)
        return PAcc("a", who, "y", loop)

    return {
        "Alice": role(a, [_send("y", b, IVar("i"))]),
        "Bob": role(b, [_recv("y", a, "z"), _send("y", c, IVar("z"))]),
        "Carol": role(c, [_recv("y", b, "z")]),
    }


def repetition(n: int) -> Protocol:
    if n < 0:
        raise ParameterOutOfRange(diag("Param", "repetition needs n >= 0"))
    params, family = repetition_family()
    ground = normal_form(subst_index(family, "n", ILit(n)))
    roles = repetition_processes(ILit(n))
    return Protocol("repetition", params, family, ground, roles, _system("a", ground, roles))


# ---------------------------------------------------------------------------
# Multicast: Alice sends one message to each of n workers


def multicast_family() -> tuple[list[tuple[str, object]], GlobalType]:
    n, i = IVar("n"), IVar("i")
    body = GMsg(part("Alice"), _w(isub(isub(n, ILit(1)), i)), NAT, GEnd())
    return [("n", SNat())], gforeach("i", n, body)


def multicast(n: int) -> Protocol:
    if n < 0:
        raise ParameterOutOfRange(diag("Param", "multicast needs n >= 0"))
    params, family = multicast_family()
    ground = normal_form(subst_index(family, "n", ILit(n)))
    roles: dict[str, Process] = {}
    if n >= 1:
        alice = part("Alice")
        sends = [_send("y", _w(k), ILit(k)) for k in range(n)]
        roles["Alice"] = PInit(
            "a", (alice,) + tuple(_w(k) for k in range(n)), "y", _chain(sends)
        )
        for k in range(n):
            roles[f"W{k}"] = PAcc("a", _w(k), "y", _chain([_recv("y", alice, "z")]))
    return Protocol("multicast", params, family, ground, roles, _system("a", ground, roles))


# ---------------------------------------------------------------------------
# Ring: W[0] -> W[1] -> ... -> W[n] -> W[0]


def ring_family() -> tuple[list[tuple[str, object]], GlobalType]:
    n, i = IVar("n"), IVar("i")
    around = gforeach(
        "i", n, GMsg(_w(isub(isub(n, i), ILit(1))), _w(isub(n, i)), NAT, GEnd())
    )
    closing = GMsg(_w(n), _w(ILit(0)), NAT, GEnd())
    return [("n", SNat())], gseq(around, closing)


def ring(n: int) -> Protocol:
    if n < 2:
        raise ParameterOutOfRange(diag("Param", "ring needs n >= 2"))
    params, family = ring_family()
    ground = normal_form(subst_index(family, "n", ILit(n)))
    roles: dict[str, Process] = {}
    participants = tuple(_w(k) for k in range(n + 1))
    roles["W0"] = PInit(
        "a",
        participants,
        "y",
        _chain([_send("y", _w(1), ILit(3)), _recv("y", _w(n), "z")]),
    )
    for k in range(1, n):
        roles[f"W{k}"] = PAcc(
            "a",
            _w(k),
            "y",
            _chain([_recv("y", _w(k - 1), "z"), _send("y", _w(k + 1), IVar("z"))]),
        )
    roles[f"W{n}"] = PAcc(
        "a",
        _w(n),
        "y",
        _chain([_recv("y", _w(n - 1), "z"), _send("y", _w(0), IVar("z"))]),
    )
    return Protocol("ring", params, family, ground, roles, _system("a", ground, roles))


def ring_role_type(n: int, k: int) -> LocalType:
    """The hand-written end-point type of worker k in a ring of size n+1."""
    if k == 0:
        return LOut(_w(1), NAT, LIn(_w(n), NAT, LEnd()))
    if k == n:
        return LIn(_w(n - 1), NAT, LOut(_w(0), NAT, LEnd()))
    return LIn(_w(k - 1), NAT, LOut(_w(k + 1), NAT, LEnd()))


def sequence_role_type(n: int, k: int) -> LocalType:
    """The hand-written end-point type of worker k in the sequence protocol,
    including the degenerate cases."""
    if n == 0:
        return LEnd()
    if k == n:
        return LOut(_w(n - 1), NAT, LEnd())
    if k == 0:
        return LIn(_w(1), NAT, LEnd())
    return LIn(_w(k + 1), NAT, LOut(_w(k - 1), NAT, LEnd()))


# ---------------------------------------------------------------------------
# Mesh: values flow from the top-left worker W[n][m] to W[0][0]


def mesh_family() -> tuple[list[tuple[str, object]], GlobalType]:
    n, m, i, j, k = IVar("n"), IVar("m"), IVar("i"), IVar("j"), IVar("k")
    inner = gforeach(
        "j",
        m,
        GMsg(
            _w(iadd(i, ILit(1)), iadd(j, ILit(1))),
            _w(i, iadd(j, ILit(1))),
            NAT,
            GMsg(
                _w(iadd(i, ILit(1)), iadd(j, ILit(1))),
                _w(iadd(i, ILit(1)), j),
                NAT,
                GEnd(),
            ),
        ),
    )
    row = gseq(inner, GMsg(_w(iadd(i, ILit(1)), ILit(0)), _w(i, ILit(0)), NAT, GEnd()))
    rows = gforeach("i", n, row)
    bottom = gforeach(
        "k", m, GMsg(_w(ILit(0), iadd(k, ILit(1))), _w(ILit(0), k), NAT, GEnd())
    )
    return [("n", SNat()), ("m", SNat())], gseq(rows, bottom)


def mesh(n: int, m: int) -> Protocol:
    if n < 2 or m < 2:
        raise ParameterOutOfRange(diag("Param", "mesh needs n, m >= 2"))
    params, family = mesh_family()
    ground = normal_form(
        subst_index(subst_index(family, "n", ILit(n)), "m", ILit(m))
    )
    f = lambda z1, z2: iadd(z1, z2)
    roles: dict[str, Process] = {}
    participants = tuple(
        _w(r, c) for r in range(n, -1, -1) for c in range(m, -1, -1)
    )
    roles[f"W{n}_{m}"] = PInit(
        "a",
        participants,
        "y",
        _chain(
            [
                _send("y", _w(n - 1, m), ILit(1)),
                _send("y", _w(n, m - 1), ILit(1)),
            ]
        ),
    )
    roles[f"W{n}_0"] = PAcc(
        "a",
        _w(n, 0),
        "y",
        _chain(
            [_recv("y", _w(n, 1), "z1"), _send("y", _w(n - 1, 0), IVar("z1"))]
        ),
    )
    roles[f"W0_{m}"] = PAcc(
        "a",
        _w(0, m),
        "y",
        _chain(
            [_recv("y", _w(1, m), "z2"), _send("y", _w(0, m - 1), IVar("z2"))]
        ),
    )
    roles["W0_0"] = PAcc(
        "a",
        _w(0, 0),
        "y",
        _chain([_recv("y", _w(1, 0), "z1"), _recv("y", _w(0, 1), "z2")]),
    )
    for kk in range(m - 1):  # top and bottom rows, column kk+1
        roles[f"W{n}_{kk+1}"] = PAcc(
            "a",
            _w(n, kk + 1),
            "y",
            _chain(
                [
                    _recv("y", _w(n, kk + 2), "z1"),
                    _send("y", _w(n - 1, kk + 1), IVar("z1")),
                    _send("y", _w(n, kk), IVar("z1")),
                ]
            ),
        )
        roles[f"W0_{kk+1}"] = PAcc(
            "a",
            _w(0, kk + 1),
            "y",
            _chain(
                [
                    _recv("y", _w(1, kk + 1), "z1"),
                    _recv("y", _w(0, kk + 2), "z2"),
                    _send("y", _w(0, kk), f(IVar("z1"), IVar("z2"))),
                ]
            ),
        )
    for ii in range(n - 1):  # left and right columns, row ii+1
        roles[f"W{ii+1}_{m}"] = PAcc(
            "a",
            _w(ii + 1, m),
            "y",
            _chain(
                [
                    _recv("y", _w(ii + 2, m), "z2"),
                    _send("y", _w(ii, m), IVar("z2")),
                    _send("y", _w(ii + 1, m - 1), IVar("z2")),
                ]
            ),
        )
        roles[f"W{ii+1}_0"] = PAcc(
            "a",
            _w(ii + 1, 0),
            "y",
            _chain(
                [
                    _recv("y", _w(ii + 2, 0), "z1"),
                    _recv("y", _w(ii + 1, 1), "z2"),
                    _send("y", _w(ii, 0), f(IVar("z1"), IVar("z2"))),
                ]
            ),
        )
    for ii in range(n - 1):
        for jj in range(m - 1):
            roles[f"W{ii+1}_{jj+1}"] = PAcc(
                "a",
                _w(ii + 1, jj + 1),
                "y",
                _chain(
                    [
                        _recv("y", _w(ii + 2, jj + 1), "z1"),
                        _recv("y", _w(ii + 1, jj + 2), "z2"),
                        _send("y", _w(ii, jj + 1), f(IVar("z1"), IVar("z2"))),
                        _send("y", _w(ii + 1, jj), f(IVar("z1"), IVar("z2"))),
                    ]
                ),
            )
    return Protocol("mesh", params, family, ground, roles, _system("a", ground, roles))


# ---------------------------------------------------------------------------
# FFT on the butterfly network


def _m(idx) -> Participant:
    return part("M", idx)


def fft_family() -> tuple[list[tuple[str, object]], GlobalType]:
    n, l, i, j = IVar("n"), IVar("l"), IVar("i"), IVar("j")
    low = _m(iadd(imul(i, ipow2(isub(n, l))), j))
    high = _m(iadd(iadd(imul(i, ipow2(isub(n, l))), ipow2(isub(isub(n, l), ILit(1)))), j))
    block = GMsg(low, high, NAT, GMsg(high, low, NAT, GMsg(low, low, NAT, GMsg(high, high, NAT, GEnd()))))
    inner = gforeach("j", ipow2(isub(isub(n, l), ILit(1))), block)
    middle = gforeach("i", ipow2(l), inner)
    stages = gforeach("l", n, middle)
    init = gforeach("i", ipow2(n), GMsg(_m(i), _m(i), NAT, GEnd()))
    return [("n", SNat())], gseq(init, stages)


def bit_reverse(x: int, bits: int) -> int:
    out = 0
    for _ in range(bits):
        out = (out << 1) | (x & 1)
        x >>= 1
    return out


def fft_twiddle(n: int, stage_l: int, machine: int) -> complex:
    """The unit-root factor a machine applies at loop index l: the machine's
    position inside its current block, scaled to the full ring."""
    size = 2 ** (n - stage_l)  # current butterfly block size
    exponent = (machine % size) * (2**stage_l)
    return complex(
        math.cos(2 * math.pi * exponent / (2**n)),
        math.sin(2 * math.pi * exponent / (2**n)),
    )


def fft(n: int, inputs: list[complex] | None = None) -> Protocol:
    if n < 0:
        raise ParameterOutOfRange(diag("Param", "fft needs n >= 0"))
    size = 2**n
    if inputs is None:
        inputs = [complex(k + 1, 0) for k in range(size)]
    if len(inputs) != size:
        raise ParameterOutOfRange(diag("Param", f"fft expects {size} inputs"))
    params, family = fft_family()
    ground = normal_form(subst_index(family, "n", ILit(n)))

    def machine_body(p: int) -> Process:
        actions = [_send("y", _m(p), EComplex(inputs[p].real, inputs[p].imag))]
        for t in range(n):
            l = n - 1 - t  # loop indices decrease; stage t runs at index l
            d = 2**t
            w = fft_twiddle(n, l, p)
            wlit = EComplex(w.real, w.imag)
            x, z = f"x{t}", f"z{t}"
            if (p >> t) & 1 == 0:
                actions += [
                    _recv("y", _m(p), x),
                    _send("y", _m(p + d), IVar(x)),
                    _recv("y", _m(p + d), z),
                    _send("y", _m(p), iadd(IVar(x), imul(IVar(z), wlit))),
                ]
            else:
                actions += [
                    _recv("y", _m(p), x),
                    _recv("y", _m(p - d), z),
                    _send("y", _m(p - d), IVar(x)),
                    _send("y", _m(p), iadd(IVar(z), imul(IVar(x), wlit))),
                ]
        actions += [_recv("y", _m(p), "xfin"), _send(f"r{p}", part("0"), IVar("xfin"))]
        return _chain(actions)

    roles: dict[str, Process] = {}
    participants = tuple(_m(k) for k in range(size))
    roles["M0"] = PInit("a", participants, "y", machine_body(0))
    for k in range(1, size):
        roles[f"M{k}"] = PAcc("a", _m(k), "y", machine_body(k))
    return Protocol("fft", params, family, ground, roles, _system("a", ground, roles))


def dft_oracle(inputs: list[complex]) -> list[complex]:
    """Brute-force transform with the positive-exponent kernel, applied to
    the bit-reversed input ordering (machine k holds inputs[k])."""
    size = len(inputs)
    bits = size.bit_length() - 1
    w = [inputs[bit_reverse(j, bits)] for j in range(size)]
    out = []
    for k in range(size):
        acc = 0j
        for j in range(size):
            acc += w[j] * complex(
                math.cos(2 * math.pi * j * k / size),
                math.sin(2 * math.pi * j * k / size),
            )
        out.append(acc)
    return out


# ---------------------------------------------------------------------------
# Quote request: buyer, suppliers, manufacturers, with retry loop
#
# Step 3/4 negotiation walks the suppliers in reverse preference order; the
# retry at the least preferred supplier loops back to step 2. At every loop
# exit the buyer notifies the suppliers not currently addressed, and each
# supplier passes the outcome on to its manufacturers: both notification
# layers are what makes the non-addressed projections mergeable.


def quote_request_global(nsupp: int, jcounts: list[int]) -> GlobalType:
    buyer = part("Buyer")

    def supp(k: int) -> Participant:
        return part("Supp", k)

    def manu(k: int, j: int) -> Participant:
        return part("Manu", ILit(k), ILit(j))

    def manu_notes(label: str, cont: GlobalType) -> GlobalType:
        out = cont
        for s in range(nsupp - 1, -1, -1):
            for j in range(jcounts[s] - 1, -1, -1):
                out = GBra(supp(s), manu(s, j), ((label, out),))
        return out

    def buyer_notes(label: str, skip: int, cont: GlobalType) -> GlobalType:
        out = cont
        for j in range(nsupp - 1, -1, -1):
            if j == skip:
                continue
            out = GBra(buyer, supp(j), ((label, out),))
        return out

    def closing(k: int) -> GlobalType:
        return buyer_notes("close", k, manu_notes("close", GEnd()))

    def retrying(k: int, nxt: GlobalType, to_top: bool) -> GlobalType:
        tail = manu_notes("retryStep3", nxt) if to_top else nxt
        return buyer_notes("retryStep3", k, tail)

    def step3(k: int, nxt: GlobalType, to_top: bool) -> GlobalType:
        inner = GBra(
            supp(k),
            buyer,
            (
                ("ok", closing(k)),
                ("retryStep3", retrying(k, nxt, to_top)),
                ("reject", closing(k)),
            ),
        )
        return GBra(
            buyer,
            supp(k),
            (("ok", closing(k)), ("modify", GMsg(buyer, supp(k), NAT, inner))),
        )

    def g1(cont: GlobalType) -> GlobalType:
        out = cont
        for k in range(nsupp - 1, -1, -1):
            out = GMsg(buyer, supp(k), NAT, out)
        return out

    def g2(cont: GlobalType) -> GlobalType:
        out = cont
        for k in range(nsupp - 1, -1, -1):
            out = GMsg(supp(k), buyer, NAT, out)
            for j in range(jcounts[k] - 1, -1, -1):
                out = GMsg(
                    supp(k), manu(k, j), NAT, GMsg(manu(k, j), supp(k), NAT, out)
                )
        return out

    g3: GlobalType = step3(0, GTVar("t"), True)
    for k in range(1, nsupp):
        g3 = step3(k, g3, False)
    return g1(GMu("t", g2(g3)))


def _chvar(name: str):
    from .terms import ChVar

    return ChVar(name)


def quote_request(nsupp: int, jcounts: list[int] | None = None) -> Protocol:
    """Ground instance with scripted role processes: the buyer asks every
    supplier to modify on the first pass (each answers retryStep3, down to
    the loop), then accepts the preferred supplier's quote on the second."""
    if nsupp < 1:
        raise ParameterOutOfRange(diag("Param", "quote_request needs >= 1 supplier"))
    jcounts = jcounts or [1] * nsupp
    if len(jcounts) != nsupp or any(j < 1 for j in jcounts):
        raise ParameterOutOfRange(diag("Param", "bad manufacturer counts"))
    ground = quote_request_global(nsupp, jcounts)
    buyer = part("Buyer")

    def supp(k: int) -> Participant:
        return part("Supp", k)

    def manu(k: int, j: int) -> Participant:
        return part("Manu", ILit(k), ILit(j))

    participants = (
        (buyer,)
        + tuple(supp(k) for k in range(nsupp))
        + tuple(manu(k, j) for k in range(nsupp) for j in range(jcounts[k]))
    )

    def tau_for(t: LocalType) -> ProcessType:
        return TSess(SessionEnv(((_chvar("y"), GLocal(t)),)))

    # Buyer ---------------------------------------------------------------
    def buyer_quotes(cont: Process) -> Process:
        # step 2 from the buyer's side: collect one quote per supplier
        acts = [_recv("y", supp(k), f"q{k}") for k in range(nsupp)]
        return _chain(acts, cont)

    def buyer_notes_p(label: str, skip: int, cont: Process) -> Process:
        out = cont
        for j in range(nsupp - 1, -1, -1):
            if j == skip:
                continue
            out = PSel("y", supp(j), label, out)
        return out

    def buyer_negotiate(k: int, nxt: Process) -> Process:
        after = PBra(
            "y",
            supp(k),
            (
                ("ok", buyer_notes_p("close", k, PZero())),
                ("retryStep3", buyer_notes_p("retryStep3", k, nxt)),
                ("reject", buyer_notes_p("close", k, PZero())),
            ),
        )
        return PSel("y", supp(k), "modify", PSend("y", supp(k), ILit(6), after))

    loop_round: Process = PVar("X")
    for k in range(0, nsupp):
        loop_round = buyer_negotiate(k, loop_round)
    loop_round = buyer_quotes(loop_round)
    base_round = buyer_quotes(
        PSel(
            "y",
            supp(nsupp - 1),
            "ok",
            buyer_notes_p("close", nsupp - 1, PZero()),
        )
    )
    t_buyer = normal_form(project(ground, buyer))
    t_loop = t_buyer
    for _ in range(nsupp):  # strip the step-1 request prefixes
        t_loop = t_loop.cont
    fam = TPi("r", SNat(), tau_for(t_loop))
    loop = PApp(PPRec(base_round, "r", SNat(), "X", fam, loop_round), ILit(1))
    buyer_proc = PInit(
        "a",
        participants,
        "y",
        _chain([_send("y", supp(k), ILit(5)) for k in range(nsupp)], loop),
    )

    # Suppliers -------------------------------------------------------------
    def supplier_proc(me: int) -> Process:
        def my_manu_notes(label: str, cont: Process) -> Process:
            out = cont
            for j in range(jcounts[me] - 1, -1, -1):
                out = PSel("y", manu(me, j), label, out)
            return out

        def quotes(cont: Process) -> Process:
            acts = []
            for j in range(jcounts[me]):
                acts.append(_send("y", manu(me, j), ILit(2)))
                acts.append(_recv("y", manu(me, j), f"m{j}"))
            acts.append(_send("y", buyer, ILit(9)))
            return _chain(acts, cont)

        def negotiation(k: int) -> Process:
            if k == 0:
                nxt: Process = my_manu_notes("retryStep3", PVar("X"))
            else:
                nxt = negotiation(k - 1)
            done = my_manu_notes("close", PZero())
            if k == me:
                answer = PSel("y", buyer, "retryStep3", nxt)
                return PBra(
                    "y",
                    buyer,
                    (
                        ("ok", done),
                        ("modify", PRecv("y", buyer, "mq", NAT, answer)),
                    ),
                )
            return PBra("y", buyer, (("close", done), ("retryStep3", nxt)))

        t_supp = normal_form(project(ground, supp(me)))
        t_loop = t_supp.cont  # past the step-1 request
        body = quotes(negotiation(nsupp - 1))
        loop = PMu("X", tau_for(t_loop), body)
        return PAcc("a", supp(me), "y", PRecv("y", buyer, "rq", NAT, loop))

    # Manufacturers ----------------------------------------------------------
    def manu_proc(k: int, j: int) -> Process:
        t_m = normal_form(project(ground, manu(k, j)))
        body = _chain(
            [_recv("y", supp(k), "item"), _send("y", supp(k), ILit(4))],
            PBra("y", supp(k), (("close", PZero()), ("retryStep3", PVar("X")))),
        )
        return PAcc("a", manu(k, j), "y", PMu("X", tau_for(t_m), body))

    roles: dict[str, Process] = {"Buyer": buyer_proc}
    for k in range(nsupp):
        roles[f"Supp{k}"] = supplier_proc(k)
        for j in range(jcounts[k]):
            roles[f"Manu{k}_{j}"] = manu_proc(k, j)
    return Protocol(
        "quote_request", [], ground, ground, roles, _system("a", ground, roles)
    )


ALL = {
    "sequence": sequence,
    "repetition": repetition,
    "multicast": multicast,
    "ring": ring,
    "mesh": mesh,
    "fft": fft,
    "quote_request": quote_request,
}
