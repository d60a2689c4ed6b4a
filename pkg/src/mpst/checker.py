"""Process typing against standard and session environments.

The checker is the syntax-directed reading of the declarative rules: type
equality is folded into session initialisation and acceptance (process body
against the projection of the declared global type), inputs (annotation
against payload), recursion (body against the annotated family member), and
the inactive process (everything must reduce to end). Bound names carry
annotations; primitive process recursors carry the dependent family they
inhabit, checked at zero and at a symbolic successor exactly like the type
recursor kinds.

Runtime configurations (with queues) are typed by giving queues message
types, composing them with the process types channelwise, and demanding
coherence (pairwise duality of generalised projections) per session. The
session-environment reduction relation used by the subject-reduction
harness lives here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .diagnostics import CheckError, Diagnostic, UndecidedError, diag
from .indices import (
    IndexContext,
    Invalid,
    Undecided,
    Valid,
    enumerate_sort,
    indices_equal,
    member,
    participants_equal,
    predecessor_sort,
)
from .kinds import kind_participant, kind_proctype
from .projection import merge, pid, pid_ground, project
from .reduce import normal_form, whnf
from .terms import (
    BChan,
    BLabel,
    BVal,
    ChEnd,
    ChVar,
    Channel,
    EBool,
    EComplex,
    ENameRef,
    EntryIndex,
    EntryPred,
    EntryProc,
    EntrySort,
    Expr,
    GEnd,
    GLocal,
    GMsgs,
    GMsgsThen,
    GeneralisedType,
    GlobalType,
    ILit,
    IOp,
    IVar,
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
    MOut,
    MSel,
    Message,
    MessageType,
    PAcc,
    PApp,
    PBool,
    PBra,
    PCatch,
    PDeleg,
    PInit,
    PMu,
    PNat,
    PNew,
    PNewS,
    PPRec,
    PPar,
    PQueue,
    PRecv,
    PReq,
    PSel,
    PSend,
    PSession,
    PShared,
    PVar,
    PZero,
    Participant,
    PayloadType,
    Process,
    ProcessType,
    SessionEnv,
    StdEnv,
    TPi,
    TSess,
    eval_participant_ground,
    gen_then,
    subst_index,
    subst_proctype,
    subst_tvar,
)

# ---------------------------------------------------------------------------
# Check modes


@dataclass(frozen=True)
class Initial:
    pass


@dataclass(frozen=True)
class Runtime:
    sessions: frozenset[str] = frozenset()


CheckMode = Union[Initial, Runtime]


# ---------------------------------------------------------------------------
# Conformance: equivalence liberalised by selection widening and mu-isomorphism


def _unfold_mu(t):
    return subst_tvar(t.body, t.var, t)


def conforms(
    env: StdEnv, got: LocalType, want: LocalType, trail: tuple[str, ...] = ()
) -> bool:
    """Does the synthesised type inhabit the expected one?

    Structural equivalence through weak head normal forms, except that a
    selection may mention a subset of the expected labels and mu-types are
    compared up to unfolding.
    """
    ctx = IndexContext.from_env(env)
    return _conf(got, want, ctx, set(), {})


def _parts_eq_b(ctx, p, q) -> Optional[bool]:
    v = participants_equal(ctx, p, q)
    if isinstance(v, Valid):
        return True
    if isinstance(v, Invalid):
        return False
    return None


def _conf(got, want, ctx, seen, tvmap) -> bool:
    key = (got, want)
    if key in seen:
        return True
    seen = seen | {key}
    got, want = whnf(got), whnf(want)
    if isinstance(got, LMu) and not isinstance(want, LMu):
        return _conf(_unfold_mu(got), want, ctx, seen, tvmap)
    if isinstance(want, LMu) and not isinstance(got, LMu):
        return _conf(got, _unfold_mu(want), ctx, seen, tvmap)
    if isinstance(got, LEnd) and isinstance(want, LEnd):
        return True
    if isinstance(got, LTVar) and isinstance(want, LTVar):
        return tvmap.get(got.name, got.name) == want.name
    if isinstance(got, LOut) and isinstance(want, LOut):
        return (
            _parts_eq_b(ctx, got.to, want.to) is True
            and _payload_conf(got.payload, want.payload, ctx, seen, tvmap)
            and _conf(got.cont, want.cont, ctx, seen, tvmap)
        )
    if isinstance(got, LIn) and isinstance(want, LIn):
        return (
            _parts_eq_b(ctx, got.frm, want.frm) is True
            and _payload_conf(got.payload, want.payload, ctx, seen, tvmap)
            and _conf(got.cont, want.cont, ctx, seen, tvmap)
        )
    if isinstance(got, LSel) and isinstance(want, LSel):
        if _parts_eq_b(ctx, got.to, want.to) is not True:
            return False
        wmap = dict(want.branches)
        # a process commits to some of the offered labels, never to new ones
        return all(
            l in wmap and _conf(t, wmap[l], ctx, seen, tvmap)
            for l, t in got.branches
        )
    if isinstance(got, LBra) and isinstance(want, LBra):
        if _parts_eq_b(ctx, got.frm, want.frm) is not True:
            return False
        if {l for l, _ in got.branches} != {l for l, _ in want.branches}:
            return False
        wmap = dict(want.branches)
        return all(_conf(t, wmap[l], ctx, seen, tvmap) for l, t in got.branches)
    if isinstance(got, LMu) and isinstance(want, LMu):
        inner = dict(tvmap)
        inner[got.var] = want.var
        return _conf(got.body, want.body, ctx, seen, inner)
    if isinstance(got, LRec) and isinstance(want, LRec):
        body_w = want.body
        if want.ivar != got.ivar:
            body_w = subst_index(want.body, want.ivar, IVar(got.ivar))
        inner = dict(tvmap)
        inner[got.tvar] = want.tvar
        try:
            pred = predecessor_sort(got.isort)
        except Exception:
            pred = got.isort
        return _conf(got.base, want.base, ctx, seen, tvmap) and _conf(
            got.body, body_w, ctx.bind(got.ivar, pred), seen, inner
        )
    if isinstance(got, LApp) and isinstance(want, LApp):
        v = indices_equal(ctx, got.arg, want.arg)
        if not isinstance(v, Valid):
            return False
        return _conf_head(got.fn, want.fn, ctx, seen, tvmap)
    if isinstance(got, LCond) and isinstance(want, LCond):
        return (
            got.guard == want.guard
            and _conf(got.then, want.then, ctx, seen, tvmap)
            and _conf(got.els, want.els, ctx, seen, tvmap)
        )
    return False


def _conf_head(got, want, ctx, seen, tvmap) -> bool:
    # heads of stuck applications: compare recursors componentwise
    if isinstance(got, LRec) and isinstance(want, LRec):
        return _conf(got, want, ctx, seen, tvmap)
    return _conf(got, want, ctx, seen, tvmap)


def _payload_conf(u1, u2, ctx, seen, tvmap) -> bool:
    if isinstance(u1, PNat) and isinstance(u2, PNat):
        return True
    if isinstance(u1, PBool) and isinstance(u2, PBool):
        return True
    if isinstance(u1, PShared) and isinstance(u2, PShared):
        from .equivalence import type_equiv

        verdict, _ = type_equiv(StdEnv(), u1.gtype, u2.gtype)
        return verdict is True
    if isinstance(u1, PSession) and isinstance(u2, PSession):
        return _conf(u1.ltype, u2.ltype, ctx, seen, tvmap)
    return False


def conforms_env(
    env: StdEnv, got: SessionEnv, want: SessionEnv, trail: tuple[str, ...] = ()
) -> bool:
    """Channelwise conformance; channels absent on either side count as end."""
    chans = set(got.domain()) | set(want.domain())
    for c in chans:
        g = got.lookup(c) or GLocal(LEnd())
        w = want.lookup(c) or GLocal(LEnd())
        if not _gen_conforms(env, g, w):
            return False
    return True


def localize_gen(g: GeneralisedType) -> LocalType:
    """Read a generalised type back as a local type: queued sends become
    output prefixes and committed labels singleton selections."""
    if isinstance(g, GLocal):
        return g.ltype
    acc: LocalType = LEnd() if isinstance(g, GMsgs) else g.ltype
    for m in reversed(g.msgs):
        if isinstance(m, MOut):
            acc = LOut(m.to, m.payload, acc)
        else:
            acc = LSel(m.to, ((m.label, acc),))
    return acc


def _gen_conforms(env, g: GeneralisedType, w: GeneralisedType) -> bool:
    return conforms(env, localize_gen(g), localize_gen(w))


def _msgs_equiv(a: tuple[MessageType, ...], b: tuple[MessageType, ...]) -> bool:
    """Message-type equality modulo commuting entries for distinct targets."""
    if len(a) != len(b):
        return False
    rest = list(b)
    for m in a:
        # earliest matching entry not blocked by a same-target predecessor
        for k, m2 in enumerate(rest):
            if m2 == m:
                if all(r.to != m.to for r in rest[:k]):
                    rest.pop(k)
                    break
                return False
        else:
            return False
    return not rest


def conforms_tau(env: StdEnv, got: ProcessType, want: ProcessType) -> bool:
    if isinstance(got, TSess) and isinstance(want, TSess):
        return conforms_env(env, got.env, want.env)
    if isinstance(got, TPi) and isinstance(want, TPi):
        body_w = want.body
        if want.ivar != got.ivar:
            body_w = subst_proctype(want.body, want.ivar, IVar(got.ivar))
        env2 = env.add(EntryIndex(got.ivar, got.isort))
        return conforms_tau(env2, got.body, body_w)
    return False


# ---------------------------------------------------------------------------
# Expression typing


def expr_sort(env: StdEnv, e: Expr, trail: tuple[str, ...] = ()) -> PayloadType:
    if isinstance(e, ILit):
        return PNat()
    if isinstance(e, EBool):
        return PBool()
    if isinstance(e, EComplex):
        return PNat()  # complex payloads ride the nat sort
    if isinstance(e, ENameRef):
        s = env.lookup_sort(e.name)
        if s is None:
            raise CheckError(diag("TName", f"unbound name {e.name}", trail))
        return s
    if isinstance(e, IVar):
        s = env.lookup_sort(e.name)
        if s is not None:
            return s
        if env.lookup_index(e.name) is not None:
            return PNat()
        raise CheckError(diag("TVari", f"unbound variable {e.name}", trail))
    if isinstance(e, IOp):
        for side in (e.left, e.right):
            s = expr_sort(env, side, trail)
            if not isinstance(s, PNat):
                raise CheckError(
                    diag("TIOp", f"arithmetic over non-nat operand {side}", trail)
                )
        return PNat()
    raise CheckError(diag("TExpr", f"untypable expression {e}", trail))


# ---------------------------------------------------------------------------
# The checker


@dataclass
class Checker:
    env: StdEnv
    mode: CheckMode = field(default_factory=Initial)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def fail(self, rule: str, msg: str, trail: tuple[str, ...] = ()):
        raise CheckError(diag(rule, msg, trail))

    # -- session environment plumbing ------------------------------------

    def _local(self, d: SessionEnv, c: Channel) -> LocalType:
        t = d.lookup(c)
        if t is None:
            return LEnd()
        if not isinstance(t, GLocal):
            self.fail("TOut", f"channel {c} carries message types in a prefix")
        return t.ltype

    def _shared_global(self, name: str, trail) -> GlobalType:
        s = self.env.lookup_sort(name)
        if not isinstance(s, PShared):
            self.fail("TInit", f"{name} is not a shared session channel", trail)
        return s.gtype

    def _check_pid(self, g: GlobalType, declared, trail) -> None:
        want = set()
        for p in declared:
            kind_participant(self.env, p, trail)
            want.add(p)
        try:
            ground = normal_form(g)
            have = pid_ground(ground)
            want_ground = {eval_participant_ground(p) for p in declared}
            if have != want_ground:
                self.fail(
                    "TInit",
                    f"participants {sorted(map(str, want_ground))} do not match "
                    f"pid(G) = {sorted(map(str, have))}",
                    trail,
                )
            return
        except CheckError:
            raise
        except Exception:
            pass
        # symbolic global type: fall back to the syntactic participant set
        have_syn = pid(g)
        if {p.name for p in have_syn} != {p.name for p in want}:
            self.fail("TInit", "declared participants do not cover pid(G)", trail)

    def _check_member_pid(self, g: GlobalType, p: Participant, trail) -> None:
        kind_participant(self.env, p, trail)
        try:
            ground = normal_form(g)
            have = pid_ground(ground)
            if eval_participant_ground(p) not in have:
                self.fail("TAcc", f"{p} is not a participant of the session", trail)
            return
        except CheckError:
            raise
        except Exception:
            pass
        if p.name not in {q.name for q in pid(g)}:
            self.fail("TAcc", f"{p} is not a participant of the session", trail)

    def _projection(self, g: GlobalType, p: Participant, trail) -> LocalType:
        try:
            t = project(g, p, IndexContext.from_env(self.env))
        except Exception as e:
            self.fail("TInit", f"projection onto {p} failed: {e}", trail)
        return normal_form(t)

    # -- main synthesis ----------------------------------------------------

    def check(self, p: Process, trail: tuple[str, ...] = ()) -> ProcessType:
        return self._synth(p, self.env, frozenset(), trail)[0]

    def _synth(
        self, p: Process, env: StdEnv, svars: frozenset[str], trail: tuple[str, ...]
    ) -> tuple[ProcessType, frozenset[str]]:
        """Returns the process type and the set of queue sessions used."""
        old_env = self.env
        self.env = env
        try:
            return self._synth_inner(p, env, svars, trail)
        finally:
            self.env = old_env

    def _synth_inner(self, p, env, svars, trail) -> tuple[ProcessType, frozenset[str]]:
        if isinstance(p, PZero):
            return TSess(SessionEnv()), frozenset()

        if isinstance(p, PInit):
            here = trail + (f"init on {p.chan}",)
            g = self._shared_global(p.chan, here)
            self._check_pid(g, p.participants, here)
            tau, sig = self._synth(p.body, env, svars | {p.bind}, here)
            d = self._expect_sess(tau, here)
            t_body = self._local(d, ChVar(p.bind))
            t_exp = self._projection(g, p.participants[0], here)
            if not conforms(env, t_body, t_exp, here):
                self.fail(
                    "TInit",
                    f"body uses {p.bind} as {t_body} but the projection onto "
                    f"{p.participants[0]} is {t_exp}",
                    here,
                )
            return TSess(d.without(ChVar(p.bind))), sig

        if isinstance(p, PAcc):
            here = trail + (f"accept {p.participant} on {p.chan}",)
            g = self._shared_global(p.chan, here)
            self._check_member_pid(g, p.participant, here)
            tau, sig = self._synth(p.body, env, svars | {p.bind}, here)
            d = self._expect_sess(tau, here)
            t_body = self._local(d, ChVar(p.bind))
            t_exp = self._projection(g, p.participant, here)
            if not conforms(env, t_body, t_exp, here):
                self.fail(
                    "TAcc",
                    f"body uses {p.bind} as {t_body} but the projection onto "
                    f"{p.participant} is {t_exp}",
                    here,
                )
            return TSess(d.without(ChVar(p.bind))), sig

        if isinstance(p, PReq):
            here = trail + (f"request {p.participant} on {p.chan}",)
            if isinstance(self.mode, Initial):
                self.fail("TReq", "requests only appear at runtime", here)
            g = self._shared_global(p.chan, here)
            self._check_member_pid(g, p.participant, here)
            t = self._projection(g, p.participant, here)
            d = SessionEnv(((ChEnd(p.session, p.participant), GLocal(t)),))
            return TSess(d), frozenset()

        if isinstance(p, PSend):
            here = trail + ("send",)
            chan = self._resolve_chan(p.chan, svars)
            s = expr_sort(env, p.expr, here)
            tau, sig = self._synth(p.cont, env, svars, here)
            d = self._expect_sess(tau, here)
            if chan is None:
                return TSess(d), sig  # external channel: no session effect
            t = self._local(d, chan)
            return TSess(d.updated(chan, GLocal(LOut(p.to, s, t)))), sig

        if isinstance(p, PRecv):
            here = trail + (f"receive {p.var}",)
            chan = self._resolve_chan(p.chan, svars)
            if chan is None:
                self.fail("TIn", f"receive on unbound channel {p.chan}", here)
            if p.annot is None:
                self.fail("TIn", f"missing payload annotation on {p.var}", here)
            env2 = env.add(EntrySort(p.var, p.annot))
            tau, sig = self._synth(p.cont, env2, svars, here)
            d = self._expect_sess(tau, here)
            t = self._local(d, chan)
            return TSess(d.updated(chan, GLocal(LIn(p.frm, p.annot, t)))), sig

        if isinstance(p, PDeleg):
            here = trail + ("delegate",)
            chan = self._resolve_chan(p.chan, svars)
            sent = self._resolve_chan(p.sent, svars)
            if chan is None or sent is None:
                self.fail("TDeleg", "delegation over unbound channel", here)
            if p.sent_type is None:
                self.fail("TDeleg", "missing type annotation on delegated channel", here)
            tau, sig = self._synth(p.cont, env, svars, here)
            d = self._expect_sess(tau, here)
            if d.lookup(sent) is not None:
                self.fail("TDeleg", f"delegated channel {sent} still used", here)
            t = self._local(d, chan)
            d = d.updated(chan, GLocal(LOut(p.to, PSession(p.sent_type), t)))
            d = d.updated(sent, GLocal(p.sent_type))
            return TSess(d), sig

        if isinstance(p, PCatch):
            here = trail + (f"catch {p.bind}",)
            chan = self._resolve_chan(p.chan, svars)
            if chan is None:
                self.fail("TRecep", "session reception on unbound channel", here)
            tau, sig = self._synth(p.cont, env, svars | {p.bind}, here)
            d = self._expect_sess(tau, here)
            t_caught = self._local(d, ChVar(p.bind))
            if p.annot is not None and not conforms(env, t_caught, p.annot, here):
                self.fail(
                    "TRecep",
                    f"caught channel used as {t_caught}, annotated {p.annot}",
                    here,
                )
            t = self._local(d.without(ChVar(p.bind)), chan)
            d = d.without(ChVar(p.bind)).updated(
                chan, GLocal(LIn(p.frm, PSession(p.annot or t_caught), t))
            )
            return TSess(d), sig

        if isinstance(p, PSel):
            here = trail + (f"select {p.label}",)
            chan = self._resolve_chan(p.chan, svars)
            if chan is None:
                self.fail("TSel", "selection on unbound channel", here)
            tau, sig = self._synth(p.cont, env, svars, here)
            d = self._expect_sess(tau, here)
            t = self._local(d, chan)
            return TSess(d.updated(chan, GLocal(LSel(p.to, ((p.label, t),))))), sig

        if isinstance(p, PBra):
            here = trail + ("branch",)
            chan = self._resolve_chan(p.chan, svars)
            if chan is None:
                self.fail("TBra", "branching on unbound channel", here)
            outs = []
            rests = []
            sig: frozenset[str] = frozenset()
            for label, body in p.branches:
                tau, s2 = self._synth(body, env, svars, here + (f"label {label}",))
                d = self._expect_sess(tau, here)
                outs.append((label, self._local(d, chan)))
                rests.append(d.without(chan))
                sig |= s2
            for other in rests[1:]:
                if not (
                    conforms_env(env, rests[0], other)
                    and conforms_env(env, other, rests[0])
                ):
                    self.fail("TBra", "branches disagree outside the subject", here)
            d0 = rests[0] if rests else SessionEnv()
            return TSess(d0.updated(chan, GLocal(LBra(p.frm, tuple(outs))))), sig

        if isinstance(p, PMu):
            here = trail + ("mu",)
            if p.annot is None:
                self.fail("TRec", "recursion requires a type annotation", here)
            kind_proctype(env, p.annot, here)
            env2 = env.add(EntryProc(p.var, p.annot))
            tau, sig = self._synth(p.body, env2, svars, here)
            if not conforms_tau(env, tau, p.annot):
                self.fail(
                    "TRec", f"recursion body has type {tau}, annotated {p.annot}", here
                )
            return p.annot, sig

        if isinstance(p, PVar):
            here = trail + (f"variable {p.name}",)
            tau = env.lookup_proc(p.name)
            if tau is None:
                self.fail("TVar", f"unbound process variable {p.name}", here)
            return tau, frozenset()

        if isinstance(p, PPRec):
            return self._synth_prec(p, env, svars, trail)

        if isinstance(p, PApp):
            here = trail + (f"apply {p.arg}",)
            tau, sig = self._synth(p.proc, env, svars, here)
            if not isinstance(tau, TPi):
                self.fail("TApp", f"applying a process of type {tau}", here)
            v = member(IndexContext.from_env(env), p.arg, tau.isort)
            if isinstance(v, Invalid):
                self.fail("TApp", f"argument {p.arg} outside {tau.isort}", here)
            if isinstance(v, Undecided):
                raise UndecidedError(
                    diag("TApp", f"membership {p.arg} : {tau.isort} undecided", here)
                )
            return subst_proctype(tau.body, tau.ivar, p.arg), sig

        if isinstance(p, PNew):
            here = trail + (f"new {p.name}",)
            if p.annot is None:
                self.fail("TNu", f"missing global type annotation on {p.name}", here)
            env2 = env.add(EntrySort(p.name, PShared(p.annot)))
            return self._synth(p.body, env2, svars, here)

        if isinstance(p, PNewS):
            here = trail + (f"new session {p.session}",)
            if isinstance(self.mode, Initial):
                self.fail("GSRes", "session restriction only appears at runtime", here)
            tau, sig = self._synth(p.body, env, svars, here)
            d = self._expect_sess(tau, here)
            ok, why = coherent(d, p.session)
            if not ok:
                self.fail("GSRes", f"session {p.session} incoherent: {why}", here)
            kept = SessionEnv(
                tuple(
                    (c, t)
                    for c, t in d.entries
                    if not (isinstance(c, ChEnd) and c.session == p.session)
                )
            )
            return TSess(kept), sig - {p.session}

        if isinstance(p, PPar):
            here = trail + ("par",)
            tl, sl = self._synth(p.left, env, svars, here)
            tr, sr = self._synth(p.right, env, svars, here)
            dl = self._expect_sess(tl, here)
            dr = self._expect_sess(tr, here)
            if sl & sr:
                self.fail("GPar", f"queues for {sl & sr} appear twice", here)
            if isinstance(self.mode, Runtime):
                return TSess(compose_env(dl, dr)), sl | sr
            overlap = set(dl.domain()) & set(dr.domain())
            if overlap:
                self.fail("TPar", f"channels {overlap} used on both sides", here)
            return TSess(SessionEnv(dl.entries + dr.entries)), sl | sr

        if isinstance(p, PQueue):
            here = trail + (f"queue {p.session}",)
            if isinstance(self.mode, Initial):
                self.fail("QInit", "queues only appear at runtime", here)
            return TSess(check_queue(env, p.session, p.msgs)), frozenset((p.session,))

        raise TypeError(f"not a process: {p!r}")

    def _synth_prec(self, p: PPRec, env, svars, trail):
        here = trail + ("process recursor",)
        if p.annot is not None:
            fam = p.annot
            if not isinstance(fam, TPi):
                self.fail("TPRec", "recursor annotation must be a Pi type", here)
            kind_proctype(env, fam, here)
            base_want = subst_proctype(fam.body, fam.ivar, ILit(0))
            tau_b, sig_b = self._synth(p.base, env, svars, here + ("base",))
            if not conforms_tau(env, tau_b, base_want):
                self.fail(
                    "TPRec", f"base has type {tau_b}, expected {base_want}", here
                )
            try:
                pred = predecessor_sort(p.isort)
            except Exception:
                pred = p.isort
            from .terms import SEmpty

            if not isinstance(pred, SEmpty):
                hyp = subst_proctype(fam.body, fam.ivar, IVar(p.ivar))
                step_want = subst_proctype(
                    fam.body, fam.ivar, IOp("+", IVar(p.ivar), ILit(1))
                )
                env2 = env.add(EntryIndex(p.ivar, pred)).add(EntryProc(p.pvar, hyp))
                tau_s, _ = self._synth(p.body, env2, svars, here + ("step",))
                if not conforms_tau(env2, tau_s, step_want):
                    self.fail(
                        "TPRec",
                        f"step has type {tau_s}, expected {step_want}",
                        here,
                    )
            return fam, sig_b
        # unannotated recursors: only the constant family is inferred
        tau_b, sig_b = self._synth(p.base, env, svars, here + ("base",))
        try:
            pred = predecessor_sort(p.isort)
        except Exception:
            pred = p.isort
        from .terms import SEmpty

        if not isinstance(pred, SEmpty):
            env2 = env.add(EntryIndex(p.ivar, pred)).add(EntryProc(p.pvar, tau_b))
            tau_s, _ = self._synth(p.body, env2, svars, here + ("step",))
            if not (
                conforms_tau(env2, tau_s, tau_b) and conforms_tau(env2, tau_b, tau_s)
            ):
                self.fail(
                    "TPRec",
                    "unannotated recursor whose family is not constant",
                    here,
                )
        return TPi(p.ivar, p.isort, tau_b), sig_b

    def _resolve_chan(self, c, svars) -> Optional[Channel]:
        if isinstance(c, ChEnd):
            return c
        if c in svars:
            return ChVar(c)
        return None  # a free name: external channel

    def _expect_sess(self, tau: ProcessType, trail) -> SessionEnv:
        if not isinstance(tau, TSess):
            self.fail("TApp", f"expected a fully applied process, got {tau}", trail)
        return tau.env


def check_process(
    env: StdEnv, p: Process, mode: CheckMode = Initial()
) -> ProcessType:
    """Type a process; raises CheckError / UndecidedError on failure."""
    return Checker(env, mode).check(p)


# ---------------------------------------------------------------------------
# Queue typing and composition


def _value_sort(env: StdEnv, e: Expr) -> PayloadType:
    return expr_sort(env, e)


def check_queue(env: StdEnv, session: str, msgs: tuple[Message, ...]) -> SessionEnv:
    """Message types accumulated per sending endpoint, in queue order."""
    d = SessionEnv()
    for m in msgs:
        chan = ChEnd(session, m.sender)
        if isinstance(m.body, BVal):
            entry: MessageType = MOut(m.receiver, _value_sort(env, m.body.expr))
        elif isinstance(m.body, BChan):
            entry = MOut(m.receiver, PSession(LEnd()))
        else:
            entry = MSel(m.receiver, m.body.label)
        cur = d.lookup(chan)
        if cur is None:
            d = d.updated(chan, GMsgs((entry,)))
        elif isinstance(cur, GMsgs):
            d = d.updated(chan, GMsgs(cur.msgs + (entry,)))
        else:
            raise CheckError(diag("QSend", "queue typing met a session type"))
    return d


def compose_gen(a: GeneralisedType, b: GeneralisedType) -> GeneralisedType:
    if isinstance(a, GMsgs):
        if isinstance(b, GMsgs):
            return GMsgs(a.msgs + b.msgs)
        if isinstance(b, GLocal):
            return gen_then(a.msgs, b.ltype)
        return GMsgsThen(a.msgs + b.msgs, b.ltype)
    if isinstance(b, GMsgs):
        if isinstance(a, GLocal):
            return gen_then(b.msgs, a.ltype)
        return GMsgsThen(b.msgs + a.msgs, a.ltype)
    raise CheckError(diag("Compose", f"composition of {a} and {b} is bottom"))


def compose_env(d1: SessionEnv, d2: SessionEnv) -> SessionEnv:
    out = list(d1.entries)
    for c, t in d2.entries:
        existing = None
        for k, (c2, t2) in enumerate(out):
            if c2 == c:
                existing = k
                break
        if existing is None:
            out.append((c, t))
        else:
            out[existing] = (c, compose_gen(out[existing][1], t))
    return SessionEnv(tuple(out))


# ---------------------------------------------------------------------------
# Generalised projection, duality and coherence


@dataclass(frozen=True)
class TrEnd:
    def __str__(self):
        return "end"


@dataclass(frozen=True)
class TrVar:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class TrMu:
    var: str
    body: "Trace"

    def __str__(self):
        return f"mu {self.var}.{self.body}"


@dataclass(frozen=True)
class TrOut:
    payload: PayloadType
    cont: "Trace"

    def __str__(self):
        return f"!{self.payload};{self.cont}"


@dataclass(frozen=True)
class TrIn:
    payload: PayloadType
    cont: "Trace"

    def __str__(self):
        return f"?{self.payload};{self.cont}"


@dataclass(frozen=True)
class TrSelL:
    label: str
    cont: "Trace"

    def __str__(self):
        return f"+{self.label};{self.cont}"


@dataclass(frozen=True)
class TrSel:
    branches: tuple[tuple[str, "Trace"], ...]

    def __str__(self):
        return "+{" + ", ".join(f"{l}:{t}" for l, t in self.branches) + "}"


@dataclass(frozen=True)
class TrBra:
    branches: tuple[tuple[str, "Trace"], ...]

    def __str__(self):
        return "&{" + ", ".join(f"{l}:{t}" for l, t in self.branches) + "}"


Trace = Union[TrEnd, TrVar, TrMu, TrOut, TrIn, TrSelL, TrSel, TrBra]


def _trace_merge(a: Trace, b: Trace) -> Trace:
    if a == b:
        return a
    if isinstance(a, TrBra) and isinstance(b, TrBra):
        amap, bmap = dict(a.branches), dict(b.branches)
        out = []
        for l, t in a.branches:
            out.append((l, _trace_merge(t, bmap[l]) if l in bmap else t))
        for l, t in b.branches:
            if l not in amap:
                out.append((l, t))
        return TrBra(tuple(out))
    if isinstance(a, TrSel) and isinstance(b, TrSel):
        # a selection reached under different external branches is, to the
        # observer, one internal choice over the union of the labels
        amap, bmap = dict(a.branches), dict(b.branches)
        out = []
        for l, t in a.branches:
            out.append((l, _trace_merge(t, bmap[l]) if l in bmap else t))
        for l, t in b.branches:
            if l not in amap:
                out.append((l, t))
        return TrSel(tuple(out))
    if isinstance(a, TrOut) and isinstance(b, TrOut) and a.payload == b.payload:
        return TrOut(a.payload, _trace_merge(a.cont, b.cont))
    if isinstance(a, TrIn) and isinstance(b, TrIn) and a.payload == b.payload:
        return TrIn(a.payload, _trace_merge(a.cont, b.cont))
    if isinstance(a, TrMu) and isinstance(b, TrMu) and a.var == b.var:
        return TrMu(a.var, _trace_merge(a.body, b.body))
    # ending and looping back are observationally the same to a participant
    # who sees no action either way; a loop that stays silent collapses to
    # end once the enclosing mu is built
    if isinstance(a, TrEnd) and isinstance(b, TrVar):
        return b
    if isinstance(a, TrVar) and isinstance(b, TrEnd):
        return a
    raise CheckError(diag("GenProj", f"unmergeable traces {a} / {b}"))


def _trace_pure(t: Trace) -> bool:
    if isinstance(t, (TrEnd, TrVar)):
        return True
    if isinstance(t, TrMu):
        return _trace_pure(t.body)
    return False


def gen_project(t: GeneralisedType, q: Participant) -> Trace:
    """Project a generalised endpoint type onto the actions that involve q."""
    if isinstance(t, GLocal):
        return _lt_project(normal_form(t.ltype), q)
    tail: Trace = (
        TrEnd() if isinstance(t, GMsgs) else _lt_project(normal_form(t.ltype), q)
    )

    def build(k: int) -> Trace:
        if k == len(t.msgs):
            return tail
        m = t.msgs[k]
        rest = build(k + 1)
        if isinstance(m, MOut) and m.to == q:
            return TrOut(m.payload, rest)
        if isinstance(m, MSel) and m.to == q:
            return TrSelL(m.label, rest)
        return rest

    return build(0)


def _lt_project(t: LocalType, q: Participant) -> Trace:
    if isinstance(t, LEnd):
        return TrEnd()
    if isinstance(t, LTVar):
        return TrVar(t.name)
    if isinstance(t, LMu):
        body = _lt_project(t.body, q)
        if _trace_pure(body):
            return TrEnd()
        return TrMu(t.var, body)
    if isinstance(t, LOut):
        rest = _lt_project(t.cont, q)
        return TrOut(t.payload, rest) if t.to == q else rest
    if isinstance(t, LIn):
        rest = _lt_project(t.cont, q)
        return TrIn(t.payload, rest) if t.frm == q else rest
    if isinstance(t, LSel):
        if t.to == q:
            return TrSel(tuple((l, _lt_project(b, q)) for l, b in t.branches))
        parts = [_lt_project(b, q) for _, b in t.branches]
        out = parts[0]
        for x in parts[1:]:
            out = _trace_merge(out, x)
        return out
    if isinstance(t, LBra):
        if t.frm == q:
            return TrBra(tuple((l, _lt_project(b, q)) for l, b in t.branches))
        parts = [_lt_project(b, q) for _, b in t.branches]
        out = parts[0]
        for x in parts[1:]:
            out = _trace_merge(out, x)
        return out
    raise CheckError(diag("GenProj", f"projection of non-normal type {t}"))


def _tr_subst(t: Trace, var: str, repl: Trace) -> Trace:
    if isinstance(t, TrVar):
        return repl if t.name == var else t
    if isinstance(t, TrEnd):
        return t
    if isinstance(t, TrMu):
        if t.var == var:
            return t
        return TrMu(t.var, _tr_subst(t.body, var, repl))
    if isinstance(t, (TrOut, TrIn, TrSelL)):
        return replace(t, cont=_tr_subst(t.cont, var, repl))
    return replace(
        t, branches=tuple((l, _tr_subst(b, var, repl)) for l, b in t.branches)
    )


def dual(a: Trace, b: Trace, _seen=None) -> bool:
    """Duality of projected traces, up to unfolding: outputs match inputs,
    selections match branchings, committed labels pick a branch."""
    seen = _seen or set()
    if (a, b) in seen:
        return True
    seen = seen | {(a, b)}
    if isinstance(a, TrMu):
        return dual(_tr_subst(a.body, a.var, a), b, seen)
    if isinstance(b, TrMu):
        return dual(a, _tr_subst(b.body, b.var, b), seen)
    if isinstance(a, TrEnd) and isinstance(b, TrEnd):
        return True
    if isinstance(a, TrVar) and isinstance(b, TrVar):
        return a.name == b.name
    if isinstance(a, TrOut) and isinstance(b, TrIn):
        return a.payload == b.payload and dual(a.cont, b.cont, seen)
    if isinstance(a, TrIn) and isinstance(b, TrOut):
        return dual(b, a, seen)
    if isinstance(a, TrSel) and isinstance(b, TrBra):
        # every selectable label must be offered; mid-execution the selector
        # may already have narrowed its choices
        bmap = dict(b.branches)
        return all(
            l in bmap and dual(t, bmap[l], seen) for l, t in a.branches
        )
    if isinstance(a, TrBra) and isinstance(b, TrSel):
        return dual(b, a, seen)
    if isinstance(a, TrSelL) and isinstance(b, TrBra):
        bmap = dict(b.branches)
        return a.label in bmap and dual(a.cont, bmap[a.label], seen)
    if isinstance(a, TrBra) and isinstance(b, TrSelL):
        return dual(b, a, seen)
    return False


def coherent(d: SessionEnv, session: str) -> tuple[bool, str]:
    """Pairwise duality of the generalised projections of one session."""
    entries = [
        (c.participant, t)
        for c, t in d.entries
        if isinstance(c, ChEnd) and c.session == session
    ]
    parts = [p for p, _ in entries]
    tmap = dict(zip(parts, (t for _, t in entries)))
    for p in parts:
        for q in parts:
            if p == q:
                continue
            try:
                tp = gen_project(tmap[p], q)
            except CheckError as e:
                return False, str(e)
            if isinstance(tp, TrEnd):
                continue
            try:
                tq = gen_project(tmap[q], p)
            except CheckError as e:
                return False, str(e)
            if not dual(tp, tq):
                return False, f"{p}->{q}: {tp} not dual to {tq}"
    for p in parts:
        for q in [x for x in _mentioned(tmap[p]) if x not in parts]:
            tp = gen_project(tmap[p], q)
            if not isinstance(tp, TrEnd):
                return False, f"{p} expects absent participant {q}"
    return True, ""


def _mentioned(t: GeneralisedType) -> set[Participant]:
    out: set[Participant] = set()

    def walk_lt(x: LocalType) -> None:
        if isinstance(x, LOut):
            out.add(x.to)
            walk_lt(x.cont)
        elif isinstance(x, LIn):
            out.add(x.frm)
            walk_lt(x.cont)
        elif isinstance(x, (LSel, LBra)):
            out.add(x.to if isinstance(x, LSel) else x.frm)
            for _, b in x.branches:
                walk_lt(b)
        elif isinstance(x, LMu):
            walk_lt(x.body)
        elif isinstance(x, (LRec,)):
            walk_lt(x.base)
            walk_lt(x.body)
        elif isinstance(x, LApp):
            walk_lt(x.fn)
        elif isinstance(x, LCond):
            walk_lt(x.then)
            walk_lt(x.els)

    if isinstance(t, GLocal):
        walk_lt(normal_form(t.ltype))
    else:
        for m in t.msgs:
            out.add(m.to)
        if isinstance(t, GMsgsThen):
            walk_lt(normal_form(t.ltype))
    return out


# ---------------------------------------------------------------------------
# Session environment reduction (for the subject reduction harness)


def _head_local(t: LocalType) -> LocalType:
    # environment reduction works modulo structural equivalence, which
    # unfolds recursion on demand
    t = whnf(t)
    while isinstance(t, LMu):
        t = whnf(subst_tvar(t.body, t.var, t))
    return t


def _parts(t: GeneralisedType) -> tuple[tuple[MessageType, ...], Optional[LocalType]]:
    if isinstance(t, GLocal):
        return (), _head_local(t.ltype)
    if isinstance(t, GMsgs):
        return t.msgs, None
    return t.msgs, _head_local(t.ltype)


def _first_for(msgs: tuple[MessageType, ...], target: Participant) -> Optional[int]:
    """Index of the oldest in-flight message toward ``target``; entries for
    other targets commute past it."""
    for k, m in enumerate(msgs):
        if m.to == target:
            return k
    return None


def env_step(d: SessionEnv) -> list[tuple[str, SessionEnv]]:
    """One-step reducts of a session environment.

    The paper's reduction rules fire an output and the matching input
    together; asynchrony splits each into a commit (the sent prefix moves
    into the entry's in-flight message part, leaving the composite reading
    unchanged) followed by a consume at the receiving side. Both stages are
    returned; ``env_step_atomic`` gives the unsplit rules.
    """
    out: list[tuple[str, SessionEnv]] = []
    for c, t in d.entries:
        if not isinstance(c, ChEnd):
            continue
        msgs, lt = _parts(t)
        # commit rules: the head output or selection goes in flight
        if isinstance(lt, LOut):
            d2 = d.updated(c, gen_then(msgs + (MOut(lt.to, lt.payload),), lt.cont))
            out.append(("send", d2))
        if isinstance(lt, LSel):
            for label, cont in lt.branches:
                d2 = d.updated(c, gen_then(msgs + (MSel(lt.to, label),), cont))
                out.append((f"select {label}", d2))
        # consume rules: the head input meets the oldest matching message
        if isinstance(lt, LIn):
            sender = ChEnd(c.session, lt.frm)
            if sender == c:
                k = _first_for(msgs, c.participant)
                if (
                    k is not None
                    and isinstance(msgs[k], MOut)
                    and msgs[k].payload == lt.payload
                ):
                    rest = msgs[:k] + msgs[k + 1 :]
                    out.append(("recv-self", d.updated(c, gen_then(rest, lt.cont))))
            else:
                ts = d.lookup(sender)
                if ts is not None:
                    smsgs, slt = _parts(ts)
                    k = _first_for(smsgs, c.participant)
                    if (
                        k is not None
                        and isinstance(smsgs[k], MOut)
                        and smsgs[k].payload == lt.payload
                    ):
                        rest = smsgs[:k] + smsgs[k + 1 :]
                        s_new = (
                            GMsgs(rest)
                            if slt is None
                            else gen_then(rest, slt)
                        )
                        d2 = d.updated(sender, s_new).updated(
                            c, gen_then(msgs, lt.cont)
                        )
                        out.append(("recv", d2))
        if isinstance(lt, LBra):
            sender = ChEnd(c.session, lt.frm)
            ts = d.lookup(sender) if sender != c else t
            if ts is not None:
                smsgs, slt = _parts(ts)
                k = _first_for(smsgs, c.participant)
                if k is not None and isinstance(smsgs[k], MSel):
                    label = smsgs[k].label
                    bmap = dict(lt.branches)
                    if label in bmap:
                        rest = smsgs[:k] + smsgs[k + 1 :]
                        s_new = GMsgs(rest) if slt is None else gen_then(rest, slt)
                        if sender == c:
                            d2 = d.updated(c, gen_then(rest, bmap[label]))
                        else:
                            d2 = d.updated(sender, s_new).updated(
                                c, gen_then(msgs, bmap[label])
                            )
                        out.append((f"branch {label}", d2))
    return out


def env_step_atomic(d: SessionEnv) -> list[tuple[str, SessionEnv]]:
    """The session-environment reduction rules in their unsplit form: an
    output meets the matching input in one move, a selection commits, a
    committed label meets the branching, plus the self-send variant."""
    out: list[tuple[str, SessionEnv]] = []
    for c, t in d.entries:
        if not isinstance(c, ChEnd) or not isinstance(t, GLocal):
            continue
        lt = whnf(t.ltype)
        if isinstance(lt, LOut):
            tgt = ChEnd(c.session, lt.to)
            if tgt == c:
                inner = whnf(lt.cont)
                if (
                    isinstance(inner, LIn)
                    and inner.frm == c.participant
                    and inner.payload == lt.payload
                ):
                    out.append(("recv-self", d.updated(c, GLocal(inner.cont))))
            else:
                t2 = d.lookup(tgt)
                if t2 is not None and isinstance(t2, GLocal):
                    lt2 = whnf(t2.ltype)
                    if (
                        isinstance(lt2, LIn)
                        and lt2.frm == c.participant
                        and lt2.payload == lt.payload
                    ):
                        d2 = d.updated(c, GLocal(lt.cont)).updated(
                            tgt, GLocal(lt2.cont)
                        )
                        out.append(("recv", d2))
        if isinstance(lt, LSel):
            for label, cont in lt.branches:
                out.append(
                    (f"select {label}", d.updated(c, gen_then((MSel(lt.to, label),), cont)))
                )
    for c, t in d.entries:
        if not isinstance(c, ChEnd) or not isinstance(t, GMsgsThen):
            continue
        if t.msgs and isinstance(t.msgs[0], MSel):
            m = t.msgs[0]
            tgt = ChEnd(c.session, m.to)
            t2 = d.lookup(tgt)
            if t2 is not None and isinstance(t2, GLocal):
                lt2 = whnf(t2.ltype)
                if isinstance(lt2, LBra) and lt2.frm == c.participant:
                    bmap = dict(lt2.branches)
                    if m.label in bmap:
                        d2 = d.updated(c, gen_then(t.msgs[1:], t.ltype)).updated(
                            tgt, GLocal(bmap[m.label])
                        )
                        out.append((f"branch {m.label}", d2))
    return out


def env_normalise(d: SessionEnv) -> SessionEnv:
    out = []
    for c, t in d.entries:
        if isinstance(t, GLocal):
            out.append((c, GLocal(normal_form(t.ltype))))
        elif isinstance(t, GMsgsThen):
            out.append((c, gen_then(t.msgs, normal_form(t.ltype))))
        else:
            out.append((c, t))
    return SessionEnv(tuple(out))


# ---------------------------------------------------------------------------
# Simplicity and well-linkedness (conservative syntactic checks)


def _session_subjects(p: Process, bound: frozenset[str]) -> set:
    """Channel subjects of communication prefixes in one thread."""
    subjects: set = set()

    def walk(q: Process, bnd: frozenset[str]) -> None:
        if isinstance(q, (PSend, PRecv, PDeleg, PCatch, PSel)):
            if isinstance(q.chan, ChEnd) or q.chan in bnd:
                subjects.add(q.chan)
            walk(q.cont, bnd)
        elif isinstance(q, PBra):
            if isinstance(q.chan, ChEnd) or q.chan in bnd:
                subjects.add(q.chan)
            for _, b in q.branches:
                walk(b, bnd)
        elif isinstance(q, (PInit, PAcc)):
            walk(q.body, bnd | {q.bind})
        elif isinstance(q, (PMu, PNew, PNewS)):
            walk(q.body, bnd)
        elif isinstance(q, PPRec):
            walk(q.base, bnd)
            walk(q.body, bnd)
        elif isinstance(q, PApp):
            walk(q.proc, bnd)
        elif isinstance(q, PPar):
            walk(q.left, bnd)
            walk(q.right, bnd)

    walk(p, bound)
    return subjects


def _threads(p: Process) -> list[Process]:
    if isinstance(p, PPar):
        return _threads(p.left) + _threads(p.right)
    if isinstance(p, (PNew, PNewS)):
        return _threads(p.body)
    if isinstance(p, PPRec):
        return _threads(p.base) + _threads(p.body)
    if isinstance(p, PApp):
        return _threads(p.proc)
    return [p]


def check_simple_and_welllinked(p: Process) -> list[Diagnostic]:
    """Conservative static checks backing the progress property: each thread
    works on at most one session, no delegation, and every shared-channel
    accept is matched by exactly one init listing its participant."""
    out: list[Diagnostic] = []
    inits: dict[str, list[tuple[Participant, ...]]] = {}
    accepts: dict[str, list[Participant]] = {}

    def scan(q: Process) -> None:
        if isinstance(q, PInit):
            inits.setdefault(q.chan, []).append(q.participants)
            scan(q.body)
        elif isinstance(q, PAcc):
            accepts.setdefault(q.chan, []).append(q.participant)
            scan(q.body)
        elif isinstance(q, (PSend, PRecv, PSel, PCatch)):
            scan(q.cont)
        elif isinstance(q, PDeleg):
            out.append(diag("NotSimple", "delegation is outside the simple fragment"))
            scan(q.cont)
        elif isinstance(q, PBra):
            for _, b in q.branches:
                scan(b)
        elif isinstance(q, (PMu, PNew, PNewS)):
            scan(q.body)
        elif isinstance(q, PPRec):
            scan(q.base)
            scan(q.body)
        elif isinstance(q, PApp):
            scan(q.proc)
        elif isinstance(q, PPar):
            scan(q.left)
            scan(q.right)

    scan(p)
    for thread in _threads(p):
        subs = _session_subjects(thread, frozenset())
        if len(subs) > 1:
            out.append(
                diag("NotSimple", f"thread interleaves sessions on {sorted(map(str, subs))}")
            )
    for chan, lst in accepts.items():
        groups = inits.get(chan, [])
        if not groups:
            out.append(diag("NotWellLinked", f"accept on {chan} has no init"))
            continue
        listed = {q for grp in groups for q in grp}
        for participant in lst:
            if participant.is_ground() and participant not in listed:
                out.append(
                    diag(
                        "NotWellLinked",
                        f"accept for {participant} on {chan} never requested",
                    )
                )
    return out
