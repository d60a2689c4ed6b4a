"""Asynchronous execution of runtime configurations.

A configuration is a flat bag of processes plus one FIFO queue per session.
One labelled rule fires per step: session initialisation spawns requests and
an empty queue, joins connect accepters, sends append to the queue, receives
and branchings consume the first message of the matching (sender, receiver)
pair, recursors unroll, and recursion unfolds on demand. Inability to step is
a verdict, not an error: a configuration that is structurally the inactive
process is Done, anything else that cannot move is Stuck.

The runner is deterministic for a fixed scheduler and seed. Optional hooks
re-check runtime typability after every step (subject reduction, with the
session environment advanced by its reduction relation) and walk each
endpoint's projected local type alongside the execution (session fidelity).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

from .checker import (
    Runtime,
    check_process,
    coherent,
    conforms_env,
    env_normalise,
    env_step,
)
from .diagnostics import CheckError, MpstError, diag
from .indices import IndexContext, eval_ground
from .projection import pid_ground, project
from .reduce import normal_form, whnf
from .terms import (
    BChan,
    BLabel,
    BVal,
    ChEnd,
    EBool,
    EComplex,
    ENameRef,
    EntrySort,
    Expr,
    GLocal,
    GlobalType,
    ILit,
    IOp,
    IVar,
    LBra,
    LEnd,
    LIn,
    LMu,
    LOut,
    LSel,
    LocalType,
    Message,
    PAcc,
    PApp,
    PBra,
    PCatch,
    PDeleg,
    PInit,
    PMu,
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
    Process,
    SessionEnv,
    StdEnv,
    eval_participant_ground,
    par_all,
    proc_subst_channel,
    proc_subst_index,
    proc_subst_value,
    proc_subst_var,
)


class SimulationError(MpstError):
    pass


def eval_value(e: Expr) -> Expr:
    """Evaluate a closed expression to a literal value."""
    if isinstance(e, (ILit, EBool, EComplex, ENameRef)):
        return e
    if isinstance(e, IVar):
        raise SimulationError(diag("Context", f"unbound variable {e.name} at runtime"))
    l, r = eval_value(e.left), eval_value(e.right)
    if isinstance(l, EComplex) or isinstance(r, EComplex):
        lc = l.value() if isinstance(l, EComplex) else complex(l.value)
        rc = r.value() if isinstance(r, EComplex) else complex(r.value)
        if e.op == "+":
            v = lc + rc
        elif e.op == "-":
            v = lc - rc
        elif e.op == "*":
            v = lc * rc
        else:
            raise SimulationError(diag("Context", "complex exponent unsupported"))
        return EComplex(v.real, v.imag)
    if not isinstance(l, ILit) or not isinstance(r, ILit):
        raise SimulationError(diag("Context", f"bad operands {l} {e.op} {r}"))
    a, b = l.value, r.value
    if e.op == "+":
        out = a + b
    elif e.op == "-":
        out = a - b
    elif e.op == "*":
        out = a * b
    else:
        out = a**b
    if out < 0:
        raise SimulationError(diag("Context", f"negative value {out} at runtime"))
    return ILit(out)


@dataclass(frozen=True)
class TraceEntry:
    rule: str
    detail: str
    message: Optional[Message] = None

    def to_json(self) -> dict:
        out = {"rule": self.rule, "detail": self.detail}
        if self.message is not None:
            out["message"] = str(self.message)
        return out


@dataclass
class Configuration:
    processes: list[Process]
    queues: dict[str, tuple[Message, ...]] = field(default_factory=dict)
    chan_types: dict[str, GlobalType] = field(default_factory=dict)
    session_types: dict[str, GlobalType] = field(default_factory=dict)
    fresh: int = 0
    external: list[tuple[str, Expr]] = field(default_factory=list)

    def copy(self) -> "Configuration":
        return Configuration(
            list(self.processes),
            dict(self.queues),
            dict(self.chan_types),
            dict(self.session_types),
            self.fresh,
            list(self.external),
        )

    def is_done(self) -> bool:
        return not self.processes and all(not q for q in self.queues.values())


def load(program: Process, chan_types: Optional[dict[str, GlobalType]] = None) -> Configuration:
    cfg = Configuration([], {}, dict(chan_types or {}))
    _absorb(cfg, program)
    return cfg


def _absorb(cfg: Configuration, p: Process) -> None:
    """Structural normalisation: flatten parallel, drop inaction, open
    restrictions (names are globally fresh)."""
    if isinstance(p, PZero):
        return
    if isinstance(p, PPar):
        _absorb(cfg, p.left)
        _absorb(cfg, p.right)
        return
    if isinstance(p, PNew):
        if p.annot is not None:
            cfg.chan_types[p.name] = p.annot
        _absorb(cfg, p.body)
        return
    if isinstance(p, PNewS):
        cfg.queues.setdefault(p.session, ())
        _absorb(cfg, p.body)
        return
    if isinstance(p, PQueue):
        cfg.queues[p.session] = cfg.queues.get(p.session, ()) + p.msgs
        return
    cfg.processes.append(p)


# ---------------------------------------------------------------------------
# Redex enumeration


@dataclass
class Redex:
    rule: str
    detail: str
    apply: Callable[[Configuration], Optional[TraceEntry]]


def _first_match(queue, sender: Participant, receiver: Participant) -> Optional[int]:
    for k, m in enumerate(queue):
        if m.sender == sender and m.receiver == receiver:
            return k
    return None


def enabled_redexes(cfg: Configuration) -> list[Redex]:
    out: list[Redex] = []
    for k, p in enumerate(cfg.processes):
        out.extend(_redexes_at(cfg, k, p))
    return out


def _replace_slot(cfg: Configuration, k: int, *new: Process) -> None:
    tail = cfg.processes[k + 1 :]
    cfg.processes[k + 1 :] = []
    cfg.processes.pop(k)
    scratch = Configuration([], cfg.queues, cfg.chan_types, cfg.session_types)
    for q in new:
        _absorb(scratch, q)
    cfg.processes[k:k] = scratch.processes
    cfg.processes.extend(tail)


def _redexes_at(cfg: Configuration, k: int, p: Process) -> list[Redex]:
    out: list[Redex] = []

    if isinstance(p, PApp):
        arg_free = False
        try:
            n = eval_ground(p.arg)
        except Exception:
            arg_free = True
        if not arg_free:
            target = p.proc
            if isinstance(target, PPRec):
                if n == 0:

                    def zero(c, k=k, target=target):
                        _replace_slot(c, k, target.base)
                        return TraceEntry("ZeroR", f"proc[{k}]")

                    out.append(Redex("ZeroR", f"proc[{k}]", zero))
                else:

                    def succ(c, k=k, target=target, n=n):
                        unrolled = proc_subst_index(target.body, target.ivar, ILit(n - 1))
                        unrolled = proc_subst_var(
                            unrolled, target.pvar, PApp(target, ILit(n - 1))
                        )
                        _replace_slot(c, k, unrolled)
                        return TraceEntry("SuccR", f"proc[{k}] at {n}")

                    out.append(Redex("SuccR", f"proc[{k}]", succ))
            elif isinstance(target, (PApp, PMu)):

                def inner(c, k=k, p=p):
                    got = _internal_step(c, k, p.proc)
                    if got is None:
                        return None
                    c.processes[k] = PApp(got, p.arg)
                    return TraceEntry("App", f"proc[{k}]")

                out.append(Redex("App", f"proc[{k}]", inner))
        return out

    if isinstance(p, PMu):

        def unfold(c, k=k, p=p):
            c.processes[k] = proc_subst_var(p.body, p.var, p)
            return TraceEntry("Str", f"unfold proc[{k}]")

        out.append(Redex("Str", f"unfold proc[{k}]", unfold))
        return out

    if isinstance(p, PInit):
        if all(q.is_ground() for q in p.participants):

            def init(c, k=k, p=p):
                s = f"s{c.fresh}"
                c.fresh += 1
                parts = [eval_participant_ground(q) for q in p.participants]
                c.queues[s] = ()
                g = c.chan_types.get(p.chan)
                if g is not None:
                    c.session_types[s] = g
                body = proc_subst_channel(p.body, p.bind, ChEnd(s, parts[0]))
                reqs = [PReq(p.chan, q, s) for q in parts[1:]]
                _replace_slot(c, k, body, *reqs)
                return TraceEntry("Init", f"{p.chan} -> {s} {[str(x) for x in parts]}")

            out.append(Redex("Init", f"init {p.chan}", init))
        return out

    if isinstance(p, PAcc):
        if p.participant.is_ground():
            me = eval_participant_ground(p.participant)
            for j, q in enumerate(cfg.processes):
                if isinstance(q, PReq) and q.chan == p.chan:
                    if eval_participant_ground(q.participant) == me:

                        def join(c, k=k, j=j, p=p, me=me, session=q.session):
                            body = proc_subst_channel(
                                p.body, p.bind, ChEnd(session, me)
                            )
                            hi, lo = max(k, j), min(k, j)
                            c.processes.pop(hi)
                            c.processes.pop(lo)
                            scratch = Configuration(
                                [], c.queues, c.chan_types, c.session_types
                            )
                            _absorb(scratch, body)
                            c.processes[lo:lo] = scratch.processes
                            return TraceEntry("Join", f"{me} joins {session}")

                        out.append(Redex("Join", f"join {me} on {p.chan}", join))
                        break
        return out

    if isinstance(p, PSend):
        if isinstance(p.chan, ChEnd):

            def send(c, k=k, p=p):
                sender = p.chan.participant
                to = eval_participant_ground(p.to)
                v = eval_value(p.expr)
                m = Message(sender, to, BVal(v))
                c.queues[p.chan.session] = c.queues.get(p.chan.session, ()) + (m,)
                _replace_slot(c, k, p.cont)
                return TraceEntry("Send", f"{p.chan} -> {to}", m)

            out.append(Redex("Send", f"send proc[{k}]", send))
        else:

            def ext(c, k=k, p=p):
                v = eval_value(p.expr)
                c.external.append((p.chan, v))
                _replace_slot(c, k, p.cont)
                return TraceEntry("ExtSend", f"{p.chan} <- {v}")

            out.append(Redex("ExtSend", f"external proc[{k}]", ext))
        return out

    if isinstance(p, PDeleg):
        if isinstance(p.chan, ChEnd) and isinstance(p.sent, ChEnd):

            def deleg(c, k=k, p=p):
                to = eval_participant_ground(p.to)
                m = Message(
                    p.chan.participant, to, BChan(p.sent.session, p.sent.participant)
                )
                c.queues[p.chan.session] = c.queues.get(p.chan.session, ()) + (m,)
                _replace_slot(c, k, p.cont)
                return TraceEntry("Send", f"delegate {p.sent} to {to}", m)

            out.append(Redex("Send", f"delegate proc[{k}]", deleg))
        return out

    if isinstance(p, PSel):
        if isinstance(p.chan, ChEnd):

            def label(c, k=k, p=p):
                to = eval_participant_ground(p.to)
                m = Message(p.chan.participant, to, BLabel(p.label))
                c.queues[p.chan.session] = c.queues.get(p.chan.session, ()) + (m,)
                _replace_slot(c, k, p.cont)
                return TraceEntry("Label", f"{p.chan} -> {to}: {p.label}", m)

            out.append(Redex("Label", f"select proc[{k}]", label))
        return out

    if isinstance(p, PRecv) and isinstance(p.chan, ChEnd):
        queue = cfg.queues.get(p.chan.session, ())
        frm = eval_participant_ground(p.frm)
        idx = _first_match(queue, frm, p.chan.participant)
        if idx is not None and isinstance(queue[idx].body, BVal):

            def recv(c, k=k, p=p, idx=idx, frm=frm):
                q = c.queues[p.chan.session]
                m = q[idx]
                c.queues[p.chan.session] = q[:idx] + q[idx + 1 :]
                body = proc_subst_value(p.cont, p.var, m.body.expr)
                _replace_slot(c, k, body)
                return TraceEntry("Recv", f"{p.chan} <- {frm}", m)

            out.append(Redex("Recv", f"receive proc[{k}]", recv))
        return out

    if isinstance(p, PCatch) and isinstance(p.chan, ChEnd):
        queue = cfg.queues.get(p.chan.session, ())
        frm = eval_participant_ground(p.frm)
        idx = _first_match(queue, frm, p.chan.participant)
        if idx is not None and isinstance(queue[idx].body, BChan):

            def catch(c, k=k, p=p, idx=idx, frm=frm):
                q = c.queues[p.chan.session]
                m = q[idx]
                c.queues[p.chan.session] = q[:idx] + q[idx + 1 :]
                got = ChEnd(m.body.session, m.body.participant)
                body = proc_subst_channel(p.cont, p.bind, got)
                _replace_slot(c, k, body)
                return TraceEntry("Recv", f"{p.chan} catches {got}", m)

            out.append(Redex("Recv", f"catch proc[{k}]", catch))
        return out

    if isinstance(p, PBra) and isinstance(p.chan, ChEnd):
        queue = cfg.queues.get(p.chan.session, ())
        frm = eval_participant_ground(p.frm)
        idx = _first_match(queue, frm, p.chan.participant)
        if idx is not None and isinstance(queue[idx].body, BLabel):
            label = queue[idx].body.label
            branch = dict(p.branches).get(label)
            if branch is not None:

                def take(c, k=k, p=p, idx=idx, branch=branch, label=label):
                    q = c.queues[p.chan.session]
                    m = q[idx]
                    c.queues[p.chan.session] = q[:idx] + q[idx + 1 :]
                    _replace_slot(c, k, branch)
                    return TraceEntry("Branch", f"{p.chan} takes {label}", m)

                out.append(Redex("Branch", f"branch proc[{k}]", take))
        return out

    return out


def _internal_step(cfg: Configuration, k: int, p: Process) -> Optional[Process]:
    """Head step inside an application context ([App])."""
    if isinstance(p, PApp):
        try:
            n = eval_ground(p.arg)
        except Exception:
            return None
        if isinstance(p.proc, PPRec):
            if n == 0:
                return p.proc.base
            unrolled = proc_subst_index(p.proc.body, p.proc.ivar, ILit(n - 1))
            return proc_subst_var(unrolled, p.proc.pvar, PApp(p.proc, ILit(n - 1)))
        inner = _internal_step(cfg, k, p.proc)
        if inner is None:
            return None
        return PApp(inner, p.arg)
    if isinstance(p, PMu):
        return proc_subst_var(p.body, p.var, p)
    return None


# ---------------------------------------------------------------------------
# Schedulers and the runner


@dataclass(frozen=True)
class RandomScheduler:
    seed: int


@dataclass(frozen=True)
class RoundRobin:
    pass


@dataclass(frozen=True)
class Exhaustive:
    max_depth: int = 200


Scheduler = Union[RandomScheduler, RoundRobin, Exhaustive]


@dataclass
class RunResult:
    verdict: str  # Done | Stuck | FuelOut
    trace: list[TraceEntry]
    config: Configuration

    @property
    def external(self) -> dict[str, Expr]:
        return external_outputs(self.config)


def external_outputs(cfg: Configuration) -> dict[str, Expr]:
    """Values sent on channels never received within the configuration."""
    out: dict[str, Expr] = {}
    for chan, v in cfg.external:
        out[chan] = v
    return out


class Monitor:
    """Observer interface for per-step hooks."""

    def on_init(self, cfg: Configuration, session: str, g: GlobalType, parts) -> None:
        pass

    def on_step(self, cfg: Configuration, entry: TraceEntry) -> None:
        pass


def run(
    cfg: Configuration,
    scheduler: Scheduler = RandomScheduler(0),
    fuel: int = 100_000,
    monitors: tuple[Monitor, ...] = (),
) -> RunResult:
    trace: list[TraceEntry] = []
    rng = (
        random.Random(scheduler.seed)
        if isinstance(scheduler, RandomScheduler)
        else None
    )
    rr = 0
    for _ in range(fuel):
        if cfg.is_done():
            return RunResult("Done", trace, cfg)
        redexes = enabled_redexes(cfg)
        if not redexes:
            return RunResult("Stuck", trace, cfg)
        if rng is not None:
            chosen = rng.choice(redexes)
        elif isinstance(scheduler, RoundRobin):
            chosen = redexes[rr % len(redexes)]
            rr += 1
        else:
            chosen = redexes[0]
        before_sessions = set(cfg.queues)
        entry = chosen.apply(cfg)
        if entry is None:
            continue
        trace.append(entry)
        if entry.rule == "Init":
            session = entry.detail.split(" -> ")[1].split(" ")[0]
            g = cfg.session_types.get(session)
            if g is not None:
                for m in monitors:
                    m.on_init(cfg, session, g, None)
        for m in monitors:
            m.on_step(cfg, entry)
    return RunResult("FuelOut", trace, cfg)


def explore(
    cfg: Configuration, max_depth: int = 200, limit: int = 20000
) -> list[RunResult]:
    """Exhaustively explore all interleavings to a bounded depth."""
    results: list[RunResult] = []
    budget = [limit]

    def rec(c: Configuration, trace: list[TraceEntry], depth: int) -> None:
        if budget[0] <= 0:
            return
        if c.is_done():
            budget[0] -= 1
            results.append(RunResult("Done", trace, c))
            return
        if depth >= max_depth:
            budget[0] -= 1
            results.append(RunResult("FuelOut", trace, c))
            return
        redexes = enabled_redexes(c)
        if not redexes:
            budget[0] -= 1
            results.append(RunResult("Stuck", trace, c))
            return
        for r in redexes:
            c2 = c.copy()
            entry = r.apply(c2)
            rec(c2, trace + ([entry] if entry else []), depth + 1)

    rec(cfg.copy(), [], 0)
    return results


# ---------------------------------------------------------------------------
# Session fidelity monitor


class FidelityError(MpstError):
    pass


def _cursor_head(t: LocalType) -> LocalType:
    from .terms import subst_tvar

    t = whnf(t)
    while isinstance(t, LMu):
        t = whnf(subst_tvar(t.body, t.var, t))
    return t


class FidelityMonitor(Monitor):
    """Walks each endpoint's projected local type along the observed trace."""

    def __init__(self) -> None:
        self.cursors: dict[tuple[str, Participant], LocalType] = {}

    def on_init(self, cfg, session, g, parts) -> None:
        ground = normal_form(g)
        for p in pid_ground(ground):
            self.cursors[(session, p)] = normal_form(project(ground, p))

    def _advance_send(self, session, sender, receiver, is_label, label=None) -> None:
        key = (session, sender)
        if key not in self.cursors:
            raise FidelityError(diag("Fidelity", f"unknown endpoint {key}"))
        t = _cursor_head(self.cursors[key])
        if is_label:
            if not isinstance(t, LSel) or eval_participant_ground(t.to) != receiver:
                raise FidelityError(
                    diag("Fidelity", f"{sender} selected toward {receiver}, type {t}")
                )
            bmap = dict(t.branches)
            if label not in bmap:
                raise FidelityError(diag("Fidelity", f"label {label} not offered"))
            self.cursors[key] = bmap[label]
        else:
            if not isinstance(t, LOut) or eval_participant_ground(t.to) != receiver:
                raise FidelityError(
                    diag("Fidelity", f"{sender} sent toward {receiver}, type {t}")
                )
            self.cursors[key] = t.cont

    def _advance_recv(self, session, receiver, sender, is_label, label=None) -> None:
        key = (session, receiver)
        if key not in self.cursors:
            raise FidelityError(diag("Fidelity", f"unknown endpoint {key}"))
        t = _cursor_head(self.cursors[key])
        if is_label:
            if not isinstance(t, LBra) or eval_participant_ground(t.frm) != sender:
                raise FidelityError(
                    diag("Fidelity", f"{receiver} branched from {sender}, type {t}")
                )
            bmap = dict(t.branches)
            if label not in bmap:
                raise FidelityError(diag("Fidelity", f"label {label} not expected"))
            self.cursors[key] = bmap[label]
        else:
            if not isinstance(t, LIn) or eval_participant_ground(t.frm) != sender:
                raise FidelityError(
                    diag("Fidelity", f"{receiver} received from {sender}, type {t}")
                )
            self.cursors[key] = t.cont

    def on_step(self, cfg, entry: TraceEntry) -> None:
        m = entry.message
        if m is None:
            return
        session = self._session_of(cfg, entry)
        if session is None:
            return
        if entry.rule in ("Send", "Label"):
            self._advance_send(
                session, m.sender, m.receiver, entry.rule == "Label",
                m.body.label if isinstance(m.body, BLabel) else None,
            )
        elif entry.rule in ("Recv", "Branch"):
            self._advance_recv(
                session, m.receiver, m.sender, entry.rule == "Branch",
                m.body.label if isinstance(m.body, BLabel) else None,
            )

    def _session_of(self, cfg, entry: TraceEntry) -> Optional[str]:
        text = entry.detail
        if "[" in text:
            return text.split("[")[0].split(" ")[-1]
        return None

    def all_finished(self) -> bool:
        return all(isinstance(_cursor_head(t), LEnd) for t in self.cursors.values())


# ---------------------------------------------------------------------------
# Subject reduction harness


class SubjectReductionError(MpstError):
    pass


class SubjectReductionMonitor(Monitor):
    """After every step, the configuration must still type, with the tracked
    session environment advanced by the environment reduction relation."""

    def __init__(self, base_env: StdEnv = StdEnv()) -> None:
        self.base_env = base_env
        self.delta: dict[str, SessionEnv] = {}
        self.checks = 0

    def on_init(self, cfg, session, g, parts) -> None:
        ground = normal_form(g)
        entries = []
        for p in sorted(pid_ground(ground), key=str):
            entries.append(
                (ChEnd(session, p), GLocal(normal_form(project(ground, p))))
            )
        self.delta[session] = SessionEnv(tuple(entries))

    def _advance(self, session: str, entry: TraceEntry) -> None:
        d = self.delta.get(session)
        if d is None:
            return
        m = entry.message
        base = env_normalise(d)
        successors = env_step(base)
        wanted: Optional[SessionEnv] = None
        if entry.rule == "Send":
            for rule, d2 in successors:
                if rule == "send" and self._moved(base, d2, ChEnd(session, m.sender)):
                    wanted = d2
                    break
        elif entry.rule == "Recv":
            self_recv = m.sender == m.receiver
            for rule, d2 in successors:
                if self_recv and rule == "recv-self":
                    if self._moved(base, d2, ChEnd(session, m.receiver)):
                        wanted = d2
                        break
                elif not self_recv and rule == "recv":
                    if self._moved(base, d2, ChEnd(session, m.receiver)) and self._moved(
                        base, d2, ChEnd(session, m.sender)
                    ):
                        wanted = d2
                        break
        elif entry.rule == "Label":
            for rule, d2 in successors:
                if rule == f"select {m.body.label}" and self._moved(
                    base, d2, ChEnd(session, m.sender)
                ):
                    wanted = d2
                    break
        elif entry.rule == "Branch":
            for rule, d2 in successors:
                if rule == f"branch {m.body.label}" and self._moved(
                    base, d2, ChEnd(session, m.receiver)
                ):
                    wanted = d2
                    break
        else:
            return
        if wanted is None:
            raise SubjectReductionError(
                diag(
                    "SubjectReduction",
                    f"no environment reduction matches {entry.rule} {entry.detail}",
                )
            )
        self.delta[session] = env_normalise(wanted)

    @staticmethod
    def _moved(d1: SessionEnv, d2: SessionEnv, c: ChEnd) -> bool:
        return d1.lookup(c) != d2.lookup(c)

    def on_step(self, cfg, entry: TraceEntry) -> None:
        m = entry.message
        if m is not None:
            session = entry.detail.split("[")[0].split(" ")[-1]
            self._advance(session, entry)
        self._recheck(cfg)

    def _recheck(self, cfg: Configuration) -> None:
        env = self.base_env
        for name, g in cfg.chan_types.items():
            if env.lookup_sort(name) is None:
                env = env.add(EntrySort(name, PShared(g)))
        pieces: list[Process] = list(cfg.processes)
        for s, msgs in cfg.queues.items():
            pieces.append(PQueue(s, msgs))
        tau = check_process(env, par_all(pieces), Runtime(frozenset(cfg.queues)))
        composed = env_normalise(tau.env)  # type: ignore[attr-defined]
        tracked = SessionEnv()
        for d in self.delta.values():
            tracked = SessionEnv(tracked.entries + d.entries)
        live = {
            c: t
            for c, t in composed.entries
            if isinstance(c, ChEnd) and c.session in self.delta
        }
        from .terms import LEnd

        stray = set(live) - {c for c, _ in tracked.entries}
        if stray:
            raise SubjectReductionError(
                diag("SubjectReduction", f"untracked endpoints {sorted(map(str, stray))}")
            )
        for c, want in tracked.entries:
            got = live.get(c) or GLocal(LEnd())
            # runtime typing includes subsumption, so the synthesised type
            # needs to inhabit the tracked one, not equal it
            if not conforms_env(
                env, SessionEnv(((c, got),)), SessionEnv(((c, want),))
            ):
                raise SubjectReductionError(
                    diag(
                        "SubjectReduction",
                        f"endpoint {c}: configuration types as {got}, "
                        f"environment tracks {want}",
                    )
                )
        for s in self.delta:
            ok, why = coherent(env_normalise(self.delta[s]), s)
            if not ok:
                raise SubjectReductionError(
                    diag("SubjectReduction", f"session {s} incoherent: {why}")
                )
        self.checks += 1
