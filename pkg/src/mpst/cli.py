"""Batch front end: parse, kind, project, normalize, equiv, typecheck,
simulate, examples.

Exit codes: 0 success, 1 failure, 2 undecided, 3 usage error. All output is
deterministic for fixed inputs and flags; `--json` switches machine-readable
formats where available. An optional ./mpst.conf (plain key=value lines) sets
default fuel and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checker import CheckError, check_process, check_simple_and_welllinked
from .diagnostics import MpstError, UndecidedError
from .equivalence import EquivTrace, family_equiv, type_equiv
from .indices import IndexContext, enumerate_sort, member, Invalid
from .kinds import kind_type
from .machine import (
    Exhaustive,
    FidelityMonitor,
    RandomScheduler,
    RoundRobin,
    SubjectReductionMonitor,
    explore,
    load,
    run,
)
from .projection import project, simplify_projection
from .protocols import ALL as PROTOCOLS
from .reduce import normal_form
from .surface import (
    GlobalDecl,
    LocalDecl,
    ParseError,
    ProcDecl,
    Parser,
    SharedChanDecl,
    SourceFile,
    export_json,
    parse,
    print_decl,
    print_proc,
    print_sort,
    print_type,
)
from .terms import (
    EntryIndex,
    EntrySort,
    ILit,
    IVar,
    KPi,
    PLeq,
    PShared,
    SNat,
    StdEnv,
    subst_index,
)

OK, FAIL, UNDECIDED_EXIT, USAGE = 0, 1, 2, 3


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def _config_defaults() -> dict:
    out = {"fuel": 100000, "seed": 0}
    cfg = Path("mpst.conf")
    if cfg.exists():
        for line in cfg.read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, _, value = line.partition("=")
            if key.strip() in out:
                out[key.strip()] = int(value.strip())
    return out


def _parse_at(pairs: list[str]) -> dict[str, int]:
    out = {}
    for p in pairs:
        if "=" not in p:
            raise SystemExit(USAGE)
        k, _, v = p.partition("=")
        out[k] = int(v)
    return out


def _instantiate(decl, at: dict[str, int]):
    body = decl.body
    leftover = []
    for name, sort in decl.params:
        if name in at:
            body = (
                subst_index(body, name, ILit(at[name]))
                if not isinstance(decl, ProcDecl)
                else _proc_subst(body, name, at[name])
            )
        else:
            leftover.append((name, sort))
    return body, leftover


def _proc_subst(body, name, value):
    from .terms import proc_subst_index

    return proc_subst_index(body, name, ILit(value))


def _env_for(src: SourceFile, params) -> StdEnv:
    env = StdEnv()
    for name, sort in params:
        env = env.add(EntryIndex(name, sort))
    for d in src.decls:
        if isinstance(d, SharedChanDecl):
            ref = src.lookup(d.global_ref)
            if isinstance(ref, GlobalDecl) and not ref.params:
                env = env.add(EntrySort(d.name, PShared(ref.body)))
    return env


def cmd_parse(args) -> int:
    try:
        src = parse(_read(args.file))
    except ParseError as e:
        print(e.diag, file=sys.stderr)
        return FAIL
    if args.json:
        for d in src.decls:
            if isinstance(d, (GlobalDecl, LocalDecl)):
                sys.stdout.buffer.write(export_json(d.body))
                sys.stdout.write("\n")
    else:
        for d in src.decls:
            print(print_decl(d))
    return OK


def cmd_kind(args) -> int:
    try:
        src = parse(_read(args.file))
    except ParseError as e:
        print(e.diag, file=sys.stderr)
        return FAIL
    status = OK
    for d in src.decls:
        if args.decl and d.name != args.decl:
            continue
        if not isinstance(d, (GlobalDecl, LocalDecl)):
            continue
        env = _env_for(src, d.params)
        try:
            k = kind_type(env, d.body)
            for name, sort in reversed(d.params):
                k = KPi(name, sort, k)
            print(f"{d.name} : {k}")
        except UndecidedError as e:
            print(f"{d.name} : undecided - {e.diag}", file=sys.stderr)
            status = max(status, UNDECIDED_EXIT)
        except MpstError as e:
            print(f"{d.name} : {e.diag}", file=sys.stderr)
            status = FAIL
    return status


def cmd_project(args) -> int:
    try:
        src = parse(_read(args.file))
    except ParseError as e:
        print(e.diag, file=sys.stderr)
        return FAIL
    decl = src.lookup(args.decl)
    if not isinstance(decl, GlobalDecl):
        print(f"no global declaration {args.decl!r}", file=sys.stderr)
        return USAGE
    at = _parse_at(args.at or [])
    body, leftover = _instantiate(decl, at)
    env = _env_for(src, leftover)
    role = Parser(args.role).participant()
    try:
        t = project(body, role, IndexContext.from_env(env))
        if not leftover:
            t = normal_form(t)
        if args.simplify:
            t = simplify_projection(t, IndexContext.from_env(env))
    except MpstError as e:
        print(e.diag, file=sys.stderr)
        return FAIL
    if args.json:
        sys.stdout.buffer.write(export_json(t))
        sys.stdout.write("\n")
    else:
        print(print_type(t))
    return OK


def cmd_normalize(args) -> int:
    try:
        src = parse(_read(args.file))
    except ParseError as e:
        print(e.diag, file=sys.stderr)
        return FAIL
    decl = src.lookup(args.decl)
    if not isinstance(decl, (GlobalDecl, LocalDecl)):
        print(f"no type declaration {args.decl!r}", file=sys.stderr)
        return USAGE
    body, leftover = _instantiate(decl, _parse_at(args.at or []))
    try:
        t = normal_form(body)
    except MpstError as e:
        print(e.diag, file=sys.stderr)
        return FAIL
    if args.json:
        sys.stdout.buffer.write(export_json(t))
        sys.stdout.write("\n")
    else:
        print(print_type(t))
    return OK


def cmd_equiv(args) -> int:
    try:
        src = parse(_read(args.file))
    except ParseError as e:
        print(e.diag, file=sys.stderr)
        return FAIL
    left, right = src.lookup(args.left), src.lookup(args.right)
    if left is None or right is None:
        print("both --left and --right must name declarations", file=sys.stderr)
        return USAGE
    if args.domain:
        lo, _, hi = args.domain.partition("..")
        box = range(int(lo), int(hi) + 1)
        params = list(left.params)
        vectors = []

        def fill(prefix):
            if len(prefix) == len(params):
                # keep vectors whose components satisfy the declared sorts,
                # with the other parameters fixed at their chosen values
                for (name, sort), v in zip(params, prefix):
                    ctx = IndexContext()
                    for (n2, _s2), v2 in zip(params, prefix):
                        if n2 != name:
                            ctx = ctx.bind(n2, SNat())
                            ctx = ctx.assume(PLeq(IVar(n2), ILit(v2)))
                            ctx = ctx.assume(PLeq(ILit(v2), IVar(n2)))
                    verdict = member(ctx, ILit(v), sort)
                    if isinstance(verdict, Invalid):
                        return
                vectors.append(tuple(prefix))
                return
            for v in box:
                fill(prefix + [v])

        fill([])
        verdict, trace = family_equiv(
            StdEnv(), params, left.body, right.body, vectors
        )
    else:
        env = _env_for(src, left.params)
        verdict, trace = type_equiv(env, left.body, right.body)
    if args.trace:
        for step in trace.steps:
            print(step)
    print(
        "equal" if verdict is True else "unequal" if verdict is False else "undecided"
    )
    if verdict is True:
        return OK
    return FAIL if verdict is False else UNDECIDED_EXIT


def cmd_typecheck(args) -> int:
    try:
        src = parse(_read(args.file))
    except ParseError as e:
        print(e.diag, file=sys.stderr)
        return FAIL
    at = _parse_at(args.at or [])
    env0 = _env_for(src, ())
    status = OK
    diags = []
    for d in src.decls:
        if not isinstance(d, ProcDecl):
            continue
        body, leftover = _instantiate(d, at)
        env = env0
        for name, sort in leftover:
            env = env.add(EntryIndex(name, sort))
        try:
            tau = check_process(env, body)
            print(f"{d.name} : {tau}")
        except UndecidedError as e:
            diags.append((d.name, e.diag))
            status = max(status, UNDECIDED_EXIT)
        except MpstError as e:
            diags.append((d.name, e.diag))
            status = FAIL
    for name, dg in diags:
        if args.json:
            print(json.dumps({"decl": name, **dg.to_json()}, sort_keys=True),
                  file=sys.stderr)
        else:
            print(f"{name}: {dg}", file=sys.stderr)
    return status


def cmd_simulate(args) -> int:
    defaults = _config_defaults()
    try:
        src = parse(_read(args.file))
    except ParseError as e:
        print(e.diag, file=sys.stderr)
        return FAIL
    decl = src.lookup(args.decl)
    if not isinstance(decl, ProcDecl):
        print(f"no process declaration {args.decl!r}", file=sys.stderr)
        return USAGE
    body, leftover = _instantiate(decl, _parse_at(args.at or []))
    if leftover:
        print(f"unbound parameters {[n for n, _ in leftover]}", file=sys.stderr)
        return USAGE
    chan_types = {}
    for d in src.decls:
        if isinstance(d, SharedChanDecl):
            ref = src.lookup(d.global_ref)
            if isinstance(ref, GlobalDecl):
                gbody = ref.body
                for name, _sort in ref.params:
                    if name in _parse_at(args.at or []):
                        gbody = subst_index(
                            gbody, name, ILit(_parse_at(args.at or [])[name])
                        )
                chan_types[d.name] = gbody
    seed = args.seed if args.seed is not None else defaults["seed"]
    fuel = args.fuel if args.fuel is not None else defaults["fuel"]
    monitors = []
    if args.check_sr:
        monitors.append(SubjectReductionMonitor())
    if args.fidelity:
        monitors.append(FidelityMonitor())
    cfg = load(body, chan_types)
    if args.scheduler == "exhaustive":
        results = explore(cfg, max_depth=fuel)
        bad = [r for r in results if r.verdict != "Done"]
        print(f"{len(results)} terminal states, {len(bad)} not Done")
        return OK if not bad else FAIL
    sched = RoundRobin() if args.scheduler == "rr" else RandomScheduler(seed)
    try:
        res = run(cfg, sched, fuel=fuel, monitors=tuple(monitors))
    except MpstError as e:
        print(e.diag, file=sys.stderr)
        return FAIL
    if args.trace_out:
        with open(args.trace_out, "w") as fh:
            for entry in res.trace:
                fh.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")
    print(f"{res.verdict} after {len(res.trace)} steps")
    for chan in sorted(res.external):
        print(f"{chan} = {res.external[chan]}")
    if res.verdict == "Stuck":
        for p in res.config.processes:
            print(f"  blocked: {print_proc(p)[:100]}", file=sys.stderr)
        return FAIL
    return OK if res.verdict == "Done" else FAIL


def cmd_examples(args) -> int:
    maker = PROTOCOLS.get(args.name)
    if maker is None:
        print(f"unknown example {args.name!r}; have {sorted(PROTOCOLS)}", file=sys.stderr)
        return USAGE
    params = _parse_at(args.params or [])
    try:
        if args.name == "mesh":
            proto = maker(params.get("n", 2), params.get("m", 2))
        elif args.name == "quote_request":
            proto = maker(params.get("n", 2))
        else:
            proto = maker(params.get("n", 2))
    except MpstError as e:
        print(e.diag, file=sys.stderr)
        return FAIL
    print(f"global {proto.name.capitalize()} = {print_type(proto.ground)}")
    print(f"channel a : <{proto.name.capitalize()}>")
    for role, proc in proto.roles.items():
        print(f"proc {role} = {print_proc(proc)}")
    print(f"proc System = {print_proc(proto.system)}")
    return OK


def main(argv=None) -> int:
    top = argparse.ArgumentParser(prog="mpst", description=__doc__)
    sub = top.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("parse", help="parse and pretty-print a file")
    p.add_argument("file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("kind", help="kind type declarations")
    p.add_argument("file")
    p.add_argument("--decl")
    p.set_defaults(fn=cmd_kind)

    p = sub.add_parser("project", help="project a global type onto a role")
    p.add_argument("file")
    p.add_argument("--decl", required=True)
    p.add_argument("--role", required=True)
    p.add_argument("--at", action="append")
    p.add_argument("--simplify", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_project)

    p = sub.add_parser("normalize", help="fully normalise a type declaration")
    p.add_argument("file")
    p.add_argument("--decl", required=True)
    p.add_argument("--at", action="append")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_normalize)

    p = sub.add_parser("equiv", help="decide type equivalence")
    p.add_argument("file")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--domain", help="finite range lo..hi for the parameters")
    p.add_argument("--trace", action="store_true")
    p.set_defaults(fn=cmd_equiv)

    p = sub.add_parser("typecheck", help="type all process declarations")
    p.add_argument("file")
    p.add_argument("--at", action="append")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_typecheck)

    p = sub.add_parser("simulate", help="execute a process declaration")
    p.add_argument("file")
    p.add_argument("--decl", required=True)
    p.add_argument("--at", action="append")
    p.add_argument("--seed", type=int)
    p.add_argument("--scheduler", choices=["random", "rr", "exhaustive"], default="random")
    p.add_argument("--fuel", type=int)
    p.add_argument("--trace", dest="trace_out", metavar="OUT.jsonl")
    p.add_argument("--check-sr", action="store_true")
    p.add_argument("--fidelity", action="store_true")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("examples", help="emit a generated example protocol")
    p.add_argument("name")
    p.add_argument("--params", action="append")
    p.set_defaults(fn=cmd_examples)

    try:
        args = top.parse_args(argv)
    except SystemExit as e:
        return USAGE if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else USAGE
    except BrokenPipeError:
        return OK


if __name__ == "__main__":
    sys.exit(main())
