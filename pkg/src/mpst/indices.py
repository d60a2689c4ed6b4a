"""Index arithmetic and the semantic judgements over it.

Provides ground evaluation of index expressions, a polynomial normal form
(used by type reduction for the symbolic successor view), and the decision
procedure for entailment: a Fourier-Motzkin elimination over the rationals
with integer tightening, restricted to the linear fragment. Nonlinear
subterms (variable products, literal bases raised to open exponents) are
abstracted as fresh nonnegative unknowns, which keeps Valid answers sound;
potential counterexamples are verified by exact evaluation before being
reported.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Iterable, Optional, Union

from .diagnostics import KindError, NegativeResult, diag
from .terms import (
    ILit,
    IOp,
    IVar,
    IndexExpr,
    IndexSort,
    PAnd,
    PLeq,
    PTrue,
    Prop,
    SConstr,
    SEmpty,
    SNat,
    StdEnv,
    EntryIndex,
    EntryPred,
    as_range,
    conj,
    free_ivars,
    prop_conjuncts,
    subst_iexpr,
    subst_prop,
)


# ---------------------------------------------------------------------------
# Ground evaluation


def eval_ground(e: IndexExpr) -> int:
    """Evaluate a closed index expression in the integers."""
    if isinstance(e, ILit):
        return e.value
    if isinstance(e, IVar):
        raise KindError(diag("Op", f"free index variable {e.name} in ground evaluation"))
    l, r = eval_ground(e.left), eval_ground(e.right)
    if e.op == "+":
        return l + r
    if e.op == "-":
        return l - r
    if e.op == "*":
        return l * r
    if r < 0:
        raise NegativeResult(diag("Op", f"negative exponent {r}"))
    return l**r


def eval_nat(e: IndexExpr) -> int:
    """Evaluate where the caller demands a natural number."""
    v = eval_ground(e)
    if v < 0:
        raise NegativeResult(diag("Op", f"{e} evaluates to {v} < 0"))
    return v


def is_ground(e: IndexExpr) -> bool:
    return not free_ivars(e)


# ---------------------------------------------------------------------------
# Polynomial normal form
#
# A polynomial is a mapping from monomials to integer coefficients. Monomials
# are sorted tuples of (atom, power); an atom is a variable or an opaque
# power term whose exponent is itself a polynomial key.

Mono = tuple  # tuple[tuple[atom, int], ...]
Poly = dict  # dict[Mono, int]

_ONE: Mono = ()


def _poly_key(p: Poly) -> tuple:
    return tuple(sorted(p.items()))


def _padd(a: Poly, b: Poly, sign: int = 1) -> Poly:
    out = dict(a)
    for m, c in b.items():
        out[m] = out.get(m, 0) + sign * c
        if out[m] == 0:
            del out[m]
    return out


def _pmul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            atoms: dict = {}
            for at, pw in itertools.chain(m1, m2):
                atoms[at] = atoms.get(at, 0) + pw
            m = tuple(sorted(atoms.items()))
            out[m] = out.get(m, 0) + c1 * c2
            if out[m] == 0:
                del out[m]
    return out


def to_poly(e: IndexExpr) -> Poly:
    if isinstance(e, ILit):
        return {_ONE: e.value} if e.value else {}
    if isinstance(e, IVar):
        return {((("v", e.name), 1),): 1}
    if e.op == "+":
        return _padd(to_poly(e.left), to_poly(e.right))
    if e.op == "-":
        return _padd(to_poly(e.left), to_poly(e.right), -1)
    if e.op == "*":
        return _pmul(to_poly(e.left), to_poly(e.right))
    # literal base to a (possibly open) exponent
    base = e.left.value  # type: ignore[union-attr]
    ep = to_poly(e.right)
    if set(ep) <= {_ONE}:
        k = ep.get(_ONE, 0)
        if k < 0:
            raise NegativeResult(diag("Op", f"negative exponent {k}"))
        return {_ONE: base**k} if base**k else {}
    return {((("p", base, _poly_key(ep)), 1),): 1}


def from_poly(p: Poly) -> IndexExpr:
    """Rebuild a canonical expression from a polynomial."""

    def mono_expr(m: Mono, coeff: int) -> IndexExpr:
        factors: list[IndexExpr] = []
        if coeff != 1 or not m:
            factors.append(ILit(coeff))
        for atom, power in m:
            if atom[0] == "v":
                base: IndexExpr = IVar(atom[1])
            else:
                base = IOp("^", ILit(atom[1]), from_poly(dict(atom[2])))
            for _ in range(power):
                factors.append(base)
        out = factors[0]
        for f in factors[1:]:
            out = IOp("*", out, f)
        return out

    pos = sorted(((m, c) for m, c in p.items() if c > 0), key=lambda mc: repr(mc[0]))
    neg = sorted(((m, -c) for m, c in p.items() if c < 0), key=lambda mc: repr(mc[0]))
    if not pos and not neg:
        return ILit(0)
    if pos:
        out = mono_expr(*pos[0])
        for m, c in pos[1:]:
            out = IOp("+", out, mono_expr(m, c))
    else:
        out = ILit(0)
    for m, c in neg:
        out = IOp("-", out, mono_expr(m, c))
    return out


def canon(e: IndexExpr) -> IndexExpr:
    return from_poly(to_poly(e))


def successor_view(e: IndexExpr) -> Optional[IndexExpr]:
    """If ``e`` is (syntactically, after normalisation) a successor c+1+...,
    return its predecessor; None otherwise."""
    p = to_poly(e)
    c = p.get(_ONE, 0)
    if c >= 1:
        q = dict(p)
        if c == 1:
            del q[_ONE]
        else:
            q[_ONE] = c - 1
        return from_poly(q)
    return None


def iexpr_eq_syntactic(a: IndexExpr, b: IndexExpr) -> bool:
    return _poly_key(to_poly(a)) == _poly_key(to_poly(b))


# ---------------------------------------------------------------------------
# Verdicts and contexts


@dataclass(frozen=True)
class Valid:
    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class Invalid:
    witness: dict

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True)
class Undecided:
    reason: str = ""

    def __bool__(self) -> bool:
        return False


Verdict = Union[Valid, Invalid, Undecided]


@dataclass(frozen=True)
class IndexContext:
    bindings: tuple[tuple[str, IndexSort], ...] = ()
    assumed: tuple[Prop, ...] = ()

    def bind(self, name: str, sort: IndexSort) -> "IndexContext":
        return IndexContext(self.bindings + ((name, sort),), self.assumed)

    def assume(self, p: Prop) -> "IndexContext":
        return IndexContext(self.bindings, self.assumed + (p,))

    def sort_of(self, name: str) -> Optional[IndexSort]:
        for n, s in reversed(self.bindings):
            if n == name:
                return s
        return None

    @staticmethod
    def from_env(env: StdEnv) -> "IndexContext":
        ctx = IndexContext()
        for entry in env.entries:
            if isinstance(entry, EntryIndex):
                ctx = ctx.bind(entry.name, entry.isort)
            elif isinstance(entry, EntryPred):
                ctx = ctx.assume(entry.prop)
        return ctx


def sort_constraints(var: str, sort: IndexSort) -> list[PLeq]:
    """The conjuncts a value of this sort satisfies, over ``var``."""
    if isinstance(sort, SNat):
        return [PLeq(ILit(0), IVar(var))]
    if isinstance(sort, SEmpty):
        return [PLeq(ILit(1), ILit(0))]  # unsatisfiable
    inner = sort_constraints(var, sort.base)
    own = [
        PLeq(
            subst_iexpr(c.left, sort.var, IVar(var)),
            subst_iexpr(c.right, sort.var, IVar(var)),
        )
        for c in prop_conjuncts(sort.constraint)
    ]
    return inner + own


def context_constraints(ctx: IndexContext) -> list[PLeq]:
    out: list[PLeq] = []
    for v, s in ctx.bindings:
        out.extend(sort_constraints(v, s))
    for p in ctx.assumed:
        out.extend(prop_conjuncts(p))
    return out


# ---------------------------------------------------------------------------
# Linear rows and Fourier-Motzkin elimination
#
# A row encodes sum(coeff_i * unknown_i) <= const. Nonlinear monomials become
# opaque unknowns, each known to be nonnegative (and >= 1 for power atoms).


def _rows_of(leq: PLeq, atoms: dict) -> Optional[dict]:
    try:
        p = _padd(to_poly(leq.left), to_poly(leq.right), -1)  # left - right <= 0
    except NegativeResult:
        return None
    row: dict = {}
    const = 0
    for m, c in p.items():
        if m == _ONE:
            const += c
        else:
            atoms.setdefault(m, len(atoms))
            row[m] = row.get(m, 0) + c
    row["#const"] = -const  # sum coeff*m <= -const
    return row


def _tighten(row: dict) -> dict:
    coeffs = [abs(c) for m, c in row.items() if m != "#const"]
    if not coeffs:
        return row
    g = 0
    for c in coeffs:
        g = gcd(g, c)
    if g <= 1:
        return row
    out = {m: c // g for m, c in row.items() if m != "#const"}
    const = row["#const"]
    out["#const"] = const // g if const >= 0 else -((-const + g - 1) // g)
    return out


def _fm_unsat(rows: list[dict], unknowns: list) -> bool:
    """True when the row system has no rational solution (hence no integer
    one). Rows use monomial keys; '#const' holds the right-hand side."""
    rows = [_tighten(dict(r)) for r in rows]
    for u in unknowns:
        lows, highs, rest = [], [], []
        for r in rows:
            c = r.get(u, 0)
            if c > 0:
                highs.append(r)
            elif c < 0:
                lows.append(r)
            else:
                rest.append(r)
        new_rows = rest
        for hi in highs:
            for lo in lows:
                a, b = hi[u], -lo[u]
                combined: dict = {}
                for m in set(hi) | set(lo):
                    if m in ("#const",):
                        continue
                    if m == u:
                        continue
                    combined[m] = b * hi.get(m, 0) + a * lo.get(m, 0)
                    if combined[m] == 0:
                        del combined[m]
                combined["#const"] = b * hi["#const"] + a * lo["#const"]
                new_rows.append(_tighten(combined))
        rows = new_rows
        for r in rows:
            if all(m == "#const" for m in r) and r["#const"] < 0:
                return True
    return any(
        all(m == "#const" for m in r) and r["#const"] < 0 for r in rows
    )


def _eval_leq(leq: PLeq, assign: dict[str, int]) -> bool:
    def ev(e: IndexExpr) -> int:
        for v, n in assign.items():
            e = subst_iexpr(e, v, ILit(n) if n >= 0 else IOp("-", ILit(0), ILit(-n)))
        return eval_ground(e)

    try:
        return ev(leq.left) <= ev(leq.right)
    except NegativeResult:
        return False


def _search_witness(
    variables: list[str], constraints: list[PLeq], limit: int = 24
) -> Optional[dict[str, int]]:
    """Bounded search for an integer point satisfying all constraints."""
    if not variables:
        return {} if all(_eval_leq(c, {}) for c in constraints) else None
    los: dict[str, int] = {v: 0 for v in variables}
    his: dict[str, int] = {}
    for c in constraints:
        # v <= ground  /  ground <= v give box hints
        if isinstance(c.left, IVar) and is_ground(c.right):
            v = c.left.name
            if v in los:
                his[v] = min(his.get(v, 10**9), eval_ground(c.right))
        if isinstance(c.right, IVar) and is_ground(c.left):
            v = c.right.name
            if v in los:
                los[v] = max(los[v], eval_ground(c.left))

    def rec(i: int, assign: dict[str, int]) -> Optional[dict[str, int]]:
        if i == len(variables):
            return dict(assign) if all(_eval_leq(c, assign) for c in constraints) else None
        v = variables[i]
        lo = los[v]
        hi = min(his.get(v, lo + limit), lo + limit)
        for n in range(lo, hi + 1):
            assign[v] = n
            got = rec(i + 1, assign)
            if got is not None:
                return got
        del assign[v]
        return None

    return rec(0, {})


def _has_nonlinear(leqs: Iterable[PLeq]) -> bool:
    for leq in leqs:
        try:
            for p in (to_poly(leq.left), to_poly(leq.right)):
                for m in p:
                    if m == _ONE:
                        continue
                    if len(m) > 1 or m[0][1] > 1 or m[0][0][0] == "p":
                        return True
        except NegativeResult:
            return True
    return False


def entails(ctx: IndexContext, prop: Prop) -> Verdict:
    """Decide whether every assignment satisfying ``ctx`` satisfies ``prop``."""
    goal = list(prop_conjuncts(prop))
    if not goal:
        return Valid()
    assumptions = context_constraints(ctx)
    variables = sorted(
        set().union(*(free_ivars(c.left) | free_ivars(c.right) for c in assumptions + goal))
        if assumptions + goal
        else set()
    )
    unbound = [v for v in variables if ctx.sort_of(v) is None]
    if unbound:
        raise KindError(diag("Entails", f"unbound index variables {unbound}"))

    if not variables:
        ok = all(_eval_leq(c, {}) for c in goal)
        return Valid() if ok else Invalid({})

    # Validity pass first (cheap): every negated conjunct must be rationally
    # unsatisfiable together with the assumptions.
    nonlinear = _has_nonlinear(assumptions + goal)
    failing: list[PLeq] = []
    for g in goal:
        negated = PLeq(IOp("+", g.right, ILit(1)), g.left)  # right+1 <= left
        atoms: dict = {}
        rows = []
        bad = False
        for leq in assumptions + [negated]:
            row = _rows_of(leq, atoms)
            if row is None:
                bad = True
                break
            rows.append(row)
        if bad:
            failing.append(g)
            continue
        # opaque monomials are at least 0; power atoms at least 1
        for m in list(atoms):
            base_row = {m: -1, "#const": 0}
            if len(m) == 1 and m[0][0][0] == "p" and m[0][0][1] >= 1:
                base_row["#const"] = -1
            rows.append(base_row)
        if not _fm_unsat(rows, sorted(atoms, key=repr)):
            failing.append(g)
    if not failing:
        return Valid()

    # Refutation pass: look for an exact integer counterexample.
    for g in failing:
        negated = PLeq(IOp("+", g.right, ILit(1)), g.left)
        witness = _search_witness(variables, assumptions + [negated])
        if witness is not None:
            return Invalid(witness)
    return Undecided(
        "nonlinear fragment" if nonlinear else "no integer witness within bounds"
    )


def member(ctx: IndexContext, e: IndexExpr, sort: IndexSort) -> Verdict:
    """Decide the sort-membership judgement for ``e``."""
    if isinstance(sort, SEmpty):
        return Invalid({})
    fresh = "%m"
    cs = sort_constraints(fresh, sort)
    goal = conj(
        PLeq(ILit(0), e),
        *[
            PLeq(
                subst_iexpr(c.left, fresh, e),
                subst_iexpr(c.right, fresh, e),
            )
            for c in cs
        ],
    )
    return entails(ctx, goal)


def predecessor_sort(sort: IndexSort) -> IndexSort:
    """The sort of predecessors: [0..e] becomes [0..e-1] (empty at zero).

    ``nat`` is its own predecessor sort, which the dependent-product sugar
    relies on. Sorts without a recognisable upper bound are rejected.
    """
    if isinstance(sort, SNat):
        return SNat()
    if isinstance(sort, SEmpty):
        return SEmpty()
    hi = as_range(sort)
    if hi is not None and is_ground(hi):
        n = eval_ground(hi)
        if n <= 0:
            return SEmpty()
        return SConstr(sort.var, sort.base, PLeq(IVar(sort.var), ILit(n - 1)))
    shifted = []
    found = False
    for c in prop_conjuncts(sort.constraint):
        if c.left == IVar(sort.var):
            shifted.append(PLeq(c.left, IOp("-", c.right, ILit(1))))
            found = True
        else:
            shifted.append(c)
    if not found:
        raise KindError(
            diag("Pred", f"sort {sort} has no recognisable upper bound to shift")
        )
    return SConstr(sort.var, sort.base, conj(*shifted))


INFINITE = "infinite"


def enumerate_sort(sort: IndexSort, ctx: IndexContext) -> Union[list[int], str]:
    """Exact enumeration of a ground-bounded sort, or INFINITE."""
    if isinstance(sort, SNat):
        return INFINITE
    if isinstance(sort, SEmpty):
        return []
    lo, hi = 0, None
    for c in sort_constraints(sort.var, sort):
        if c.left == IVar(sort.var) and is_ground(c.right):
            v = eval_ground(c.right)
            hi = v if hi is None else min(hi, v)
        elif c.right == IVar(sort.var) and is_ground(c.left):
            lo = max(lo, eval_ground(c.left))
    if hi is None:
        return INFINITE
    out = []
    for n in range(lo, hi + 1):
        if all(_eval_leq(c, {sort.var: n}) for c in sort_constraints(sort.var, sort)):
            out.append(n)
    return out


def participants_equal(ctx: IndexContext, p, q) -> Verdict:
    """Are two (possibly symbolic) participants equal for every assignment?"""
    if p.name != q.name or len(p.indices) != len(q.indices):
        return Invalid({})
    goal = conj(
        *[PLeq(a, b) for a, b in zip(p.indices, q.indices)],
        *[PLeq(b, a) for a, b in zip(p.indices, q.indices)],
    )
    if isinstance(goal, PTrue):
        return Valid()
    # fast path: syntactically identical indices are equal
    if all(iexpr_eq_syntactic(a, b) for a, b in zip(p.indices, q.indices)):
        return Valid()
    return entails(ctx, goal)


def participants_overlap(ctx: IndexContext, p, q) -> Verdict:
    """Can two symbolic participants coincide for some assignment?

    Valid: a witness assignment makes them equal. Invalid: they are
    provably distinct everywhere. Undecided otherwise.
    """
    if p.name != q.name or len(p.indices) != len(q.indices):
        return Invalid({})
    eqs: list[PLeq] = []
    for a, b in zip(p.indices, q.indices):
        eqs.append(PLeq(a, b))
        eqs.append(PLeq(b, a))
    if not eqs:
        return Valid()
    assumptions = context_constraints(ctx) + eqs
    variables = sorted(
        set().union(*(free_ivars(c.left) | free_ivars(c.right) for c in assumptions))
    )
    unbound = [v for v in variables if ctx.sort_of(v) is None]
    if unbound:
        raise KindError(diag("Entails", f"unbound index variables {unbound}"))
    if not variables:
        ok = all(_eval_leq(c, {}) for c in assumptions)
        return Valid() if ok else Invalid({})
    # refutation: the combined system is rationally unsatisfiable
    atoms: dict = {}
    rows = []
    for leq in assumptions:
        row = _rows_of(leq, atoms)
        if row is None:
            return Undecided("unevaluable nonlinear constraint")
        rows.append(row)
    for m in list(atoms):
        base_row = {m: -1, "#const": 0}
        if len(m) == 1 and m[0][0][0] == "p" and m[0][0][1] >= 1:
            base_row["#const"] = -1
        rows.append(base_row)
    if _fm_unsat(rows, sorted(atoms, key=repr)):
        return Invalid({})
    witness = _search_witness(variables, assumptions)
    if witness is not None:
        return Valid()
    return Undecided("no integer witness within bounds")


def indices_equal(ctx: IndexContext, a: IndexExpr, b: IndexExpr) -> Verdict:
    if iexpr_eq_syntactic(a, b):
        return Valid()
    return entails(ctx, conj(PLeq(a, b), PLeq(b, a)))
