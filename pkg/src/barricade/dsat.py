"""Interval branch-and-prune delta-satisfiability checker.

Decides conjunctions/disjunctions of nonlinear inequalities over a box.
UNSAT is exact (no real point in the domain satisfies the formula); a
DELTA_SAT verdict returns a box of per-dimension width <= delta on which
interval evaluation cannot refute the formula, which matches the usual
delta-decision semantics.  Strict relations are refuted through their
closed relaxations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

from . import symexpr as sx
from .symexpr import Box, Interval, _interval_eval_raw, _iadd, _isub, _ineg, _idiv

RELATIONS = ("<=", "<", ">=", ">", "=")

TRUE, FALSE, UNKNOWN = 1, 0, -1


class BudgetExhausted(RuntimeError):
    """Box budget ran out before a verdict was reached."""


@dataclass(frozen=True)
class Constraint:
    lhs: sx.Expr
    rel: str
    rhs: float

    def __post_init__(self):
        if self.rel not in RELATIONS:
            raise ValueError("unknown relation %r" % self.rel)

    def to_text(self):
        return "%s %s %r" % (sx.to_sexpr(self.lhs), self.rel, self.rhs)


@dataclass(frozen=True)
class And:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("empty conjunction")


@dataclass(frozen=True)
class Or:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("empty disjunction")


@dataclass(frozen=True)
class Formula:
    arity: int
    root: object   # Constraint | And | Or

    def to_text(self):
        return _node_text(self.root)


def _node_text(node):
    if isinstance(node, Constraint):
        return node.to_text()
    tag = "and" if isinstance(node, And) else "or"
    return "(%s %s)" % (tag, " ".join(_node_text(p) for p in node.parts))


@dataclass(frozen=True)
class DsatResult:
    verdict: str                # "UNSAT" | "DELTA_SAT"
    witness: object             # Box | None
    boxes_explored: int
    wall_time: float


def _constraint_status(c, bx, cache=None):
    lo, hi = _interval_eval_raw(c.lhs, bx, cache)
    r = c.rhs
    rel = c.rel
    if rel in ("<=", "<"):
        if rel == "<=":
            if hi <= r:
                return TRUE
            if lo > r:
                return FALSE
        else:
            if hi < r:
                return TRUE
            if lo >= r:
                return FALSE
        return UNKNOWN
    if rel in (">=", ">"):
        if rel == ">=":
            if lo >= r:
                return TRUE
            if hi < r:
                return FALSE
        else:
            if lo > r:
                return TRUE
            if hi <= r:
                return FALSE
        return UNKNOWN
    # "="
    if lo == hi == r:
        return TRUE
    if r < lo or r > hi:
        return FALSE
    return UNKNOWN


def _status(node, bx):
    if isinstance(node, Constraint):
        try:
            return _constraint_status(node, bx)
        except sx.EvalError:
            return UNKNOWN
    if isinstance(node, And):
        out = TRUE
        for p in node.parts:
            s = _status(p, bx)
            if s == FALSE:
                return FALSE
            if s == UNKNOWN:
                out = UNKNOWN
        return out
    out = FALSE
    for p in node.parts:
        s = _status(p, bx)
        if s == TRUE:
            return TRUE
        if s == UNKNOWN:
            out = UNKNOWN
    return out


# ---------------------------------------------------------------------------
# HC4-style contraction (backward pass through arithmetic nodes only)
# ---------------------------------------------------------------------------

def _target_interval(rel, rhs):
    if rel in ("<=", "<"):
        return (-math.inf, rhs)
    if rel in (">=", ">"):
        return (rhs, math.inf)
    return (rhs, rhs)


def _backward(e, target, cache, bx):
    """Contract bx assuming the value of e lies in target.

    Returns the contracted Box or None when the intersection is empty.
    Only add/sub/mul/neg (and var/const) participate; other node types
    terminate the walk, which is sound (no contraction, no exclusion).
    """
    fwd = cache[id(e)]
    lo = max(fwd[0], target[0])
    hi = min(fwd[1], target[1])
    if lo > hi:
        return None
    t = (lo, hi)
    op = e.op
    if op == "var":
        iv = bx[e.idx].intersect(Interval(max(t[0], -math.inf), t[1]))
        if iv is None:
            return None
        return bx.replace(e.idx, iv)
    if op == "const":
        return bx
    if op == "add":
        a, b = e.args
        bx = _backward(a, _isub(t, cache[id(b)]), cache, bx)
        if bx is None:
            return None
        return _backward(b, _isub(t, cache[id(a)]), cache, bx)
    if op == "sub":
        a, b = e.args
        bx = _backward(a, _iadd(t, cache[id(b)]), cache, bx)
        if bx is None:
            return None
        return _backward(b, _isub(cache[id(a)], t), cache, bx)
    if op == "neg":
        return _backward(e.args[0], _ineg(t), cache, bx)
    if op == "mul":
        a, b = e.args
        fb = cache[id(b)]
        if not (fb[0] <= 0.0 <= fb[1]):
            bx = _backward(a, _idiv(t, fb), cache, bx)
            if bx is None:
                return None
        fa = cache[id(a)]
        if not (fa[0] <= 0.0 <= fa[1]):
            bx = _backward(b, _idiv(t, fa), cache, bx)
            if bx is None:
                return None
        return bx
    return bx


EMPTY = None


def _conjuncts(node):
    if isinstance(node, Constraint):
        return [node]
    if isinstance(node, And):
        out = []
        for p in node.parts:
            sub = _conjuncts(p)
            if sub is None:
                return None
            out.extend(sub)
        return out
    return None


def prune(phi, bx, rounds=3):
    """Contract bx against phi; EMPTY (None) when refuted on the whole box.

    Runs forward interval evaluation plus the HC4 backward pass for every
    top-level conjunct; disjunctive formulas only get forward refutation.
    """
    node = phi.root if isinstance(phi, Formula) else phi
    conj = _conjuncts(node)
    if conj is None:
        return EMPTY if _status(node, bx) == FALSE else bx
    for _ in range(rounds):
        prev = bx
        for c in conj:
            cache = {}
            try:
                _interval_eval_raw(c.lhs, bx, cache)
            except sx.EvalError:
                continue
            if _constraint_status(c, bx, None) == FALSE:
                return EMPTY
            bx = _backward(c.lhs, _target_interval(c.rel, c.rhs), cache, bx)
            if bx is None:
                return EMPTY
        if bx == prev:
            break
    return bx


def branch(bx):
    """Bisect the widest dimension at its midpoint."""
    widths = bx.widths()
    dim = int(max(range(len(widths)), key=lambda i: widths[i]))
    iv = bx[dim]
    mid = iv.mid
    return (bx.replace(dim, Interval(iv.lo, mid)),
            bx.replace(dim, Interval(mid, iv.hi)))


def check(phi, domain, delta, max_boxes=10_000_000):
    """Branch-and-prune decision over a bounded box.

    Depth-first worklist, widest-dimension bisection.  Raises
    BudgetExhausted when more than max_boxes boxes are processed.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if domain.arity != phi.arity:
        raise ValueError("domain arity %d != formula arity %d"
                         % (domain.arity, phi.arity))
    t0 = time.perf_counter()
    stack = [domain]
    explored = 0
    while stack:
        bx = stack.pop()
        explored += 1
        if explored > max_boxes:
            raise BudgetExhausted("explored more than %d boxes" % max_boxes)
        contracted = prune(phi, bx)
        if contracted is EMPTY:
            continue
        bx = contracted
        status = _status(phi.root, bx)
        if status == FALSE:
            continue
        if bx.max_width() <= delta:
            return DsatResult("DELTA_SAT", bx, explored,
                              time.perf_counter() - t0)
        if status == TRUE:
            # Certainly satisfied somewhere in here: the midpoint is a
            # genuine witness, reported as a degenerate box.
            mid = bx.midpoint()
            wit = Box(tuple(Interval(v, v) for v in mid))
            return DsatResult("DELTA_SAT", wit, explored,
                              time.perf_counter() - t0)
        left, right = branch(bx)
        stack.append(right)
        stack.append(left)
    return DsatResult("UNSAT", None, explored, time.perf_counter() - t0)
