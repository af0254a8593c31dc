"""Expression trees shared by the simulator, the LP generator and the checker.

A single Expr semantics is used everywhere: numeric evaluation, symbolic
differentiation, conservative interval evaluation and the s-expression
serialization that goes into certificate files.  Keeping one semantics is
what makes an UNSAT verdict from the interval checker meaningful for the
system that was simulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_INF = math.inf

# Argument bound beyond which sin/cos interval evaluation refuses to work
# (argument reduction accuracy degrades; the case study stays in [-pi, pi]).
TRIG_ARG_LIMIT = 1.0e6


class EvalError(ArithmeticError):
    """Division by zero, NaN propagation or domain violation during eval."""


class ExprSyntaxError(ValueError):
    """Malformed s-expression text."""


_UNARY = frozenset(("neg", "sin", "cos", "exp", "tanh"))
_BINARY = frozenset(("add", "sub", "mul", "div"))


class Expr:
    """Immutable expression node.

    op is one of: const, var, add, sub, mul, div, neg, pow, sin, cos,
    exp, tanh.  ``val`` holds the constant value (const) or the integer
    exponent (pow); ``idx`` holds the variable index (var).
    """

    __slots__ = ("op", "args", "val", "idx")

    def __init__(self, op, args=(), val=None, idx=None):
        self.op = op
        self.args = args
        self.val = val
        self.idx = idx

    # Arithmetic sugar, mostly for building quadratic forms in tests.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return "Expr(%s)" % to_sexpr(self)

    def __eq__(self, other):
        if not isinstance(other, Expr):
            return NotImplemented
        return (self.op == other.op and self.val == other.val
                and self.idx == other.idx and self.args == other.args)

    def __hash__(self):
        return hash((self.op, self.val, self.idx, self.args))


def _wrap(x):
    if isinstance(x, Expr):
        return x
    return const(float(x))


# ---------------------------------------------------------------------------
# Smart constructors (constant folding only; no algebraic rewriting).
# ---------------------------------------------------------------------------

def const(v):
    return Expr("const", val=float(v))


def var(i):
    if i < 0:
        raise ValueError("variable index must be nonnegative")
    return Expr("var", idx=int(i))


def _is_const(e, v=None):
    return e.op == "const" and (v is None or e.val == v)


def add(a, b):
    if _is_const(a) and _is_const(b):
        return const(a.val + b.val)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Expr("add", (a, b))


def sub(a, b):
    if _is_const(a) and _is_const(b):
        return const(a.val - b.val)
    if _is_const(b, 0.0):
        return a
    return Expr("sub", (a, b))


def mul(a, b):
    if _is_const(a) and _is_const(b):
        return const(a.val * b.val)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Expr("mul", (a, b))


def div(a, b):
    if _is_const(a) and _is_const(b) and b.val != 0.0:
        return const(a.val / b.val)
    if _is_const(b, 1.0):
        return a
    return Expr("div", (a, b))


def neg(a):
    if _is_const(a):
        return const(-a.val)
    return Expr("neg", (a,))


def pow_(a, n):
    n = int(n)
    if n < 0:
        raise ValueError("pow exponent must be nonnegative")
    if n == 0:
        return const(1.0)
    if n == 1:
        return a
    if _is_const(a):
        return const(a.val ** n)
    return Expr("pow", (a,), val=n)


def sin(a):
    if _is_const(a):
        return const(math.sin(a.val))
    return Expr("sin", (a,))


def cos(a):
    if _is_const(a):
        return const(math.cos(a.val))
    return Expr("cos", (a,))


def exp(a):
    if _is_const(a):
        return const(math.exp(a.val))
    return Expr("exp", (a,))


def tanh(a):
    if _is_const(a):
        return const(math.tanh(a.val))
    return Expr("tanh", (a,))


def arity(e):
    """1 + highest variable index occurring in e (0 for closed terms)."""
    if e.op == "var":
        return e.idx + 1
    if not e.args:
        return 0
    return max(arity(a) for a in e.args)


def substitute(e, mapping):
    """Replace var(i) by mapping[i] where present; rebuilds with folding."""
    if e.op == "var":
        return mapping.get(e.idx, e)
    if e.op == "const":
        return e
    args = tuple(substitute(a, mapping) for a in e.args)
    if args == e.args:
        return e
    if e.op == "pow":
        return pow_(args[0], e.val)
    return _BUILDERS[e.op](*args)


_BUILDERS = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg,
    "sin": sin, "cos": cos, "exp": exp, "tanh": tanh,
}


# ---------------------------------------------------------------------------
# Numeric evaluation
# ---------------------------------------------------------------------------

def eval_expr(e, point):
    """Evaluate e at a real vector.  Raises EvalError on /0 or NaN."""
    op = e.op
    if op == "const":
        return e.val
    if op == "var":
        return point[e.idx]
    if op == "add":
        r = eval_expr(e.args[0], point) + eval_expr(e.args[1], point)
    elif op == "sub":
        r = eval_expr(e.args[0], point) - eval_expr(e.args[1], point)
    elif op == "mul":
        r = eval_expr(e.args[0], point) * eval_expr(e.args[1], point)
    elif op == "div":
        d = eval_expr(e.args[1], point)
        if d == 0.0:
            raise EvalError("division by zero")
        r = eval_expr(e.args[0], point) / d
    elif op == "neg":
        r = -eval_expr(e.args[0], point)
    elif op == "pow":
        r = eval_expr(e.args[0], point) ** e.val
    elif op == "sin":
        r = math.sin(eval_expr(e.args[0], point))
    elif op == "cos":
        r = math.cos(eval_expr(e.args[0], point))
    elif op == "exp":
        try:
            r = math.exp(eval_expr(e.args[0], point))
        except OverflowError:
            raise EvalError("exp overflow") from None
    elif op == "tanh":
        r = math.tanh(eval_expr(e.args[0], point))
    else:
        raise EvalError("unknown op %r" % op)
    if r != r:
        raise EvalError("NaN produced at %s node" % op)
    return r


def compile_expr(e, backend="math"):
    """Compile e to a callable f(point) via generated Python source.

    backend "math" produces a scalar function identical in result to
    eval_expr; backend "numpy" produces a vectorized function for grid
    oracles (point components may be arrays).
    """
    src = _codegen(e)
    if backend == "math":
        ns = {"sin": math.sin, "cos": math.cos, "exp": math.exp,
              "tanh": math.tanh}
    elif backend == "numpy":
        import numpy as np
        ns = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh}
    else:
        raise ValueError("unknown backend %r" % backend)
    code = "def _f(p):\n    return %s\n" % src
    exec(code, ns)  # noqa: S102 - generated from our own AST
    return ns["_f"]


def _codegen(e):
    op = e.op
    if op == "const":
        return repr(e.val)
    if op == "var":
        return "p[%d]" % e.idx
    if op == "add":
        return "(%s + %s)" % (_codegen(e.args[0]), _codegen(e.args[1]))
    if op == "sub":
        return "(%s - %s)" % (_codegen(e.args[0]), _codegen(e.args[1]))
    if op == "mul":
        return "(%s * %s)" % (_codegen(e.args[0]), _codegen(e.args[1]))
    if op == "div":
        return "(%s / %s)" % (_codegen(e.args[0]), _codegen(e.args[1]))
    if op == "neg":
        return "(-%s)" % _codegen(e.args[0])
    if op == "pow":
        return "(%s ** %d)" % (_codegen(e.args[0]), e.val)
    return "%s(%s)" % (op, _codegen(e.args[0]))


# ---------------------------------------------------------------------------
# Symbolic differentiation
# ---------------------------------------------------------------------------

def diff(e, i):
    """Symbolic partial derivative of e with respect to var(i)."""
    op = e.op
    if op == "const":
        return const(0.0)
    if op == "var":
        return const(1.0) if e.idx == i else const(0.0)
    if op == "add":
        return add(diff(e.args[0], i), diff(e.args[1], i))
    if op == "sub":
        return sub(diff(e.args[0], i), diff(e.args[1], i))
    if op == "mul":
        a, b = e.args
        return add(mul(diff(a, i), b), mul(a, diff(b, i)))
    if op == "div":
        a, b = e.args
        num = sub(mul(diff(a, i), b), mul(a, diff(b, i)))
        return div(num, pow_(b, 2))
    if op == "neg":
        return neg(diff(e.args[0], i))
    if op == "pow":
        a = e.args[0]
        return mul(mul(const(e.val), pow_(a, e.val - 1)), diff(a, i))
    if op == "sin":
        return mul(cos(e.args[0]), diff(e.args[0], i))
    if op == "cos":
        return neg(mul(sin(e.args[0]), diff(e.args[0], i)))
    if op == "exp":
        return mul(exp(e.args[0]), diff(e.args[0], i))
    if op == "tanh":
        # d/dv tanh(v) = 1 - tanh(v)^2
        return mul(sub(const(1.0), pow_(tanh(e.args[0]), 2)),
                   diff(e.args[0], i))
    raise ValueError("unknown op %r" % op)


# ---------------------------------------------------------------------------
# Intervals and boxes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError("interval lo > hi: [%r, %r]" % (self.lo, self.hi))

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def mid(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def is_bounded(self):
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def contains(self, x):
        return self.lo <= x <= self.hi

    def intersect(self, other):
        """Intersection, or None when empty."""
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            return None
        return Interval(lo, hi)


WHOLE_LINE = Interval(-_INF, _INF)


@dataclass(frozen=True)
class Box:
    intervals: tuple

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(self.intervals))

    @property
    def arity(self):
        return len(self.intervals)

    def __getitem__(self, i):
        return self.intervals[i]

    def __iter__(self):
        return iter(self.intervals)

    def midpoint(self):
        return [iv.mid for iv in self.intervals]

    def widths(self):
        return [iv.width for iv in self.intervals]

    def max_width(self):
        return max(iv.width for iv in self.intervals)

    def contains(self, point):
        return all(iv.contains(x) for iv, x in zip(self.intervals, point))

    def replace(self, i, interval):
        ivs = list(self.intervals)
        ivs[i] = interval
        return Box(tuple(ivs))


def box(*bounds):
    """box((lo, hi), (lo, hi), ...) convenience constructor."""
    return Box(tuple(Interval(float(lo), float(hi)) for lo, hi in bounds))


# Low-level interval kernels work on (lo, hi) float pairs for speed; every
# rounding-prone primitive is widened outward by at least one ulp per
# endpoint, which keeps containment sound without touching FPU modes.

def _down(x, n=1):
    for _ in range(n):
        x = math.nextafter(x, -_INF)
    return x


def _up(x, n=1):
    for _ in range(n):
        x = math.nextafter(x, _INF)
    return x


def _widen(lo, hi, n=1):
    return _down(lo, n), _up(hi, n)


def _iadd(a, b):
    return _widen(a[0] + b[0], a[1] + b[1])


def _isub(a, b):
    return _widen(a[0] - b[1], a[1] - b[0])


def _imul(a, b):
    p = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    p = [0.0 if x != x else x for x in p]  # 0*inf -> treat as 0 contribution
    return _widen(min(p), max(p))


def _idiv(a, b):
    if b[0] <= 0.0 <= b[1]:
        return (-_INF, _INF)
    p = (a[0] / b[0], a[0] / b[1], a[1] / b[0], a[1] / b[1])
    return _widen(min(p), max(p))


def _ineg(a):
    return (-a[1], -a[0])


def _ipow(a, n):
    lo, hi = a
    cands = [lo ** n, hi ** n]
    if n % 2 == 0 and lo < 0.0 < hi:
        cands.append(0.0)
    out = _widen(min(cands), max(cands), 3)
    if n % 2 == 0:
        out = (max(out[0], 0.0), out[1])
    return out


def _iexp(a):
    try:
        lo = math.exp(a[0])
    except OverflowError:
        lo = _INF
    try:
        hi = math.exp(a[1])
    except OverflowError:
        hi = _INF
    lo, hi = _widen(lo, hi, 2)
    return (max(lo, 0.0), hi)


def _itanh(a):
    lo, hi = _widen(math.tanh(a[0]), math.tanh(a[1]), 2)
    return (max(lo, -1.0), min(hi, 1.0))


_TWO_PI = 2.0 * math.pi


def _trig_has_crit(lo, hi, offset):
    """Does [lo, hi] (slightly expanded) contain offset + 2*pi*k for some k?"""
    slack = 1e-9 * (1.0 + max(abs(lo), abs(hi)))
    k_lo = math.ceil((lo - slack - offset) / _TWO_PI)
    k_hi = math.floor((hi + slack - offset) / _TWO_PI)
    return k_lo <= k_hi


def _isin(a):
    lo, hi = a
    if max(abs(lo), abs(hi)) > TRIG_ARG_LIMIT:
        raise EvalError("sin/cos argument magnitude exceeds %g" % TRIG_ARG_LIMIT)
    if hi - lo >= _TWO_PI:
        return (-1.0, 1.0)
    vlo, vhi = sorted((math.sin(lo), math.sin(hi)))
    if _trig_has_crit(lo, hi, math.pi / 2):
        vhi = 1.0
    if _trig_has_crit(lo, hi, -math.pi / 2):
        vlo = -1.0
    vlo, vhi = _widen(vlo, vhi, 2)
    return (max(vlo, -1.0), min(vhi, 1.0))


def _icos(a):
    lo, hi = a
    if max(abs(lo), abs(hi)) > TRIG_ARG_LIMIT:
        raise EvalError("sin/cos argument magnitude exceeds %g" % TRIG_ARG_LIMIT)
    if hi - lo >= _TWO_PI:
        return (-1.0, 1.0)
    vlo, vhi = sorted((math.cos(lo), math.cos(hi)))
    if _trig_has_crit(lo, hi, 0.0):
        vhi = 1.0
    if _trig_has_crit(lo, hi, math.pi):
        vlo = -1.0
    vlo, vhi = _widen(vlo, vhi, 2)
    return (max(vlo, -1.0), min(vhi, 1.0))


def _interval_eval_raw(e, bx, cache=None):
    """Forward interval evaluation on (lo, hi) pairs.

    cache, when given, maps id(node) -> pair; it is what the HC4 backward
    pass in the checker walks over.
    """
    op = e.op
    if op == "const":
        r = (e.val, e.val)
    elif op == "var":
        iv = bx[e.idx]
        r = (iv.lo, iv.hi)
    elif op == "add":
        r = _iadd(_interval_eval_raw(e.args[0], bx, cache),
                  _interval_eval_raw(e.args[1], bx, cache))
    elif op == "sub":
        r = _isub(_interval_eval_raw(e.args[0], bx, cache),
                  _interval_eval_raw(e.args[1], bx, cache))
    elif op == "mul":
        r = _imul(_interval_eval_raw(e.args[0], bx, cache),
                  _interval_eval_raw(e.args[1], bx, cache))
    elif op == "div":
        r = _idiv(_interval_eval_raw(e.args[0], bx, cache),
                  _interval_eval_raw(e.args[1], bx, cache))
    elif op == "neg":
        r = _ineg(_interval_eval_raw(e.args[0], bx, cache))
    elif op == "pow":
        r = _ipow(_interval_eval_raw(e.args[0], bx, cache), e.val)
    elif op == "sin":
        r = _isin(_interval_eval_raw(e.args[0], bx, cache))
    elif op == "cos":
        r = _icos(_interval_eval_raw(e.args[0], bx, cache))
    elif op == "exp":
        r = _iexp(_interval_eval_raw(e.args[0], bx, cache))
    elif op == "tanh":
        r = _itanh(_interval_eval_raw(e.args[0], bx, cache))
    else:
        raise EvalError("unknown op %r" % op)
    if cache is not None:
        cache[id(e)] = r
    return r


def interval_eval(e, bx):
    """Sound interval enclosure of e over box bx.

    Division by an interval containing zero yields the whole line, which
    callers must treat as "no information".
    """
    lo, hi = _interval_eval_raw(e, bx)
    return Interval(lo, hi)


# ---------------------------------------------------------------------------
# S-expression serialization (certificate files)
# ---------------------------------------------------------------------------

def to_sexpr(e):
    op = e.op
    if op == "const":
        return "(const %s)" % repr(e.val)
    if op == "var":
        return "(var %d)" % e.idx
    if op == "pow":
        return "(pow %s %d)" % (to_sexpr(e.args[0]), e.val)
    return "(%s %s)" % (op, " ".join(to_sexpr(a) for a in e.args))


def _tokenize(text):
    return text.replace("(", " ( ").replace(")", " ) ").split()


def parse_sexpr(text):
    tokens = _tokenize(text)
    pos = 0

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            raise ExprSyntaxError("unexpected end of input")
        tok = tokens[pos]
        if tok != "(":
            raise ExprSyntaxError("expected '(' at token %r" % tok)
        pos += 1
        head = tokens[pos]
        pos += 1
        if head == "const":
            v = float(tokens[pos])
            pos += 1
            node = Expr("const", val=v)
        elif head == "var":
            i = int(tokens[pos])
            pos += 1
            node = Expr("var", idx=i)
        elif head == "pow":
            base = parse()
            n = int(tokens[pos])
            pos += 1
            node = Expr("pow", (base,), val=n)
        elif head in _BINARY:
            a = parse()
            b = parse()
            node = Expr(head, (a, b))
        elif head in _UNARY:
            a = parse()
            node = Expr(head, (a,))
        else:
            raise ExprSyntaxError("unknown operator %r" % head)
        if tokens[pos] != ")":
            raise ExprSyntaxError("expected ')' after %r form" % head)
        pos += 1
        return node

    e = parse()
    if pos != len(tokens):
        raise ExprSyntaxError("trailing tokens after expression")
    return e
