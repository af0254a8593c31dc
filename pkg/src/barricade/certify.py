"""End-to-end certification: CEGIS loop for the generator function, level
selection by binary search, final set queries and certificate emission.

The pipeline mirrors the simulate -> solve LP -> interval-check cycle:
a counterexample box from the decrease query is turned into a fresh
simulation whose points tighten the next LP.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import symexpr as sx
from . import lpgen
from . import dsat
from . import simulate as sim
from ._version import __version__

GAMMA_DEFAULT = 1e-6
DELTA_DEFAULT = 1e-3


class NotEllipsoidError(ValueError):
    """Quadratic part of the candidate is not positive definite."""


@dataclass(frozen=True)
class SafetySpec:
    """Initial box, safe rectangle (U is its complement) and the derived
    search domain between them."""
    x0: sx.Box
    safe_rect: sx.Box

    def __post_init__(self):
        for inner, outer in zip(self.x0, self.safe_rect):
            if not (outer.lo < inner.lo and inner.hi < outer.hi):
                raise ValueError("X0 must lie strictly inside the safe rectangle")

    @property
    def arity(self):
        return self.x0.arity

    def unsafe_halfspaces(self):
        """U as a disjunction of a.x >= b halfspaces (outside safe_rect)."""
        out = []
        n = self.arity
        for i in range(n):
            a = np.zeros(n)
            a[i] = 1.0
            out.append((a.copy(), self.safe_rect[i].hi))
            a[i] = -1.0
            out.append((a.copy(), -self.safe_rect[i].lo))
        return out

    def domain_minus_x0(self):
        """Slab decomposition of safe_rect \\ X0 into at most 2n boxes."""
        slabs = []
        n = self.arity
        for dim in range(n):
            lo_ivs = []
            hi_ivs = []
            for j in range(n):
                if j < dim:
                    lo_ivs.append(self.x0[j])
                    hi_ivs.append(self.x0[j])
                elif j == dim:
                    lo_ivs.append(sx.Interval(self.safe_rect[j].lo, self.x0[j].lo))
                    hi_ivs.append(sx.Interval(self.x0[j].hi, self.safe_rect[j].hi))
                else:
                    lo_ivs.append(self.safe_rect[j])
                    hi_ivs.append(self.safe_rect[j])
            slabs.append(sx.Box(tuple(lo_ivs)))
            slabs.append(sx.Box(tuple(hi_ivs)))
        return slabs

    def enclosing_box(self, inflation=3.0):
        ivs = []
        for iv in self.safe_rect:
            c, r = iv.mid, 0.5 * iv.width
            ivs.append(sx.Interval(c - inflation * r, c + inflation * r))
        return sx.Box(tuple(ivs))

    def to_dict(self):
        return {"x0": [[iv.lo, iv.hi] for iv in self.x0],
                "safe_rect": [[iv.lo, iv.hi] for iv in self.safe_rect]}


def default_spec():
    """Case-study geometry: X0 = [-0.1,0.1]^2, safe rectangle
    [-1,1] x [-pi/2, pi/2]."""
    return SafetySpec(sx.box((-0.1, 0.1), (-0.1, 0.1)),
                      sx.box((-1.0, 1.0), (-math.pi / 2, math.pi / 2)))


@dataclass
class CertifyConfig:
    gamma: float = GAMMA_DEFAULT
    delta: float = DELTA_DEFAULT
    seed: int = 0
    max_iterations: int = 20
    bisection_budget: int = 30
    n_seed_traces: int = 20
    sim_duration: float = 10.0
    sim_step: float = 0.01
    subsample: int = 10
    eps_pos: float = 1e-3
    eps_dec: float = 1e-3
    box_budget: int = 10_000_000
    sample_x0_only: bool = False   # sample seeds from X0 instead of the ring
    cex_spread: float = 0.05       # counterexample jitter, fraction of width


@dataclass
class QueryTranscript:
    name: str
    formula: str
    domains: list
    delta: float
    verdict: str
    witness: object
    boxes_explored: int
    wall_time: float

    def to_dict(self):
        return {
            "name": self.name,
            "formula": self.formula,
            "domains": [[[iv.lo, iv.hi] for iv in b] for b in self.domains],
            "delta": self.delta,
            "verdict": self.verdict,
            "witness": (None if self.witness is None
                        else [[iv.lo, iv.hi] for iv in self.witness]),
            "boxes_explored": self.boxes_explored,
            "wall_time": self.wall_time,
        }


@dataclass
class Certificate:
    candidate: lpgen.GeneratorCandidate
    level: float
    gamma: float
    delta: float
    transcripts: dict                  # name -> QueryTranscript
    spec: SafetySpec
    controller_hash: str
    iterations: int
    version: str = __version__

    def barrier_value(self, x):
        return self.candidate.value(x) - self.level

    def to_dict(self):
        cand = self.candidate
        return {
            "version": self.version,
            "generator": {
                "p_matrix": cand.p_matrix.tolist(),
                "q_vector": cand.q_vector.tolist(),
                "c": cand.c_scalar,
                "expr": sx.to_sexpr(cand.expr),
                "grad": [sx.to_sexpr(g) for g in cand.grad],
            },
            "level": self.level,
            "gamma": self.gamma,
            "delta": self.delta,
            "iterations": self.iterations,
            "spec": self.spec.to_dict(),
            "controller_hash": self.controller_hash,
            "queries": {k: t.to_dict() for k, t in self.transcripts.items()},
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def load_certificate(path):
    with open(path) as fh:
        data = json.load(fh)
    gen = data["generator"]
    p = np.array(gen["p_matrix"])
    q = np.array(gen["q_vector"])
    cand = lpgen.GeneratorCandidate(
        len(q), p, q, float(gen["c"]),
        sx.parse_sexpr(gen["expr"]),
        tuple(sx.parse_sexpr(g) for g in gen["grad"]))
    spec = SafetySpec(sx.box(*data["spec"]["x0"]),
                      sx.box(*data["spec"]["safe_rect"]))
    return Certificate(cand, float(data["level"]), float(data["gamma"]),
                       float(data["delta"]), {}, spec,
                       data["controller_hash"], int(data["iterations"]),
                       data.get("version", "?"))


@dataclass
class Inconclusive:
    stage: str                 # "no_candidate" | "no_level" | "final_queries" | "budget"
    detail: str
    transcripts: dict = field(default_factory=dict)
    iterations: int = 0


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

def lie_derivative(cand, f):
    """grad v . f as an Expr over the state variables."""
    acc = sx.mul(cand.grad[0], f.components[0])
    for i in range(1, cand.arity):
        acc = sx.add(acc, sx.mul(cand.grad[i], f.components[i]))
    return acc


def _check_boxes(name, formula, boxes, delta, box_budget):
    """UNSAT iff every sub-box is UNSAT; first DELTA_SAT (by box index) wins."""
    total = 0
    wall = 0.0
    for bx in boxes:
        r = dsat.check(formula, bx, delta, max_boxes=box_budget)
        total += r.boxes_explored
        wall += r.wall_time
        if r.verdict == "DELTA_SAT":
            return QueryTranscript(name, formula.to_text(), list(boxes), delta,
                                   "DELTA_SAT", r.witness, total, wall)
    return QueryTranscript(name, formula.to_text(), list(boxes), delta,
                           "UNSAT", None, total, wall)


def query_decrease(cand, f, spec, gamma=GAMMA_DEFAULT, delta=DELTA_DEFAULT,
                   box_budget=10_000_000):
    """Exists x in D\\X0 with grad v . f(x) >= -gamma?  UNSAT certifies the
    decrease condition on the search domain."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    lie = lie_derivative(cand, f)
    formula = dsat.Formula(spec.arity,
                           dsat.Constraint(lie, ">=", -gamma))
    return _check_boxes("decrease", formula, spec.domain_minus_x0(),
                        delta, box_budget)


def query_init_containment(cand, level, x0, delta=DELTA_DEFAULT,
                           box_budget=10_000_000):
    """Exists x in X0 with v(x) - level > 0?  UNSAT certifies X0 within L.
    The strict relation is checked through its closed relaxation."""
    formula = dsat.Formula(x0.arity,
                           dsat.Constraint(cand.expr, ">=", level))
    return _check_boxes("init_containment", formula, [x0], delta, box_budget)


def query_unsafe_disjoint(cand, level, spec, delta=DELTA_DEFAULT,
                          box_budget=10_000_000):
    """Exists x in U (within the enclosing search box) with v(x) <= level?
    UNSAT on all four halfspace slabs certifies L and U disjoint."""
    enclosing = spec.enclosing_box()
    boxes = []
    for a, b in spec.unsafe_halfspaces():
        dim = int(np.argmax(np.abs(a)))
        iv = enclosing[dim]
        if a[dim] > 0:
            slab_iv = sx.Interval(b, max(iv.hi, b))
        else:
            slab_iv = sx.Interval(min(iv.lo, -b), -b)
        boxes.append(enclosing.replace(dim, slab_iv))
    formula = dsat.Formula(spec.arity,
                           dsat.Constraint(cand.expr, "<=", level))
    return _check_boxes("unsafe_disjoint", formula, boxes, delta, box_budget)


# ---------------------------------------------------------------------------
# Level-set analytics
# ---------------------------------------------------------------------------

def halfspace_min(cand, a, b):
    """Exact minimum of v over the halfspace a.x >= b (P must be PD)."""
    p = cand.p_matrix
    try:
        np.linalg.cholesky(p)
    except np.linalg.LinAlgError:
        raise NotEllipsoidError("quadratic part is not positive definite")
    a = np.asarray(a, dtype=float)
    x_star = np.linalg.solve(p, -0.5 * cand.q_vector)
    if a @ x_star >= b:
        return cand.value(x_star)
    # KKT minimum on the hyperplane a.x = b.
    p_inv_a = np.linalg.solve(p, a)
    lam = (2.0 * b + a @ np.linalg.solve(p, cand.q_vector)) / (a @ p_inv_a)
    x_min = np.linalg.solve(p, lam * a - cand.q_vector) / 2.0
    return cand.value(x_min)


def vertex_max(cand, x0):
    """Max of v over the 2^n vertices of the box."""
    import itertools
    best = -np.inf
    for corner in itertools.product(*[(iv.lo, iv.hi) for iv in x0]):
        best = max(best, cand.value(corner))
    return best


NO_LEVEL = None


def select_level(cand, spec, delta=DELTA_DEFAULT, budget=30,
                 box_budget=10_000_000):
    """Binary search for a level with X0 inside L and L disjoint from U.

    Returns (level, transcripts) or (NO_LEVEL, transcripts).  The feasible
    range is (vertex_max, min halfspace minimum); the vertex condition is
    necessary but not sufficient, so each probe is confirmed by both set
    queries.
    """
    vmax = vertex_max(cand, spec.x0)
    hmin = min(halfspace_min(cand, a, b) for a, b in spec.unsafe_halfspaces())
    transcripts = {}
    if not hmin > vmax:
        return NO_LEVEL, transcripts
    lo, hi = vmax, hmin
    for _ in range(budget):
        level = 0.5 * (lo + hi)
        t2 = query_init_containment(cand, level, spec.x0, delta, box_budget)
        if t2.verdict != "UNSAT":
            lo = level          # L too small: grow it
            continue
        t3 = query_unsafe_disjoint(cand, level, spec, delta, box_budget)
        if t3.verdict != "UNSAT":
            hi = level          # L touches U: shrink it
            continue
        transcripts["init_containment"] = t2
        transcripts["unsafe_disjoint"] = t3
        return level, transcripts
    return NO_LEVEL, transcripts


# ---------------------------------------------------------------------------
# CEGIS loop and the full pipeline
# ---------------------------------------------------------------------------

def find_generator(spec, f, config):
    """Iterate LP candidates against the decrease query, folding each
    counterexample back in as a fresh simulation.

    Returns (candidate, decrease_transcript, iterations, traces) or raises
    NoCandidateError.
    """
    tmpl = lpgen.QuadraticTemplate(spec.arity)
    sample_box = spec.x0 if config.sample_x0_only else spec.safe_rect
    exclude = None if config.sample_x0_only else spec.x0
    traces = sim.seed_traces(f, sample_box, config.n_seed_traces,
                             config.sim_duration, config.sim_step,
                             config.seed, exclude=exclude)
    lp_region = (spec.safe_rect, spec.x0)
    for iteration in range(1, config.max_iterations + 1):
        lp = lpgen.build_constraints(traces, tmpl, config.eps_pos,
                                     config.eps_dec,
                                     subsample=config.subsample,
                                     region=lp_region)
        sol = lpgen.solve_lp(lp)
        if sol is lpgen.INFEASIBLE or sol[-1] <= 0:
            raise NoCandidateError("LP %s at iteration %d" % (
                "infeasible" if sol is lpgen.INFEASIBLE else
                "margin nonpositive", iteration))
        cand = lpgen.candidate_from(sol[:-1], tmpl)
        transcript = query_decrease(cand, f, spec, config.gamma, config.delta,
                                    config.box_budget)
        if transcript.verdict == "UNSAT":
            return cand, transcript, iteration, traces
        cex = transcript.witness.midpoint()
        for start in _cex_cluster(cex, spec, config.cex_spread):
            traces.append(sim.simulate(f, start, config.sim_duration,
                                       config.sim_step))
    raise NoCandidateError("no candidate within %d iterations"
                           % config.max_iterations)


def _cex_cluster(cex, spec, spread):
    """The counterexample plus axis-aligned neighbors.

    A lone trace head only refutes a tiny neighborhood, which lets the
    next witness crawl along a constraint boundary one delta-box at a
    time; jittered restarts knock out the whole stretch at once.
    """
    pts = [np.asarray(cex, dtype=float)]
    if spread <= 0:
        return pts
    for dim, iv in enumerate(spec.safe_rect):
        for sign in (-1.0, 1.0):
            p = np.array(cex, dtype=float)
            p[dim] += sign * spread * iv.width
            p = np.array([min(max(v, b.lo), b.hi)
                          for v, b in zip(p, spec.safe_rect)])
            if not spec.x0.contains(p):
                pts.append(p)
    return pts


class NoCandidateError(RuntimeError):
    """CEGIS loop exhausted without a checked generator function."""


def verify(spec, f, config=None, controller_hash=""):
    """Full procedure; returns a Certificate or an Inconclusive record."""
    config = config or CertifyConfig()
    try:
        cand, t1, iterations, _traces = find_generator(spec, f, config)
    except NoCandidateError as exc:
        return Inconclusive("no_candidate", str(exc))
    except dsat.BudgetExhausted as exc:
        return Inconclusive("budget", str(exc))
    try:
        level, level_transcripts = select_level(
            cand, spec, config.delta, config.bisection_budget,
            config.box_budget)
    except NotEllipsoidError as exc:
        return Inconclusive("no_level", str(exc),
                            {"decrease": t1}, iterations)
    if level is NO_LEVEL:
        return Inconclusive("no_level",
                            "no admissible level within bisection budget",
                            {"decrease": t1}, iterations)
    transcripts = {"decrease": t1}
    transcripts.update(level_transcripts)
    return Certificate(cand, level, config.gamma, config.delta, transcripts,
                       spec, controller_hash, iterations)


# ---------------------------------------------------------------------------
# Independent numeric soundness oracle used by the test suite
# ---------------------------------------------------------------------------

def certificate_grid_oracle(cert, f, n_boundary=10_000, n_grid=101):
    """Sample-based cross-check of an emitted certificate.

    Returns a dict of violation counts: boundary points of {v = level}
    must have grad v . f < 0, an X0 grid must satisfy v <= level, and a
    grid over U (within the enclosing box) must satisfy v > level.
    """
    cand = cert.candidate
    spec = cert.spec
    level = cert.level
    lie = sx.compile_expr(lie_derivative(cand, f), "numpy")
    vfun = sx.compile_expr(cand.expr, "numpy")

    # Ellipse boundary: x = x* + r(phi) direction, solving v(x) = level.
    p = cand.p_matrix
    x_star = np.linalg.solve(p, -0.5 * cand.q_vector)
    v_min = cand.value(x_star)
    rho = level - v_min
    evals, evecs = np.linalg.eigh(p)
    phis = np.linspace(0.0, 2.0 * np.pi, n_boundary, endpoint=False)
    circ = np.vstack([np.cos(phis), np.sin(phis)])
    pts = (evecs @ (circ * np.sqrt(rho / evals)[:, None])) + x_star[:, None]
    boundary_bad = int(np.sum(lie([pts[0], pts[1]]) >= 0.0))

    g0 = np.linspace(spec.x0[0].lo, spec.x0[0].hi, n_grid)
    g1 = np.linspace(spec.x0[1].lo, spec.x0[1].hi, n_grid)
    xx, yy = np.meshgrid(g0, g1)
    x0_bad = int(np.sum(vfun([xx, yy]) > level))

    env = cert.spec.enclosing_box()
    e0 = np.linspace(env[0].lo, env[0].hi, 4 * n_grid)
    e1 = np.linspace(env[1].lo, env[1].hi, 4 * n_grid)
    xx, yy = np.meshgrid(e0, e1)
    in_u = ((xx < spec.safe_rect[0].lo) | (xx > spec.safe_rect[0].hi)
            | (yy < spec.safe_rect[1].lo) | (yy > spec.safe_rect[1].hi))
    u_bad = int(np.sum(vfun([xx[in_u], yy[in_u]]) <= level))
    return {"boundary": boundary_bad, "x0": x0_bad, "unsafe": u_bad}
