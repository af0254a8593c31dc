"""Fixed-step RK4 integration of a closed-loop vector field.

Traces feed the LP constraint generator; stored derivatives are the field
re-evaluated at the stored states, so the LP sees exactly the dynamics the
checker will later reason about.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

DIVERGENCE_LIMIT = 1.0e6


class SimulationDivergence(RuntimeError):
    """A state component exceeded the divergence guard."""


@dataclass(frozen=True)
class Trace:
    times: np.ndarray
    states: np.ndarray   # shape (k, n)
    derivs: np.ndarray   # shape (k, n)

    def __len__(self):
        return len(self.times)


def rk4_step(f, x, h):
    """One classical Runge-Kutta 4 step; f is a callable state -> deriv."""
    if not h > 0:
        raise ValueError("step must be positive")
    k1 = f(x)
    k2 = f([xi + 0.5 * h * ki for xi, ki in zip(x, k1)])
    k3 = f([xi + 0.5 * h * ki for xi, ki in zip(x, k2)])
    k4 = f([xi + h * ki for xi, ki in zip(x, k3)])
    return [xi + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
            for xi, a, b, c, d in zip(x, k1, k2, k3, k4)]


def simulate(field, x0, duration, step):
    """Integrate for floor(duration/step) steps, recording every state."""
    if not step > 0:
        raise ValueError("step must be positive")
    if duration < step:
        raise ValueError("duration shorter than one step")
    f = field.compiled() if hasattr(field, "compiled") else field
    n_steps = int(np.floor(duration / step + 1e-12))
    x = [float(v) for v in x0]
    times = [0.0]
    states = [list(x)]
    derivs = [f(x)]
    for k in range(n_steps):
        x = rk4_step(f, x, step)
        if any(abs(v) > DIVERGENCE_LIMIT for v in x):
            raise SimulationDivergence(
                "state exceeded %g at t=%g" % (DIVERGENCE_LIMIT, (k + 1) * step))
        times.append((k + 1) * step)
        states.append(list(x))
        derivs.append(f(x))
    return Trace(np.array(times), np.array(states), np.array(derivs))


def seed_traces(field, region, count, duration, step, rng_seed, exclude=None):
    """Simulate from `count` initial states drawn uniformly from `region`.

    `exclude`, when given, is a sub-box rejected from the sample (used to
    draw from the annular domain between the initial set and the unsafe
    set).  Deterministic under rng_seed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    lows = np.array([iv.lo for iv in region])
    highs = np.array([iv.hi for iv in region])
    traces = []
    while len(traces) < count:
        x0 = rng.uniform(lows, highs)
        if exclude is not None and exclude.contains(x0):
            continue
        traces.append(simulate(field, x0, duration, step))
    return traces


def write_trace_csv(trace, path, mode="w"):
    n = trace.states.shape[1]
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + ["x%d" % i for i in range(n)]
                   + ["dx%d" % i for i in range(n)])
        for t, x, dx in zip(trace.times, trace.states, trace.derivs):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x]
                       + [repr(float(v)) for v in dx])


def read_trace_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    n = (len(header) - 1) // 2
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return Trace(data[:, 0], data[:, 1:1 + n], data[:, 1 + n:])
