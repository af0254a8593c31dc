"""Phase-portrait SVG emission: initial set, unsafe region, sample
trajectories and the certified level set.  Pure string construction, so
output is byte-stable for fixed inputs.
"""

from __future__ import annotations

import numpy as np

WIDTH = 640.0
HEIGHT = 480.0
MARGIN = 40.0


def _fmt(v):
    return "%.3f" % v


class _Mapper:
    def __init__(self, xlim, ylim):
        self.xlim = xlim
        self.ylim = ylim
        self.sx = (WIDTH - 2 * MARGIN) / (xlim[1] - xlim[0])
        self.sy = (HEIGHT - 2 * MARGIN) / (ylim[1] - ylim[0])

    def x(self, v):
        return MARGIN + (v - self.xlim[0]) * self.sx

    def y(self, v):
        return HEIGHT - MARGIN - (v - self.ylim[0]) * self.sy

    def pt(self, x, y):
        return "%s,%s" % (_fmt(self.x(x)), _fmt(self.y(y)))


def level_set_points(candidate, level, count=256):
    """Points on {v(x) = level} for a PD quadratic, angle-parameterized."""
    p = candidate.p_matrix
    x_star = np.linalg.solve(p, -0.5 * candidate.q_vector)
    rho = level - candidate.value(x_star)
    if rho <= 0:
        raise ValueError("level at or below the minimum of v; empty level set")
    evals, evecs = np.linalg.eigh(p)
    phis = np.linspace(0.0, 2.0 * np.pi, count, endpoint=True)
    circ = np.vstack([np.cos(phis), np.sin(phis)])
    pts = (evecs @ (circ * np.sqrt(rho / evals)[:, None])) + x_star[:, None]
    return pts.T


def render(spec, traces=(), candidate=None, level=None):
    """Return the SVG document as a string.

    Green rectangle: X0.  Red frame: the unsafe complement region.  Blue
    polylines: trajectories (star at start, circle at end).  One polyline
    of class "levelset" when a candidate and level are given.
    """
    r = spec.safe_rect
    pad_x = 0.25 * (r[0].hi - r[0].lo)
    pad_y = 0.25 * (r[1].hi - r[1].lo)
    xlim = (r[0].lo - pad_x, r[0].hi + pad_x)
    ylim = (r[1].lo - pad_y, r[1].hi + pad_y)
    m = _Mapper(xlim, ylim)

    out = ['<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" '
           'viewBox="0 0 %d %d">' % (WIDTH, HEIGHT, WIDTH, HEIGHT)]
    out.append('<rect x="0" y="0" width="%d" height="%d" fill="white"/>'
               % (WIDTH, HEIGHT))

    # Unsafe region: everything between the viewport and the safe rectangle.
    out.append('<path class="unsafe" fill="#f5c6c6" fill-rule="evenodd" d="'
               'M %s L %s L %s L %s Z M %s L %s L %s L %s Z"/>' % (
                   m.pt(xlim[0], ylim[0]), m.pt(xlim[1], ylim[0]),
                   m.pt(xlim[1], ylim[1]), m.pt(xlim[0], ylim[1]),
                   m.pt(r[0].lo, r[1].lo), m.pt(r[0].hi, r[1].lo),
                   m.pt(r[0].hi, r[1].hi), m.pt(r[0].lo, r[1].hi)))

    x0 = spec.x0
    out.append('<rect class="init" fill="#c8e6c9" stroke="#2e7d32" '
               'x="%s" y="%s" width="%s" height="%s"/>' % (
                   _fmt(m.x(x0[0].lo)), _fmt(m.y(x0[1].hi)),
                   _fmt((x0[0].hi - x0[0].lo) * m.sx),
                   _fmt((x0[1].hi - x0[1].lo) * m.sy)))

    for tr in traces:
        pts = " ".join(m.pt(s[0], s[1]) for s in tr.states)
        out.append('<polyline class="trace" fill="none" stroke="#1565c0" '
                   'stroke-width="1" points="%s"/>' % pts)
        s0 = tr.states[0]
        se = tr.states[-1]
        out.append('<text class="start" x="%s" y="%s" font-size="12" '
                   'text-anchor="middle" fill="#1565c0">*</text>'
                   % (_fmt(m.x(s0[0])), _fmt(m.y(s0[1]) + 4)))
        out.append('<circle class="end" cx="%s" cy="%s" r="3" fill="none" '
                   'stroke="#1565c0"/>' % (_fmt(m.x(se[0])), _fmt(m.y(se[1]))))

    if candidate is not None and level is not None:
        pts = level_set_points(candidate, level)
        text = " ".join(m.pt(p[0], p[1]) for p in pts)
        out.append('<polyline class="levelset" fill="none" stroke="#6a1b9a" '
                   'stroke-width="2" points="%s"/>' % text)

    out.append("</svg>")
    return "\n".join(out) + "\n"
