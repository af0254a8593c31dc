"""Certification pipeline: queries, level selection, CEGIS, certificates."""

import math

import numpy as np
import pytest

from barricade import certify
from barricade import lpgen
from barricade import network as nn
from barricade import plant
from barricade import symexpr as sx


def _identity_candidate():
    tmpl = lpgen.QuadraticTemplate(2)
    return lpgen.candidate_from([1.0, 0.0, 1.0, 0.0, 0.0, 0.0], tmpl)


def _neg_candidate():
    tmpl = lpgen.QuadraticTemplate(2)
    return lpgen.candidate_from([-1.0, 0.0, 0.0, 0.0, 0.0, 0.0], tmpl)


def _contraction_field():
    return plant.VectorField(2, (sx.neg(sx.var(0)), sx.neg(sx.var(1))))


def _square_spec():
    return certify.SafetySpec(sx.box((-0.1, 0.1), (-0.1, 0.1)),
                              sx.box((-1.0, 1.0), (-1.0, 1.0)))


def _hand_controller_field():
    net = nn.Network((nn.make_layer([[0.9, 1.6]], [0.0], "tanh"),
                      nn.make_layer([[1.5]], [0.0], "tanh")))
    return plant.dubins_closed_loop(plant.DubinsParams(), net)


class TestSpec:
    def test_default_geometry(self):
        spec = certify.default_spec()
        assert [(iv.lo, iv.hi) for iv in spec.x0] == [(-0.1, 0.1)] * 2
        assert (spec.safe_rect[0].lo, spec.safe_rect[0].hi) == (-1.0, 1.0)
        assert spec.safe_rect[1].hi == pytest.approx(math.pi / 2)

    def test_x0_must_be_strictly_inside(self):
        with pytest.raises(ValueError):
            certify.SafetySpec(sx.box((-1.0, 1.0), (0.0, 0.1)),
                               sx.box((-1.0, 1.0), (-1.0, 1.0)))

    def test_slab_decomposition_covers_ring(self):
        spec = _square_spec()
        slabs = spec.domain_minus_x0()
        assert len(slabs) == 4
        rng = np.random.default_rng(2)
        for _ in range(2000):
            p = rng.uniform(-1, 1, size=2)
            in_ring = not spec.x0.contains(p)
            assert any(s.contains(p) for s in slabs) == in_ring or (
                # boundary points may fall either way
                any(abs(abs(v) - 0.1) < 1e-12 for v in p))


class TestQueries:
    def test_decrease_unsat_for_contraction(self):
        t = certify.query_decrease(_identity_candidate(),
                                   _contraction_field(), _square_spec())
        assert t.verdict == "UNSAT"

    def test_decrease_sat_for_growth(self):
        t = certify.query_decrease(_neg_candidate(), _contraction_field(),
                                   _square_spec())
        assert t.verdict == "DELTA_SAT"
        assert t.witness is not None

    def test_gamma_recorded(self):
        t = certify.query_decrease(_identity_candidate(),
                                   _contraction_field(), _square_spec())
        assert "1e-06" in t.formula or "-1e-06" in t.formula

    def test_init_containment(self):
        cand = _identity_candidate()
        spec = _square_spec()
        assert certify.query_init_containment(
            cand, 1e6, spec.x0).verdict == "UNSAT"
        assert certify.query_init_containment(
            cand, 0.01, spec.x0).verdict == "DELTA_SAT"

    def test_unsafe_disjoint(self):
        cand = _identity_candidate()
        spec = _square_spec()
        assert certify.query_unsafe_disjoint(cand, 0.51, spec
                                             ).verdict == "UNSAT"
        assert certify.query_unsafe_disjoint(cand, 1.5, spec
                                             ).verdict == "DELTA_SAT"
        # level below the minimum of v: L is empty
        assert certify.query_unsafe_disjoint(cand, -1.0, spec
                                             ).verdict == "UNSAT"


class TestLevelAnalytics:
    def test_halfspace_min_active(self):
        cand = _identity_candidate()
        assert certify.halfspace_min(cand, [1.0, 0.0], 1.0) == pytest.approx(1.0)

    def test_halfspace_min_unconstrained(self):
        cand = _identity_candidate()
        assert certify.halfspace_min(cand, [1.0, 0.0], -5.0) == pytest.approx(0.0)

    def test_halfspace_min_grid_oracle(self):
        rng = np.random.default_rng(13)
        tmpl = lpgen.QuadraticTemplate(2)
        for _ in range(20):
            m = rng.uniform(-1, 1, size=(2, 2))
            p = m @ m.T + 0.2 * np.eye(2)
            q = rng.uniform(-0.5, 0.5, size=2)
            cand = lpgen.candidate_from(
                [p[0, 0], p[0, 1], p[1, 1], q[0], q[1], 0.0], tmpl)
            a = rng.uniform(-1, 1, size=2)
            a /= np.linalg.norm(a)
            b = float(rng.uniform(-0.5, 1.5))
            got = certify.halfspace_min(cand, a, b)
            # exact unconstrained minimizer, plus a fine sweep of the
            # boundary hyperplane when the minimizer is outside
            x_star = np.linalg.solve(p, -0.5 * q)
            if a @ x_star >= b:
                ref = cand.value(x_star)
            else:
                n_perp = np.array([-a[1], a[0]])
                ts = np.linspace(-20, 20, 200_001)
                pts = b * a[None, :] + ts[:, None] * n_perp[None, :]
                vals = (p[0, 0] * pts[:, 0] ** 2
                        + 2 * p[0, 1] * pts[:, 0] * pts[:, 1]
                        + p[1, 1] * pts[:, 1] ** 2
                        + q[0] * pts[:, 0] + q[1] * pts[:, 1])
                ref = vals.min()
            assert got == pytest.approx(ref, abs=1e-6)

    def test_not_ellipsoid(self):
        with pytest.raises(certify.NotEllipsoidError):
            certify.halfspace_min(_neg_candidate(), [1.0, 0.0], 1.0)

    def test_vertex_max_symmetric(self):
        cand = _identity_candidate()
        assert certify.vertex_max(cand, _square_spec().x0) == pytest.approx(0.02)

    def test_vertex_max_asymmetric(self):
        tmpl = lpgen.QuadraticTemplate(2)
        cand = lpgen.candidate_from([1.0, 0.0, 0.0, 1.0, 0.0, 0.0], tmpl)
        # v = d^2 + d, max at d = +0.1 -> 0.11
        assert certify.vertex_max(cand, _square_spec().x0) == pytest.approx(0.11)

    def test_select_level_symmetric(self):
        cand = _identity_candidate()
        spec = _square_spec()
        level, transcripts = certify.select_level(cand, spec)
        assert level is not certify.NO_LEVEL
        assert 0.02 < level < 1.0
        assert transcripts["init_containment"].verdict == "UNSAT"
        assert transcripts["unsafe_disjoint"].verdict == "UNSAT"

    def test_select_level_infeasible_range(self):
        tmpl = lpgen.QuadraticTemplate(2)
        # v with a huge linear tilt: vertex max exceeds halfspace minimum
        cand = lpgen.candidate_from([1.0, 0.0, 1.0, 1.0, 0.0, 0.0], tmpl)
        spec = certify.SafetySpec(sx.box((-0.9, 0.9), (-0.9, 0.9)),
                                  sx.box((-1.0, 1.0), (-1.0, 1.0)))
        level, _ = certify.select_level(cand, spec)
        assert level is certify.NO_LEVEL


class TestCegis:
    def test_zero_budget(self):
        cfg = certify.CertifyConfig(max_iterations=0)
        out = certify.verify(_square_spec(), _contraction_field(), cfg)
        assert isinstance(out, certify.Inconclusive)
        assert out.stage == "no_candidate"

    def test_toy_field_converges_quickly(self):
        cfg = certify.CertifyConfig()
        cand, transcript, iters, traces = certify.find_generator(
            _square_spec(), _contraction_field(), cfg)
        assert iters <= 3
        assert transcript.verdict == "UNSAT"

    def test_determinism(self):
        cfg = certify.CertifyConfig(seed=5)
        a, _, _, _ = certify.find_generator(_square_spec(),
                                            _contraction_field(), cfg)
        b, _, _, _ = certify.find_generator(_square_spec(),
                                            _contraction_field(), cfg)
        assert np.array_equal(a.p_matrix, b.p_matrix)
        assert np.array_equal(a.q_vector, b.q_vector)
        assert a.c_scalar == b.c_scalar


class TestVerify:
    def test_end_to_end_hand_controller(self):
        f = _hand_controller_field()
        out = certify.verify(certify.default_spec(), f)
        assert isinstance(out, certify.Certificate)
        assert out.iterations <= 10
        for t in out.transcripts.values():
            assert t.verdict == "UNSAT"
        assert certify.certificate_grid_oracle(out, f) == {
            "boundary": 0, "x0": 0, "unsafe": 0}

    def test_unsafe_constant_controller_inconclusive(self):
        # hard left turn regardless of state: violates the spec, so the
        # procedure must not certify
        net = nn.Network((nn.make_layer([[0.0, 0.0]], [5.0], "tanh"),
                          nn.make_layer([[1.0]], [5.0], "tanh")))
        f = plant.dubins_closed_loop(plant.DubinsParams(), net)
        cfg = certify.CertifyConfig(max_iterations=5)
        out = certify.verify(certify.default_spec(), f, cfg)
        assert isinstance(out, certify.Inconclusive)

    def test_certificate_round_trip(self, tmp_path):
        f = _hand_controller_field()
        out = certify.verify(certify.default_spec(), f)
        path = tmp_path / "certificate.json"
        out.save(path)
        back = certify.load_certificate(path)
        assert np.array_equal(back.candidate.p_matrix, out.candidate.p_matrix)
        assert back.level == out.level
        assert back.gamma == out.gamma
        assert back.controller_hash == out.controller_hash

    def test_barrier_identity(self, tmp_path):
        f = _hand_controller_field()
        out = certify.verify(certify.default_spec(), f)
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = rng.uniform(-1, 1, size=2)
            assert out.barrier_value(x) == out.candidate.value(x) - out.level
