import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from brokenray.conjugate import (
    Covector,
    Translation,
    caustic_curve,
    conjugate_chain,
    conjugate_covector,
    conjugate_point,
    is_radial,
    locus_residual,
    parabola_criterion,
    polygon_artifact_radii,
    source_derivatives,
    tangent_conjugate_locus,
)
from brokenray.errors import CenterSource, DegenerateDirection, EmptyCaustic
from brokenray.geometry import Circle, LineCoords, Parabola, direction, normal, reflect

from conftest import random_admissible_events


def envelope_intersection(boundary, p, alpha, dalpha=1e-4):
    """Independent caustic oracle: intersection of two infinitesimally
    separated reflected rays from the same source, centered on alpha."""
    e1 = reflect(boundary, LineCoords.through(p, alpha - dalpha / 2.0), p)
    e2 = reflect(boundary, LineCoords.through(p, alpha + dalpha / 2.0), p)
    A = np.column_stack([e1.line_out.v, -e2.line_out.v])
    t, _ = np.linalg.solve(A, e2.hit_point - e1.hit_point)
    return e1.hit_point + t * e1.line_out.v


class TestConjugatePoint:
    def test_center_source_is_self_conjugate(self, circle):
        p = np.array([0.0, 0.0])
        for alpha in np.linspace(0.0, 2 * math.pi, 7, endpoint=False):
            event = reflect(circle, LineCoords.through(p, alpha), p)
            q = conjugate_point(p, event)
            np.testing.assert_allclose(q, [0.0, 0.0], atol=1e-12)

    def test_axis_example(self, circle):
        # p = (-0.5, 0), ray along +x: t1 = 1.5, d a2/d a1 = 2, dt2 = 0.75
        p = np.array([-0.5, 0.0])
        event = reflect(circle, LineCoords.through(p, 0.0), p)
        da2, _ = source_derivatives(p, event)
        assert da2 == pytest.approx(2.0)
        q = conjugate_point(p, event)
        np.testing.assert_allclose(q, [0.25, 0.0], atol=1e-12)
        # envelope oracle
        q_env = envelope_intersection(circle, p, 0.0)
        assert np.linalg.norm(q - q_env) < 1e-3

    def test_mirror_relation(self, circle, ellipse, generic_curve):
        # dt2 = (d a2/d a1)^-1 * t1 whenever the conjugate point exists
        rng = np.random.default_rng(7)
        for boundary in (circle, ellipse, generic_curve):
            for line, p, event in random_admissible_events(boundary, rng, 30):
                da2, _ = source_derivatives(p, event)
                if abs(da2) < 1e-6:
                    continue
                q = conjugate_point(p, event)
                t1 = event.t_hit - line.coord_of(p)
                if da2 > 0:
                    assert q is not None
                    dt2 = float(np.dot(q - event.hit_point, event.line_out.v))
                    assert dt2 == pytest.approx(t1 / da2, rel=1e-9)
                else:
                    assert q is None

    def test_total_derivative_closed_form(self, circle, ellipse, generic_curve):
        # d a2/d a1 = 2 kappa t1 / <w(a1), gamma'> - 1 along a fixed source
        rng = np.random.default_rng(19)
        for boundary in (circle, ellipse, generic_curve):
            for line, p, event in random_admissible_events(boundary, rng, 20):
                da2, _ = source_derivatives(p, event)
                t1 = event.t_hit - line.coord_of(p)
                wg = float(np.dot(line.w, event.tangent))
                assert da2 == pytest.approx(2.0 * event.kappa * t1 / wg - 1.0, rel=1e-9)

    def test_base_point_derivative_is_minus_t1(self, circle, generic_curve):
        # <d q0/d a1, w(a2)> = -t1 in the reflection case
        rng = np.random.default_rng(20)
        for boundary in (circle, generic_curve):
            for line, p, event in random_admissible_events(boundary, rng, 20):
                da2, ds2 = source_derivatives(p, event)
                v2 = direction(event.alpha2_raw)
                dq0_w2 = ds2 + float(np.dot(event.hit_point, v2)) * da2
                t1 = event.t_hit - line.coord_of(p)
                assert dq0_w2 == pytest.approx(-t1, rel=1e-9)

    def test_envelope_oracle_random(self, circle, ellipse, generic_curve):
        rng = np.random.default_rng(31)
        checked = 0
        for boundary in (circle, ellipse, generic_curve):
            for line, p, event in random_admissible_events(boundary, rng, 25):
                da2, _ = source_derivatives(p, event)
                if da2 < 0.1:
                    continue
                q = conjugate_point(p, event)
                dt2 = float(np.dot(q - event.hit_point, event.line_out.v))
                if dt2 > 3.0:
                    continue  # far-field points degrade the two-ray oracle
                q_env = envelope_intersection(boundary, p, line.alpha)
                assert np.linalg.norm(q - q_env) < 1e-3
                checked += 1
        assert checked >= 30

    def test_perturbation_stability(self, circle, ellipse, generic_curve):
        # sliding q0 along v(a2) by |eps| < 0.01 keeps the existence answer
        rng = np.random.default_rng(37)
        for boundary in (circle, ellipse, generic_curve):
            for line, p, event in random_admissible_events(boundary, rng, 15):
                base = conjugate_point(p, event) is not None
                for eps in (-0.01, -0.003, 0.003, 0.01):
                    assert (conjugate_point(p, event, q0_offset=eps) is not None) == base

    def test_conjugacy_reciprocity(self, circle, ellipse, generic_curve):
        # if q is conjugate to p along nu, p is conjugate to q along
        # the reversed broken ray
        rng = np.random.default_rng(41)
        for boundary in (circle, ellipse, generic_curve):
            count = 0
            for line, p, event in random_admissible_events(boundary, rng, 25):
                q = conjugate_point(p, event)
                if q is None:
                    continue
                dt2 = float(np.dot(q - event.hit_point, event.line_out.v))
                if dt2 < 0.05:
                    continue
                back = reflect(boundary, event.line_out.reversed(), q)
                if np.linalg.norm(back.hit_point - event.hit_point) > 1e-6:
                    continue  # reversed ray reflects off a different arc first
                p_back = conjugate_point(q, back)
                assert p_back is not None
                assert np.linalg.norm(p_back - p) < 1e-6
                count += 1
            assert count >= 5

    def test_parabola_focus_has_no_conjugates(self, parabola):
        # source at the focus: reflected rays are parallel, never focus
        p = np.array([0.0, -1.0])
        rng = np.random.default_rng(43)
        tried = 0
        for _ in range(60):
            alpha = rng.uniform(0.0, 2.0 * math.pi)
            line = LineCoords.through(p, alpha)
            try:
                event = reflect(parabola, line, p)
            except Exception:
                continue
            tried += 1
            da2, _ = source_derivatives(p, event)
            if abs(da2) < 1e-9:
                continue
            assert conjugate_point(p, event) is None
        assert tried > 20

    def test_translation_conjugate(self):
        p = np.array([0.3, -0.2])
        line = LineCoords.through(p, 1.1)
        tr = Translation(offset=0.6, line_in=line)
        q = conjugate_point(p, tr)
        np.testing.assert_allclose(q, p + 0.6 * normal(1.1), atol=1e-12)
        assert tr.line_out.contains(q, tol=1e-9)


class TestConjugateCovector:
    def test_circle_example(self, circle):
        # ((-0.5, 0), lam*(0, 1)) on the line (s=0, alpha=0):
        # eta = 2*lam*w(pi) = -2*lam*(0, 1) at (0.25, 0)
        lam = 0.7
        cv = Covector(np.array([-0.5, 0.0]), lam * np.array([0.0, 1.0]))
        event = reflect(circle, LineCoords(0.0, 0.0), cv.x)
        out = conjugate_covector(cv, event)
        np.testing.assert_allclose(out.x, [0.25, 0.0], atol=1e-12)
        np.testing.assert_allclose(out.xi, [0.0, -2.0 * lam], atol=1e-12)

    def test_magnitude_ratio_is_da2(self, circle, ellipse, generic_curve):
        # det(d chi) = 1, so |eta| / |xi| = |d a2/d a1|
        rng = np.random.default_rng(47)
        for boundary in (circle, ellipse, generic_curve):
            for line, p, event in random_admissible_events(boundary, rng, 20):
                cv = Covector(p, 1.3 * line.w)
                out = conjugate_covector(cv, event)
                da2, _ = source_derivatives(p, event)
                if out is None:
                    assert da2 <= 0
                    continue
                assert out.magnitude / cv.magnitude == pytest.approx(abs(da2), rel=1e-9)

    def test_non_conormal_rejected(self, circle):
        cv = Covector(np.array([-0.5, 0.0]), np.array([1.0, 1.0]))
        event = reflect(circle, LineCoords(0.0, 0.0), cv.x)
        with pytest.raises(ValueError):
            conjugate_covector(cv, event)

    def test_translation_preserves_covector(self):
        p = np.array([0.1, 0.4])
        line = LineCoords.through(p, 0.3)
        cv = Covector(p, -2.0 * line.w)
        out = conjugate_covector(cv, Translation(offset=0.6, line_in=line))
        np.testing.assert_allclose(out.x, p + 0.6 * line.w, atol=1e-12)
        np.testing.assert_allclose(out.xi, cv.xi, atol=1e-15)


class TestCaustic:
    def test_center_caustic_degenerates(self, circle):
        cc = caustic_curve(np.array([0.0, 0.0]), circle, n_samples=64)
        pts = np.array([cp.point for cp in cc.points])
        assert np.max(np.linalg.norm(pts, axis=1)) < 1e-9

    def test_matches_envelope_oracle(self, circle):
        p = np.array([0.5, 0.0])
        cc = caustic_curve(p, circle, n_samples=128)
        for cp in cc.points[::5]:
            q_env = envelope_intersection(circle, p, cp.alpha)
            assert np.linalg.norm(cp.point - q_env) < 1e-3

    def test_parabola_conjugate_region(self, parabola):
        # source at (0, -3): conjugate points exactly for hits |x| < 2
        p = np.array([0.0, -3.0])
        rng = np.random.default_rng(53)
        for _ in range(200):
            x_hit = rng.uniform(-3.4, 3.4)
            target = np.array([x_hit, -(x_hit**2) / 4.0])
            d = target - p
            alpha = math.atan2(d[1], d[0])
            line = LineCoords.through(p, alpha)
            try:
                event = reflect(parabola, line, p)
            except Exception:
                continue
            if abs(event.hit_point[0] - x_hit) > 1e-9:
                continue
            da2, _ = source_derivatives(p, event)
            if abs(da2) < 1e-9:
                continue
            exists = conjugate_point(p, event) is not None
            assert exists == (x_hit**2 < 4.0)
            assert exists == parabola_criterion(1.0, 3.0, x_hit)

    def test_refinement_tightens_gaps(self, circle):
        p = np.array([0.5, 0.0])
        coarse = caustic_curve(p, circle, n_samples=60)
        fine = caustic_curve(p, circle, n_samples=60, refine_dist=0.02)
        assert len(fine.points) > len(coarse.points)
        gaps = [
            np.linalg.norm(seg[i + 1] - seg[i])
            for seg in fine.segments()
            for i in range(len(seg) - 1)
        ]
        assert np.median(gaps) < 0.02

    def test_empty_caustic(self, parabola):
        # ray family pointed away from the mirror: nothing reflects
        with pytest.raises(EmptyCaustic):
            caustic_curve(
                np.array([0.0, -1.0]), parabola, alpha_range=(0.2, 0.8), n_samples=8
            )


class TestTangentLocus:
    def test_zero_kinds_for_offset_source(self):
        locus = tangent_conjugate_locus(np.array([0.5, 0.0]), radius=1.0)
        kinds = sorted(z.kind for z in locus.zeros)
        assert kinds == [
            "source_perpendicular",
            "source_perpendicular",
            "through_center",
        ]
        assert all(z.simple for z in locus.zeros)
        # the through-center zero sits at alpha = pi (alpha = 0 is off the locus)
        tc = [z for z in locus.zeros if z.kind == "through_center"]
        assert tc[0].alpha == pytest.approx(math.pi)

    def test_locus_residual_vanishes(self):
        p = np.array([0.5, 0.0])
        locus = tangent_conjugate_locus(p, radius=1.0, n_samples=256)
        for a, t in zip(locus.alpha, locus.t):
            assert abs(locus_residual(p, 1.0, a, t)) < 1e-9

    def test_sin_beta_derivative_identity(self):
        # d(sin beta)/d alpha = t1 - cos beta on the unit circle
        p = np.array([0.5, 0.0])
        from brokenray.conjugate import _disk_pencil

        for a in np.linspace(0.1, 6.0, 25):
            h = 1e-6
            _, sb_p, _ = _disk_pencil(p, 1.0, a + h)
            _, sb_m, _ = _disk_pencil(p, 1.0, a - h)
            t1, _, cb = _disk_pencil(p, 1.0, a)
            assert (sb_p - sb_m) / (2 * h) == pytest.approx(t1 - cb, abs=1e-6)

    def test_center_source_raises(self):
        with pytest.raises(CenterSource):
            tangent_conjugate_locus(np.array([0.0, 0.0]))


class TestParabolaCriterion:
    def test_three_cases(self):
        # d > a: conjugates iff x0^2 < 4/3 a d
        assert parabola_criterion(1.0, 3.0, 0.0) is True
        assert parabola_criterion(1.0, 3.0, 1.9) is True
        assert parabola_criterion(1.0, 3.0, 2.1) is False
        # d < a: conjugates iff x0^2 > 4/3 a d
        assert parabola_criterion(3.0, 1.0, 0.0) is False
        assert parabola_criterion(3.0, 1.0, 3.0) is True
        # d = a (source at focus): never
        for x0 in (0.0, 0.5, 1.7, 4.0):
            assert parabola_criterion(1.0, 1.0, x0) is False


class TestRadial:
    def test_examples(self):
        assert is_radial(Covector([0.3, 0.0], [1.0, 0.0])) is True
        assert is_radial(Covector([0.3, 0.0], [-2.0, 0.0])) is True
        assert is_radial(Covector([0.3, 0.1], [1.0, 0.0])) is False
        assert is_radial(Covector([0.3, 0.0], [0.0, 1.0])) is False
        assert is_radial(Covector([0.0, 0.0], [0.3, 0.9])) is True

    def test_midpoint_construction(self):
        # oracle: x radial iff x is the midpoint of the chord through x
        # perpendicular to xi (= foot of the center's projection)
        rng = np.random.default_rng(59)
        for _ in range(100):
            x = rng.uniform(-0.6, 0.6, size=2)
            ang = rng.uniform(0.0, 2 * math.pi)
            xi = np.array([math.cos(ang), math.sin(ang)])
            v = np.array([xi[1], -xi[0]])  # chord direction
            midpoint = x - float(np.dot(x, v)) * v
            geom = bool(np.linalg.norm(midpoint - x) < 1e-9)
            assert is_radial(Covector(x, xi)) == geom


class TestChains:
    def test_radial_chain_complete(self):
        cv = Covector([0.3, 0.0], [1.0, 0.0])
        chain = conjugate_chain(cv, radius=1.0, max_index=16)
        assert chain.is_complete
        for e in chain.entries:
            assert abs(e.a) < 1e-9
            assert not e.outside_domain
        assert {e.index for e in chain.entries} == set(range(-16, 17))

    def test_a_recurrence_from_half(self):
        # a0 = 0.5 on the horizontal diameter: forward 1/a = 2, 4, 6, ...;
        # backward 1/a = 0 means escape at index -1
        cv = Covector([-0.5, 0.0], [0.0, 1.0])
        chain = conjugate_chain(cv, radius=1.0, max_index=8)
        assert chain.entry(0).a == pytest.approx(0.5)
        for k in range(1, 9):
            assert 1.0 / chain.entry(k).a == pytest.approx(2.0 * (k + 1), rel=1e-9)
        assert chain.status_positive.kind == "truncated"
        assert chain.status_negative.kind == "incomplete"
        assert chain.status_negative.index == -1
        assert chain.entry(-1) is None

    def test_nonradial_always_incomplete(self):
        rng = np.random.default_rng(61)
        for _ in range(50):
            x = rng.uniform(-0.6, 0.6, size=2)
            ang = rng.uniform(0.0, 2 * math.pi)
            cv = Covector(x, [math.cos(ang), math.sin(ang)])
            chain = conjugate_chain(cv, radius=1.0, max_index=64)
            if chain.grazing:
                continue
            if is_radial(cv):
                assert chain.is_complete
            else:
                assert not chain.is_complete
                assert "incomplete" in (
                    chain.status_positive.kind,
                    chain.status_negative.kind,
                )

    def test_chain_consistency_with_covector_transport(self, circle):
        # consecutive entries are conjugate covectors along the shared ray
        cv = Covector([0.31, -0.12], [0.6, 1.1])
        chain = conjugate_chain(cv, radius=1.0, max_index=6)
        by_index = {e.index: e for e in chain.entries}
        for i in sorted(by_index):
            if i + 1 not in by_index:
                continue
            prev, nxt = by_index[i], by_index[i + 1]
            if i >= 0:
                incoming = nxt.line_in
            else:
                # negative entries were reached walking backward: the
                # forward ray retraces their outgoing line
                incoming = prev.line_out.reversed()
            event = reflect(circle, incoming, prev.covector.x)
            out = conjugate_covector(prev.covector, event)
            assert out is not None
            assert np.linalg.norm(out.x - nxt.covector.x) < 1e-6
            assert np.linalg.norm(out.xi - nxt.covector.xi) < 1e-6

    def test_entries_stay_on_chords(self, circle):
        cv = Covector([0.2, 0.35], [1.0, 0.2])
        chain = conjugate_chain(cv, radius=1.0, max_index=10)
        for e in chain.entries:
            # the covector is conormal to the chord it sits on: the anchor
            # chord for index 0, the outgoing chord otherwise
            host = e.line_in if e.index == 0 else e.line_out
            assert abs(float(np.dot(e.covector.unit(), host.v))) < 1e-9

    def test_grazing_chain_flagged(self):
        # chord hugging the boundary: cos(beta) below the grazing threshold
        x = np.array([0.999, 0.0])
        cv = Covector(x, x / np.linalg.norm(x))
        chain = conjugate_chain(cv, radius=1.0, max_index=8)
        assert chain.grazing
        assert chain.status_positive.kind == "truncated"


class TestPolygonRadii:
    def test_reference_list(self):
        radii = polygon_artifact_radii(5)
        got = [(round(r.radius, 5), r.p, r.q) for r in radii]
        assert got == [
            (0.95106, 10, 1),
            (0.92388, 8, 1),
            (0.86603, 6, 1),
            (0.70711, 4, 1),
            (0.58779, 10, 3),
            (0.38268, 8, 3),
        ]

    def test_square_radius(self):
        radii = polygon_artifact_radii(2)
        assert len(radii) == 1
        assert radii[0].radius == pytest.approx(math.cos(math.pi / 4.0))
        assert (radii[0].p, radii[0].q) == (4, 1)

    @given(st.integers(min_value=2, max_value=12))
    def test_constraints(self, n_max):
        radii = polygon_artifact_radii(n_max)
        assert all(r.p % 2 == 0 for r in radii)  # odd p never contributes
        assert all(r.q % 2 == 1 for r in radii)
        assert all(2 <= 2 * r.q < r.p <= 2 * n_max for r in radii)
        assert all(math.gcd(r.p, r.q) == 1 for r in radii)
        vals = [r.radius for r in radii]
        assert vals == sorted(vals, reverse=True)
        assert len(set(round(v, 12) for v in vals)) == len(vals)
