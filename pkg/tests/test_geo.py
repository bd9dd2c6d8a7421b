import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pfmatch.geo import (
    GeoPoint,
    PlanarPoint,
    ProjectionEnvelopeError,
    bearing,
    bearing_difference,
    make_projection,
    planar_distance,
    point_segment_projection,
    project,
    unproject,
)

ORIGIN = GeoPoint(51.5, 0.0)


class TestMakeProjection:
    def test_equator_lon_scale(self):
        proj = make_projection(GeoPoint(0.0, 0.0))
        assert proj.meters_per_deg_lon == pytest.approx(111_319.5)
        assert proj.meters_per_deg_lat == pytest.approx(111_132.9)

    def test_60_degrees_halves_lon_scale(self):
        proj = make_projection(GeoPoint(60.0, 0.0))
        assert proj.meters_per_deg_lon == pytest.approx(55_659.75, abs=0.01)

    def test_camden_lon_scale(self):
        # 111319.5 * cos(51.54 deg), evaluated independently
        proj = make_projection(GeoPoint(51.54, -0.14))
        assert proj.meters_per_deg_lon == pytest.approx(69_237.18, abs=0.01)

    def test_scales_positive(self):
        proj = make_projection(GeoPoint(-45.0, 170.0))
        assert proj.meters_per_deg_lat > 0
        assert proj.meters_per_deg_lon > 0

    def test_invalid_origin_rejected(self):
        with pytest.raises(ValueError):
            GeoPoint(91.0, 0.0)
        with pytest.raises(ValueError):
            GeoPoint(0.0, 181.0)
        with pytest.raises(ValueError):
            GeoPoint(float("nan"), 0.0)
        with pytest.raises(ValueError):
            make_projection(GeoPoint(89.5, 0.0))


class TestProject:
    def test_origin_maps_to_zero(self):
        proj = make_projection(ORIGIN)
        assert project(proj, ORIGIN) == PlanarPoint(0.0, 0.0)

    def test_half_degree_lon_at_equator(self):
        # Half the per-degree scale factor; a full degree (111.3 km) would
        # fall outside the 100 km validity envelope.
        proj = make_projection(GeoPoint(0.0, 0.0))
        p = project(proj, GeoPoint(0.0, 0.5))
        assert p.x == pytest.approx(111_319.5 / 2)
        assert p.y == pytest.approx(0.0)

    def test_hundredth_degree_lon_at_london(self):
        # 0.01 * 111319.5 * cos(51.5 deg) = 692.98, evaluated independently
        proj = make_projection(ORIGIN)
        p = project(proj, GeoPoint(51.5, 0.01))
        assert p.x == pytest.approx(692.98, abs=0.01)

    def test_out_of_envelope_is_distinct_error(self):
        proj = make_projection(ORIGIN)
        with pytest.raises(ProjectionEnvelopeError):
            project(proj, GeoPoint(53.0, 0.0))  # ~167 km north


class TestUnproject:
    def test_zero_maps_to_origin(self):
        proj = make_projection(ORIGIN)
        assert unproject(proj, PlanarPoint(0.0, 0.0)) == ORIGIN

    def test_inverts_known_projection(self):
        proj = make_projection(ORIGIN)
        g = unproject(proj, PlanarPoint(692.98, 0.0))
        assert g.lat == pytest.approx(51.5)
        assert g.lon == pytest.approx(0.01, abs=1e-5)

    @given(
        dlat=st.floats(-0.4, 0.4),
        dlon=st.floats(-0.6, 0.6),
    )
    def test_round_trip(self, dlat, dlon):
        proj = make_projection(ORIGIN)
        g = GeoPoint(ORIGIN.lat + dlat, ORIGIN.lon + dlon)
        back = unproject(proj, project(proj, g))
        assert back.lat == pytest.approx(g.lat, abs=1e-9)
        assert back.lon == pytest.approx(g.lon, abs=1e-9)


finite_coord = st.floats(-1e5, 1e5, allow_nan=False)


class TestPlanarDistance:
    def test_zero_for_same_point(self):
        p = PlanarPoint(3.0, -4.0)
        assert planar_distance(p, p) == 0.0

    def test_three_four_five(self):
        assert planar_distance(PlanarPoint(0, 0), PlanarPoint(3, 4)) == 5.0

    def test_frozen_hypot(self):
        # hypot(6, 3) evaluated independently
        d = planar_distance(PlanarPoint(1.5, -2.25), PlanarPoint(-4.5, 0.75))
        assert d == pytest.approx(6.708203932499369)

    @given(finite_coord, finite_coord, finite_coord, finite_coord)
    def test_symmetric_nonnegative(self, ax, ay, bx, by):
        a, b = PlanarPoint(ax, ay), PlanarPoint(bx, by)
        assert planar_distance(a, b) >= 0.0
        assert planar_distance(a, b) == planar_distance(b, a)

    @given(*(finite_coord,) * 6)
    def test_triangle_inequality(self, ax, ay, bx, by, cx, cy):
        a, b, c = PlanarPoint(ax, ay), PlanarPoint(bx, by), PlanarPoint(cx, cy)
        assert planar_distance(a, c) <= planar_distance(a, b) + planar_distance(b, c) + 1e-9

    @given(finite_coord, finite_coord, finite_coord, finite_coord)
    def test_zero_iff_equal(self, ax, ay, bx, by):
        a, b = PlanarPoint(ax, ay), PlanarPoint(bx, by)
        if planar_distance(a, b) == 0.0:
            assert (ax, ay) == (bx, by)


class TestPointSegmentProjection:
    def test_point_on_segment(self):
        p = PlanarPoint(1.0, 0.0)
        closest, t, d = point_segment_projection(p, PlanarPoint(0, 0), PlanarPoint(2, 0))
        assert d == 0.0
        assert closest == p
        assert t == 0.5

    def test_perpendicular_foot(self):
        closest, t, d = point_segment_projection(
            PlanarPoint(0, 1), PlanarPoint(-1, 0), PlanarPoint(1, 0)
        )
        assert closest == PlanarPoint(0.0, 0.0)
        assert t == 0.5
        assert d == 1.0

    def test_clamped_to_endpoint(self):
        # closest point clamps to b; dist = sqrt(10), verified by hand
        closest, t, d = point_segment_projection(
            PlanarPoint(5, 1), PlanarPoint(0, 0), PlanarPoint(2, 0)
        )
        assert closest == PlanarPoint(2.0, 0.0)
        assert t == 1.0
        assert d == pytest.approx(3.1622776601683795)

    def test_degenerate_segment(self):
        a = PlanarPoint(1.0, 1.0)
        closest, t, d = point_segment_projection(PlanarPoint(4.0, 5.0), a, a)
        assert closest == a
        assert t == 0.0
        assert d == 5.0

    @given(*(st.floats(-1e3, 1e3),) * 6)
    def test_never_farther_than_endpoints(self, px, py, ax, ay, bx, by):
        p, a, b = PlanarPoint(px, py), PlanarPoint(ax, ay), PlanarPoint(bx, by)
        _, t, d = point_segment_projection(p, a, b)
        assert 0.0 <= t <= 1.0
        assert d <= planar_distance(p, a) + 1e-9
        assert d <= planar_distance(p, b) + 1e-9


class TestBearing:
    def test_due_north(self):
        assert bearing(GeoPoint(51.5, 0.0), GeoPoint(51.6, 0.0)) == pytest.approx(0.0)

    def test_due_east(self):
        assert bearing(GeoPoint(0.0, 0.0), GeoPoint(0.0, 0.1)) == pytest.approx(90.0)

    def test_northeast_diagonal(self):
        # displacement of (1 m, 1 m) near the equator: atan2(1, 1) = 45 deg
        a = GeoPoint(0.0, 0.0)
        b = GeoPoint(1.0 / 111_132.9, 1.0 / 111_319.5)
        assert bearing(a, b) == pytest.approx(45.0, abs=1e-6)

    def test_coincident_points_rejected(self):
        p = GeoPoint(10.0, 10.0)
        with pytest.raises(ValueError):
            bearing(p, p)

    @given(
        lat1=st.floats(-60, 60),
        lon1=st.floats(-30, 30),
        dlat=st.floats(-0.5, 0.5),
        dlon=st.floats(-0.5, 0.5),
    )
    def test_reverse_bearing_differs_by_180(self, lat1, lon1, dlat, dlon):
        a = GeoPoint(lat1, lon1)
        b = GeoPoint(lat1 + dlat, lon1 + dlon)
        if a == b:
            return
        fwd = bearing(a, b)
        rev = bearing(b, a)
        assert bearing_difference(fwd, rev) == pytest.approx(180.0, abs=1e-6)
        assert 0.0 <= fwd < 360.0


class TestBearingDifference:
    @given(st.floats(0, 360, exclude_max=True), st.floats(0, 360, exclude_max=True))
    def test_range_and_symmetry(self, a, b):
        d = bearing_difference(a, b)
        assert 0.0 <= d <= 180.0
        assert d == bearing_difference(b, a)

    def test_wraparound(self):
        assert bearing_difference(350.0, 10.0) == pytest.approx(20.0)
