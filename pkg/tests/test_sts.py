import numpy as np
import pytest

from darksts.classify import StsClass
from darksts.errors import ConfigInvalid, DegenerateInput
from darksts.geo import haversine_m
from darksts.ingest import CargoFamily, Track, VesselRecord
from darksts.sts import (
    StsEvent,
    StsParams,
    brute_force_sts,
    detect_sts,
    resample_track,
    sts_geojson,
    write_sts_csv,
)

LAT = 45.25
# Longitude offsets at 45.25 N whose float64 haversine distance is just
# under/over the named separation; frozen against an independent geodesic
# computation, last digit tuned to the float64 boundary.
DLON_499M = 0.0063743107356462370884   # -> 498.99999999999994 m
DLON_500M = 0.006387084905463816       # -> 499.9999999999999 m (inside)
DLON_501M = 0.0063998590752814363501   # -> 501.00000000000006 m
DLON_300M = DLON_500M * 0.6
DLON_600M = DLON_500M * 1.2


def record(vid, family=CargoFamily.DRY, dwt=5000.0):
    return VesselRecord(vid, None, vid, 100.0, 20.0, dwt, family)


def track(vid, rows, family=CargoFamily.DRY, dwt=5000.0):
    """rows: (t, lat, lon, sog) tuples."""
    rows = sorted(rows)
    return Track(
        vessel=record(vid, family, dwt),
        t=np.array([r[0] for r in rows], np.int64),
        lat=np.array([r[1] for r in rows], float),
        lon=np.array([r[2] for r in rows], float),
        sog=np.array([r[3] for r in rows], float),
        draught=np.full(len(rows), np.nan),
    )


def stationary(vid, lat, lon, t0=0, t1=10_800, every=600, sog=0.0, **kw):
    times = list(range(t0, t1 + 1, every))
    if times[-1] != t1:
        times.append(t1)
    return track(vid, [(t, lat, lon, sog) for t in times], **kw)


def keys(events):
    return {(e.vessel_a, e.vessel_b, e.start, e.end) for e in events}


class TestResample:
    def test_grid_points_on_multiples(self):
        g = resample_track(track("A", [(0, 45, 36, 1), (600, 45, 36, 1)]),
                           step=300, max_gap=1800)
        assert g.t.tolist() == [0, 300, 600]

    def test_off_grid_fix_times(self):
        g = resample_track(track("A", [(100, 45, 36, 1), (700, 45, 36, 1)]),
                           step=300, max_gap=1800)
        assert g.t.tolist() == [300, 600]

    def test_gap_produces_no_points(self):
        g = resample_track(track("A", [(0, 45, 36, 1), (7200, 45, 36, 1)]),
                           step=300, max_gap=1800)
        assert len(g) == 0

    def test_gap_boundary_inclusive(self):
        g = resample_track(track("A", [(0, 45, 36, 1), (1800, 45, 36, 1)]),
                           step=300, max_gap=1800)
        assert g.t.tolist() == [0, 300, 600, 900, 1200, 1500, 1800]

    def test_stationary_positions_exact(self):
        g = resample_track(stationary("A", LAT, 36.5), step=300, max_gap=1800)
        assert np.all(g.lat == LAT)
        assert np.all(g.lon == 36.5)

    def test_linear_sog(self):
        g = resample_track(track("A", [(0, 45, 36, 0.0), (600, 45, 36, 1.0)]),
                           step=300, max_gap=1800)
        assert g.sog.tolist() == [0.0, 0.5, 1.0]

    def test_interpolates_across_antimeridian(self):
        g = resample_track(
            track("A", [(0, 0.0, 179.9, 0.5), (600, 0.0, -179.9, 0.5)]),
            step=300, max_gap=1800)
        assert g.lon.tolist() == pytest.approx([179.9, -180.0, -179.9])

    def test_short_track_empty(self):
        assert len(resample_track(track("A", [(0, 45, 36, 1)]), 300, 1800)) == 0

    def test_multiple_segments_no_duplicate_boundary(self):
        g = resample_track(
            track("A", [(0, 45, 36, 1), (600, 45, 36, 1), (1200, 45, 36, 1)]),
            step=300, max_gap=1800)
        assert g.t.tolist() == [0, 300, 600, 900, 1200]


class TestParams:
    def test_defaults(self):
        p = StsParams()
        assert (p.max_distance, p.min_duration, p.max_sog,
                p.resample_step, p.max_gap) == (500.0, 7200, 1.0, 300, 1800)

    @pytest.mark.parametrize("kw", [
        {"max_distance": 0.0},
        {"min_duration": -1},
        {"resample_step": 7300},
        {"max_gap": 7200},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigInvalid):
            StsParams(**kw)


class TestDetectExamples:
    def test_pair_300m_3h(self):
        tracks = [stationary("A", LAT, 36.5),
                  stationary("B", LAT, 36.5 + DLON_300M)]
        events = detect_sts(tracks)
        assert len(events) == 1
        ev = events[0]
        assert (ev.vessel_a, ev.vessel_b) == ("A", "B")
        assert ev.end - ev.start >= 10_800
        assert ev.mean_separation == pytest.approx(300, abs=1)
        assert ev.sts_class is StsClass.STS_CARGO
        assert ev.midpoint.lat == pytest.approx(LAT)
        assert ev.midpoint.lon == pytest.approx(36.5 + DLON_300M / 2)

    def test_pair_600m_none(self):
        tracks = [stationary("A", LAT, 36.5),
                  stationary("B", LAT, 36.5 + DLON_600M)]
        assert detect_sts(tracks) == []

    def test_pair_90min_none(self):
        tracks = [stationary("A", LAT, 36.5, t1=5400),
                  stationary("B", LAT, 36.5 + DLON_300M, t1=5400)]
        assert detect_sts(tracks) == []

    def test_fast_pair_none(self):
        tracks = [stationary("A", LAT, 36.5, sog=3.0),
                  stationary("B", LAT, 36.5 + DLON_300M, sog=3.0)]
        assert detect_sts(tracks) == []

    def test_tanker_pair_class(self):
        tracks = [
            stationary("A", LAT, 36.5, family=CargoFamily.LIQUID, dwt=4000),
            stationary("B", LAT, 36.5 + DLON_300M, family=CargoFamily.LIQUID,
                       dwt=150_000),
        ]
        (ev,) = detect_sts(tracks)
        assert ev.sts_class is StsClass.STS_TANKER

    def test_three_vessel_raft_gives_three_events(self):
        tracks = [stationary("A", LAT, 36.5),
                  stationary("B", LAT, 36.5 + DLON_300M),
                  stationary("C", LAT + 0.002, 36.5)]
        events = detect_sts(tracks)
        assert {(e.vessel_a, e.vessel_b) for e in events} == \
            {("A", "B"), ("A", "C"), ("B", "C")}

    def test_no_self_events(self):
        events = detect_sts([stationary("A", LAT, 36.5),
                             stationary("B", LAT, 36.5 + DLON_300M)])
        assert all(e.vessel_a != e.vessel_b for e in events)

    def test_duplicate_ids_rejected(self):
        tracks = [stationary("A", LAT, 36.5), stationary("A", LAT, 36.6)]
        with pytest.raises(DegenerateInput):
            detect_sts(tracks)
        with pytest.raises(DegenerateInput):
            brute_force_sts(tracks)

    def test_antimeridian_pair_found(self):
        tracks = [stationary("A", LAT, 179.9999),
                  stationary("B", LAT, -(179.9999 + DLON_300M - 360.0))]
        sep = haversine_m(LAT, tracks[0].lon[0], LAT, tracks[1].lon[0])
        assert sep < 500
        events = detect_sts(tracks)
        assert keys(events) == keys(brute_force_sts(tracks))
        assert len(events) == 1

    def test_empty_and_single(self):
        assert detect_sts([]) == []
        assert brute_force_sts([]) == []
        assert detect_sts([stationary("A", LAT, 36.5)]) == []
        assert brute_force_sts([stationary("A", LAT, 36.5)]) == []


class TestThresholdBoundaries:
    def pair(self, dlon, sog=0.0, t1=10_800):
        return [stationary("A", LAT, 36.5, t1=t1, sog=sog),
                stationary("B", LAT, 36.5 + dlon, t1=t1, sog=sog)]

    def test_distance_499_inside(self):
        assert len(detect_sts(self.pair(DLON_499M))) == 1

    def test_distance_500_inside(self):
        assert len(detect_sts(self.pair(DLON_500M))) == 1

    def test_distance_501_outside(self):
        assert detect_sts(self.pair(DLON_501M)) == []

    def duration_events(self, seconds):
        # 1 s resampling makes the run duration equal the wall-clock span
        params = StsParams(resample_step=1)
        times = list(range(0, seconds, 1000)) + [seconds]
        tracks = [
            track("A", [(t, LAT, 36.5, 0.0) for t in times]),
            track("B", [(t, LAT, 36.5 + DLON_300M, 0.0) for t in times]),
        ]
        return detect_sts(tracks, params)

    def test_duration_7199_outside(self):
        assert self.duration_events(7199) == []

    def test_duration_7200_inside(self):
        events = self.duration_events(7200)
        assert len(events) == 1
        assert events[0].end - events[0].start == 7200

    def test_duration_7201_inside(self):
        assert len(self.duration_events(7201)) == 1

    def test_sog_099_inside(self):
        assert len(detect_sts(self.pair(DLON_300M, sog=0.99))) == 1

    def test_sog_100_outside(self):
        assert detect_sts(self.pair(DLON_300M, sog=1.0)) == []

    def test_sog_101_outside(self):
        assert detect_sts(self.pair(DLON_300M, sog=1.01)) == []


class TestRunMerging:
    def sog_hole_pair(self, hole):
        """Fixes every 300 s throughout; B speeds up inside (7200, 7200+hole),
        so together-samples stop for exactly `hole` seconds with the grid
        itself uninterrupted."""
        end = 14_400 + hole
        rows_a, rows_b = [], []
        for t in range(0, end + 1, 300):
            rows_a.append((t, LAT, 36.5, 0.0))
            fast = 7200 < t < 7200 + hole
            rows_b.append((t, LAT, 36.5 + DLON_300M, 2.0 if fast else 0.0))
        return [track("A", rows_a), track("B", rows_b)]

    def test_hole_at_max_gap_merges(self):
        events = detect_sts(self.sog_hole_pair(1800))
        assert [(e.start, e.end) for e in events] == [(0, 16_200)]

    def test_hole_beyond_max_gap_splits(self):
        events = detect_sts(self.sog_hole_pair(2100))
        assert [(e.start, e.end) for e in events] == \
            [(0, 7200), (9300, 16_500)]

    def test_missing_fixes_beyond_max_gap_split(self):
        # no fixes at all inside the hole; the 2400 s segment is not bridged
        times = list(range(0, 7201, 300)) + list(range(9600, 16_801, 300))
        tracks = [track("A", [(t, LAT, 36.5, 0.0) for t in times]),
                  track("B", [(t, LAT, 36.5 + DLON_300M, 0.0) for t in times])]
        events = detect_sts(tracks)
        assert [(e.start, e.end) for e in events] == \
            [(0, 7200), (9600, 16_800)]

    def test_excursion_beyond_range_tolerated_within_max_gap(self):
        # B steps ~1.2 km east between t=7200 and t=9000 exclusive: together
        # samples pause for 1800 s, which max_gap bridges into one run
        rows_a, rows_b = [], []
        for t in range(0, 16_201, 300):
            rows_a.append((t, LAT, 36.5, 0.0))
            away = DLON_600M * 2 if 7200 < t < 9000 else 0.0
            rows_b.append((t, LAT, 36.5 + DLON_300M + away, 0.0))
        events = detect_sts([track("A", rows_a), track("B", rows_b)])
        assert [(e.start, e.end) for e in events] == [(0, 16_200)]
        oracle = brute_force_sts([track("A", rows_a), track("B", rows_b)])
        assert events == oracle


def scenario(seed, n_vessels=20, hours=12, base_lat=None, base_lon=None):
    """Random drifting cluster with a couple of planted co-location pairs."""
    rng = np.random.default_rng(seed)
    if base_lat is None:
        base_lat = float(rng.uniform(-60, 60))
    if base_lon is None:
        base_lon = float(rng.uniform(-179, 179))
    families = [CargoFamily.DRY, CargoFamily.LIQUID, CargoFamily.OTHER]
    tracks = []
    for v in range(n_vessels):
        planted = v < 4
        lat0 = base_lat + (0.0002 * (v % 2) if planted
                           else float(rng.uniform(-0.05, 0.05)))
        lon0 = base_lon + (0.003 * (v // 2) if planted
                           else float(rng.uniform(-0.05, 0.05)))
        n = int(rng.integers(12, 80))
        t = np.unique(rng.integers(0, hours * 3600, n)).astype(np.int64)
        if len(t) < 2:
            continue
        drift = 0.00002 if planted else 0.0008
        lat = lat0 + np.cumsum(rng.normal(0, drift, len(t)))
        lon = lon0 + np.cumsum(rng.normal(0, drift, len(t)))
        sog = rng.uniform(0, 0.4 if planted else 2.5, len(t))
        rec = VesselRecord(
            f"V{v:02d}", None, "", 100.0, 20.0,
            float(rng.choice([4000.0, 20000.0, 60000.0, 150000.0])),
            families[int(rng.integers(0, 3))])
        tracks.append(Track(rec, t, lat, np.vectorize(float)(lon), sog,
                            np.full(len(t), np.nan)))
    return tracks


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_brute_force(self, seed):
        tracks = scenario(seed)
        fast = detect_sts(tracks)
        slow = brute_force_sts(tracks)
        assert keys(fast) == keys(slow)
        assert fast == slow  # full events, float-exact

    def test_matches_near_pole(self):
        tracks = scenario(101, base_lat=89.7)
        assert detect_sts(tracks) == brute_force_sts(tracks)

    def test_matches_near_antimeridian(self):
        tracks = scenario(102, base_lon=179.97)
        assert detect_sts(tracks) == brute_force_sts(tracks)

    def test_some_seed_produces_events(self):
        found = sum(len(detect_sts(scenario(s))) for s in range(8))
        assert found > 0

    def test_parallel_identical(self):
        tracks = scenario(3)
        assert detect_sts(tracks, workers=4) == detect_sts(tracks)


class TestInvariants:
    def test_reorder_invariant(self):
        tracks = scenario(5)
        assert detect_sts(tracks) == detect_sts(list(reversed(tracks)))

    def test_relabel_invariant(self):
        tracks = scenario(6)
        rename = {tr.vessel.vessel_id: f"Z{99 - i:02d}"
                  for i, tr in enumerate(tracks)}
        relabeled = [
            Track(VesselRecord(rename[tr.vessel.vessel_id], None, "",
                               100.0, 20.0, tr.vessel.dwt,
                               tr.vessel.cargo_family),
                  tr.t, tr.lat, tr.lon, tr.sog, tr.draught)
            for tr in tracks
        ]
        base = {(e.vessel_a, e.vessel_b, e.start, e.end)
                for e in detect_sts(tracks)}
        back = {tuple(sorted((ka, kb)) ) + (s, e) for ka, kb, s, e in (
            (next(k for k, v in rename.items() if v == ea),
             next(k for k, v in rename.items() if v == eb), s, e)
            for ea, eb, s, e in ((ev.vessel_a, ev.vessel_b, ev.start, ev.end)
                                 for ev in detect_sts(relabeled)))}
        base_sorted = {tuple(sorted((a, b))) + (s, e) for a, b, s, e in base}
        assert back == base_sorted

    def test_monotone_in_distance(self):
        tracks = scenario(7)
        base = detect_sts(tracks, StsParams(max_distance=500))
        wider = detect_sts(tracks, StsParams(max_distance=800))
        for ev in base:
            assert any(w.vessel_a == ev.vessel_a and w.vessel_b == ev.vessel_b
                       and w.start <= ev.start and w.end >= ev.end
                       for w in wider)

    def test_monotone_in_duration(self):
        tracks = scenario(9)
        base = detect_sts(tracks, StsParams(min_duration=7200))
        looser = detect_sts(tracks, StsParams(min_duration=3600))
        assert keys(base) <= keys(looser)

    def test_event_fields_respect_params(self):
        for seed in range(4):
            for ev in detect_sts(scenario(seed)):
                assert ev.end - ev.start >= 7200
                assert ev.mean_separation <= 500.0
                assert ev.vessel_a < ev.vessel_b


class TestSerialization:
    def events(self):
        return detect_sts([stationary("A", LAT, 36.5),
                           stationary("B", LAT, 36.5 + DLON_300M)])

    def test_csv(self, tmp_path):
        path = tmp_path / "sts_events.csv"
        write_sts_csv(self.events(), path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == ("vessel_a,vessel_b,start,end,sts_class,"
                            "midpoint_lat,midpoint_lon,mean_separation_m")
        assert lines[1].startswith("A,B,1970-01-01T00:00:00Z,"
                                   "1970-01-01T03:00:00Z,Cargo STS,")

    def test_geojson(self):
        doc = sts_geojson(self.events(), StsParams())
        assert doc["type"] == "FeatureCollection"
        (feat,) = doc["features"]
        assert feat["geometry"]["type"] == "Point"
        lon, lat = feat["geometry"]["coordinates"]
        assert lat == pytest.approx(LAT)
        assert feat["properties"]["vessels"] == ["A", "B"]
        assert feat["properties"]["duration_s"] == 10_800
        assert doc["detection_params"]["max_distance_m"] == 500.0
