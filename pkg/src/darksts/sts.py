"""Ship-to-ship transfer detection over resampled AIS tracks.

A transfer candidate is a pair of vessels that stays within max_distance of
each other for at least min_duration while both report speed over ground
below max_sog. Tracks are resampled to a shared time grid; each grid slice
is bucketed into latitude/longitude cells sized so that any in-range pair
lands in the same or an adjacent cell, which keeps candidate generation
linear in practice. brute_force_sts applies the identical predicate with no
index and is the reference the indexed path is tested against.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .classify import StsClass, classify_sts, classify_vessel
from .errors import ConfigInvalid, DegenerateInput, EmptyFile, MalformedRow, MissingColumn
from .geo import EARTH_RADIUS_M, METERS_PER_DEGREE, GeoPoint, haversine_m
from .ingest import Track
from .timestamps import format_utc, parse_utc


@dataclass(frozen=True)
class StsParams:
    max_distance: float = 500.0   # meters
    min_duration: int = 7_200     # seconds
    max_sog: float = 1.0          # knots, strict upper bound
    resample_step: int = 300      # seconds
    max_gap: int = 1_800          # seconds

    def __post_init__(self):
        if min(self.max_distance, self.min_duration, self.max_sog,
               self.resample_step, self.max_gap) <= 0:
            raise ConfigInvalid("all detection parameters must be positive")
        if self.resample_step > self.min_duration:
            raise ConfigInvalid("resample_step must not exceed min_duration")
        if self.max_gap >= self.min_duration:
            raise ConfigInvalid("max_gap must be smaller than min_duration")


@dataclass(frozen=True)
class StsEvent:
    vessel_a: str  # lexicographically smaller id
    vessel_b: str
    start: int     # UTC epoch seconds
    end: int
    midpoint: GeoPoint
    sts_class: StsClass
    mean_separation: float  # meters

    def sort_key(self):
        return (self.start, self.end, self.vessel_a, self.vessel_b)


@dataclass(frozen=True, eq=False)
class GridTrack:
    """One track resampled onto multiples of the step size."""

    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    sog: np.ndarray

    def __len__(self) -> int:
        return len(self.t)


def _wrap_deg(x):
    """Map longitudes or deltas from (-360, 360) into [-180, 180).

    The conditional +/-360 is exact in float64 and leaves in-range values
    untouched, which a modulo-based wrap would not (it re-rounds values
    near the 500 m predicate boundary).
    """
    x = np.asarray(x, dtype=float)
    x = np.where(x >= 180.0, x - 360.0, x)
    return np.where(x < -180.0, x + 360.0, x)


_EMPTY_GRID = GridTrack(t=np.empty(0, np.int64), lat=np.empty(0, float),
                        lon=np.empty(0, float), sog=np.empty(0, float))


def resample_track(track: Track, step: int, max_gap: int) -> GridTrack:
    """Interpolate a track at multiples of step.

    Only segments between consecutive fixes no more than max_gap apart are
    filled; longer gaps yield no grid points, so nothing is ever
    extrapolated. Latitude, longitude (wrap-aware) and sog are interpolated
    linearly; over sub-kilometer spans this matches interpolation in the
    local tangent plane.
    """
    t = track.t
    if len(t) < 2:
        return _EMPTY_GRID
    t0, t1 = t[:-1], t[1:]
    bridged = (t1 - t0) <= max_gap
    grid_start = -((-t0) // step) * step       # ceil to a multiple
    grid_end = (t1 // step) * step             # floor to a multiple
    count = np.where(bridged,
                     np.maximum(0, (grid_end - grid_start) // step + 1), 0)
    total = int(count.sum())
    if total == 0:
        return _EMPTY_GRID
    seg = np.repeat(np.arange(len(count)), count)
    k = np.arange(total) - np.repeat(np.cumsum(count) - count, count)
    tg = grid_start[seg] + k * step

    # a fix sitting exactly on the grid is emitted by both adjacent segments
    keep = np.ones(total, bool)
    keep[1:] = tg[1:] != tg[:-1]

    frac = (tg - t0[seg]) / (t1[seg] - t0[seg])
    lat0, lat1 = track.lat[:-1][seg], track.lat[1:][seg]
    lon0 = track.lon[:-1][seg]
    dlon = _wrap_deg(track.lon[1:][seg] - lon0)
    sog0, sog1 = track.sog[:-1][seg], track.sog[1:][seg]
    return GridTrack(
        t=tg[keep],
        lat=(lat0 + frac * (lat1 - lat0))[keep],
        lon=_wrap_deg(lon0 + frac * dlon)[keep],
        sog=(sog0 + frac * (sog1 - sog0))[keep],
    )


def _finalize_event(vessel_a: str, vessel_b: str, sts_class: StsClass,
                    times: np.ndarray, seps: np.ndarray, midlats: np.ndarray,
                    midlons: np.ndarray) -> StsEvent:
    """Fold together-samples into an event; plain sequential float sums so
    the indexed and brute-force paths produce identical values."""
    n = len(times)
    lon0 = float(midlons[0])
    mean_dlon = sum(_wrap_deg(midlons - lon0).tolist()) / n
    return StsEvent(
        vessel_a=vessel_a,
        vessel_b=vessel_b,
        start=int(times[0]),
        end=int(times[-1]),
        midpoint=GeoPoint(sum(midlats.tolist()) / n,
                          float(_wrap_deg(lon0 + mean_dlon))),
        sts_class=sts_class,
        mean_separation=sum(seps.tolist()) / n,
    )


def _prepare(tracks: Iterable[Track], params: StsParams):
    """Sort tracks by id, classify, resample, and keep only slow samples."""
    ordered = sorted(tracks, key=lambda tr: tr.vessel.vessel_id)
    ids = [tr.vessel.vessel_id for tr in ordered]
    if len(set(ids)) != len(ids):
        raise DegenerateInput("duplicate vessel_id across tracks")
    classes = [classify_vessel(tr.vessel) for tr in ordered]
    code_parts, t_parts, lat_parts, lon_parts = [], [], [], []
    for code, tr in enumerate(ordered):
        g = resample_track(tr, params.resample_step, params.max_gap)
        slow = g.sog < params.max_sog
        if not slow.any():
            continue
        code_parts.append(np.full(int(slow.sum()), code, np.int64))
        t_parts.append(g.t[slow])
        lat_parts.append(g.lat[slow])
        lon_parts.append(g.lon[slow])
    if code_parts:
        samples = (np.concatenate(code_parts), np.concatenate(t_parts),
                   np.concatenate(lat_parts), np.concatenate(lon_parts))
    else:
        samples = (np.empty(0, np.int64), np.empty(0, np.int64),
                   np.empty(0, float), np.empty(0, float))
    return ids, classes, samples


_EMPTY_TOGETHER = tuple(np.empty(0, d) for d in
                        (np.int64, np.int64, float, float, float))


def _together_samples(code, t, lat, lon, n_vessels: int, params: StsParams):
    """Candidate pairs for one batch of slow samples -> together-samples.

    Returns (pair_id, t, separation, midpoint lat, midpoint lon) arrays.
    Cell sizes: latitude rows of max_distance/M degrees bound the row index
    difference of any in-range pair by 1; per-slice column width is the
    exact haversine longitude bound at the slice's extreme latitude, so the
    3x3 neighborhood is complete. Samples within one column of +180 get a
    ghost copy at lon-360 to close the antimeridian seam; ghost-ghost pairs
    are skipped because the real-real pair already covers them.
    """
    n = len(t)
    if n == 0:
        return _EMPTY_TOGETHER
    step = params.resample_step
    order = np.argsort(t // step, kind="stable")
    code, t, lat, lon = code[order], t[order], lat[order], lon[order]

    slice_ids = t // step
    uniq, first = np.unique(slice_ids, return_index=True)
    max_abs_lat = np.maximum.reduceat(np.abs(lat), first)
    half_angle = math.sin(params.max_distance / (2.0 * EARTH_RADIUS_M))
    cos_lat = np.cos(np.radians(np.minimum(max_abs_lat, 90.0)))
    ratio = np.minimum(1.0, half_angle / np.maximum(cos_lat, 1e-300))
    dlam_slice = 2.0 * np.degrees(np.arcsin(ratio)) * (1.0 + 1e-12)
    counts = np.diff(np.append(first, n))
    dlam = np.repeat(dlam_slice, counts)
    slice_rank = np.repeat(np.arange(len(uniq)), counts)

    dphi = params.max_distance / METERS_PER_DEGREE * (1.0 + 1e-12)
    row = np.floor(lat / dphi).astype(np.int64)
    col = np.floor(lon / dlam).astype(np.int64)

    ghost_of = np.flatnonzero(lon > 180.0 - dlam)
    ghost_col = np.floor((lon[ghost_of] - 360.0) / dlam[ghost_of]).astype(np.int64)

    orig = np.concatenate([np.arange(n), ghost_of])
    is_ghost = np.zeros(len(orig), bool)
    is_ghost[n:] = True
    all_row = row[orig]
    all_col = np.concatenate([col, ghost_col])
    all_rank = slice_rank[orig]

    row_lo, row_hi = int(all_row.min()), int(all_row.max())
    col_lo, col_hi = int(all_col.min()), int(all_col.max())
    row_span = row_hi - row_lo + 3
    col_span = col_hi - col_lo + 3
    if len(uniq) * row_span * col_span >= 2**62:  # python ints, no overflow
        raise DegenerateInput(
            "cell index space overflow: max_distance too small for the "
            "spatial extent of the data")
    key = ((all_rank * row_span + (all_row - row_lo + 1)) * col_span
           + (all_col - col_lo + 1))

    pos = np.argsort(key, kind="stable")
    ks = key[pos]
    n_aug = len(ks)

    left_pairs, right_pairs = [], []
    # same cell plus a half neighborhood; the other half is covered by the
    # mirrored pair
    for dr, dc in ((0, 0), (0, 1), (1, -1), (1, 0), (1, 1)):
        if dr == 0 and dc == 0:
            lo = np.arange(1, n_aug + 1)
            hi = np.searchsorted(ks, ks, side="right")
        else:
            target = ks + (dr * col_span + dc)
            lo = np.searchsorted(ks, target, side="left")
            hi = np.searchsorted(ks, target, side="right")
        cnt = np.maximum(0, hi - lo)
        tot = int(cnt.sum())
        if tot == 0:
            continue
        i_pos = np.repeat(np.arange(n_aug), cnt)
        j_pos = np.repeat(lo, cnt) + (np.arange(tot)
                                      - np.repeat(np.cumsum(cnt) - cnt, cnt))
        left_pairs.append(i_pos)
        right_pairs.append(j_pos)
    if not left_pairs:
        return _EMPTY_TOGETHER

    i_pos = np.concatenate(left_pairs)
    j_pos = np.concatenate(right_pairs)
    keep = ~(is_ghost[pos[i_pos]] & is_ghost[pos[j_pos]])
    a = orig[pos[i_pos[keep]]]
    b = orig[pos[j_pos[keep]]]
    keep = code[a] != code[b]
    a, b = a[keep], b[keep]
    swap = code[a] > code[b]
    a, b = np.where(swap, b, a), np.where(swap, a, b)

    sep = haversine_m(lat[a], lon[a], lat[b], lon[b])
    within = sep <= params.max_distance
    a, b, sep = a[within], b[within], sep[within]
    dlon_ab = _wrap_deg(lon[b] - lon[a])
    return (code[a] * n_vessels + code[b],
            t[a],
            sep,
            (lat[a] + lat[b]) / 2.0,
            _wrap_deg(lon[a] + dlon_ab / 2.0))


def _events_from_samples(pair_id, tt, sep, midlat, midlon, ids, classes,
                         params: StsParams) -> list[StsEvent]:
    """Merge together-samples into maximal runs and keep long ones."""
    if len(tt) == 0:
        return []
    order = np.lexsort((tt, pair_id))
    pair_id, tt = pair_id[order], tt[order]
    sep, midlat, midlon = sep[order], midlat[order], midlon[order]

    fresh = np.ones(len(tt), bool)
    fresh[1:] = (pair_id[1:] != pair_id[:-1]) | (tt[1:] != tt[:-1])
    pair_id, tt = pair_id[fresh], tt[fresh]
    sep, midlat, midlon = sep[fresh], midlat[fresh], midlon[fresh]

    new_run = np.ones(len(tt), bool)
    new_run[1:] = (pair_id[1:] != pair_id[:-1]) | \
        (tt[1:] - tt[:-1] > params.max_gap)
    starts = np.flatnonzero(new_run)
    ends = np.append(starts[1:], len(tt)) - 1

    events = []
    n_vessels = len(ids)
    for s, e in zip(starts, ends):
        if tt[e] - tt[s] < params.min_duration:
            continue
        p, q = divmod(int(pair_id[s]), n_vessels)
        events.append(_finalize_event(
            ids[p], ids[q], classify_sts(classes[p], classes[q]),
            tt[s:e + 1], sep[s:e + 1], midlat[s:e + 1], midlon[s:e + 1]))
    events.sort(key=StsEvent.sort_key)
    return events


def detect_sts(tracks: Iterable[Track], params: StsParams = StsParams(),
               workers: int = 1) -> list[StsEvent]:
    """Find STS events with the grid index.

    workers > 1 splits the time range into contiguous slice bands handled
    by a thread pool; slices are independent, so the merged result is
    identical to the sequential one.
    """
    ids, classes, (code, t, lat, lon) = _prepare(tracks, params)
    n_vessels = len(ids)
    if workers > 1 and len(t):
        step = params.resample_step
        edges = np.linspace(int(t.min()) // step, int(t.max()) // step + 1,
                            workers + 1).astype(np.int64)
        bands = []
        for w in range(workers):
            mask = (t // step >= edges[w]) & (t // step < edges[w + 1])
            bands.append(tuple(arr[mask] for arr in (code, t, lat, lon)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                lambda band: _together_samples(*band, n_vessels, params),
                bands))
        merged = tuple(np.concatenate([p[i] for p in parts])
                       for i in range(5))
    else:
        merged = _together_samples(code, t, lat, lon, n_vessels, params)
    return _events_from_samples(*merged, ids, classes, params)


def brute_force_sts(tracks: Iterable[Track],
                    params: StsParams = StsParams()) -> list[StsEvent]:
    """Reference detector: all vessel pairs, all common slices, no index."""
    ordered = sorted(tracks, key=lambda tr: tr.vessel.vessel_id)
    if len({tr.vessel.vessel_id for tr in ordered}) != len(ordered):
        raise DegenerateInput("duplicate vessel_id across tracks")
    grids = [resample_track(tr, params.resample_step, params.max_gap)
             for tr in ordered]
    classes = [classify_vessel(tr.vessel) for tr in ordered]

    events = []
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            gi, gj = grids[i], grids[j]
            common, ia, ib = np.intersect1d(gi.t, gj.t, return_indices=True)
            if len(common) == 0:
                continue
            slow = (gi.sog[ia] < params.max_sog) & (gj.sog[ib] < params.max_sog)
            sep = haversine_m(gi.lat[ia], gi.lon[ia], gj.lat[ib], gj.lon[ib])
            together = slow & (sep <= params.max_distance)
            if not together.any():
                continue
            times = common[together]
            seps = sep[together]
            midlat = (gi.lat[ia] + gj.lat[ib])[together] / 2.0
            dlon = _wrap_deg(gj.lon[ib] - gi.lon[ia])[together]
            midlon = _wrap_deg(gi.lon[ia][together] + dlon / 2.0)
            cls = classify_sts(classes[i], classes[j])
            va = ordered[i].vessel.vessel_id
            vb = ordered[j].vessel.vessel_id

            run_start = 0
            for k in range(1, len(times) + 1):
                if k == len(times) or times[k] - times[k - 1] > params.max_gap:
                    if times[k - 1] - times[run_start] >= params.min_duration:
                        sl = slice(run_start, k)
                        events.append(_finalize_event(
                            va, vb, cls, times[sl], seps[sl],
                            midlat[sl], midlon[sl]))
                    run_start = k
    events.sort(key=StsEvent.sort_key)
    return events


STS_CSV_COLUMNS = ("vessel_a", "vessel_b", "start", "end", "sts_class",
                   "midpoint_lat", "midpoint_lon", "mean_separation_m")


def write_sts_csv(events: Sequence[StsEvent], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(STS_CSV_COLUMNS)
        for ev in events:
            writer.writerow([
                ev.vessel_a, ev.vessel_b, format_utc(ev.start),
                format_utc(ev.end), ev.sts_class.value,
                repr(ev.midpoint.lat), repr(ev.midpoint.lon),
                repr(ev.mean_separation),
            ])


def load_sts_csv(path) -> list[StsEvent]:
    """Read events back in the shape write_sts_csv produced."""
    events: list[StsEvent] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise EmptyFile(f"{path}: no header row")
        missing = [c for c in STS_CSV_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        for n, row in enumerate(reader, start=2):
            try:
                events.append(StsEvent(
                    vessel_a=row["vessel_a"],
                    vessel_b=row["vessel_b"],
                    start=parse_utc(row["start"]),
                    end=parse_utc(row["end"]),
                    midpoint=GeoPoint(float(row["midpoint_lat"]),
                                      float(row["midpoint_lon"])),
                    sts_class=StsClass(row["sts_class"]),
                    mean_separation=float(row["mean_separation_m"]),
                ))
            except (ValueError, KeyError) as exc:
                raise MalformedRow(f"{path} line {n}: {exc}") from None
    return events


def sts_geojson(events: Sequence[StsEvent],
                params: Optional[StsParams] = None) -> dict:
    """One point feature per event at its midpoint."""
    features = []
    for ev in events:
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point",
                         "coordinates": [ev.midpoint.lon, ev.midpoint.lat]},
            "properties": {
                "vessels": [ev.vessel_a, ev.vessel_b],
                "start": format_utc(ev.start),
                "end": format_utc(ev.end),
                "duration_s": ev.end - ev.start,
                "sts_class": ev.sts_class.value,
                "mean_separation_m": ev.mean_separation,
            },
        })
    out = {"type": "FeatureCollection", "features": features}
    if params is not None:
        out["detection_params"] = {
            "max_distance_m": params.max_distance,
            "min_duration_s": params.min_duration,
            "max_sog_kn": params.max_sog,
            "resample_step_s": params.resample_step,
            "max_gap_s": params.max_gap,
        }
    return out


def write_sts_geojson(events: Sequence[StsEvent], path,
                      params: Optional[StsParams] = None) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(sts_geojson(events, params), handle, indent=2)
        handle.write("\n")
