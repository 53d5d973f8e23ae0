"""Cross-referencing AIS tracks with satellite scene metadata.

Per scene: pick each vessel's temporally nearest fix inside the match
window, keep the ones that fall inside the scene footprint, and cut
square buffer tiles around single vessels and active transfer events.
The output is a manifest of pixel windows, not rasters; imagery itself
never enters this pipeline.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .classify import ShipClass, StsClass, classify_vessel
from .errors import (
    DegeneratePolygon,
    EmptyFile,
    MalformedRow,
    MissingColumn,
    OutOfScene,
)
from .geo import GeoPoint, LocalOffset, local_offset, offset_to_geo, point_in_footprint
from .ingest import PositionFix, Track, VesselRecord
from .sts import StsEvent
from .timestamps import format_utc, parse_utc

MATCH_WINDOW_S = 7_200      # nearest fix no further than 2 h from acquisition
DEFAULT_BUFFER_M = 500.0    # buffer on each side of the tile center
DEFAULT_CLOUD_LIMIT = 0.7   # scenes above this cloud score are not used

# the four single-ship classes that appear in manifests
TILE_SHIP_CLASSES = frozenset({ShipClass.GENERAL_CARGO, ShipClass.BULK_CARRIER,
                               ShipClass.TANKER, ShipClass.VLCC})

SCENE_COLUMNS = ("scene_id", "acquired_at", "origin_lat", "origin_lon",
                 "width", "height", "resolution", "cloud_score",
                 "footprint_wkt")


@dataclass(frozen=True)
class SceneMeta:
    scene_id: str
    acquired_at: int            # UTC epoch seconds
    origin: GeoPoint            # upper-left corner
    width: int                  # pixels
    height: int
    resolution: float = 3.0     # meters per pixel
    cloud_score: float = 0.0
    footprint: tuple = ()       # GeoPoint ring, open (no repeated last vertex)

    def __post_init__(self):
        if self.resolution <= 0:
            raise MalformedRow(f"resolution {self.resolution} must be positive")
        if not 0.0 <= self.cloud_score <= 1.0:
            raise MalformedRow(f"cloud_score {self.cloud_score} outside [0, 1]")
        if self.width <= 0 or self.height <= 0:
            raise MalformedRow("scene pixel dimensions must be positive")
        if len(self.footprint) < 3:
            raise DegeneratePolygon("footprint needs at least 3 vertices")
        area = 0.0
        for i, p in enumerate(self.footprint):
            q = self.footprint[(i + 1) % len(self.footprint)]
            area += p.lon * q.lat - q.lon * p.lat
        if area == 0.0:
            raise DegeneratePolygon("footprint has zero area")


@dataclass(frozen=True)
class TileRecord:
    scene_id: str
    center: GeoPoint
    extent: float                    # square side, meters
    pixel_window: tuple              # (x0, y0, w, h), clamped to the scene
    label: str                       # serialized class label
    source: tuple                    # vessel ids, 1 or 2 entries
    ais_time_delta: int              # seconds, fix time minus acquisition


@dataclass(frozen=True)
class SceneMatch:
    vessel: VesselRecord
    fix: PositionFix
    delta: int  # fix.t - scene.acquired_at, seconds


_WKT_RE = re.compile(r"^\s*POLYGON\s*\(\(\s*(.*?)\s*\)\)\s*$",
                     re.IGNORECASE | re.DOTALL)


def parse_wkt_polygon(text: str) -> tuple:
    """POLYGON((lon lat, ...)) -> GeoPoint ring; a closing vertex is dropped."""
    m = _WKT_RE.match(text)
    if not m:
        raise MalformedRow(f"not a WKT polygon: {text[:40]!r}")
    points = []
    for pair in m.group(1).split(","):
        parts = pair.split()
        if len(parts) != 2:
            raise MalformedRow(f"bad WKT coordinate pair {pair!r}")
        try:
            lon, lat = float(parts[0]), float(parts[1])
        except ValueError:
            raise MalformedRow(f"bad WKT coordinate pair {pair!r}") from None
        points.append(GeoPoint(lat, lon))
    if len(points) >= 2 and points[0] == points[-1]:
        points.pop()
    return tuple(points)


def polygon_wkt(points: Sequence[GeoPoint]) -> str:
    ring = list(points) + [points[0]]
    return "POLYGON((" + ", ".join(f"{p.lon!r} {p.lat!r}" for p in ring) + "))"


def load_scenes(path) -> list[SceneMeta]:
    scenes: list[SceneMeta] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise EmptyFile(f"{path}: no header row")
        missing = [c for c in SCENE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        for n, row in enumerate(reader, start=2):
            try:
                scene = SceneMeta(
                    scene_id=row["scene_id"],
                    acquired_at=parse_utc(row["acquired_at"]),
                    origin=GeoPoint(float(row["origin_lat"]),
                                    float(row["origin_lon"])),
                    width=int(row["width"]),
                    height=int(row["height"]),
                    resolution=float(row["resolution"]),
                    cloud_score=float(row["cloud_score"]),
                    footprint=parse_wkt_polygon(row["footprint_wkt"]),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedRow(f"{path} line {n}: {exc}") from None
            except (MalformedRow, DegeneratePolygon) as exc:
                raise type(exc)(f"{path} line {n}: {exc}") from None
            if scene.scene_id in seen:
                raise MalformedRow(
                    f"{path} line {n}: duplicate scene_id {scene.scene_id!r}")
            seen.add(scene.scene_id)
            scenes.append(scene)
    return scenes


def write_scenes_csv(scenes: Sequence[SceneMeta], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(SCENE_COLUMNS)
        for s in scenes:
            writer.writerow([
                s.scene_id, format_utc(s.acquired_at), repr(s.origin.lat),
                repr(s.origin.lon), s.width, s.height, repr(s.resolution),
                repr(s.cloud_score), polygon_wkt(s.footprint),
            ])


# trig round-trip noise at the raster edge, in pixels
_EDGE_TOL = 1e-6


def _snap_edge(v: float, hi: int) -> float:
    if -_EDGE_TOL <= v < 0.0:
        return 0.0
    if hi < v <= hi + _EDGE_TOL:
        return float(hi)
    return v


def geo_to_pixel(scene: SceneMeta, p: GeoPoint) -> tuple:
    """Fractional pixel coordinates of p in a north-up scene raster."""
    offset = local_offset(scene.origin, p)
    x = _snap_edge(offset.east / scene.resolution, scene.width)
    y = _snap_edge(-offset.north / scene.resolution, scene.height)
    if not (0.0 <= x <= scene.width and 0.0 <= y <= scene.height):
        raise OutOfScene(
            f"({p.lat}, {p.lon}) maps to pixel ({x:.1f}, {y:.1f}), outside "
            f"{scene.width}x{scene.height}")
    return x, y


def pixel_to_geo(scene: SceneMeta, x: float, y: float) -> GeoPoint:
    if not (0.0 <= x <= scene.width and 0.0 <= y <= scene.height):
        raise OutOfScene(f"pixel ({x}, {y}) outside "
                         f"{scene.width}x{scene.height}")
    return offset_to_geo(LocalOffset(east=x * scene.resolution,
                                     north=-y * scene.resolution),
                         scene.origin)


def match_fixes_to_scene(scene: SceneMeta, tracks: Iterable[Track],
                         max_delta: int = MATCH_WINDOW_S) -> list[SceneMatch]:
    """Per vessel, the fix nearest in time to the acquisition.

    Vessels are dropped when the nearest fix is more than max_delta away or
    lies outside the scene footprint. Equidistant fixes resolve to the
    earlier one.
    """
    matches = []
    acq = scene.acquired_at
    for track in sorted(tracks, key=lambda tr: tr.vessel.vessel_id):
        if len(track.t) == 0:
            continue
        i = int(np.searchsorted(track.t, acq))
        best: Optional[int] = None
        for j in (i - 1, i):  # earlier candidate first, so ties keep it
            if 0 <= j < len(track.t):
                if best is None or abs(int(track.t[j]) - acq) < \
                        abs(int(track.t[best]) - acq):
                    best = j
        if best is None:
            continue
        delta = int(track.t[best]) - acq
        if abs(delta) > max_delta:
            continue
        pos = GeoPoint(float(track.lat[best]), float(track.lon[best]))
        if not point_in_footprint(pos, scene.footprint):
            continue
        d = track.draught[best]
        fix = PositionFix(vessel_id=track.vessel.vessel_id,
                          t=int(track.t[best]), pos=pos,
                          sog=float(track.sog[best]),
                          draught=None if np.isnan(d) else float(d))
        matches.append(SceneMatch(vessel=track.vessel, fix=fix, delta=delta))
    return matches


def _pixel_window(scene: SceneMeta, center: GeoPoint,
                  side_px: int) -> Optional[tuple]:
    try:
        x, y = geo_to_pixel(scene, center)
    except OutOfScene:
        return None
    x0 = math.floor(x) - side_px // 2
    y0 = math.floor(y) - side_px // 2
    cx0, cy0 = max(0, x0), max(0, y0)
    cx1 = min(scene.width, x0 + side_px)
    cy1 = min(scene.height, y0 + side_px)
    if cx1 <= cx0 or cy1 <= cy0:
        return None
    return (cx0, cy0, cx1 - cx0, cy1 - cy0)


def make_tiles(scene: SceneMeta, matches: Sequence[SceneMatch],
               sts_events: Sequence[StsEvent],
               buffer_m: float = DEFAULT_BUFFER_M) -> list[TileRecord]:
    """Tiles for one scene: one per active event, one per remaining vessel.

    The tile side is 2 x buffer_m, ceil-converted to pixels so the buffer
    is never undercut. Event participants never get singleton tiles, and
    classes outside the training taxonomy produce no tile at all.
    """
    side_px = math.ceil(2.0 * buffer_m / scene.resolution)
    acq = scene.acquired_at
    by_vessel = {m.vessel.vessel_id: m for m in matches}
    tiles: list[TileRecord] = []

    active = [ev for ev in sts_events if ev.start <= acq <= ev.end]
    in_active_event = {v for ev in active for v in (ev.vessel_a, ev.vessel_b)}
    seen: set = set()
    for ev in sorted(active, key=StsEvent.sort_key):
        identity = (ev.vessel_a, ev.vessel_b, ev.start, ev.end)
        if identity in seen:
            continue
        seen.add(identity)
        deltas = [by_vessel[v].delta for v in (ev.vessel_a, ev.vessel_b)
                  if v in by_vessel]
        if not deltas or ev.sts_class is StsClass.STS_MIXED:
            continue
        window = _pixel_window(scene, ev.midpoint, side_px)
        if window is None:
            continue
        tiles.append(TileRecord(
            scene_id=scene.scene_id, center=ev.midpoint,
            extent=2.0 * buffer_m, pixel_window=window,
            label=ev.sts_class.value, source=(ev.vessel_a, ev.vessel_b),
            ais_time_delta=min(deltas, key=lambda d: (abs(d), d)),
        ))

    for vessel_id, m in sorted(by_vessel.items()):
        if vessel_id in in_active_event:
            continue
        ship_class = classify_vessel(m.vessel)
        if ship_class not in TILE_SHIP_CLASSES:
            continue
        window = _pixel_window(scene, m.fix.pos, side_px)
        if window is None:
            continue
        tiles.append(TileRecord(
            scene_id=scene.scene_id, center=m.fix.pos, extent=2.0 * buffer_m,
            pixel_window=window, label=ship_class.value, source=(vessel_id,),
            ais_time_delta=m.delta,
        ))
    return tiles


def build_manifest(scenes: Iterable[SceneMeta], tracks: Sequence[Track],
                   sts_events: Sequence[StsEvent],
                   buffer_m: float = DEFAULT_BUFFER_M,
                   cloud_limit: float = DEFAULT_CLOUD_LIMIT,
                   max_delta: int = MATCH_WINDOW_S) -> list[TileRecord]:
    """Manifest across scenes; cloudy scenes contribute nothing."""
    tiles: list[TileRecord] = []
    for scene in sorted(scenes, key=lambda s: s.scene_id):
        if scene.cloud_score > cloud_limit:
            continue
        matches = match_fixes_to_scene(scene, tracks, max_delta)
        tiles.extend(make_tiles(scene, matches, sts_events, buffer_m))
    return tiles


TILES_CSV_COLUMNS = ("scene_id", "label", "x0", "y0", "w", "h",
                     "center_lat", "center_lon", "vessels",
                     "ais_time_delta_s")


def write_tiles_csv(tiles: Sequence[TileRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(TILES_CSV_COLUMNS)
        for tile in tiles:
            x0, y0, w, h = tile.pixel_window
            writer.writerow([
                tile.scene_id, tile.label, x0, y0, w, h,
                repr(tile.center.lat), repr(tile.center.lon),
                ";".join(tile.source), tile.ais_time_delta,
            ])
