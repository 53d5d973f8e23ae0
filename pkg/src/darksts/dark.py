"""Auditing external detector output against AIS presence.

A detection labeled as a transfer event is dark when fewer than two
distinct AIS identities broadcast within the search radius and time
window around the acquisition. Draught change across the window is
attached as corroborating evidence but never drives the verdict.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .classify import ShipClass, StsClass
from .errors import (
    ConfigInvalid,
    MalformedRow,
    MissingColumn,
    EmptyFile,
    MissingScene,
    NotAnStsDetection,
)
from .geo import GeoPoint, haversine_m
from .ingest import Track
from .scenes import SceneMeta, pixel_to_geo
from .timestamps import format_utc

DEFAULT_RADIUS_M = 500.0
DEFAULT_WINDOW_S = 43_200     # 12 h on either side
DEFAULT_MIN_IDENTITIES = 2

STS_LABELS = frozenset({StsClass.STS_CARGO.value, StsClass.STS_TANKER.value})
DETECTION_LABELS = STS_LABELS | {
    ShipClass.GENERAL_CARGO.value, ShipClass.BULK_CARRIER.value,
    ShipClass.TANKER.value, ShipClass.VLCC.value,
}

DETECTIONS_CSV_COLUMNS = ("scene_id", "class_label", "x0", "y0", "w", "h",
                          "confidence")


@dataclass(frozen=True)
class AuditParams:
    radius: float = DEFAULT_RADIUS_M        # meters
    window: int = DEFAULT_WINDOW_S          # seconds each side
    min_identities: int = DEFAULT_MIN_IDENTITIES

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigInvalid(f"radius {self.radius} must be positive")
        if self.window <= 0:
            raise ConfigInvalid(f"window {self.window} must be positive")
        if self.min_identities <= 0:
            raise ConfigInvalid(
                f"min_identities {self.min_identities} must be positive")


@dataclass(frozen=True)
class Detection:
    scene_id: str
    class_label: str
    bbox: tuple                 # (x0, y0, w, h) pixels
    confidence: float
    geo_center: GeoPoint        # bbox center through pixel_to_geo
    acquired_at: int            # copied from the scene at load time

    def __post_init__(self):
        if self.class_label not in DETECTION_LABELS:
            raise MalformedRow(f"unknown class label {self.class_label!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise MalformedRow(f"confidence {self.confidence} outside [0, 1]")
        x0, y0, w, h = self.bbox
        if x0 < 0 or y0 < 0 or w < 0 or h < 0:
            raise MalformedRow(f"bbox {self.bbox} has negative components")


@dataclass(frozen=True)
class DarkVerdict:
    detection: Detection
    distinct_identities: frozenset
    is_dark: bool
    draught_deltas: tuple       # ((vessel_id, meters), ...) sorted by vessel
    evidence_window: tuple      # (t_min, t_max) epoch seconds


def load_detections(path, scenes: Iterable[SceneMeta]) -> list[Detection]:
    by_id = {s.scene_id: s for s in scenes}
    detections: list[Detection] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise EmptyFile(f"{path}: no header row")
        missing = [c for c in DETECTIONS_CSV_COLUMNS
                   if c not in reader.fieldnames]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) "
                                f"{', '.join(missing)}")
        for n, row in enumerate(reader, start=2):
            scene = by_id.get(row["scene_id"])
            if scene is None:
                raise MissingScene(
                    f"{path} line {n}: unknown scene {row['scene_id']!r}")
            try:
                bbox = tuple(float(row[k]) for k in ("x0", "y0", "w", "h"))
                confidence = float(row["confidence"])
            except ValueError as exc:
                raise MalformedRow(f"{path} line {n}: {exc}") from None
            x0, y0, w, h = bbox
            if x0 + w > scene.width or y0 + h > scene.height:
                raise MalformedRow(
                    f"{path} line {n}: bbox {bbox} exceeds scene bounds "
                    f"{scene.width}x{scene.height}")
            try:
                detections.append(Detection(
                    scene_id=scene.scene_id,
                    class_label=row["class_label"],
                    bbox=bbox,
                    confidence=confidence,
                    geo_center=pixel_to_geo(scene, x0 + w / 2.0,
                                            y0 + h / 2.0),
                    acquired_at=scene.acquired_at,
                ))
            except MalformedRow as exc:
                raise MalformedRow(f"{path} line {n}: {exc}") from None
    return detections


def write_detections_csv(detections: Sequence[Detection], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(DETECTIONS_CSV_COLUMNS)
        for d in detections:
            x0, y0, w, h = d.bbox
            writer.writerow([d.scene_id, d.class_label, repr(x0), repr(y0),
                             repr(w), repr(h), repr(d.confidence)])


def audit_detection(d: Detection, tracks: Iterable[Track],
                    params: AuditParams = AuditParams()) -> DarkVerdict:
    """Count AIS identities near the detection; fewer than the minimum
    makes it dark.

    An identity needs at least one fix inside both the time window and
    the radius. Draught deltas span the first and last fixes inside the
    time window alone and are reported only when both carry a draught.
    """
    if d.class_label not in STS_LABELS:
        raise NotAnStsDetection(
            f"label {d.class_label!r} is not a transfer class")
    t_lo = d.acquired_at - params.window
    t_hi = d.acquired_at + params.window
    identities = []
    deltas = []
    for track in sorted(tracks, key=lambda tr: tr.vessel.vessel_id):
        i = int(np.searchsorted(track.t, t_lo, side="left"))
        j = int(np.searchsorted(track.t, t_hi, side="right"))
        if i >= j:
            continue
        dist = haversine_m(track.lat[i:j], track.lon[i:j],
                           d.geo_center.lat, d.geo_center.lon)
        if not bool(np.any(dist <= params.radius)):
            continue
        identities.append(track.vessel.vessel_id)
        first, last = track.draught[i], track.draught[j - 1]
        if not (np.isnan(first) or np.isnan(last)):
            deltas.append((track.vessel.vessel_id, float(last - first)))
    return DarkVerdict(
        detection=d,
        distinct_identities=frozenset(identities),
        is_dark=len(identities) < params.min_identities,
        draught_deltas=tuple(deltas),
        evidence_window=(t_lo, t_hi),
    )


@dataclass(frozen=True)
class DarkStsReport:
    params: AuditParams
    total_detections: int
    sts_detections: int
    dark_count: int
    verdicts: tuple                 # DarkVerdict per STS detection, input order
    dark_participation: tuple       # ((vessel_id, dark event count), ...)
    timeline: tuple                 # ((YYYY-MM-DD, sts, dark), ...)
    class_census: tuple             # ((label, count), ...)
    notes: tuple = ()


def scan(detections: Sequence[Detection], tracks: Sequence[Track],
         params: AuditParams = AuditParams(), workers: int = 1) -> DarkStsReport:
    """Audit every transfer-class detection and aggregate the results."""
    sts = [d for d in detections if d.class_label in STS_LABELS]
    if workers > 1 and len(sts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            verdicts = list(pool.map(
                lambda d: audit_detection(d, tracks, params), sts))
    else:
        verdicts = [audit_detection(d, tracks, params) for d in sts]

    dark = [v for v in verdicts if v.is_dark]
    participation = Counter(vessel for v in dark
                            for vessel in v.distinct_identities)
    days: Counter = Counter()
    dark_days: Counter = Counter()
    for v in verdicts:
        day = format_utc(v.detection.acquired_at)[:10]
        days[day] += 1
        if v.is_dark:
            dark_days[day] += 1
    census = Counter(d.class_label for d in detections)

    notes = []
    if params.window != DEFAULT_WINDOW_S:
        notes.append(f"audit window set to +/-{params.window} s "
                     f"(default +/-{DEFAULT_WINDOW_S} s)")
    if params.radius != DEFAULT_RADIUS_M:
        notes.append(f"audit radius set to {params.radius} m "
                     f"(default {DEFAULT_RADIUS_M} m)")

    return DarkStsReport(
        params=params,
        total_detections=len(detections),
        sts_detections=len(sts),
        dark_count=len(dark),
        verdicts=tuple(verdicts),
        dark_participation=tuple(sorted(participation.items())),
        timeline=tuple((day, days[day], dark_days[day])
                       for day in sorted(days)),
        class_census=tuple(sorted(census.items())),
        notes=tuple(notes),
    )


def dark_report_geojson(report: DarkStsReport) -> dict:
    features = []
    for v in report.verdicts:
        d = v.detection
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point",
                         "coordinates": [d.geo_center.lon, d.geo_center.lat]},
            "properties": {
                "scene_id": d.scene_id,
                "class_label": d.class_label,
                "confidence": d.confidence,
                "acquired_at": format_utc(d.acquired_at),
                "is_dark": v.is_dark,
                "identities": sorted(v.distinct_identities),
                "draught_deltas": {vessel: delta
                                   for vessel, delta in v.draught_deltas},
                "evidence_window": [format_utc(v.evidence_window[0]),
                                    format_utc(v.evidence_window[1])],
            },
        })
    return {
        "type": "FeatureCollection",
        "params": {
            "radius_m": report.params.radius,
            "window_s": report.params.window,
            "min_identities": report.params.min_identities,
        },
        "summary": {
            "total_detections": report.total_detections,
            "sts_detections": report.sts_detections,
            "dark_count": report.dark_count,
            "dark_participation": {vessel: count for vessel, count
                                   in report.dark_participation},
            "timeline": [{"date": day, "sts": sts, "dark": dark}
                         for day, sts, dark in report.timeline],
            "class_census": {label: count for label, count
                             in report.class_census},
            "notes": list(report.notes),
        },
        "features": features,
    }


def write_dark_report(report: DarkStsReport, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(dark_report_geojson(report), handle, indent=2)
        handle.write("\n")
