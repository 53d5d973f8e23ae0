"""Deterministic synthetic scenarios: fleet, tracks, planted transfers,
scene metadata, and stub detections.

Layout is a lattice sized off the detection radius: anchored vessels and
transfer sites sit on even rows, transit lanes on odd rows, spacing at
least six detection radii. Background pairs therefore never come near
the predicate, and every planted event clears each threshold with slack,
so recovery is exact rather than probabilistic.

All randomness flows through one numpy PCG64 generator; regeneration
from (seed, config) is byte-identical.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .classify import StsClass, classify_sts, classify_vessel
from .dark import AuditParams, Detection, write_detections_csv
from .errors import ConfigInvalid, IoFailure, MalformedRow
from .geo import METERS_PER_DEGREE, GeoPoint, LocalOffset, offset_to_geo
from .ingest import CargoFamily, FixTable, VesselRecord, write_position_csv
from .scenes import (
    SceneMeta,
    TILE_SHIP_CLASSES,
    geo_to_pixel,
    pixel_to_geo,
    write_scenes_csv,
)
from .sts import StsParams
from .timestamps import format_utc, parse_utc

KNOTS_PER_MPS = 1.0 / 0.514444
TRAVEL_SPEED_MPS = 3.0          # partner shuttling between berth and site
DWT_BANDS = {
    # (cargo_family, low, high) per single-ship class
    "gc": (CargoFamily.DRY, 1_500.0, 5_800.0),
    "bulk": (CargoFamily.DRY, 35_000.0, 180_000.0),
    "other_dry": (CargoFamily.DRY, 8_000.0, 28_000.0),
    "tanker": (CargoFamily.LIQUID, 1_500.0, 5_800.0),
    "vlcc": (CargoFamily.LIQUID, 110_000.0, 320_000.0),
    "other_liquid": (CargoFamily.LIQUID, 10_000.0, 90_000.0),
}
_BACKGROUND_MIX = (("gc", 0.3), ("bulk", 0.15), ("tanker", 0.2),
                   ("vlcc", 0.1), ("other_dry", 0.15), ("other_liquid", 0.1))

TRUTH_CSV_COLUMNS = ("event_id", "vessel_a", "vessel_b", "start", "end",
                     "sts_class", "separation_m", "site_lat", "site_lon",
                     "is_dark", "suppressed", "scene_id")


@dataclass(frozen=True)
class SynthConfig:
    n_vessels: int = 20
    duration: int = 172_800          # seconds
    n_sts: int = 4
    dark_fraction: float = 0.0
    center: GeoPoint = GeoPoint(44.9, 36.4)
    region_radius_m: float = 30_000.0
    start: int = 1_690_000_000       # UTC epoch seconds
    fix_interval: int = 300          # seconds between reports
    scene_size_px: int = 1_000
    scene_resolution: float = 3.0    # m/px
    sts: StsParams = field(default_factory=StsParams)
    audit: AuditParams = field(default_factory=AuditParams)

    def __post_init__(self):
        if self.n_vessels < 1:
            raise ConfigInvalid("n_vessels must be positive")
        if self.n_sts < 0:
            raise ConfigInvalid("n_sts must not be negative")
        if self.n_vessels < 2 * self.n_sts:
            raise ConfigInvalid(
                f"{self.n_sts} transfers need {2 * self.n_sts} vessels; "
                f"got {self.n_vessels}")
        if self.duration <= 0 or self.fix_interval <= 0:
            raise ConfigInvalid("duration and fix_interval must be positive")
        if not 0.0 <= self.dark_fraction <= 1.0:
            raise ConfigInvalid(
                f"dark_fraction {self.dark_fraction} outside [0, 1]")
        if self.fix_interval * 2 > self.sts.max_gap:
            raise ConfigInvalid(
                "fix_interval too coarse; tracks would not stay contiguous "
                "under the detection gap limit")
        if self.region_radius_m <= 0 or self.scene_size_px <= 0 \
                or self.scene_resolution <= 0:
            raise ConfigInvalid("region and scene dimensions must be positive")


@dataclass(frozen=True)
class PlantedEvent:
    event_id: str
    vessel_a: str                # lexicographically smaller id
    vessel_b: str
    start: int
    end: int
    sts_class: StsClass
    separation: float            # planted hull separation, meters
    site: GeoPoint
    is_dark: bool
    suppressed: Optional[str]    # vessel whose fixes are deleted
    scene_id: str


@dataclass(frozen=True)
class Scenario:
    seed: int
    config: SynthConfig
    registry: tuple              # VesselRecord, vessel_id order
    fixes: FixTable
    scenes: tuple                # SceneMeta per planted event
    truth: tuple                 # PlantedEvent per planted event
    detections: tuple            # stub detector output


def _draw_imo(rng, taken: set) -> int:
    while True:
        stem = int(rng.integers(100_000, 1_000_000))
        weighted = sum(int(d) * w for d, w in
                       zip(str(stem), range(7, 1, -1)))
        imo = stem * 10 + weighted % 10
        if imo not in taken:
            taken.add(imo)
            return imo


def _draw_vessel(rng, i: int, band_key: str, taken_imos: set) -> tuple:
    family, lo, hi = DWT_BANDS[band_key]
    dwt = float(round(rng.uniform(lo, hi)))
    length = min(480.0, max(12.0, round(8.0 * dwt ** 0.28, 1)))
    beam = round(min(length - 1.0, max(3.0, length / 6.5)), 1)
    record = VesselRecord(
        vessel_id=f"V{i:03d}", imo=_draw_imo(rng, taken_imos),
        name=f"SYNTH {i:03d}", length_m=length, beam_m=beam, dwt=dwt,
        cargo_family=family)
    return record, float(round(rng.uniform(4.0, 14.0), 1))


def _drift(tt, node, radius, speed_mps, phase, t0):
    ang = phase + (speed_mps / radius) * (tt - t0)
    east = node[0] + radius * np.sin(ang)
    north = node[1] + radius * np.cos(ang)
    return east, north


class _Ledger:
    """Accumulates per-vessel fix columns in vessel order."""

    def __init__(self):
        self.vessel_ids = []
        self.chunks = []

    def add(self, vessel_id, tt, east, north, sog_kn, draught, center):
        if len(tt) == 0:
            return
        lat = center.lat + north / METERS_PER_DEGREE
        lon = center.lon + east / (METERS_PER_DEGREE
                                   * math.cos(math.radians(center.lat)))
        code = len(self.vessel_ids)
        self.vessel_ids.append(vessel_id)
        self.chunks.append((np.full(len(tt), code, np.int64),
                            tt.astype(np.int64), lat, lon,
                            np.asarray(sog_kn, float)
                            * np.ones(len(tt)),
                            np.asarray(draught, float) * np.ones(len(tt))))

    def table(self) -> FixTable:
        if not self.chunks:
            empty = np.empty(0)
            return FixTable(self.vessel_ids, np.empty(0, np.int64),
                            np.empty(0, np.int64), empty, empty, empty,
                            empty)
        cols = [np.concatenate([c[j] for c in self.chunks])
                for j in range(6)]
        return FixTable(self.vessel_ids, cols[0], cols[1], cols[2], cols[3],
                        cols[4], cols[5])


def generate_scenario(seed: int,
                      config: SynthConfig = SynthConfig()) -> Scenario:
    cfg = config
    rng = np.random.default_rng(seed)
    sts = cfg.sts
    n_pairs = cfg.n_sts
    n_participants = 2 * n_pairs

    # fleet: participants first (family shared within a pair, drawn from
    # the same cargo family so the planted class is never Mixed)
    records = []
    draughts = []
    taken_imos: set = set()
    pair_bands = {"dry": ("gc", "bulk", "other_dry"),
                  "liquid": ("tanker", "vlcc", "other_liquid")}
    pair_family = None
    for i in range(cfg.n_vessels):
        if i < n_participants:
            if i % 2 == 0:
                pair_family = "dry" if rng.random() < 0.5 else "liquid"
            band = pair_bands[pair_family][int(rng.integers(0, 3))]
        else:
            names = [b for b, _ in _BACKGROUND_MIX]
            weights = [w for _, w in _BACKGROUND_MIX]
            band = names[int(rng.choice(len(names), p=weights))]
        record, draught = _draw_vessel(rng, i, band, taken_imos)
        records.append(record)
        draughts.append(draught)

    # lattice: even rows host anchorages and transfer sites, odd rows are
    # one-vessel transit lanes; spacing keeps every background pair at
    # least S - 2*150 m apart, far beyond twice the detection radius
    spacing = max(6.0 * sts.max_distance, 3_000.0)
    half = cfg.region_radius_m
    n_rows = int((2.0 * half) // spacing)
    n_cols = n_rows
    if n_rows < 2:
        raise ConfigInvalid("region_radius_m too small for the lattice")
    row_norths = [-half + spacing * (r + 0.5) for r in range(n_rows)]
    col_easts = [-half + spacing * (c + 0.5) for c in range(n_cols)]
    anchor_nodes = [(e, row_norths[r]) for r in range(0, n_rows, 2)
                    for e in col_easts]
    lanes = [row_norths[r] for r in range(1, n_rows, 2)]

    n_rest = cfg.n_vessels - n_participants
    n_bystander = min(n_pairs, n_rest)
    remaining = n_rest - n_bystander
    n_transit = min(len(lanes), remaining // 2)
    n_anchor = remaining - n_transit
    if len(anchor_nodes) < n_pairs + n_anchor:
        raise ConfigInvalid(
            f"lattice has {len(anchor_nodes)} anchorages; need "
            f"{n_pairs + n_anchor}. Increase region_radius_m.")

    perm = rng.permutation(len(anchor_nodes))
    pool = [anchor_nodes[int(j)] for j in perm]
    sites = [pool.pop(0) for _ in range(n_pairs)]
    # the traveling partner berths half a lattice step north of its own
    # site, so its approach leg never strays near another site's audit
    # radius (every fix within the radius of a foreign detection would
    # count as an identity there, speed notwithstanding)
    waits = [(e, n + spacing / 2.0) for e, n in sites]

    # planted events; the parked window overhangs the truth interval by
    # pad on both sides so sampling-edge losses cannot eat into the
    # required duration
    pad = sts.resample_step + cfg.fix_interval
    events = []
    for k in range(n_pairs):
        sep = float(rng.uniform(50.0, 0.8 * sts.max_distance - 10.0))
        dur = int(rng.uniform(1.1, 3.0) * sts.min_duration)
        travel = math.hypot(sites[k][0] + sep - waits[k][0],
                            sites[k][1] - waits[k][1])
        travel_t = int(travel / TRAVEL_SPEED_MPS) + 1
        margin = travel_t + pad + 2 * cfg.fix_interval
        room = cfg.duration - dur - 2 * margin
        if room <= 0:
            raise ConfigInvalid(
                f"duration {cfg.duration} s too short to plant a "
                f"{dur} s transfer with travel margins")
        e_start = cfg.start + margin + int(rng.integers(0, room))
        events.append({"sep": sep, "dur": dur, "start": e_start,
                       "end": e_start + dur, "travel_t": travel_t})

    n_dark = int(cfg.dark_fraction * n_pairs + 0.5)
    dark_set = ({int(x) for x in rng.choice(n_pairs, n_dark, replace=False)}
                if n_dark else set())

    # per-vessel fixes, in vessel order; one rng stream throughout
    ledger = _Ledger()
    t_grid_end = cfg.start + cfg.duration
    parked_pos = {}       # event k -> (pos_a, pos_b) in local meters
    bystander_state = {}  # event k -> (node, radius, speed, phase)
    suppress_margin = int(1.1 * cfg.audit.window)

    for i, record in enumerate(records):
        phase_t = int(rng.integers(0, cfg.fix_interval))
        tt = np.arange(cfg.start + phase_t, t_grid_end + 1, cfg.fix_interval)
        if i < n_participants:
            k = i // 2
            ev = events[k]
            site = np.array(sites[k])
            jitter = rng.uniform(-3.0, 3.0, 2)
            park_sog = float(rng.uniform(0.05, 0.35))
            radius = float(rng.uniform(40.0, 90.0))
            speed = float(rng.uniform(0.08, 0.2))
            phase = float(rng.uniform(0.0, 2.0 * math.pi))
            d_delta = float(round(rng.uniform(0.2, 1.0), 1))
            p_start, p_end = ev["start"] - pad, ev["end"] + pad
            if i % 2 == 0:
                # host: drifts at the site, freezes while parked
                park = site + jitter
                east, north = _drift(tt, site, radius, speed, phase,
                                     cfg.start)
                in_park = (tt >= p_start) & (tt <= p_end)
                east = np.where(in_park, park[0], east)
                north = np.where(in_park, park[1], north)
                sog = np.where(in_park, park_sog,
                               speed * KNOTS_PER_MPS)
                # discharging side rides higher afterwards
                draught = np.where(tt > ev["end"],
                                   max(1.0, draughts[i] - d_delta),
                                   draughts[i])
                parked_pos.setdefault(k, {})["a"] = park
            else:
                # traveler: berth -> site -> berth around the event
                wait = np.array(waits[k])
                park = site + np.array([ev["sep"], 0.0]) + jitter
                depart = p_start - ev["travel_t"]
                back = p_end + ev["travel_t"]
                east, north = _drift(tt, wait, radius, speed, phase,
                                     cfg.start)
                sog = np.full(len(tt), speed * KNOTS_PER_MPS)
                going = (tt >= depart) & (tt < p_start)
                f = (tt - depart) / max(1, p_start - depart)
                east = np.where(going, wait[0] + f * (park[0] - wait[0]),
                                east)
                north = np.where(going, wait[1] + f * (park[1] - wait[1]),
                                 north)
                in_park = (tt >= p_start) & (tt <= p_end)
                east = np.where(in_park, park[0], east)
                north = np.where(in_park, park[1], north)
                returning = (tt > p_end) & (tt <= back)
                g = (tt - p_end) / max(1, back - p_end)
                east = np.where(returning,
                                park[0] + g * (wait[0] - park[0]), east)
                north = np.where(returning,
                                 park[1] + g * (wait[1] - park[1]), north)
                sog = np.where(going | returning,
                               TRAVEL_SPEED_MPS * KNOTS_PER_MPS, sog)
                sog = np.where(in_park, park_sog, sog)
                # receiving side sits lower afterwards
                draught = np.where(tt > ev["end"],
                                   min(29.0, draughts[i] + d_delta),
                                   draughts[i])
                parked_pos.setdefault(k, {})["b"] = park
                if k in dark_set:
                    gone = ((tt >= ev["start"] - suppress_margin)
                            & (tt <= ev["end"] + suppress_margin))
                    tt, east, north = tt[~gone], east[~gone], north[~gone]
                    sog, draught = sog[~gone], draught[~gone]
        elif i < n_participants + n_bystander:
            k = i - n_participants
            node = (sites[k][0] + 1_100.0, sites[k][1])
            radius = float(rng.uniform(40.0, 120.0))
            speed = float(rng.uniform(0.08, 0.25))
            phase = float(rng.uniform(0.0, 2.0 * math.pi))
            east, north = _drift(tt, node, radius, speed, phase, cfg.start)
            sog = speed * KNOTS_PER_MPS
            draught = draughts[i]
            bystander_state[k] = (node, radius, speed, phase, i)
        elif i < n_participants + n_bystander + n_anchor:
            node = pool[i - n_participants - n_bystander]
            radius = float(rng.uniform(40.0, 150.0))
            speed = float(rng.uniform(0.08, 0.25))
            phase = float(rng.uniform(0.0, 2.0 * math.pi))
            east, north = _drift(tt, node, radius, speed, phase, cfg.start)
            sog = speed * KNOTS_PER_MPS
            draught = draughts[i]
        else:
            lane = lanes[(i - n_participants - n_bystander - n_anchor)
                         % len(lanes)]
            direction = 1.0 if rng.random() < 0.5 else -1.0
            v = float(rng.uniform(4.0, 7.0))
            ts = cfg.start + int(rng.uniform(0.0, 0.6 * cfg.duration))
            run = tt >= ts
            east = direction * (-half + v * (tt - ts))
            keep = run & (np.abs(east) <= half)
            tt, east = tt[keep], east[keep]
            north = np.full(len(tt), lane)
            sog = v * KNOTS_PER_MPS
            draught = draughts[i]
        ledger.add(record.vessel_id, tt, east, north, sog, draught,
                   cfg.center)

    # one scene per planted event, acquired at the temporal midpoint
    extent = cfg.scene_size_px * cfg.scene_resolution
    scenes = []
    for k, ev in enumerate(events):
        site_pt = offset_to_geo(LocalOffset(*sites[k]), cfg.center)
        origin = offset_to_geo(LocalOffset(-extent / 2.0, extent / 2.0),
                               site_pt)
        ring = (origin,
                offset_to_geo(LocalOffset(extent, 0.0), origin),
                offset_to_geo(LocalOffset(extent, -extent), origin),
                offset_to_geo(LocalOffset(0.0, -extent), origin))
        scenes.append(SceneMeta(
            scene_id=f"SC{k:03d}",
            acquired_at=(ev["start"] + ev["end"]) // 2,
            origin=origin, width=cfg.scene_size_px,
            height=cfg.scene_size_px, resolution=cfg.scene_resolution,
            cloud_score=float(round(rng.uniform(0.0, 0.55), 2)),
            footprint=ring))

    # stub detections: the transfer itself, plus any bystander whose
    # class belongs to the single-ship taxonomy
    detections = []
    truth = []
    for k, ev in enumerate(events):
        scene = scenes[k]
        a, b = records[2 * k], records[2 * k + 1]
        label = classify_sts(classify_vessel(a), classify_vessel(b))
        mid_local = (parked_pos[k]["a"] + parked_pos[k]["b"]) / 2.0
        mid = offset_to_geo(LocalOffset(*mid_local), cfg.center)
        cx, cy = geo_to_pixel(scene, mid)
        w = float(rng.integers(26, 61))
        h = float(rng.integers(14, 31))
        bbox = (round(cx) - w // 2, round(cy) - h // 2, w, h)
        detections.append(Detection(
            scene_id=scene.scene_id, class_label=label.value, bbox=bbox,
            confidence=float(round(rng.uniform(0.6, 0.97), 2)),
            # geo_center comes from the bbox, exactly as a loader derives it
            geo_center=pixel_to_geo(scene, bbox[0] + w / 2.0,
                                    bbox[1] + h / 2.0),
            acquired_at=scene.acquired_at))
        if k in bystander_state:
            node, radius, speed, phase, idx = bystander_state[k]
            ship_class = classify_vessel(records[idx])
            ang = phase + (speed / radius) * (scene.acquired_at - cfg.start)
            pos_local = (node[0] + radius * math.sin(ang),
                         node[1] + radius * math.cos(ang))
            pos = offset_to_geo(LocalOffset(*pos_local), cfg.center)
            bw = float(rng.integers(12, 31))
            bh = float(rng.integers(6, 16))
            conf = float(round(rng.uniform(0.5, 0.9), 2))
            if ship_class in TILE_SHIP_CLASSES:
                bx, by = geo_to_pixel(scene, pos)
                bbox_b = (round(bx) - bw // 2, round(by) - bh // 2, bw, bh)
                detections.append(Detection(
                    scene_id=scene.scene_id, class_label=ship_class.value,
                    bbox=bbox_b, confidence=conf,
                    geo_center=pixel_to_geo(scene, bbox_b[0] + bw / 2.0,
                                            bbox_b[1] + bh / 2.0),
                    acquired_at=scene.acquired_at))
        truth.append(PlantedEvent(
            event_id=f"E{k:03d}", vessel_a=a.vessel_id, vessel_b=b.vessel_id,
            start=ev["start"], end=ev["end"], sts_class=label,
            separation=ev["sep"],
            site=offset_to_geo(LocalOffset(*sites[k]), cfg.center),
            is_dark=k in dark_set,
            suppressed=b.vessel_id if k in dark_set else None,
            scene_id=scene.scene_id))

    return Scenario(seed=seed, config=cfg, registry=tuple(records),
                    fixes=ledger.table(), scenes=tuple(scenes),
                    truth=tuple(truth), detections=tuple(detections))


def export_scenario(scenario: Scenario, directory) -> dict:
    """Write the five CSV inputs the pipeline stages consume.

    Returns a name -> path mapping.
    """
    try:
        os.makedirs(directory, exist_ok=True)
        paths = {name: os.path.join(directory, name + ".csv")
                 for name in ("positions", "registry", "scenes",
                              "detections", "truth")}

        write_position_csv(scenario.fixes, paths["positions"])

        with open(paths["registry"], "w", newline="",
                  encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(("vessel_id", "imo", "name", "length_m",
                             "beam_m", "dwt", "cargo_family"))
            for r in scenario.registry:
                writer.writerow([r.vessel_id, r.imo, r.name, repr(r.length_m),
                                 repr(r.beam_m), repr(r.dwt),
                                 r.cargo_family.value])

        write_scenes_csv(scenario.scenes, paths["scenes"])
        write_detections_csv(scenario.detections, paths["detections"])

        with open(paths["truth"], "w", newline="",
                  encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(TRUTH_CSV_COLUMNS)
            for ev in scenario.truth:
                writer.writerow([
                    ev.event_id, ev.vessel_a, ev.vessel_b,
                    format_utc(ev.start), format_utc(ev.end),
                    ev.sts_class.value, repr(ev.separation),
                    repr(ev.site.lat), repr(ev.site.lon),
                    "true" if ev.is_dark else "false",
                    ev.suppressed or "", ev.scene_id,
                ])
        return paths
    except OSError as exc:
        raise IoFailure(f"cannot write scenario to {directory}: {exc}") \
            from None


def load_truth(path) -> list[PlantedEvent]:
    events = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for n, row in enumerate(reader, start=2):
            try:
                events.append(PlantedEvent(
                    event_id=row["event_id"],
                    vessel_a=row["vessel_a"], vessel_b=row["vessel_b"],
                    start=parse_utc(row["start"]),
                    end=parse_utc(row["end"]),
                    sts_class=StsClass(row["sts_class"]),
                    separation=float(row["separation_m"]),
                    site=GeoPoint(float(row["site_lat"]),
                                  float(row["site_lon"])),
                    is_dark=row["is_dark"] == "true",
                    suppressed=row["suppressed"] or None,
                    scene_id=row["scene_id"],
                ))
            except (ValueError, KeyError) as exc:
                raise MalformedRow(f"{path} line {n}: {exc}") from None
    return events
