"""AIS ingestion: tabular position dumps, NMEA streams, and the vessel registry.

Fixes are kept column-oriented (numpy arrays) so that downstream detection
can run vectorised over millions of rows; PositionFix objects are a row view
materialised on demand.
"""

from __future__ import annotations

import csv
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Union

import numpy as np
import pandas as pd

from .errors import (
    ChecksumMismatch,
    EmptyFile,
    MalformedRow,
    MissingColumn,
    OutOfRange,
    TruncatedPayload,
    UnsupportedMessageType,
)
from .geo import GeoPoint
from .nmea import (
    Fragment,
    FragmentAssembler,
    PositionReport,
    StaticVoyage,
    StreamCounters,
    decode_nmea_sentence,
)
from .timestamps import parse_utc

MAX_SOG_KN = 102.2  # AIS field ceiling (raw 1022)
MAX_DRAUGHT_M = 30.0

POSITION_COLUMNS = ("vessel_id", "timestamp", "lat", "lon", "sog")
REGISTRY_COLUMNS = ("vessel_id", "imo", "name", "length_m", "beam_m", "dwt",
                    "cargo_family")


class CargoFamily(Enum):
    DRY = "Dry"
    LIQUID = "Liquid"
    OTHER = "Other"


def imo_checksum_ok(imo: int) -> bool:
    """IMO number check: digits 1..6 weighted 7..2, sum mod 10 = digit 7."""
    text = str(imo)
    if len(text) != 7 or not text.isdigit():
        return False
    digits = [int(c) for c in text]
    weighted = sum(d * w for d, w in zip(digits[:6], range(7, 1, -1)))
    return weighted % 10 == digits[6]


@dataclass(frozen=True)
class PositionFix:
    vessel_id: str
    t: int  # UTC epoch seconds
    pos: GeoPoint
    sog: float  # knots
    draught: Optional[float] = None  # meters; None when not reported

    def __post_init__(self):
        if not 0.0 <= self.sog <= MAX_SOG_KN:
            raise OutOfRange(f"sog {self.sog} outside [0, {MAX_SOG_KN}]")
        if self.draught is not None and not 0.0 < self.draught <= MAX_DRAUGHT_M:
            raise OutOfRange(f"draught {self.draught} outside (0, {MAX_DRAUGHT_M}]")


@dataclass(frozen=True)
class VesselRecord:
    vessel_id: str
    imo: Optional[int]
    name: str
    length_m: Optional[float]  # None only for synthetic unregistered records
    beam_m: Optional[float]
    dwt: float
    cargo_family: CargoFamily
    unregistered: bool = False

    def __post_init__(self):
        if self.imo is not None and not imo_checksum_ok(self.imo):
            raise MalformedRow(f"IMO {self.imo} fails the check-digit rule")
        if self.length_m is not None and not 10.0 < self.length_m <= 500.0:
            raise MalformedRow(f"length {self.length_m} outside (10, 500]")
        if self.beam_m is not None:
            if self.length_m is None or not 0.0 < self.beam_m < self.length_m:
                raise MalformedRow(f"beam {self.beam_m} not in (0, length)")
        if self.dwt < 0:
            raise MalformedRow(f"dwt {self.dwt} negative")


def synthetic_record(vessel_id: str) -> VesselRecord:
    """Stand-in registry entry for a vessel seen only in position data."""
    return VesselRecord(vessel_id=vessel_id, imo=None, name="", length_m=None,
                        beam_m=None, dwt=0.0, cargo_family=CargoFamily.OTHER,
                        unregistered=True)


class FixTable(Sequence):
    """Column store of position fixes; indexes like a sequence of PositionFix.

    draught uses NaN for absent values so the column stays a float array.
    """

    __slots__ = ("vessel_ids", "code", "t", "lat", "lon", "sog", "draught",
                 "rejected_rows")

    def __init__(self, vessel_ids: list[str], code: np.ndarray, t: np.ndarray,
                 lat: np.ndarray, lon: np.ndarray, sog: np.ndarray,
                 draught: np.ndarray, rejected_rows: int = 0):
        self.vessel_ids = vessel_ids
        self.code = code
        self.t = t
        self.lat = lat
        self.lon = lon
        self.sog = sog
        self.draught = draught
        self.rejected_rows = rejected_rows

    @classmethod
    def from_fixes(cls, fixes: Iterable[PositionFix],
                   rejected_rows: int = 0) -> "FixTable":
        rows = list(fixes)
        ids: list[str] = []
        index: dict[str, int] = {}
        code = np.empty(len(rows), np.int64)
        for i, f in enumerate(rows):
            c = index.get(f.vessel_id)
            if c is None:
                c = index[f.vessel_id] = len(ids)
                ids.append(f.vessel_id)
            code[i] = c
        return cls(
            vessel_ids=ids,
            code=code,
            t=np.array([f.t for f in rows], np.int64),
            lat=np.array([f.pos.lat for f in rows], float),
            lon=np.array([f.pos.lon for f in rows], float),
            sog=np.array([f.sog for f in rows], float),
            draught=np.array([np.nan if f.draught is None else f.draught
                              for f in rows], float),
            rejected_rows=rejected_rows,
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: Union[int, slice]):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        d = self.draught[i]
        return PositionFix(
            vessel_id=self.vessel_ids[self.code[i]],
            t=int(self.t[i]),
            pos=GeoPoint(float(self.lat[i]), float(self.lon[i])),
            sog=float(self.sog[i]),
            draught=None if np.isnan(d) else float(d),
        )


@dataclass(frozen=True, eq=False)
class Track:
    """One vessel's fixes, time-sorted and deduplicated, as parallel arrays."""

    vessel: VesselRecord
    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    sog: np.ndarray
    draught: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    @property
    def fixes(self) -> list[PositionFix]:
        return [PositionFix(
            vessel_id=self.vessel.vessel_id,
            t=int(self.t[i]),
            pos=GeoPoint(float(self.lat[i]), float(self.lon[i])),
            sog=float(self.sog[i]),
            draught=None if np.isnan(self.draught[i]) else float(self.draught[i]),
        ) for i in range(len(self.t))]


def load_position_table(path) -> FixTable:
    """Read positions.csv; rows failing field validation are dropped and counted.

    Required columns: vessel_id, timestamp, lat, lon, sog. A draught column
    is honoured when present (0 is the AIS not-available sentinel, kept NaN).
    """
    try:
        # the default float parser is off by 1 ulp on some inputs; exact
        # parsing matters at predicate boundaries
        frame = pd.read_csv(path, dtype={"vessel_id": str},
                            float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise EmptyFile(f"{path}: no header row") from None
    missing = [c for c in POSITION_COLUMNS if c not in frame.columns]
    if missing:
        raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")

    stamps = pd.to_datetime(frame["timestamp"], format="ISO8601",
                            errors="coerce", utc=True)
    t = stamps.astype("int64").to_numpy() // 10**9
    lat = pd.to_numeric(frame["lat"], errors="coerce").to_numpy(float)
    lon = pd.to_numeric(frame["lon"], errors="coerce").to_numpy(float)
    sog = pd.to_numeric(frame["sog"], errors="coerce").to_numpy(float)

    ok = (stamps.notna().to_numpy()
          & frame["vessel_id"].notna().to_numpy()
          & np.isfinite(lat) & (lat >= -90.0) & (lat <= 90.0)
          & np.isfinite(lon) & (lon >= -180.0) & (lon <= 180.0)
          & np.isfinite(sog) & (sog >= 0.0) & (sog <= MAX_SOG_KN))

    if "draught" in frame.columns:
        draught = pd.to_numeric(frame["draught"], errors="coerce").to_numpy(float)
        absent = ~np.isfinite(draught) | (draught == 0.0)
        ok &= absent | ((draught > 0.0) & (draught <= MAX_DRAUGHT_M))
        draught = np.where(absent, np.nan, draught)
    else:
        draught = np.full(len(frame), np.nan)

    codes, uniques = pd.factorize(frame["vessel_id"][ok])
    lon_ok = lon[ok]
    return FixTable(
        vessel_ids=list(uniques),
        code=codes.astype(np.int64),
        t=t[ok],
        lat=lat[ok],
        # 180 and -180 name the same meridian; canonical form is [-180, 180)
        lon=np.where(lon_ok == 180.0, -180.0, lon_ok),
        sog=sog[ok],
        draught=draught[ok],
        rejected_rows=int(len(frame) - ok.sum()),
    )


def write_position_csv(table: FixTable, path) -> None:
    """Write a table so that load_position_table reads back the same values."""
    ids = np.array(table.vessel_ids, dtype=object)
    stamps = pd.to_datetime(pd.Series(table.t), unit="s", utc=True)
    frame = pd.DataFrame({
        "vessel_id": ids[table.code] if len(table.code) else [],
        "timestamp": stamps.dt.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "lat": table.lat, "lon": table.lon, "sog": table.sog,
        "draught": table.draught,
    })
    frame.to_csv(path, index=False)


def load_registry(path) -> list[VesselRecord]:
    """Read registry.csv. The registry is authoritative, so a bad row is fatal."""
    records: list[VesselRecord] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise EmptyFile(f"{path}: no header row")
        missing = [c for c in REGISTRY_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        for n, row in enumerate(reader, start=2):
            try:
                family = CargoFamily(row["cargo_family"])
                imo_text = (row["imo"] or "").strip()
                record = VesselRecord(
                    vessel_id=row["vessel_id"],
                    imo=int(imo_text) if imo_text else None,
                    name=row["name"],
                    length_m=float(row["length_m"]),
                    beam_m=float(row["beam_m"]),
                    dwt=float(row["dwt"]),
                    cargo_family=family,
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedRow(f"{path} line {n}: {exc}") from None
            except MalformedRow as exc:
                raise MalformedRow(f"{path} line {n}: {exc}") from None
            if record.vessel_id in seen:
                raise MalformedRow(
                    f"{path} line {n}: duplicate vessel_id {record.vessel_id!r}")
            seen.add(record.vessel_id)
            records.append(record)
    return records


def build_tracks(fixes: Union[FixTable, Iterable[PositionFix]],
                 registry: Iterable[VesselRecord]) -> list[Track]:
    """Group fixes by vessel, sort by time, keep the first fix per (id, t).

    Vessels absent from the registry get a synthetic record flagged
    unregistered. Tracks come back sorted by vessel_id, so the result does
    not depend on input fix order.
    """
    table = fixes if isinstance(fixes, FixTable) else FixTable.from_fixes(fixes)
    by_id = {rec.vessel_id: rec for rec in registry}

    # lexsort is stable, so ties on (code, t) preserve input order and the
    # dedup mask below keeps the earliest duplicate.
    order = np.lexsort((table.t, table.code))
    code_s = table.code[order]
    t_s = table.t[order]
    keep = np.ones(len(order), bool)
    if len(order) > 1:
        keep[1:] = (code_s[1:] != code_s[:-1]) | (t_s[1:] != t_s[:-1])
    idx = order[keep]
    code_k = table.code[idx]

    tracks: list[Track] = []
    for c, vessel_id in sorted(enumerate(table.vessel_ids), key=lambda p: p[1]):
        lo = np.searchsorted(code_k, c, side="left")
        hi = np.searchsorted(code_k, c, side="right")
        rows = idx[lo:hi]
        tracks.append(Track(
            vessel=by_id.get(vessel_id) or synthetic_record(vessel_id),
            t=table.t[rows],
            lat=table.lat[rows],
            lon=table.lon[rows],
            sog=table.sog[rows],
            draught=table.draught[rows],
        ))
    return tracks


def fixes_from_nmea(lines: Iterable[str]) -> tuple[FixTable, StreamCounters]:
    """Build fixes from an NMEA capture whose lines carry a timestamp prefix.

    Each line is "<ISO-8601 UTC> <!AIVDM sentence>"; bare sentences are also
    accepted but yield no fix (a position report carries only a UTC second).
    Draughts ride on type-5 traffic, so the last static report per MMSI is
    attached to that vessel's later fixes.
    """
    assembler = FragmentAssembler()
    counters = StreamCounters()
    fixes: list[PositionFix] = []
    dropped = 0
    last_draught: dict[int, float] = {}

    for line in lines:
        line = line.strip()
        if not line:
            continue
        stamp: Optional[int] = None
        if not line.startswith("!"):
            head, _, rest = line.partition(" ")
            try:
                stamp = parse_utc(head)
            except ValueError:
                counters.truncated += 1
                continue
            line = rest.strip()
        try:
            result = decode_nmea_sentence(line)
        except ChecksumMismatch:
            counters.checksum_errors += 1
            continue
        except UnsupportedMessageType:
            counters.unsupported += 1
            continue
        except TruncatedPayload:
            counters.truncated += 1
            continue
        if isinstance(result, Fragment):
            try:
                result = assembler.feed(result)
            except UnsupportedMessageType:
                counters.unsupported += 1
                continue
            except TruncatedPayload:
                counters.truncated += 1
                continue
            if result is None:
                continue
        counters.decoded += 1
        if isinstance(result, StaticVoyage):
            if result.draught is not None:
                last_draught[result.mmsi] = result.draught
            continue
        if isinstance(result, PositionReport):
            if stamp is None or result.lat is None or result.lon is None \
                    or result.sog is None:
                dropped += 1
                continue
            fixes.append(PositionFix(
                vessel_id=str(result.mmsi),
                t=stamp,
                pos=GeoPoint(result.lat, result.lon),
                sog=result.sog,
                draught=last_draught.get(result.mmsi),
            ))
    counters.pending_fragments = assembler.pending_count
    return FixTable.from_fixes(fixes, rejected_rows=dropped), counters
