"""Ship classes from registry data, and STS classes from ship-class pairs."""

from __future__ import annotations

from enum import Enum

from .ingest import CargoFamily, VesselRecord

# Band edges in deadweight tons. "Up to" edges are inclusive, "exceeding"
# edges strict, so 6,000 t is still the small class and 30,000 / 100,000 t
# still the middle one.
DRY_SMALL_MAX_DWT = 6_000.0
DRY_LARGE_MIN_DWT = 30_000.0
LIQUID_SMALL_MAX_DWT = 6_000.0
LIQUID_LARGE_MIN_DWT = 100_000.0


class ShipClass(Enum):
    """Values are the exact labels used in manifests and reports."""

    GENERAL_CARGO = "General Cargo"
    BULK_CARRIER = "Bulk Carrier"
    OTHER_DRY = "Other Dry"
    TANKER = "Tanker"
    VLCC = "VLCC"
    OTHER_LIQUID = "Other Liquid"
    UNKNOWN = "Unknown"


class StsClass(Enum):
    STS_CARGO = "Cargo STS"
    STS_TANKER = "STS Tanker"
    STS_MIXED = "Mixed STS"


DRY_CLASSES = frozenset({ShipClass.GENERAL_CARGO, ShipClass.BULK_CARRIER,
                         ShipClass.OTHER_DRY})
LIQUID_CLASSES = frozenset({ShipClass.TANKER, ShipClass.VLCC,
                            ShipClass.OTHER_LIQUID})


def classify_vessel(vessel: VesselRecord) -> ShipClass:
    if vessel.cargo_family is CargoFamily.OTHER or vessel.dwt == 0:
        return ShipClass.UNKNOWN
    if vessel.cargo_family is CargoFamily.DRY:
        if vessel.dwt <= DRY_SMALL_MAX_DWT:
            return ShipClass.GENERAL_CARGO
        if vessel.dwt > DRY_LARGE_MIN_DWT:
            return ShipClass.BULK_CARRIER
        return ShipClass.OTHER_DRY
    if vessel.dwt <= LIQUID_SMALL_MAX_DWT:
        return ShipClass.TANKER
    if vessel.dwt > LIQUID_LARGE_MIN_DWT:
        return ShipClass.VLCC
    return ShipClass.OTHER_LIQUID


def classify_sts(a: ShipClass, b: ShipClass) -> StsClass:
    """Dry pair -> Cargo STS, liquid pair -> STS Tanker, anything else mixed."""
    if a in DRY_CLASSES and b in DRY_CLASSES:
        return StsClass.STS_CARGO
    if a in LIQUID_CLASSES and b in LIQUID_CLASSES:
        return StsClass.STS_TANKER
    return StsClass.STS_MIXED
