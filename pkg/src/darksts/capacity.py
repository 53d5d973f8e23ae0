"""Capacity estimation: bbox diagonal -> length -> DWT, and cargo value.

The length/DWT relation is a power law fitted in log space by ordinary
least squares. A log-on-raw-length form is available for callers who
want ln(DWT) linear in meters instead of ln(meters).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigInvalid, DegenerateInput, OutOfRange

FORM_LOG_LOG = "ln-ln"            # ln(dwt) = a + b * ln(length)
FORM_LOG_LINEAR = "ln-linear"     # ln(dwt) = a + b * length
_FORMS = (FORM_LOG_LOG, FORM_LOG_LINEAR)


@dataclass(frozen=True)
class LengthDwtModel:
    a: float            # intercept, ln-DWT units
    b: float            # slope
    r_squared: float
    n: int
    form: str = FORM_LOG_LOG

    def __post_init__(self):
        if self.n < 3:
            raise ConfigInvalid(f"model fitted on {self.n} samples; need >= 3")
        if not math.isfinite(self.b) or not math.isfinite(self.a):
            raise ConfigInvalid("model coefficients must be finite")
        if not 0.0 <= self.r_squared <= 1.0:
            raise ConfigInvalid(f"r_squared {self.r_squared} outside [0, 1]")
        if self.form not in _FORMS:
            raise ConfigInvalid(f"unknown model form {self.form!r}")

    def as_record(self) -> dict:
        return {"a": self.a, "b": self.b, "r_squared": self.r_squared,
                "n": self.n, "form": self.form}


def estimate_length(bbox: Sequence[float], resolution: float) -> float:
    """Bounding-box diagonal in meters; bbox is (w, h) or (x0, y0, w, h)."""
    if len(bbox) == 4:
        w, h = bbox[2], bbox[3]
    elif len(bbox) == 2:
        w, h = bbox
    else:
        raise OutOfRange(f"bbox needs 2 or 4 entries, got {len(bbox)}")
    if w <= 0 or h <= 0:
        raise OutOfRange(f"bbox sides ({w}, {h}) must be positive")
    if resolution <= 0:
        raise OutOfRange(f"resolution {resolution} must be positive")
    return math.hypot(w, h) * resolution


def fit_loglinear(samples: Sequence[tuple],
                  form: str = FORM_LOG_LOG) -> LengthDwtModel:
    """OLS of ln(dwt) on ln(length) (or raw length, by form)."""
    if form not in _FORMS:
        raise ConfigInvalid(f"unknown model form {form!r}")
    if len(samples) < 3:
        raise DegenerateInput(f"{len(samples)} samples; need >= 3")
    lengths = np.array([s[0] for s in samples], dtype=float)
    dwts = np.array([s[1] for s in samples], dtype=float)
    if np.any(lengths <= 0) or np.any(dwts <= 0):
        raise OutOfRange("lengths and dwts must be positive")

    x = np.log(lengths) if form == FORM_LOG_LOG else lengths
    y = np.log(dwts)
    xm, ym = float(x.mean()), float(y.mean())
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0.0:
        raise DegenerateInput("all lengths equal; slope is undetermined")
    b = float(((x - xm) * (y - ym)).sum()) / sxx
    a = ym - b * xm
    ss_res = float(((y - (a + b * x)) ** 2).sum())
    ss_tot = float(((y - ym) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    r2 = min(1.0, max(0.0, r2))
    return LengthDwtModel(a=a, b=b, r_squared=r2, n=len(samples), form=form)


def estimate_dwt(length: float, model: LengthDwtModel) -> float:
    if length <= 0:
        raise OutOfRange(f"length {length} must be positive")
    if model.form == FORM_LOG_LOG:
        return math.exp(model.a + model.b * math.log(length))
    return math.exp(model.a + model.b * length)


def cargo_value(barrels, price):
    """Exact product; int inputs stay int. Formatting is the caller's job."""
    if barrels < 0 or price < 0:
        raise OutOfRange(f"barrels {barrels} and price {price} must be >= 0")
    return barrels * price
