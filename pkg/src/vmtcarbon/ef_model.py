"""Speed-bin emission factors and their time-of-day weighting.

The embedded tables are the Boston-area defaults: per-speed-bin shares of
daily VMT for four time-of-day periods (CTPS estimates), the EMFAC-derived
passenger-vehicle emission factor per bin (AECOM synthesis), and the
four-way split of total daily VMT across periods.  ``weighted_ef`` turns
them into a single gCO2e/mile factor for a road speed limit and period by
averaging the factors of every bin at or below the limit, weighted by the
bin VMT shares.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

TIME_PERIODS = ("AM", "MD", "PM", "NT")

# Share of daily VMT by period.  The published four-way split totals 99.8%,
# not 100%; the values are kept verbatim rather than renormalized.
DEFAULT_TOD_SHARE = {"AM": 0.1662, "MD": 0.3266, "PM": 0.2109, "NT": 0.2943}

# Per speed bin: lower bound (mph), VMT share (%) in AM/MD/PM/NT, and the
# passenger weighted emission factor (gCO2e/mile).  Bin upper bounds are the
# next row's lower bound; the last bin is open-ended.  Column sums deviate
# from 100% by up to 0.01 (published rounding).
_SPEED_BIN_TABLE = (
    (0, 2.30, 9.13, 3.33, 3.93, 1184.21),
    (5, 0.43, 0.57, 0.38, 0.20, 1184.21),
    (10, 3.16, 4.47, 4.03, 1.38, 873.37),
    (15, 12.03, 15.30, 13.54, 9.23, 675.03),
    (20, 17.01, 18.92, 17.31, 13.04, 539.09),
    (25, 12.80, 12.48, 13.13, 13.20, 446.67),
    (30, 10.95, 9.16, 10.46, 13.10, 383.63),
    (35, 8.81, 7.29, 9.94, 9.23, 344.23),
    (40, 5.72, 6.65, 8.43, 4.42, 319.98),
    (45, 7.04, 4.86, 6.79, 7.89, 308.42),
    (50, 6.29, 2.43, 4.53, 7.21, 308.34),
    (55, 4.45, 4.00, 3.75, 5.55, 319.60),
    (60, 6.79, 3.47, 2.89, 7.99, 340.58),
    (65, 2.23, 1.26, 1.49, 3.62, 380.39),
)

_COLUMN_SUM_TOL = 5e-4  # absolute slack on each per-period share column
_TOD_SUM_TOL = 5e-3  # absolute slack on the four-way period split


@dataclass(frozen=True)
class SpeedBin:
    """Half-open speed interval [lower, upper) in mph; upper may be inf."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValidationError(f"speed bin lower {self.lower} must be < upper {self.upper}")

    def contains(self, speed: float) -> bool:
        return self.lower <= speed < self.upper


@dataclass(frozen=True)
class EfModel:
    """Speed-bin emission factors plus the VMT-share tables that weight them.

    Parameters
    ----------
    bins : tuple of SpeedBin
        Consecutive bins partitioning [0, inf).
    ef_by_bin : ndarray, shape (n_bins,)
        Weighted emission factor per bin, gCO2e/mile, strictly positive.
    vmt_share : ndarray, shape (n_bins, 4)
        Proportion of each period's VMT driven in each bin; columns follow
        ``TIME_PERIODS`` order and each sums to ~1.
    tod_share : dict
        Share of total daily VMT per period, keyed by ``TIME_PERIODS``.
    """

    bins: tuple[SpeedBin, ...]
    ef_by_bin: np.ndarray
    vmt_share: np.ndarray
    tod_share: dict[str, float]

    def __post_init__(self):
        n = len(self.bins)
        if n == 0:
            raise ValidationError("EfModel needs at least one speed bin")
        lowers = [b.lower for b in self.bins]
        if lowers[0] != 0:
            raise ValidationError("first speed bin must start at 0 mph")
        for a, b in zip(self.bins, self.bins[1:]):
            if a.upper != b.lower:
                raise ValidationError(f"speed bins not contiguous at {a.upper}/{b.lower}")
        if not math.isinf(self.bins[-1].upper):
            raise ValidationError("last speed bin must be open-ended")
        if self.ef_by_bin.shape != (n,) or self.vmt_share.shape != (n, len(TIME_PERIODS)):
            raise ValidationError("EF/share table shapes do not match the bin count")
        if not np.all(self.ef_by_bin > 0):
            raise ValidationError("emission factors must be strictly positive")
        if np.any(self.vmt_share < 0) or np.any(self.vmt_share > 1):
            raise ValidationError("VMT shares must lie in [0, 1]")
        colsums = self.vmt_share.sum(axis=0)
        if np.any(np.abs(colsums - 1.0) > _COLUMN_SUM_TOL):
            raise ValidationError(f"per-period VMT share columns must sum to ~1, got {colsums}")
        if set(self.tod_share) != set(TIME_PERIODS):
            raise ValidationError(f"tod_share must have exactly the keys {TIME_PERIODS}")
        tod_total = sum(self.tod_share.values())
        if abs(tod_total - 1.0) > _TOD_SUM_TOL:
            raise ValidationError(f"time-of-day shares must total ~1, got {tod_total}")
        self.ef_by_bin.flags.writeable = False
        self.vmt_share.flags.writeable = False

    @property
    def bin_lowers(self) -> np.ndarray:
        return np.array([b.lower for b in self.bins])


def _build_model(rows, tod_share) -> EfModel:
    lowers = [float(r[0]) for r in rows]
    if sorted(lowers) != lowers or len(set(lowers)) != len(lowers):
        raise ValidationError("speed-bin lower bounds must be strictly increasing")
    uppers = lowers[1:] + [math.inf]
    bins = tuple(SpeedBin(lo, up) for lo, up in zip(lowers, uppers))
    share = np.array([[r[1], r[2], r[3], r[4]] for r in rows], dtype=float)
    ef = np.array([r[5] for r in rows], dtype=float)
    return EfModel(bins=bins, ef_by_bin=ef, vmt_share=share, tod_share=dict(tod_share))


def load_default_ef_model() -> EfModel:
    """Build the model from the embedded Boston-area tables."""
    rows = [(lo, am / 100.0, md / 100.0, pm / 100.0, nt / 100.0, ef)
            for lo, am, md, pm, nt, ef in _SPEED_BIN_TABLE]
    return _build_model(rows, DEFAULT_TOD_SHARE)


def load_ef_model_csv(path, tod_share=None) -> EfModel:
    """Load an EF model override from a CSV file.

    Expected columns: ``bin_lower, ef_w, p_am, p_md, p_pm, p_nt`` with the
    ``p_*`` proportions as fractions, each column summing to ~1.  The
    time-of-day split is not part of the file; ``tod_share`` overrides the
    embedded default when given.
    """
    required = ["bin_lower", "ef_w", "p_am", "p_md", "p_pm", "p_nt"]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError(f"{path}: empty EF model file")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise ValidationError(f"{path}: missing EF model columns {missing}")
        raw = list(reader)
    if not raw:
        raise ValidationError(f"{path}: EF model file has no data rows")
    try:
        rows = [(float(r["bin_lower"]), float(r["p_am"]), float(r["p_md"]),
                 float(r["p_pm"]), float(r["p_nt"]), float(r["ef_w"]))
                for r in raw]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: non-numeric EF model cell ({exc})") from exc
    rows.sort(key=lambda r: r[0])
    return _build_model(rows, tod_share or DEFAULT_TOD_SHARE)


def snap_speed(speed_limit: float) -> float:
    """Snap a speed limit to the nearest 5 mph multiple, ties rounding up."""
    if not speed_limit > 0:
        raise ValidationError(f"speed limit must be positive, got {speed_limit}")
    return 5.0 * math.floor(speed_limit / 5.0 + 0.5)


def weighted_ef(model: EfModel, speed_limit: float, tod: str) -> float:
    """Weighted emission factor (gCO2e/mile) for a speed limit and period.

    Every bin whose lower bound does not exceed the (snapped) limit is
    included, i.e. the bin containing driving at exactly the limit counts.
    The result is sum(EF*share)/sum(share) over the included bins, a
    weighted mean bounded by the included factors.
    """
    if tod not in TIME_PERIODS:
        raise ValidationError(f"unknown time-of-day period {tod!r}; expected one of {TIME_PERIODS}")
    snapped = snap_speed(speed_limit)
    col = TIME_PERIODS.index(tod)
    mask = model.bin_lowers <= snapped
    shares = model.vmt_share[mask, col]
    denom = shares.sum()
    if denom <= 0:
        raise ValidationError(f"no VMT share mass at or below {snapped} mph for {tod}")
    return float((model.ef_by_bin[mask] * shares).sum() / denom)


def weighted_ef_profile(model: EfModel, speed_limit: float) -> dict[str, float]:
    """``weighted_ef`` for all four periods at once."""
    return {tod: weighted_ef(model, speed_limit, tod) for tod in TIME_PERIODS}
