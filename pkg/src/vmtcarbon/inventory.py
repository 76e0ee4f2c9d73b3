"""Annual tract-level CO2e inventories from two independent views.

Consumption view: odometer-based vehicle census records, attributed to the
vehicles' home tracts.  Production view: road-inventory AADT, attributed to
where traffic physically occurs.  Both sum emission-factor-weighted annual
VMT over the four time-of-day periods; emissions are accumulated in grams
and converted to metric tons only when reports are written.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

from .ef_model import EfModel, TIME_PERIODS, weighted_ef_profile
from .errors import ConsistencyError, ValidationError
from .geo import AssignmentResult, RoadSegment, TractGeometry

GRAMS_PER_METRIC_TON = 1e6

PASSENGER_VMT_FACTOR = 0.9266
_FACTORED_CLASSES = frozenset(
    {"Interstate", "PrincipalArterial", "MinorArterial", "MajorCollector"}
)

DAYS_PER_YEAR = 365
DAYS_PER_QUARTER = DAYS_PER_YEAR / 4

CONSUMPTION = "consumption"
PRODUCTION = "production"


@dataclass(frozen=True)
class TractVehicleRecord:
    """One tract-quarter of the vehicle census."""

    tract_id: str
    quarter: int
    dvmt_per_vehicle: float
    vehicle_count: float

    def __post_init__(self):
        if self.quarter not in (1, 2, 3, 4):
            raise ValidationError(f"tract {self.tract_id}: quarter must be 1-4, got {self.quarter}")
        if self.dvmt_per_vehicle < 0:
            raise ValidationError(f"tract {self.tract_id}: negative daily VMT")
        if self.vehicle_count < 0:
            raise ValidationError(f"tract {self.tract_id}: negative vehicle count")


@dataclass
class TractInventory:
    tract_id: str
    method: str
    annual_vmt_by_tod: dict[str, float]
    emissions_g: float
    flags: list[str] = field(default_factory=list)

    @property
    def emissions_tons(self) -> float:
        return self.emissions_g / GRAMS_PER_METRIC_TON

    @property
    def annual_vmt(self) -> float:
        return sum(self.annual_vmt_by_tod.values())


def passenger_vmt_factor(functional_class: str) -> float:
    """Share of AADT that is passenger travel for a functional class."""
    if functional_class in _FACTORED_CLASSES:
        return PASSENGER_VMT_FACTOR
    if functional_class == "Other":
        return 1.0
    raise ValidationError(f"unknown functional class {functional_class!r}")


def tract_annual_vmt(
    records: list[TractVehicleRecord], tod_share: dict[str, float]
) -> dict[str, float]:
    """Annual VMT per period for one tract's quarterly records.

    Each quarter contributes daily-VMT * period share * vehicle count *
    365/4; quarters missing from the input simply contribute nothing.
    """
    seen = set()
    for r in records:
        if r.quarter in seen:
            raise ValidationError(f"tract {r.tract_id}: duplicate record for quarter {r.quarter}")
        seen.add(r.quarter)
    out = {}
    for tod in TIME_PERIODS:
        out[tod] = sum(
            r.dvmt_per_vehicle * tod_share[tod] * r.vehicle_count * DAYS_PER_QUARTER
            for r in records
        )
    return out


def consumption_inventory(
    records: list[TractVehicleRecord],
    tract_speed_limits: dict[str, float],
    ef: EfModel,
    fallback_speed: float | None = None,
) -> list[TractInventory]:
    """Odometer-based inventory: one TractInventory per tract with records.

    ``tract_speed_limits`` comes from the road/tract overlay; tracts absent
    from it use ``fallback_speed`` (flagged), and if none is given the
    offending tract ids are raised together.
    """
    by_tract: dict[str, list[TractVehicleRecord]] = {}
    for r in records:
        by_tract.setdefault(r.tract_id, []).append(r)

    missing = [tid for tid in sorted(by_tract) if tid not in tract_speed_limits]
    if missing and fallback_speed is None:
        raise ConsistencyError(
            f"tracts with vehicle records but no speed limit and no fallback: {missing}"
        )

    out = []
    for tid in sorted(by_tract):
        recs = by_tract[tid]
        flags = []
        if len(recs) < 4:
            flags.append("missing_quarters")
        if tid in tract_speed_limits:
            speed = tract_speed_limits[tid]
        else:
            speed = fallback_speed
            flags.append("speed_limit_fallback")
        vmt = tract_annual_vmt(recs, ef.tod_share)
        profile = weighted_ef_profile(ef, speed)
        grams = sum(profile[tod] * vmt[tod] for tod in TIME_PERIODS)
        out.append(
            TractInventory(
                tract_id=tid,
                method=CONSUMPTION,
                annual_vmt_by_tod=vmt,
                emissions_g=grams,
                flags=flags,
            )
        )
    return out


def production_inventory(
    segments: list[RoadSegment],
    assignments: AssignmentResult,
    ef: EfModel,
) -> list[TractInventory]:
    """Road-inventory-based inventory over the overlay assignments.

    Per assigned segment piece: passenger annual VMT = AADT * clipped miles
    * 365 * passenger share, split across periods by the daily VMT shares
    and weighted by the segment's own speed-limit EF.  Pieces missing AADT
    or a speed limit are excluded and flagged on their tract.
    """
    by_id = {s.segment_id: s for s in segments}
    vmt: dict[str, dict[str, float]] = {}
    grams: dict[str, float] = {}
    flags: dict[str, list[str]] = {}

    for a in assignments:
        seg = by_id.get(a.segment_id)
        if seg is None:
            raise ConsistencyError(f"assignment references unknown segment {a.segment_id}")
        tid = a.tract_id
        vmt.setdefault(tid, {tod: 0.0 for tod in TIME_PERIODS})
        grams.setdefault(tid, 0.0)
        flags.setdefault(tid, [])
        if seg.aadt is None or seg.speed_limit is None:
            flags[tid].append(f"excluded_segment:{seg.segment_id}")
            continue
        annual = seg.aadt * a.clipped_length * DAYS_PER_YEAR
        annual *= passenger_vmt_factor(seg.functional_class)
        profile = weighted_ef_profile(ef, seg.speed_limit)
        for tod in TIME_PERIODS:
            slice_vmt = annual * ef.tod_share[tod]
            vmt[tid][tod] += slice_vmt
            grams[tid] += profile[tod] * slice_vmt

    return [
        TractInventory(
            tract_id=tid,
            method=PRODUCTION,
            annual_vmt_by_tod=vmt[tid],
            emissions_g=grams[tid],
            flags=sorted(set(flags[tid])),
        )
        for tid in sorted(vmt)
    ]


@dataclass
class InventoryComparison:
    """Per-tract consumption vs production emissions, in metric tons."""

    rows: list[dict]
    summary: dict[str, float]


def _median(values: list[float]) -> float:
    vs = sorted(values)
    n = len(vs)
    mid = n // 2
    return vs[mid] if n % 2 else 0.5 * (vs[mid - 1] + vs[mid])


def compare_inventories(
    consumption: list[TractInventory], production: list[TractInventory]
) -> InventoryComparison:
    """Join the two inventories on their common tracts and summarize.

    Summary means/medians are taken over the common tract set so the two
    methods are compared on identical support.
    """
    cons = {inv.tract_id: inv for inv in consumption}
    prod = {inv.tract_id: inv for inv in production}
    common = sorted(set(cons) & set(prod))
    if not common:
        raise ConsistencyError("consumption and production inventories share no tracts")
    rows = []
    for tid in common:
        c = cons[tid].emissions_tons
        p = prod[tid].emissions_tons
        rows.append(
            {
                "tract_id": tid,
                "consumption_tons": c,
                "production_tons": p,
                "difference_tons": p - c,
            }
        )
    c_vals = [r["consumption_tons"] for r in rows]
    p_vals = [r["production_tons"] for r in rows]
    summary = {
        "mean_consumption_tons": sum(c_vals) / len(c_vals),
        "mean_production_tons": sum(p_vals) / len(p_vals),
        "median_consumption_tons": _median(c_vals),
        "median_production_tons": _median(p_vals),
        "n_tracts": len(rows),
    }
    return InventoryComparison(rows=rows, summary=summary)


def read_vehicle_census_csv(path) -> list[TractVehicleRecord]:
    """Read ``tract_id, quarter, dvmt_per_vehicle, vehicle_count`` rows."""
    required = ["tract_id", "quarter", "dvmt_per_vehicle", "vehicle_count"]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError(f"{path}: empty vehicle census file")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise ValidationError(f"{path}: missing vehicle census columns {missing}")
        records = []
        for i, row in enumerate(reader, start=2):
            try:
                records.append(
                    TractVehicleRecord(
                        tract_id=row["tract_id"],
                        quarter=int(row["quarter"]),
                        dvmt_per_vehicle=float(row["dvmt_per_vehicle"]),
                        vehicle_count=float(row["vehicle_count"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{path}: line {i}: bad vehicle census row ({exc})") from exc
    return records


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def write_inventory_csv(inventories: list[TractInventory], path) -> None:
    """Write ``tract_id, method, vmt_am..vmt_nt, emissions_tons, flags``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["tract_id", "method", "vmt_am", "vmt_md", "vmt_pm", "vmt_nt", "emissions_tons", "flags"]
        )
        for inv in inventories:
            w.writerow(
                [inv.tract_id, inv.method]
                + [_fmt(inv.annual_vmt_by_tod[t]) for t in TIME_PERIODS]
                + [_fmt(inv.emissions_tons), ";".join(inv.flags)]
            )


def write_comparison_csv(comparison: InventoryComparison, path) -> None:
    """Write the per-tract comparison plus mean/median summary rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tract_id", "consumption_tons", "production_tons", "difference_tons"])
        for row in comparison.rows:
            w.writerow(
                [
                    row["tract_id"],
                    _fmt(row["consumption_tons"]),
                    _fmt(row["production_tons"]),
                    _fmt(row["difference_tons"]),
                ]
            )
        s = comparison.summary
        w.writerow(
            [
                "__mean__",
                _fmt(s["mean_consumption_tons"]),
                _fmt(s["mean_production_tons"]),
                _fmt(s["mean_production_tons"] - s["mean_consumption_tons"]),
            ]
        )
        w.writerow(
            [
                "__median__",
                _fmt(s["median_consumption_tons"]),
                _fmt(s["median_production_tons"]),
                _fmt(s["median_production_tons"] - s["median_consumption_tons"]),
            ]
        )


def write_inventory_geojson(
    inventories: list[TractInventory], tracts: list[TractGeometry], path
) -> None:
    """Emit tract polygons with emissions joined on, for external mapping."""
    by_tract: dict[str, list[TractInventory]] = {}
    for inv in inventories:
        by_tract.setdefault(inv.tract_id, []).append(inv)
    features = []
    for tract in sorted(tracts, key=lambda t: t.tract_id):
        props = {"tract_id": tract.tract_id}
        for inv in by_tract.get(tract.tract_id, []):
            props[f"emissions_{inv.method}_tons"] = float(_fmt(inv.emissions_tons))
            if inv.flags:
                props[f"flags_{inv.method}"] = ";".join(inv.flags)
        rings = [r.tolist() for r in tract.rings]
        features.append(
            {
                "type": "Feature",
                "properties": props,
                "geometry": {"type": "Polygon", "coordinates": rings},
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
