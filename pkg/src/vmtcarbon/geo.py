"""Planar overlay of road polylines onto tract polygons.

Coordinates are assumed to be in a length-preserving planar projection;
there is no geodesic math here.  Segments spanning tract boundaries are
apportioned by clipped arc length, rescaled so the pieces always total the
segment's declared length (the surveyed length is authoritative; geometry
only sets the proportions).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

FUNCTIONAL_CLASSES = (
    "Interstate",
    "PrincipalArterial",
    "MinorArterial",
    "MajorCollector",
    "Other",
)

_EPS = 1e-12


def _as_ring(points) -> np.ndarray:
    ring = np.asarray(points, dtype=float)
    if ring.ndim != 2 or ring.shape[1] != 2 or ring.shape[0] < 4:
        raise ValidationError("polygon ring needs >= 4 (x, y) points including closure")
    if not np.allclose(ring[0], ring[-1]):
        raise ValidationError("polygon ring must be closed (first point == last point)")
    return ring


def ring_signed_area(ring: np.ndarray) -> float:
    x, y = ring[:-1, 0], ring[:-1, 1]
    xn, yn = ring[1:, 0], ring[1:, 1]
    return float(0.5 * np.sum(x * yn - xn * y))


def _ring_contains(ring: np.ndarray, x: float, y: float) -> bool:
    # even-odd ray casting against one ring
    x1, y1 = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    straddle = (y1 > y) != (y2 > y)
    if not straddle.any():
        return False
    xs = x1[straddle] + (y - y1[straddle]) * (x2[straddle] - x1[straddle]) / (y2[straddle] - y1[straddle])
    return bool(np.count_nonzero(xs > x) % 2)


@dataclass
class TractGeometry:
    """A census tract: id, polygon rings, and a representative centroid.

    ``rings`` holds every ring of the (multi)polygon; membership is decided
    by the even-odd rule, so holes and multiple parts need no special
    bookkeeping.
    """

    tract_id: str
    rings: list[np.ndarray]
    centroid: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.tract_id:
            raise ValidationError("tract_id must be a non-empty string")
        self.rings = [_as_ring(r) for r in self.rings]
        if self.centroid is None:
            self.centroid = self._area_centroid()
        self._bbox = (
            min(r[:, 0].min() for r in self.rings),
            min(r[:, 1].min() for r in self.rings),
            max(r[:, 0].max() for r in self.rings),
            max(r[:, 1].max() for r in self.rings),
        )

    @property
    def area(self) -> float:
        # even-odd area: a ring nested inside an odd number of others is a hole
        total = 0.0
        for i, ring in enumerate(self.rings):
            depth = sum(
                1
                for j, other in enumerate(self.rings)
                if j != i and _ring_contains(other, ring[0, 0], ring[0, 1])
            )
            total += (-1 if depth % 2 else 1) * abs(ring_signed_area(ring))
        return total

    def _area_centroid(self) -> tuple[float, float]:
        sx = sy = sa = 0.0
        for ring in self.rings:
            a = ring_signed_area(ring)
            if abs(a) < _EPS:
                continue
            x, y = ring[:-1, 0], ring[:-1, 1]
            xn, yn = ring[1:, 0], ring[1:, 1]
            cross = x * yn - xn * y
            sx += np.sum((x + xn) * cross) / 6.0
            sy += np.sum((y + yn) * cross) / 6.0
            sa += a
        if abs(sa) < _EPS:
            verts = np.vstack([r[:-1] for r in self.rings])
            return (float(verts[:, 0].mean()), float(verts[:, 1].mean()))
        return (float(sx / sa), float(sy / sa))

    def contains(self, x: float, y: float) -> bool:
        bx0, by0, bx1, by1 = self._bbox
        if x < bx0 or x > bx1 or y < by0 or y > by1:
            return False
        inside = False
        for ring in self.rings:
            if _ring_contains(ring, x, y):
                inside = not inside
        return inside


@dataclass
class RoadSegment:
    """One road-inventory polyline with its traffic attributes.

    ``length_mi`` is the surveyed segment length and is authoritative for
    VMT; the polyline is used only to apportion that length across tracts.
    ``aadt`` and ``speed_limit`` may be None (segment later excluded from
    the production inventory with a flag).
    """

    segment_id: str
    polyline: np.ndarray
    length_mi: float
    speed_limit: float | None = None
    aadt: float | None = None
    functional_class: str = "Other"

    def __post_init__(self):
        if not self.segment_id:
            raise ValidationError("segment_id must be a non-empty string")
        self.polyline = np.asarray(self.polyline, dtype=float)
        if self.polyline.ndim != 2 or self.polyline.shape[1] != 2 or self.polyline.shape[0] < 2:
            raise ValidationError(f"segment {self.segment_id}: polyline needs >= 2 (x, y) points")
        if not self.length_mi > 0:
            raise ValidationError(f"segment {self.segment_id}: length must be > 0")
        if self.aadt is not None and self.aadt < 0:
            raise ValidationError(f"segment {self.segment_id}: aadt must be >= 0")
        if self.speed_limit is not None and not (0 < self.speed_limit <= 80):
            raise ValidationError(f"segment {self.segment_id}: speed limit must be in (0, 80]")
        if self.functional_class not in FUNCTIONAL_CLASSES:
            raise ValidationError(
                f"segment {self.segment_id}: unknown functional class {self.functional_class!r}"
            )

    @property
    def arc_length(self) -> float:
        return float(np.sum(np.hypot(*(np.diff(self.polyline, axis=0).T))))


@dataclass(frozen=True)
class SegmentTractAssignment:
    segment_id: str
    tract_id: str
    clipped_length: float


@dataclass
class AssignmentResult:
    """Outcome of the overlay: assignments plus bookkeeping of the leftovers."""

    assignments: list[SegmentTractAssignment] = field(default_factory=list)
    unassigned: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(self.assignments)


def _segment_params_against_rings(a, b, rings) -> list[float]:
    """Intersection parameters t in [0, 1] of edge a->b with polygon rings."""
    r = b - a
    out = []
    for ring in rings:
        c = ring[:-1]
        d = ring[1:]
        s = d - c
        denom = r[0] * s[:, 1] - r[1] * s[:, 0]
        qp = c - a
        ok = np.abs(denom) > _EPS
        if not ok.any():
            continue
        t = (qp[ok, 0] * s[ok, 1] - qp[ok, 1] * s[ok, 0]) / denom[ok]
        v = (qp[ok, 0] * r[1] - qp[ok, 1] * r[0]) / denom[ok]
        hit = (t >= 0.0) & (t <= 1.0) & (v >= 0.0) & (v <= 1.0)
        out.extend(t[hit].tolist())
    return out


def _point_at(polyline, cumlen, s):
    """Point at arc-length position s along the polyline."""
    i = int(np.searchsorted(cumlen, s, side="right") - 1)
    i = min(max(i, 0), len(polyline) - 2)
    seg_len = cumlen[i + 1] - cumlen[i]
    f = 0.0 if seg_len <= 0 else (s - cumlen[i]) / seg_len
    return polyline[i] + f * (polyline[i + 1] - polyline[i])


def assign_segments(tracts: list[TractGeometry], segments: list[RoadSegment]) -> AssignmentResult:
    """Clip every segment against the tract polygons.

    Each intersecting tract receives a share of the segment's declared
    length proportional to the arc length inside it (shares renormalized
    over the inside portions, so they always total the declared length).
    Zero-area tracts are skipped with a warning; segments touching no tract
    are reported in ``unassigned``.
    """
    if not tracts:
        raise ValidationError("assign_segments requires at least one tract")
    result = AssignmentResult()
    live_tracts = []
    for tract in tracts:
        if tract.area <= 0:
            result.warnings.append(f"tract {tract.tract_id}: degenerate polygon (zero area), skipped")
        else:
            live_tracts.append(tract)
    if not live_tracts:
        raise ValidationError("all tract polygons are degenerate")
    live_tracts = sorted(live_tracts, key=lambda t: t.tract_id)

    for seg in sorted(segments, key=lambda s: s.segment_id):
        poly = seg.polyline
        deltas = np.diff(poly, axis=0)
        lens = np.hypot(deltas[:, 0], deltas[:, 1])
        cumlen = np.concatenate([[0.0], np.cumsum(lens)])
        total = cumlen[-1]
        if total <= 0:
            result.warnings.append(f"segment {seg.segment_id}: zero-length polyline, unassigned")
            result.unassigned.append(seg.segment_id)
            continue

        sx0, sy0 = poly[:, 0].min(), poly[:, 1].min()
        sx1, sy1 = poly[:, 0].max(), poly[:, 1].max()
        candidates = [
            t for t in live_tracts
            if not (sx1 < t._bbox[0] or sx0 > t._bbox[2] or sy1 < t._bbox[1] or sy0 > t._bbox[3])
        ]

        # cut the polyline at every boundary crossing, then place each piece
        # by its midpoint
        cuts = set(cumlen.tolist())
        for i in range(len(poly) - 1):
            if lens[i] <= 0:
                continue
            for tract in candidates:
                for t in _segment_params_against_rings(poly[i], poly[i + 1], tract.rings):
                    cuts.add(float(cumlen[i] + t * lens[i]))
        positions = np.array(sorted(cuts))
        positions = positions[(positions >= 0.0) & (positions <= total)]

        arc_inside: dict[str, float] = {}
        for s0, s1 in zip(positions, positions[1:]):
            if s1 - s0 <= _EPS:
                continue
            mx, my = _point_at(poly, cumlen, 0.5 * (s0 + s1))
            for tract in candidates:
                if tract.contains(mx, my):
                    arc_inside[tract.tract_id] = arc_inside.get(tract.tract_id, 0.0) + (s1 - s0)
                    break

        inside_total = sum(arc_inside.values())
        if inside_total <= 0:
            result.unassigned.append(seg.segment_id)
            continue
        for tract_id in sorted(arc_inside):
            result.assignments.append(
                SegmentTractAssignment(
                    segment_id=seg.segment_id,
                    tract_id=tract_id,
                    clipped_length=seg.length_mi * arc_inside[tract_id] / inside_total,
                )
            )
    return result


def tract_avg_speed_limit(
    assignments: AssignmentResult | list[SegmentTractAssignment],
    segments: list[RoadSegment],
) -> dict[str, float]:
    """Clipped-length-weighted mean speed limit per tract.

    Segments without a posted limit contribute nothing.  The returned mean
    is not snapped; snapping to the 5 mph bin grid happens inside the EF
    lookup.
    """
    by_id = {s.segment_id: s for s in segments}
    num: dict[str, float] = {}
    den: dict[str, float] = {}
    for a in assignments:
        seg = by_id.get(a.segment_id)
        if seg is None:
            raise ValidationError(f"assignment references unknown segment {a.segment_id}")
        if seg.speed_limit is None:
            continue
        num[a.tract_id] = num.get(a.tract_id, 0.0) + seg.speed_limit * a.clipped_length
        den[a.tract_id] = den.get(a.tract_id, 0.0) + a.clipped_length
    return {tid: num[tid] / den[tid] for tid in sorted(num) if den[tid] > 0}


def dataset_mean_speed_limit(segments: list[RoadSegment]) -> float:
    """Length-weighted mean posted limit across the whole road inventory.

    Used as the fallback speed for tracts with registered vehicles but no
    assigned road length.
    """
    num = den = 0.0
    for seg in segments:
        if seg.speed_limit is not None:
            num += seg.speed_limit * seg.length_mi
            den += seg.length_mi
    if den <= 0:
        raise ValidationError("no segment carries a speed limit; cannot derive a fallback")
    return num / den


def load_tracts_geojson(path) -> list[TractGeometry]:
    """Read tract polygons from a GeoJSON FeatureCollection.

    Features must be Polygon or MultiPolygon with a ``tract_id`` property.
    """
    with open(path) as fh:
        doc = json.load(fh)
    feats = doc.get("features")
    if doc.get("type") != "FeatureCollection" or feats is None:
        raise ValidationError(f"{path}: expected a GeoJSON FeatureCollection")
    tracts = []
    for i, feat in enumerate(feats):
        props = feat.get("properties") or {}
        tract_id = props.get("tract_id")
        if tract_id is None:
            raise ValidationError(f"{path}: feature {i} missing property 'tract_id'")
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Polygon":
            rings = [np.asarray(r, dtype=float) for r in coords]
        elif gtype == "MultiPolygon":
            rings = [np.asarray(r, dtype=float) for part in coords for r in part]
        else:
            raise ValidationError(f"{path}: tract {tract_id}: unsupported geometry type {gtype!r}")
        tracts.append(TractGeometry(tract_id=str(tract_id), rings=rings))
    ids = [t.tract_id for t in tracts]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"{path}: duplicate tract_id values {dupes}")
    return tracts


def load_roads_geojson(path, length_tolerance: float = 0.05) -> list[RoadSegment]:
    """Read road segments from a GeoJSON FeatureCollection of LineStrings.

    Expected properties: ``segment_id``, ``length_mi``, ``functional_class``,
    and optionally ``speed_limit`` and ``aadt``.  The declared length must
    agree with the polyline arc length within ``length_tolerance`` (relative)
    because the arc is used to split the declared length across tracts.
    """
    with open(path) as fh:
        doc = json.load(fh)
    feats = doc.get("features")
    if doc.get("type") != "FeatureCollection" or feats is None:
        raise ValidationError(f"{path}: expected a GeoJSON FeatureCollection")
    segments = []
    for i, feat in enumerate(feats):
        props = feat.get("properties") or {}
        sid = props.get("segment_id")
        if sid is None:
            raise ValidationError(f"{path}: feature {i} missing property 'segment_id'")
        geom = feat.get("geometry") or {}
        if geom.get("type") != "LineString":
            raise ValidationError(
                f"{path}: segment {sid}: unsupported geometry type {geom.get('type')!r}"
            )
        if "length_mi" not in props:
            raise ValidationError(f"{path}: segment {sid} missing property 'length_mi'")
        seg = RoadSegment(
            segment_id=str(sid),
            polyline=np.asarray(geom["coordinates"], dtype=float),
            length_mi=float(props["length_mi"]),
            speed_limit=None if props.get("speed_limit") is None else float(props["speed_limit"]),
            aadt=None if props.get("aadt") is None else float(props["aadt"]),
            functional_class=props.get("functional_class", "Other"),
        )
        arc = seg.arc_length
        if arc > 0 and abs(arc - seg.length_mi) / seg.length_mi > length_tolerance:
            raise ValidationError(
                f"{path}: segment {sid}: declared length {seg.length_mi} vs arc length "
                f"{arc:.6g} differs by more than {length_tolerance:.0%}"
            )
        segments.append(seg)
    ids = [s.segment_id for s in segments]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"{path}: duplicate segment_id values {dupes}")
    return segments
