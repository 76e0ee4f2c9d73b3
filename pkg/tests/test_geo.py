import numpy as np
import pytest
from matplotlib.path import Path

from conftest import FIXTURE3
from vmtcarbon import (
    RoadSegment,
    TractGeometry,
    ValidationError,
    assign_segments,
    dataset_mean_speed_limit,
    load_roads_geojson,
    load_tracts_geojson,
    tract_avg_speed_limit,
)


def square(tract_id, x0, y0, size=1.0):
    ring = np.array(
        [[x0, y0], [x0 + size, y0], [x0 + size, y0 + size], [x0, y0 + size], [x0, y0]]
    )
    return TractGeometry(tract_id, [ring])


def seg(sid, points, limit=30.0, aadt=100.0, fclass="Other", length=None):
    pts = np.asarray(points, dtype=float)
    if length is None:
        length = float(np.sum(np.hypot(*(np.diff(pts, axis=0).T))))
    return RoadSegment(sid, pts, length_mi=length, speed_limit=limit, aadt=aadt,
                       functional_class=fclass)


def sampling_oracle(tracts, segment, n_samples=10_000):
    """Independent clipped-length estimate: dense points along the polyline,
    membership via matplotlib paths, counts scaled to the declared length."""
    pts = segment.polyline
    deltas = np.diff(pts, axis=0)
    lens = np.hypot(deltas[:, 0], deltas[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    total = cum[-1]
    s = (np.arange(n_samples) + 0.5) / n_samples * total
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(pts) - 2)
    frac = (s - cum[idx]) / np.where(lens[idx] > 0, lens[idx], 1.0)
    samples = pts[idx] + frac[:, None] * deltas[idx]

    counts = {}
    claimed = np.zeros(n_samples, dtype=bool)
    for tract in tracts:
        inside = np.zeros(n_samples, dtype=bool)
        for ring in tract.rings:
            inside ^= Path(ring).contains_points(samples)
        fresh = inside & ~claimed
        claimed |= fresh
        if fresh.any():
            counts[tract.tract_id] = int(fresh.sum())
    inside_total = sum(counts.values())
    return {tid: segment.length_mi * c / inside_total for tid, c in counts.items()}


def test_segment_wholly_inside():
    t = square("A", 0, 0)
    s = seg("S", [[0.2, 0.2], [0.8, 0.8]])
    res = assign_segments([t], [s])
    assert len(res.assignments) == 1
    a = res.assignments[0]
    assert a.tract_id == "A"
    assert a.clipped_length == pytest.approx(s.length_mi, rel=1e-12)
    assert not res.unassigned


def test_half_plane_split():
    left = square("L", 0, 0)
    right = square("R", 1, 0)
    s = seg("S", [[0.5, 0.5], [1.5, 0.5]])
    res = assign_segments([left, right], [s])
    got = {(a.tract_id): a.clipped_length for a in res.assignments}
    assert got == {"L": pytest.approx(0.5), "R": pytest.approx(0.5)}


def test_diagonal_against_sampling_oracle():
    tracts = [square("A", 0, 0), square("B", 1, 0), square("C", 2, 0)]
    s = seg("S", [[0.1, 0.05], [2.9, 0.95]])
    res = assign_segments(tracts, [s])
    got = {a.tract_id: a.clipped_length for a in res.assignments}
    oracle = sampling_oracle(tracts, s)
    assert set(got) == set(oracle)
    for tid in oracle:
        assert got[tid] == pytest.approx(oracle[tid], rel=5e-3)


def test_bent_polyline_against_sampling_oracle():
    tracts = [square("A", 0, 0), square("B", 1, 0), square("C", 0, 1), square("D", 1, 1)]
    s = seg("S", [[0.3, 0.3], [1.7, 0.4], [1.5, 1.6], [0.2, 1.2]])
    res = assign_segments(tracts, [s])
    got = {a.tract_id: a.clipped_length for a in res.assignments}
    oracle = sampling_oracle(tracts, s, n_samples=40_000)
    assert set(got) == set(oracle)
    for tid in oracle:
        assert got[tid] == pytest.approx(oracle[tid], rel=5e-3)
    assert sum(got.values()) == pytest.approx(s.length_mi, rel=1e-12)


def _random_network(rng, n_tracts_side=4, n_segments=12):
    tracts = [
        square(f"T{r}{c}", c, r)
        for r in range(n_tracts_side)
        for c in range(n_tracts_side)
    ]
    segments = []
    extent = n_tracts_side
    for i in range(n_segments):
        n_pts = rng.integers(2, 5)
        pts = rng.uniform(0.05 * extent, 0.95 * extent, size=(n_pts, 2))
        arc = float(np.sum(np.hypot(*(np.diff(pts, axis=0).T))))
        if arc <= 1e-9:
            continue
        segments.append(
            seg(f"S{i:03d}", pts, limit=float(rng.choice([25, 30, 40, 55, 65])))
        )
    return tracts, segments


@pytest.mark.parametrize("seed", range(8))
def test_length_conservation_random_networks(seed):
    rng = np.random.default_rng(seed)
    tracts, segments = _random_network(rng)
    res = assign_segments(tracts, segments)
    per_seg = {}
    for a in res.assignments:
        per_seg[a.segment_id] = per_seg.get(a.segment_id, 0.0) + a.clipped_length
        assert a.clipped_length > 0
    assigned = {s.segment_id: s.length_mi for s in segments if s.segment_id in per_seg}
    for sid, total in per_seg.items():
        assert total <= assigned[sid] + 1e-6
    assert sum(per_seg.values()) == pytest.approx(sum(assigned.values()), rel=1e-4)


def test_translation_invariance():
    rng = np.random.default_rng(99)
    tracts, segments = _random_network(rng)
    res = assign_segments(tracts, segments)
    dx, dy = 137.0, -42.0
    tracts2 = [
        TractGeometry(t.tract_id, [r + np.array([dx, dy]) for r in t.rings]) for t in tracts
    ]
    segments2 = [
        RoadSegment(s.segment_id, s.polyline + np.array([dx, dy]), s.length_mi,
                    s.speed_limit, s.aadt, s.functional_class)
        for s in segments
    ]
    res2 = assign_segments(tracts2, segments2)
    a1 = {(a.segment_id, a.tract_id): a.clipped_length for a in res.assignments}
    a2 = {(a.segment_id, a.tract_id): a.clipped_length for a in res2.assignments}
    assert set(a1) == set(a2)
    for key in a1:
        assert a1[key] == pytest.approx(a2[key], rel=1e-9)
    m1 = tract_avg_speed_limit(res, segments)
    m2 = tract_avg_speed_limit(res2, segments2)
    for tid in m1:
        assert m1[tid] == pytest.approx(m2[tid], rel=1e-9)


def test_avg_speed_limit_basics():
    t = square("A", 0, 0)
    s1 = seg("S1", [[0.1, 0.5], [0.9, 0.5]], limit=30)
    res = assign_segments([t], [s1])
    assert tract_avg_speed_limit(res, [s1]) == {"A": pytest.approx(30.0)}

    s2 = seg("S2", [[0.5, 0.1], [0.5, 0.9]], limit=50)
    res = assign_segments([t], [s1, s2])
    # equal clipped lengths -> plain mean
    assert tract_avg_speed_limit(res, [s1, s2])["A"] == pytest.approx(40.0)


def test_avg_speed_limit_matches_direct_recomputation():
    rng = np.random.default_rng(5)
    tracts, segments = _random_network(rng, n_segments=20)
    res = assign_segments(tracts, segments)
    got = tract_avg_speed_limit(res, segments)
    by_id = {s.segment_id: s for s in segments}
    num, den = {}, {}
    for a in res.assignments:
        lim = by_id[a.segment_id].speed_limit
        num[a.tract_id] = num.get(a.tract_id, 0.0) + lim * a.clipped_length
        den[a.tract_id] = den.get(a.tract_id, 0.0) + a.clipped_length
    for tid in got:
        assert got[tid] == num[tid] / den[tid]  # exact
        limits = [by_id[a.segment_id].speed_limit for a in res.assignments if a.tract_id == tid]
        assert min(limits) <= got[tid] <= max(limits)


def test_unassigned_and_errors():
    t = square("A", 0, 0)
    far = seg("far", [[5, 5], [6, 5]])
    res = assign_segments([t], [far])
    assert res.unassigned == ["far"]
    assert not res.assignments

    with pytest.raises(ValidationError):
        assign_segments([], [far])

    degenerate = TractGeometry(
        "zero", [np.array([[0, 0], [1, 0], [1, 0], [0, 0], [0, 0]], dtype=float)]
    )
    res = assign_segments([t, degenerate], [seg("S", [[0.2, 0.2], [0.8, 0.2]])])
    assert any("zero" in w for w in res.warnings)
    assert {a.tract_id for a in res.assignments} == {"A"}


def test_dataset_mean_speed_limit():
    s1 = seg("a", [[0, 0], [1, 0]], limit=30)
    s2 = seg("b", [[0, 0], [3, 0]], limit=50)
    assert dataset_mean_speed_limit([s1, s2]) == pytest.approx((30 * 1 + 50 * 3) / 4)
    s3 = RoadSegment("c", np.array([[0, 0], [1, 0.0]]), 1.0, speed_limit=None)
    with pytest.raises(ValidationError):
        dataset_mean_speed_limit([s3])


def test_segment_validation():
    with pytest.raises(ValidationError):
        RoadSegment("x", np.array([[0.0, 0.0]]), 1.0)
    with pytest.raises(ValidationError):
        RoadSegment("x", np.array([[0, 0], [1, 0.0]]), -1.0)
    with pytest.raises(ValidationError):
        RoadSegment("x", np.array([[0, 0], [1, 0.0]]), 1.0, speed_limit=120.0)
    with pytest.raises(ValidationError):
        RoadSegment("x", np.array([[0, 0], [1, 0.0]]), 1.0, aadt=-5.0)
    with pytest.raises(ValidationError):
        RoadSegment("x", np.array([[0, 0], [1, 0.0]]), 1.0, functional_class="Cowpath")


def test_multipolygon_and_holes():
    outer = np.array([[0, 0], [4, 0], [4, 4], [0, 4], [0, 0]], dtype=float)
    hole = np.array([[1, 1], [3, 1], [3, 3], [1, 3], [1, 1]], dtype=float)
    donut = TractGeometry("donut", [outer, hole])
    assert donut.area == pytest.approx(16 - 4)
    assert donut.contains(0.5, 0.5)
    assert not donut.contains(2.0, 2.0)
    inner = square("inner", 1, 1, size=2.0)
    s = seg("S", [[0.5, 2.0], [3.5, 2.0]])
    res = assign_segments([donut, inner], [s])
    got = {a.tract_id: a.clipped_length for a in res.assignments}
    assert got["donut"] == pytest.approx(1.0)
    assert got["inner"] == pytest.approx(2.0)


def test_geojson_loaders_roundtrip():
    tracts = load_tracts_geojson(f"{FIXTURE3}/tracts.geojson")
    assert [t.tract_id for t in tracts] == ["T1", "T2", "T3"]
    assert tracts[0].area == pytest.approx(1.0)
    assert tracts[1].centroid == (pytest.approx(1.5), pytest.approx(0.5))

    segments = load_roads_geojson(f"{FIXTURE3}/roads.geojson")
    assert [s.segment_id for s in segments] == ["R1", "R2", "R3", "R4"]
    assert segments[0].functional_class == "Interstate"
    assert segments[0].aadt == 10000


def test_geojson_schema_errors(tmp_path):
    bad = tmp_path / "bad.geojson"
    bad.write_text('{"type": "FeatureCollection", "features": [{"type": "Feature", '
                   '"properties": {}, "geometry": {"type": "Polygon", "coordinates": []}}]}')
    with pytest.raises(ValidationError, match="tract_id"):
        load_tracts_geojson(bad)

    bad2 = tmp_path / "bad2.geojson"
    bad2.write_text('{"type": "FeatureCollection", "features": [{"type": "Feature", '
                    '"properties": {"segment_id": "s", "length_mi": 9.0}, '
                    '"geometry": {"type": "LineString", "coordinates": [[0,0],[1,0]]}}]}')
    with pytest.raises(ValidationError, match="arc length"):
        load_roads_geojson(bad2)
