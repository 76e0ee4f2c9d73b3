"""Seeded synthetic datasets: tract grids, road networks, vehicle census
tables, and spatially autocorrelated panels with known true parameters.

Everything is driven by ``numpy.random.default_rng`` so a fixed seed
reproduces every file byte for byte.
"""

from __future__ import annotations

import numpy as np

from .geo import RoadSegment, TractGeometry
from .inventory import TractVehicleRecord
from .weights import SpatialWeights, knn_weights

SPEED_LIMIT_CHOICES = (25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0, 65.0)
FUNCTIONAL_CLASS_CHOICES = (
    ("Interstate", 0.05),
    ("PrincipalArterial", 0.15),
    ("MinorArterial", 0.2),
    ("MajorCollector", 0.2),
    ("Other", 0.4),
)

N_REGIONS = 13  # statewide planning-organization count mirrored by default


def tract_id_for(row: int, col: int, grid: int) -> str:
    return f"T{row * grid + col:04d}"


def make_tract_grid(grid: int, cell: float = 1.0, origin: tuple[float, float] = (0.0, 0.0)) -> list[TractGeometry]:
    """A grid x grid block of square tracts, row-major ids T0000.."""
    x0, y0 = origin
    tracts = []
    for r in range(grid):
        for c in range(grid):
            xa, ya = x0 + c * cell, y0 + r * cell
            xb, yb = xa + cell, ya + cell
            ring = np.array([[xa, ya], [xb, ya], [xb, yb], [xa, yb], [xa, ya]])
            tracts.append(TractGeometry(tract_id=tract_id_for(r, c, grid), rings=[ring]))
    return tracts


def make_road_network(grid: int, rng: np.random.Generator, n_segments: int = 60,
                      cell: float = 1.0) -> list[RoadSegment]:
    """Random polylines across the tract grid.

    Each segment has 2-4 vertices inside the grid interior (so every
    segment is fully covered by tracts), a posted limit, AADT, and a
    functional class; the declared length equals the arc length.
    """
    extent = grid * cell
    classes = [c for c, _ in FUNCTIONAL_CLASS_CHOICES]
    probs = np.array([p for _, p in FUNCTIONAL_CLASS_CHOICES])
    segments = []
    for i in range(n_segments):
        n_pts = int(rng.integers(2, 5))
        start = rng.uniform(0.05 * extent, 0.95 * extent, size=2)
        steps = rng.uniform(-0.25 * extent, 0.25 * extent, size=(n_pts - 1, 2))
        pts = np.vstack([start, start + np.cumsum(steps, axis=0)])
        pts = np.clip(pts, 0.02 * extent, 0.98 * extent)
        arc = float(np.sum(np.hypot(*(np.diff(pts, axis=0).T))))
        if arc <= 1e-6:
            pts = np.vstack([start, start + [0.1 * extent, 0.0]])
            arc = 0.1 * extent
        segments.append(
            RoadSegment(
                segment_id=f"R{i:04d}",
                polyline=pts,
                length_mi=arc,
                speed_limit=float(rng.choice(SPEED_LIMIT_CHOICES)),
                aadt=float(np.round(rng.lognormal(8.5, 0.8))),
                functional_class=str(rng.choice(classes, p=probs)),
            )
        )
    return segments


def make_vehicle_census(tract_ids: list[str], rng: np.random.Generator) -> list[TractVehicleRecord]:
    """Four quarterly records per tract with plausible magnitudes."""
    records = []
    for tid in tract_ids:
        base_dvmt = rng.uniform(15.0, 45.0)
        base_count = rng.integers(300, 3000)
        for q in range(1, 5):
            records.append(
                TractVehicleRecord(
                    tract_id=tid,
                    quarter=q,
                    dvmt_per_vehicle=float(base_dvmt * rng.uniform(0.9, 1.1)),
                    vehicle_count=float(base_count),
                )
            )
    return records


def simulate_sarar(w: SpatialWeights, X: np.ndarray, beta: np.ndarray,
                   gamma: float, lam: float, sigma: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw y = (I - gamma*W)^-1 (X beta + (I - lam*W)^-1 mu), mu ~ N(0, sigma^2)."""
    n = w.n
    mu = rng.normal(0.0, sigma, size=n)
    eps = mu if lam == 0 else np.linalg.solve(np.eye(n) - lam * w.full(), mu)
    xb_eps = X @ beta + eps
    return xb_eps if gamma == 0 else np.linalg.solve(np.eye(n) - gamma * w.full(), xb_eps)


# true coefficients used by the panel generator, in formula order
PANEL_BETA = {
    "const": 8.0,
    "log_percapinc": 0.16,
    "log_percapinc_sq": -0.008,
    "pct_over65": -0.35,
    "avghhsize": 0.02,
    "veh_phh": -0.04,
    "w_carpool": 0.02,
    "w_pubtrans": -0.12,
    "w_bike": -0.45,
    "w_home": 0.04,
    "mapc_dum": -0.015,
    "w_carpool:mapc_dum": -0.14,
    "w_pubtrans:mapc_dum": -0.04,
    "accessindex": -0.015,
}

PANEL_FORMULA = "log_vmt ~ " + " + ".join(k for k in PANEL_BETA if k != "const")


def make_sarar_panel(grid: int, gamma: float, lam: float, sigma: float,
                     rng: np.random.Generator, k_neighbors: int = 8):
    """Synthetic tract panel on a grid with a SARAR(1,1) outcome.

    Returns (dataframe, weights, truth dict).  Columns mirror the real
    panel schema: sociodemographic covariates, journey-to-work shares,
    an MAPC dummy with interactions, a region id for fixed effects, and
    centroid coordinates.
    """
    import pandas as pd

    n = grid * grid
    rows, cols = np.divmod(np.arange(n), grid)
    cx = cols + 0.5
    cy = rows + 0.5
    ids = [tract_id_for(r, c, grid) for r, c in zip(rows, cols)]
    w = knn_weights(np.column_stack([cx, cy]), k=k_neighbors, ids=ids)

    center = grid / 2.0
    dist_center = np.hypot(cx - center, cy - center)
    mapc = (dist_center <= grid / 4.0).astype(float)

    df = pd.DataFrame(
        {
            "tract_id": ids,
            "x": cx,
            "y": cy,
            "region_id": [f"RPA{int(v):02d}" for v in np.minimum(rows * N_REGIONS // grid, N_REGIONS - 1)],
            "percapinc": rng.lognormal(10.5, 0.3, size=n),
            "pct_over65": rng.uniform(0.05, 0.30, size=n),
            "avghhsize": rng.normal(2.5, 0.3, size=n),
            "veh_phh": rng.normal(1.8, 0.35, size=n),
            "w_carpool": rng.beta(2.0, 20.0, size=n),
            "w_pubtrans": rng.beta(2.0, 12.0, size=n),
            "w_bike": rng.beta(1.5, 40.0, size=n),
            "w_home": rng.beta(2.0, 30.0, size=n),
            "accessindex": rng.uniform(0.0, 1.0, size=n),
            "mapc_dum": mapc,
        }
    )
    df["log_percapinc"] = np.log(df["percapinc"])
    df["log_percapinc_sq"] = df["log_percapinc"] ** 2

    X_cols = [np.ones(n)]
    for name in PANEL_BETA:
        if name == "const":
            continue
        parts = name.split(":")
        col = np.ones(n)
        for p in parts:
            col = col * df[p].to_numpy()
        X_cols.append(col)
    X = np.column_stack(X_cols)
    beta = np.array(list(PANEL_BETA.values()))
    df["log_vmt"] = simulate_sarar(w, X, beta, gamma, lam, sigma, rng)

    truth = {
        "gamma": gamma,
        "lambda": lam,
        "sigma": sigma,
        "beta": dict(PANEL_BETA),
        "formula": PANEL_FORMULA,
        "k_neighbors": k_neighbors,
        "grid": grid,
        "n": n,
    }
    return df, w, truth
