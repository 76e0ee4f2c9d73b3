import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from vmtcarbon import TractPanel, knn_weights  # noqa: E402
from vmtcarbon.synth import simulate_sarar  # noqa: E402

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
DATA = os.path.join(ROOT, "tests", "data")
FIXTURE3 = os.path.join(DATA, "fixture3")
GOLDEN = os.path.join(DATA, "golden")

# Published reference values used as independent oracles: the weighted EF
# (gCO2e/mile) by snapped speed limit and period, and the four-way split of
# daily VMT (which totals 0.998, kept verbatim).
REFERENCE_EF = {
    30: {"AM": 565.8, "MD": 642.69, "PM": 583.22, "NT": 559.88},
    35: {"AM": 536.87, "MD": 614.55, "PM": 550.29, "NT": 528.45},
    40: {"AM": 519.93, "MD": 591.23, "PM": 526.19, "NT": 514.83},
    50: {"AM": 487.36, "MD": 568.65, "PM": 499.35, "NT": 477.2},
    60: {"AM": 469.52, "MD": 550.55, "PM": 487.85, "NT": 456.8},
}
REFERENCE_TOD_SHARE = {"AM": 0.1662, "MD": 0.3266, "PM": 0.2109, "NT": 0.2943}


def lattice_weights(side: int, k: int = 8):
    """Row-standardized KNN weights on a side x side unit grid."""
    n = side * side
    rows, cols = np.divmod(np.arange(n), side)
    pts = np.column_stack([cols + 0.5, rows + 0.5])
    return knn_weights(pts, k=k, ids=[f"T{i:04d}" for i in range(n)])


def make_panel(y, X, names):
    return TractPanel(y=y, X=np.asarray(X, dtype=float), names=list(names), outcome="y")


def draw_design(n, rng, k_x=2):
    cols = [np.ones(n)] + [rng.normal(size=n) for _ in range(k_x)]
    return np.column_stack(cols), ["const"] + [f"x{i+1}" for i in range(k_x)]


@pytest.fixture(scope="session")
def lattice20():
    w = lattice_weights(20)
    w.eigenvalues()  # warm the cache shared by the ML fits
    return w


@pytest.fixture(scope="session")
def lattice10():
    return lattice_weights(10)


__all__ = [
    "DATA",
    "FIXTURE3",
    "GOLDEN",
    "REFERENCE_EF",
    "REFERENCE_TOD_SHARE",
    "ROOT",
    "draw_design",
    "lattice_weights",
    "make_panel",
    "simulate_sarar",
]
