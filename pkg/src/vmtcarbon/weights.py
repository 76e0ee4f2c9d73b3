"""Spatial weight matrices over tract centroids.

The default scheme is k-nearest-neighbor (k=8) with row standardization,
which guarantees no empty rows; a distance band is offered as an
alternative.  Weights are stored sparse (CSR) and shared immutably across
estimator runs; eigenvalues are computed lazily and cached because every
likelihood search reuses them.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import sparse

from .errors import ValidationError

_ROW_SUM_TOL = 1e-12


class SpatialWeights:
    """Sparse spatial weight matrix with optional row standardization."""

    def __init__(self, matrix, scheme: str, ids=None, row_standardized: bool = False):
        m = sparse.csr_matrix(matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValidationError("weight matrix must be square")
        if m.diagonal().any():
            raise ValidationError("weight matrix must have a zero diagonal (no self-neighbors)")
        if m.nnz and m.data.min() < 0:
            raise ValidationError("weights must be non-negative")
        if row_standardized:
            sums = np.asarray(m.sum(axis=1)).ravel()
            bad = np.nonzero((np.abs(sums - 1.0) > _ROW_SUM_TOL) & (sums != 0))[0]
            if bad.size:
                raise ValidationError(
                    f"row_standardized weights have rows summing != 1 (first bad row {bad[0]})"
                )
        self._m = m
        self.scheme = scheme
        self.row_standardized = row_standardized
        self.ids = list(ids) if ids is not None else [str(i) for i in range(m.shape[0])]
        if len(self.ids) != m.shape[0]:
            raise ValidationError("ids length must match matrix size")
        self._evals = None

    @property
    def n(self) -> int:
        return self._m.shape[0]

    @property
    def sparse(self) -> sparse.csr_matrix:
        return self._m

    @property
    def s0(self) -> float:
        return float(self._m.sum())

    def neighbors(self, i: int) -> list[tuple[int, float]]:
        row = self._m.getrow(i)
        return list(zip(row.indices.tolist(), row.data.tolist()))

    def full(self) -> np.ndarray:
        return self._m.toarray()

    def lag(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return self._m @ v

    def row_standardize(self) -> "SpatialWeights":
        """Return a row-standardized copy; idempotent."""
        sums = np.asarray(self._m.sum(axis=1)).ravel()
        inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
        m = sparse.diags(inv) @ self._m
        return SpatialWeights(m, scheme=self.scheme, ids=self.ids, row_standardized=True)

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the dense matrix, cached after the first call."""
        if self._evals is None:
            self._evals = np.linalg.eigvals(self.full())
        return self._evals

    def permute(self, order) -> "SpatialWeights":
        """Reorder rows/columns consistently (for invariance checks)."""
        order = np.asarray(order)
        m = self._m[order][:, order]
        return SpatialWeights(
            m,
            scheme=self.scheme,
            ids=[self.ids[i] for i in order],
            row_standardized=self.row_standardized,
        )


def _dedupe_centroids(pts: np.ndarray, ids: list[str]) -> np.ndarray:
    seen: dict[tuple[float, float], int] = {}
    out = pts.copy()
    for i in range(len(out)):
        key = (out[i, 0], out[i, 1])
        if key in seen:
            seen[key] += 1
            out[i, 0] += 1e-9 * seen[key]
            warnings.warn(
                f"duplicate centroid for {ids[i]}; applied deterministic 1e-9 jitter",
                stacklevel=3,
            )
        else:
            seen[key] = 0
    return out


def knn_weights(centroids, k: int, ids=None, row_standardize: bool = True) -> SpatialWeights:
    """k-nearest-neighbor weights by Euclidean distance.

    Distance ties break by ascending id; exact duplicate centroids are
    jittered deterministically (with a warning) so neighbor sets stay
    reproducible.
    """
    pts = np.asarray(centroids, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError("centroids must be an (n, 2) array")
    n = pts.shape[0]
    if not 1 <= k < n:
        raise ValidationError(f"need n > k >= 1, got n={n}, k={k}")
    ids = list(ids) if ids is not None else [str(i) for i in range(n)]
    if len(ids) != n:
        raise ValidationError("ids length must match centroid count")
    pts = _dedupe_centroids(pts, ids)

    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    rows, cols = [], []
    for i in range(n):
        order = sorted((dist, ids[j], j) for j, dist in enumerate(d2[i]) if j != i)
        for _, _, j in order[:k]:
            rows.append(i)
            cols.append(j)
    m = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    w = SpatialWeights(m, scheme=f"knn({k})", ids=ids)
    return w.row_standardize() if row_standardize else w


def distance_band_weights(centroids, threshold: float, ids=None,
                          row_standardize: bool = True) -> SpatialWeights:
    """Binary weights for all pairs within ``threshold`` distance.

    Rows may be empty (islands); the ML estimators require the KNN scheme
    for that reason.
    """
    pts = np.asarray(centroids, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError("centroids must be an (n, 2) array")
    if not threshold > 0:
        raise ValidationError("distance threshold must be positive")
    n = pts.shape[0]
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    mask = (d2 <= threshold * threshold) & ~np.eye(n, dtype=bool)
    m = sparse.csr_matrix(mask.astype(float))
    w = SpatialWeights(m, scheme=f"distance_band({threshold:g})", ids=ids)
    return w.row_standardize() if row_standardize else w


def morans_i(values, w: SpatialWeights) -> float:
    """Global Moran's I: (n / S0) * (z'Wz) / (z'z) with z mean-centered."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size != w.n:
        raise ValidationError(f"values length {v.size} != weights size {w.n}")
    z = v - v.mean()
    denom = float(z @ z)
    if denom == 0:
        raise ValidationError("Moran's I is undefined for a constant vector")
    s0 = w.s0
    if s0 == 0:
        raise ValidationError("weight matrix has no links")
    return float(w.n / s0 * (z @ w.lag(z)) / denom)


def export_weights(w: SpatialWeights, path) -> None:
    """Write ``i j w_ij`` triples with an ``n``/scheme header line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"n={w.n} scheme={w.scheme} row_standardized={int(w.row_standardized)}\n")
        coo = w.sparse.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{i} {j} {float(v)!r}\n")


def import_weights(path) -> SpatialWeights:
    """Read a file written by :func:`export_weights`."""
    with open(path) as fh:
        header = fh.readline().strip()
        try:
            fields = dict(part.split("=", 1) for part in header.split())
            n = int(fields["n"])
            scheme = fields["scheme"]
            standardized = bool(int(fields["row_standardized"]))
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"{path}: bad weights header {header!r}") from exc
        rows, cols, data = [], [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                i, j, v = line.split()
                rows.append(int(i))
                cols.append(int(j))
                data.append(float(v))
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: bad triple {line!r}") from exc
    m = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    return SpatialWeights(m, scheme=scheme, row_standardized=standardized)
