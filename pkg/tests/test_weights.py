import numpy as np
import pytest

from conftest import lattice_weights
from vmtcarbon import (
    SpatialWeights,
    ValidationError,
    distance_band_weights,
    export_weights,
    import_weights,
    knn_weights,
    morans_i,
)


def test_knn_collinear_tie_break():
    # middle point equidistant from both ends: the tie goes to the lower id
    pts = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]
    w = knn_weights(pts, k=1, ids=["a", "b", "c"])
    assert w.neighbors(1) == [(0, 1.0)]
    # with reversed ids the other endpoint wins
    w2 = knn_weights(pts, k=1, ids=["c", "b", "a"])
    assert w2.neighbors(1) == [(2, 1.0)]


def test_rows_sum_to_one_exactly():
    rng = np.random.default_rng(0)
    w = knn_weights(rng.uniform(0, 10, size=(40, 2)), k=5)
    sums = np.asarray(w.sparse.sum(axis=1)).ravel()
    assert np.all(sums == 1.0)
    for i in range(w.n):
        assert all(v == pytest.approx(1 / 5) for _, v in w.neighbors(i))


def test_knn_matches_brute_force_oracle():
    rng = np.random.default_rng(17)
    pts = rng.uniform(0, 100, size=(50, 2))
    k = 8
    w = knn_weights(pts, k=k)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    for i in range(50):
        order = np.argsort(d2[i])
        expected = {j for j in order if j != i}
        expected = set(sorted(expected, key=lambda j: (d2[i][j], j))[:k])
        got = {j for j, _ in w.neighbors(i)}
        assert got == expected


def test_no_self_neighbors_and_nonnegative():
    rng = np.random.default_rng(2)
    w = knn_weights(rng.uniform(0, 1, size=(30, 2)), k=4)
    assert not w.sparse.diagonal().any()
    assert w.sparse.data.min() > 0


def test_knn_errors_and_duplicates():
    pts = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]
    with pytest.raises(ValidationError):
        knn_weights(pts, k=3)
    with pytest.raises(ValidationError):
        knn_weights(pts, k=0)
    dup = [(0.0, 0.0), (0.0, 0.0), (2.0, 0.0)]
    with pytest.warns(UserWarning, match="jitter"):
        w = knn_weights(dup, k=1)
    assert w.n == 3


def test_row_standardize_idempotent():
    rng = np.random.default_rng(4)
    w = knn_weights(rng.uniform(0, 1, size=(25, 2)), k=3)
    again = w.row_standardize()
    assert (w.sparse != again.sparse).nnz == 0


def test_spectral_bound():
    w = lattice_weights(10)
    assert np.abs(w.eigenvalues()).max() <= 1.0 + 1e-8
    rng = np.random.default_rng(11)
    w2 = knn_weights(rng.uniform(0, 5, size=(60, 2)), k=6)
    assert np.abs(w2.eigenvalues()).max() <= 1.0 + 1e-8


def test_permutation_equivariance():
    rng = np.random.default_rng(9)
    pts = rng.uniform(0, 10, size=(30, 2))
    w = knn_weights(pts, k=4)
    perm = rng.permutation(30)
    wp = w.permute(perm)
    dense = w.full()
    assert np.array_equal(wp.full(), dense[perm][:, perm])


def test_distance_band_rook_lattice():
    side = 6
    rows, cols = np.divmod(np.arange(side * side), side)
    pts = np.column_stack([cols.astype(float), rows.astype(float)])
    w = distance_band_weights(pts, threshold=1.0)
    # interior cells have exactly 4 rook neighbors
    interior = side + 1
    assert len(w.neighbors(interior)) == 4


# --- Moran's I --------------------------------------------------------------


def test_moran_null_expectation():
    w = lattice_weights(10)
    n = w.n
    rng = np.random.default_rng(123)
    base = rng.normal(size=n)
    sims = [morans_i(base[rng.permutation(n)], w) for _ in range(500)]
    expected = -1.0 / (n - 1)
    se = np.std(sims) / np.sqrt(len(sims))
    assert np.mean(sims) == pytest.approx(expected, abs=4 * se)


def test_moran_smooth_surface_near_upper_bound():
    side = 10
    w = lattice_weights(side)
    rows, cols = np.divmod(np.arange(side * side), side)
    values = (cols + rows).astype(float)  # smooth gradient across the lattice
    got = morans_i(values, w)
    # direct dense-matrix evaluation as the oracle
    z = values - values.mean()
    dense = w.full()
    oracle = w.n / dense.sum() * (z @ dense @ z) / (z @ z)
    assert got == pytest.approx(oracle, rel=1e-12)
    assert got > 0.8


def test_moran_checkerboard_negative():
    side = 8
    rows, cols = np.divmod(np.arange(side * side), side)
    pts = np.column_stack([cols.astype(float), rows.astype(float)])
    w = distance_band_weights(pts, threshold=1.0)
    checker = ((rows + cols) % 2).astype(float)
    got = morans_i(checker, w)
    assert got < 0
    assert got == pytest.approx(-1.0, abs=1e-12)  # rook checkerboard is maximally rough


def test_moran_constant_vector_error():
    w = lattice_weights(5)
    with pytest.raises(ValidationError):
        morans_i(np.ones(w.n), w)


# --- persistence ------------------------------------------------------------


def test_export_import_roundtrip(tmp_path):
    rng = np.random.default_rng(21)
    w = knn_weights(rng.uniform(0, 10, size=(20, 2)), k=4)
    path = tmp_path / "weights.txt"
    export_weights(w, path)
    back = import_weights(path)
    assert back.n == w.n
    assert back.scheme == w.scheme
    assert back.row_standardized
    assert (back.sparse != w.sparse).nnz == 0  # exact float round-trip

    header = path.read_text().splitlines()[0]
    assert header.startswith("n=20 scheme=knn(4)")


def test_import_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("nonsense header\n")
    with pytest.raises(ValidationError):
        import_weights(p)
    p2 = tmp_path / "bad2.txt"
    p2.write_text("n=2 scheme=knn(1) row_standardized=1\n0 1 not-a-number\n")
    with pytest.raises(ValidationError, match="line 2"):
        import_weights(p2)


def test_constructor_validation():
    with pytest.raises(ValidationError):
        SpatialWeights(np.eye(3), scheme="bad")  # self-neighbors
    with pytest.raises(ValidationError):
        SpatialWeights(-np.ones((2, 2)) + np.eye(2), scheme="bad")  # negative
    m = np.array([[0.0, 0.7], [1.0, 0.0]])
    with pytest.raises(ValidationError):
        SpatialWeights(m, scheme="bad", row_standardized=True)  # rows != 1
