"""Cross-sectional VMT regressions: OLS, fixed effects, and spatial models.

Estimators
----------
- ``fit_ols`` / ``fit_ols_fe``: least squares, optionally absorbing group
  intercepts by within-group demeaning.
- ``fit_slm_ml``: spatial-lag model by maximum likelihood; the spatial
  parameter is found by golden-section search on the concentrated
  log-likelihood, with ln|I - rho*W| evaluated from the (cached) spectrum
  of W.
- ``fit_slm_gs2sls``: spatial lag by generalized two-stage least squares,
  instrumenting the lagged outcome with [X, WX, W^2 X].
- ``fit_sem_ml`` / ``fit_sem_gmm``: spatial error model by maximum
  likelihood and by the Kelejian-Prucha moment conditions followed by
  feasible GLS (spatial Cochrane-Orcutt).
- ``fit_selm_gmm``: combined lag+error (SARAR) model: GS2SLS for the lag,
  the moment conditions on its residuals for the error parameter, then
  re-estimation on spatially filtered variables.

All spatial estimators require a row-standardized weight matrix (so the
stationarity check |rho| < 1 is meaningful) and report a pseudo R-squared:
the squared correlation between the observed outcome and the model's
fitted values (the reduced-form prediction for lag models).  The reported
MSE is in-sample RSS/n of the model's structural residuals.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import sparse

from .errors import EstimationError, ValidationError
from .weights import SpatialWeights

OLS = "ols"
OLS_FE = "ols_fe"
SLM_ML = "slm_ml"
SLM_GS2SLS = "slm_gs2sls"
SEM_ML = "sem_ml"
SEM_GMM = "sem_gmm"
SELM_GMM = "selm_gmm"
ALL_METHODS = (OLS, OLS_FE, SLM_ML, SLM_GS2SLS, SEM_ML, SEM_GMM, SELM_GMM)

# panel columns that must stay inside [0, 1] when present
BOUNDED_COLUMNS = ("w_carpool", "w_pubtrans", "w_bike", "w_home", "accessindex")

_PARAM_BOUND = 0.99
_GRID_POINTS = 39  # -0.95 .. 0.95 step 0.05
_GOLDEN_TOL = 1e-8
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def parse_formula(formula: str) -> tuple[str, list[str]]:
    """Parse ``outcome ~ col + col + a:b`` into (outcome, term list)."""
    if "~" not in formula:
        raise ValidationError(f"formula {formula!r} must contain '~'")
    left, right = formula.split("~", 1)
    outcome = left.strip()
    terms = [t.strip() for t in right.split("+")]
    terms = [t for t in terms if t]
    if not outcome:
        raise ValidationError(f"formula {formula!r} has no outcome")
    if not terms:
        raise ValidationError(f"formula {formula!r} has no covariates")
    dupes = sorted({t for t in terms if terms.count(t) > 1})
    if dupes:
        raise ValidationError(f"formula repeats terms {dupes}")
    return outcome, terms


@dataclass
class TractPanel:
    """Regression-ready tract panel: outcome, design matrix, row metadata."""

    y: np.ndarray
    X: np.ndarray
    names: list[str]
    outcome: str
    group: np.ndarray | None = None
    tract_ids: list[str] | None = None
    n_dropped: int = 0
    token: str = ""

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ValidationError("panel design matrix and outcome sizes disagree")
        if len(self.names) != self.X.shape[1]:
            raise ValidationError("panel column names do not match the design matrix")
        if not self.token:
            h = hashlib.md5()
            h.update(self.y.tobytes())
            h.update(self.X.tobytes())
            h.update(",".join(self.names).encode())
            self.token = h.hexdigest()

    @property
    def n(self) -> int:
        return self.y.size

    @classmethod
    def from_dataframe(cls, df: pd.DataFrame, formula: str, group_col: str | None = None) -> "TractPanel":
        """Build a panel from a dataframe and a formula.

        Interaction terms ``a:b`` multiply two existing columns.  Rows with
        missing values in any used column are dropped and counted.  Known
        share/index columns are validated to lie in [0, 1].
        """
        outcome, terms = parse_formula(formula)
        base_cols = {outcome}
        for t in terms:
            base_cols.update(t.split(":"))
        missing = sorted(c for c in base_cols if c not in df.columns)
        if missing:
            raise ValidationError(f"panel is missing columns {missing}")
        if group_col is not None and group_col not in df.columns:
            raise ValidationError(f"panel is missing the group column {group_col!r}")

        used = sorted(base_cols) + ([group_col] if group_col else [])
        sub = df[used]
        keep = ~sub.isna().any(axis=1)
        dropped = int((~keep).sum())
        sub = sub[keep]

        for col in BOUNDED_COLUMNS:
            if col in base_cols:
                vals = sub[col].to_numpy(dtype=float)
                if vals.size and (vals.min() < 0 or vals.max() > 1):
                    raise ValidationError(f"column {col!r} must lie in [0, 1]")

        n = len(sub)
        cols = [np.ones(n)]
        names = ["const"]
        for t in terms:
            parts = t.split(":")
            col = np.ones(n)
            for p in parts:
                col = col * sub[p].to_numpy(dtype=float)
            cols.append(col)
            names.append(t)
        tract_ids = sub["tract_id"].astype(str).tolist() if "tract_id" in sub.columns else None
        return cls(
            y=sub[outcome].to_numpy(dtype=float),
            X=np.column_stack(cols),
            names=names,
            outcome=outcome,
            group=sub[group_col].to_numpy() if group_col else None,
            tract_ids=tract_ids,
            n_dropped=dropped,
        )


def add_log_square(df: pd.DataFrame, column: str, log_name: str | None = None,
                   sq_name: str | None = None) -> pd.DataFrame:
    """Materialize log(column) and its square; the square is of the log."""
    log_name = log_name or f"log_{column}"
    sq_name = sq_name or f"{log_name}_sq"
    vals = df[column].to_numpy(dtype=float)
    if np.any(vals <= 0):
        raise ValidationError(f"column {column!r} must be positive to take logs")
    df = df.copy()
    df[log_name] = np.log(vals)
    df[sq_name] = df[log_name] ** 2
    return df


@dataclass
class ModelFit:
    """Estimator output: coefficients, spatial parameters, fit metrics."""

    method: str
    coef_names: list[str]
    coefficients: np.ndarray
    std_errors: np.ndarray
    sigma2: float
    mse: float
    n: int
    k_params: int
    panel_token: str
    r2_adj: float | None = None
    pseudo_r2: float | None = None
    loglik: float | None = None
    gamma: float | None = None
    gamma_se: float | None = None
    lambda_: float | None = None
    lambda_se: float | None = None
    group_effects: dict | None = None
    notes: list[str] = field(default_factory=list)

    def coef(self, name: str) -> float:
        try:
            return float(self.coefficients[self.coef_names.index(name)])
        except ValueError:
            raise ValidationError(f"fit {self.method!r} has no coefficient {name!r}") from None

    @property
    def r2(self) -> float:
        return self.r2_adj if self.r2_adj is not None else self.pseudo_r2

    @property
    def r2_kind(self) -> str:
        return "adjusted" if self.r2_adj is not None else "pseudo"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "coefficients": dict(zip(self.coef_names, map(float, self.coefficients))),
            "std_errors": dict(zip(self.coef_names, map(float, self.std_errors))),
            "sigma2": float(self.sigma2),
            "mse": float(self.mse),
            "mse_kind": "in-sample RSS/n",
            "r2_adj": None if self.r2_adj is None else float(self.r2_adj),
            "pseudo_r2": None if self.pseudo_r2 is None else float(self.pseudo_r2),
            "loglik": None if self.loglik is None else float(self.loglik),
            "gamma": None if self.gamma is None else float(self.gamma),
            "gamma_se": None if self.gamma_se is None else float(self.gamma_se),
            "lambda": None if self.lambda_ is None else float(self.lambda_),
            "lambda_se": None if self.lambda_se is None else float(self.lambda_se),
            "n": self.n,
            "k_params": self.k_params,
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# shared numerics


def _rank_check(X: np.ndarray, names: list[str], what: str = "design matrix") -> None:
    _, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.max() == 0:
        raise ValidationError(f"{what} is identically zero")
    bad = [names[i] for i in np.nonzero(diag <= diag.max() * 1e-10)[0]]
    if bad:
        raise ValidationError(f"{what} is rank deficient; near-collinear columns: {bad}")


def _ols_beta(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta


def _pearson_r2(y: np.ndarray, fitted: np.ndarray) -> float:
    ya = y - y.mean()
    fa = fitted - fitted.mean()
    denom = math.sqrt(float(ya @ ya) * float(fa @ fa))
    if denom == 0:
        return 0.0
    return float((ya @ fa) / denom) ** 2


def _golden_section(f, a: float, b: float, tol: float) -> float:
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _concentrated_optimum(f, label: str, lo: float = -_PARAM_BOUND, hi: float = _PARAM_BOUND) -> float:
    """Grid-seeded golden-section minimizer with an interior-optimum check."""
    grid = np.linspace(-0.95, 0.95, _GRID_POINTS)
    vals = [f(g) for g in grid]
    i = int(np.argmin(vals))
    if i == 0:
        a, b = lo, grid[1]
    elif i == len(grid) - 1:
        a, b = grid[-2], hi
    else:
        a, b = grid[i - 1], grid[i + 1]
    x = _golden_section(f, a, b, _GOLDEN_TOL)
    if min(x - lo, hi - x) < 1e-3:
        trace = "\n".join(f"  {g:+.3f} -> {v:.6f}" for g, v in zip(grid, vals))
        raise EstimationError(
            f"no interior optimum for {label} in ({lo}, {hi}); objective trace:\n{trace}"
        )
    return float(x)


class LogDet:
    """Evaluator for ln|I - rho*W|.

    Small problems use the spectrum of W, computed once and reused across
    every rho; larger ones fall back to a sparse LU factorization per rho.
    """

    def __init__(self, w: SpatialWeights, dense_threshold: int = 2000):
        self._n = w.n
        if w.n <= dense_threshold:
            self._evals = w.eigenvalues()
            self._csc = None
        else:
            self._evals = None
            self._csc = w.sparse.tocsc()
            self._eye = sparse.identity(w.n, format="csc")

    def __call__(self, rho: float) -> float:
        if self._evals is not None:
            mods = np.abs(1.0 - rho * self._evals)
            if np.any(mods == 0):
                return -math.inf
            return float(np.log(mods).sum())
        lu = sparse.linalg.splu(self._eye - rho * self._csc)
        return float(np.log(np.abs(lu.U.diagonal())).sum())


def _check_spatial_inputs(panel: TractPanel, w: SpatialWeights) -> None:
    if w.n != panel.n:
        raise ValidationError(f"weights size {w.n} != panel size {panel.n}")
    if not w.row_standardized:
        raise ValidationError("spatial estimators require row-standardized weights")


def _check_stationary(value: float, label: str) -> None:
    if not abs(value) < 1.0:
        raise EstimationError(f"estimated {label} = {value:.4f} lies outside (-1, 1)")


# ---------------------------------------------------------------------------
# OLS family


def fit_ols(panel: TractPanel) -> ModelFit:
    """Ordinary least squares with classical standard errors.

    MSE is RSS/n; the adjusted R-squared uses the usual
    1 - (1 - R2)(n - 1)/(n - k - 1) correction.
    """
    X, y = panel.X, panel.y
    n, k = X.shape
    if n <= k:
        raise ValidationError(f"need n > k, got n={n}, k={k}")
    _rank_check(X, panel.names)
    beta = _ols_beta(X, y)
    u = y - X @ beta
    rss = float(u @ u)
    tss = float(((y - y.mean()) ** 2).sum())
    sig2_ml = rss / n
    sig2_dof = rss / (n - k)
    xtxi = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(sig2_dof * xtxi))
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    r2_adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k)
    loglik = -0.5 * n * (math.log(2.0 * math.pi) + math.log(sig2_ml) + 1.0)
    return ModelFit(
        method=OLS,
        coef_names=list(panel.names),
        coefficients=beta,
        std_errors=se,
        sigma2=sig2_ml,
        mse=rss / n,
        r2_adj=r2_adj,
        loglik=loglik,
        n=n,
        k_params=k,
        panel_token=panel.token,
    )


def fit_ols_fe(panel: TractPanel) -> ModelFit:
    """OLS with group fixed effects absorbed by within-group demeaning.

    Covariates that are constant within every group demean to zero and are
    dropped with a note.  Group intercepts are recovered from the group
    means and reported in ``group_effects``.
    """
    if panel.group is None:
        raise ValidationError("panel has no group column for fixed effects")
    X, y = panel.X, panel.y
    n = panel.n
    groups = pd.Series(panel.group)
    labels = groups.unique()
    if len(labels) < 2:
        raise ValidationError("fixed effects need at least two groups")
    counts = groups.value_counts()
    small = sorted(str(g) for g in counts[counts < 2].index)
    if small:
        raise ValidationError(f"fixed-effects groups with fewer than 2 rows: {small}")

    nonconst = [i for i, name in enumerate(panel.names) if name != "const"]
    names_nc = [panel.names[i] for i in nonconst]
    Xnc = X[:, nonconst]

    codes = groups.astype("category").cat.codes.to_numpy()
    g_count = codes.max() + 1
    sums_y = np.bincount(codes, weights=y, minlength=g_count)
    cnt = np.bincount(codes, minlength=g_count)
    mean_y = sums_y / cnt
    y_dm = y - mean_y[codes]
    mean_x = np.vstack([
        np.bincount(codes, weights=Xnc[:, j], minlength=g_count) / cnt
        for j in range(Xnc.shape[1])
    ]).T
    X_dm = Xnc - mean_x[codes]

    scale = np.abs(Xnc).max(axis=0)
    scale[scale == 0] = 1.0
    keep = np.abs(X_dm).max(axis=0) > 1e-10 * scale
    notes = []
    if not keep.all():
        dropped = [names_nc[j] for j in np.nonzero(~keep)[0]]
        notes.append(f"dropped group-constant columns: {dropped}")
    X_dm = X_dm[:, keep]
    kept_names = [nm for nm, kp in zip(names_nc, keep) if kp]
    if X_dm.shape[1] == 0:
        raise ValidationError("all covariates are group-constant; nothing to estimate")
    _rank_check(X_dm, kept_names, "demeaned design matrix")

    k_x = X_dm.shape[1]
    g = len(labels)
    dof = n - k_x - g
    if dof <= 0:
        raise ValidationError(f"too few observations for FE: n={n}, k={k_x}, groups={g}")
    beta = _ols_beta(X_dm, y_dm)
    u = y_dm - X_dm @ beta
    rss = float(u @ u)
    tss = float(((y - y.mean()) ** 2).sum())
    sig2_dof = rss / dof
    se = np.sqrt(np.diag(sig2_dof * np.linalg.inv(X_dm.T @ X_dm)))
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    r2_adj = 1.0 - (1.0 - r2) * (n - 1) / dof

    alpha = mean_y - mean_x[:, keep] @ beta
    cats = groups.astype("category").cat.categories
    effects = {str(cats[c]): float(alpha[c]) for c in range(g_count)}

    return ModelFit(
        method=OLS_FE,
        coef_names=kept_names,
        coefficients=beta,
        std_errors=se,
        sigma2=rss / n,
        mse=rss / n,
        r2_adj=r2_adj,
        n=n,
        k_params=k_x + g,
        panel_token=panel.token,
        group_effects=effects,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# spatial lag


def fit_slm_ml(panel: TractPanel, w: SpatialWeights, rho: float | None = None) -> ModelFit:
    """Spatial lag model by maximum likelihood.

    The lag parameter maximizes the concentrated log-likelihood; standard
    errors come from the asymptotic information matrix.  ``rho`` pins the
    lag parameter instead of estimating it (the pinned fit at 0 reproduces
    OLS coefficients exactly).
    """
    _check_spatial_inputs(panel, w)
    X, y = panel.X, panel.y
    n, k = X.shape
    _rank_check(X, panel.names)
    Wy = w.lag(y)
    b0 = _ols_beta(X, y)
    b1 = _ols_beta(X, Wy)
    e0 = y - X @ b0
    e1 = Wy - X @ b1
    ld = LogDet(w)

    def neg_cll(r: float) -> float:
        er = e0 - r * e1
        s2 = float(er @ er) / n
        return 0.5 * n * math.log(s2) - ld(r)

    rho_hat = rho if rho is not None else _concentrated_optimum(neg_cll, "gamma")
    _check_stationary(rho_hat, "gamma")
    beta = b0 - rho_hat * b1
    u = e0 - rho_hat * e1
    sig2 = float(u @ u) / n
    loglik = -neg_cll(rho_hat) - 0.5 * n * math.log(2.0 * math.pi) - 0.5 * n

    Wd = w.full()
    A_inv = np.linalg.inv(np.eye(n) - rho_hat * Wd)
    predy_e = A_inv @ (X @ beta)

    wai = Wd @ A_inv
    tr1 = float(np.trace(wai))
    tr2 = float((wai * wai.T).sum())
    tr3 = float((wai * wai).sum())
    wpredy = Wd @ predy_e
    v = np.zeros((k + 2, k + 2))
    v[:k, :k] = X.T @ X / sig2
    v[:k, k] = v[k, :k] = X.T @ wpredy / sig2
    v[k, k] = tr2 + tr3 + float(wpredy @ wpredy) / sig2
    v[k, k + 1] = v[k + 1, k] = tr1 / sig2
    v[k + 1, k + 1] = n / (2.0 * sig2 * sig2)
    vm = np.linalg.inv(v)
    diag = np.diag(vm)
    if np.any(diag[: k + 1] < 0):
        raise EstimationError("spatial lag information matrix is not positive definite")
    se = np.sqrt(diag[:k])
    gamma_se = float(math.sqrt(diag[k]))

    return ModelFit(
        method=SLM_ML,
        coef_names=list(panel.names),
        coefficients=beta,
        std_errors=se,
        sigma2=sig2,
        mse=float(u @ u) / n,
        pseudo_r2=_pearson_r2(y, predy_e),
        loglik=loglik,
        gamma=float(rho_hat),
        gamma_se=gamma_se,
        n=n,
        k_params=k + 1,
        panel_token=panel.token,
    )


def _instruments(X: np.ndarray, names: list[str], w: SpatialWeights) -> np.ndarray:
    nonconst = [i for i, nm in enumerate(names) if nm != "const"]
    Xnc = X[:, nonconst]
    WX = w.lag(Xnc)
    WWX = w.lag(WX)
    H = np.column_stack([X, WX, WWX])
    h_names = (
        names
        + [f"W:{names[i]}" for i in nonconst]
        + [f"W2:{names[i]}" for i in nonconst]
    )
    try:
        _rank_check(H, h_names, "instrument matrix")
    except ValidationError as exc:
        raise ValidationError(f"instrument matrix rank-deficient: {exc}") from None
    return H


def _tsls(y: np.ndarray, Z: np.ndarray, H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two-stage least squares; returns (theta, Z_hat)."""
    hth = H.T @ H
    Z_hat = H @ np.linalg.solve(hth, H.T @ Z)
    theta = np.linalg.solve(Z_hat.T @ Z, Z_hat.T @ y)
    return theta, Z_hat


def fit_slm_gs2sls(panel: TractPanel, w: SpatialWeights, rho: float | None = None) -> ModelFit:
    """Spatial lag model by generalized spatial two-stage least squares.

    Treats the spatially lagged outcome as endogenous with instruments
    [X, WX, W^2 X].
    """
    _check_spatial_inputs(panel, w)
    X, y = panel.X, panel.y
    n, k = X.shape
    _rank_check(X, panel.names)
    Wy = w.lag(y)

    if rho is not None:
        beta = _ols_beta(X, y - rho * Wy)
        u = y - rho * Wy - X @ beta
        sig2 = float(u @ u) / n
        se = np.sqrt(np.diag(sig2 * np.linalg.inv(X.T @ X)))
        gamma_hat, gamma_se = float(rho), None
        coef, coef_se = beta, se
    else:
        H = _instruments(X, panel.names, w)
        Z = np.column_stack([X, Wy])
        theta, Z_hat = _tsls(y, Z, H)
        u = y - Z @ theta
        sig2 = float(u @ u) / n
        vm = sig2 * np.linalg.inv(Z_hat.T @ Z_hat)
        se_all = np.sqrt(np.diag(vm))
        gamma_hat = float(theta[-1])
        gamma_se = float(se_all[-1])
        coef, coef_se = theta[:-1], se_all[:-1]
    _check_stationary(gamma_hat, "gamma")

    A = sparse.identity(n, format="csc") - gamma_hat * w.sparse.tocsc()
    predy_e = sparse.linalg.spsolve(A, X @ coef)

    return ModelFit(
        method=SLM_GS2SLS,
        coef_names=list(panel.names),
        coefficients=coef,
        std_errors=coef_se,
        sigma2=sig2,
        mse=float(u @ u) / n,
        pseudo_r2=_pearson_r2(y, predy_e),
        gamma=gamma_hat,
        gamma_se=gamma_se,
        n=n,
        k_params=k + 1,
        panel_token=panel.token,
    )


# ---------------------------------------------------------------------------
# spatial error


def _kp_lambda(u: np.ndarray, w: SpatialWeights) -> float:
    """Error-autocorrelation parameter from the Kelejian-Prucha moments.

    Builds the three moment equations in (lambda, lambda^2, sigma^2) from
    the residual vector, profiles sigma^2 out, and minimizes the remaining
    sum of squared moment residuals over lambda by grid-seeded golden
    section.
    """
    n = u.size
    Wm = w.sparse
    wu = Wm @ u
    wwu = Wm @ wu
    uu = float(u @ u)
    uwu = float(u @ wu)
    wuwu = float(wu @ wu)
    wuwwu = float(wu @ wwu)
    wwuwwu = float(wwu @ wwu)
    uwwu = float(u @ wwu)
    tr_wtw = float(Wm.multiply(Wm).sum())
    g = np.array([uu, wuwu, uwu]) / n
    G = np.array(
        [
            [2.0 * uwu, -wuwu, float(n)],
            [2.0 * wuwwu, -wwuwwu, tr_wtw],
            [uwwu + wuwu, -wuwwu, 0.0],
        ]
    ) / n
    # normalize for conditioning and exact scale-invariance of the argmin
    scale = g[0] if g[0] > 0 else 1.0
    g = g / scale
    G = G / scale
    g3 = G[:, 2]
    g3g3 = float(g3 @ g3)

    def moment_obj(lam: float) -> float:
        base = g - G[:, 0] * lam - G[:, 1] * lam * lam
        s2 = max(float(g3 @ base) / g3g3, 0.0)
        r = base - g3 * s2
        return float(r @ r)

    try:
        return _concentrated_optimum(moment_obj, "lambda")
    except EstimationError as exc:
        raise EstimationError(f"moment system has no root in (-1, 1): {exc}") from None


def _sem_core(panel: TractPanel, w: SpatialWeights, lam_hat: float) -> dict:
    """Spatially filtered GLS step shared by both error-model variants."""
    X, y = panel.X, panel.y
    n = panel.n
    Wy = w.lag(y)
    WX = w.lag(X)
    ys = y - lam_hat * Wy
    Xs = X - lam_hat * WX
    beta = _ols_beta(Xs, ys)
    e = ys - Xs @ beta
    sig2 = float(e @ e) / n
    se = np.sqrt(np.diag(sig2 * np.linalg.inv(Xs.T @ Xs)))
    predy = X @ beta
    u = y - predy
    return {
        "beta": beta,
        "se": se,
        "sig2": sig2,
        "u": u,
        "predy": predy,
        "mse": float(u @ u) / n,
        "pseudo_r2": _pearson_r2(y, predy),
    }


def fit_sem_ml(panel: TractPanel, w: SpatialWeights, lam: float | None = None) -> ModelFit:
    """Spatial error model by maximum likelihood.

    Concentrates the likelihood over lambda (GLS betas at each candidate),
    then reports information-matrix standard errors for lambda.
    """
    _check_spatial_inputs(panel, w)
    X, y = panel.X, panel.y
    n, k = X.shape
    _rank_check(X, panel.names)
    Wy = w.lag(y)
    WX = w.lag(X)
    ld = LogDet(w)

    def neg_cll(lv: float) -> float:
        ys = y - lv * Wy
        Xs = X - lv * WX
        b = _ols_beta(Xs, ys)
        e = ys - Xs @ b
        s2 = float(e @ e) / n
        return 0.5 * n * math.log(s2) - ld(lv)

    lam_hat = lam if lam is not None else _concentrated_optimum(neg_cll, "lambda")
    _check_stationary(lam_hat, "lambda")
    core = _sem_core(panel, w, lam_hat)
    sig2 = core["sig2"]
    loglik = -neg_cll(lam_hat) - 0.5 * n * math.log(2.0 * math.pi) - 0.5 * n

    Wd = w.full()
    wai = Wd @ np.linalg.inv(np.eye(n) - lam_hat * Wd)
    tr1 = float(np.trace(wai))
    tr2 = float((wai * wai.T).sum())
    tr3 = float((wai * wai).sum())
    v = np.array(
        [
            [tr2 + tr3, tr1 / sig2],
            [tr1 / sig2, n / (2.0 * sig2 * sig2)],
        ]
    )
    vm = np.linalg.inv(v)
    if vm[0, 0] < 0:
        raise EstimationError("spatial error information matrix is not positive definite")
    lam_se = float(math.sqrt(vm[0, 0]))

    return ModelFit(
        method=SEM_ML,
        coef_names=list(panel.names),
        coefficients=core["beta"],
        std_errors=core["se"],
        sigma2=sig2,
        mse=core["mse"],
        pseudo_r2=core["pseudo_r2"],
        loglik=loglik,
        lambda_=float(lam_hat),
        lambda_se=lam_se,
        n=n,
        k_params=k + 1,
        panel_token=panel.token,
    )


def fit_sem_gmm(panel: TractPanel, w: SpatialWeights, lam: float | None = None) -> ModelFit:
    """Spatial error model by moments + feasible GLS.

    OLS residuals feed the Kelejian-Prucha moment conditions for lambda;
    the betas then come from the spatial Cochrane-Orcutt regression of
    (y - lam*Wy) on (X - lam*WX).  The moment-based lambda is a point
    estimate without a standard error.
    """
    _check_spatial_inputs(panel, w)
    X, y = panel.X, panel.y
    n, k = X.shape
    _rank_check(X, panel.names)
    if lam is None:
        u0 = y - X @ _ols_beta(X, y)
        lam_hat = _kp_lambda(u0, w)
    else:
        lam_hat = lam
    _check_stationary(lam_hat, "lambda")
    core = _sem_core(panel, w, lam_hat)
    return ModelFit(
        method=SEM_GMM,
        coef_names=list(panel.names),
        coefficients=core["beta"],
        std_errors=core["se"],
        sigma2=core["sig2"],
        mse=core["mse"],
        pseudo_r2=core["pseudo_r2"],
        lambda_=float(lam_hat),
        n=n,
        k_params=k + 1,
        panel_token=panel.token,
    )


def fit_selm_gmm(panel: TractPanel, w: SpatialWeights, rho: float | None = None,
                 lam: float | None = None) -> ModelFit:
    """Combined spatial lag + error (SARAR) model by GS2SLS and moments.

    Stage 1 estimates the lag by GS2SLS; stage 2 runs the Kelejian-Prucha
    moments on its residuals for lambda; stage 3 re-estimates lag and betas
    by 2SLS on the spatially filtered outcome and regressors.
    """
    _check_spatial_inputs(panel, w)
    X, y = panel.X, panel.y
    n, k = X.shape
    _rank_check(X, panel.names)
    Wy = w.lag(y)

    if rho is not None:
        # lag pinned: reduce to an error model on the lag-adjusted outcome
        y_adj = y - rho * Wy
        if lam is None:
            u0 = y_adj - X @ _ols_beta(X, y_adj)
            lam_hat = _kp_lambda(u0, w)
        else:
            lam_hat = lam
        _check_stationary(lam_hat, "lambda")
        Wya = w.lag(y_adj)
        ys = y_adj - lam_hat * Wya
        Xs = X - lam_hat * w.lag(X)
        beta = _ols_beta(Xs, ys)
        e = ys - Xs @ beta
        sig2 = float(e @ e) / n
        se = np.sqrt(np.diag(sig2 * np.linalg.inv(Xs.T @ Xs)))
        gamma_hat, gamma_se = float(rho), None
        coef, coef_se = beta, se
        u = y - rho * Wy - X @ beta
    else:
        H = _instruments(X, panel.names, w)
        Z = np.column_stack([X, Wy])
        theta1, _ = _tsls(y, Z, H)
        u1 = y - Z @ theta1
        lam_hat = lam if lam is not None else _kp_lambda(u1, w)
        _check_stationary(lam_hat, "lambda")
        WZ = w.lag(Z)
        ys = y - lam_hat * Wy
        Zs = Z - lam_hat * WZ
        hth = H.T @ H
        Zs_hat = H @ np.linalg.solve(hth, H.T @ Zs)
        theta = np.linalg.solve(Zs_hat.T @ Zs, Zs_hat.T @ ys)
        e = ys - Zs @ theta
        sig2 = float(e @ e) / n
        vm = sig2 * np.linalg.inv(Zs_hat.T @ Zs_hat)
        se_all = np.sqrt(np.diag(vm))
        gamma_hat = float(theta[-1])
        gamma_se = float(se_all[-1])
        coef, coef_se = theta[:-1], se_all[:-1]
        u = y - Z @ theta
    _check_stationary(gamma_hat, "gamma")

    A = sparse.identity(n, format="csc") - gamma_hat * w.sparse.tocsc()
    predy_e = sparse.linalg.spsolve(A, X @ coef)

    return ModelFit(
        method=SELM_GMM,
        coef_names=list(panel.names),
        coefficients=coef,
        std_errors=coef_se,
        sigma2=sig2,
        mse=float(u @ u) / n,
        pseudo_r2=_pearson_r2(y, predy_e),
        gamma=gamma_hat,
        gamma_se=gamma_se,
        lambda_=float(lam_hat),
        n=n,
        k_params=k + 2,
        panel_token=panel.token,
    )


# ---------------------------------------------------------------------------
# comparison and reporting


def compare_models(fits: list[ModelFit]) -> pd.DataFrame:
    """Rank fits by MSE ascending, ties broken by R-squared descending."""
    if len(fits) < 2:
        raise ValidationError("compare_models needs at least two fits")
    tokens = {f.panel_token for f in fits}
    if len(tokens) > 1:
        raise ValidationError("fits were estimated on different panels")
    rows = [
        {"method": f.method, "mse": f.mse, "r2": f.r2, "r2_kind": f.r2_kind}
        for f in fits
    ]
    df = pd.DataFrame(rows)
    return df.sort_values(["mse", "r2"], ascending=[True, False], kind="mergesort").reset_index(drop=True)


def _stars(z: float) -> str:
    az = abs(z)
    if az >= 2.5758293035489004:
        return "***"
    if az >= 1.959963984540054:
        return "**"
    if az >= 1.6448536269514722:
        return "*"
    return ""


def format_fit_table(fits: list[ModelFit]) -> str:
    """Human-readable coefficient table: estimate, stars, (SE) per model."""
    rows: list[str] = []
    for f in fits:
        for nm in f.coef_names:
            if nm not in rows:
                rows.append(nm)

    def cell(fit: ModelFit, name: str) -> str:
        if name not in fit.coef_names:
            return ""
        i = fit.coef_names.index(name)
        b = fit.coefficients[i]
        s = fit.std_errors[i]
        star = _stars(b / s) if s > 0 else ""
        return f"{b:.3f}{star} ({s:.3f})"

    header = ["variable"] + [f.method for f in fits]
    table = [header]
    for nm in rows:
        table.append([nm] + [cell(f, nm) for f in fits])
    glag = ["spatial lag (gamma)"]
    glam = ["lambda"]
    for f in fits:
        if f.gamma is not None:
            star = _stars(f.gamma / f.gamma_se) if f.gamma_se else ""
            glag.append(f"{f.gamma:.3f}{star}" + (f" ({f.gamma_se:.3f})" if f.gamma_se else ""))
        else:
            glag.append("")
        if f.lambda_ is not None:
            star = _stars(f.lambda_ / f.lambda_se) if f.lambda_se else ""
            glam.append(f"{f.lambda_:.3f}{star}" + (f" ({f.lambda_se:.3f})" if f.lambda_se else ""))
        else:
            glam.append("")
    table.append(glag)
    table.append(glam)
    table.append(["n"] + [str(f.n) for f in fits])
    table.append(["R2 (adj/pseudo)"] + [f"{f.r2:.3f}" for f in fits])
    table.append(["MSE (RSS/n)"] + [f"{f.mse:.4f}" for f in fits])

    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = []
    for r in table:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    lines.insert(1, "-" * len(lines[0]))
    lines.append("stars: * p<0.10, ** p<0.05, *** p<0.01 (normal approximation)")
    return "\n".join(lines) + "\n"
