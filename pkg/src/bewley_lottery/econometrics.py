"""
Ordinary least squares with classical standard errors and the three panel
regressions of occupation, consumption and investment on prize and wealth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


class RegressionError(ValueError):
    pass


@dataclass(frozen=True)
class RegressionSpec:
    name: str
    dependent: str
    regressors: tuple = ("psi", "a_lag")
    include_intercept: bool = False
    entrepreneurs_only: bool = False

    def __post_init__(self):
        if not self.regressors:
            raise RegressionError("a regression needs at least one regressor")


@dataclass
class RegressionResult:
    names: tuple
    coef: np.ndarray
    se: np.ndarray
    tstat: np.ndarray
    pvalue: np.ndarray
    nobs: int
    r2: float
    centered: bool

    def __getitem__(self, name):
        i = self.names.index(name)
        return self.coef[i], self.se[i], self.pvalue[i]

    def stars(self, name):
        return significance_stars(self[name][2])


def significance_stars(p):
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def ols(y, X, names=None, intercept_included=False):
    """Least squares via a QR factorisation.

    Parameters
    ----------
    y : ndarray, shape (n,)
    X : ndarray, shape (n, k)
    names : sequence of str, optional
    intercept_included : bool
        Whether ``X`` carries a constant column. R² is centred when it does
        and measured about zero otherwise.

    Returns
    -------
    RegressionResult
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(k))
    if y.shape != (n,):
        raise RegressionError(f"y has shape {y.shape}, expected ({n},)")
    if n <= k:
        raise RegressionError(f"need more observations ({n}) than regressors ({k})")
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    scale = np.linalg.norm(X, axis=0)
    bad = [names[i] for i in range(k) if scale[i] == 0 or diag[i] <= 1e-10 * scale[i]]
    if bad:
        raise RegressionError(f"design matrix is rank deficient in columns {bad}")
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    s2 = rss / (n - k)
    Rinv = np.linalg.solve(R, np.eye(k))
    cov = s2 * (Rinv @ Rinv.T)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.copysign(np.inf, beta))
    p = 2.0 * stats.norm.sf(np.abs(t))
    tss = float(((y - y.mean()) ** 2).sum()) if intercept_included else float(y @ y)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return RegressionResult(names=names, coef=beta, se=se, tstat=t, pvalue=p,
                            nobs=n, r2=r2, centered=intercept_included)


PAPER_REGRESSIONS = (
    RegressionSpec("Entrepreneur", "occupation"),
    RegressionSpec("Consumption", "c"),
    RegressionSpec("Investment", "k", entrepreneurs_only=True),
)


def run_regression(df, spec):
    missing = [c for c in (spec.dependent, *spec.regressors) if c not in df.columns]
    if spec.entrepreneurs_only and "occupation" not in df.columns:
        missing.append("occupation")
    if missing:
        raise RegressionError(f"panel is missing columns {missing}")
    if spec.entrepreneurs_only:
        df = df[df["occupation"] == 1]
    if len(df) == 0:
        raise RegressionError(f"no observations for regression {spec.name!r}")
    X = df[list(spec.regressors)].to_numpy(dtype=float)
    names = list(spec.regressors)
    if spec.include_intercept:
        X = np.column_stack([X, np.ones(len(df))])
        names.append("const")
    return ols(df[spec.dependent].to_numpy(dtype=float), X, names, spec.include_intercept)


def run_paper_regressions(panel, include_intercept=False, period=None):
    """Occupation, consumption and investment on prize and lagged wealth.

    Uses the last simulated period; ``a_lag`` is the wealth carried into it.
    Ability is left out on purpose since it is not observable in data.
    """
    df = panel.records if hasattr(panel, "records") else panel
    if len(df) == 0:
        raise RegressionError("panel is empty")
    if "t" in df.columns:
        t = period if period is not None else int(df["t"].max())
        df = df[df["t"] == t]
    out = {}
    for spec in PAPER_REGRESSIONS:
        if include_intercept:
            spec = RegressionSpec(spec.name, spec.dependent, spec.regressors, True,
                                  spec.entrepreneurs_only)
        out[spec.name] = run_regression(df, spec)
    return out
