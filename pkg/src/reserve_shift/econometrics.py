"""Log-log OLS with dummies, Ridge and Lasso, diagnostic tests and trend extrapolation.

Ridge and Lasso work on standardized predictors (sample sd, ddof=1) with a
centred, unscaled response; slopes stay on the standardized scale and the
intercept is the response mean. Lasso minimises the unnormalised objective
``sum((y - Xb)**2) + lam * sum(|b|)``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats


class SingularDesignError(np.linalg.LinAlgError):
    def __init__(self, columns: Sequence[str]):
        super().__init__(f"design matrix is rank deficient; dependent columns: {list(columns)}")
        self.columns = list(columns)


class LassoConvergenceError(RuntimeError):
    def __init__(self, coef: np.ndarray, sweeps: int):
        super().__init__(f"coordinate descent did not converge after {sweeps} sweeps")
        self.coef = coef
        self.sweeps = sweeps


@dataclass
class DesignMatrix:
    values: np.ndarray
    names: list[str]
    intercept: bool = True
    means: Optional[np.ndarray] = None
    sds: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] == 1 and len(self.names) != 1:
            self.values = self.values.T
        if self.values.shape[1] != len(self.names):
            raise ValueError(f"{self.values.shape[1]} columns but {len(self.names)} names")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("design matrix has missing or non-finite cells")

    @classmethod
    def from_columns(cls, columns: dict, intercept: bool = True) -> "DesignMatrix":
        names = list(columns)
        return cls(np.column_stack([np.asarray(columns[k], dtype=float) for k in names]), names,
                   intercept)

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def standardized(self) -> bool:
        return self.sds is not None

    def with_intercept(self) -> tuple[np.ndarray, list[str]]:
        if not self.intercept:
            return self.values, list(self.names)
        return np.column_stack([np.ones(self.n_obs), self.values]), ["const", *self.names]


def standardize(m: DesignMatrix) -> DesignMatrix:
    means = m.values.mean(axis=0)
    sds = m.values.std(axis=0, ddof=1)
    flat = [name for name, sd in zip(m.names, sds) if not sd > 0]
    if flat:
        raise ValueError(f"cannot standardize constant columns: {flat}")
    return DesignMatrix((m.values - means) / sds, list(m.names), m.intercept, means, sds)


@dataclass
class RegressionResult:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    rsquared: float
    rsquared_adj: float
    fvalue: float
    f_pvalue: float
    resid: np.ndarray
    fitted: np.ndarray
    method: str = "ols"
    lam: Optional[float] = None
    df_resid: int = 0
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return float(self.coef[self.index(name)])

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"coefficient {name!r} not in model {self.names}") from None

    @property
    def ssr(self) -> float:
        return float(self.resid @ self.resid)

    def slopes(self) -> np.ndarray:
        return self.coef[1:] if self.names and self.names[0] == "const" else self.coef

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["term", "coef", "se", "t", "p"])
        for row in zip(self.names, self.coef, self.se, self.tvalues, self.pvalues):
            w.writerow([row[0], *(f"{x:.10g}" for x in row[1:])])
        return buf.getvalue()

    def summary(self, title: str = "") -> str:
        label = self.method if self.lam is None else f"{self.method}(lambda={self.lam:g})"
        lines = [title or f"Regression ({label})", "-" * 60,
                 f"{'':<12}{'coef':>12}{'se':>12}{'t':>10}{'p':>10}"]
        for name, b, s, t, p in zip(self.names, self.coef, self.se, self.tvalues, self.pvalues):
            lines.append(f"{name:<12}{b:>12.4f}{s:>12.5f}{t:>10.3f}{p:>10.4f}")
        lines += ["-" * 60, f"N = {len(self.resid)}   R2 = {self.rsquared:.4f}   "
                  f"adj R2 = {self.rsquared_adj:.4f}   F = {self.fvalue:.4g} (p = {self.f_pvalue:.4g})"]
        return "\n".join(lines)


def _rsq(y: np.ndarray, resid: np.ndarray) -> float:
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0:
        return 1.0 if float(resid @ resid) == 0 else 0.0
    return 1.0 - float(resid @ resid) / sst


def _dependent_columns(a: np.ndarray, names: list[str]) -> list[str]:
    bad, rank = [], 0
    for k in range(a.shape[1]):
        r = np.linalg.matrix_rank(a[:, : k + 1])
        if r == rank:
            bad.append(names[k])
        rank = r
    return bad


def ols(y, X: DesignMatrix) -> RegressionResult:
    """Least squares via QR with classical standard errors and the joint slope F test."""
    y = np.asarray(y, dtype=float)
    a, names = X.with_intercept()
    n, p = a.shape
    if y.shape != (n,):
        raise ValueError(f"response has shape {y.shape}, expected ({n},)")
    q, r = np.linalg.qr(a)
    diag = np.abs(np.diag(r))
    if n < p or diag.min() <= max(n, p) * np.finfo(float).eps * diag.max():
        raise SingularDesignError(_dependent_columns(a, names) or names)
    coef = np.linalg.solve(r, q.T @ y)
    fitted = a @ coef
    resid = y - fitted
    df = n - p
    ssr = float(resid @ resid)
    sigma2 = ssr / df if df > 0 else np.nan
    rinv = np.linalg.inv(r)
    se = np.sqrt(sigma2 * (rinv ** 2).sum(axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = coef / se
    pvals = 2 * stats.t.sf(np.abs(tvals), df) if df > 0 else np.full(p, np.nan)
    r2 = _rsq(y, resid)
    k = p - 1 if X.intercept else p
    if df > 0 and k > 0:
        adj = 1 - (1 - r2) * (n - 1) / df if X.intercept else 1 - (1 - r2) * n / df
        with np.errstate(divide="ignore"):
            fval = (r2 / k) / ((1 - r2) / df) if r2 < 1 else np.inf
        fp = float(stats.f.sf(fval, k, df))
    else:
        adj, fval, fp = np.nan, np.nan, np.nan
    return RegressionResult(names, coef, se, tvals, pvals, r2, adj, float(fval), fp, resid,
                            fitted, "ols", None, df)


def _centered_problem(y, X: DesignMatrix):
    z = X if X.standardized else standardize(X)
    y = np.asarray(y, dtype=float)
    return z, y, y.mean(), y - y.mean()


def _penalized_result(method, lam, z: DesignMatrix, y, ybar, slopes, se) -> RegressionResult:
    names = ["const", *z.names]
    coef = np.r_[ybar, slopes]
    fitted = ybar + z.values @ slopes
    resid = y - fitted
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    return RegressionResult(names, coef, se, t, np.full(len(coef), np.nan), _rsq(y, resid),
                            np.nan, np.nan, np.nan, resid, fitted, method, float(lam),
                            len(y) - len(coef), {"means": z.means, "sds": z.sds})


def ridge(y, X: DesignMatrix, lam: float) -> RegressionResult:
    """Closed-form ridge on standardized predictors.

    Standard errors come from ``sigma2 * A^-1 Z'Z A^-1`` with ``A = Z'Z + lam I``.
    """
    if lam < 0:
        raise ValueError(f"ridge penalty must be >= 0, got {lam}")
    z, y, ybar, yc = _centered_problem(y, X)
    zz = z.values.T @ z.values
    a = zz + lam * np.eye(zz.shape[0])
    slopes = np.linalg.solve(a, z.values.T @ yc)
    resid = yc - z.values @ slopes
    df = len(y) - len(slopes) - 1
    sigma2 = float(resid @ resid) / df if df > 0 else np.nan
    ainv = np.linalg.inv(a)
    cov = sigma2 * ainv @ zz @ ainv
    se = np.r_[np.sqrt(sigma2 / len(y)), np.sqrt(np.diag(cov))]
    return _penalized_result("ridge", lam, z, y, ybar, slopes, se)


def soft_threshold(x: float, t: float) -> float:
    return np.sign(x) * max(abs(x) - t, 0.0)


def lasso_objective(y, X: DesignMatrix, slopes) -> float:
    z, y, ybar, yc = _centered_problem(y, X)
    r = yc - z.values @ np.asarray(slopes, dtype=float)
    return float(r @ r)


def lasso_lambda_max(y, X: DesignMatrix) -> float:
    """Smallest penalty at which every slope is exactly zero."""
    z, _, _, yc = _centered_problem(y, X)
    return float(2 * np.max(np.abs(z.values.T @ yc)))


def lasso(y, X: DesignMatrix, lam: float, tol: float = 1e-8, max_sweeps: int = 100_000,
          start: Optional[np.ndarray] = None) -> RegressionResult:
    """Cyclic coordinate descent with soft-thresholding."""
    if lam < 0:
        raise ValueError(f"lasso penalty must be >= 0, got {lam}")
    z, y, ybar, yc = _centered_problem(y, X)
    zv = z.values
    col_ss = (zv ** 2).sum(axis=0)
    b = np.zeros(zv.shape[1]) if start is None else np.array(start, dtype=float)
    sweep = 0
    if lam >= 2 * np.max(np.abs(zv.T @ yc)):
        # the zero vector already satisfies the optimality conditions
        b[:] = 0.0
        max_sweeps = 0
    r = yc - zv @ b
    for sweep in range(1, max_sweeps + 1):
        biggest = 0.0
        for j in range(zv.shape[1]):
            old = b[j]
            rho = zv[:, j] @ r + col_ss[j] * old
            new = soft_threshold(rho, lam / 2.0) / col_ss[j]
            if new != old:
                r -= zv[:, j] * (new - old)
                b[j] = new
                biggest = max(biggest, abs(new - old))
        if biggest < tol:
            break
    else:
        if max_sweeps:
            raise LassoConvergenceError(b, max_sweeps)
    se = np.full(len(b) + 1, np.nan)
    res = _penalized_result("lasso", lam, z, y, ybar, b, se)
    res.extra["sweeps"] = sweep
    res.extra["objective"] = float((yc - zv @ b) @ (yc - zv @ b) + lam * np.abs(b).sum())
    return res


def _fit(method: str, y, X: DesignMatrix, lam: float) -> RegressionResult:
    if method == "ridge":
        return ridge(y, X, lam)
    if method == "lasso":
        return lasso(y, X, lam)
    raise ValueError(f"unknown penalized method {method!r}")


def select_lambda(y, X: DesignMatrix, grid: Sequence[float], method: str = "ridge",
                  folds: int = 5, seed: int = 0) -> float:
    """Penalty minimising k-fold cross-validated squared error (ties: smallest).

    Fold membership is a seeded permutation. Each training fold is standardized
    on its own rows and the held-out rows reuse that scaling.
    """
    lams = sorted({float(v) for v in grid})
    if not lams:
        raise ValueError("empty penalty grid")
    if any(v < 0 for v in lams):
        raise ValueError("penalties must be >= 0")
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < folds:
        raise ValueError(f"{n} observations cannot fill {folds} folds")
    if len(lams) == 1:
        return lams[0]
    fold_of = np.empty(n, dtype=int)
    fold_of[np.random.default_rng(seed).permutation(n)] = np.arange(n) % folds
    errors = np.zeros(len(lams))
    for k in range(folds):
        train, test = fold_of != k, fold_of == k
        xt = DesignMatrix(X.values[train], list(X.names), X.intercept)
        z = standardize(xt)
        z_test = (X.values[test] - z.means) / z.sds
        for i, lam in enumerate(lams):
            fit = _fit(method, y[train], z, lam)
            pred = fit.coef[0] + z_test @ fit.coef[1:]
            errors[i] += float(((y[test] - pred) ** 2).sum())
    return lams[int(np.argmin(errors))]


@dataclass(frozen=True)
class TestResult:
    statistic: float
    pvalue: float
    df: tuple = ()


@dataclass(frozen=True)
class BreuschPaganResult:
    lm: float
    lm_pvalue: float
    fvalue: float
    f_pvalue: float
    df: int


def breusch_pagan(resid, X: DesignMatrix) -> BreuschPaganResult:
    """Regress squared residuals on X; LM = n R2 ~ chi2(k), plus the auxiliary F."""
    e2 = np.asarray(resid, dtype=float) ** 2
    k = X.values.shape[1]
    n = len(e2)
    if np.ptp(e2) == 0:
        return BreuschPaganResult(0.0, 1.0, 0.0, 1.0, k)
    aux = ols(e2, replace(X, intercept=True))
    if aux.df_resid <= 0:
        raise ValueError("auxiliary regression has no residual degrees of freedom")
    lm = n * aux.rsquared
    return BreuschPaganResult(float(lm), float(stats.chi2.sf(lm, k)), aux.fvalue, aux.f_pvalue, k)


def chow_test(y, X: DesignMatrix, group) -> TestResult:
    """Equality of all coefficients across the two groups flagged by ``group``."""
    y = np.asarray(y, dtype=float)
    g = np.asarray(group, dtype=bool)
    a, _ = X.with_intercept()
    n, k = a.shape
    sizes = (int(g.sum()), int((~g).sum()))
    if min(sizes) <= k:
        raise ValueError(f"each group needs more than {k} observations, got {sizes}")

    def ssr(rows):
        return ols(y[rows], DesignMatrix(X.values[rows], list(X.names), X.intercept)).ssr

    pooled, s1, s2 = ssr(slice(None)), ssr(g), ssr(~g)
    df2 = n - 2 * k
    f = ((pooled - s1 - s2) / k) / ((s1 + s2) / df2)
    return TestResult(float(f), float(stats.f.sf(f, k, df2)), (k, df2))


def mars_test(result: RegressionResult, alpha: float = 0.05,
              coefficients: Sequence[str] = ("ln_ms",)) -> bool:
    """True when every named coefficient is positive and one-sided significant.

    Stored p-values are two-sided; the one-sided value for a positive estimate
    is half of it.
    """
    for name in coefficients:
        i = result.index(name)
        b, p = result.coef[i], result.pvalues[i]
        if not b > 0 or not p / 2 < alpha:
            return False
    return True


@dataclass(frozen=True)
class EquilibriumFit:
    slope: float
    intercept: float
    crossing_year: Optional[float]
    last_year: float

    @property
    def years_from_last(self) -> Optional[float]:
        return None if self.crossing_year is None else self.crossing_year - self.last_year


def extrapolate_equilibrium(years, coefs) -> EquilibriumFit:
    """Least-squares line through (year, coefficient) and the year it reaches zero."""
    x = np.asarray(years, dtype=float)
    y = np.asarray(coefs, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("years and coefficients must be equal-length vectors")
    if len(x) < 2:
        raise ValueError("need at least two points to fit a trend")
    if np.any(y > 0):
        raise ValueError("dummy coefficients are expected to be <= 0")
    if np.ptp(x) == 0:
        raise ValueError("years must not all coincide")
    xm, ym = x.mean(), y.mean()
    slope = float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())
    intercept = float(ym - slope * xm)
    crossing = -intercept / slope if slope > 0 else None
    return EquilibriumFit(slope, intercept, crossing, float(x.max()))
