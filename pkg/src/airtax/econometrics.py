"""Log-log demand regression with optional route fixed effects.

log(pax) = b0 + b1 log(density) + b2 log(income) + b3 log(fare)
           + dummies (codeshare, apagao, crisis, low-cost)
           + log(fare) x {share_other_mode, share_business, low-cost}

The fare coefficient and its three interactions combine into a
route-specific price elasticity (see :func:`effective_elasticity`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular

from .errors import NumericalError, RankDeficiencyError, ValidationError

REGRESSORS = (
    "intercept",
    "log_pop_density",
    "log_income",
    "log_fare",
    "d_codeshare",
    "d_apagao",
    "d_crisis",
    "d_lowcost",
    "log_fare_x_share_other_mode",
    "log_fare_x_share_business",
    "log_fare_x_d_lowcost",
)

# Expected direction of each effect on demand; 0 marks "not significant".
EXPECTED_SIGNS = {
    "log_pop_density": 1,
    "log_income": 1,
    "log_fare": -1,
    "d_codeshare": -1,
    "d_apagao": -1,
    "d_crisis": 0,
    "d_lowcost": 1,
    "log_fare_x_share_other_mode": -1,
    "log_fare_x_share_business": 1,
    "log_fare_x_d_lowcost": -1,
}

RANK_TOL = 1e-10


@dataclass(frozen=True)
class ModelSpec:
    use_route_fixed_effects: bool = True
    robust_se: bool = True

    @property
    def regressors(self) -> tuple[str, ...]:
        """Estimated columns; the intercept is absorbed under fixed effects."""
        return REGRESSORS[1:] if self.use_route_fixed_effects else REGRESSORS


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    response: np.ndarray
    columns: np.ndarray
    names: tuple[str, ...]
    route_ids: np.ndarray
    periods: np.ndarray
    # number of group means removed by the within transformation
    absorbed: int = 0
    spec: ModelSpec | None = None

    def __post_init__(self):
        if self.columns.ndim != 2 or self.columns.shape[0] != self.response.shape[0]:
            raise ValidationError("response and columns are not aligned")
        if self.columns.shape[1] != len(self.names):
            raise ValidationError("column names do not match matrix width")
        if not (np.isfinite(self.columns).all() and np.isfinite(self.response).all()):
            raise ValidationError("design matrix has non-finite entries")

    @classmethod
    def from_arrays(cls, response, columns, names=None, route_ids=None):
        """Wrap plain arrays; rows default to one group each."""
        y = np.asarray(response, dtype=float)
        X = np.asarray(columns, dtype=float)
        if names is None:
            names = tuple(f"x{j}" for j in range(X.shape[1]))
        if route_ids is None:
            route_ids = np.arange(len(y)).astype(str)
        return cls(y, X, tuple(names), np.asarray(route_ids), np.full(len(y), "", dtype=object))

    @property
    def shape(self):
        return self.columns.shape


def regressor_columns(panel) -> dict[str, np.ndarray]:
    """All model columns, untransformed, in row order of the panel."""
    f = panel.frame
    for name in ("pax", "avg_fare_brl", "pop_density", "income"):
        if not (f[name].to_numpy() > 0).all():
            raise ValidationError(f"log of non-positive {name}")
    idx = panel.period_index
    log_fare = np.log(f["avg_fare_brl"].to_numpy())
    lowcost = f["lowcost_present"].to_numpy().astype(float)
    return {
        "intercept": np.ones(len(f)),
        "log_pop_density": np.log(f["pop_density"].to_numpy()),
        "log_income": np.log(f["income"].to_numpy()),
        "log_fare": log_fare,
        "d_codeshare": f["codeshare"].to_numpy().astype(float),
        "d_apagao": panel.calendar.apagao_flag(idx).astype(float),
        "d_crisis": panel.calendar.crisis_flag(idx).astype(float),
        "d_lowcost": lowcost,
        "log_fare_x_share_other_mode": log_fare * f["share_other_mode"].to_numpy(),
        "log_fare_x_share_business": log_fare * f["share_business"].to_numpy(),
        "log_fare_x_d_lowcost": log_fare * lowcost,
    }


def build_design_matrix(panel, spec: ModelSpec = ModelSpec()) -> DesignMatrix:
    if len(panel) == 0:
        raise ValidationError("cannot build a design matrix from an empty panel")
    cols = regressor_columns(panel)
    names = spec.regressors
    matrix = DesignMatrix(
        response=np.log(panel.frame["pax"].to_numpy()),
        columns=np.column_stack([cols[n] for n in names]),
        names=names,
        route_ids=panel.frame["route_id"].to_numpy(),
        periods=panel.frame["period"].to_numpy(),
        spec=spec,
    )
    return within_transform(matrix) if spec.use_route_fixed_effects else matrix


def _demean(values, codes, counts):
    means = np.column_stack(
        [np.bincount(codes, weights=values[:, j], minlength=len(counts)) for j in range(values.shape[1])]
    ) / counts[:, None]
    return values - means[codes]


def within_transform(matrix: DesignMatrix) -> DesignMatrix:
    """Subtract route means from the response and every column."""
    codes, uniques = pd.factorize(matrix.route_ids, sort=False)
    counts = np.bincount(codes).astype(float)
    stacked = np.column_stack([matrix.response, matrix.columns])
    # second sweep removes the rounding left by the first
    stacked = _demean(_demean(stacked, codes, counts), codes, counts)
    return DesignMatrix(
        response=stacked[:, 0],
        columns=stacked[:, 1:],
        names=matrix.names,
        route_ids=matrix.route_ids,
        periods=matrix.periods,
        absorbed=matrix.absorbed + len(uniques),
        spec=matrix.spec,
    )


@dataclass(frozen=True, eq=False)
class FitResult:
    coefficients: np.ndarray
    vcov: np.ndarray
    std_errors: np.ndarray
    n_obs: int
    r_squared: float
    spec: ModelSpec
    names: tuple[str, ...]
    df_resid: int
    residuals: np.ndarray | None = None

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def std_error(self, name: str) -> float:
        return float(self.std_errors[self.names.index(name)])

    @property
    def t_values(self) -> np.ndarray:
        return self.coefficients / self.std_errors

    def t_value(self, name: str) -> float:
        return float(self.t_values[self.names.index(name)])

    def to_dict(self) -> dict:
        return {
            "coefficients": {n: float(b) for n, b in zip(self.names, self.coefficients)},
            "std_errors": {n: float(s) for n, s in zip(self.names, self.std_errors)},
            "n_obs": int(self.n_obs),
            "r_squared": float(self.r_squared),
            "spec": {
                "use_route_fixed_effects": self.spec.use_route_fixed_effects,
                "robust_se": self.spec.robust_se,
            },
            "df_resid": int(self.df_resid),
            "vcov": [[float(v) for v in row] for row in self.vcov],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        try:
            names = tuple(d["coefficients"])
            spec = ModelSpec(**d["spec"])
            if names != spec.regressors:
                raise ValidationError(f"coefficient names {names} do not match model {spec.regressors}")
            if tuple(d["std_errors"]) != names:
                raise ValidationError("std_errors names do not match coefficients")
            vcov = np.array(d["vcov"], dtype=float)
            if vcov.shape != (len(names), len(names)):
                raise ValidationError("vcov has the wrong shape")
            return cls(
                coefficients=np.array([d["coefficients"][n] for n in names], dtype=float),
                vcov=vcov,
                std_errors=np.array([d["std_errors"][n] for n in names], dtype=float),
                n_obs=int(d["n_obs"]),
                r_squared=float(d["r_squared"]),
                spec=spec,
                names=names,
                df_resid=int(d["df_resid"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed fit: {exc}") from None


def write_fit(fit: FitResult, path) -> None:
    Path(path).write_text(json.dumps(fit.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_fit(path) -> FitResult:
    path = Path(path)
    if not path.is_file():
        raise ValidationError("file not found", path=path)
    try:
        return FitResult.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None
    except ValidationError as exc:
        raise ValidationError(str(exc), path=path) from None


def fit_ols(matrix: DesignMatrix, robust: bool = True) -> FitResult:
    """Least squares through a reduced QR factorisation.

    A column counts as collinear when its residual norm after projecting out
    the preceding columns, ``|R[j, j]|``, is below ``RANK_TOL`` times its own
    norm.  ``robust`` selects the HC1 sandwich covariance.  Degrees of
    freedom subtract the absorbed fixed effects.
    """
    X, y = matrix.columns, matrix.response
    n, k = X.shape
    if n < k:
        raise NumericalError(f"fewer rows ({n}) than columns ({k})")
    Q, R = np.linalg.qr(X, mode="reduced")
    norms = np.linalg.norm(X, axis=0)
    diag = np.abs(np.diag(R))
    for j, name in enumerate(matrix.names):
        if norms[j] == 0.0 or diag[j] <= RANK_TOL * norms[j]:
            raise RankDeficiencyError(name)

    beta = solve_triangular(R, Q.T @ y)
    resid = y - X @ beta
    ssr = float(resid @ resid)
    df_resid = n - k - matrix.absorbed
    r_inv = solve_triangular(R, np.eye(k))
    bread = r_inv @ r_inv.T
    if df_resid <= 0:
        vcov = np.full((k, k), np.nan)
    elif robust:
        scores = X * resid[:, None]
        vcov = bread @ (scores.T @ scores) @ bread * (n / df_resid)
    else:
        vcov = bread * (ssr / df_resid)
    vcov = 0.5 * (vcov + vcov.T)

    centered = matrix.absorbed > 0 or bool(np.any(np.all(X == X[:1], axis=0) & (X[0] != 0)))
    sst = float(np.sum((y - y.mean()) ** 2)) if centered else float(y @ y)
    if sst > 0:
        r2 = 1.0 - ssr / sst
    else:
        r2 = 1.0 if ssr == 0 else 0.0
    if centered:
        r2 = min(max(r2, 0.0), 1.0)

    spec = matrix.spec or ModelSpec(use_route_fixed_effects=matrix.absorbed > 0, robust_se=robust)
    if spec.robust_se != robust:
        spec = ModelSpec(spec.use_route_fixed_effects, robust)
    return FitResult(
        coefficients=beta,
        vcov=vcov,
        std_errors=np.sqrt(np.diag(vcov)),
        n_obs=n,
        r_squared=r2,
        spec=spec,
        names=tuple(matrix.names),
        df_resid=df_resid,
        residuals=resid,
    )


def estimate(panel, spec: ModelSpec = ModelSpec()) -> FitResult:
    return fit_ols(build_design_matrix(panel, spec), robust=spec.robust_se)


def effective_elasticity(fit: FitResult, share_business, share_other_mode, lowcost_present):
    """Route price elasticity: fare coefficient plus its interaction terms."""
    eps = (
        fit.coef("log_fare")
        + fit.coef("log_fare_x_share_other_mode") * np.asarray(share_other_mode, dtype=float)
        + fit.coef("log_fare_x_share_business") * np.asarray(share_business, dtype=float)
        + fit.coef("log_fare_x_d_lowcost") * np.asarray(lowcost_present, dtype=float)
    )
    return float(eps) if np.ndim(eps) == 0 else eps
