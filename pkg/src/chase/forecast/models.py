"""Fitted one-step carbon-intensity regressors and their JSON form."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from chase.forecast.features import SECONDS_PER_DAY, time_features
from chase.forecast.svr import rbf_kernel, solve_dual

logger = logging.getLogger(__name__)

ModelKind = Literal["linear", "svr", "persistence"]

RIDGE_LAMBDA = 1e-8
# Normal equations switch to the ridge system above this condition number.
MAX_CONDITION = 1e12
N_FEATURES = 3


class NotFittedError(RuntimeError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ForecastModel:
    """Regressor on z-scored (sin, cos, previous intensity) features.

    Linear models keep ``coef = (bias, w_sin, w_cos, w_prev)`` in standardized
    units. SVR models keep support vectors (standardized), dual coefficients
    ``alpha - alpha*`` and the bias. Persistence ignores everything and echoes
    the previous value.
    """

    kind: ModelKind
    steps_per_day: int
    feature_mean: tuple[float, ...] = (0.0, 0.0, 0.0)
    feature_std: tuple[float, ...] = (1.0, 1.0, 1.0)
    target_mean: float = 0.0
    target_std: float = 1.0
    coef: tuple[float, ...] = ()
    support_vectors: tuple[tuple[float, ...], ...] = ()
    dual_coef: tuple[float, ...] = ()
    bias: float = 0.0
    gamma: float = 0.0
    C: float = 0.0
    epsilon: float = 0.0
    converged: bool = True
    _sv: np.ndarray = field(init=False, repr=False, compare=False)
    _dual: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("linear", "svr", "persistence"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if isinstance(self.steps_per_day, bool) or not isinstance(self.steps_per_day, int) or self.steps_per_day <= 0:
            raise ValueError(f"steps_per_day must be a positive integer, got {self.steps_per_day!r}")
        if any(s <= 0 for s in self.feature_std) or self.target_std <= 0:
            raise ValueError("scaler standard deviations must be positive")
        if self.kind == "linear" and len(self.coef) != N_FEATURES + 1:
            raise ValueError(f"linear model needs {N_FEATURES + 1} coefficients, got {len(self.coef)}")
        if self.kind == "svr":
            if len(self.dual_coef) != len(self.support_vectors):
                raise ValueError("one dual coefficient per support vector required")
            if any(abs(a) > self.C * (1 + 1e-12) for a in self.dual_coef):
                raise ValueError("dual coefficient outside the box [-C, C]")
        sv = np.asarray(self.support_vectors, dtype=float).reshape(-1, N_FEATURES)
        object.__setattr__(self, "_sv", sv)
        object.__setattr__(self, "_dual", np.asarray(self.dual_coef, dtype=float))

    @property
    def interval(self) -> int:
        return SECONDS_PER_DAY // self.steps_per_day

    def raw_predict(self, sin_t: float, cos_t: float, prev: float) -> float:
        if self.kind == "persistence":
            return float(prev)
        x = np.array([sin_t, cos_t, prev], dtype=float)
        z = (x - np.asarray(self.feature_mean)) / np.asarray(self.feature_std)
        if self.kind == "linear":
            b, *w = self.coef
            out = b + float(np.dot(w, z))
        else:
            k = rbf_kernel(self._sv, z[None, :], self.gamma)[:, 0] if len(self._sv) else np.zeros(0)
            out = float(self._dual @ k) + self.bias
        return self.target_mean + self.target_std * out


def _scaler(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    # Constant columns carry no information: center them and keep unit scale.
    std = np.where(std > 0, std, 1.0)
    return mean, std


def _standardize(rows, targets):
    X = np.asarray(rows, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise ValueError(f"rows must have shape (n, {N_FEATURES}), got {X.shape}")
    if len(X) != len(y):
        raise ValueError("rows and targets differ in length")
    fm, fs = _scaler(X)
    tm, ts = _scaler(y[:, None])
    return (X - fm) / fs, (y - tm[0]) / ts[0], fm, fs, float(tm[0]), float(ts[0])


def fit_linear(rows, targets, steps_per_day: int) -> ForecastModel:
    """Ordinary least squares via the normal equations, ridge on near-singularity."""
    if len(rows) < N_FEATURES + 1:
        raise ValueError(f"linear fit needs at least {N_FEATURES + 1} rows, got {len(rows)}")
    Z, yz, fm, fs, tm, ts = _standardize(rows, targets)
    A = np.hstack([np.ones((len(Z), 1)), Z])
    M = A.T @ A
    rhs = A.T @ yz
    try:
        if np.linalg.cond(M) > MAX_CONDITION:
            raise np.linalg.LinAlgError("ill-conditioned")
        coef = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        logger.debug("normal equations singular, using ridge lambda=%g", RIDGE_LAMBDA)
        coef = np.linalg.solve(M + RIDGE_LAMBDA * np.eye(len(M)), rhs)
    if not np.all(np.isfinite(coef)):
        raise np.linalg.LinAlgError("linear fit is rank deficient even with ridge")
    return ForecastModel(
        kind="linear",
        steps_per_day=steps_per_day,
        feature_mean=tuple(map(float, fm)),
        feature_std=tuple(map(float, fs)),
        target_mean=tm,
        target_std=ts,
        coef=tuple(map(float, coef)),
    )


def fit_svr(
    rows,
    targets,
    steps_per_day: int,
    C: float = 1.0,
    epsilon: float = 0.1,
    gamma: float | None = None,
    tol: float = 1e-3,
    max_iter: int = 10_000,
) -> ForecastModel:
    """RBF epsilon-SVR on standardized features and targets.

    ``gamma`` defaults to ``1 / (3 * mean feature variance)`` of the
    standardized design. Hitting ``max_iter`` returns the last iterate with
    ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    if len(rows) < 2:
        raise ValueError("SVR fit needs at least 2 rows")
    if C <= 0 or epsilon < 0 or (gamma is not None and gamma <= 0):
        raise ValueError("need C > 0, epsilon >= 0, gamma > 0")
    Z, yz, fm, fs, tm, ts = _standardize(rows, targets)
    if gamma is None:
        var = Z.var()
        gamma = 1.0 / (N_FEATURES * var) if var > 0 else 1.0
    K = rbf_kernel(Z, Z, gamma)
    sol = solve_dual(K, yz, C, epsilon, tol=tol, max_iter=max_iter)
    if not sol.converged:
        warnings.warn(
            f"SVR dual did not reach tol={tol} within {max_iter} iterations (gap {sol.kkt_gap:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    keep = np.flatnonzero(sol.coef != 0)
    return ForecastModel(
        kind="svr",
        steps_per_day=steps_per_day,
        feature_mean=tuple(map(float, fm)),
        feature_std=tuple(map(float, fs)),
        target_mean=tm,
        target_std=ts,
        support_vectors=tuple(tuple(map(float, Z[k])) for k in keep),
        dual_coef=tuple(float(sol.coef[k]) for k in keep),
        bias=-sol.rho,
        gamma=float(gamma),
        C=float(C),
        epsilon=float(epsilon),
        converged=sol.converged,
    )


def persistence_model(steps_per_day: int) -> ForecastModel:
    return ForecastModel(kind="persistence", steps_per_day=steps_per_day)


def predict_one(model: ForecastModel, t: float, prev: float) -> float:
    """Next-step intensity for time-of-day step ``t`` given the last observed value."""
    if not isinstance(model, ForecastModel):
        raise NotFittedError("predict_one needs a fitted ForecastModel")
    s, c = time_features(t, model.steps_per_day)
    return max(0.0, model.raw_predict(s, c, prev))


def forecast_horizon(model: ForecastModel, start_step: float, prev: float, n: int) -> list[float]:
    """Recursive ``n``-step forecast; each prediction is the next step's lag."""
    if n < 1:
        raise ValueError("horizon must be at least one step")
    out = []
    for k in range(n):
        prev = predict_one(model, start_step + k, prev)
        out.append(prev)
    return out


def model_to_dict(model: ForecastModel) -> dict:
    doc = {
        "kind": model.kind,
        "steps_per_day": model.steps_per_day,
        "feature_scaler": {"mean": list(model.feature_mean), "std": list(model.feature_std)},
        "target_scaler": {"mean": model.target_mean, "std": model.target_std},
    }
    if model.kind == "linear":
        doc["coef"] = list(model.coef)
    elif model.kind == "svr":
        doc["svr"] = {
            "support_vectors": [list(v) for v in model.support_vectors],
            "dual_coef": list(model.dual_coef),
            "bias": model.bias,
            "gamma": model.gamma,
            "C": model.C,
            "epsilon": model.epsilon,
            "converged": model.converged,
        }
    return doc


def model_from_dict(doc: dict) -> ForecastModel:
    kw = dict(
        kind=doc["kind"],
        steps_per_day=doc["steps_per_day"],
        feature_mean=tuple(float(v) for v in doc["feature_scaler"]["mean"]),
        feature_std=tuple(float(v) for v in doc["feature_scaler"]["std"]),
        target_mean=float(doc["target_scaler"]["mean"]),
        target_std=float(doc["target_scaler"]["std"]),
    )
    if doc["kind"] == "linear":
        kw["coef"] = tuple(float(v) for v in doc["coef"])
    elif doc["kind"] == "svr":
        s = doc["svr"]
        kw.update(
            support_vectors=tuple(tuple(float(x) for x in v) for v in s["support_vectors"]),
            dual_coef=tuple(float(v) for v in s["dual_coef"]),
            bias=float(s["bias"]),
            gamma=float(s["gamma"]),
            C=float(s["C"]),
            epsilon=float(s["epsilon"]),
            converged=bool(s.get("converged", True)),
        )
    return ForecastModel(**kw)


def dumps_model(model: ForecastModel) -> str:
    # repr-based float encoding is the shortest string that round-trips exactly
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def loads_model(text: str) -> ForecastModel:
    return model_from_dict(json.loads(text))
