"""Cox proportional hazards with Breslow ties, fitted by damped Newton iterations."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import SurvivalDataset
from .errors import ConvergenceWarning, DimensionMismatch, NoEvents, SingularHessian
from .estimators import CumulativeHazardCurve

MAX_HALVINGS = 20


@dataclass(frozen=True, eq=False)
class CoxModel:
    beta: np.ndarray
    baseline_cumhaz: CumulativeHazardCurve
    feature_means: np.ndarray
    ridge: float
    converged: bool
    iterations: int
    loglik: float = float("nan")
    trace: tuple = ()  # penalized log-likelihood after each accepted step

    kind = "cox"

    @property
    def p(self) -> int:
        return self.beta.size

    def _rows(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        rows = x.reshape(1, -1) if x.ndim == 1 else x
        if rows.ndim != 2 or rows.shape[1] != self.p:
            raise DimensionMismatch(f"expected rows of length {self.p}, got shape {x.shape}")
        return rows

    def predict_risk(self, x) -> np.ndarray:
        """Linear predictor ``beta . (x - feature_means)`` for each row."""
        return (self._rows(x) - self.feature_means) @ self.beta

    def predict_cumhaz(self, x, t) -> np.ndarray:
        """``H0(t) * exp(risk)``; ``t`` is a scalar or one time per row."""
        risk = self.predict_risk(x)
        t = np.broadcast_to(np.asarray(t, dtype=float), risk.shape)
        if np.any(t < 0):
            raise ValueError("t must be nonnegative")
        return self.baseline_cumhaz(t) * np.exp(risk)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "beta": self.beta.tolist(),
            "feature_means": self.feature_means.tolist(),
            "baseline_cumhaz": self.baseline_cumhaz.to_dict(),
            "ridge": self.ridge,
            "converged": self.converged,
            "iterations": self.iterations,
            "loglik": self.loglik,
            "trace": list(self.trace),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoxModel":
        return cls(
            beta=np.asarray(d["beta"], float),
            baseline_cumhaz=CumulativeHazardCurve.from_dict(d["baseline_cumhaz"]),
            feature_means=np.asarray(d["feature_means"], float),
            ridge=float(d["ridge"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            loglik=float(d["loglik"]),
            trace=tuple(d.get("trace", ())),
        )


class _RiskSets:
    """Sorted layout shared by every likelihood evaluation on one dataset."""

    def __init__(self, x, time, event):
        order = np.argsort(time, kind="stable")
        self.x = x[order]
        self.time = time[order]
        self.event = event[order].astype(bool)
        self.event_times, d = np.unique(self.time[self.event], return_counts=True)
        self.d = d.astype(float)
        # first sorted index of each risk set {k : time_k >= t_j}
        self.start = np.searchsorted(self.time, self.event_times, side="left")
        # number of event times <= time_i, to accumulate per-subject hazard weights
        self.upto = np.searchsorted(self.event_times, self.time, side="right")
        self.x_event_sum = self.x[self.event].sum(axis=0)

    def sums(self, beta):
        eta = self.x @ beta
        shift = eta.max()
        w = np.exp(eta - shift)
        s0 = np.cumsum(w[::-1])[::-1][self.start]
        s1 = np.cumsum((w[:, None] * self.x)[::-1], axis=0)[::-1][self.start]
        return eta, shift, w, s0, s1


def cox_objective(beta, x, time, event, ridge: float = 0.0):
    """Penalized Breslow log partial likelihood with its gradient and Hessian."""
    rs = x if isinstance(x, _RiskSets) else _RiskSets(np.asarray(x, float), np.asarray(time, float), np.asarray(event))
    beta = np.asarray(beta, dtype=float)
    eta, shift, w, s0, s1 = rs.sums(beta)
    ll = float(
        eta[rs.event].sum() - np.sum(rs.d * (np.log(s0) + shift)) - 0.5 * ridge * beta @ beta
    )
    mean = s1 / s0[:, None]
    grad = rs.x_event_sum - rs.d @ mean - ridge * beta
    # sum_j d_j S2_j / S0_j, regrouped per subject as sum_i w_i c_i x_i x_i^T
    c = np.concatenate(([0.0], np.cumsum(rs.d / s0)))[rs.upto]
    weighted = rs.x * (w * c)[:, None]
    info = weighted.T @ rs.x - (mean * rs.d[:, None]).T @ mean
    hess = -info - ridge * np.eye(beta.size)
    return ll, grad, hess


def breslow(x, time, event, beta) -> CumulativeHazardCurve:
    """Baseline cumulative hazard ``sum_{t_j <= t} d_j / sum_{k in R_j} exp(beta . x_k)``."""
    rs = _RiskSets(np.asarray(x, float), np.asarray(time, float), np.asarray(event))
    eta = rs.x @ beta
    s0 = np.cumsum(np.exp(eta)[::-1])[::-1][rs.start]
    return CumulativeHazardCurve(rs.event_times, np.cumsum(rs.d / s0))


def fit_cox(
    data: SurvivalDataset, ridge: float = 1e-8, tol: float = 1e-8, max_iter: int = 50
) -> CoxModel:
    """Maximize the ridge-penalized partial likelihood on centered covariates."""
    if not data.event.any():
        raise NoEvents("Cox fitting needs at least one event")
    if data.p < 1 or max_iter < 1 or ridge < 0 or tol <= 0:
        raise ValueError("need p >= 1, max_iter >= 1, ridge >= 0, tol > 0")

    means = data.features.mean(axis=0)
    rs = _RiskSets(data.features - means, data.time, data.event)
    beta = np.zeros(data.p)
    ll, grad, hess = cox_objective(beta, rs, None, None, ridge)
    converged = bool(np.max(np.abs(grad)) < tol)
    iterations = 0
    trace = [ll]
    while not converged and iterations < max_iter:
        iterations += 1
        try:
            chol = np.linalg.cholesky(-hess)
        except np.linalg.LinAlgError:
            raise SingularHessian(
                "negative Hessian is not positive definite; use ridge > 0"
            ) from None
        step = np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
        for _ in range(MAX_HALVINGS + 1):
            candidate = beta + step
            new_ll, new_grad, new_hess = cox_objective(candidate, rs, None, None, ridge)
            if new_ll > ll:
                break
            step = step / 2
        else:
            # no ascent possible at machine precision: already at the maximum
            converged = True
            break
        change = new_ll - ll
        beta, ll, grad, hess = candidate, new_ll, new_grad, new_hess
        trace.append(ll)
        converged = bool(np.max(np.abs(grad)) < tol or abs(change) < tol)

    if not converged:
        warnings.warn(
            f"Cox fit did not converge in {max_iter} iterations "
            f"(max |score| = {np.max(np.abs(grad)):.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    baseline = breslow(data.features - means, data.time, data.event, beta)
    return CoxModel(beta, baseline, means, ridge, converged, iterations, ll, tuple(trace))


def cox_risk_score(model: CoxModel, x):
    """Relative-hazard log score of one row (or an array of scores for a matrix)."""
    out = model.predict_risk(x)
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def cox_cumhaz(model: CoxModel, x, t):
    """Predicted cumulative hazard ``H0(t) exp(score)``."""
    out = model.predict_cumhaz(x, t)
    return float(out[0]) if np.asarray(x).ndim == 1 else out
