"""Time-to-event models: Kaplan-Meier curves and a discrete-time
logistic hazard with L2 regularization.

Both are deterministic: KM is closed-form, the hazard fit runs
full-batch gradient descent from zero initialization with a fixed
Lipschitz step, so equal inputs give equal models bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateFeatures, EmptyInput, ParseError
from ..kvtext import as_float, as_int, dump_kv, fmt_vec, load_kv, parse_vec

GRAD_TOL = 1e-6
MAX_ITER = 10_000


@dataclass(frozen=True)
class SurvivalObservation:
    duration: float
    event_observed: bool

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError("duration must be > 0")


@dataclass(frozen=True)
class SurvivalCurve:
    times: tuple[float, ...]
    survival: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.times) != len(self.survival):
            raise ValueError("times and survival must align")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")
        if any(s < 0 or s > 1 for s in self.survival):
            raise ValueError("survival values must lie in [0, 1]")
        if any(b > a for a, b in zip(self.survival, self.survival[1:])):
            raise ValueError("survival must be non-increasing")

    def at(self, t: float) -> float:
        """Step-function value S(t); 1.0 before the first event time."""
        s = 1.0
        for time, value in zip(self.times, self.survival):
            if time <= t:
                s = value
            else:
                break
        return s


def km_fit(observations: list[SurvivalObservation]) -> SurvivalCurve:
    """Product-limit estimator.

    At each distinct event time t: S *= 1 - d_t/n_t, where n_t counts
    everyone with duration >= t (so subjects censored exactly at t are
    still at risk at t).
    """
    if not observations:
        raise EmptyInput("km_fit needs at least one observation")
    durations = np.array([o.duration for o in observations])
    observed = np.array([o.event_observed for o in observations])
    event_times = sorted(set(durations[observed]))
    times: list[float] = []
    survival: list[float] = []
    s = 1.0
    for t in event_times:
        n_at_risk = int(np.sum(durations >= t))
        d = int(np.sum(durations[observed] == t))
        s *= 1.0 - d / n_at_risk
        times.append(float(t))
        survival.append(s)
    return SurvivalCurve(tuple(times), tuple(survival))


# --- discrete-time hazard -------------------------------------------------------


@dataclass(frozen=True)
class HazardModel:
    weights: tuple[float, ...]
    intercept: float
    l2_lambda: float
    converged: bool
    iterations: int

    def to_kv(self) -> str:
        return dump_kv(
            {
                "kind": "hazard",
                "version": "1",
                "weights": fmt_vec(self.weights),
                "intercept": repr(self.intercept),
                "l2_lambda": repr(self.l2_lambda),
                "converged": str(self.converged).lower(),
                "iterations": str(self.iterations),
            },
            header="discrete-time logistic hazard",
        )

    @classmethod
    def from_kv(cls, text: str) -> "HazardModel":
        fields = load_kv(text)
        if fields.get("kind") != "hazard":
            raise ParseError(f"not a hazard model: kind={fields.get('kind')!r}")
        return cls(
            weights=tuple(parse_vec(fields.get("weights", ""))),
            intercept=as_float(fields, "intercept"),
            l2_lambda=as_float(fields, "l2_lambda"),
            converged=fields.get("converged") == "true",
            iterations=as_int(fields, "iterations"),
        )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def hazard_loss_grad(
    theta: np.ndarray, X: np.ndarray, y: np.ndarray, l2_lambda: float
) -> tuple[float, np.ndarray]:
    """Mean logistic loss + (lam/2)||w||^2 and its gradient.

    theta = [w..., intercept]; the intercept is not regularized.
    """
    n = X.shape[0]
    z = X @ theta[:-1] + theta[-1]
    p = _sigmoid(z)
    # log(1+e^z) - y z, computed stably
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    loss += 0.5 * l2_lambda * float(theta[:-1] @ theta[:-1])
    residual = p - y
    grad = np.empty_like(theta)
    grad[:-1] = X.T @ residual / n + l2_lambda * theta[:-1]
    grad[-1] = float(np.mean(residual))
    return loss, grad


def hazard_fit(
    rows: list[tuple[list[float], bool]],
    l2_lambda: float,
    max_iter: int = MAX_ITER,
    tol: float = GRAD_TOL,
) -> HazardModel:
    """Fit per-period event probability by full-batch gradient descent.

    Deterministic: zero init, fixed step 1/L with L an explicit
    Lipschitz bound. Stops at gradient norm <= tol or max_iter.
    """
    if not rows:
        raise EmptyInput("hazard_fit needs at least one row")
    if l2_lambda < 0:
        raise ValueError("l2_lambda must be >= 0")
    X = np.array([r[0] for r in rows], dtype=float)
    if X.ndim != 2:
        raise ValueError("rows must share one feature dimension")
    y = np.array([1.0 if r[1] else 0.0 for r in rows])
    n, d = X.shape

    if l2_lambda == 0.0 and (y.min() == y.max()):
        # Single-class data has no finite optimum without regularization.
        raise DegenerateFeatures("all labels equal and l2_lambda = 0")

    # Lipschitz bound for the logistic-loss gradient plus the ridge term.
    aug = np.hstack([X, np.ones((n, 1))])
    lam_max = float(np.linalg.norm(aug, ord=2)) ** 2 / (4.0 * n)
    step = 1.0 / (lam_max + l2_lambda)

    theta = np.zeros(d + 1)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        _, grad = hazard_loss_grad(theta, X, y, l2_lambda)
        if float(np.linalg.norm(grad)) <= tol:
            converged = True
            iterations -= 1
            break
        theta = theta - step * grad

    if not converged and l2_lambda == 0.0:
        margins = (2.0 * y - 1.0) * (X @ theta[:-1] + theta[-1])
        if np.all(margins > 0):
            raise DegenerateFeatures(
                "perfectly separated data and l2_lambda = 0; weights diverge"
            )

    return HazardModel(
        weights=tuple(float(w) for w in theta[:-1]),
        intercept=float(theta[-1]),
        l2_lambda=l2_lambda,
        converged=converged,
        iterations=iterations,
    )


def hazard_predict_risk(
    model: HazardModel, features: list[float], horizon_periods: int
) -> float:
    """P(event within horizon) = 1 - (1 - h)^horizon with per-period
    hazard h = logistic(w.x + b)."""
    if horizon_periods < 1:
        raise ValueError("horizon_periods must be >= 1")
    if len(features) != len(model.weights):
        raise ValueError("feature dimension mismatch")
    z = float(np.dot(model.weights, features)) + model.intercept
    h = float(_sigmoid(np.array([z]))[0])
    return 1.0 - (1.0 - h) ** horizon_periods
