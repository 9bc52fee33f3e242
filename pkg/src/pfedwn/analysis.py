"""Empirical convergence diagnostics for the personalized update."""

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ._validation import check_int, check_unit_interval
from .exceptions import FitError, ParameterError
from .model import gradient, local_train


@dataclass
class ConvergenceDiagnostics:
    condition_value: float
    condition_holds: bool
    contraction: float
    fitted_rate: float | None = None
    grad_norm_running_avg: list | None = None
    smoothness: float | None = None
    grad_bound: float | None = None
    drift_bound: float | None = None

    def to_dict(self):
        return dataclasses.asdict(self)


def theorem1_condition(alpha, eta, mu, E):
    """Evaluate ``alpha^2 (2 - alpha) (1 - eta mu)^E`` and whether it is <= 1.

    The same quantity is the per-round contraction factor of the squared
    distance to the optimum.
    """
    alpha = check_unit_interval(alpha, "alpha")
    E = check_int(E, "E", minimum=1)
    if eta < 0 or mu <= 0:
        raise ParameterError("need eta >= 0 and mu > 0")
    if eta * mu >= 1:
        raise ParameterError(f"eta * mu = {eta * mu} is outside the contraction regime (< 1)")
    value = alpha ** 2 * (2.0 - alpha) * (1.0 - eta * mu) ** E
    return value, bool(value <= 1.0)


def _loglinear_sse(t, e, floor):
    y = np.log(e - floor)
    coef = np.polyfit(t, y, 1)
    resid = y - np.polyval(coef, t)
    return float(resid @ resid), coef[0]


def fit_geometric_rate(trace, window=None):
    """Per-step ratio of a trace decaying geometrically towards a floor.

    ``log(trace - floor)`` is fitted by least squares against the step index.
    The floor is the value in ``[0, min(trace))`` giving the best straight-line
    fit, with zero and the trailing-window mean (last fifth of the trace by
    default) always among the candidates. An exact ``c * r^t + f`` is
    recovered exactly.
    """
    e = np.asarray(trace, dtype=np.float64)
    n = e.size
    if n < 5:
        raise FitError(f"need at least 5 points, got {n}")
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise FitError("trace must be positive and finite")
    if np.ptp(e) <= 1e-12 * np.abs(e).max():
        raise FitError("trace is constant; no decay to fit")
    window = max(2, n // 5) if window is None else check_int(window, "window", minimum=1)
    t = np.arange(n, dtype=np.float64)
    e_min = float(e.min())
    # floors are parametrized by log(e_min - floor); the best fit can sit in
    # a valley far narrower than e_min when the trace ends close to its floor
    def sse_gap(s):
        return _loglinear_sse(t, e, e_min - np.exp(s))[0]

    grid = np.linspace(np.log(e_min * 1e-12), np.log(e_min), 241)
    values = [sse_gap(s) for s in grid]
    k = int(np.argmin(values))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = optimize.minimize_scalar(sse_gap, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    candidates = [0.0, e_min - np.exp(grid[k])]
    if res.success:
        candidates.append(e_min - float(np.exp(res.x)))
    trailing = float(e[-window:].mean())
    if trailing < e_min:
        candidates.append(trailing)
    fits = [_loglinear_sse(t, e, f) for f in candidates]
    sse, slope = min(fits, key=lambda fs: fs[0])
    if not slope < 0:
        raise FitError("trace does not decay once the floor is removed")
    return float(np.exp(slope))


def gradient_norm_average(metrics):
    """Running mean ``(1/T) sum_{t<=T} |grad f(w_t)|^2`` for every ``T``."""
    g = getattr(metrics, "grad_norm_sq", metrics)
    g = np.asarray(g, dtype=np.float64)
    if g.size == 0:
        raise ParameterError("no gradient norms recorded")
    return np.cumsum(g) / np.arange(1, g.size + 1)


def estimate_smoothness(model, dataset=None, n_probes=20, rng=None, radius=1.0, l2=0.0,
                        center=None):
    """Lower estimate of the gradient Lipschitz constant.

    ``model`` is a :class:`~pfedwn.model.ModelParams` (probes centred on it,
    gradients of the dataset loss) or a callable returning the gradient of a
    vector, probed around ``center``. Each probe draws a pair of nearby points;
    the estimate is the largest ratio |grad(x) - grad(y)| / |x - y| seen, so it
    never shrinks as probes are added.
    """
    n_probes = check_int(n_probes, "n_probes", minimum=10)
    rng = rng if rng is not None else np.random.default_rng(0)
    if callable(model):
        if center is None:
            raise ParameterError("a gradient callable needs a probe center")
        grad_fn = model
    else:
        def grad_fn(v):
            return gradient(model.with_values(v), dataset, l2=l2)
        center = model.values if center is None else center
    center = np.asarray(center, dtype=np.float64)
    best = 0.0
    for _ in range(n_probes):
        x = center + radius * rng.standard_normal(center.size)
        y = x + radius * rng.standard_normal(center.size)
        ratio = np.linalg.norm(grad_fn(x) - grad_fn(y)) / np.linalg.norm(x - y)
        best = max(best, float(ratio))
    return best


def oracle_optimum(init, train, config, total_steps):
    """Reference optimum: ten times the steps at a tenth of the step size."""
    slow = dataclasses.replace(config, learning_rate=config.learning_rate / 10.0)
    return local_train(init, train, slow, steps=10 * int(total_steps))


def distance_trace(models, optimum):
    return np.array([float(np.sum((m.values - optimum.values) ** 2)) for m in models])


def diagnose(metrics, alpha, eta, mu, E, distances=None, smoothness=None):
    value, holds = theorem1_condition(alpha, eta, mu, E)
    rate = None
    if distances is not None:
        try:
            rate = fit_geometric_rate(distances)
        except FitError:
            rate = None
    g = np.asarray(metrics.grad_norm_sq, dtype=np.float64)
    return ConvergenceDiagnostics(
        condition_value=value,
        condition_holds=holds,
        contraction=value,
        fitted_rate=rate,
        grad_norm_running_avg=[float(v) for v in gradient_norm_average(g)],
        smoothness=smoothness,
        grad_bound=float(np.sqrt(g.max())) if g.size else None,
    )
