"""Lag correlation estimators and NACF diagnostics.

All lag products use the biased, truncated estimator

    c[tau] = (1/N) * sum_{t=0}^{N-1-tau} (x[t] - mean(x)) * (y[t+tau] - mean(y))

with means taken once over the full series. Dividing by N (not N - tau)
keeps the autocovariance positive semi-definite, so |nacf| <= 1.
"""

import numpy as np

from .errors import DegenerateSeriesError, DomainError, ShapeError, SingularFitError
from .data import TimeSeries


def _as_array(x):
    if isinstance(x, TimeSeries):
        return x.values
    return np.asarray(x, dtype=np.float64)


def _check_pair(x, y):
    x, y = _as_array(x), _as_array(y)
    if x.ndim != 1 or y.ndim != 1 or len(x) != len(y):
        raise ShapeError(f"series lengths differ: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise ShapeError("lag correlation needs at least 2 samples")
    return x, y


def lag_corr(x, y, tau):
    x, y = _check_pair(x, y)
    n = len(x)
    if not 0 <= tau < n:
        raise DomainError(f"lag {tau} outside [0, {n})")
    xc = x - x.mean()
    yc = y - y.mean()
    return float(np.dot(xc[: n - tau], yc[tau:]) / n)


def lag_corr_all(x, y):
    """``lag_corr(x, y, tau)`` for every tau in ``0..N-1``."""
    x, y = _check_pair(x, y)
    n = len(x)
    xc = x - x.mean()
    yc = y - y.mean()
    # full cross-correlation; entry n-1+tau holds sum_t yc[t+tau] * xc[t]
    full = np.correlate(yc, xc, mode="full")
    return full[n - 1 :] / n


def nacf(x):
    x = _as_array(x)
    c = lag_corr_all(x, x)
    if c[0] <= 0.0:
        raise DegenerateSeriesError("NACF undefined for a constant series")
    return c / c[0]


def secondary_nacf(rho):
    """NACF of an NACF sequence, treated as a plain series."""
    return nacf(np.asarray(rho, dtype=np.float64))


def _logistic(z):
    # split by sign so neither branch overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid_weights(n, k):
    """Normalized logistic weights ``w[tau] ~ sigmoid(tau - k)`` over ``tau = 0..n-1``.

    Evaluated in log space so extreme midpoints (k = -1e6 or 1e6) stay exact:
    both saturation limits reduce to well-defined weights.
    """
    if n < 1:
        raise DomainError("sigmoid_weights needs n >= 1")
    z = np.arange(n, dtype=np.float64) - float(k)
    log_sig = -np.logaddexp(0.0, -z)
    log_sig -= log_sig.max()
    w = np.exp(log_sig)
    return w / w.sum()


def weighted_corr_sim(x, y, k):
    x, y = _check_pair(x, y)
    w = sigmoid_weights(len(x), k)
    return float(np.dot(w, lag_corr_all(x, y)))


def weighted_corr_sim_grad_y(x, y, k):
    """Gradient of ``weighted_corr_sim(x, y, k)`` with respect to ``y``."""
    x, y = _check_pair(x, y)
    n = len(x)
    w = sigmoid_weights(n, k)
    xc = x - x.mean()
    # d/dy[s] of sum_tau w[tau] sum_{t<n-tau} xc[t] yc[t+tau], before centering y
    raw = np.convolve(w, xc)[:n]  # raw[s] = sum_{tau<=s} w[tau] * xc[s-tau]
    # centering y subtracts the mean of raw (chain rule through ybar)
    return (raw - raw.mean()) / n


def linear_fit(points):
    """Ordinary least-squares ``(slope, intercept)`` through ``(x, y)`` points."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise SingularFitError("linear_fit needs at least 2 (x, y) points")
    xs, ys = pts[:, 0], pts[:, 1]
    xm, ym = xs.mean(), ys.mean()
    sxx = np.sum((xs - xm) ** 2)
    if sxx == 0.0:
        raise SingularFitError("all abscissae are equal")
    slope = np.sum((xs - xm) * (ys - ym)) / sxx
    return float(slope), float(ym - slope * xm)


def fit_lag_range(rho, lo, hi):
    """Fit a line to ``(tau, rho[tau])`` for ``lo <= tau <= hi``."""
    rho = np.asarray(rho, dtype=np.float64)
    hi = min(hi, len(rho) - 1)
    taus = np.arange(lo, hi + 1)
    return linear_fit(np.column_stack([taus, rho[taus]]))
