"""Student t-tests, the regularized incomplete beta function and IQR outlier removal."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_MAXIT = 500
_EPS = 3e-16
_FPMIN = 1e-300


class DegenerateSampleError(ValueError):
    pass


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for I_x(a, b)
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Upper tail P(T >= t) of Student's t."""
    tail = 0.5 * betainc_regularized(df / 2.0, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


def t_cdf(t: float, df: float) -> float:
    return t_sf(-t, df)


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float
    mean: float
    sem: float
    n: int


def t_test_one_sample(values, mu0: float = 0.0, two_tailed: bool = True) -> TTestResult:
    """One-sample t-test; the one-tailed variant tests mean > mu0."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise DegenerateSampleError("degenerate sample: need at least 2 values")
    mean = float(np.mean(x))
    sd = float(np.std(x, ddof=1))
    if not sd > 1e-12 * max(1.0, abs(mean)):
        raise DegenerateSampleError("degenerate sample: zero variance")
    sem = sd / math.sqrt(n)
    t = (mean - mu0) / sem
    df = n - 1
    if two_tailed:
        p = betainc_regularized(df / 2.0, 0.5, df / (df + t * t))
    else:
        p = t_sf(t, df)
    return TTestResult(t, df, min(max(p, 0.0), 1.0), mean, sem, n)


def t_test_paired(a, b, two_tailed: bool = True) -> TTestResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    return t_test_one_sample(a - b, 0.0, two_tailed)


def quantile_linear(sorted_values, p: float) -> float:
    """Quantile by linear interpolation at position p * (n - 1)."""
    v = sorted_values
    pos = p * (len(v) - 1)
    i = int(math.floor(pos))
    frac = pos - i
    if i + 1 >= len(v):
        return float(v[-1])
    return float(v[i] + frac * (v[i + 1] - v[i]))


@dataclass
class OutlierResult:
    retained: list
    removed: list
    removed_index: list = field(default_factory=list)
    filtered: bool = True
    q1: float = float("nan")
    q3: float = float("nan")


def iqr_outlier_filter(values, k: float = 1.5) -> OutlierResult:
    """Single-pass removal of values beyond k IQRs outside the quartiles.

    Fewer than 4 values are returned unfiltered with ``filtered=False``.
    """
    vals = [float(v) for v in values]
    if len(vals) < 4:
        return OutlierResult(vals, [], [], filtered=False)
    s = sorted(vals)
    q1 = quantile_linear(s, 0.25)
    q3 = quantile_linear(s, 0.75)
    iqr = q3 - q1
    lo, hi = q1 - k * iqr, q3 + k * iqr
    keep, drop, drop_idx = [], [], []
    for i, v in enumerate(vals):
        if v < lo or v > hi:
            drop.append(v)
            drop_idx.append(i)
        else:
            keep.append(v)
    return OutlierResult(keep, drop, drop_idx, True, q1, q3)
