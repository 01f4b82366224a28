"""Regularized incomplete gamma functions.

``reg_lower_gamma(a, x) = gamma(a, x) / Gamma(a)`` and
``reg_upper_gamma(a, x) = Gamma(a, x) / Gamma(a)``.

Both accept scalars or numpy arrays (broadcast together) and return the same
shape. Integer shapes, which is what the energy detector needs (``a = N_r``),
are evaluated with the finite series

    Q(n, x) = exp(-x) * sum_{k<n} x**k / k!

in log space with Kahan summation when ``x >= n``; below that the lower
function is summed directly from its power series so that small ``P`` keeps
full relative accuracy. Non-integer shapes use the classic series /
continued fraction switch at ``x = a + 1``.

Values below ``TINY`` are flushed to exactly 0.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["GammaDomainError", "TINY", "reg_gamma_pair", "reg_lower_gamma", "reg_upper_gamma"]

TINY = 1e-300
_EPS = 2.0**-53
_MAX_SERIES_TERMS = 20000
_MAX_CF_TERMS = 2000


class GammaDomainError(ValueError):
    """Raised for a <= 0, x < 0 or non-finite arguments."""


def _check(a, x):
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(x))):
        raise GammaDomainError("incomplete gamma arguments must be finite")
    if np.any(a <= 0):
        raise GammaDomainError(f"shape must be positive, got min a={a.min()}")
    if np.any(x < 0):
        raise GammaDomainError(f"argument must be non-negative, got min x={x.min()}")
    return a, x


def _lgamma(a):
    u, inv = np.unique(a, return_inverse=True)
    return np.array([math.lgamma(v) for v in u])[inv].reshape(a.shape)


def _log_prefactor(a, x):
    # log(x**a * exp(-x) / Gamma(a + 1)); x > 0 assumed
    return a * np.log(x) - x - _lgamma(a + 1.0)


def _lower_series(a, x):
    """P(a, x) from sum_{j>=0} x**j / ((a+1)...(a+j)); good for x < a + 1."""
    out = np.zeros_like(x)
    pos = x > 0
    if not np.any(pos):
        return out
    aa, xx = a[pos], x[pos]
    term = np.ones_like(xx)
    total = np.ones_like(xx)
    comp = np.zeros_like(xx)
    active = np.ones(xx.shape, dtype=bool)
    denom = aa.copy()
    for _ in range(_MAX_SERIES_TERMS):
        denom = denom + 1.0
        term = np.where(active, term * xx / denom, 0.0)
        # Kahan step
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        active &= term > total * _EPS * 0.25
        if not active.any():
            break
    out[pos] = np.exp(_log_prefactor(aa, xx) + np.log(total))
    return out


def _upper_finite_series(n, x):
    """Q(n, x) for integer n via the finite sum; needs x >= n - 1 > -1.

    With x >= n - 1 the terms x**k / k! grow up to k = n - 1, so the sum is
    accumulated from the largest term downwards, normalized by it.
    """
    nmax = int(n.max())
    w = np.ones_like(x)
    total = np.ones_like(x)
    comp = np.zeros_like(x)
    for j in range(1, nmax):
        w = np.where(j < n, w * (n - j) / x, 0.0)
        y = w - comp
        t = total + y
        comp = (t - total) - y
        total = t
    log_top = (n - 1.0) * np.log(x) - _lgamma(n)
    return np.exp(log_top - x + np.log(total))


def _upper_cf(a, x):
    """Q(a, x) by modified Lentz continued fraction; good for x >= a + 1."""
    fpmin = 1e-300
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / fpmin)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _MAX_CF_TERMS):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < fpmin, fpmin, d)
        c = b + an / c
        c = np.where(np.abs(c) < fpmin, fpmin, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if np.all(np.abs(delta - 1.0) < _EPS):
            break
    return np.exp(a * np.log(x) - x - _lgamma(a) + np.log(h))


def _both(a, x):
    a, x = _check(a, x)
    a, x = np.broadcast_arrays(a, x)
    a = a.astype(float, copy=True)
    x = x.astype(float, copy=True)
    lower = np.empty_like(x)
    upper = np.empty_like(x)

    is_int = a == np.round(a)
    # x < a: lower tail is the small one (or at least not the large one)
    small = x < np.where(is_int, a, a + 1.0)

    idx = small
    if np.any(idx):
        p = _lower_series(a[idx], x[idx])
        lower[idx] = p
        upper[idx] = 1.0 - p

    idx = ~small & is_int
    if np.any(idx):
        q = _upper_finite_series(a[idx], x[idx])
        upper[idx] = q
        lower[idx] = 1.0 - q

    idx = ~small & ~is_int
    if np.any(idx):
        q = _upper_cf(a[idx], x[idx])
        upper[idx] = q
        lower[idx] = 1.0 - q

    np.clip(lower, 0.0, 1.0, out=lower)
    np.clip(upper, 0.0, 1.0, out=upper)
    lower[lower < TINY] = 0.0
    upper[upper < TINY] = 0.0
    return lower, upper


def _ret(v):
    return float(v) if v.ndim == 0 else v


def reg_lower_gamma(a, x):
    """Regularized lower incomplete gamma ``P(a, x)``.

    Parameters
    ----------
    a : float or array_like
        Shape, ``a > 0``.
    x : float or array_like
        Argument, ``x >= 0``.

    Returns
    -------
    float or ndarray
        Value in ``[0, 1]``; a Python float for scalar inputs.
    """
    return _ret(_both(a, x)[0])


def reg_upper_gamma(a, x):
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    return _ret(_both(a, x)[1])


def reg_gamma_pair(a, x):
    """Both ``(P(a, x), Q(a, x))`` from a single evaluation."""
    lower, upper = _both(a, x)
    return _ret(lower), _ret(upper)
