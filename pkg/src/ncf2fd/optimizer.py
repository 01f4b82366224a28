"""Constellation optimization: two-layer greedy descent and grid search.

The objective is the closed-form bound ``pe_star`` with ``eps1 = 0`` and
``eps2`` eliminated through the power equality, so the free variables are
``(alpha, eta1, eta2)``.

For fixed ``(eta1, alpha)`` the decreasing part ``P23 + P32`` and the
increasing part ``P34 + P4`` of the bound cross exactly once in ``eta2``;
for fixed ``(eta1, eta2)`` the parts ``P00(P1+P4) + P11(P21+P23+P32+P34)``
and ``2 P01 + 2 P10`` cross exactly once in ``alpha``. The crossings are
found with a bracketed Newton iteration and used as cheap surrogates for
the one-dimensional minimizers.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .linkmodel import (
    Constellation,
    SystemParams,
    complete_constellation,
    eta2_upper_bound,
    evaluate,
)

__all__ = [
    "BracketError",
    "IterationLimitError",
    "GridTooLargeError",
    "DescentConfig",
    "OptimizerResult",
    "safeguarded_newton",
    "eta2_objective",
    "alpha_objective",
    "eta2_domain",
    "alpha_domain",
    "find_eta2_star",
    "find_alpha_star",
    "greedy_descent",
    "exhaustive_search",
    "grid_size",
    "objective",
]

log = logging.getLogger(__name__)

_STATE_TOL = 1e-8


class BracketError(RuntimeError):
    """The root objective has the same sign at both ends of its bracket."""


class IterationLimitError(RuntimeError):
    """Descent hit its iteration cap; ``best`` carries the best point seen."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class GridTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class DescentConfig:
    delta_pe: float = 1e-9
    delta_eta1: float = 1e-3
    eta2_init: float = 1.5
    alpha_init: float = 0.5
    max_inner: int = 10_000
    max_outer: int = 1_000
    nr_tolerance: float = 1e-10
    alpha_clip: float = 1e-4
    # eta2 bracket is pulled in from the singular ends by this fraction of its width
    eta2_margin: float = 1e-9
    # smallest 1 - alpha tried when the clipped alpha bracket shows no sign change
    alpha_clip_min: float = 1e-13
    # True: an accepted move resets the other coordinate to its initial value
    reset_to_init: bool = False
    # polish each crossing into a 1-D minimizer of pe_star along that coordinate
    line_search: bool = True
    line_tol: float = 1e-9

    def __post_init__(self):
        bad = [k for k in ("delta_pe", "delta_eta1", "nr_tolerance", "alpha_clip", "eta2_margin",
                           "alpha_clip_min", "line_tol")
               if not getattr(self, k) > 0]
        if not 0.0 < self.alpha_init < 1.0:
            bad.append("alpha_init in (0, 1)")
        if not 0.0 < self.eta2_init < eta2_upper_bound(self.alpha_init, 0.0):
            bad.append("eta2_init feasible for eta1=0, alpha_init")
        if self.max_inner < 1 or self.max_outer < 1:
            bad.append("max_inner/max_outer >= 1")
        if bad:
            raise ValueError("invalid DescentConfig: " + ", ".join(bad))


@dataclass
class OptimizerResult:
    constellation: Constellation
    pe_star_value: float
    pe_exact_value: float
    iterations: dict
    evaluations: int
    wall_time: float
    method: str = "algorithm"


class _Counter:
    """Objective wrapper that counts point evaluations."""

    def __init__(self, params: SystemParams):
        self.params = params
        self.calls = 0

    def __call__(self, alpha, eta1, eta2):
        p = self.params
        r = evaluate(p.n_o, p.n_r, p.sigma_ac2, p.lambda_sic, alpha, eta1, eta2,
                     exact_thresholds=p.exact_thresholds)
        self.calls += int(np.size(r["pe_star"]))
        return r


def objective(params: SystemParams, alpha, eta1, eta2):
    """``pe_star`` at ``(alpha, eta1, eta2)``; broadcasts over arrays."""
    p = params
    return evaluate(p.n_o, p.n_r, p.sigma_ac2, p.lambda_sic, alpha, eta1, eta2,
                    exact_thresholds=p.exact_thresholds)["pe_star"]


def eta2_objective(params: SystemParams, eta1, alpha, eta2, _ev=None):
    """``(P23 + P32) - (P34 + P4)``; positive near ``eta1``, negative near the upper end."""
    r = (_ev or _Counter(params))(alpha, eta1, eta2)
    t = r["terms"]
    return (t["P23"] + t["P32"]) - (t["P34"] + t["P4"])


def alpha_objective(params: SystemParams, eta1, eta2, alpha, _ev=None):
    """``[P00(P1+P4) + P11(P21+P23+P32+P34)] - [2 P01 + 2 P10]``."""
    r = (_ev or _Counter(params))(alpha, eta1, eta2)
    t = r["terms"]
    dec = r["p00"] * (t["P1"] + t["P4"]) + r["p11"] * (t["P21"] + t["P23"] + t["P32"] + t["P34"])
    return dec - 2.0 * (r["p01"] + r["p10"])


def eta2_domain(eta1, alpha, cfg: DescentConfig):
    lo, hi = eta1, eta2_upper_bound(alpha, eta1)
    m = cfg.eta2_margin * (hi - lo)
    return lo + m, hi - m


def alpha_domain(eta1, eta2, cfg: DescentConfig):
    """Clipped ``alpha`` interval on which ``eta2`` stays below its upper bound."""
    lo, hi = cfg.alpha_clip, 1.0 - cfg.alpha_clip
    s = 2.0 * eta2 - 3.0 + eta1
    if s > 0:
        # eta2 < 0.5 * (3 + 1/alpha - eta1)  <=>  alpha < 1 / s
        hi = min(hi, (1.0 / s) * (1.0 - cfg.alpha_clip))
    if not lo < hi:
        raise BracketError(f"no feasible alpha for eta1={eta1}, eta2={eta2}")
    return lo, hi


def safeguarded_newton(f, lo, hi, tol=1e-10, f_tol=0.0, max_iter=200, rel_step=1e-6):
    """Root of ``f`` on ``[lo, hi]`` by Newton steps kept inside a shrinking bracket.

    The derivative is a central difference with step ``rel_step * |x|``.
    A Newton step that leaves the bracket, or fails to halve it in two
    iterations, is replaced by bisection, so convergence is guaranteed once
    ``f(lo)`` and ``f(hi)`` differ in sign.

    Returns ``(root, f(root), iterations)``.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo, flo, 0
    if fhi == 0:
        return hi, fhi, 0
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(f"f({lo})={flo:.3g} and f({hi})={fhi:.3g} have the same sign")
    x = 0.5 * (lo + hi)
    width_old = hi - lo
    for it in range(1, max_iter + 1):
        fx = f(x)
        if fx == 0 or abs(fx) <= f_tol:
            return x, fx, it
        if np.sign(fx) == np.sign(flo):
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        if hi - lo <= tol:
            return x, fx, it
        h = rel_step * max(abs(x), 1e-8)
        h = min(h, 0.5 * (x - lo), 0.5 * (hi - x))
        deriv = (f(x + h) - f(x - h)) / (2.0 * h) if h > 0 else 0.0
        xn = x - fx / deriv if deriv != 0 and np.isfinite(deriv) else np.nan
        width = hi - lo
        if not (lo < xn < hi) or width > 0.5 * width_old:
            # slow shrink or an escaping step: bisect
            if not (lo < xn < hi) or it % 2 == 0:
                xn = 0.5 * (lo + hi)
        width_old = width
        if abs(xn - x) <= 0.5 * tol:
            return xn, f(xn), it
        x = xn
    raise IterationLimitError(f"root finder did not converge in {max_iter} iterations")


def find_eta2_star(params: SystemParams, eta1: float, alpha: float, cfg: DescentConfig | None = None, _ev=None) -> float:
    """``eta2`` where ``P23 + P32`` meets ``P34 + P4`` for fixed ``(eta1, alpha)``."""
    cfg = cfg or DescentConfig()
    ev = _ev or _Counter(params)
    lo, hi = eta2_domain(eta1, alpha, cfg)
    f = lambda e2: float(eta2_objective(params, eta1, alpha, e2, ev))  # noqa: E731
    try:
        root, _, _ = safeguarded_newton(f, lo, hi, tol=cfg.nr_tolerance)
    except BracketError as exc:
        raise BracketError(f"eta2 crossing (eta1={eta1}, alpha={alpha}): {exc}") from exc
    return root


def find_alpha_star(params: SystemParams, eta1: float, eta2: float, cfg: DescentConfig | None = None, _ev=None) -> float:
    """``alpha`` where the decreasing and increasing parts of the bound meet.

    The sign change is only guaranteed as ``alpha -> 1``; at high SNR the
    relay still decodes well at ``alpha = 1 - alpha_clip``, so the upper end
    is pushed towards 1 by decades until the sign flips.
    """
    cfg = cfg or DescentConfig()
    ev = _ev or _Counter(params)
    lo, hi = alpha_domain(eta1, eta2, cfg)
    f = lambda a: float(alpha_objective(params, eta1, eta2, a, ev))  # noqa: E731
    if hi == 1.0 - cfg.alpha_clip:
        gap = cfg.alpha_clip
        while f(hi) > 0 and gap > cfg.alpha_clip_min:
            gap *= 0.1
            hi = 1.0 - gap
    try:
        root, _, _ = safeguarded_newton(f, lo, hi, tol=cfg.nr_tolerance)
    except BracketError as exc:
        raise BracketError(f"alpha crossing (eta1={eta1}, eta2={eta2}): {exc}") from exc
    return root


def _line_min(f, lo, hi, seed, tol):
    """Minimize ``f`` on ``(lo, hi)``, trying ``seed`` as the interior point of the bracket."""
    try:
        res = minimize_scalar(f, bracket=(lo, seed, hi), method="brent", options={"xtol": tol})
        if lo < res.x < hi and res.fun <= f(seed):
            return float(res.x)
    except ValueError:
        pass
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    return float(res.x) if res.fun <= f(seed) else seed


def _result(params, alpha, eta1, eta2, iterations, evaluations, t0, method):
    c = complete_constellation(alpha, eta1, eta2)
    r = evaluate(params.n_o, params.n_r, params.sigma_ac2, params.lambda_sic,
                 c.alpha, c.eta1, c.eta2, eps1=c.eps1, eps2=c.eps2,
                 exact_thresholds=params.exact_thresholds)
    return OptimizerResult(
        constellation=c,
        pe_star_value=float(r["pe_star"]),
        pe_exact_value=float(r["pe"]),
        iterations=iterations,
        evaluations=evaluations,
        wall_time=time.perf_counter() - t0,
        method=method,
    )


def greedy_descent(params: SystemParams, cfg: DescentConfig | None = None) -> OptimizerResult:
    """Two-layer greedy descent over ``(eta1, eta2, alpha)``.

    Inner layer, at fixed ``eta1``: compute the ``eta2`` crossing at the
    current ``alpha`` and the ``alpha`` crossing at the current ``eta2``
    (each polished into a line minimizer of the bound when
    ``cfg.line_search`` is set, the crossing serving as the starting point),
    move along whichever coordinate gives the lower bound (or along the
    other one when that move would change nothing), and stop once the two
    candidates agree to ``delta_pe``. With ``cfg.reset_to_init`` the
    coordinate not moved is reset to its initial value instead of kept. Outer layer: step ``eta1`` by ``delta_eta1`` until the
    inner optimum changes by no more than ``delta_pe`` between successive
    ``eta1`` values.

    The reset rule can make the inner layer revisit an earlier
    ``(eta2, alpha)`` state instead of meeting the ``delta_pe`` test; a
    revisit ends the inner layer. The outer layer stops as soon as an
    ``eta1`` step fails to lower the bound by more than ``delta_pe``.
    The best point visited is returned, so the result is never worse than
    the initial point.
    """
    cfg = cfg or DescentConfig()
    t0 = time.perf_counter()
    ev = _Counter(params)
    pe = lambda a, n1, n2: float(ev(a, n1, n2)["pe_star"])  # noqa: E731

    eta1, eta2, alpha = 0.0, cfg.eta2_init, cfg.alpha_init
    pe_o = pe(alpha, eta1, eta2)
    best = (pe_o, alpha, eta1, eta2)
    inner_total = 0
    outer = 0
    seen = []

    def note(val, a, n1, n2):
        nonlocal best
        if val < best[0]:
            best = (val, a, n1, n2)

    while True:
        outer += 1
        if outer > cfg.max_outer:
            raise IterationLimitError(
                f"outer loop exceeded {cfg.max_outer} iterations",
                best=_result(params, best[1], best[2], best[3],
                             {"outer": outer - 1, "inner": inner_total}, ev.calls, t0, "algorithm"),
            )
        inner = 0
        seen.clear()
        while True:
            inner += 1
            inner_total += 1
            if inner > cfg.max_inner:
                raise IterationLimitError(
                    f"inner loop exceeded {cfg.max_inner} iterations at eta1={eta1}",
                    best=_result(params, best[1], best[2], best[3],
                                 {"outer": outer, "inner": inner_total}, ev.calls, t0, "algorithm"),
                )
            try:
                eta2_i = find_eta2_star(params, eta1, alpha, cfg, ev)
                alpha_i = find_alpha_star(params, eta1, eta2, cfg, ev)
            except BracketError as exc:
                raise BracketError(f"{exc} [outer={outer}, inner={inner}]") from exc
            if cfg.line_search:
                lo, hi = eta2_domain(eta1, alpha, cfg)
                eta2_i = _line_min(lambda v: pe(alpha, eta1, v), lo, hi, eta2_i, cfg.line_tol)
                lo, hi = alpha_domain(eta1, eta2, cfg)
                alpha_i = _line_min(lambda v: pe(v, eta1, eta2), lo, max(hi, alpha_i), alpha_i, cfg.line_tol)
            pe_eta2 = pe(alpha, eta1, eta2_i)
            pe_alpha = pe(alpha_i, eta1, eta2)
            note(pe_eta2, alpha, eta1, eta2_i)
            note(pe_alpha, alpha_i, eta1, eta2)
            diff = pe_alpha - pe_eta2
            null_eta2 = abs(eta2_i - eta2) <= _STATE_TOL
            null_alpha = abs(alpha_i - alpha) <= _STATE_TOL
            if abs(diff) < cfg.delta_pe or (null_eta2 and null_alpha):
                pe_iota = min(pe_alpha, pe_eta2)
                break
            # steeper of the two moves, unless it would leave the state unchanged
            take_eta2 = (diff > 0 and not null_eta2) or null_alpha
            if take_eta2:
                eta2 = eta2_i
                if cfg.reset_to_init:
                    alpha = cfg.alpha_init
            else:
                alpha = alpha_i
                if cfg.reset_to_init:
                    eta2 = cfg.eta2_init
            if any(abs(eta2 - e) <= _STATE_TOL and abs(alpha - a) <= _STATE_TOL for e, a in seen):
                # the reset rule revisits a state: the loop would repeat forever
                pe_iota = min(pe_alpha, pe_eta2)
                log.debug("inner loop cycled at eta1=%g after %d steps", eta1, inner)
                break
            seen.append((eta2, alpha))
        # keep stepping eta1 only while it still buys a descent
        if pe_iota < pe_o - cfg.delta_pe and eta1 + cfg.delta_eta1 < 1.0:
            eta1 += cfg.delta_eta1
            pe_o = pe_iota
            continue
        break

    return _result(params, best[1], best[2], best[3],
                   {"outer": outer, "inner": inner_total}, ev.calls, t0, "algorithm")


def _grid_axes(d_alpha, d_eta1, d_eta2):
    if not (d_alpha > 0 and d_eta1 > 0 and d_eta2 > 0):
        raise ValueError("grid resolutions must be positive")
    alphas = np.arange(1, int(np.ceil(1.0 / d_alpha))) * d_alpha
    alphas = alphas[alphas < 1.0]
    eta1s = np.arange(0, int(np.ceil(1.0 / d_eta1))) * d_eta1
    eta1s = eta1s[eta1s < 1.0]
    k_lo = np.floor(eta1s / d_eta2).astype(np.int64) + 1
    return alphas, eta1s, k_lo


def grid_size(d_alpha, d_eta1, d_eta2, stop_above=None) -> int:
    """Number of feasible ``(alpha, eta1, eta2)`` grid points, without evaluating any.

    Counting stops early (returning the partial count) once it passes ``stop_above``.
    """
    alphas, eta1s, k_lo = _grid_axes(d_alpha, d_eta1, d_eta2)
    total = 0
    for a in alphas:
        k_hi = np.ceil(eta2_upper_bound(a, eta1s) / d_eta2).astype(np.int64) - 1
        total += int(np.maximum(k_hi - k_lo + 1, 0).sum())
        if stop_above is not None and total > stop_above:
            break
    return total


def exhaustive_search(params: SystemParams, d_alpha=1e-3, d_eta1=1e-5, d_eta2=1e-5,
                      max_points=50_000_000, chunk=200_000) -> OptimizerResult:
    """Grid minimum of ``pe_star`` over ``alpha = i*d_alpha``, ``eta1 = j*d_eta1``, ``eta2 = k*d_eta2``.

    Only points with ``0 < alpha < 1``, ``0 <= eta1 < 1`` and
    ``eta1 < eta2 < 0.5*(3 + 1/alpha - eta1)`` are kept. Ties go to the
    lexicographically smallest ``(alpha, eta1, eta2)``.

    Raises
    ------
    GridTooLargeError
        If the grid holds more than ``max_points`` points (or none at all).
    """
    t0 = time.perf_counter()
    alphas, eta1s, k_lo = _grid_axes(d_alpha, d_eta1, d_eta2)
    # count first so the cap is enforced before any evaluation
    total = grid_size(d_alpha, d_eta1, d_eta2, stop_above=max_points)
    if total > max_points:
        raise GridTooLargeError(f"grid exceeds {max_points} points; use coarser resolutions")
    if total == 0:
        raise GridTooLargeError("grid has no feasible points; use finer resolutions")

    best_val, best_pt = np.inf, None
    count = 0
    for a in alphas:
        hi = eta2_upper_bound(a, eta1s)
        k_hi = np.ceil(hi / d_eta2).astype(np.int64)
        reps = np.maximum(k_hi - k_lo, 0)
        e1 = np.repeat(eta1s, reps)
        hi_rep = np.repeat(hi, reps)
        # k runs from k_lo[j] to k_hi[j] - 1 for each eta1 row
        offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
        e2 = (np.repeat(k_lo, reps) + offs) * d_eta2
        ok = (e2 > e1) & (e2 < hi_rep) & (a * e2 > a * e1)
        e1, e2 = e1[ok], e2[ok]
        for s in range(0, e2.size, chunk):
            p1, p2 = e1[s:s + chunk], e2[s:s + chunk]
            vals = objective(params, a, p1, p2)
            count += p2.size
            i = int(np.argmin(vals))  # first minimum: smallest (eta1, eta2) in row order
            if vals[i] < best_val:
                best_val, best_pt = float(vals[i]), (float(a), float(p1[i]), float(p2[i]))
    a, e1, e2 = best_pt
    return _result(params, a, e1, e2, {"grid_points": count}, count, t0, "exhaustive")

