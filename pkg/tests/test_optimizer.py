import math

import numpy as np
import pytest

from ncf2fd.linkmodel import SystemParams, complete_constellation, eta2_upper_bound, pe_star
from ncf2fd.optimizer import (
    BracketError,
    DescentConfig,
    GridTooLargeError,
    IterationLimitError,
    alpha_domain,
    alpha_objective,
    eta2_domain,
    eta2_objective,
    exhaustive_search,
    find_alpha_star,
    find_eta2_star,
    greedy_descent,
    grid_size,
    objective,
    safeguarded_newton,
)


# ---------------------------------------------------------------- root finder

def test_newton_simple_roots():
    r, fr, _ = safeguarded_newton(lambda x: x * x - 2.0, 0.0, 2.0, tol=1e-14)
    assert r == pytest.approx(math.sqrt(2), abs=1e-12)
    r, _, _ = safeguarded_newton(math.cos, 0.0, 3.0, tol=1e-13)
    assert r == pytest.approx(math.pi / 2, abs=1e-12)


def test_newton_survives_flat_and_steep():
    # Newton alone diverges on atan from far away; bisection keeps it bracketed
    r, _, _ = safeguarded_newton(math.atan, -50.0, 10.0, tol=1e-12)
    assert abs(r) < 1e-10
    r, _, _ = safeguarded_newton(lambda x: np.tanh(50 * (x - 0.3)), 0.0, 1.0, tol=1e-12)
    assert r == pytest.approx(0.3, abs=1e-10)


def test_newton_bracket_error():
    with pytest.raises(BracketError):
        safeguarded_newton(lambda x: x * x + 1.0, -1.0, 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        DescentConfig(delta_pe=0.0)
    with pytest.raises(ValueError):
        DescentConfig(alpha_init=1.0)
    with pytest.raises(ValueError):
        DescentConfig(eta2_init=10.0)


# ---------------------------------------------------------------- crossings

@pytest.mark.parametrize("snr, n_r", [(20, 2), (30, 4), (35, 32)])
def test_eta2_crossing_signs_and_root(snr, n_r):
    p, cfg = SystemParams(snr, n_r=n_r), DescentConfig()
    eta1, alpha = 0.0, 0.8
    lo, hi = eta2_domain(eta1, alpha, cfg)
    assert eta2_objective(p, eta1, alpha, lo) > 0
    assert eta2_objective(p, eta1, alpha, hi) < 0
    root = find_eta2_star(p, eta1, alpha, cfg)
    assert eta1 < root < eta2_upper_bound(alpha, eta1)
    g = eta2_objective(p, eta1, alpha, np.array([root - 1e-7, root + 1e-7]))
    assert g[0] > 0 > g[1]


@pytest.mark.parametrize("snr, n_r", [(20, 2), (30, 4), (35, 32)])
def test_alpha_crossing_signs_and_root(snr, n_r):
    p, cfg = SystemParams(snr, n_r=n_r), DescentConfig()
    eta1, eta2 = 0.0, 0.5
    lo, hi = alpha_domain(eta1, eta2, cfg)
    assert alpha_objective(p, eta1, eta2, lo) > 0
    assert alpha_objective(p, eta1, eta2, hi) < 0
    root = find_alpha_star(p, eta1, eta2, cfg)
    assert 0 < root < 1
    h = alpha_objective(p, eta1, eta2, np.array([root - 1e-7, root + 1e-7]))
    assert h[0] > 0 > h[1]


def test_alpha_bracket_extends_towards_one():
    # at 35 dB, Nr=2, eta2=1.5 the relay still decodes well at alpha = 1 - 1e-4
    p, cfg = SystemParams(35, n_r=2), DescentConfig()
    eta1, eta2 = 0.0, 1.5
    assert alpha_objective(p, eta1, eta2, 1 - cfg.alpha_clip) > 0
    root = find_alpha_star(p, eta1, eta2, cfg)
    assert 1 - cfg.alpha_clip < root < 1


def test_eta2_crossing_near_scan_minimum():
    # measured relation: the crossing is near, not on, the 1-D minimizer
    p = SystemParams(35, n_r=32)
    for alpha in (0.8, 0.95):
        root = find_eta2_star(p, 0.0, alpha)
        hi = eta2_upper_bound(alpha, 0.0)
        scan = np.arange(1, int(hi / 1e-3)) * 1e-3
        vals = objective(p, alpha, 0.0, scan)
        best = vals.min()
        assert abs(root - scan[np.argmin(vals)]) < 0.01
        assert objective(p, alpha, 0.0, root) <= 1.001 * best


# ---------------------------------------------------------------- greedy

@pytest.fixture(scope="module")
def greedy_30_4():
    return greedy_descent(SystemParams(30, n_r=4), DescentConfig())


def test_greedy_result_is_consistent(greedy_30_4):
    r = greedy_30_4
    p = SystemParams(30, n_r=4)
    c = r.constellation
    assert c.eps1 == 0.0
    assert c.eps2 == pytest.approx(2 - c.alpha * (c.eta1 + c.eta2 - 2), abs=1e-15)
    assert pe_star(p, c) == pytest.approx(r.pe_star_value, abs=1e-12)
    assert r.pe_exact_value <= r.pe_star_value
    start = pe_star(p, complete_constellation(0.5, 0.0, 1.5))
    assert r.pe_star_value <= start
    assert r.constellation.eta1 < 0.05
    assert r.evaluations > 0 and r.wall_time < 30
    assert r.iterations["outer"] >= 1 and r.method == "algorithm"


def test_greedy_is_local_minimum(greedy_30_4):
    p = SystemParams(30, n_r=4)
    c = greedy_30_4.constellation
    v0 = greedy_30_4.pe_star_value
    for da, de in ((1e-3, 0), (-1e-3, 0), (0, 1e-3), (0, -1e-3)):
        assert objective(p, c.alpha + da, c.eta1, c.eta2 + de) >= v0 - 1e-12


def test_greedy_literal_reset_mode_terminates():
    p = SystemParams(30, n_r=4)
    r = greedy_descent(p, DescentConfig(reset_to_init=True, line_search=False))
    assert r.pe_star_value <= pe_star(p, complete_constellation(0.5, 0.0, 1.5))


def test_greedy_iteration_cap_carries_best():
    p = SystemParams(30, n_r=4)
    with pytest.raises(IterationLimitError) as exc:
        greedy_descent(p, DescentConfig(max_inner=1))
    best = exc.value.best
    assert best is not None
    assert best.pe_star_value <= pe_star(p, complete_constellation(0.5, 0.0, 1.5))


def test_greedy_is_deterministic():
    p = SystemParams(25, n_r=2)
    a = greedy_descent(p)
    b = greedy_descent(p)
    assert a.constellation == b.constellation and a.pe_star_value == b.pe_star_value


# ---------------------------------------------------------------- grid search

def test_exhaustive_tiny_grid():
    # d=0.4: alpha in {0.4, 0.8}, eta1 in {0, 0.4, 0.8}; spot-check the argmin by brute force
    p = SystemParams(30, n_r=2)
    r = exhaustive_search(p, 0.4, 0.4, 0.4)
    pts = []
    for a in (0.4, 0.8):
        for e1 in (0.0, 0.4, 0.8):
            for k in range(1, 20):
                e2 = k * 0.4
                if e1 < e2 < eta2_upper_bound(a, e1):
                    pts.append((pe_star(p, complete_constellation(a, e1, e2)), a, e1, e2))
    assert r.iterations["grid_points"] == len(pts) == grid_size(0.4, 0.4, 0.4)
    best = min(pts)
    assert r.pe_star_value == pytest.approx(best[0], rel=1e-14)
    assert (r.constellation.alpha, r.constellation.eta1, r.constellation.eta2) == pytest.approx(best[1:])


def test_exhaustive_three_point_grid():
    # one alpha, one eta1, three eta2 values
    p = SystemParams(30, n_r=2)
    r = exhaustive_search(p, 0.6, 1.0, 0.6)
    vals = [pe_star(p, complete_constellation(0.6, 0.0, e2)) for e2 in (0.6, 1.2, 1.8)]
    assert grid_size(0.6, 1.0, 0.6) == 3
    assert r.pe_star_value == pytest.approx(min(vals), rel=1e-14)


def test_exhaustive_coarse_grid_recheck():
    p = SystemParams(30, n_r=4)
    r = exhaustive_search(p, 0.02, 0.02, 0.02)
    # independent re-evaluation of every feasible point, vectorized per alpha
    best = np.inf
    for i in range(1, 50):
        a = i * 0.02
        e1, e2 = np.meshgrid(np.arange(50) * 0.02, np.arange(1, 1400) * 0.02, indexing="ij")
        ok = (e2 > e1) & (e2 < eta2_upper_bound(a, e1))
        best = min(best, float(objective(p, a, e1[ok], e2[ok]).min()))
    assert r.pe_star_value == pytest.approx(best, rel=1e-14)
    assert r.method == "exhaustive"


def test_grid_cap():
    assert grid_size(1e-3, 1e-5, 1e-5) > 1e13
    with pytest.raises(GridTooLargeError):
        exhaustive_search(SystemParams(30), 1e-3, 1e-5, 1e-5)
    with pytest.raises(ValueError):
        exhaustive_search(SystemParams(30), 0.0, 0.1, 0.1)
