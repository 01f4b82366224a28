import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncf2fd.linkmodel import (
    Constellation,
    ConstellationError,
    LinkModelError,
    SystemParams,
    bob_thresholds,
    bob_variances,
    charlie_detection,
    complete_constellation,
    error_breakdown,
    eta2_upper_bound,
    evaluate,
    noise_power,
    pe_exact,
    pe_star,
)
from ncf2fd.specfun import reg_upper_gamma


def test_noise_power():
    assert noise_power(0) == 1.0
    assert noise_power(30) == pytest.approx(1e-3, rel=1e-15)
    assert noise_power(35) == pytest.approx(3.16228e-4, rel=1e-6)


def test_system_params_validation():
    with pytest.raises(LinkModelError, match="n_r"):
        SystemParams(30, n_r=0)
    with pytest.raises(LinkModelError, match="sigma_ac2"):
        SystemParams(30, sigma_ac2=0.5)
    with pytest.raises(LinkModelError, match="lambda_sic"):
        SystemParams(30, lambda_sic=0.0)
    with pytest.raises(LinkModelError):
        SystemParams(30, sigma_ab2=2.0)


def test_charlie_example():
    mpmath.mp.dps = 40
    d = charlie_detection(SystemParams(30, n_r=2), 0.5)
    n_o, lam, s2, a = mpmath.mpf("1e-3"), mpmath.mpf("1e-5"), 10, mpmath.mpf("0.5")
    c0 = n_o + lam * (1 + a) / 2
    c1 = s2 * (1 - a) + lam * (1 + a) / 2 + n_o
    tau = c0 * c1 / (c0 - c1) * mpmath.log(c0 / c1)
    assert d.n_c0 == pytest.approx(float(c0), rel=1e-14)
    assert d.n_c1 == pytest.approx(float(c1), rel=1e-14)
    assert d.tau == pytest.approx(float(tau), rel=1e-12)
    assert d.p01 == pytest.approx(float(mpmath.exp(-tau / c0)), rel=1e-10)
    assert d.p10 == pytest.approx(float(1 - mpmath.exp(-tau / c1)), rel=1e-10)
    # rounded reference values
    assert d.n_c0 == pytest.approx(1.00750e-3, rel=1e-5)
    assert d.n_c1 == pytest.approx(5.00101, rel=1e-5)
    assert d.tau == pytest.approx(8.576e-3, rel=1e-3)
    assert d.p01 == pytest.approx(2.01e-4, rel=1e-2)
    assert d.p10 == pytest.approx(1.713e-3, rel=1e-3)
    assert d.nu == pytest.approx((10 - 1e-3 - 5e-6) / (10 + 5e-6), rel=1e-15)
    assert d.p00 + d.p01 == pytest.approx(1.0, abs=1e-15)
    assert d.p11 + d.p10 == pytest.approx(1.0, abs=1e-15)
    assert d.n_c1 > d.n_c0 > 0 and d.tau > 0 and d.p10 > d.p01


def test_charlie_rejects_alpha_outside():
    with pytest.raises(LinkModelError):
        charlie_detection(SystemParams(30), 1.0)


def test_complete_constellation(example_constellation):
    c = example_constellation
    assert c.eps1 == 0.0 and c.eps2 == pytest.approx(2.2, abs=1e-15)
    assert (c.eps1 + c.alpha * c.eta1 + c.alpha * c.eta2 + c.eps2) / 4 == pytest.approx(0.75, abs=1e-15)
    with pytest.raises(ConstellationError):
        complete_constellation(0.5, 0.1, 2.5)
    assert eta2_upper_bound(0.5, 0.1) == pytest.approx(2.45)
    with pytest.raises(ConstellationError):
        complete_constellation(0.5, 0.3, 0.3)


def test_constellation_validation():
    with pytest.raises(ConstellationError):
        Constellation(eps1=0.0, eps2=2.0, eta1=0.1, eta2=1.5, alpha=0.5)  # power
    with pytest.raises(ConstellationError):
        Constellation(eps1=0.0, eps2=0.5, eta1=0.1, eta2=4.9, alpha=0.5)  # ordering


def test_bob_variances(example_constellation):
    v = bob_variances(example_constellation, 1e-3)
    got = [v[k] for k in ("00", "10", "11", "01", "~00", "~01", "~10", "~11")]
    np.testing.assert_allclose(got, [0.001, 0.551, 1.251, 2.201, 0.051, 0.751, 0.501, 2.701], rtol=1e-14)
    c = complete_constellation(1 - 1e-12, 0.1, 1.5)
    v = bob_variances(c, 1e-3)
    assert v["00"] == pytest.approx(v["~10"], abs=1e-11)


def test_thresholds(example_constellation):
    mpmath.mp.dps = 40
    v = bob_variances(example_constellation, 1e-3)
    rho = bob_thresholds(v, 2)
    vs = [mpmath.mpf(s) for s in ("0.001", "0.551", "1.251", "2.201")]
    ref = [2 * b * a / (b - a) * mpmath.log(b / a) for a, b in zip(vs, vs[1:])]
    np.testing.assert_allclose(rho, [float(r) for r in ref], rtol=1e-13)
    # rounded reference values; the last two agree to 5e-5 only
    np.testing.assert_allclose(rho, [0.012646, 1.61494, 3.27480], rtol=1e-4)
    means = [2 * v[k] for k in ("00", "10", "11", "01")]
    for lo, r, hi in zip(means, rho, means[1:]):
        assert lo < r < hi


def test_threshold_singular():
    v = {"00": 0.1, "10": 0.1, "11": 1.0, "01": 2.0}
    with pytest.raises(LinkModelError, match="singular"):
        bob_thresholds(v, 2)


def test_exact_thresholds_shift_outer_only(example_constellation):
    v = bob_variances(example_constellation, 1e-3)
    d = charlie_detection(SystemParams(30), 0.5)
    lp = math.log(d.p11 / d.p00)
    r_apx = bob_thresholds(v, 2)
    r_ex = bob_thresholds(v, 2, lp)
    assert r_ex[1] == r_apx[1]
    assert r_ex[0] == pytest.approx(r_apx[0] - v["00"] * v["10"] / (v["10"] - v["00"]) * lp)
    assert r_ex[2] == pytest.approx(r_apx[2] + v["11"] * v["01"] / (v["01"] - v["11"]) * lp)


def _oracle_terms(n_o, n_r, c):
    """Independent 40-digit evaluation of every term probability."""
    mpmath.mp.dps = 40
    a, e1, e2 = (mpmath.mpf(float(t)) for t in (c.alpha, c.eta1, c.eta2))
    n_o = mpmath.mpf(n_o)
    eps2 = mpmath.mpf(float(c.eps2))
    v = {"00": n_o, "10": 1 - a + a * e1 + n_o, "11": 1 - a + a * e2 + n_o, "01": eps2 + n_o,
         "~00": a * e1 + n_o, "~01": a * e2 + n_o, "~10": 1 - a + n_o, "~11": 1 - a + eps2 + n_o}

    def rho(x, y):
        return n_r * x * y / (y - x) * mpmath.log(y / x)

    r1, r2, r3 = rho(v["00"], v["10"]), rho(v["10"], v["11"]), rho(v["11"], v["01"])
    Q = lambda x: mpmath.gammainc(n_r, x, mpmath.inf, regularized=True)  # noqa: E731
    P = lambda x: mpmath.gammainc(n_r, 0, x, regularized=True)  # noqa: E731
    return {
        "P1": Q(r1 / v["00"]), "P1C": Q(r1 / v["~00"]),
        "P21": P(r1 / v["10"]), "P21C": P(r1 / v["~10"]),
        "P23": Q(r2 / v["10"]), "P32": P(r2 / v["11"]),
        "P34": Q(r3 / v["11"]), "P34C": Q(r3 / v["~11"]),
        "P4": P(r3 / v["01"]), "P4C": P(r3 / v["~01"]),
    }


@pytest.mark.parametrize("n_r", [2, 4, 32])
def test_terms_against_oracle(example_constellation, n_r):
    p = SystemParams(30, n_r=n_r)
    eb = error_breakdown(p, example_constellation)
    ref = _oracle_terms(1e-3, n_r, example_constellation)
    for k, r in ref.items():
        assert eb.terms[k] == pytest.approx(float(r), rel=1e-9, abs=1e-300), k


def test_events_and_bounds(params30, example_constellation):
    eb = error_breakdown(params30, example_constellation)
    ch, t = eb.charlie, eb.terms
    assert eb.events["00>10"] == pytest.approx(ch.p00 * t["P1"] + ch.p01 * t["P1C"])
    assert eb.events["01>11"] == pytest.approx(ch.p00 * t["P4"] + ch.p01 * t["P4C"])
    assert eb.pe == pytest.approx(0.25 * sum(eb.events.values()))
    gap = 0.25 * (ch.p01 * (2 - t["P1C"] - t["P4C"]) + ch.p10 * (2 - t["P21C"] - t["P34C"]))
    assert eb.pe_star - eb.pe == pytest.approx(gap, rel=1e-10)
    assert eb.pe <= eb.pe_star
    assert pe_exact(params30, example_constellation) == eb.pe
    assert pe_star(params30, example_constellation) == eb.pe_star
    v = eb.variances
    assert v["00"] < v["10"] < v["11"] < v["01"]
    assert eb.rho1 < eb.rho2 < eb.rho3


def test_complements_at_one_give_bound(params30, example_constellation):
    eb = error_breakdown(params30, example_constellation)
    ch, t = eb.charlie, eb.terms
    sat = (ch.p00 * t["P1"] + ch.p01 + ch.p11 * t["P21"] + ch.p10 + ch.p11 * t["P23"]
           + ch.p11 * t["P32"] + ch.p11 * t["P34"] + ch.p10 + ch.p00 * t["P4"] + ch.p01) / 4
    assert sat == pytest.approx(eb.pe_star, rel=1e-14)


def test_perfect_relay_bound():
    r = evaluate(1e-3, 2, 1e12, 1e-14, 0.5, 0.1, 1.5)
    t = r["terms"]
    assert r["p01"] < 1e-12 and r["p10"] < 1e-9
    perfect = 0.25 * (t["P1"] + t["P4"] + t["P21"] + t["P23"] + t["P32"] + t["P34"])
    assert r["pe_star"] == pytest.approx(perfect, rel=1e-8)


def test_p23_equal_variance_limit():
    # upsilon10 = upsilon11 (1 + k), k -> 0: P23 -> Q(n_r, n_r)
    for n_r in (2, 8):
        v11 = 1.0
        for k in (1e-6, 1e-9):
            v = {"00": 1e-3, "10": v11, "11": v11 * (1 + k), "01": 3.0}
            _, r2, _ = bob_thresholds(v, n_r)
            assert reg_upper_gamma(n_r, r2 / v["10"]) == pytest.approx(reg_upper_gamma(n_r, n_r), abs=10 * k * n_r)


def test_p21_independent_of_eta2():
    e2 = np.linspace(0.11, 2.4, 500)
    t = evaluate(1e-3, 4, 10.0, 1e-5, 0.5, 0.1, e2)["terms"]
    assert np.ptp(t["P21"]) == 0.0


def test_alpha_direction_of_outer_terms_reverses_for_large_eta2():
    # P34/P4 fall with alpha only while eta2 <= (4 - eta1)/3
    al = np.linspace(0.05, 0.95, 200)
    t = evaluate(1e-3, 4, 10.0, 1e-5, al, 0.0, 1.6)["terms"]
    assert np.all(np.diff(t["P34"]) > 0)
    t = evaluate(1e-3, 4, 10.0, 1e-5, al, 0.0, 1.2)["terms"]
    assert np.all(np.diff(t["P34"]) < 0)


def test_vectorized_matches_scalar(params30):
    al = np.array([0.3, 0.6, 0.9])
    r = evaluate(params30.n_o, 2, 10.0, 1e-5, al, 0.05, 0.4)
    for i, a in enumerate(al):
        c = complete_constellation(a, 0.05, 0.4)
        assert r["pe_star"][i] == pytest.approx(pe_star(params30, c), rel=1e-15)


@settings(max_examples=150, deadline=None)
@given(snr=st.floats(0, 45), n_r=st.sampled_from([1, 2, 4, 8, 16, 32]),
       alpha=st.floats(0.01, 0.99), eta1=st.floats(0, 0.95), u=st.floats(0.01, 0.99))
def test_invariants_hold_on_random_constellations(snr, n_r, alpha, eta1, u):
    eta2 = eta1 + u * (eta2_upper_bound(alpha, eta1) - eta1)
    c = complete_constellation(alpha, eta1, eta2)
    eb = error_breakdown(SystemParams(snr, n_r=n_r), c)
    v = eb.variances
    assert v["00"] < v["10"] < v["11"] < v["01"]
    assert eb.rho1 < eb.rho2 < eb.rho3
    for p in list(eb.terms.values()) + list(eb.events.values()):
        assert 0.0 <= p <= 1.0
    assert eb.pe <= eb.pe_star + 1e-15
    assert eb.charlie.p10 > eb.charlie.p01
