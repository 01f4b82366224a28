"""Closed-form link quantities for non-coherent fast-forward FD relaying.

Alice (the victim) sends on-off ASK with amplitude ``sqrt(1 - alpha)`` on the
helper's band. Charlie (the helper) energy-detects her bit and multiplexes the
decision into a four-level ASK constellation::

    (x_hat, y) = (0, 0) -> eps1
                 (1, 0) -> alpha * eta1
                 (1, 1) -> alpha * eta2
                 (0, 1) -> eps2

Bob energy-detects the superposition over ``n_r`` antennas with the joint
dominant decoder (JDD) and three thresholds.

All heavy lifting happens in :func:`evaluate`, which broadcasts over numpy
arrays of ``alpha``/``eta1``/``eta2`` so that dense scans and grid searches
stay vectorized. The dataclass functions below are thin typed wrappers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .specfun import reg_gamma_pair as _gamma_pair

__all__ = [
    "SystemParams",
    "Constellation",
    "CharlieDetection",
    "ErrorBreakdown",
    "LinkModelError",
    "ConstellationError",
    "noise_power",
    "charlie_detection",
    "complete_constellation",
    "eta2_upper_bound",
    "bob_variances",
    "bob_thresholds",
    "error_breakdown",
    "evaluate",
    "pe_exact",
    "pe_star",
]

POWER_TOL = 1e-12
CLAMP_TOL = 1e-9


class LinkModelError(ValueError):
    """Invalid or degenerate link configuration."""


class ConstellationError(LinkModelError):
    """Constellation violates ordering, domain or power constraint."""


def noise_power(snr_db):
    """Noise power ``N_o = 1 / SNR`` for an SNR given in dB."""
    return 10.0 ** (-np.asarray(snr_db, dtype=float) / 10.0) if np.ndim(snr_db) else 10.0 ** (-float(snr_db) / 10.0)


@dataclass(frozen=True)
class SystemParams:
    """Radio and channel configuration.

    ``sigma_ab2`` and ``sigma_cb2`` are normalized to 1 and kept only so the
    vicinity assumption ``sigma_ac2 > sigma_cb2`` can be checked explicitly.
    ``exact_thresholds`` keeps the ``ln(P11/P00)`` prior term in the outer
    JDD thresholds instead of dropping it.
    """

    snr_db: float
    n_r: int = 2
    lambda_sic: float = 1e-5
    sigma_ac2: float = 10.0
    sigma_ab2: float = 1.0
    sigma_cb2: float = 1.0
    exact_thresholds: bool = False

    def __post_init__(self):
        problems = []
        if not np.isfinite(self.snr_db):
            problems.append(f"snr_db must be finite (got {self.snr_db})")
        if int(self.n_r) != self.n_r or self.n_r < 1:
            problems.append(f"n_r must be a positive integer (got {self.n_r})")
        if not self.lambda_sic > 0:
            problems.append(f"lambda_sic must be > 0 (got {self.lambda_sic})")
        if self.sigma_ab2 != 1.0 or self.sigma_cb2 != 1.0:
            problems.append("sigma_ab2 and sigma_cb2 are normalized to 1")
        if not self.sigma_ac2 > self.sigma_cb2:
            problems.append(f"sigma_ac2 must exceed sigma_cb2=1 (got {self.sigma_ac2})")
        if problems:
            raise LinkModelError("; ".join(problems))
        object.__setattr__(self, "n_r", int(self.n_r))

    @property
    def n_o(self) -> float:
        return noise_power(self.snr_db)


def eta2_upper_bound(alpha, eta1):
    """Largest ``eta2`` keeping ``alpha*eta2 < eps2`` once ``eps2`` is eliminated."""
    return 0.5 * (3.0 + 1.0 / alpha - eta1)


@dataclass(frozen=True)
class Constellation:
    """Charlie's four energy levels plus the power split ``alpha``.

    The levels are ``eps1 <= alpha*eta1 < alpha*eta2 < eps2`` and satisfy the
    average-power equality ``(eps1 + alpha*eta1 + alpha*eta2 + eps2) / 4 =
    (1 + alpha) / 2``. ``eps1 == alpha*eta1 == 0`` is allowed since the
    descent starts from ``eta1 = 0``.
    """

    eps1: float
    eps2: float
    eta1: float
    eta2: float
    alpha: float

    def __post_init__(self):
        e1, e2, n1, n2, a = self.eps1, self.eps2, self.eta1, self.eta2, self.alpha
        problems = []
        if not all(np.isfinite(v) for v in (e1, e2, n1, n2, a)):
            raise ConstellationError("constellation values must be finite")
        if not 0.0 < a < 1.0:
            problems.append(f"alpha must lie in (0, 1) (got {a})")
        if e1 < 0 or n1 < 0:
            problems.append("eps1 and eta1 must be non-negative")
        if not 0.0 <= n1 < 1.0:
            problems.append(f"eta1 must lie in [0, 1) (got {n1})")
        if not (e1 <= a * n1 < a * n2 < e2):
            problems.append(
                f"ordering eps1 <= a*eta1 < a*eta2 < eps2 violated "
                f"({e1}, {a * n1}, {a * n2}, {e2})"
            )
        mean = (e1 + a * n1 + a * n2 + e2) / 4.0
        if abs(mean - 0.5 * (1.0 + a)) > POWER_TOL:
            problems.append(f"average power {mean!r} != (1+alpha)/2 = {0.5 * (1 + a)!r}")
        if problems:
            raise ConstellationError("; ".join(problems))

    @property
    def levels(self) -> tuple[float, float, float, float]:
        """Energies for (x_hat, y) = (0,0), (1,0), (1,1), (0,1)."""
        a = self.alpha
        return (self.eps1, a * self.eta1, a * self.eta2, self.eps2)


@dataclass(frozen=True)
class CharlieDetection:
    n_c0: float
    n_c1: float
    tau: float
    p00: float
    p01: float
    p10: float
    p11: float
    nu: float


@dataclass(frozen=True)
class ErrorBreakdown:
    """Everything Bob-side for one (params, constellation) pair.

    ``variances`` is keyed by pair label: ``"00", "10", "11", "01"`` for the
    dominant pairs and ``"~00", "~01", "~10", "~11"`` for the pairs received
    after a relay error (``x_hat != x``).
    """

    charlie: CharlieDetection
    variances: dict
    rho1: float
    rho2: float
    rho3: float
    terms: dict
    events: dict
    pe: float
    pe_star: float
    extra: dict = field(default_factory=dict)


def _nu(n_o, sigma_ac2, lam):
    return (sigma_ac2 - n_o - 0.5 * lam) / (sigma_ac2 + 0.5 * lam)


def _charlie(n_o, sigma_ac2, lam, alpha):
    alpha = np.asarray(alpha, dtype=float)
    si = 0.5 * lam * (1.0 + alpha)
    n_c0 = n_o + si
    n_c1 = sigma_ac2 * (1.0 - alpha) + si + n_o
    if np.any(n_c1 <= n_c0):
        raise LinkModelError("degenerate relay detection: N_C1 <= N_C0")
    # tau = N_C0 N_C1 / (N_C1 - N_C0) * ln(N_C1 / N_C0)
    tau = n_c0 * n_c1 / (n_c1 - n_c0) * np.log(n_c1 / n_c0)
    p01 = np.exp(-tau / n_c0)
    p10 = -np.expm1(-tau / n_c1)
    return n_c0, n_c1, tau, 1.0 - p01, p01, p10, 1.0 - p10


def charlie_detection(params: SystemParams, alpha: float) -> CharlieDetection:
    """Energy detection of Alice's bit at the relay.

    The residual self-interference enters as extra Gaussian noise of power
    ``lambda_sic * (1 + alpha) / 2``.
    """
    if not 0.0 < alpha < 1.0:
        raise LinkModelError(f"alpha must lie in (0, 1) (got {alpha})")
    n_o = params.n_o
    vals = _charlie(n_o, params.sigma_ac2, params.lambda_sic, alpha)
    return CharlieDetection(
        *(float(v) for v in vals), nu=float(_nu(n_o, params.sigma_ac2, params.lambda_sic))
    )


def complete_constellation(alpha: float, eta1: float, eta2: float) -> Constellation:
    """Fill in ``eps1 = 0`` and ``eps2`` from the power equality."""
    if not 0.0 < alpha < 1.0:
        raise ConstellationError(f"alpha must lie in (0, 1) (got {alpha})")
    if not 0.0 <= eta1 < 1.0:
        raise ConstellationError(f"eta1 must lie in [0, 1) (got {eta1})")
    hi = eta2_upper_bound(alpha, eta1)
    if not eta1 < eta2 < hi:
        raise ConstellationError(f"eta2 must lie in ({eta1}, {hi}) (got {eta2})")
    eps2 = 2.0 - alpha * (eta1 + eta2 - 2.0)
    return Constellation(eps1=0.0, eps2=eps2, eta1=eta1, eta2=eta2, alpha=alpha)


def _variances(eps1, eps2, eta1, eta2, alpha, n_o):
    a = alpha
    return {
        "00": eps1 + n_o,
        "10": 1.0 - a + a * eta1 + n_o,
        "11": 1.0 - a + a * eta2 + n_o,
        "01": eps2 + n_o,
        "~10": 1.0 - a + eps1 + n_o,
        "~11": 1.0 - a + eps2 + n_o,
        "~01": a * eta2 + n_o,
        "~00": a * eta1 + n_o,
    }


def bob_variances(c: Constellation, n_o: float) -> dict:
    """Per-antenna variance of Bob's received symbol for all eight cases."""
    if not n_o > 0:
        raise LinkModelError(f"n_o must be > 0 (got {n_o})")
    v = _variances(c.eps1, c.eps2, c.eta1, c.eta2, c.alpha, n_o)
    return {k: float(x) for k, x in v.items()}


def _crossing(va, vb):
    """``va*vb/(va - vb) * ln(va/vb)``, the equal-prior crossing of two Gamma pdfs per unit shape."""
    k = (va - vb) / vb
    if np.any(k == 0):
        raise LinkModelError("singular threshold: adjacent variances are equal")
    return va * np.log1p(k) / k


def _thresholds(v, n_r, log_prior=None):
    r1 = n_r * _crossing(v["00"], v["10"])
    r2 = n_r * _crossing(v["10"], v["11"])
    r3 = n_r * _crossing(v["11"], v["01"])
    if log_prior is not None:
        # log_prior = ln(P11/P00) shifts the two outer boundaries
        r1 = r1 - v["00"] * v["10"] / (v["10"] - v["00"]) * log_prior
        r3 = r3 + v["11"] * v["01"] / (v["01"] - v["11"]) * log_prior
    return r1, r2, r3


def bob_thresholds(variances: dict, n_r: int, log_prior: float | None = None):
    """JDD thresholds ``(rho1, rho2, rho3)`` between adjacent dominant pairs.

    With ``log_prior = ln(P11/P00)`` the outer thresholds keep the prior
    term; ``None`` drops it.
    """
    v = {k: np.asarray(variances[k], dtype=float) for k in ("00", "10", "11", "01")}
    if not (np.all(v["00"] < v["10"]) and np.all(v["10"] < v["11"]) and np.all(v["11"] < v["01"])):
        if np.any(v["00"] == v["10"]) or np.any(v["10"] == v["11"]) or np.any(v["11"] == v["01"]):
            raise LinkModelError("singular threshold: adjacent variances are equal")
        raise LinkModelError("dominant variances must be strictly increasing")
    if n_r < 1:
        raise LinkModelError(f"n_r must be >= 1 (got {n_r})")
    r = _thresholds(v, n_r, log_prior)
    return tuple(float(x) if np.ndim(x) == 0 else x for x in r)


def evaluate(n_o, n_r, sigma_ac2, lambda_sic, alpha, eta1, eta2, eps1=0.0, eps2=None, exact_thresholds=False):
    """Vectorized core: every event and term probability for broadcast inputs.

    ``eps2`` defaults to the value implied by the power equality. Returns a
    dict of arrays with keys for Charlie's probabilities, the variances,
    thresholds, term probabilities (``P1 ... P4C``), the six events,
    ``pe`` and ``pe_star``.
    """
    alpha = np.asarray(alpha, dtype=float)
    eta1 = np.asarray(eta1, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    if eps2 is None:
        eps2 = 2.0 - alpha * (eta1 + eta2 - 2.0) - eps1
    n_c0, n_c1, tau, p00, p01, p10, p11 = _charlie(n_o, sigma_ac2, lambda_sic, alpha)
    v = _variances(eps1, eps2, eta1, eta2, alpha, n_o)
    log_prior = np.log(p11 / p00) if exact_thresholds else None
    r1, r2, r3 = _thresholds(v, n_r, log_prior)

    # one batched gamma call: (term, ratio, use upper tail)
    spec = (
        ("P1", r1 / v["00"], True),
        ("P1C", r1 / v["~00"], True),
        ("P21", r1 / v["10"], False),
        ("P21C", r1 / v["~10"], False),
        ("P23", r2 / v["10"], True),
        ("P32", r2 / v["11"], False),
        ("P34", r3 / v["11"], True),
        ("P34C", r3 / v["~11"], True),
        ("P4", r3 / v["01"], False),
        ("P4C", r3 / v["~01"], False),
    )
    xs = np.stack(np.broadcast_arrays(*(s[1] for s in spec)))
    lower, upper = _gamma_pair(n_r, xs)
    t = {name: (upper[i] if up else lower[i]) for i, (name, _, up) in enumerate(spec)}
    ev = {
        "00>10": p00 * t["P1"] + p01 * t["P1C"],
        "10>00": p11 * t["P21"] + p10 * t["P21C"],
        "10>11": p11 * t["P23"],
        "11>10": p11 * t["P32"],
        "11>01": p11 * t["P34"] + p10 * t["P34C"],
        "01>11": p00 * t["P4"] + p01 * t["P4C"],
    }
    pe = 0.25 * sum(ev.values())
    star = 0.25 * (p00 * (t["P1"] + t["P4"]) + 2.0 * p01 + 2.0 * p10
                   + p11 * (t["P21"] + t["P23"] + t["P32"] + t["P34"]))
    out = {
        "n_c0": n_c0, "n_c1": n_c1, "tau": tau,
        "p00": p00, "p01": p01, "p10": p10, "p11": p11,
        "variances": v, "rho1": r1, "rho2": r2, "rho3": r3,
        "terms": t, "events": ev,
        "pe": _clamp(pe), "pe_star": _clamp(star),
    }
    return out


def _clamp(p):
    p = np.asarray(p, dtype=float)
    if np.any(p < -CLAMP_TOL) or np.any(p > 1.0 + CLAMP_TOL):
        raise LinkModelError(f"probability outside [0, 1] beyond rounding: {p.min()}..{p.max()}")
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def error_breakdown(params: SystemParams, c: Constellation) -> ErrorBreakdown:
    """Full error accounting at Bob for one constellation."""
    r = evaluate(params.n_o, params.n_r, params.sigma_ac2, params.lambda_sic,
                 c.alpha, c.eta1, c.eta2, eps1=c.eps1, eps2=c.eps2,
                 exact_thresholds=params.exact_thresholds)
    charlie = CharlieDetection(
        n_c0=_scalar(r["n_c0"]), n_c1=_scalar(r["n_c1"]), tau=_scalar(r["tau"]),
        p00=_scalar(r["p00"]), p01=_scalar(r["p01"]), p10=_scalar(r["p10"]), p11=_scalar(r["p11"]),
        nu=float(_nu(params.n_o, params.sigma_ac2, params.lambda_sic)),
    )
    return ErrorBreakdown(
        charlie=charlie,
        variances={k: _scalar(x) for k, x in r["variances"].items()},
        rho1=_scalar(r["rho1"]), rho2=_scalar(r["rho2"]), rho3=_scalar(r["rho3"]),
        terms={k: _clamp(x) for k, x in r["terms"].items()},
        events={k: _clamp(x) for k, x in r["events"].items()},
        pe=r["pe"], pe_star=r["pe_star"],
    )


def pe_exact(params: SystemParams, c: Constellation) -> float:
    """Average pair-error probability at Bob over the six adjacent events."""
    return error_breakdown(params, c).pe


def pe_star(params: SystemParams, c: Constellation) -> float:
    """Upper bound on :func:`pe_exact` with every complement term set to 1."""
    return error_breakdown(params, c).pe_star
