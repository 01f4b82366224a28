"""Fast-fading Monte Carlo simulation of the relayed link.

Every symbol draws fresh Rayleigh coefficients. The chain per symbol is

1. Alice's bit ``x`` and Charlie's bit ``y`` (uniform).
2. Charlie energy-detects ``x`` from ``h_AC sqrt(1-alpha) x + s + n_C`` where
   the residual self-interference ``s`` is complex Gaussian with power
   ``lambda_sic (1 + alpha) / 2``.
3. Charlie sends the level picked by ``(x_hat, y)``; Bob receives
   ``h_AB sqrt(1-alpha) x + h_CB sqrt(level) + n_B`` on ``n_r`` antennas and
   decodes the pair with the three JDD thresholds.

On the jammed band Alice puts ``alpha`` and Charlie ``1 - alpha`` whenever
their (decoded) bit is 1, so the per-symbol energy there equals the old
on-off pattern exactly when ``x_hat == x``.

Trials are processed in fixed-size blocks; block ``k`` of run ``r`` draws
from ``SeedSequence(seed, spawn_key=(r, k))``, which keeps results
independent of how blocks are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .linkmodel import Constellation, SystemParams, _crossing, error_breakdown

__all__ = [
    "SimConfig",
    "SimResult",
    "ChainDraw",
    "jdd_classify",
    "bob_energy",
    "draw_chain",
    "simulate_ncf2fd",
    "simulate_jammed_baseline",
]

BLOCK = 1 << 16

# region index -> decoded (x_B, y_B)
_REGION_X = np.array([0, 1, 1, 0])
_REGION_Y = np.array([0, 0, 1, 1])


@dataclass(frozen=True)
class SimConfig:
    trials: int = 1_000_000
    seed: int = 42
    jam_power: float = 10.0
    exact_thresholds: bool = False
    run_index: int = 0

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer (got {self.trials})")
        if not self.jam_power >= 0:
            raise ValueError(f"jam_power must be >= 0 (got {self.jam_power})")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass
class SimResult:
    joint_ser: float
    alice_ber: float
    charlie_ber: float
    charlie_relay_ber: float
    fab_mean_power: float
    fab_fluctuation_rate: float
    fcb_mean_power: float
    trials: int
    confidence: dict = field(default_factory=dict)


class ChainDraw(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    x_hat: np.ndarray
    energy: np.ndarray
    fab_energy: np.ndarray
    fcb_energy: np.ndarray


def jdd_classify(energy, thresholds):
    """Map Bob's energy statistic to the decoded pair ``(x_B, y_B)``.

    Regions are ``[0, rho1) -> (0,0)``, ``[rho1, rho2) -> (1,0)``,
    ``[rho2, rho3) -> (1,1)`` and ``[rho3, inf) -> (0,1)``; a value equal to
    a threshold goes to the upper region. Works on scalars and arrays.
    """
    rho = np.asarray(thresholds, dtype=float)
    region = np.searchsorted(rho, energy, side="right")
    if np.ndim(region) == 0:
        return int(_REGION_X[region]), int(_REGION_Y[region])
    return _REGION_X[region], _REGION_Y[region]


def _cn(rng, shape, var):
    """Circular complex Gaussian samples with total variance ``var``."""
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(np.asarray(var) / 2.0)


def _rng(seed, run_index, block):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run_index, block)))


def bob_energy(params: SystemParams, c: Constellation, x, x_hat, y, rng) -> np.ndarray:
    """Bob's summed energy over ``n_r`` antennas for given bits and relay decisions.

    Conditioned on ``(x, x_hat, y)`` the result is Gamma distributed with
    shape ``n_r`` and scale equal to the matching variance of
    :func:`~ncf2fd.linkmodel.bob_variances`.
    """
    x, x_hat, y = np.broadcast_arrays(np.asarray(x), np.asarray(x_hat), np.asarray(y))
    n, n_r = x.size, params.n_r
    # level index: (x_hat, y) = (0,0)->0, (1,0)->1, (1,1)->2, (0,1)->3
    level = np.array(c.levels)[np.where(x_hat == 0, 3 * y, 1 + y)].reshape(-1)
    amp_x = np.sqrt(1.0 - c.alpha) * x.reshape(-1)
    r_b = (_cn(rng, (n, n_r), params.sigma_ab2) * amp_x[:, None]
           + _cn(rng, (n, n_r), params.sigma_cb2) * np.sqrt(level)[:, None]
           + _cn(rng, (n, n_r), params.n_o))
    return np.einsum("ij,ij->i", r_b.real, r_b.real) + np.einsum("ij,ij->i", r_b.imag, r_b.imag)


def draw_chain(params: SystemParams, c: Constellation, n: int, rng, tau: float) -> ChainDraw:
    """Draw ``n`` independent symbols through the whole chain."""
    a = c.alpha
    x = rng.integers(0, 2, n)
    y = rng.integers(0, 2, n)

    r_c = (_cn(rng, (n,), params.sigma_ac2) * np.sqrt(1.0 - a) * x
           + _cn(rng, (n,), 0.5 * params.lambda_sic * (1.0 + a))
           + _cn(rng, (n,), params.n_o))
    x_hat = (np.abs(r_c) ** 2 > tau).astype(np.int64)
    energy = bob_energy(params, c, x, x_hat, y, rng)

    level = np.array(c.levels)[np.where(x_hat == 0, 3 * y, 1 + y)]
    # exactly the on-off value whenever x_hat == x
    fab = np.where(x == x_hat, x.astype(float), a * x + (1.0 - a) * x_hat)
    fcb = (1.0 - a) * x + level
    return ChainDraw(x, y, x_hat, energy, fab, fcb)


def _stderr_rate(k, n):
    p = k / n
    return float(np.sqrt(p * (1.0 - p) / n))


def simulate_ncf2fd(params: SystemParams, c: Constellation, sim: SimConfig | None = None) -> SimResult:
    """Monte Carlo error rates and jammed-band power for one constellation."""
    sim = sim or SimConfig()
    if sim.exact_thresholds != params.exact_thresholds:
        from dataclasses import replace
        params = replace(params, exact_thresholds=sim.exact_thresholds)
    eb = error_breakdown(params, c)
    tau = eb.charlie.tau
    rho = (eb.rho1, eb.rho2, eb.rho3)

    n_joint = n_alice = n_charlie = n_relay = n_fluct = 0
    s_fab = s_fab2 = s_fcb = s_fcb2 = 0.0
    done, block = 0, 0
    while done < sim.trials:
        n = min(BLOCK, sim.trials - done)
        d = draw_chain(params, c, n, _rng(sim.seed, sim.run_index, block), tau)
        xb, yb = jdd_classify(d.energy, rho)
        ex, ey = xb != d.x, yb != d.y
        n_joint += int(np.count_nonzero(ex | ey))
        n_alice += int(np.count_nonzero(ex))
        n_charlie += int(np.count_nonzero(ey))
        relay_err = d.x_hat != d.x
        n_relay += int(np.count_nonzero(relay_err))
        # pre-countermeasure pattern on the jammed band: energy 1 iff x == 1
        n_fluct += int(np.count_nonzero(d.fab_energy != d.x))
        s_fab += float(d.fab_energy.sum())
        s_fab2 += float(np.dot(d.fab_energy, d.fab_energy))
        s_fcb += float(d.fcb_energy.sum())
        s_fcb2 += float(np.dot(d.fcb_energy, d.fcb_energy))
        done += n
        block += 1

    N = sim.trials
    fab_mean, fcb_mean = s_fab / N, s_fcb / N
    fab_sd = np.sqrt(max(s_fab2 / N - fab_mean**2, 0.0) / N)
    fcb_sd = np.sqrt(max(s_fcb2 / N - fcb_mean**2, 0.0) / N)
    return SimResult(
        joint_ser=n_joint / N,
        alice_ber=n_alice / N,
        charlie_ber=n_charlie / N,
        charlie_relay_ber=n_relay / N,
        fab_mean_power=fab_mean,
        fab_fluctuation_rate=n_fluct / N,
        fcb_mean_power=fcb_mean,
        trials=N,
        confidence={
            "joint_ser": _stderr_rate(n_joint, N),
            "alice_ber": _stderr_rate(n_alice, N),
            "charlie_ber": _stderr_rate(n_charlie, N),
            "charlie_relay_ber": _stderr_rate(n_relay, N),
            "fab_fluctuation_rate": _stderr_rate(n_fluct, N),
            "fab_mean_power": float(fab_sd),
            "fcb_mean_power": float(fcb_sd),
        },
    )


def simulate_jammed_baseline(params: SystemParams, sim: SimConfig | None = None) -> SimResult:
    """Alice alone on the jammed band, no relaying.

    On-off keying with energies {0, 1}, per-antenna noise ``N_o + J`` and a
    single energy threshold between variances ``N_o + J`` and ``1 + N_o + J``.
    Only ``alice_ber`` and the band power are meaningful; relay fields are 0.
    """
    sim = sim or SimConfig()
    n_r = params.n_r
    noise = params.n_o + sim.jam_power
    v0, v1 = noise, params.sigma_ab2 + noise
    thr = float(n_r * _crossing(v0, v1))

    n_err = 0
    s_fab = s_fab2 = 0.0
    done, block = 0, 0
    while done < sim.trials:
        n = min(BLOCK, sim.trials - done)
        rng = _rng(sim.seed, sim.run_index, block)
        x = rng.integers(0, 2, n)
        r = _cn(rng, (n, n_r), params.sigma_ab2) * x[:, None] + _cn(rng, (n, n_r), noise)
        e = np.einsum("ij,ij->i", r.real, r.real) + np.einsum("ij,ij->i", r.imag, r.imag)
        n_err += int(np.count_nonzero((e >= thr).astype(np.int64) != x))
        fab = x.astype(float)
        s_fab += float(fab.sum())
        s_fab2 += float(np.dot(fab, fab))
        done += n
        block += 1

    N = sim.trials
    fab_mean = s_fab / N
    fab_sd = np.sqrt(max(s_fab2 / N - fab_mean**2, 0.0) / N)
    return SimResult(
        joint_ser=n_err / N,
        alice_ber=n_err / N,
        charlie_ber=0.0,
        charlie_relay_ber=0.0,
        fab_mean_power=fab_mean,
        fab_fluctuation_rate=0.0,
        fcb_mean_power=0.0,
        trials=N,
        confidence={"alice_ber": _stderr_rate(n_err, N), "joint_ser": _stderr_rate(n_err, N),
                    "fab_mean_power": float(fab_sd)},
    )
