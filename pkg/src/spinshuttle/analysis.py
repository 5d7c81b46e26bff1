"""Closed-form diagnostics and ensemble statistics.

Motional narrowing of quasistatic spin noise, the pure-dephasing channel
fidelity, the spin-valley hotspot relaxation bound, dot-size helpers and
percentile aggregation over landscape ensembles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .dynamics import DEFAULT_STEP_POLICY, StepPolicy, timestep_for_speed
from .landscape import ValleyLandscape
from .params import CONSTANTS, Constants

__all__ = [
    "HotspotParams",
    "EnsembleStats",
    "motional_narrowing_Tphi",
    "dephasing_channel_fidelity",
    "hotspot_rate",
    "hotspot_infidelity",
    "qd_sigma_from_orbital",
    "envelope_overlap",
    "entangled_spin_purity",
    "ensemble_percentiles",
]


@dataclass(frozen=True)
class HotspotParams:
    """Spin relaxation at spin-valley near-degeneracies."""

    Gamma_v: float = 1e-5     # valley decay rate (1/ns), default 1/(100 us)
    Delta_so: float = 6.0     # spin-valley mixing strength (ueV)
    E_S: float = 2.31535      # spin splitting (ueV), 20 mT at g = 2

    def __post_init__(self):
        if self.Gamma_v <= 0 or self.Delta_so <= 0 or self.E_S <= 0:
            raise ValueError("hotspot parameters must be positive")


def motional_narrowing_Tphi(v: float, T2_star: float, l_c: float) -> float:
    """Effective moving-spin dephasing time v (T2*)^2 / (2 l_c) in ns.

    v in m/s (= nm/ns), T2_star in ns, l_c in nm.  The quasistatic noise a
    moving spin samples averages out over the noise coherence length, which
    converts the static T2* into this speed-proportional dephasing time.
    """
    if v <= 0:
        raise ValueError("motional narrowing requires motion (v > 0)")
    if T2_star <= 0 or l_c <= 0:
        raise ValueError("T2_star and l_c must be positive")
    return v * T2_star * T2_star / (2.0 * l_c)


def dephasing_channel_fidelity(T: float, T_phi: float) -> float:
    """Entanglement fidelity (1 + exp(-T/T_phi)) / 2 of a pure-dephasing channel."""
    if T_phi <= 0:
        raise ValueError("T_phi must be positive")
    return 0.5 * (1.0 + math.exp(-T / T_phi))


def hotspot_rate(delta: float, hp: HotspotParams) -> float:
    """Spin decay rate at detuning delta = E_V - E_S from the hotspot (1/ns).

    (1 - |delta| / sqrt(delta^2 + Delta_so^2)) * Gamma_v / 2; maximal (half
    the valley rate) at zero detuning, falling off over Delta_so.
    """
    return (1.0 - abs(delta) / math.hypot(delta, hp.Delta_so)) * hp.Gamma_v / 2.0


def hotspot_infidelity(
    landscape: ValleyLandscape,
    v: float,
    hp: HotspotParams,
    dt_ps: float | None = None,
    policy: StepPolicy = DEFAULT_STEP_POLICY,
) -> float:
    """Transport infidelity bound from hotspot spin relaxation.

    Accumulates the local spin decay rate along the constant-speed
    trajectory and evaluates the relaxation-channel entanglement fidelity
    F = (1/4) (1 + exp(-sum_j Gamma_j dt / 2))^2; returns 1 - F.  The
    mechanism stays outside the master equation; this is a post-hoc bound.
    """
    if dt_ps is None:
        dt_ps = timestep_for_speed(v, policy)
    dt = dt_ps * 1e-3
    L = landscape.x_max
    T = L / v
    n = max(1, math.ceil(T / dt - 1e-9))
    t = dt * np.arange(1, n + 1)
    t[-1] = T
    x = np.minimum(v * t, L)
    ev_ueV = landscape.valley_splitting(x) * 1e3
    delta = ev_ueV - hp.E_S
    rates = (1.0 - np.abs(delta) / np.hypot(delta, hp.Delta_so)) * hp.Gamma_v / 2.0
    # the last (possibly shortened) segment carries its actual duration
    seg = np.full(n, dt)
    seg[-1] = T - (n - 1) * dt
    total = float(np.sum(rates * seg))
    f = 0.25 * (1.0 + math.exp(-total / 2.0)) ** 2
    return 1.0 - f


def qd_sigma_from_orbital(
    E0: float, m_star_rel: float = 0.19, constants: Constants = CONSTANTS
) -> float:
    """Dot size (nm) from the orbital splitting E0 (meV): hbar/sqrt(2 m* E0)."""
    if E0 <= 0:
        raise ValueError("orbital splitting must be positive")
    return math.sqrt(constants.hbar2_over_2m_e / (m_star_rel * E0))


def envelope_overlap(d: float, sigma: float) -> float:
    """Shared-volume fraction of two 2D Gaussian dots a distance d apart."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if d < 0:
        raise ValueError("distance must be non-negative")
    return 1.0 - float(erf(d / (2.0 * math.sqrt(2.0) * sigma)))


def entangled_spin_purity(
    alpha_sq: float, t: float, kappa_z: float, constants: Constants = CONSTANTS
) -> float:
    """Spin purity of a pure valley-spin state with ground population alpha_sq.

    1/2 (1 + cos^2(2 kappa_z t / hbar) + (alpha^2 - beta^2)^2
    sin^2(2 kappa_z t / hbar)) with beta^2 = 1 - alpha^2.
    """
    if not 0.0 <= alpha_sq <= 1.0:
        raise ValueError("alpha_sq must lie in [0, 1]")
    angle = 2.0 * kappa_z * t / constants.hbar
    diff = alpha_sq - (1.0 - alpha_sq)
    return 0.5 * (1.0 + math.cos(angle) ** 2 + diff**2 * math.sin(angle) ** 2)


@dataclass(frozen=True)
class EnsembleStats:
    """Percentiles over the seed axis; values has shape (n_quantiles, ...)."""

    quantiles: tuple[float, ...]
    values: np.ndarray

    def quantile(self, q: float) -> np.ndarray:
        return self.values[self.quantiles.index(q)]


def ensemble_percentiles(values, quantiles=(25.0, 50.0, 75.0)) -> EnsembleStats:
    """Linear-interpolation percentiles over the first (seed) axis."""
    values = np.asarray(values, dtype=float)
    if values.size == 0 or values.shape[0] == 0:
        raise ValueError("need at least one seed")
    quantiles = tuple(float(q) for q in quantiles)
    table = np.percentile(values, quantiles, axis=0)
    return EnsembleStats(quantiles=quantiles, values=table)
