"""Transport fidelity measures and state observables.

The transported spin is compared against an ideal frame precessing at
nu_G = (g_bar mu_B B_z + 2 kappa_z)/h; the comparison unitary is the spin
rotation generated by (h nu_G / 2) sigma_z, which makes the fidelity equal
to one for ideal (flat-landscape, dissipation-free) transport.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import CONSTANTS, Constants, PhysicalParams

__all__ = [
    "FidelityContext",
    "entanglement_fidelity",
    "general_entanglement_fidelity",
    "average_gate_fidelity",
    "excited_population",
    "purities",
    "spin_reduced",
    "valley_reduced",
]


@dataclass(frozen=True)
class FidelityContext:
    """Reference-frame precession for the fidelity measure."""

    nu_G: float   # GHz
    T: float      # total shuttling time (ns)

    def __post_init__(self):
        if self.nu_G <= 0:
            raise ValueError("reference frequency must be positive")

    @classmethod
    def from_params(
        cls, params: PhysicalParams, T: float, constants: Constants = CONSTANTS
    ) -> "FidelityContext":
        ez = params.g_bar * constants.mu_B * params.B_z
        nu = (ez + 2.0 * params.kappa_z_effective) / constants.h
        return cls(nu_G=nu, T=T)

    def theta(self, t: float) -> float:
        """Accumulated reference rotation angle 2 pi nu_G t."""
        return 2.0 * math.pi * self.nu_G * t


def spin_reduced(rho: np.ndarray) -> np.ndarray:
    """Partial trace over the valley (basis index 2*i_v + i_s)."""
    rho = np.asarray(rho)
    return rho[:2, :2] + rho[2:, 2:]


def valley_reduced(rho: np.ndarray) -> np.ndarray:
    """Partial trace over the spin."""
    rho = np.asarray(rho)
    return np.array(
        [
            [rho[0, 0] + rho[1, 1], rho[0, 2] + rho[1, 3]],
            [rho[2, 0] + rho[3, 1], rho[2, 2] + rho[3, 3]],
        ]
    )


def entanglement_fidelity(
    rho: np.ndarray, t: float, ctx: FidelityContext, clamp: bool = False
) -> float:
    """F = 1/2 + Re <0| V^dag rho_S V |1> with V = exp(-i pi nu_G t sigma_z).

    Valid for states evolved from the valley ground times |+><+| initial
    condition (the Z symmetry of the dynamics reduces the four-state
    expression to this single matrix element).  The raw value may fall
    marginally outside [0, 1]; set ``clamp`` for reporting.
    """
    rho_s = spin_reduced(rho)
    theta = ctx.theta(t)
    f = 0.5 + (rho_s[0, 1] * complex(math.cos(theta), math.sin(theta))).real
    if clamp:
        f = min(1.0, max(0.0, f))
    return float(f)


def general_entanglement_fidelity(e0, e1, ep, epi) -> float:
    """Entanglement fidelity of a qubit channel from four evolved states.

    Arguments are the channel outputs for inputs |0><0|, |1><1|, |+><+| and
    |+i><+i|; works for any channel, with no symmetry assumption.
    """
    e0 = np.asarray(e0)
    e1 = np.asarray(e1)
    ep = np.asarray(ep)
    epi = np.asarray(epi)
    eid = 0.5 * (e0 + e1)
    val = (
        e0[0, 0]
        + e1[1, 1]
        + ep[0, 1] + 1j * epi[0, 1] - (1 + 1j) * eid[0, 1]
        + ep[1, 0] - 1j * epi[1, 0] - (1 - 1j) * eid[1, 0]
    )
    return float(val.real) / 4.0


def average_gate_fidelity(f_ent: float, d: int = 2) -> float:
    """(d F_ent + 1) / (d + 1)."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    return (d * f_ent + 1.0) / (d + 1.0)


def excited_population(rho: np.ndarray, delta_re: float, delta_im: float) -> float:
    """Population of the local excited valley state |e> at coupling Delta."""
    ev = math.hypot(delta_re, delta_im)
    if ev == 0.0:
        raise ValueError("local valley basis undefined at E_V = 0")
    eip = complex(delta_re / ev, delta_im / ev)
    rho_v = valley_reduced(rho)
    return float(0.5 * (rho_v[0, 0].real + rho_v[1, 1].real) + (eip * rho_v[0, 1]).real)


def purities(rho: np.ndarray) -> tuple[float, float]:
    """(tr rho^2, tr rho_S^2)."""
    rho = np.asarray(rho)
    total = float(np.sum(np.abs(rho) ** 2).real)
    rho_s = spin_reduced(rho)
    spin = float(np.sum(np.abs(rho_s) ** 2).real)
    return total, spin
