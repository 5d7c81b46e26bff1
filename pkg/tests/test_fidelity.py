import math

import numpy as np
import pytest
from scipy.linalg import expm

from spinshuttle.dynamics import build_hamiltonian
from spinshuttle.fidelity import (
    FidelityContext,
    average_gate_fidelity,
    entanglement_fidelity,
    excited_population,
    general_entanglement_fidelity,
    purities,
    spin_reduced,
    valley_reduced,
)
from spinshuttle.params import CONSTANTS, PhysicalParams, zeeman_energy

KET_P = np.array([1.0, 1.0]) / math.sqrt(2)
KET_PI = np.array([1.0, 1.0j]) / math.sqrt(2)


def dm(ket):
    return np.outer(ket, np.conj(ket))


def valley_ground(phi):
    return np.array([1.0, -np.exp(1j * phi)]) / math.sqrt(2)


def valley_excited(phi):
    return np.array([1.0, np.exp(1j * phi)]) / math.sqrt(2)


def test_context_requires_positive_frequency():
    with pytest.raises(ValueError):
        FidelityContext(nu_G=0.0, T=1.0)


def test_context_from_params_and_rotation_period():
    p = PhysicalParams(kappa_z=1e-6)
    ctx = FidelityContext.from_params(p, T=100.0)
    assert ctx.nu_G == pytest.approx((zeeman_energy(p) + 2e-6) / CONSTANTS.h)
    # entangled-branch relative rotation: period h/(2 kappa_z) ~ 2.07 us
    period_ns = CONSTANTS.h / (2 * 1e-6)
    assert period_ns == pytest.approx(2068.0, rel=1e-3)


def test_fidelity_initial_plus_state():
    rho = np.kron(dm(valley_ground(0.3)), dm(KET_P))
    ctx = FidelityContext(nu_G=1.0, T=10.0)
    assert entanglement_fidelity(rho, 0.0, ctx) == pytest.approx(1.0, abs=1e-12)


def test_fidelity_fully_dephased():
    rho = np.kron(dm(valley_ground(0.0)), np.eye(2) / 2)
    ctx = FidelityContext(nu_G=1.0, T=10.0)
    assert entanglement_fidelity(rho, 3.0, ctx) == pytest.approx(0.5, abs=1e-12)


def test_fidelity_minus_state():
    minus = np.array([1.0, -1.0]) / math.sqrt(2)
    rho = np.kron(dm(valley_ground(0.0)), dm(minus))
    ctx = FidelityContext(nu_G=1.0, T=10.0)
    assert entanglement_fidelity(rho, 0.0, ctx) == pytest.approx(0.0, abs=1e-12)


def test_general_fidelity_identity_channel():
    outs = [dm(np.array([1.0, 0.0])), dm(np.array([0.0, 1.0])), dm(KET_P), dm(KET_PI)]
    assert general_entanglement_fidelity(*outs) == pytest.approx(1.0, abs=1e-12)


def test_general_fidelity_depolarizing():
    eye = np.eye(2) / 2
    assert general_entanglement_fidelity(eye, eye, eye, eye) == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("ratio", [0.1, 1.0, 3.0])
def test_general_fidelity_pure_dephasing(ratio):
    # off-diagonals shrink by exp(-T/T_phi)
    decay = math.exp(-ratio)

    def dephase(rho):
        out = rho.astype(complex).copy()
        out[0, 1] *= decay
        out[1, 0] *= decay
        return out

    outs = [dephase(dm(k)) for k in (np.array([1.0, 0]), np.array([0, 1.0]), KET_P, KET_PI)]
    assert general_entanglement_fidelity(*outs) == pytest.approx((1 + decay) / 2, abs=1e-12)


def _random_z_commuting_channel(rng, n_segments=6):
    """Segmented evolution commuting with sigma_z: ZZ Hamiltonians plus
    valley decay and spin dephasing, applied to valley-ground x spin input."""
    hbar = CONSTANTS.hbar
    dt = 0.05
    segs = []
    for _ in range(n_segments):
        dr, di = rng.normal(scale=0.02, size=2)
        t1v = rng.uniform(5.0, 50.0)
        tphi = rng.uniform(5.0, 50.0)
        segs.append((dr, di, t1v, tphi))
    phi0 = math.atan2(segs[0][1], segs[0][0])

    def channel(rho_spin):
        rho = np.kron(dm(valley_ground(phi0)), rho_spin)
        for dr, di, t1v, tphi in segs:
            ops = build_hamiltonian(dr, di, PhysicalParams(kappa_z=1e-4))
            U = expm(-1j * ops.H * dt / hbar)
            rho = U @ rho @ U.conj().T
            L = ops.tau_tilde_minus
            pe = L.conj().T @ L
            rho = rho + (dt / t1v) * (L @ rho @ L.conj().T - 0.5 * (pe @ rho + rho @ pe))
            sz = np.diag([1.0, -1.0, 1.0, -1.0])
            rho = rho + (dt / (2 * tphi)) * (sz @ rho @ sz - rho)
        return spin_reduced(rho)

    return channel


@pytest.mark.parametrize("seed", range(50))
def test_z_commuting_reduction(seed):
    rng = np.random.default_rng(seed)
    channel = _random_z_commuting_channel(rng)
    e0 = channel(dm(np.array([1.0, 0.0])))
    e1 = channel(dm(np.array([0.0, 1.0])))
    ep = channel(dm(KET_P))
    epi = channel(dm(KET_PI))
    full = general_entanglement_fidelity(e0, e1, ep, epi)
    reduced = 0.5 + ep[0, 1].real
    assert full == pytest.approx(reduced, abs=1e-10)


def test_average_gate_fidelity():
    assert average_gate_fidelity(1.0, 2) == pytest.approx(1.0)
    assert average_gate_fidelity(0.5, 2) == pytest.approx(2.0 / 3.0)
    assert average_gate_fidelity(0.25, 2) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        average_gate_fidelity(0.9, 1)


def test_average_gate_fidelity_affine_increasing():
    f = np.linspace(0, 1, 17)
    mapped = [average_gate_fidelity(v) for v in f]
    assert np.all(np.diff(mapped) > 0)


def test_excited_population_basis_states():
    phi = 0.7
    spin = dm(KET_P)
    ground = np.kron(dm(valley_ground(phi)), spin)
    excited = np.kron(dm(valley_excited(phi)), spin)
    dr, di = math.cos(phi), math.sin(phi)
    assert excited_population(ground, dr, di) == pytest.approx(0.0, abs=1e-12)
    assert excited_population(excited, dr, di) == pytest.approx(1.0, abs=1e-12)
    mixed = np.kron(np.eye(2) / 2, spin)
    assert excited_population(mixed, dr, di) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        excited_population(ground, 0.0, 0.0)


def test_purities_product_and_mixed():
    rho = np.kron(dm(valley_ground(0.2)), dm(KET_P))
    assert purities(rho) == pytest.approx((1.0, 1.0), abs=1e-12)
    assert purities(np.eye(4) / 4) == pytest.approx((0.25, 0.5), abs=1e-12)


def test_spin_purity_half_entangled():
    # equal-weight valley branches with orthogonal spin states
    up = np.array([1.0, 0.0])
    dn = np.array([0.0, 1.0])
    psi = (np.kron(valley_ground(0.0), up) + np.kron(valley_excited(0.0), dn)) / math.sqrt(2)
    total, spin = purities(dm(psi))
    assert total == pytest.approx(1.0, abs=1e-12)
    assert spin == pytest.approx(0.5, abs=1e-12)


def test_partial_traces_consistent():
    rng = np.random.default_rng(5)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    assert np.trace(spin_reduced(rho)) == pytest.approx(1.0)
    assert np.trace(valley_reduced(rho)) == pytest.approx(1.0)
