"""Joint valley-spin open-system dynamics along a moving quantum dot.

The 4-level state (valley tensor spin, valley index outer) is propagated in
piecewise-constant segments: the step Hamiltonian is sampled at the segment
midpoint, its exact exponential is applied, and the dissipators (valley
relaxation toward the local ground state, optional spin pure dephasing)
follow as a first-order Euler update.  Heavy lifting happens in the
compiled kernels of :mod:`spinshuttle._kernels`.

Conventions: basis index i = 2*i_v + i_s; sigma_z eigenvalue +1 for
i_s = 0 (spin up); the local valley eigenstates are
|e/g> = (|+k0> +- e^{i phi_V} |-k0>)/sqrt(2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .landscape import ValleyLandscape
from .params import CONSTANTS, Constants, PhysicalParams, params_digest
from .trajectory import ShuttleTrajectory

__all__ = [
    "LocalOperators",
    "StepPolicy",
    "DEFAULT_STEP_POLICY",
    "SimulationResult",
    "build_hamiltonian",
    "timestep_for_speed",
    "propagate_step",
    "initial_state",
    "simulate",
    "save_result",
    "load_result",
    "lindblad_rhs",
]

RESULT_FORMAT_VERSION = 1

# Euler dissipative update accuracy guard
MAX_DT_OVER_T1V = 1e-3

_SIGMA_Z = np.diag([1.0, -1.0, 1.0, -1.0]).astype(complex)


@dataclass(frozen=True)
class LocalOperators:
    """Position-local Hamiltonian and valley operators (4x4, meV)."""

    H: np.ndarray
    tau_tilde_z: np.ndarray
    tau_tilde_minus: np.ndarray
    phi_V: float


def build_hamiltonian(
    delta_re: float,
    delta_im: float,
    params: PhysicalParams,
    constants: Constants = CONSTANTS,
) -> LocalOperators:
    """Assemble H = (E_Z/2) s_z + D_r t_x + D_i t_y - kappa_z tz s_z.

    The spectrum is s E_Z/2 + v E_V/2 - kappa_z v s for s, v = +-1.  For
    Delta = 0 the valley phase defaults to 0.
    """
    ez = params.g_bar * constants.mu_B * params.B_z
    kz = params.kappa_z_effective
    phi = math.atan2(delta_im, delta_re) if (delta_re, delta_im) != (0.0, 0.0) else 0.0
    tau_x = np.kron([[0, 1], [1, 0]], np.eye(2)).astype(complex)
    tau_y = np.kron([[0, -1j], [1j, 0]], np.eye(2)).astype(complex)
    tz = math.cos(phi) * tau_x + math.sin(phi) * tau_y
    eiphi = complex(math.cos(phi), math.sin(phi))
    tminus = 0.5 * np.kron([[1, eiphi.conjugate()], [-eiphi, -1]], np.eye(2)).astype(complex)
    H = (
        0.5 * ez * _SIGMA_Z
        + delta_re * tau_x
        + delta_im * tau_y
        - kz * (tz @ _SIGMA_Z)
    )
    return LocalOperators(H=H, tau_tilde_z=tz, tau_tilde_minus=tminus, phi_V=phi)


@dataclass(frozen=True)
class StepPolicy:
    """Piecewise-constant step size versus average speed.

    dt = dt_fast for v >= v_fast, dt_mid for v_mid <= v < v_fast,
    dt_slow for v_crawl < v < v_mid, dt_crawl for v <= v_crawl (ps).
    """

    v_fast: float = 50.0
    v_mid: float = 5.0
    v_crawl: float = 0.2
    dt_fast: float = 0.5
    dt_mid: float = 5.0
    dt_slow: float = 10.0
    dt_crawl: float = 50.0

    def dt_ps(self, v: float) -> float:
        if v <= 0:
            raise ValueError("speed must be positive")
        if v >= self.v_fast:
            return self.dt_fast
        if v >= self.v_mid:
            return self.dt_mid
        if v > self.v_crawl:
            return self.dt_slow
        return self.dt_crawl


DEFAULT_STEP_POLICY = StepPolicy()


def timestep_for_speed(v: float, policy: StepPolicy = DEFAULT_STEP_POLICY) -> float:
    """Step size in ps for an average speed in m/s."""
    return policy.dt_ps(v)


def initial_state(landscape: ValleyLandscape, x: float = 0.0) -> np.ndarray:
    """Local valley ground state at x, spin |+><+|."""
    dr, di, _, _ = landscape.evaluate(x)
    phi = math.atan2(float(di), float(dr))
    eiphi = complex(math.cos(phi), math.sin(phi))
    psi = 0.5 * np.array([1.0, 1.0, -eiphi, -eiphi], dtype=complex)
    return np.outer(psi, psi.conjugate())


def propagate_step(
    rho: np.ndarray,
    x_mid: float,
    dt_ps: float,
    landscape: ValleyLandscape,
    params: PhysicalParams,
    constants: Constants = CONSTANTS,
    t_phi_ns: float | None = None,
) -> np.ndarray:
    """One midpoint step: exact unitary, then Euler dissipative update.

    Returns a new density matrix; ``t_phi_ns`` enables spin dephasing at the
    given rate (otherwise none is applied here).
    """
    dr, di, _, _ = landscape.evaluate(x_mid)
    dt = dt_ps * 1e-3
    ez = params.g_bar * constants.mu_B * params.B_z
    kz = params.kappa_z_effective
    out = np.array(rho, dtype=complex, copy=True)
    if dt == 0.0:
        return out
    work = [np.zeros((4, 4), dtype=complex) for _ in range(5)]
    g_relax = dt / params.T1v if np.isfinite(params.T1v) else 0.0
    f_deph = dt / t_phi_ns if t_phi_ns else 0.0
    tr = _kernels.step_inplace(
        out, float(dr), float(di), dt, ez, kz, constants.hbar,
        g_relax, f_deph, *work,
    )
    if not math.isfinite(tr):
        raise FloatingPointError("state became non-finite during the step")
    return out


@dataclass
class SimulationResult:
    """Recorded observables of one shuttling run plus the final state."""

    t_ns: np.ndarray
    x_nm: np.ndarray
    infidelity: np.ndarray
    p_excited: np.ndarray
    purity_total: np.ndarray
    purity_spin: np.ndarray
    rho_final: np.ndarray
    final_infidelity: float
    metadata: dict = field(default_factory=dict)

    @property
    def final_spin_purity(self) -> float:
        return float(self.purity_spin[-1])


def _motional_narrowing_tphi(v: float, t2_star: float, l_c: float) -> float:
    # effective dephasing time for a spin moving through quasistatic noise
    return v * t2_star * t2_star / (2.0 * l_c)


def _spline_tables(landscape: ValleyLandscape):
    x, cre, cim = landscape.spline_coefficients()
    h = x[1] - x[0]
    if not np.allclose(np.diff(x), h, rtol=1e-9, atol=1e-12):
        raise ValueError("propagation requires uniformly spaced landscape samples")
    return float(x[0]), float(h), x.size - 1, np.ascontiguousarray(cre), np.ascontiguousarray(cim)


def _step_layout(T: float, dt: float):
    n = max(1, math.ceil(T / dt - 1e-9))
    dt_last = T - (n - 1) * dt
    return n, dt_last


def _check_domain(traj: ShuttleTrajectory, landscape: ValleyLandscape, n, dt, dt_last):
    # midpoint and record positions must stay inside [0, L] (and the spline range)
    t_mid = dt * (np.arange(n - 1) + 0.5) if n > 1 else np.empty(0)
    t_all = np.concatenate([t_mid, [(n - 1) * dt + 0.5 * dt_last, traj.T]])
    traj.check_in_domain(t_all)
    if traj.L > landscape.x_max + 1e-9 or landscape.x_min > 1e-9:
        raise ValueError("landscape does not cover the trajectory range")


def simulate(
    landscape: ValleyLandscape,
    trajectory: ShuttleTrajectory,
    params: PhysicalParams,
    policy: StepPolicy = DEFAULT_STEP_POLICY,
    record_points: int = 1000,
    record_every: int | None = None,
    initial_rho: np.ndarray | None = None,
    constants: Constants = CONSTANTS,
) -> SimulationResult:
    """Propagate the initial state along the trajectory and record observables.

    The initial state is the local valley ground at x(0) with spin |+><+|
    (sufficient for the fidelity trace by Z symmetry) unless ``initial_rho``
    is given.  Records ``record_points`` roughly uniformly spaced points
    (or every ``record_every`` steps) plus the final step.
    """
    dt = timestep_for_speed(trajectory.v, policy) * 1e-3  # ps -> ns
    if dt / params.T1v > MAX_DT_OVER_T1V:
        raise ValueError(
            f"dt/T1v = {dt / params.T1v:.2e} exceeds {MAX_DT_OVER_T1V}; "
            "use a finer step policy for this valley lifetime"
        )
    n, dt_last = _step_layout(trajectory.T, dt)
    _check_domain(trajectory, landscape, n, dt, dt_last)

    if record_every is None:
        record_every = max(1, n // max(1, record_points))
    rec_steps = np.unique(np.concatenate([np.arange(0, n, record_every), [n]])).astype(np.int64)
    n_rec = rec_steps.size
    rec = [np.empty(n_rec) for _ in range(6)]

    rho = initial_state(landscape) if initial_rho is None else np.array(initial_rho, dtype=complex)
    ez = params.g_bar * constants.mu_B * params.B_z
    kz = params.kappa_z_effective
    inv_t1v = 1.0 / params.T1v if np.isfinite(params.T1v) else 0.0
    if params.dephasing_enabled:
        t_phi = _motional_narrowing_tphi(trajectory.v, params.T2_star, params.l_c)
        inv_tphi = 1.0 / t_phi
    else:
        inv_tphi = 0.0
    x0, h, n_int, cre, cim = _spline_tables(landscape)
    u = np.asarray(trajectory.u, dtype=float)
    omega = 2.0 * np.pi * trajectory.frequencies if trajectory.M else np.empty(0)

    status, final_infid = _kernels.forward_kernel(
        rho, n, dt, dt_last,
        trajectory.v, u, omega,
        x0, h, n_int, cre, cim,
        ez, kz, constants.hbar, inv_t1v, inv_tphi,
        (ez + 2.0 * kz) / constants.hbar,
        rec_steps, *rec,
    )
    if status != -1:
        raise FloatingPointError(f"state became non-finite at step {status} of {n}")

    metadata = {
        "landscape_seed": landscape.seed,
        "params_digest": params_digest(params),
        "well_digest": landscape.params_digest,
        "trajectory": trajectory.serialize(),
        "n_steps": n,
        "dt_ps": dt * 1e3,
        "v": trajectory.v,
        "T1v": params.T1v,
        "kappa_z": kz,
        "dephasing_enabled": params.dephasing_enabled,
    }
    return SimulationResult(
        t_ns=rec[0], x_nm=rec[1], infidelity=rec[2], p_excited=rec[3],
        purity_total=rec[4], purity_spin=rec[5],
        rho_final=rho, final_infidelity=float(final_infid), metadata=metadata,
    )


def lindblad_rhs(
    t: float,
    rho_flat: np.ndarray,
    landscape: ValleyLandscape,
    trajectory: ShuttleTrajectory,
    params: PhysicalParams,
    constants: Constants = CONSTANTS,
    t_phi_ns: float | None = None,
) -> np.ndarray:
    """Master-equation right-hand side with continuous x(t), for oracles.

    Meant for adaptive reference integrators; the production path is the
    Trotterized kernel."""
    rho = rho_flat.reshape(4, 4)
    x = trajectory.position(float(t))
    dr, di, _, _ = landscape.evaluate(x)
    ops = build_hamiltonian(float(dr), float(di), params, constants)
    comm = ops.H @ rho - rho @ ops.H
    out = (-1j / constants.hbar) * comm
    if np.isfinite(params.T1v):
        L = ops.tau_tilde_minus
        pe = L.conj().T @ L
        out = out + (L @ rho @ L.conj().T - 0.5 * (pe @ rho + rho @ pe)) / params.T1v
    if t_phi_ns:
        out = out + (_SIGMA_Z @ rho @ _SIGMA_Z - rho) / (2.0 * t_phi_ns)
    return out.reshape(-1)


# -- result persistence -------------------------------------------------------

def save_result(result: SimulationResult, path, save_rho: bool = False) -> None:
    """Write the observable table with a metadata header.

    ``save_rho=True`` additionally stores the final density matrix next to
    the table as ``<path>.rho.npy``.
    """
    with open(path, "w") as fh:
        fh.write(f"# spinshuttle-result v{RESULT_FORMAT_VERSION}\n")
        for key in sorted(result.metadata):
            fh.write(f"# {key}: {result.metadata[key]}\n")
        fh.write(f"# final_infidelity: {result.final_infidelity:.17g}\n")
        fh.write("t_ns,x_nm,infidelity,p_excited,purity_total,purity_spin\n")
        for row in zip(result.t_ns, result.x_nm, result.infidelity,
                       result.p_excited, result.purity_total, result.purity_spin):
            fh.write(",".join(f"{val:.17g}" for val in row) + "\n")
    if save_rho:
        np.save(str(path) + ".rho.npy", result.rho_final)


def load_result(path) -> SimulationResult:
    """Read a result table written by :func:`save_result`."""
    metadata = {}
    final_infid = math.nan
    rows = []
    with open(path) as fh:
        first = fh.readline().strip()
        if not first.startswith("# spinshuttle-result v"):
            raise ValueError(f"{path}: not a result file")
        version = int(first.rsplit("v", 1)[1])
        if version != RESULT_FORMAT_VERSION:
            raise ValueError(f"{path}: format version {version} != {RESULT_FORMAT_VERSION}")
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                key = key.strip()
                if key == "final_infidelity":
                    final_infid = float(val)
                else:
                    metadata[key] = val.strip()
            elif line and not line.startswith("t_ns"):
                rows.append([float(tok) for tok in line.split(",")])
    data = np.asarray(rows)
    return SimulationResult(
        t_ns=data[:, 0], x_nm=data[:, 1], infidelity=data[:, 2],
        p_excited=data[:, 3], purity_total=data[:, 4], purity_spin=data[:, 5],
        rho_final=np.full((4, 4), np.nan, dtype=complex),
        final_infidelity=final_infid, metadata=metadata,
    )
