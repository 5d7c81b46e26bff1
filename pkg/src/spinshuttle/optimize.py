"""Infidelity minimization over the sine-basis trajectory coefficients.

The cost is the final transport infidelity 1 - F_ent; its gradient is
obtained by reverse accumulation through the step chain (closed-form step
derivative with respect to the midpoint position, chained with the spline
derivative and the sine sensitivities), or by central finite differences as
an independent cross-check.  Minimization uses limited-memory BFGS.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .dynamics import DEFAULT_STEP_POLICY, StepPolicy, _spline_tables, _step_layout, _check_domain, initial_state, timestep_for_speed
from .landscape import ValleyLandscape
from .params import CONSTANTS, Constants, PhysicalParams
from .trajectory import ShuttleTrajectory, TrajectoryDomainError, basis_frequencies

__all__ = [
    "OptimizationProblem",
    "OptimizationResult",
    "cost",
    "gradient",
    "gradient_fd",
    "optimize",
]

# surrogate cost handed to the line search when a trial trajectory leaves the device
PENALTY_COST = 2.0

FD_STEP_NM = 1e-3


@dataclass(frozen=True)
class OptimizationProblem:
    landscape: ValleyLandscape
    params: PhysicalParams
    v: float                       # average speed (m/s)
    L: float                       # shuttle length (nm)
    M: int                         # number of sine components
    policy: StepPolicy = DEFAULT_STEP_POLICY
    gradient_mode: str = "adjoint"  # "adjoint" | "finite-difference"
    grad_tol: float = 1e-9
    cost_tol: float = 1e-7
    max_iter: int = 500
    memory: int = 10
    initial_u: tuple[float, ...] | None = None
    use_dephasing: bool = False    # optimization assumes ideal spin coherence by default

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("need at least one trajectory component")
        if self.gradient_mode not in ("adjoint", "finite-difference"):
            raise ValueError(f"unknown gradient mode {self.gradient_mode!r}")
        if self.initial_u is not None and len(self.initial_u) != self.M:
            raise ValueError("initial_u length must equal M")

    def trajectory(self, u) -> ShuttleTrajectory:
        return ShuttleTrajectory(self.v, self.L, tuple(u))

    def effective_params(self) -> PhysicalParams:
        if self.params.dephasing_enabled and not self.use_dephasing:
            return replace(self.params, dephasing_enabled=False)
        return self.params


@dataclass
class OptimizationResult:
    u_star: np.ndarray
    cost: float
    cost_history: list = field(default_factory=list)       # accepted iterates
    grad_norm_history: list = field(default_factory=list)
    n_cost_evals: int = 0
    n_grad_evals: int = 0
    n_domain_rejections: int = 0
    wall_time_s: float = 0.0
    termination: str = ""
    success: bool = False


class _TargetReached(Exception):
    pass


def _kernel_args(problem: OptimizationProblem, u, constants: Constants):
    params = problem.effective_params()
    traj = problem.trajectory(u)
    dt = timestep_for_speed(traj.v, problem.policy) * 1e-3
    if dt / params.T1v > 1e-3:
        raise ValueError("dt/T1v too large for the Euler dissipative update")
    n, dt_last = _step_layout(traj.T, dt)
    _check_domain(traj, problem.landscape, n, dt, dt_last)
    x0, h, n_int, cre, cim = _spline_tables(problem.landscape)
    ez = params.g_bar * constants.mu_B * params.B_z
    kz = params.kappa_z_effective
    inv_t1v = 1.0 / params.T1v if np.isfinite(params.T1v) else 0.0
    if params.dephasing_enabled:
        t_phi = traj.v * params.T2_star**2 / (2.0 * params.l_c)
        inv_tphi = 1.0 / t_phi
    else:
        inv_tphi = 0.0
    omega = 2.0 * np.pi * basis_frequencies(problem.M, traj.v, traj.L)
    rho0 = initial_state(problem.landscape)
    return (
        rho0, n, dt, dt_last, traj.v, np.asarray(u, dtype=float), omega,
        x0, h, n_int, cre, cim, ez, kz, constants.hbar, inv_t1v, inv_tphi,
        (ez + 2.0 * kz) / constants.hbar,
    )


def cost(u, problem: OptimizationProblem, constants: Constants = CONSTANTS) -> float:
    """Final infidelity for coefficients u (deterministic for fixed inputs)."""
    args = _kernel_args(problem, u, constants)
    rho0 = args[0].copy()
    empty_i = np.empty(0, dtype=np.int64)
    empty_f = np.empty(0)
    status, infid = _kernels.forward_kernel(
        rho0, *args[1:],
        empty_i, empty_f, empty_f, empty_f, empty_f, empty_f, empty_f,
    )
    if status != -1:
        raise FloatingPointError(f"state became non-finite at step {status}")
    return float(infid)


def _cost_and_grad_adjoint(u, problem: OptimizationProblem, constants: Constants):
    args = _kernel_args(problem, u, constants)
    rho0, n, dt, dt_last, v, u_arr, omega = args[:7]
    gx = np.empty(n)
    status, infid = _kernels.adjoint_kernel(rho0, *args[1:], gx)
    if status != -1:
        raise FloatingPointError(f"state became non-finite at step {status}")
    # chain rule through x(t_mid): dI/du_k = sum_j gx_j sin(w_k t_mid_j)
    t_mid = dt * (np.arange(n) + 0.5)
    if n > 0:
        t_mid[-1] = (n - 1) * dt + 0.5 * dt_last
    grad = np.zeros(problem.M)
    chunk = 1 << 16
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        grad += np.sin(np.multiply.outer(t_mid[lo:hi], omega)).T @ gx[lo:hi]
    return float(infid), grad


def gradient_fd(
    u, problem: OptimizationProblem, step_nm: float = FD_STEP_NM,
    constants: Constants = CONSTANTS,
) -> np.ndarray:
    """Central finite-difference gradient (2M cost evaluations)."""
    u = np.asarray(u, dtype=float)
    grad = np.empty(u.size)
    for k in range(u.size):
        up = u.copy()
        up[k] += step_nm
        dn = u.copy()
        dn[k] -= step_nm
        grad[k] = (cost(up, problem, constants) - cost(dn, problem, constants)) / (2 * step_nm)
    return grad


def gradient(u, problem: OptimizationProblem, constants: Constants = CONSTANTS) -> np.ndarray:
    """Cost gradient in the configured mode."""
    if problem.gradient_mode == "adjoint":
        return _cost_and_grad_adjoint(u, problem, constants)[1]
    return gradient_fd(u, problem, constants=constants)


def optimize(problem: OptimizationProblem, constants: Constants = CONSTANTS) -> OptimizationResult:
    """Limited-memory BFGS descent from u = 0 (or the configured start).

    Terminates on gradient infinity-norm below ``grad_tol``, cost below
    ``cost_tol``, or ``max_iter`` iterations; always returns the best
    evaluated coefficients.  Trial points whose trajectory leaves the device
    are given a large surrogate cost with zero gradient, which makes the
    line search back off.
    """
    result = OptimizationResult(u_star=np.zeros(problem.M), cost=math.inf)
    best = {"u": np.zeros(problem.M), "f": math.inf}
    start = time.perf_counter()

    def record_eval(u, f):
        if f < best["f"]:
            best["f"] = f
            best["u"] = np.array(u)
        if f < problem.cost_tol:
            raise _TargetReached

    def fun_adjoint(u):
        try:
            f, g = _cost_and_grad_adjoint(u, problem, constants)
        except TrajectoryDomainError:
            result.n_domain_rejections += 1
            return PENALTY_COST, np.zeros(problem.M)
        result.n_cost_evals += 1
        result.n_grad_evals += 1
        record_eval(u, f)
        return f, g

    def fun_cost(u):
        try:
            f = cost(u, problem, constants)
        except TrajectoryDomainError:
            result.n_domain_rejections += 1
            return PENALTY_COST
        result.n_cost_evals += 1
        record_eval(u, f)
        return f

    def fun_fd_grad(u):
        try:
            g = gradient_fd(u, problem, constants=constants)
        except TrajectoryDomainError:
            result.n_domain_rejections += 1
            return np.zeros(problem.M)
        result.n_cost_evals += 2 * problem.M
        result.n_grad_evals += 1
        return g

    def callback(xk):
        fk = cost_cache.get(xk.tobytes())
        if fk is not None:
            result.cost_history.append(fk[0])
            result.grad_norm_history.append(fk[1])

    # cache last evaluations so the callback can log accepted iterates
    cost_cache: dict = {}

    if problem.gradient_mode == "adjoint":
        def wrapped(u):
            f, g = fun_adjoint(u)
            cost_cache[np.asarray(u).tobytes()] = (f, float(np.max(np.abs(g))))
            return f, g
        jac = True
        objective = wrapped
    else:
        def objective(u):
            f = fun_cost(u)
            cost_cache[np.asarray(u).tobytes()] = (f, math.nan)
            return f
        jac = fun_fd_grad

    u0 = np.array(problem.initial_u, dtype=float) if problem.initial_u is not None else np.zeros(problem.M)
    termination = ""
    try:
        res = minimize(
            objective, u0, jac=jac, method="L-BFGS-B", callback=callback,
            options={
                "maxiter": problem.max_iter,
                "maxcor": problem.memory,
                "gtol": problem.grad_tol,
                "ftol": 1e-16,
            },
        )
        if res.status == 0:
            termination = "converged"
        elif res.status == 1:
            termination = "max_iterations"
        else:
            termination = f"line_search_failure ({res.message})"
    except _TargetReached:
        termination = "target_cost_reached"

    result.u_star = best["u"]
    result.cost = best["f"]
    result.wall_time_s = time.perf_counter() - start
    result.termination = termination
    result.success = termination in ("converged", "target_cost_reached", "max_iterations")
    if not result.cost_history:
        result.cost_history.append(result.cost)
    return result
