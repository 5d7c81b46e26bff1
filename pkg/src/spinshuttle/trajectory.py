"""Dot trajectory: constant drift plus a sine-basis correction.

x(t) = v t + sum_k u_k sin(2 pi nu_k t) with nu_k = k v / L, so the
endpoints x(0) = 0 and x(T) = L are pinned for any coefficients.  Speeds
are in m/s (= nm/ns), lengths in nm, times in ns, frequencies in GHz.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["ShuttleTrajectory", "TrajectoryDomainError", "basis_frequencies"]


class TrajectoryDomainError(ValueError):
    """Trajectory leaves the allowed position range at an intermediate time."""


@dataclass(frozen=True)
class ShuttleTrajectory:
    v: float                                  # average speed (m/s = nm/ns)
    L: float                                  # shuttle length (nm)
    u: tuple[float, ...] = field(default_factory=tuple)  # sine coefficients (nm)

    def __post_init__(self):
        if self.v <= 0 or self.L <= 0:
            raise ValueError("speed and length must be positive")
        object.__setattr__(self, "u", tuple(float(c) for c in self.u))
        if not all(np.isfinite(self.u)):
            raise ValueError("coefficients must be finite")

    @property
    def T(self) -> float:
        """Total shuttling time L/v (ns)."""
        return self.L / self.v

    @property
    def M(self) -> int:
        return len(self.u)

    @property
    def frequencies(self) -> np.ndarray:
        """nu_k = k v / L for k = 1..M (GHz)."""
        return basis_frequencies(self.M, self.v, self.L)

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-9) or np.any(t > self.T + 1e-9):
            raise ValueError(f"time outside [0, T={self.T}] ns")
        return t

    def position(self, t):
        """x(t) in nm; t may be scalar or array in [0, T]."""
        t = self._check_time(t)
        x = self.v * t
        if self.u:
            nu = self.frequencies
            u = np.asarray(self.u)
            x = x + np.sin(2.0 * np.pi * np.multiply.outer(t, nu)) @ u
        return x if x.ndim else float(x)

    def position_sensitivity(self, t, k: int):
        """d x(t) / d u_k = sin(2 pi nu_k t), for k in 1..M."""
        if not 1 <= k <= self.M:
            raise ValueError(f"component index {k} outside 1..{self.M}")
        t = self._check_time(t)
        out = np.sin(2.0 * np.pi * (k * self.v / self.L) * t)
        return out if out.ndim else float(out)

    def with_coefficients(self, u) -> "ShuttleTrajectory":
        return ShuttleTrajectory(self.v, self.L, tuple(u))

    def check_in_domain(self, t) -> None:
        """Raise TrajectoryDomainError if x(t) leaves [0, L] at any given time."""
        t = np.atleast_1d(self._check_time(t))
        x = np.atleast_1d(self.position(t))
        bad = (x < -1e-9) | (x > self.L + 1e-9)
        if bad.any():
            i = int(np.argmax(bad))
            raise TrajectoryDomainError(
                f"trajectory exits [0, {self.L}] nm: x({t[i]:.6g} ns) = {x[i]:.6g} nm"
            )

    def serialize(self) -> str:
        coeffs = ",".join(f"{c:.17g}" for c in self.u)
        return f"v_m_per_s={self.v!r} L_nm={self.L!r} u_nm=[{coeffs}]"


def basis_frequencies(M: int, v: float, L: float) -> np.ndarray:
    """Sine-basis frequencies k v / L for k = 1..M (GHz)."""
    if M < 1:
        raise ValueError("need at least one component")
    return (v / L) * np.arange(1, M + 1)
