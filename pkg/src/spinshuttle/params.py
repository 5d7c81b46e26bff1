"""Physical constants, device parameters and configuration loading.

Internal unit system: energies in meV, times in ns, lengths in nm,
magnetic fields in T.  Speeds in m/s coincide numerically with nm/ns,
so no conversion factor appears anywhere in the dynamics.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields, replace

__all__ = [
    "Constants",
    "CONSTANTS",
    "PhysicalParams",
    "WellParams",
    "SimulationSettings",
    "OptimizerSettings",
    "Config",
    "derive_kappa_z",
    "zeeman_energy",
    "params_digest",
    "load_config",
]


@dataclass(frozen=True)
class Constants:
    """Fundamental constants in the meV/ns/nm/T unit system."""

    # reduced Planck constant (meV ns)
    hbar: float = 6.582119569e-4
    # Planck constant (meV ns)
    h: float = 2.0 * math.pi * 6.582119569e-4
    # Bohr magneton (meV/T)
    mu_B: float = 5.7883818060e-2
    # Si cubic cell length (nm)
    a0: float = 0.543
    # conduction-band minima sit at +-k0_factor * 2*pi/a0
    k0_factor: float = 0.82
    # hbar^2 / (2 m_e) for a free electron (meV nm^2)
    hbar2_over_2m_e: float = 38.09982089

    @property
    def k0(self) -> float:
        """Valley wavenumber k0 (rad/nm)."""
        return self.k0_factor * 2.0 * math.pi / self.a0


CONSTANTS = Constants()


@dataclass(frozen=True)
class PhysicalParams:
    """Spin/valley physics knobs shared by the dynamics and analysis code.

    ``kappa_z`` set to a number overrides the g-factor-derived value; set it
    to None to fall back to the first-order expression (see
    :func:`derive_kappa_z`).
    """

    B_z: float = 0.02            # magnetic field (T)
    g_bar: float = 2.0           # average Lande g-factor
    delta_g_rel: float = 1e-3    # relative g-factor difference between valley states
    kappa_z: float | None = 1e-6  # valley-spin coupling (meV), None -> derived
    T1v: float = 1e6             # valley relaxation time (ns)
    T2_star: float = 2e4         # stationary spin dephasing time (ns)
    l_c: float = 20.0            # dephasing-noise coherence length (nm)
    dephasing_enabled: bool = False

    def __post_init__(self):
        if self.B_z <= 0:
            raise ValueError(f"B_z must be positive, got {self.B_z}")
        if self.T1v <= 0:
            raise ValueError(f"T1v must be positive, got {self.T1v}")
        if self.dephasing_enabled and (self.T2_star <= 0 or self.l_c <= 0):
            raise ValueError("dephasing requires positive T2_star and l_c")

    @property
    def kappa_z_effective(self) -> float:
        """Coupling used in simulations: explicit value or the derived one."""
        if self.kappa_z is not None:
            return self.kappa_z
        return derive_kappa_z(self)


@dataclass(frozen=True)
class WellParams:
    """Quantum-well geometry and disorder-model parameters."""

    well_width: float = 12.0       # nm
    tau_interface: float = 0.2     # sigmoid width parameter tau; interface width is 4*tau (nm)
    xi_substrate: float = 0.7      # Si fraction deep in the SiGe barriers
    E_field: float = 0.0125        # growth-direction electric field (V/nm)
    # calibrated once against the target ensemble splitting statistics
    band_offset: float = 170.0     # conduction band offset Si vs barrier alloy (meV)
    sigma_qd: float = 12.0         # in-plane dot size, per-axis std of |psi|^2 (nm)
    sample_spacing: float = 1.5    # coupling sampling distance along the channel (nm)
    device_length: float = 10000.0  # channel length (nm)
    m_perp_rel: float = 0.916      # out-of-plane effective mass / m_e

    def __post_init__(self):
        if not 0.0 < self.xi_substrate < 1.0:
            raise ValueError(f"xi_substrate must be in (0,1), got {self.xi_substrate}")
        if self.sample_spacing <= 0:
            raise ValueError("sample_spacing must be positive")
        if self.device_length < 10 * self.sample_spacing:
            raise ValueError("device_length must be at least 10 sample spacings")
        if self.well_width <= 0 or self.tau_interface <= 0:
            raise ValueError("well_width and tau_interface must be positive")
        if self.sigma_qd <= 0 or self.m_perp_rel <= 0:
            raise ValueError("sigma_qd and m_perp_rel must be positive")


def zeeman_energy(params: PhysicalParams, constants: Constants = CONSTANTS) -> float:
    """Zeeman splitting g_bar * mu_B * B_z (meV)."""
    return params.g_bar * constants.mu_B * params.B_z


def derive_kappa_z(params: PhysicalParams, constants: Constants = CONSTANTS) -> float:
    """Valley-spin coupling from the relative g-factor difference (meV).

    First-order result of inserting the valley-dependent g-factor into the
    Zeeman term: one quarter of ``delta_g_rel`` times the Zeeman energy.
    This reports the derived value regardless of any explicit ``kappa_z``
    override on ``params``.
    """
    if params.g_bar <= 0:
        raise ValueError("g_bar must be positive")
    return 0.25 * params.delta_g_rel * zeeman_energy(params, constants)


@dataclass(frozen=True)
class SimulationSettings:
    """Sweep defaults and output cadence for simulation campaigns."""

    record_points: int = 1000
    v: tuple[float, ...] = (1.0,)          # speeds (m/s)
    T1v: tuple[float, ...] = (1e6,)        # valley lifetimes (ns)
    kappa_z: tuple[float, ...] = (1e-6,)   # couplings (meV)


@dataclass(frozen=True)
class OptimizerSettings:
    """Trajectory-optimization defaults."""

    M: int = 9                    # number of sine components
    v: tuple[float, ...] = (5.0,)  # speeds (m/s)
    gradient_mode: str = "adjoint"  # "adjoint" | "finite-difference"
    grad_tol: float = 1e-9
    cost_tol: float = 1e-7
    max_iter: int = 500
    memory: int = 10              # quasi-Newton history length


@dataclass(frozen=True)
class Config:
    physical: PhysicalParams = field(default_factory=PhysicalParams)
    well: WellParams = field(default_factory=WellParams)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)


def params_digest(params) -> str:
    """Short stable hash of a parameter dataclass (first 16 hex digits)."""
    parts = []
    for f in fields(params):
        parts.append(f"{f.name}={getattr(params, f.name)!r}")
    text = type(params).__name__ + ";" + ";".join(parts)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _parse_value(raw: str, target_type, name: str):
    raw = raw.strip()
    try:
        if target_type is bool:
            lowered = raw.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        if target_type is str:
            return raw
        # tuple of floats (comma separated) and Optional[float]
        if target_type is tuple or getattr(target_type, "__origin__", None) is tuple:
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        # Optional[float] spelled as "float | None"
        if raw.lower() in ("none", ""):
            return None
        return float(raw)
    except ValueError as err:
        raise ValueError(f"cannot parse config key {name!r} from {raw!r}") from err


def _load_section(parser: configparser.ConfigParser, section: str, default):
    if not parser.has_section(section):
        return default
    updates = {}
    known = {f.name: f for f in fields(default)}
    for key, raw in parser.items(section):
        if key not in known:
            raise ValueError(f"unknown key {key!r} in config section [{section}]")
        ftype = known[key].type
        # dataclass field types arrive as strings under `from __future__ import annotations`
        type_map = {
            "float": float, "int": int, "bool": bool, "str": str,
            "float | None": "optional_float",
            "tuple[float, ...]": tuple,
        }
        resolved = type_map.get(ftype, ftype)
        if resolved == "optional_float":
            updates[key] = None if raw.strip().lower() in ("none", "") else float(raw)
        else:
            updates[key] = _parse_value(raw, resolved, key)
    return replace(default, **updates)


def load_config(path=None) -> Config:
    """Load an INI-style configuration file.

    Sections [physical], [well], [simulation], [optimizer] with keys named
    exactly after the dataclass fields; missing sections or keys keep their
    defaults.  ``path=None`` returns the all-defaults configuration.
    """
    if path is None:
        return Config()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive field names
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    return Config(
        physical=_load_section(parser, "physical", PhysicalParams()),
        well=_load_section(parser, "well", WellParams()),
        simulation=_load_section(parser, "simulation", SimulationSettings()),
        optimizer=_load_section(parser, "optimizer", OptimizerSettings()),
    )
