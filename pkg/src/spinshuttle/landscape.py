"""Position-dependent intervalley coupling from atomistic alloy disorder.

The channel is modeled as a random Si/Ge crystal: atomic layers stacked
along the growth direction, each layer a square in-plane grid of sites
occupied by Si with a depth-dependent probability.  For every dot position
the layers are averaged with the in-plane Gaussian envelope, giving a local
Si concentration profile, a confinement potential, an out-of-plane envelope
and finally the complex intervalley coupling

    Delta(x) = sum_l exp(-2i k0 z_l) U(z_l; x) |psi_perp(z_l; x)|^2 .

Couplings are sampled on a regular grid along the channel and interpolated
with cubic splines so that the valley phase has a continuous derivative.

Units: meV, ns, nm, T throughout.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal

from .params import CONSTANTS, Constants, WellParams, params_digest

__all__ = [
    "CrystalRegion",
    "ValleySample",
    "ValleyLandscape",
    "LandscapeStats",
    "MemoryBudgetError",
    "EnvelopeError",
    "mean_concentration_profile",
    "build_crystal",
    "local_concentration",
    "confinement_potential",
    "solve_envelope",
    "intervalley_coupling",
    "generate_landscape",
    "landscape_stats",
    "save_landscape",
    "load_landscape",
    "sample_positions",
]

# barrier thickness included in the envelope domain on each side of the well (nm)
BARRIER_MARGIN_NM = 15.0
# crystal slice half-width, in units of sigma_qd, used for the local average
SLICE_HALF_SIGMAS = 3.0
# default cap on the raw occupancy storage
DEFAULT_MEMORY_BUDGET_BYTES = 2 << 30

LANDSCAPE_FORMAT_VERSION = 1


class MemoryBudgetError(MemoryError):
    """Crystal occupancy would exceed the configured memory budget."""


class EnvelopeError(RuntimeError):
    """Out-of-plane envelope solver failed to produce a well-bound state."""


def mean_concentration_profile(z, well: WellParams):
    """Average Si fraction at depth z (nm), vectorized.

    1 inside the well, ``xi_substrate`` deep in the barriers, logistic
    crossover of width parameter tau at each interface (z = 0 and
    z = well_width; the 10%-90% interface width is about 4 tau).
    """
    z = np.asarray(z, dtype=float)
    tau = well.tau_interface
    xs = well.xi_substrate
    # rising sigmoid at the lower interface, falling at the upper one
    sig_lo = 1.0 / (1.0 + np.exp(-z / tau))
    sig_hi = 1.0 / (1.0 + np.exp(-(z - well.well_width) / tau))
    return xs + (1.0 - xs) * (sig_lo - sig_hi)


def _layer_grid(well: WellParams, constants: Constants):
    """Layer coordinates covering well plus barrier margins, spaced a0/4."""
    dz = constants.a0 / 4.0
    n = int(round((well.well_width + 2.0 * BARRIER_MARGIN_NM) / dz))
    z = -BARRIER_MARGIN_NM + dz * np.arange(n + 1)
    return z, dz


class CrystalRegion:
    """Random Si/Ge occupancy over a slab of the device.

    Layers along the growth direction are spaced a0/4; each layer carries a
    square in-plane grid with 2 sites per a0^2 (the areal density of diamond
    (001) monolayers).  Occupancy is stored packed, one bit per site, and
    Gaussian-weighted per-column reductions are cached on demand.
    """

    def __init__(self, layer_z, x_cols, y_rows, occupancy_bits, seed):
        self.layer_z = layer_z          # (n_layers,) nm
        self.x_cols = x_cols            # (n_cols,) nm, uniform spacing
        self.y_rows = y_rows            # (n_y,) nm
        self.occupancy = occupancy_bits  # (n_layers, packed) uint8
        self.seed = seed
        self._n_y = y_rows.size
        self._n_cols = x_cols.size
        self._reduction_cache: dict = {}

    @property
    def n_layers(self) -> int:
        return self.layer_z.size

    def layer_occupancy(self, layer: int) -> np.ndarray:
        """Unpacked (n_y, n_cols) boolean occupancy of one layer."""
        flat = np.unpackbits(self.occupancy[layer], count=self._n_y * self._n_cols)
        return flat.reshape(self._n_y, self._n_cols).astype(bool)

    def column_reduction(self, sigma_qd: float, y_half: float | None = None):
        """Per-layer, per-column Gaussian-weighted Ge counts.

        Returns (A_ge, wy_total): A_ge[l, m] = sum_y (1 - occ) exp(-y^2 /
        (2 sigma^2)) over rows with |y| <= y_half, and the total row weight.
        Counting the Ge complement keeps fully-Si layers exact (their sum is
        identically zero) while the bulk runs in float32.
        """
        if y_half is None:
            y_half = SLICE_HALF_SIGMAS * sigma_qd
        key = (round(float(sigma_qd), 9), round(float(y_half), 9))
        cached = self._reduction_cache.get(key)
        if cached is not None:
            return cached
        mask = np.abs(self.y_rows) <= y_half + 1e-9
        if not mask.any():
            raise ValueError("y window selects no crystal rows")
        all_rows = bool(mask.all())
        wy = np.exp(-self.y_rows[mask] ** 2 / (2.0 * sigma_qd**2))
        wy32 = wy.astype(np.float32)
        A = np.empty((self.n_layers, self._n_cols), dtype=np.float32)
        for l in range(self.n_layers):
            ge = ~self.layer_occupancy(l)
            if not all_rows:
                ge = ge[mask]
            A[l] = wy32 @ ge.astype(np.float32)
        result = (A, float(wy.sum()))
        self._reduction_cache[key] = result
        return result


def _in_plane_spacing(constants: Constants) -> float:
    # square grid with 2 sites per a0^2
    return constants.a0 / math.sqrt(2.0)


def sample_positions(well: WellParams) -> np.ndarray:
    """Coupling sample grid: multiples of sample_spacing covering the device."""
    n = math.ceil(well.device_length / well.sample_spacing - 1e-9)
    return well.sample_spacing * np.arange(n + 1)


def build_crystal(
    well: WellParams,
    seed: int,
    x_span: tuple[float, float] | None = None,
    y_halfwidth: float | None = None,
    constants: Constants = CONSTANTS,
    memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET_BYTES,
) -> CrystalRegion:
    """Draw the random crystal covering dot positions in ``x_span``.

    The in-plane grid extends 3 sigma_qd beyond the span on both sides (the
    slice window of the outermost dot positions) and ``y_halfwidth`` (default
    3 sigma_qd) in y.  Occupancy of each site is an independent Bernoulli
    draw with the layer's mean Si concentration; identical (well, seed)
    reproduce the crystal bit for bit.
    """
    if x_span is None:
        xs = sample_positions(well)
        x_span = (float(xs[0]), float(xs[-1]))
    if y_halfwidth is None:
        y_halfwidth = SLICE_HALF_SIGMAS * well.sigma_qd

    z, _ = _layer_grid(well, constants)
    a_xy = _in_plane_spacing(constants)
    margin = SLICE_HALF_SIGMAS * well.sigma_qd
    m_lo = math.floor((x_span[0] - margin) / a_xy)
    m_hi = math.ceil((x_span[1] + margin) / a_xy)
    x_cols = a_xy * np.arange(m_lo, m_hi + 1)
    n_y_half = math.ceil(y_halfwidth / a_xy)
    y_rows = a_xy * np.arange(-n_y_half, n_y_half + 1)

    n_layers, n_cols, n_y = z.size, x_cols.size, y_rows.size
    packed_per_layer = (n_y * n_cols + 7) // 8
    required = n_layers * packed_per_layer
    if required > memory_budget_bytes:
        raise MemoryBudgetError(
            f"crystal occupancy needs {required} bytes "
            f"({n_layers} layers x {n_y} x {n_cols} sites), "
            f"budget is {memory_budget_bytes} bytes"
        )

    xi_bar = mean_concentration_profile(z, well)
    occupancy = np.empty((n_layers, packed_per_layer), dtype=np.uint8)
    streams = np.random.SeedSequence(seed).spawn(n_layers)
    for l in range(n_layers):
        rng = np.random.default_rng(streams[l])
        occ = rng.random((n_y, n_cols), dtype=np.float32) < xi_bar[l]
        occupancy[l] = np.packbits(occ.reshape(-1))
    return CrystalRegion(z, x_cols, y_rows, occupancy, seed)


def local_concentration(
    crystal: CrystalRegion,
    x_qd: float,
    well: WellParams,
    y_half: float | None = None,
) -> np.ndarray:
    """Per-layer Si fraction seen by a dot centered at ``x_qd``.

    Sites within +-3 sigma_qd of the dot (and |y| <= y_half, default
    3 sigma_qd) are averaged with the in-plane Gaussian probability density;
    the result is the weighted Si count over the weighted site count.
    """
    sigma = well.sigma_qd
    half = SLICE_HALF_SIGMAS * sigma
    lo, hi = x_qd - half, x_qd + half
    if lo < crystal.x_cols[0] - 1e-9 or hi > crystal.x_cols[-1] + 1e-9:
        raise ValueError(
            f"slice [{lo:.3f}, {hi:.3f}] nm exceeds crystal span "
            f"[{crystal.x_cols[0]:.3f}, {crystal.x_cols[-1]:.3f}] nm"
        )
    a_xy = crystal.x_cols[1] - crystal.x_cols[0]
    j0 = int(np.searchsorted(crystal.x_cols, lo - 1e-12))
    j1 = int(np.searchsorted(crystal.x_cols, hi + 1e-12, side="right"))
    if j1 <= j0:
        raise ValueError("slice window contains no crystal sites")
    A_ge, wy_total = crystal.column_reduction(sigma, y_half)
    gx = np.exp(-((crystal.x_cols[j0:j1] - x_qd) ** 2) / (2.0 * sigma**2))
    weighted_ge = A_ge[:, j0:j1].astype(np.float64) @ gx
    total = wy_total * gx.sum()
    return 1.0 - weighted_ge / total


def confinement_potential(xi, well: WellParams) -> np.ndarray:
    """Conduction-band potential (meV) from the local Si fraction.

    Linear interpolation of the band offset: 0 for pure Si, ``band_offset``
    at the substrate concentration.
    """
    xi = np.asarray(xi, dtype=float)
    return well.band_offset * (1.0 - xi) / (1.0 - well.xi_substrate)


def solve_envelope(
    U,
    well: WellParams,
    layer_z=None,
    constants: Constants = CONSTANTS,
) -> np.ndarray:
    """Ground-state out-of-plane density |psi(z_l)|^2 on the layer grid.

    Finite-difference effective-mass Hamiltonian with the confinement
    potential plus the linear field tilt e*E_field*z, hard walls at the
    domain edges.  The returned density sums to 1.

    The strong default tilt drags the potential in the down-field barrier
    below the well floor near the domain wall, so the global ground state
    can be a spurious wall-localized state; among the lowest eigenstates the
    first with most of its weight in the well region is returned instead
    (identical to the true ground state whenever no wall dip exists).
    """
    U = np.asarray(U, dtype=float)
    if layer_z is None:
        layer_z, _ = _layer_grid(well, constants)
    if U.shape != layer_z.shape:
        raise ValueError("potential and layer grid size mismatch")
    if layer_z[0] > -10.0 + 1e-9 or layer_z[-1] < well.well_width + 10.0 - 1e-9:
        raise ValueError("envelope domain must cover the well plus >= 10 nm of barrier")
    dz = layer_z[1] - layer_z[0]
    kin = constants.hbar2_over_2m_e / (well.m_perp_rel * dz * dz)
    tilt = 1000.0 * well.E_field * layer_z  # V/nm * nm -> eV -> meV
    diag = 2.0 * kin + U + tilt
    off = np.full(layer_z.size - 1, -kin)
    try:
        vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, 5))
    except np.linalg.LinAlgError as err:  # pragma: no cover - LAPACK failure
        raise EnvelopeError(f"eigensolver failed: {err}") from err
    in_well = (layer_z > -3.0) & (layer_z < well.well_width + 3.0)
    for i in range(vals.size):
        density = vecs[:, i] ** 2
        density /= density.sum()
        if density[in_well].sum() >= 0.5:
            return density
    raise EnvelopeError(
        "no well-localized state among the 6 lowest eigenstates; "
        f"lowest energies (meV): {np.array2string(vals, precision=3)}"
    )


def intervalley_coupling(layer_z, U, psi_sq, constants: Constants = CONSTANTS) -> complex:
    """Discrete intervalley integral sum_l exp(-2i k0 z_l) U_l |psi_l|^2 (meV)."""
    layer_z = np.asarray(layer_z, dtype=float)
    U = np.asarray(U, dtype=float)
    psi_sq = np.asarray(psi_sq, dtype=float)
    if not (layer_z.shape == U.shape == psi_sq.shape):
        raise ValueError("layer grid, potential and density must share one grid")
    phase = np.exp(-2j * constants.k0 * layer_z)
    return complex(np.sum(phase * U * psi_sq))


@dataclass(frozen=True)
class ValleySample:
    """One sampled coupling value."""

    x: float          # nm
    delta_re: float   # meV
    delta_im: float   # meV

    @property
    def valley_splitting(self) -> float:
        """E_V = 2 |Delta| (meV)."""
        return 2.0 * math.hypot(self.delta_re, self.delta_im)


@dataclass(frozen=True)
class LandscapeStats:
    ev_mean_ueV: float
    ev_std_ueV: float
    minima_count: int
    mean_minima_spacing_nm: float


class ValleyLandscape:
    """Sampled intervalley coupling along the channel plus smooth interpolant.

    Real and imaginary parts are interpolated independently with cubic
    splines (C2, so the valley-phase derivative is continuous).  The spline
    is refitted deterministically from the samples on load.
    """

    def __init__(self, x, delta_re, delta_im, seed, well: WellParams):
        x = np.ascontiguousarray(x, dtype=float)
        if x.ndim != 1 or x.size < 4:
            raise ValueError("need at least 4 samples along x")
        if np.any(np.diff(x) <= 0):
            raise ValueError("sample positions must be strictly increasing")
        self.x = x
        self.delta_re = np.ascontiguousarray(delta_re, dtype=float)
        self.delta_im = np.ascontiguousarray(delta_im, dtype=float)
        self.seed = seed
        self.well = well
        self.params_digest = params_digest(well)
        self.spline_re = CubicSpline(x, self.delta_re)
        self.spline_im = CubicSpline(x, self.delta_im)

    # -- basic queries ----------------------------------------------------

    @property
    def x_min(self) -> float:
        return float(self.x[0])

    @property
    def x_max(self) -> float:
        return float(self.x[-1])

    def samples(self):
        return [
            ValleySample(float(xi), float(re), float(im))
            for xi, re, im in zip(self.x, self.delta_re, self.delta_im)
        ]

    def evaluate(self, x):
        """Spline value and derivative: (d_re, d_im, dd_re/dx, dd_im/dx)."""
        x = np.asarray(x, dtype=float)
        if np.any(x < self.x_min - 1e-9) or np.any(x > self.x_max + 1e-9):
            raise ValueError(
                f"position outside landscape domain [{self.x_min}, {self.x_max}] nm"
            )
        return (
            self.spline_re(x),
            self.spline_im(x),
            self.spline_re(x, 1),
            self.spline_im(x, 1),
        )

    def valley_splitting(self, x):
        """E_V(x) = 2 |Delta(x)| (meV)."""
        dr, di, _, _ = self.evaluate(x)
        return 2.0 * np.hypot(dr, di)

    def spline_coefficients(self):
        """Piecewise-cubic coefficient tables (breaks, c_re, c_im) for kernels."""
        return self.x, self.spline_re.c, self.spline_im.c


def generate_landscape(
    well: WellParams,
    seed: int,
    constants: Constants = CONSTANTS,
    memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET_BYTES,
) -> ValleyLandscape:
    """Full disorder pipeline: crystal -> local averages -> envelope -> coupling.

    Samples Delta every ``sample_spacing`` nm over the device and fits the
    interpolating splines.  Deterministic in (well, seed).
    """
    xs = sample_positions(well)
    crystal = build_crystal(
        well, seed, x_span=(float(xs[0]), float(xs[-1])),
        constants=constants, memory_budget_bytes=memory_budget_bytes,
    )
    layer_z, _ = _layer_grid(well, constants)
    d_re = np.empty(xs.size)
    d_im = np.empty(xs.size)
    for i, x_qd in enumerate(xs):
        xi = local_concentration(crystal, float(x_qd), well)
        U = confinement_potential(xi, well)
        psi_sq = solve_envelope(U, well, layer_z, constants)
        delta = intervalley_coupling(layer_z, U, psi_sq, constants)
        d_re[i] = delta.real
        d_im[i] = delta.imag
    return ValleyLandscape(xs, d_re, d_im, seed, well)


def landscape_stats(landscape: ValleyLandscape, grid_spacing: float = 0.1) -> LandscapeStats:
    """Valley-splitting statistics on a fine grid.

    Minima are strict local minima of E_V on the grid; mean and std are
    taken over the grid and reported in ueV.
    """
    x = np.arange(landscape.x_min, landscape.x_max + grid_spacing / 2, grid_spacing)
    ev = landscape.valley_splitting(x) * 1e3  # meV -> ueV
    interior = (ev[1:-1] < ev[:-2]) & (ev[1:-1] < ev[2:])
    count = int(np.count_nonzero(interior))
    length = landscape.x_max - landscape.x_min
    spacing = length / count if count > 0 else math.inf
    return LandscapeStats(float(ev.mean()), float(ev.std()), count, spacing)


# -- persistence ----------------------------------------------------------

def save_landscape(landscape: ValleyLandscape, path) -> None:
    """Write the self-describing text format (samples only; splines refit on load)."""
    w = landscape.well
    buf = io.StringIO()
    buf.write(f"# spinshuttle-landscape v{LANDSCAPE_FORMAT_VERSION}\n")
    buf.write(f"# seed: {landscape.seed}\n")
    buf.write(f"# params_digest: {landscape.params_digest}\n")
    buf.write(
        "# well: "
        f"well_width={w.well_width!r} tau_interface={w.tau_interface!r} "
        f"xi_substrate={w.xi_substrate!r} E_field={w.E_field!r} "
        f"band_offset={w.band_offset!r} sigma_qd={w.sigma_qd!r} "
        f"sample_spacing={w.sample_spacing!r} device_length={w.device_length!r} "
        f"m_perp_rel={w.m_perp_rel!r}\n"
    )
    buf.write("x_nm,delta_re_meV,delta_im_meV\n")
    for xi, re, im in zip(landscape.x, landscape.delta_re, landscape.delta_im):
        buf.write(f"{xi:.17g},{re:.17g},{im:.17g}\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def load_landscape(path) -> ValleyLandscape:
    """Read a landscape file written by :func:`save_landscape`."""
    seed = None
    well_kwargs = {}
    with open(path) as fh:
        first = fh.readline().strip()
        if not first.startswith("# spinshuttle-landscape v"):
            raise ValueError(f"{path}: not a landscape file")
        version = int(first.rsplit("v", 1)[1])
        if version != LANDSCAPE_FORMAT_VERSION:
            raise ValueError(
                f"{path}: format version {version}, expected {LANDSCAPE_FORMAT_VERSION}"
            )
        rows = []
        for line in fh:
            line = line.strip()
            if line.startswith("# seed:"):
                seed = int(line.split(":", 1)[1])
            elif line.startswith("# well:"):
                for token in line.split(":", 1)[1].split():
                    key, val = token.split("=")
                    well_kwargs[key] = float(val)
            elif not line or line.startswith("#") or line.startswith("x_nm"):
                continue
            else:
                rows.append([float(tok) for tok in line.split(",")])
    data = np.asarray(rows)
    well = WellParams(**well_kwargs)
    return ValleyLandscape(data[:, 0], data[:, 1], data[:, 2], seed, well)
