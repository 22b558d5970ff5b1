"""Yee-grid FDTD solver for the dipole-to-waveguide coupling

Fields live on a uniform cubic grid with the standard staggering

    Ex (i+1/2, j, k)      Hx (i, j+1/2, k+1/2)
    Ey (i, j+1/2, k)      Hy (i+1/2, j, k+1/2)
    Ez (i, j, k+1/2)      Hz (i+1/2, j+1/2, k)

and every component is stored as an (Nx, Ny, Nz) array. H is kept in the
normalized form eta0*H so both fields share units. One step updates H from
E at t + dt/2 and then E from H at t + dt; the dipole current enters the E
update as a soft source. Outside the grid the tangential fields are zero
unless an axis is periodic. A 2-D run is a 3-D run one cell thick along a
periodic normal axis.
"""

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict
from scipy import constants

from wgqdpy import wglogging
from wgqdpy.src.cpml import CPML, DEFAULT_THICKNESS
from wgqdpy.src.exceptions import GeometryError, NonConvergenceError, StabilityError
from wgqdpy.src.geometry import (
    AXES,
    DeviceGeometry,
    PermittivityGrid,
    build_permittivity_grid,
    geometry_slice,
)
from wgqdpy.src.monitors import (
    MonitorLayout,
    MonitorSet,
    na_collection,
    place_monitors,
    total_emitted_power,
)

logger = wglogging.get_wg_logger()

C0 = constants.c
ETA0 = np.sqrt(constants.mu_0 / constants.epsilon_0)
DEFAULT_COURANT = 0.95
DEFAULT_SPECTRUM = (650.0, 675.0, 700.0, 725.0, 750.0)
ENERGY_RIPPLE = 0.005


def cfl_timestep(cell_size: float, dimension: int = 3, courant: float = 1.0) -> float:
    """Largest stable time step times a Courant factor

    :param cell_size: Cell edge in nm.
    :param dimension: Number of spatial dimensions (1, 2 or 3).
    :param courant: Fraction of the stability limit, in (0, 1].
    :returns: dt in s.
    """
    if not 0.0 < courant <= 1.0:
        raise ValueError(f"courant should be in (0, 1], but is {courant}.")
    if not cell_size > 0:
        raise ValueError(f"cell_size should be > 0, but is {cell_size}.")
    if dimension not in (1, 2, 3):
        raise ValueError(f"dimension should be 1, 2 or 3, but is {dimension}.")
    return courant * cell_size * 1e-9 / (C0 * math.sqrt(dimension))


@dataclass
class DipoleSource:
    """Point dipole driven by a Gaussian-modulated sinusoid

    The pulse is exp(-((t - t0) / tau)**2) * sin(w0 (t - t0)), with tau set
    so that the spectral FWHM is ``bandwidth`` times the center frequency,
    and t0 = truncation * tau. The current is switched off at
    t0 + truncation * tau, where the envelope is below exp(-truncation**2).

    :param position: (x, y, z) in nm.
    :param orientation: Dipole direction; normalized on creation.
    :param wavelength: Center wavelength in nm. Default is 705.
    :param bandwidth: Fractional bandwidth. Default is 0.2.
    :param amplitude: Current density amplitude in A/m^2.
    :param truncation: Half width of the pulse in units of tau. Default is 4.
    """

    position: Tuple[float, float, float]
    orientation: Tuple[float, float, float] = (0.0, 1.0, 0.0)
    wavelength: float = 705.0
    bandwidth: float = 0.2
    amplitude: float = 1.0
    truncation: float = 4.0

    def __post_init__(self):
        vector = np.asarray(self.orientation, dtype=float)
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise ValueError("Dipole orientation should be a non-zero vector.")
        self.orientation = tuple(vector / norm)
        if not 0 < self.bandwidth < 1:
            raise ValueError(f"bandwidth should be in (0, 1), but is {self.bandwidth}.")
        if not self.truncation >= 3:
            raise ValueError(f"truncation should be >= 3, but is {self.truncation}.")

    @property
    def omega0(self) -> float:
        return 2 * np.pi * C0 / (self.wavelength * 1e-9)

    @property
    def tau(self) -> float:
        return 4 * np.sqrt(np.log(2)) / (self.bandwidth * self.omega0)

    @property
    def t0(self) -> float:
        return self.truncation * self.tau

    @property
    def t_end(self) -> float:
        return self.t0 + self.truncation * self.tau

    def waveform(self, t):
        t = np.asarray(t, dtype=float)
        s = t - self.t0
        value = np.exp(-((s / self.tau) ** 2)) * np.sin(self.omega0 * s)
        return np.where(t < self.t_end, value, 0.0)

    def dc_rejection_db(self) -> float:
        """Spectral magnitude at DC relative to the peak, in dB"""
        # |W(w)| ~ exp(-(w - w0)^2 tau^2 / 4), evaluated at w = 0
        return float(-10 * np.log10(np.e) * (self.omega0 * self.tau) ** 2 / 2)


@dataclass
class YeeState:
    """Staggered E and normalized H fields, shape (3, Nx, Ny, Nz) each"""

    E: np.ndarray
    H: np.ndarray
    dt: float
    step_index: int = 0
    _work: Optional[Tuple[np.ndarray, np.ndarray]] = field(
        default=None, repr=False, compare=False
    )

    @classmethod
    def zeros(cls, shape: Sequence[int], dt: float) -> "YeeState":
        return cls(
            E=np.zeros((3,) + tuple(shape)),
            H=np.zeros((3,) + tuple(shape)),
            dt=dt,
        )

    @property
    def t_e(self) -> float:
        return self.step_index * self.dt

    @property
    def t_h(self) -> float:
        return (self.step_index - 0.5) * self.dt

    def work(self) -> Tuple[np.ndarray, np.ndarray]:
        """Two scratch arrays shaped like one field component"""
        if self._work is None:
            self._work = (np.empty_like(self.E[0]), np.empty_like(self.E[0]))
        return self._work


class YeeGrid:
    """Update coefficients derived from a permittivity grid

    The permittivity at an E component is the mean of the four cells that
    share its edge, clamped at the domain boundary or wrapped on periodic
    axes.

    :param grid: Permittivity grid (nm units).
    :param dt: Time step in s.
    :param periodic_axes: Axes with periodic boundaries.
    :param enforce_cfl: Reject a dt above the stability bound. Default is True.
    """

    def __init__(
        self,
        grid: PermittivityGrid,
        dt: float,
        periodic_axes: Sequence[int] = (),
        enforce_cfl: bool = True,
    ):
        self.shape = grid.dimensions
        self.origin = grid.origin
        self.cell_size_nm = grid.cell_size
        self.cell_size = grid.cell_size * 1e-9
        self.dt = dt
        self.periodic_axes = tuple(sorted(set(periodic_axes)))
        self.dimension = 3 - sum(
            1 for ax in self.periodic_axes if self.shape[ax] == 1
        )
        bound = cfl_timestep(grid.cell_size, self.dimension, 1.0)
        if enforce_cfl and dt > bound * (1 + 1e-12):
            raise ValueError(
                f"dt {dt:.4e} s exceeds the CFL bound {bound:.4e} s for "
                f"{grid.cell_size} nm cells in {self.dimension} dimensions."
            )
        self.courant_number = C0 * dt / self.cell_size
        self.inv_eps = np.stack(
            [1.0 / self._edge_eps(grid.eps, c) for c in range(3)]
        )
        self.e_coefficient = self.courant_number * self.inv_eps

    def _edge_eps(self, eps: np.ndarray, component: int) -> np.ndarray:
        others = [ax for ax in range(3) if ax != component]
        padded = eps
        for ax in others:
            pad = [(0, 0)] * 3
            pad[ax] = (1, 0)
            mode = "wrap" if ax in self.periodic_axes else "edge"
            padded = np.pad(padded, pad, mode=mode)
        total = np.zeros(eps.shape)
        a, b = others
        for sa in (0, 1):
            for sb in (0, 1):
                idx = [slice(None)] * 3
                idx[a] = slice(sa, sa + eps.shape[a])
                idx[b] = slice(sb, sb + eps.shape[b])
                total += padded[tuple(idx)]
        return total / 4.0

    def source_points(self, source: DipoleSource) -> List[Tuple[int, tuple, float]]:
        """(component, E index, weight) of the E samples driven by a dipole

        Each dipole component is spread trilinearly over the (up to) eight
        samples of that E component around the dipole, so the weights of a
        component sum to its orientation entry and the current moment does
        not depend on where the dipole sits inside a cell.
        """
        points = {}
        for c in range(3):
            if source.orientation[c] == 0:
                continue
            per_axis = []
            for ax in range(3):
                u = (source.position[ax] - self.origin[ax]) / self.cell_size_nm
                if ax == c:
                    u -= 0.5
                i0 = int(np.floor(u))
                frac = u - i0
                taps = []
                for i, w in ((i0, 1.0 - frac), (i0 + 1, frac)):
                    if w <= 1e-12:
                        continue
                    if ax in self.periodic_axes:
                        i %= self.shape[ax]
                    elif not 0 <= i < self.shape[ax]:
                        raise GeometryError(
                            f"Dipole position {source.position} lies outside the grid."
                        )
                    taps.append((i, w))
                per_axis.append(taps)
            for combo in itertools.product(*per_axis):
                key = (c, tuple(i for i, _ in combo))
                weight = source.orientation[c] * math.prod(w for _, w in combo)
                points[key] = points.get(key, 0.0) + weight
        return [(c, index, weight) for (c, index), weight in points.items()]

    def source_node(self, source: DipoleSource) -> Tuple[int, int, int]:
        """Grid node closest to the dipole"""
        node = []
        for ax in range(3):
            u = (source.position[ax] - self.origin[ax]) / self.cell_size_nm
            i = int(np.floor(u + 0.5))
            node.append(i % self.shape[ax] if ax in self.periodic_axes else i)
        return tuple(node)


def _axis_slice(axis: int, part: slice) -> tuple:
    index = [slice(None)] * 3
    index[axis] = part
    return tuple(index)


def _diff_forward(
    a: np.ndarray, axis: int, periodic: bool, out: np.ndarray
) -> np.ndarray:
    """out[i] = a[i + 1] - a[i]; a is zero beyond the grid unless periodic"""
    lo, hi = _axis_slice(axis, slice(0, -1)), _axis_slice(axis, slice(1, None))
    first, last = _axis_slice(axis, slice(0, 1)), _axis_slice(axis, slice(-1, None))
    np.subtract(a[hi], a[lo], out=out[lo])
    if periodic:
        np.subtract(a[first], a[last], out=out[last])
    else:
        np.negative(a[last], out=out[last])
    return out


def _diff_backward(
    a: np.ndarray, axis: int, periodic: bool, out: np.ndarray
) -> np.ndarray:
    """out[i] = a[i] - a[i - 1]; a is zero before the grid unless periodic"""
    lo, hi = _axis_slice(axis, slice(0, -1)), _axis_slice(axis, slice(1, None))
    first, last = _axis_slice(axis, slice(0, 1)), _axis_slice(axis, slice(-1, None))
    np.subtract(a[hi], a[lo], out=out[hi])
    if periodic:
        np.subtract(a[first], a[last], out=out[first])
    else:
        out[first] = a[first]
    return out


def step(
    state: YeeState,
    grid: YeeGrid,
    cpml: Optional[CPML] = None,
    source: Optional[DipoleSource] = None,
) -> YeeState:
    """Advance the fields by one time step, in place

    :param state: Fields at t (E) and t - dt/2 (H).
    :param grid: Update coefficients.
    :param cpml: Absorbing layers, or None for bare boundaries.
    :param source: Dipole source, or None.
    :returns: The same state, advanced to t + dt.
    :raises StabilityError: if any field value is not finite.
    """
    E, H = state.E, state.H
    s = grid.courant_number
    periodic = grid.periodic_axes
    d1, d2 = state.work()

    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        _diff_forward(E[b], a, a in periodic, d1)
        _diff_forward(E[a], b, b in periodic, d2)
        if cpml is not None:
            cpml.stretch(("H", c, a), d1, a, "half")
            cpml.stretch(("H", c, b), d2, b, "half")
        d1 -= d2
        d1 *= s
        H[c] -= d1

    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        _diff_backward(H[b], a, a in periodic, d1)
        _diff_backward(H[a], b, b in periodic, d2)
        if cpml is not None:
            cpml.stretch(("E", c, a), d1, a, "int")
            cpml.stretch(("E", c, b), d2, b, "int")
        d1 -= d2
        d1 *= grid.e_coefficient[c]
        E[c] += d1

    if source is not None:
        t_half = (state.step_index + 0.5) * state.dt
        current = source.amplitude * float(source.waveform(t_half))
        if current != 0.0:
            for c, index, weight in grid.source_points(source):
                E[c][index] -= (
                    grid.e_coefficient[c][index] * ETA0 * grid.cell_size * weight * current
                )

    state.step_index += 1
    if not (np.isfinite(E.sum()) and np.isfinite(H.sum())):
        raise StabilityError(
            f"Non-finite field values at step {state.step_index}.",
            state.step_index,
        )
    return state


def field_energy(state: YeeState, grid: YeeGrid) -> float:
    """Electromagnetic energy in the grid, in J"""
    electric = sum(
        np.sum(state.E[c] ** 2 / grid.inv_eps[c]) for c in range(3)
    )
    magnetic = np.sum(state.H**2)
    return float(0.5 * constants.epsilon_0 * grid.cell_size**3 * (electric + magnetic))


class Termination(BaseModel):
    """When to stop a run

    ``fixed`` runs exactly ``steps`` steps. ``decay`` stops once the source
    is off and the field energy has dropped below decay_threshold times its
    peak, and fails with NonConvergenceError after max_steps.
    """

    model_config = ConfigDict(frozen=True)

    mode: Literal["fixed", "decay"] = "decay"
    steps: int = 1000
    decay_threshold: float = 1e-5
    max_steps: int = 40000
    check_every: int = 10
    growth_limit: float = 10.0


@dataclass
class RunInfo:
    n_steps: int
    reason: str
    energy: List[Tuple[int, float]]
    source_spectrum: Optional[np.ndarray] = None
    source_end: int = 0

    def energy_rise(self) -> float:
        """Largest relative rise of the field energy above its running
        maximum once the source is off
        """
        post = np.array([e for n, e in self.energy if n > self.source_end])
        if len(post) < 2:
            return 0.0
        running = np.maximum.accumulate(post)[:-1]
        rise = np.divide(
            post[1:], running, out=np.ones_like(running), where=running > 0
        )
        return max(0.0, float(rise.max()) - 1.0)


def propagate(
    state: YeeState,
    grid: YeeGrid,
    cpml: Optional[CPML] = None,
    source: Optional[DipoleSource] = None,
    monitors: Optional[MonitorSet] = None,
    termination: Optional[Termination] = None,
    omegas: Optional[np.ndarray] = None,
    on_step: Optional[Callable[[YeeState], None]] = None,
) -> RunInfo:
    """Step the fields until the termination criterion is met

    The field energy is checked every ``termination.check_every`` steps.
    Once the source is off, growth beyond growth_limit times the energy
    reached while it was on is reported as an instability.

    :param omegas: Frequencies of the source DFT, rad/s. Default is None.
    :param on_step: Called after every step, e.g. to record field frames.
    :returns: RunInfo with the step count, the termination reason, the
        energy trace and the DFT of the source current.
    """
    termination = termination or Termination()
    dt = state.dt
    source_end = 0 if source is None else int(math.ceil(source.t_end / dt))
    reference = field_energy(state, grid)
    peak = reference
    trace = [(state.step_index, reference)]
    source_dft = None if omegas is None else np.zeros(len(omegas), dtype=complex)

    while True:
        if source is not None and source_dft is not None:
            t_half = (state.step_index + 0.5) * dt
            source_dft += (
                source.amplitude
                * float(source.waveform(t_half))
                * np.exp(-1j * omegas * t_half)
                * dt
            )
        step(state, grid, cpml, source)
        if monitors is not None:
            monitors.accumulate(state.E, state.H, state.t_e, state.t_h, dt)
        if on_step is not None:
            on_step(state)
        n = state.step_index

        if n % termination.check_every == 0:
            energy = field_energy(state, grid)
            if not np.isfinite(energy):
                raise StabilityError(f"Non-finite field energy at step {n}.", n)
            trace.append((n, energy))
            peak = max(peak, energy)
            if n <= source_end:
                reference = peak
            elif reference > 0 and energy > termination.growth_limit * reference:
                raise StabilityError(
                    f"Field energy grew {energy / reference:.3g}-fold after the "
                    f"source was switched off, at step {n}.",
                    n,
                )
            if (
                termination.mode == "decay"
                and n > source_end
                and energy <= termination.decay_threshold * peak
            ):
                reason = "decayed"
                break

        if termination.mode == "fixed" and n >= termination.steps:
            reason = "fixed_steps"
            break
        if termination.mode == "decay" and n >= termination.max_steps:
            raise NonConvergenceError(
                f"Field energy did not decay below {termination.decay_threshold} "
                f"of its peak within {termination.max_steps} steps."
            )

    logger.debug(f"Stopped after {state.step_index} steps ({reason}).")
    return RunInfo(state.step_index, reason, trace, source_dft, source_end)


def free_space_dipole_power(
    current_moment: np.ndarray, wavelength: np.ndarray, n: float = 1.0
) -> np.ndarray:
    """Power radiated by a point current element in a uniform medium

    P = eta0 * n * k0**2 * |I l|**2 / (12 pi), with I l the current moment
    (A m) at each wavelength (nm). Works on DFT amplitudes as well.
    """
    k0 = 2 * np.pi / (np.asarray(wavelength, dtype=float) * 1e-9)
    return ETA0 * n * k0**2 * np.abs(current_moment) ** 2 / (12 * np.pi)


@dataclass
class CouplingResult:
    """Monitor powers and efficiencies at the emission wavelength"""

    P_left: float
    P_right: float
    P_top: float
    P_bottom: float
    P_total: float
    eta_wg: float
    eta_NA: float
    eta_substrate: float
    wavelength_nm: float
    n_steps: int = 0
    termination: str = ""
    spectrum: pd.DataFrame = field(default_factory=pd.DataFrame)
    energy: List[Tuple[int, float]] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def monitor_sum_fraction(self) -> float:
        total = self.P_left + self.P_right + self.P_top + self.P_bottom
        return total / self.P_total if self.P_total else float("nan")

    def check_invariants(self, tolerance: float = 0.01) -> List[str]:
        """Names of violated power bounds"""
        violations = []
        for name in ("P_left", "P_right", "P_top", "P_bottom"):
            if getattr(self, name) > self.P_total * (1 + tolerance):
                violations.append(f"{name} exceeds P_total")
        for name in ("eta_wg", "eta_NA"):
            value = getattr(self, name)
            if not -tolerance <= value <= 1 + tolerance:
                violations.append(f"{name} outside [0, 1]")
        return violations

    def to_dict(self) -> dict:
        output = {
            name: float(getattr(self, name))
            for name in (
                "P_left",
                "P_right",
                "P_top",
                "P_bottom",
                "P_total",
                "eta_wg",
                "eta_NA",
                "eta_substrate",
                "wavelength_nm",
                "monitor_sum_fraction",
            )
        }
        output["n_steps"] = int(self.n_steps)
        output["termination"] = self.termination
        output["warnings"] = list(self.warnings)
        output["spectrum"] = self.spectrum.to_dict(orient="records")
        return output


def _wavelengths(
    emission_wavelength: float, spectrum_wavelengths: Optional[Sequence[float]]
) -> np.ndarray:
    extra = DEFAULT_SPECTRUM if spectrum_wavelengths is None else spectrum_wavelengths
    values = [float(emission_wavelength)]
    values += [float(w) for w in extra if not np.isclose(w, emission_wavelength)]
    return np.array(values)


def _default_source(geometry: DeviceGeometry, source: Optional[DipoleSource]):
    if source is None:
        return DipoleSource(
            position=tuple(geometry.emitter_coordinates()),
            orientation=geometry.dipole_orientation,
            wavelength=geometry.emission_wavelength,
        )
    if not np.isclose(source.wavelength, geometry.emission_wavelength):
        raise ValueError(
            f"Source wavelength {source.wavelength} nm differs from the "
            f"emission wavelength {geometry.emission_wavelength} nm."
        )
    return source


def run_simulation(
    geometry: DeviceGeometry,
    cell_size: float,
    monitors: Optional[MonitorLayout] = None,
    source: Optional[DipoleSource] = None,
    termination: Optional[Termination] = None,
    courant: float = DEFAULT_COURANT,
    spectrum_wavelengths: Optional[Sequence[float]] = None,
    pml_thickness: int = DEFAULT_THICKNESS,
    grid: Optional[PermittivityGrid] = None,
) -> CouplingResult:
    """Simulate the dipole in the device and measure the monitor fluxes

    :param geometry: Device geometry.
    :param cell_size: Cell edge in nm.
    :param monitors: Monitor layout. Default is MonitorLayout().
    :param source: Dipole source. Default is a dipole at the emitter
        position with the geometry's orientation and wavelength.
    :param termination: Stop criterion. Default is energy decay to 1e-5.
    :param courant: Fraction of the 3-D CFL bound. Default is 0.95.
    :param spectrum_wavelengths: Extra wavelengths (nm) for the spectrum.
    :param pml_thickness: CPML thickness in cells. Default is 10.
    :param grid: Pre-built permittivity grid. Default is None.
    :returns: CouplingResult at the emission wavelength.
    """
    layout = monitors or MonitorLayout()
    source = _default_source(geometry, source)
    if grid is None:
        grid = build_permittivity_grid(geometry, cell_size)
    dt = cfl_timestep(cell_size, 3, courant)
    yee = YeeGrid(grid, dt)
    wavelengths = _wavelengths(geometry.emission_wavelength, spectrum_wavelengths)
    omegas = 2 * np.pi * C0 / (wavelengths * 1e-9)
    cpml = CPML(yee.shape, yee.cell_size, dt, C0 / (source.wavelength * 1e-9), pml_thickness)
    monitor_set = place_monitors(
        layout,
        geometry,
        yee.origin,
        cell_size,
        yee.shape,
        [cpml.interior(ax) for ax in range(3)],
        yee.source_node(source),
        omegas,
    )
    logger.info(
        f"Running FDTD on {yee.shape[0]}x{yee.shape[1]}x{yee.shape[2]} cells "
        f"of {cell_size} nm, dt = {dt:.3e} s."
    )
    state = YeeState.zeros(yee.shape, dt)
    info = propagate(state, yee, cpml, source, monitor_set, termination, omegas)

    planes = monitor_set.planes
    fluxes = {name: planes[name].flux() for name in ("left", "right", "top", "bottom")}
    p_total = total_emitted_power(monitor_set.box)

    standoff = layout.top_standoff
    eta_na = []
    recorded = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for index, wavelength in enumerate(wavelengths):
            eta_na.append(
                na_collection(
                    planes["top"],
                    layout.numerical_aperture,
                    float(p_total[index]),
                    frequency_index=index,
                    n_medium=geometry.materials["cladding"].refractive_index,
                    standoff=standoff,
                    min_standoff=wavelength / 2,
                )
            )
    for warning in caught:
        message = str(warning.message)
        if message not in recorded:
            recorded.append(message)
            logger.warning(message)

    with np.errstate(divide="ignore", invalid="ignore"):
        eta_wg = (fluxes["left"] + fluxes["right"]) / p_total
        eta_sub = fluxes["bottom"] / p_total
    spectrum = pd.DataFrame(
        {
            "wavelength_nm": wavelengths,
            "eta_wg": eta_wg,
            "eta_na": eta_na,
            "P_left": fluxes["left"],
            "P_right": fluxes["right"],
            "P_top": fluxes["top"],
            "P_bottom": fluxes["bottom"],
            "P_total": p_total,
        }
    ).sort_values("wavelength_nm", ignore_index=True)

    result = CouplingResult(
        P_left=float(fluxes["left"][0]),
        P_right=float(fluxes["right"][0]),
        P_top=float(fluxes["top"][0]),
        P_bottom=float(fluxes["bottom"][0]),
        P_total=float(p_total[0]),
        eta_wg=float(eta_wg[0]),
        eta_NA=float(eta_na[0]),
        eta_substrate=float(eta_sub[0]),
        wavelength_nm=float(wavelengths[0]),
        n_steps=info.n_steps,
        termination=info.reason,
        spectrum=spectrum,
        energy=info.energy,
        warnings=recorded,
    )
    rise = info.energy_rise()
    if rise > ENERGY_RIPPLE:
        message = (
            f"Field energy rose by {rise:.2%} after the source was switched off."
        )
        result.warnings.append(message)
        logger.warning(message)
    violations = result.check_invariants()
    if violations:
        result.warnings.extend(violations)
        logger.warning(f"Power bounds violated: {violations}.")
    logger.info(
        f"eta_wg = {result.eta_wg:.4f}, eta_NA = {result.eta_NA:.4f} "
        f"after {info.n_steps} steps."
    )
    return result


@dataclass
class SliceResult:
    """Outcome of a 2-D run: field frames and per-monitor powers"""

    plane: str
    frames: pd.DataFrame
    fluxes: Dict[str, float]
    P_total: float
    n_steps: int = 0
    termination: str = ""
    warnings: List[str] = field(default_factory=list)

    @property
    def eta_wg(self) -> float:
        guided = self.fluxes.get("left", 0.0) + self.fluxes.get("right", 0.0)
        return guided / self.P_total if self.P_total else float("nan")

    def to_dict(self) -> dict:
        return {
            "plane": self.plane,
            "fluxes": {k: float(v) for k, v in sorted(self.fluxes.items())},
            "P_total": float(self.P_total),
            "eta_wg": float(self.eta_wg),
            "n_steps": int(self.n_steps),
            "termination": self.termination,
            "warnings": list(self.warnings),
        }


def run_simulation_2d(
    geometry: DeviceGeometry,
    plane: str,
    cell_size: float,
    monitors: Optional[MonitorLayout] = None,
    source: Optional[DipoleSource] = None,
    termination: Optional[Termination] = None,
    courant: float = DEFAULT_COURANT,
    frame_every: int = 0,
    pml_thickness: int = DEFAULT_THICKNESS,
    grid: Optional[PermittivityGrid] = None,
) -> SliceResult:
    """Simulate a single-cell slice through the emitter

    The slice is periodic along its normal, so a dipole in the plane
    radiates as a line source (TE) and a normal dipole as TM.

    :param plane: 'xz' or 'xy'.
    :param frame_every: Record |E|^2 on the plane every this many steps;
        0 records nothing. Default is 0.
    :returns: SliceResult; frames has columns frame, t_s, the two in-plane
        coordinates in nm and value.
    """
    if plane not in ("xz", "xy"):
        raise ValueError(f"plane should be 'xz' or 'xy', but is {plane}.")
    layout = monitors or MonitorLayout()
    source = _default_source(geometry, source)
    normal = AXES[{"xz": "y", "xy": "z"}[plane]]
    if grid is None:
        grid = geometry_slice(geometry, plane, cell_size)
    dt = cfl_timestep(cell_size, 2, courant)
    yee = YeeGrid(grid, dt, periodic_axes=(normal,))
    omega = np.array([2 * np.pi * C0 / (geometry.emission_wavelength * 1e-9)])
    cpml = CPML(
        yee.shape,
        yee.cell_size,
        dt,
        C0 / (source.wavelength * 1e-9),
        pml_thickness,
        periodic_axes=(normal,),
    )
    monitor_set = place_monitors(
        layout,
        geometry,
        yee.origin,
        cell_size,
        yee.shape,
        [cpml.interior(ax) for ax in range(3)],
        yee.source_node(source),
        omega,
        periodic_axes=(normal,),
    )

    in_plane = [ax for ax in range(3) if ax != normal]
    coords = [grid.node_coordinates(ax) for ax in in_plane]
    uu, vv = np.meshgrid(*coords, indexing="ij")
    frames = []

    def record(state: YeeState):
        if frame_every and state.step_index % frame_every == 0:
            intensity = np.squeeze((state.E**2).sum(axis=0), axis=normal)
            frames.append(
                pd.DataFrame(
                    {
                        "frame": state.step_index // frame_every,
                        "t_s": state.t_e,
                        f"{'xyz'[in_plane[0]]}_nm": uu.ravel(),
                        f"{'xyz'[in_plane[1]]}_nm": vv.ravel(),
                        "value": intensity.ravel(),
                    }
                )
            )

    logger.info(
        f"Running 2-D FDTD in the {plane} plane on "
        f"{yee.shape[in_plane[0]]}x{yee.shape[in_plane[1]]} cells."
    )
    state = YeeState.zeros(yee.shape, dt)
    info = propagate(state, yee, cpml, source, monitor_set, termination, on_step=record)

    fluxes = {name: float(m.flux()[0]) for name, m in monitor_set.planes.items()}
    p_total = float(total_emitted_power(monitor_set.box)[0])
    return SliceResult(
        plane=plane,
        frames=pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(),
        fluxes=fluxes,
        P_total=p_total,
        n_steps=info.n_steps,
        termination=info.reason,
    )
