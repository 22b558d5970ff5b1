"""DFT flux monitors for the Yee solver

A monitor is an axis-aligned plane through integer Yee nodes along its
normal. The tangential E and H components are interpolated to the cell-face
centers of the plane and accumulated as running DFTs, so the time-averaged
Poynting flux at every monitored frequency follows after the run.
"""

import itertools
import warnings
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import constants

from wgqdpy import wglogging
from wgqdpy.src.exceptions import MonitorConfigurationError
from wgqdpy.src.geometry import DeviceGeometry

logger = wglogging.get_wg_logger()

ETA0 = np.sqrt(constants.mu_0 / constants.epsilon_0)


class MonitorLayout(BaseModel):
    """Placement of the flux monitors, lengths in nm

    Waveguide monitors sit waveguide_offset from the crossing center and
    extend margin beyond the guide cross-section on every side. The top
    plane is top_standoff above the guide, the bottom plane bottom_depth
    below the substrate surface. The P_total box has faces box_cells cells
    from the source node.
    """

    model_config = ConfigDict(frozen=True)

    waveguide_offset: float = 1200.0
    margin: float = 300.0
    top_standoff: float = 500.0
    bottom_depth: float = 500.0
    box_cells: int = 3
    numerical_aperture: float = 0.9


def _tangential_axes(axis: int) -> Tuple[int, int]:
    # cyclic order, so that S_n = E_t1 H_t2 - E_t2 H_t1
    return (axis + 1) % 3, (axis + 2) % 3


class FluxMonitor:
    """Running DFT of the tangential fields on a plane

    :param name: Monitor name, e.g. 'left'.
    :param axis: Normal axis (0, 1 or 2).
    :param index: Integer node index of the plane along the normal.
    :param ranges: Cell index range [start, stop) per axis; the entry of
        the normal axis is ignored.
    :param sign: +1 if flux towards +axis counts positive, -1 otherwise.
    :param omegas: Angular frequencies in rad/s.
    :param shape: Grid shape.
    :param cell_size: Cell edge in m.
    :param periodic_axes: Axes with periodic wrap-around.
    """

    def __init__(
        self,
        name: str,
        axis: int,
        index: int,
        ranges: Sequence[Tuple[int, int]],
        sign: int,
        omegas: np.ndarray,
        shape: Tuple[int, int, int],
        cell_size: float,
        periodic_axes: Sequence[int] = (),
    ):
        if sign not in (-1, 1):
            raise ValueError(f"sign should be +1 or -1, but is {sign}.")
        self.name = name
        self.axis = axis
        self.index = int(index)
        self.sign = sign
        self.omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        self.cell_size = cell_size
        self.ranges = [tuple(int(v) for v in r) for r in ranges]
        self.ranges[axis] = (self.index, self.index + 1)
        for ax, (start, stop) in enumerate(self.ranges):
            if stop <= start:
                raise MonitorConfigurationError(
                    f"Monitor '{name}' has an empty range {start}:{stop} "
                    f"along axis {ax}."
                )
        self.t1, self.t2 = _tangential_axes(axis)
        plane_shape = [stop - start for start, stop in self.ranges]
        del plane_shape[axis]
        self.plane_shape = tuple(plane_shape)

        self._samplers = {}
        for kind in ("E", "H"):
            for component in (self.t1, self.t2):
                self._samplers[(kind, component)] = self._sampler(
                    kind, component, shape, periodic_axes
                )
        self.dft = {
            key: np.zeros((self.omegas.size,) + self.plane_shape, dtype=complex)
            for key in self._samplers
        }

    def _sampler(
        self, kind: str, component: int, shape, periodic_axes
    ) -> List[tuple]:
        """Index tuples whose mean interpolates a component onto the plane"""
        if kind == "E":
            offsets = [0.5 if ax == component else 0.0 for ax in range(3)]
        else:
            offsets = [0.0 if ax == component else 0.5 for ax in range(3)]
        targets = [0.0 if ax == self.axis else 0.5 for ax in range(3)]

        per_axis = []
        for ax in range(3):
            base = np.arange(*self.ranges[ax])
            if offsets[ax] == targets[ax]:
                shifts = [0]
            elif offsets[ax] == 0.0:
                shifts = [0, 1]
            else:
                shifts = [-1, 0]
            indices = []
            for shift in shifts:
                idx = base + shift
                if ax in periodic_axes:
                    idx = idx % shape[ax]
                else:
                    idx = np.clip(idx, 0, shape[ax] - 1)
                indices.append(idx)
            per_axis.append(indices)
        return [np.ix_(*combo) for combo in itertools.product(*per_axis)]

    def sample(self, field: np.ndarray, kind: str, component: int) -> np.ndarray:
        """Interpolated component on the plane, normal axis dropped"""
        samplers = self._samplers[(kind, component)]
        total = sum(field[idx] for idx in samplers) / len(samplers)
        return np.squeeze(total, axis=self.axis)

    def accumulate(
        self, E: np.ndarray, H: np.ndarray, t_e: float, t_h: float, dt: float
    ):
        """Add one time step to the running DFTs

        :param E: Electric field, shape (3, Nx, Ny, Nz), at time t_e.
        :param H: Normalized magnetic field eta0*H at time t_h.
        """
        phase_e = (np.exp(-1j * self.omegas * t_e) * dt)[:, None, None]
        phase_h = (np.exp(-1j * self.omegas * t_h) * dt)[:, None, None]
        for component in (self.t1, self.t2):
            self.dft[("E", component)] += phase_e * self.sample(
                E[component], "E", component
            )[None]
            self.dft[("H", component)] += phase_h * self.sample(
                H[component], "H", component
            )[None]

    def _fields(self):
        return (
            self.dft[("E", self.t1)],
            self.dft[("E", self.t2)],
            self.dft[("H", self.t1)] / ETA0,
            self.dft[("H", self.t2)] / ETA0,
        )

    def flux(self) -> np.ndarray:
        """Time-averaged power through the plane per frequency

        Positive in the direction given by ``sign``.
        """
        e1, e2, h1, h2 = self._fields()
        density = 0.5 * np.real(e1 * np.conj(h2) - e2 * np.conj(h1))
        return self.sign * density.sum(axis=(1, 2)) * self.cell_size**2

    def reset(self):
        for value in self.dft.values():
            value[...] = 0.0


def total_emitted_power(box: Sequence[FluxMonitor]) -> np.ndarray:
    """Sum of outward fluxes through a closed monitor box

    :param box: Face monitors with outward-positive signs.
    :returns: Total emitted power per monitored frequency.
    :raises MonitorConfigurationError: if the total is negative beyond
        1% of the summed absolute face fluxes.
    """
    fluxes = np.array([monitor.flux() for monitor in box])
    total = fluxes.sum(axis=0)
    scale = np.abs(fluxes).sum(axis=0)
    if np.any(total < -0.01 * scale):
        raise MonitorConfigurationError(
            f"The source box reports a negative emitted power "
            f"({total.min():.3e}); check the face orientations."
        )
    return total


def na_collection(
    top_monitor: FluxMonitor,
    numerical_aperture: float,
    p_total: float,
    frequency_index: int = 0,
    n_medium: float = 1.0,
    standoff: Optional[float] = None,
    min_standoff: Optional[float] = None,
) -> float:
    """Fraction of the emitted power collected by an objective

    The monitor fields are Fourier-transformed over the plane and every
    plane-wave component with transverse wavenumber above NA*k0 is
    discarded before computing the flux.

    :param top_monitor: Horizontal monitor above the structure.
    :param numerical_aperture: Objective NA in [0, 1].
    :param p_total: Total emitted power at the same frequency.
    :param frequency_index: Which monitored frequency to use. Default is 0.
    :param n_medium: Refractive index above the structure. Default is 1.
    :param standoff: Height of the monitor above the structure in nm.
    :param min_standoff: Minimum standoff in nm; a warning is issued if
        standoff is smaller.
    :returns: Collected power / p_total.
    """
    if not 0.0 <= numerical_aperture <= 1.0:
        raise ValueError(
            f"numerical_aperture should be in [0, 1], but is {numerical_aperture}."
        )
    if standoff is not None and min_standoff is not None and standoff < min_standoff:
        warnings.warn(
            f"Monitor '{top_monitor.name}' is {standoff} nm above the structure, "
            f"closer than the {min_standoff} nm near-field standoff."
        )
    if numerical_aperture == 0.0 or p_total == 0.0:
        return 0.0

    e1, e2, h1, h2 = (f[frequency_index] for f in top_monitor._fields())
    n1, n2 = top_monitor.plane_shape
    d = top_monitor.cell_size
    k1 = 2 * np.pi * np.fft.fftfreq(n1, d)
    k2 = 2 * np.pi * np.fft.fftfreq(n2, d)
    k0 = top_monitor.omegas[frequency_index] / constants.c
    kk1, kk2 = np.meshgrid(k1, k2, indexing="ij")
    mask = kk1**2 + kk2**2 <= (numerical_aperture * n_medium * k0) ** 2

    f_e1, f_e2, f_h1, f_h2 = (np.fft.fft2(f) for f in (e1, e2, h1, h2))
    # Parseval: sum_r f g* = sum_k F G* / N
    density = 0.5 * np.real(f_e1 * np.conj(f_h2) - f_e2 * np.conj(f_h1))
    collected = top_monitor.sign * np.sum(density[mask]) / (n1 * n2) * d**2
    return float(collected / p_total)


class MonitorSet:
    """Named plane monitors plus the faces of the P_total box"""

    def __init__(self, planes: Dict[str, FluxMonitor], box: List[FluxMonitor]):
        self.planes = planes
        self.box = box

    def all(self) -> List[FluxMonitor]:
        return list(self.planes.values()) + list(self.box)

    def accumulate(self, E, H, t_e, t_h, dt):
        for monitor in self.all():
            monitor.accumulate(E, H, t_e, t_h, dt)


def source_box(
    center: Sequence[int],
    box_cells: int,
    omegas: np.ndarray,
    shape: Tuple[int, int, int],
    cell_size: float,
    periodic_axes: Sequence[int] = (),
) -> List[FluxMonitor]:
    """Closed box of face monitors, box_cells cells around a node

    Faces normal to periodic axes are omitted; the box is then closed by
    periodicity.
    """
    lo = [int(c) - box_cells for c in center]
    hi = [int(c) + box_cells for c in center]
    ranges = []
    for ax in range(3):
        if ax in periodic_axes:
            ranges.append((0, shape[ax]))
        else:
            if lo[ax] < 0 or hi[ax] >= shape[ax]:
                raise MonitorConfigurationError(
                    f"Source box does not fit in the grid along axis {ax}."
                )
            ranges.append((lo[ax], hi[ax]))

    faces = []
    for ax in range(3):
        if ax in periodic_axes:
            continue
        for index, sign, label in ((lo[ax], -1, "min"), (hi[ax], 1, "max")):
            faces.append(
                FluxMonitor(
                    f"box_{'xyz'[ax]}{label}",
                    ax,
                    index,
                    ranges,
                    sign,
                    omegas,
                    shape,
                    cell_size,
                    periodic_axes,
                )
            )
    return faces


def _node_index(coordinate: float, origin: float, cell_size: float) -> int:
    return int(round((coordinate - origin) / cell_size))


def _cell_range(
    lo: float, hi: float, origin: float, cell_size: float, bounds: Tuple[int, int]
) -> Tuple[int, int]:
    start = int(np.floor((lo - origin) / cell_size + 1e-9))
    stop = int(np.ceil((hi - origin) / cell_size - 1e-9))
    return max(start, bounds[0]), min(stop, bounds[1])


def place_monitors(
    layout: MonitorLayout,
    geometry: DeviceGeometry,
    origin: Sequence[float],
    cell_size_nm: float,
    shape: Tuple[int, int, int],
    interior: Sequence[Tuple[int, int]],
    source_node: Sequence[int],
    omegas: np.ndarray,
    periodic_axes: Sequence[int] = (),
) -> MonitorSet:
    """Build the waveguide, top, bottom and source-box monitors

    In a 2-D run (one periodic axis) only monitors with a non-periodic
    normal are created. For an x-y slice the y-normal planes take the place
    of top and bottom and are named 'y_minus' and 'y_plus'.

    :param interior: Cell range [start, stop) outside the CPML per axis.
    :param source_node: Grid node closest to the dipole.
    :returns: MonitorSet.
    """
    d_m = cell_size_nm * 1e-9
    g = geometry
    half_w = g.waveguide_width / 2
    h = g.waveguide_height
    m = layout.margin

    def in_range(axis, lo=None, hi=None):
        if axis in periodic_axes:
            return 0, shape[axis]
        if lo is None:
            return tuple(interior[axis])
        return _cell_range(lo, hi, origin[axis], cell_size_nm, interior[axis])

    def plane(name, axis, coordinate, sign, ranges):
        index = _node_index(coordinate, origin[axis], cell_size_nm)
        start, stop = interior[axis]
        if not start <= index < stop:
            raise MonitorConfigurationError(
                f"Monitor '{name}' at {coordinate} nm lies outside the "
                f"absorber-free interior."
            )
        return FluxMonitor(
            name, axis, index, ranges, sign, omegas, shape, d_m, periodic_axes
        )

    full = [in_range(ax) for ax in range(3)]
    planes = {}
    if 0 not in periodic_axes:
        guide_x = [
            (0, 0),
            in_range(1, -half_w - m, half_w + m),
            in_range(2, -m, h + m),
        ]
        planes["left"] = plane("left", 0, -layout.waveguide_offset, -1, guide_x)
        planes["right"] = plane("right", 0, layout.waveguide_offset, 1, guide_x)
    if 2 not in periodic_axes:
        planes["top"] = plane("top", 2, h + layout.top_standoff, 1, full)
        planes["bottom"] = plane("bottom", 2, -layout.bottom_depth, -1, full)
    elif 1 not in periodic_axes:
        guide_y = [in_range(0, -half_w - m, half_w + m), (0, 0), full[2]]
        planes["y_minus"] = plane(
            "y_minus", 1, -layout.waveguide_offset, -1, guide_y
        )
        planes["y_plus"] = plane("y_plus", 1, layout.waveguide_offset, 1, guide_y)

    box = source_box(
        source_node, layout.box_cells, omegas, shape, d_m, periodic_axes
    )
    logger.debug(
        f"Placed monitors {sorted(planes)} and a {len(box)}-face source box."
    )
    return MonitorSet(planes, box)
