"""Parametric waveguide-crossing device and its permittivity grid

The device is a Ta2O5 collection waveguide along x, crossed by an excitation
waveguide along y, on a SiO2 substrate. A cylindrical hole at the crossing
center holds a core-shell CQD sphere with the point dipole at its center.

Coordinates are in nanometers. The substrate top (waveguide bottom) is at
z = 0 and the crossing center at x = y = 0.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import ndimage

from wgqdpy import wglogging
from wgqdpy.src.exceptions import GeometryError

logger = wglogging.get_wg_logger()

# rasterization order: later roles overwrite earlier ones.
MATERIAL_ROLES = ["cladding", "substrate", "waveguide", "cqd_shell", "cqd_core"]
AXES = {"x": 0, "y": 1, "z": 2}

DEFAULT_SUB_SAMPLES = 4
DEFAULT_MAX_CELLS = 20_000_000
MIN_SUBSTRATE_DEPTH = 600.0


class Material(BaseModel):
    """Isotropic, non-dispersive material at the simulation wavelength"""

    model_config = ConfigDict(frozen=True)

    name: str
    refractive_index: float

    @property
    def permittivity(self) -> float:
        return self.refractive_index**2


def default_materials() -> Dict[str, Material]:
    """Literature indices at 705 nm; the publication names materials only"""
    return {
        "substrate": Material(name="SiO2", refractive_index=1.45),
        "waveguide": Material(name="Ta2O5", refractive_index=2.12),
        "cladding": Material(name="air", refractive_index=1.0),
        "cqd_core": Material(name="CQD core", refractive_index=2.6),
        "cqd_shell": Material(name="CQD shell", refractive_index=2.4),
    }


class DeviceGeometry(BaseModel):
    """Waveguide crossing with a hole and an embedded CQD

    All lengths in nm. ``emitter_position`` is an offset from the resting
    position of the CQD: centered in the hole, sphere touching the hole
    bottom. Use :func:`validate_geometry` to check the invariants.
    """

    model_config = ConfigDict(frozen=True)

    waveguide_width: float = 700.0
    waveguide_height: float = 100.0
    hole_radius: float = 25.0
    hole_depth: float = 100.0
    emitter_position: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    dipole_orientation: Tuple[float, float, float] = (0.0, 1.0, 0.0)
    cqd_core_radius: float = 2.5
    cqd_shell_radius: float = 5.0
    materials: Dict[str, Material] = Field(default_factory=default_materials)
    emission_wavelength: float = 705.0
    domain_extent: Tuple[float, float, float] = (4000.0, 4000.0, 2500.0)
    substrate_depth: float = 1200.0
    box_thickness: float = 2600.0
    crossing: bool = True

    @field_validator("dipole_orientation", mode="before")
    @classmethod
    def _axis_label_to_vector(cls, value):
        if isinstance(value, str):
            if value not in AXES:
                raise ValueError(
                    f"dipole_orientation should be one of {list(AXES)} "
                    f"or a vector, but is {value}."
                )
            vector = [0.0, 0.0, 0.0]
            vector[AXES[value]] = 1.0
            return tuple(vector)
        return value

    @field_validator("materials", mode="before")
    @classmethod
    def _fill_default_materials(cls, value):
        # a config may override only some of the materials
        materials = default_materials()
        for role, material in (value or {}).items():
            materials[role] = material
        return materials

    def domain_bounds(self) -> np.ndarray:
        """Array of shape (3, 2) with the (min, max) domain bound per axis"""
        lx, ly, lz = self.domain_extent
        z_min = -self.substrate_depth
        return np.array(
            [[-lx / 2, lx / 2], [-ly / 2, ly / 2], [z_min, z_min + lz]]
        )

    def hole_bottom(self) -> float:
        return self.waveguide_height - self.hole_depth

    def emitter_coordinates(self) -> np.ndarray:
        """Absolute (x, y, z) of the dipole, i.e. the CQD sphere center"""
        offset = np.asarray(self.emitter_position, dtype=float)
        rest = np.array([0.0, 0.0, self.hole_bottom() + self.cqd_shell_radius])
        return rest + offset

    def orientation_label(self) -> Optional[str]:
        """'x', 'y' or 'z' for axis-aligned dipoles, None otherwise"""
        for label, axis in AXES.items():
            vector = np.zeros(3)
            vector[axis] = 1.0
            if np.allclose(self.dipole_orientation, vector):
                return label
        return None

    def updated(self, **changes) -> "DeviceGeometry":
        """Copy of this geometry with some fields changed"""
        return DeviceGeometry.model_validate(
            {**self.model_dump(), **changes}
        )


@dataclass(frozen=True)
class ValidationReport:
    violations: List[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return len(self.violations) == 0


@dataclass(frozen=True)
class PermittivityGrid:
    """Per-cell relative permittivity on a uniform cubic grid

    ``origin`` is the lower corner of cell (0, 0, 0) in nm.
    """

    cell_size: float
    origin: Tuple[float, float, float]
    eps: np.ndarray

    @property
    def dimensions(self) -> Tuple[int, int, int]:
        return tuple(self.eps.shape)

    def cell_centers(self, axis: int) -> np.ndarray:
        n = self.eps.shape[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.cell_size

    def node_coordinates(self, axis: int) -> np.ndarray:
        """Coordinates of the integer Yee nodes (cell corners) along axis"""
        n = self.eps.shape[axis]
        return self.origin[axis] + np.arange(n) * self.cell_size


def validate_geometry(geometry: DeviceGeometry) -> ValidationReport:
    """List every violated geometry invariant

    :param geometry: Geometry to check.
    :returns: ValidationReport; ``report.valid`` is True if nothing is violated.
    """
    violations = []
    g = geometry

    if g.waveguide_width <= 0 or g.waveguide_height <= 0:
        violations.append(
            f"waveguide dimensions should be > 0, but are "
            f"{g.waveguide_width} x {g.waveguide_height} nm."
        )
    if g.hole_radius < 0:
        violations.append(f"hole_radius should be >= 0, but is {g.hole_radius}.")
    if not 0 <= g.hole_depth <= g.waveguide_height:
        violations.append(
            f"hole_depth should be in [0, {g.waveguide_height}], "
            f"but is {g.hole_depth}."
        )
    if not g.cqd_core_radius > 0:
        violations.append(
            f"cqd_core_radius should be > 0, but is {g.cqd_core_radius}."
        )
    if g.cqd_shell_radius < g.cqd_core_radius:
        violations.append(
            f"cqd_shell_radius ({g.cqd_shell_radius}) should enclose "
            f"cqd_core_radius ({g.cqd_core_radius})."
        )
    if g.emission_wavelength <= 0:
        violations.append(
            f"emission_wavelength should be > 0, but is "
            f"{g.emission_wavelength}."
        )
    if any(extent <= 0 for extent in g.domain_extent):
        violations.append(
            f"domain_extent should be positive, but is {g.domain_extent}."
        )
    if g.substrate_depth < MIN_SUBSTRATE_DEPTH:
        violations.append(
            f"substrate_depth should be >= {MIN_SUBSTRATE_DEPTH} nm, "
            f"but is {g.substrate_depth}."
        )
    if g.substrate_depth + g.waveguide_height >= g.domain_extent[2]:
        violations.append(
            "domain_extent along z does not leave room above the waveguide."
        )

    missing = [role for role in MATERIAL_ROLES if role not in g.materials]
    if missing:
        violations.append(f"materials are missing for roles {missing}.")
    for role, material in g.materials.items():
        if material.refractive_index < 1:
            violations.append(
                f"refractive_index of {role} ({material.name}) should be "
                f">= 1, but is {material.refractive_index}."
            )

    norm = float(np.linalg.norm(g.dipole_orientation))
    if not np.isclose(norm, 1.0, atol=1e-9):
        violations.append(
            f"dipole_orientation should be a unit vector, but has norm {norm}."
        )

    bounds = g.domain_bounds()
    center = g.emitter_coordinates()
    radius = g.cqd_shell_radius
    if np.any(center - radius < bounds[:, 0]) or np.any(
        center + radius > bounds[:, 1]
    ):
        violations.append(
            f"emitter sphere at {center.tolist()} with radius {radius} "
            "does not fit inside the simulation domain."
        )

    return ValidationReport(violations=violations)


def material_ids(
    geometry: DeviceGeometry, x: np.ndarray, y: np.ndarray, z: np.ndarray
) -> np.ndarray:
    """Index into MATERIAL_ROLES for every (broadcast) point

    :param geometry: Device geometry.
    :param x: x-coordinates in nm; x, y and z are broadcast together.
    :param y: y-coordinates in nm.
    :param z: z-coordinates in nm.
    :returns: int8 array with the material role index per point.
    """
    g = geometry
    x, y, z = np.broadcast_arrays(x, y, z)
    role = {name: i for i, name in enumerate(MATERIAL_ROLES)}

    ids = np.where(z < 0, role["substrate"], role["cladding"]).astype(np.int8)

    half_width = g.waveguide_width / 2
    in_height = (z >= 0) & (z <= g.waveguide_height)
    in_arms = np.abs(y) <= half_width
    if g.crossing:
        in_arms = in_arms | (np.abs(x) <= half_width)
    ids[in_height & in_arms] = role["waveguide"]

    if g.hole_radius > 0 and g.hole_depth > 0:
        in_hole = (
            (x**2 + y**2 <= g.hole_radius**2)
            & (z >= g.hole_bottom())
            & (z <= g.waveguide_height)
        )
        ids[in_hole] = role["cladding"]

    cx, cy, cz = g.emitter_coordinates()
    dist2 = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2
    ids[dist2 <= g.cqd_shell_radius**2] = role["cqd_shell"]
    ids[dist2 <= g.cqd_core_radius**2] = role["cqd_core"]
    return ids


def _cell_counts(extent: float, cell_size: float) -> int:
    n_float = extent / cell_size
    n = int(round(n_float))
    if n < 1 or not np.isclose(n_float, n, rtol=0, atol=1e-6):
        raise GeometryError(
            f"domain extent {extent} nm is not a whole number of "
            f"{cell_size} nm cells."
        )
    return n


def build_permittivity_grid(
    geometry: DeviceGeometry,
    cell_size: float,
    sub_samples: int = DEFAULT_SUB_SAMPLES,
    max_cells: int = DEFAULT_MAX_CELLS,
    slice_axis: Optional[str] = None,
) -> PermittivityGrid:
    """Rasterize the device into a permittivity grid

    Every cell gets the volume-fraction weighted permittivity of the materials
    overlapping it, estimated from sub_samples**3 points per cell. Only
    cells next to a material boundary, or near the hole and the CQD, are
    sub-sampled; every other cell takes the material at its center. With
    slice_axis set, the grid is a single cell thick along that axis, centered
    on the emitter, and sampled on the plane through the emitter only.

    :param geometry: Device geometry; must pass validate_geometry.
    :param cell_size: Cubic cell edge in nm.
    :param sub_samples: Sub-points per cell edge. Default is 4.
    :param max_cells: Cell-count budget. Default is 2e7.
    :param slice_axis: Normal axis ('x', 'y' or 'z') of a 2-D slice, or None
        for the full 3-D grid. Default is None.
    :returns: PermittivityGrid covering the domain exactly.
    """
    report = validate_geometry(geometry)
    if not report.valid:
        raise GeometryError(
            "Invalid geometry: " + " ".join(report.violations)
        )
    if not cell_size > 0:
        raise ValueError(f"cell_size should be > 0, but is {cell_size}.")
    if cell_size > geometry.waveguide_height / 2:
        raise GeometryError(
            f"cell_size {cell_size} nm gives fewer than 2 cells through the "
            f"{geometry.waveguide_height} nm waveguide."
        )

    bounds = geometry.domain_bounds()
    shape = [
        _cell_counts(bounds[axis, 1] - bounds[axis, 0], cell_size)
        for axis in range(3)
    ]
    origin = [float(bounds[axis, 0]) for axis in range(3)]
    samples = [sub_samples] * 3

    if slice_axis is not None:
        axis = AXES[slice_axis]
        shape[axis] = 1
        samples[axis] = 1
        origin[axis] = float(geometry.emitter_coordinates()[axis]) - cell_size / 2

    n_cells = int(np.prod(shape))
    if n_cells > max_cells:
        raise GeometryError(
            f"cell_size {cell_size} nm yields {n_cells} cells, which exceeds "
            f"the budget of {max_cells}."
        )

    eps_values = np.array(
        [geometry.materials[role].permittivity for role in MATERIAL_ROLES]
    )
    centers = [
        origin[axis] + (np.arange(shape[axis]) + 0.5) * cell_size for axis in range(3)
    ]
    ids = material_ids(
        geometry,
        centers[0][:, None, None],
        centers[1][None, :, None],
        centers[2][None, None, :],
    )
    eps = eps_values[ids]

    # cells whose neighbourhood holds one material lie inside it; the hole
    # and the CQD may be smaller than a cell and are always sub-sampled
    mixed = ndimage.maximum_filter(ids, size=3) != ndimage.minimum_filter(ids, size=3)
    mixed |= _feature_cells(geometry, centers, cell_size)
    cells = np.argwhere(mixed)

    offsets = [(np.arange(n) + 0.5) / n - 0.5 for n in samples]
    sub = np.stack(
        [g.ravel() for g in np.meshgrid(*offsets, indexing="ij")], axis=1
    ) * cell_size
    n_sub = sub.shape[0]
    # keep the sample array of a chunk around 4e6 points
    chunk = max(1, int(4e6 // n_sub))
    for start in range(0, len(cells), chunk):
        block = cells[start:start + chunk]
        points = [
            centers[axis][block[:, axis]][:, None] + sub[None, :, axis]
            for axis in range(3)
        ]
        sub_ids = material_ids(geometry, *points)
        counts = np.stack(
            [(sub_ids == role).sum(axis=1) for role in range(len(MATERIAL_ROLES))],
            axis=-1,
        )
        # integer counts make the result independent of sample order
        eps[tuple(block.T)] = (counts @ eps_values) / n_sub

    logger.debug(
        f"Rasterized geometry on {shape[0]}x{shape[1]}x{shape[2]} cells "
        f"of {cell_size} nm; {len(cells)} cells were sub-sampled."
    )
    return PermittivityGrid(cell_size=float(cell_size), origin=tuple(origin), eps=eps)


def _feature_cells(
    geometry: DeviceGeometry, centers: List[np.ndarray], cell_size: float
) -> np.ndarray:
    """Cells within one cell of the bounding boxes of the hole and the CQD"""
    g = geometry
    boxes = []
    cx, cy, cz = g.emitter_coordinates()
    r = g.cqd_shell_radius
    boxes.append(((cx - r, cx + r), (cy - r, cy + r), (cz - r, cz + r)))
    if g.hole_radius > 0 and g.hole_depth > 0:
        rh = g.hole_radius
        boxes.append(((-rh, rh), (-rh, rh), (g.hole_bottom(), g.waveguide_height)))

    flags = np.zeros(tuple(c.size for c in centers), dtype=bool)
    for box in boxes:
        near = [
            np.abs(centers[axis] - np.clip(centers[axis], *box[axis])) <= cell_size
            for axis in range(3)
        ]
        flags |= near[0][:, None, None] & near[1][None, :, None] & near[2][None, None, :]
    return flags


def geometry_slice(
    geometry: DeviceGeometry, plane: str, cell_size: float, **kwargs
) -> PermittivityGrid:
    """Single-cell-thick permittivity grid through the emitter

    :param geometry: Device geometry.
    :param plane: 'xy', 'xz' or 'yz'.
    :param cell_size: Cell edge in nm.
    :returns: PermittivityGrid with one cell along the plane normal.
    """
    normals = {"xy": "z", "xz": "y", "yz": "x"}
    if plane not in normals:
        raise ValueError(
            f"plane should be one of {list(normals)}, but is {plane}."
        )
    return build_permittivity_grid(
        geometry, cell_size, slice_axis=normals[plane], **kwargs
    )


def dielectric_volume(grid: PermittivityGrid, eps_background: float = 1.0) -> float:
    """Sum of (eps - eps_background) * cell volume over the grid, in nm^3"""
    return float(np.sum(grid.eps - eps_background) * grid.cell_size**3)


def analytic_dielectric_volume(
    geometry: DeviceGeometry, eps_background: float = 1.0
) -> float:
    """Closed-form volume integral of (eps - eps_background) over the domain

    Assumes the hole lies inside the crossing (hole_radius <= width / 2)
    and the CQD sphere lies entirely in the cladding-filled hole.
    """
    g = geometry
    lx, ly, _ = g.domain_extent
    eps = {role: g.materials[role].permittivity for role in MATERIAL_ROLES}
    w, h = g.waveguide_width, g.waveguide_height

    volume = (eps["substrate"] - eps_background) * lx * ly * g.substrate_depth
    volume += (eps["cladding"] - eps_background) * lx * ly * (
        g.domain_extent[2] - g.substrate_depth
    )
    guide_area = w * lx + (w * ly - w * w if g.crossing else 0.0)
    volume += (eps["waveguide"] - eps["cladding"]) * h * guide_area
    volume -= (eps["waveguide"] - eps["cladding"]) * np.pi * g.hole_radius**2 * g.hole_depth

    shell = 4.0 / 3.0 * np.pi * (g.cqd_shell_radius**3 - g.cqd_core_radius**3)
    core = 4.0 / 3.0 * np.pi * g.cqd_core_radius**3
    volume += (eps["cqd_shell"] - eps["cladding"]) * shell
    volume += (eps["cqd_core"] - eps["cladding"]) * core
    return float(volume)


def permittivity_grid_to_frame(
    grid: PermittivityGrid, axis: str = "z", index: Optional[int] = None
) -> pd.DataFrame:
    """Flatten one grid plane to a plot-ready DataFrame

    :param grid: Permittivity grid.
    :param axis: Normal axis of the exported plane. Default is 'z'.
    :param index: Cell index along axis. Default is the middle cell.
    :returns: DataFrame with the two in-plane coordinate columns (nm)
        and 'eps'.
    """
    normal = AXES[axis]
    if index is None:
        index = grid.eps.shape[normal] // 2
    plane = np.take(grid.eps, index, axis=normal)
    in_plane = [a for a in AXES if AXES[a] != normal]
    u = grid.cell_centers(AXES[in_plane[0]])
    v = grid.cell_centers(AXES[in_plane[1]])
    uu, vv = np.meshgrid(u, v, indexing="ij")
    return pd.DataFrame(
        {
            f"{in_plane[0]}_nm": uu.ravel(),
            f"{in_plane[1]}_nm": vv.ravel(),
            "eps": plane.ravel(),
        }
    )
