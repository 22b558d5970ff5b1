"""Tests for geometry-module"""

import unittest

import numpy as np
import pytest

from wgqdpy.src.exceptions import GeometryError
from wgqdpy.src.geometry import (
    MATERIAL_ROLES,
    DeviceGeometry,
    analytic_dielectric_volume,
    build_permittivity_grid,
    dielectric_volume,
    geometry_slice,
    material_ids,
    permittivity_grid_to_frame,
    validate_geometry,
)

EPS_TA2O5 = 2.12**2


@pytest.mark.geometry
@pytest.mark.usefixtures("small_geometry")
class TestValidation(unittest.TestCase):

    def test_baseline_is_valid(self):
        assert validate_geometry(DeviceGeometry()).valid
        assert validate_geometry(self.geometry).valid

    def test_hole_deeper_than_waveguide(self):
        report = validate_geometry(self.geometry.updated(hole_depth=150.0))
        assert not report.valid
        assert any("hole_depth" in v for v in report.violations)

    def test_core_larger_than_shell(self):
        report = validate_geometry(
            self.geometry.updated(cqd_core_radius=6.0, cqd_shell_radius=5.0)
        )
        assert any("should enclose" in v for v in report.violations)

    def test_thin_substrate(self):
        report = validate_geometry(self.geometry.updated(substrate_depth=400.0))
        assert any("substrate_depth" in v for v in report.violations)

    def test_emitter_outside_domain(self):
        report = validate_geometry(
            self.geometry.updated(emitter_position=(398.0, 0.0, 0.0))
        )
        assert any("emitter sphere" in v for v in report.violations)

    def test_reports_every_violation(self):
        report = validate_geometry(
            self.geometry.updated(hole_depth=150.0, hole_radius=-1.0)
        )
        assert len(report.violations) >= 2

    def test_emitter_rests_on_hole_bottom(self):
        geometry = self.geometry.updated(hole_depth=60.0)
        np.testing.assert_allclose(
            geometry.emitter_coordinates(), [0.0, 0.0, 40.0 + 5.0]
        )

    def test_orientation_label(self):
        geometry = DeviceGeometry(dipole_orientation="x")
        assert geometry.dipole_orientation == (1.0, 0.0, 0.0)
        assert geometry.orientation_label() == "x"
        with pytest.raises(ValueError):
            DeviceGeometry(dipole_orientation="w")

    def test_partial_material_override(self):
        geometry = DeviceGeometry(
            materials={"waveguide": {"name": "SiN", "refractive_index": 2.0}}
        )
        assert geometry.materials["waveguide"].permittivity == pytest.approx(4.0)
        assert geometry.materials["substrate"].name == "SiO2"


@pytest.mark.geometry
@pytest.mark.usefixtures("small_geometry")
class TestPermittivityGrid(unittest.TestCase):

    def test_vacuum_everywhere(self):
        vacuum = {
            role: {"name": "vacuum", "refractive_index": 1.0}
            for role in ["cladding", "substrate", "waveguide", "cqd_shell", "cqd_core"]
        }
        grid = build_permittivity_grid(self.geometry.updated(materials=vacuum), 50.0)
        assert grid.dimensions == (16, 16, 16)
        assert np.all(grid.eps == 1.0)

    def test_waveguide_without_hole(self):
        grid = build_permittivity_grid(self.geometry.updated(hole_radius=0.0), 50.0)
        z = grid.cell_centers(2)
        layer = (z > 0) & (z < 100)
        # the 10 nm CQD sphere overlaps the lowest waveguide cells at the center
        x = grid.cell_centers(0)
        away = (np.abs(x) > 100) & (np.abs(x) < 350)
        values = grid.eps[away][:, :, layer]
        np.testing.assert_allclose(values, EPS_TA2O5)
        np.testing.assert_allclose(grid.eps[:, :, z < 0], 1.45**2)
        np.testing.assert_allclose(grid.eps[:, :, z > 100], 1.0)

    def test_cylindrical_hole(self):
        geometry = self.geometry.updated(domain_extent=(400.0, 400.0, 800.0))
        grid = build_permittivity_grid(geometry, 10.0)
        x, y, z = (grid.cell_centers(axis) for axis in range(3))
        xx, yy = np.meshgrid(x, y, indexing="ij")
        r = np.hypot(xx, yy)
        layer = (z > 20) & (z < 100)
        eps = grid.eps[:, :, layer]

        # cells entirely inside r = 25 nm
        inside = (np.abs(xx - 5) < 1e-9) & ((np.abs(yy - 5) < 1e-9) | (np.abs(yy - 15) < 1e-9))
        np.testing.assert_allclose(eps[inside], 1.0)
        assert np.all(eps[r < 25] < EPS_TA2O5)
        np.testing.assert_allclose(eps[r > 32.1], EPS_TA2O5)

    def test_deterministic(self):
        first = build_permittivity_grid(self.geometry, 25.0)
        second = build_permittivity_grid(self.geometry, 25.0)
        assert np.array_equal(first.eps, second.eps)

    def test_mirror_symmetry(self):
        geometry = self.geometry.updated(domain_extent=(400.0, 400.0, 800.0))
        grid = build_permittivity_grid(geometry, 10.0)
        assert np.array_equal(grid.eps, grid.eps[::-1, :, :])
        assert np.array_equal(grid.eps, grid.eps[:, ::-1, :])

    def test_sub_sampling_only_where_materials_meet(self):
        cell, n = 20.0, 4
        grid = build_permittivity_grid(self.geometry, cell, sub_samples=n)
        offsets = ((np.arange(n) + 0.5) / n - 0.5) * cell
        fine = [
            (grid.cell_centers(axis)[:, None] + offsets[None, :]).ravel()
            for axis in range(3)
        ]
        ids = material_ids(
            self.geometry,
            fine[0][:, None, None],
            fine[1][None, :, None],
            fine[2][None, None, :],
        )
        nx, ny, nz = grid.dimensions
        blocks = ids.reshape(nx, n, ny, n, nz, n)
        expected = np.zeros(grid.dimensions)
        for role, name in enumerate(MATERIAL_ROLES):
            count = (blocks == role).sum(axis=(1, 3, 5))
            expected += count * self.geometry.materials[name].permittivity
        expected /= n**3
        np.testing.assert_allclose(grid.eps, expected, rtol=1e-12)

    def test_volume_error_halves_with_refinement(self):
        transparent_cqd = {
            "cqd_core": {"name": "air", "refractive_index": 1.0},
            "cqd_shell": {"name": "air", "refractive_index": 1.0},
        }
        geometry = self.geometry.updated(hole_radius=30.0, materials=transparent_cqd)
        exact = analytic_dielectric_volume(geometry)
        coarse = dielectric_volume(build_permittivity_grid(geometry, 50.0)) - exact
        fine = dielectric_volume(build_permittivity_grid(geometry, 25.0)) - exact
        assert coarse != 0
        assert abs(fine) <= abs(coarse) / 2

    def test_rejects_coarse_cells(self):
        with pytest.raises(GeometryError):
            build_permittivity_grid(self.geometry, 60.0)

    def test_rejects_fractional_cell_count(self):
        with pytest.raises(GeometryError):
            build_permittivity_grid(self.geometry, 30.0)

    def test_cell_budget(self):
        with pytest.raises(GeometryError):
            build_permittivity_grid(self.geometry, 25.0, max_cells=1000)

    def test_rejects_invalid_geometry(self):
        with pytest.raises(GeometryError):
            build_permittivity_grid(self.geometry.updated(hole_depth=150.0), 50.0)

    def test_slice(self):
        grid = geometry_slice(self.geometry, "xz", 25.0)
        assert grid.dimensions == (32, 1, 32)
        frame = permittivity_grid_to_frame(grid, axis="y", index=0)
        assert list(frame.columns) == ["x_nm", "z_nm", "eps"]
        assert len(frame) == 32 * 32
        with pytest.raises(ValueError):
            geometry_slice(self.geometry, "xx", 25.0)
