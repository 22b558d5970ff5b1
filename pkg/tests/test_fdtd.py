"""Tests for fdtd-, cpml- and monitors-modules"""

import unittest
import warnings

import numpy as np
import pytest
from scipy import constants

from wgqdpy.src.cpml import CPML
from wgqdpy.src.exceptions import (
    GeometryError,
    MonitorConfigurationError,
    StabilityError,
)
from wgqdpy.src.fdtd import (
    ENERGY_RIPPLE,
    DipoleSource,
    RunInfo,
    Termination,
    YeeGrid,
    YeeState,
    cfl_timestep,
    field_energy,
    free_space_dipole_power,
    propagate,
    run_simulation,
    step,
)
from wgqdpy.src.geometry import DeviceGeometry, PermittivityGrid
from wgqdpy.src.monitors import (
    FluxMonitor,
    MonitorLayout,
    MonitorSet,
    na_collection,
    place_monitors,
    source_box,
    total_emitted_power,
)


def vacuum_grid(shape, cell_size=10.0, origin=(0.0, 0.0, 0.0)):
    return PermittivityGrid(
        cell_size=cell_size, origin=origin, eps=np.ones(shape)
    )


@pytest.mark.fdtd
class TestTimeStep(unittest.TestCase):

    def test_cfl_bound(self):
        dt = cfl_timestep(10.0, 3, 0.5)
        assert dt == pytest.approx(0.5 * 10e-9 / (constants.c * np.sqrt(3)), abs=0)
        assert dt == pytest.approx(9.628e-18, rel=1e-3, abs=0)
        assert cfl_timestep(10.0, 1, 1.0) == pytest.approx(10e-9 / constants.c, abs=0)

    def test_invalid_courant(self):
        with pytest.raises(ValueError):
            cfl_timestep(10.0, 3, 0.0)
        with pytest.raises(ValueError):
            cfl_timestep(10.0, 3, 1.2)

    def test_grid_rejects_unstable_step(self):
        grid = vacuum_grid((8, 8, 8))
        with pytest.raises(ValueError):
            YeeGrid(grid, 1.01 * cfl_timestep(10.0, 3))

    def test_dimension_follows_periodic_axes(self):
        grid = vacuum_grid((40, 1, 40))
        yee = YeeGrid(grid, cfl_timestep(10.0, 2), periodic_axes=(1,))
        assert yee.dimension == 2


@pytest.mark.fdtd
class TestSource(unittest.TestCase):

    def test_dc_rejection(self):
        source = DipoleSource(position=(0.0, 0.0, 0.0))
        assert source.dc_rejection_db() < -60

    def test_switch_off(self):
        source = DipoleSource(position=(0.0, 0.0, 0.0))
        assert float(source.waveform(source.t_end + 1e-18)) == 0.0
        assert np.abs(source.waveform(source.t0 + 0.1 / source.omega0 * 2 * np.pi)) > 0

    def test_orientation_normalized(self):
        source = DipoleSource(position=(0.0, 0.0, 0.0), orientation=(3.0, 0.0, 4.0))
        np.testing.assert_allclose(source.orientation, (0.6, 0.0, 0.8))
        with pytest.raises(ValueError):
            DipoleSource(position=(0.0, 0.0, 0.0), orientation=(0.0, 0.0, 0.0))

    def test_truncation(self):
        short = DipoleSource(position=(0.0, 0.0, 0.0), truncation=3.0)
        longer = DipoleSource(position=(0.0, 0.0, 0.0), truncation=5.0)
        assert short.t_end == pytest.approx(6 * short.tau, abs=0)
        assert longer.t_end > short.t_end
        assert abs(float(short.waveform(short.t_end * (1 - 1e-9)))) <= np.exp(-9) * (1 + 1e-6)
        assert short.dc_rejection_db() == longer.dc_rejection_db()
        with pytest.raises(ValueError):
            DipoleSource(position=(0.0, 0.0, 0.0), truncation=2.0)


@pytest.mark.fdtd
class TestSourcePoints(unittest.TestCase):

    def setUp(self):
        self.yee = YeeGrid(vacuum_grid((10, 10, 10)), cfl_timestep(10.0, 3, 0.9))

    def test_dipole_on_sample(self):
        # Ey samples sit at (i, j + 1/2, k) cells
        source = DipoleSource(position=(50.0, 55.0, 50.0))
        assert self.yee.source_points(source) == [(1, (5, 5, 5), 1.0)]

    def test_dipole_between_samples(self):
        source = DipoleSource(position=(52.0, 55.0, 50.0))
        points = sorted(self.yee.source_points(source))
        assert [index for _, index, _ in points] == [(5, 5, 5), (6, 5, 5)]
        np.testing.assert_allclose([w for _, _, w in points], [0.8, 0.2])

    def test_weights_sum_to_orientation(self):
        source = DipoleSource(position=(53.0, 57.0, 51.0), orientation=(1.0, 2.0, 2.0))
        points = self.yee.source_points(source)
        assert len(points) == 24
        for c in range(3):
            total = sum(w for comp, _, w in points if comp == c)
            assert total == pytest.approx(source.orientation[c])
        assert all(w > 0 for _, _, w in points)

    def test_moment_follows_position(self):
        # moving the dipole shifts weight between neighbouring samples
        weights = []
        for x in (50.0, 52.5, 55.0):
            points = self.yee.source_points(DipoleSource(position=(x, 55.0, 50.0)))
            weights.append(
                sum(w for _, index, w in points if index[0] == 6)
            )
        np.testing.assert_allclose(weights, [0.0, 0.25, 0.5])

    def test_outside_grid(self):
        with pytest.raises(GeometryError):
            self.yee.source_points(DipoleSource(position=(-20.0, 50.0, 50.0)))

    def test_periodic_axis_collapses(self):
        grid = vacuum_grid((10, 1, 10))
        yee = YeeGrid(grid, cfl_timestep(10.0, 2, 0.9), periodic_axes=(1,))
        points = yee.source_points(DipoleSource(position=(50.0, 3.0, 50.0)))
        assert len(points) == 1
        assert points[0][1] == (5, 0, 5)
        assert points[0][2] == pytest.approx(1.0)


@pytest.mark.fdtd
class TestStep(unittest.TestCase):

    def test_zero_fields_stay_zero(self):
        grid = vacuum_grid((8, 8, 8))
        dt = cfl_timestep(10.0, 3, 0.9)
        yee = YeeGrid(grid, dt)
        state = YeeState.zeros(yee.shape, dt)
        for _ in range(20):
            step(state, yee)
        assert not np.any(state.E) and not np.any(state.H)
        assert state.step_index == 20

    def test_linear_in_source_amplitude(self):
        grid = vacuum_grid((20, 20, 20))
        dt = cfl_timestep(10.0, 3, 0.9)
        yee = YeeGrid(grid, dt)
        fields = []
        for amplitude in (1.0, 2.0):
            source = DipoleSource(position=(100.0, 100.0, 100.0), amplitude=amplitude)
            cpml = CPML(yee.shape, yee.cell_size, dt, 4.25e14, thickness=4)
            state = YeeState.zeros(yee.shape, dt)
            for _ in range(1000):
                step(state, yee, cpml, source)
            fields.append(state.E.copy())
        assert np.any(fields[0])
        np.testing.assert_allclose(fields[1], 2 * fields[0], rtol=1e-10, atol=1e-30)

    def test_plane_wave_speed(self):
        n_cells, d = 400, 10.0
        grid = vacuum_grid((n_cells, 1, 1), cell_size=d)
        dt = cfl_timestep(d, 1, 0.5)
        yee = YeeGrid(grid, dt, periodic_axes=(1, 2))
        assert yee.dimension == 1

        width, x0 = 100.0, 1000.0
        c_nm = constants.c * 1e9

        def pulse(x):
            return np.exp(-(((x - x0) / width) ** 2))

        x_e = np.arange(n_cells) * d
        state = YeeState.zeros(yee.shape, dt)
        state.E[2, :, 0, 0] = pulse(x_e)
        # H lags half a step and sits half a cell further along x
        state.H[1, :, 0, 0] = -pulse(x_e + d / 2 + c_nm * dt / 2)

        n_steps = 400
        for _ in range(n_steps):
            step(state, yee)

        intensity = state.E[2, :, 0, 0] ** 2
        ahead = x_e > 2000.0
        centroid = np.sum(x_e[ahead] * intensity[ahead]) / np.sum(intensity[ahead])
        travelled = centroid - x0
        expected = c_nm * n_steps * dt
        assert travelled == pytest.approx(expected, rel=0.01)

    def test_unstable_step_raises(self):
        grid = vacuum_grid((8, 8, 8))
        bound = cfl_timestep(10.0, 3)
        yee = YeeGrid(grid, 1.05 * bound, periodic_axes=(0, 1, 2), enforce_cfl=False)
        state = YeeState.zeros(yee.shape, yee.dt)
        rng = np.random.default_rng(1)
        state.E[...] = rng.normal(size=state.E.shape)
        state.H[...] = rng.normal(size=state.H.shape)
        termination = Termination(mode="fixed", steps=1000, check_every=10)
        with pytest.raises(StabilityError) as error:
            propagate(state, yee, termination=termination)
        assert 0 < error.value.step_index < 1000

    def test_stable_periodic_box(self):
        grid = vacuum_grid((8, 8, 8))
        yee = YeeGrid(grid, cfl_timestep(10.0, 3, 0.5), periodic_axes=(0, 1, 2))
        state = YeeState.zeros(yee.shape, yee.dt)
        rng = np.random.default_rng(1)
        state.E[...] = rng.normal(size=state.E.shape)
        start = field_energy(state, yee)
        info = propagate(
            state, yee, termination=Termination(mode="fixed", steps=500, check_every=10)
        )
        assert info.reason == "fixed_steps"
        assert info.n_steps == 500
        assert field_energy(state, yee) < 10 * start


@pytest.mark.fdtd
class TestEnergyAfterSource(unittest.TestCase):

    def test_energy_rise_of_trace(self):
        trace = [(0, 0.0), (10, 1.0), (20, 2.0), (30, 1.0), (40, 1.01), (50, 0.5)]
        info = RunInfo(50, "fixed_steps", trace, source_end=20)
        assert info.energy_rise() == pytest.approx(0.01)
        assert RunInfo(50, "fixed_steps", trace[:4], source_end=20).energy_rise() == 0.0
        falling = [(0, 0.0), (10, 3.0), (20, 2.0), (30, 1.0)]
        assert RunInfo(30, "fixed_steps", falling, source_end=5).energy_rise() == 0.0

    def test_vacuum_energy_does_not_grow(self):
        cell = 20.0
        grid = vacuum_grid((24, 24, 24), cell_size=cell, origin=(-240.0,) * 3)
        dt = cfl_timestep(cell, 3, 0.95)
        yee = YeeGrid(grid, dt)
        source = DipoleSource(position=(0.0, 0.0, 0.0))
        frequency = constants.c / (source.wavelength * 1e-9)
        cpml = CPML(yee.shape, yee.cell_size, dt, frequency, thickness=6)
        source_end = int(np.ceil(source.t_end / dt))
        state = YeeState.zeros(yee.shape, dt)
        info = propagate(
            state,
            yee,
            cpml,
            source,
            termination=Termination(mode="fixed", steps=source_end + 800, check_every=5),
        )
        assert info.source_end == source_end
        post = np.array([e for n, e in info.energy if n > source_end])
        assert post.size > 100
        assert info.energy_rise() <= ENERGY_RIPPLE
        assert post[-1] < 1e-2 * post.max()


@pytest.mark.fdtd
class TestMonitors(unittest.TestCase):

    def test_negative_total_power(self):
        shape = (12, 12, 12)
        omegas = np.array([2.7e15])
        box = source_box((6, 6, 6), 3, omegas, shape, 10e-9)
        assert len(box) == 6
        # every face reports an inward flux
        for face in box:
            face.sign = -1
            face.dft[("E", face.t1)][...] = 1.0
            face.dft[("H", face.t2)][...] = 1.0
        with pytest.raises(MonitorConfigurationError):
            total_emitted_power(box)

    def test_flux_of_uniform_fields(self):
        shape = (10, 10, 10)
        monitor = FluxMonitor(
            "top", 2, 5, [(0, 10), (2, 8), (0, 0)], 1, np.array([1.0]), shape, 1e-8
        )
        assert monitor.plane_shape == (10, 6)
        # Ex and eta0*Hy of equal amplitude: Sz = |E|^2 / (2 eta0) per unit area
        monitor.dft[("E", 0)][...] = 2.0
        monitor.dft[("H", 1)][...] = 2.0
        eta0 = np.sqrt(constants.mu_0 / constants.epsilon_0)
        expected = 0.5 * 4.0 / eta0 * 60 * 1e-16
        assert monitor.flux()[0] == pytest.approx(expected, abs=0)

    def test_na_collection_limits(self):
        shape = (16, 16, 16)
        monitor = FluxMonitor(
            "top", 2, 8, [(0, 16), (0, 16), (0, 0)], 1, np.array([2.7e15]), shape, 1e-8
        )
        monitor.dft[("E", 0)][...] = 1.0
        monitor.dft[("H", 1)][...] = 1.0
        p_total = float(monitor.flux()[0])
        # a uniform plane carries only the normal-incidence component
        assert na_collection(monitor, 0.9, p_total) == pytest.approx(1.0)
        assert na_collection(monitor, 0.0, p_total) == 0.0
        with pytest.raises(ValueError):
            na_collection(monitor, 1.5, p_total)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            na_collection(monitor, 0.9, p_total, standoff=100.0, min_standoff=350.0)
        assert len(caught) == 1

    def test_monitor_set_accumulates(self):
        shape = (12, 12, 12)
        omegas = np.array([2.7e15])
        box = source_box((6, 6, 6), 2, omegas, shape, 10e-9)
        monitors = MonitorSet({}, box)
        E = np.ones((3,) + shape)
        H = np.ones((3,) + shape)
        monitors.accumulate(E, H, 0.0, 0.0, 1e-17)
        assert all(np.any(face.dft[("E", face.t1)]) for face in monitors.all())


@pytest.mark.fdtd
class TestPlaceMonitors(unittest.TestCase):

    def setUp(self):
        self.geometry = DeviceGeometry(
            domain_extent=(800.0, 800.0, 1000.0), substrate_depth=600.0
        )
        self.shape = (20, 20, 25)
        self.origin = (-400.0, -400.0, -600.0)
        self.interior = [(4, 16), (4, 16), (4, 21)]
        self.layout = MonitorLayout(
            waveguide_offset=200.0,
            margin=40.0,
            top_standoff=80.0,
            bottom_depth=100.0,
            box_cells=2,
        )

    def place(self, layout):
        return place_monitors(
            layout,
            self.geometry,
            self.origin,
            40.0,
            self.shape,
            self.interior,
            (10, 10, 15),
            np.array([2.67e15]),
        )

    def test_planes_cover_interior(self):
        monitors = self.place(self.layout)
        planes = monitors.planes
        assert sorted(planes) == ["bottom", "left", "right", "top"]
        assert (planes["left"].index, planes["right"].index) == (5, 15)
        assert (planes["left"].sign, planes["right"].sign) == (-1, 1)
        assert planes["left"].ranges[1:] == [(4, 16), (14, 19)]
        assert (planes["top"].index, planes["bottom"].index) == (20, 12)
        # horizontal planes span the whole absorber-free interior
        assert planes["top"].ranges[:2] == [(4, 16), (4, 16)]
        assert planes["bottom"].ranges[:2] == [(4, 16), (4, 16)]
        assert len(monitors.box) == 6

    def test_plane_inside_absorber(self):
        with pytest.raises(MonitorConfigurationError):
            self.place(self.layout.model_copy(update={"waveguide_offset": 380.0}))


@pytest.mark.fdtd
@pytest.mark.usefixtures("tiny_device_runs")
class TestSmallDevice(unittest.TestCase):

    def test_runs_to_completion(self):
        result = self.runs[1.0]
        assert result.termination == "fixed_steps"
        assert result.n_steps == 1400
        powers = [result.P_left, result.P_right, result.P_top, result.P_bottom]
        assert np.all(np.isfinite(powers))
        assert result.P_total > 0
        assert result.P_left > 0 and result.P_right > 0
        assert len(result.spectrum) == 1

    def test_power_quadratic_in_amplitude(self):
        single, double = self.runs[1.0], self.runs[2.0]
        for name in ("P_left", "P_right", "P_top", "P_bottom", "P_total"):
            assert getattr(double, name) / getattr(single, name) == pytest.approx(
                4.0, rel=1e-3
            )
        assert double.eta_wg == pytest.approx(single.eta_wg, rel=1e-6)

    def test_mirror_symmetry(self):
        result = self.runs[1.0]
        # the thin absorber is not placed symmetrically around x = 0
        assert result.P_left / result.P_right == pytest.approx(1.0, rel=0.02)

    def test_energy_does_not_grow_after_source(self):
        for result in self.runs.values():
            assert not any("Field energy rose" in w for w in result.warnings)


def vacuum_power_ratio(cell, extent=1200.0, box=160.0):
    """Measured over analytic radiated power of a z-dipole in vacuum"""
    n = int(round(extent / cell))
    grid = vacuum_grid((n, n, n), cell_size=cell, origin=(-extent / 2,) * 3)
    dt = cfl_timestep(cell, 3, 0.95)
    yee = YeeGrid(grid, dt)
    source = DipoleSource(position=(0.0, 0.0, 0.0), orientation=(0.0, 0.0, 1.0))
    omegas = np.array([source.omega0])
    frequency = source.omega0 / (2 * np.pi)
    cpml = CPML(yee.shape, yee.cell_size, dt, frequency, thickness=10)
    node = yee.source_node(source)
    faces = source_box(node, int(round(box / cell)), omegas, yee.shape, yee.cell_size)
    state = YeeState.zeros(yee.shape, dt)
    info = propagate(
        state,
        yee,
        cpml,
        source,
        MonitorSet({}, faces),
        Termination(mode="decay", decay_threshold=1e-6, max_steps=40000),
        omegas,
    )
    moment = info.source_spectrum * yee.cell_size**3
    analytic = free_space_dipole_power(moment, np.array([source.wavelength]))
    return float(total_emitted_power(faces)[0] / analytic[0])


@pytest.mark.fdtd
@pytest.mark.slow
class TestDipoleInVacuum(unittest.TestCase):

    def test_radiated_power_matches_analytic(self):
        assert vacuum_power_ratio(20.0) == pytest.approx(1.0, rel=0.05)

    def test_self_convergence(self):
        coarse = vacuum_power_ratio(20.0)
        assert vacuum_power_ratio(10.0) == pytest.approx(coarse, rel=0.05)


@pytest.mark.fdtd
@pytest.mark.slow
@pytest.mark.usefixtures("desk_geometry")
class TestCouplingAcceptance(unittest.TestCase):

    def test_baseline_coupling(self):
        result = run_simulation(self.geometry, 20.0, MonitorLayout())
        assert result.eta_wg == pytest.approx(0.47, abs=0.1)
        assert result.check_invariants() == []
        assert result.P_left / result.P_right == pytest.approx(1.0, rel=0.01)
        assert result.monitor_sum_fraction == pytest.approx(0.84, abs=0.1)
        assert not any("Field energy rose" in w for w in result.warnings)

    def test_orthogonal_dipoles_do_not_couple(self):
        for orientation in ("x", "z"):
            geometry = self.geometry.updated(dipole_orientation=orientation)
            result = run_simulation(geometry, 20.0, MonitorLayout())
            assert result.eta_wg < 0.05

    def test_na_collection_small_hole(self):
        for orientation, expected in (("x", 0.19), ("y", 0.15)):
            geometry = self.geometry.updated(
                hole_radius=7.5, dipole_orientation=orientation
            )
            result = run_simulation(geometry, 20.0, MonitorLayout())
            assert result.eta_NA == pytest.approx(expected, abs=0.05)

    def test_grid_convergence(self):
        geometry = DeviceGeometry(
            domain_extent=(1600.0, 1600.0, 1400.0), substrate_depth=600.0
        )
        layout = MonitorLayout(
            waveguide_offset=500.0, margin=200.0, top_standoff=300.0, bottom_depth=300.0
        )
        coarse = run_simulation(geometry, 20.0, layout)
        fine = run_simulation(
            geometry, 10.0, layout, termination=Termination(max_steps=80000)
        )
        assert abs(fine.eta_wg - coarse.eta_wg) < 0.1
