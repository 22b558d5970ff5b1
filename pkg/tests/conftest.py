"""Fixtures for testing of wgqdpy"""

import numpy as np
import pytest
from pytest_socket import disable_socket

from wgqdpy.src.emitter_sim import EmitterParams, TimestampStream, simulate_emission
from wgqdpy.src.fdtd import DipoleSource, Termination, run_simulation
from wgqdpy.src.geometry import DeviceGeometry
from wgqdpy.src.monitors import MonitorLayout


def pytest_runtest_setup():
    """Block any outgoing network traffic"""
    disable_socket()


@pytest.fixture(scope="class")
def small_geometry(request):
    """Baseline device in a domain small enough to rasterize quickly"""
    request.cls.geometry = DeviceGeometry(
        domain_extent=(800.0, 800.0, 800.0), substrate_depth=600.0
    )


@pytest.fixture(scope="class")
def antibunched_emitter(request):
    """Two-level emitter with a 23.9 ns antibunching time and b = 0.96"""
    decay_rate = 1 / 23.9e-9
    request.cls.emitter = EmitterParams(
        pump_rate=decay_rate / 50, decay_rate=decay_rate
    )


@pytest.fixture(scope="class")
def million_photons(request, antibunched_emitter):
    """Just over 1e6 photons of the antibunched emitter"""
    request.cls.emitted = simulate_emission(request.cls.emitter, 1.25, seed=21)


@pytest.fixture(scope="class")
def random_streams(request):
    """Two short uncorrelated Poisson streams"""
    rng = np.random.default_rng(12345)
    duration = 1e-3
    request.cls.duration = duration
    request.cls.s1 = TimestampStream(
        np.sort(rng.random(400) * duration), duration, "1"
    )
    request.cls.s2 = TimestampStream(
        np.sort(rng.random(300) * duration), duration, "2"
    )


@pytest.fixture(scope="class")
def tiny_device_runs(request):
    """Baseline device on a 40 nm grid with a thin absorber, run at source
    amplitudes 1 and 2
    """
    geometry = DeviceGeometry(
        domain_extent=(800.0, 800.0, 1000.0), substrate_depth=600.0
    )
    layout = MonitorLayout(
        waveguide_offset=200.0,
        margin=40.0,
        top_standoff=80.0,
        bottom_depth=100.0,
        box_cells=2,
    )
    runs = {}
    for amplitude in (1.0, 2.0):
        source = DipoleSource(
            position=tuple(geometry.emitter_coordinates()), amplitude=amplitude
        )
        runs[amplitude] = run_simulation(
            geometry,
            40.0,
            layout,
            source=source,
            termination=Termination(mode="fixed", steps=1400),
            spectrum_wavelengths=[],
            pml_thickness=4,
        )
    request.cls.geometry = geometry
    request.cls.runs = runs


@pytest.fixture(scope="class")
def desk_geometry(request):
    """Baseline device in the desk-scale domain"""
    request.cls.geometry = DeviceGeometry(
        domain_extent=(3200.0, 3200.0, 2000.0), substrate_depth=1000.0
    )
