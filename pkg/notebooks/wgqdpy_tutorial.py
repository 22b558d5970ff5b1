# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
#       format_version: '1.4'
#       jupytext_version: 1.2.0
#   kernelspec:
#     display_name: Python 3 (ipykernel)
#     language: python
#     name: python3
# ---

# # Simulate a waveguide-integrated quantum-dot single-photon source
#
# This notebook walks through the main functionality of `wgqdpy`:
#
# - **Device**: define and validate the waveguide crossing with a hole and a colloidal quantum dot (CQD), and look at its permittivity.
# - **Coupling**: run a 2-D FDTD slice and a coarse 3-D simulation to estimate the fraction of the dipole emission coupled into the waveguide.
# - **Photon statistics**: simulate photon timestamps behind a beam splitter, compute and fit $g^{(2)}(\tau)$ and correct it for background.
# - **Placement and budget**: the yield of the iterative placement protocol, and the source rate implied by a measured count rate.
#
# ### Before you start
#
# Install the `wgqdpy`-package in a virtual python environment (`pip install -e .` from the main directory of the repository).
# Settings such as the default seed can be placed in a file '.env' in the root of the repository:
# ```
# WGQD_SEED=1
# WGQD_LOG_LEVEL=INFO
# ```

# ## Configuration

# +
from dotenv import load_dotenv

from wgqdpy import wglogging
from wgqdpy.src import helper_functions as helpers
from wgqdpy.src.budget import LossChain, infer_source_rate, loss_table
from wgqdpy.src.correlation import background_correct, correlate, fit_g2, normalize
from wgqdpy.src.emitter_sim import (
    BlinkingParams,
    EmitterParams,
    add_background,
    hbt_split,
    intensity_trace,
    simulate_emission,
)
from wgqdpy.src.fdtd import Termination, run_simulation, run_simulation_2d
from wgqdpy.src.geometry import (
    DeviceGeometry,
    geometry_slice,
    permittivity_grid_to_frame,
    validate_geometry,
)
from wgqdpy.src.placement import (
    ProtocolParams,
    estimate_lambda_from_fill,
    expected_iterations,
    simulate_protocol,
)

logger = wglogging.get_wg_logger()
wglogging.set_wg_log_level("INFO")

load_dotenv()

# %load_ext autoreload
# %autoreload 2

seed = helpers.env_setting("SEED", 1, int)
# -

# Plots in this notebook use matplotlib. To do so, first install matplotlib.

# +
# # !pip install matplotlib
# -

import matplotlib.pyplot as plt
plt.style.use("ggplot")

# ## Device
#
# The baseline scenario describes a 700 nm wide, 100 nm high waveguide crossing with a
# 25 nm radius hole. The CQD rests on the bottom of the hole.

cfg = helpers.select_mode(helpers.get_scenario_cfg("baseline_geometry"))
geometry = DeviceGeometry.model_validate(cfg["geometry"])
report = validate_geometry(geometry)
report.valid, report.violations

geometry.emitter_coordinates()

# A geometry that breaks an invariant is reported, not silently fixed:

validate_geometry(geometry.model_copy(update={"hole_depth": 150.0})).violations

# The permittivity on a slice through the emitter:

eps_xz = permittivity_grid_to_frame(geometry_slice(geometry, "xz", 20.0), "y", 0)
plt.imshow(
    eps_xz.pivot(index="z_nm", columns="x_nm", values="eps"), origin="lower", cmap="viridis"
)
plt.title("permittivity, xz-plane through the emitter")
plt.show()

# ## Coupling into the waveguide
#
# A 2-D slice is quick and shows how the light leaves the emitter.

slice_result = run_simulation_2d(geometry, "xz", 20.0, frame_every=400)
slice_result.to_dict()

# The 3-D simulation at desk resolution (20 nm cells) takes a few minutes. Use
# `--paper-mode` on the command line for the 10 nm resolution.

result = run_simulation(
    geometry,
    cfg["resolution"],
    termination=Termination(mode="decay", decay_threshold=1e-4, max_steps=20000),
)
print(f"eta_wg = {result.eta_wg:.3f}, eta_NA = {result.eta_NA:.3f}")
result.spectrum

# Sweeps over hole radius, hole depth and emitter position are run from the command line,
# for instance `wgqd fdtd sweep --figure 1b --threads 4`. Results are cached on disk.

# ## Photon statistics
#
# An emitter with a 23.9 ns lifetime, pumped far below saturation, observed behind a
# 50:50 beam splitter.

emitter = EmitterParams(pump_rate=1 / 23.9e-9 / 50, decay_rate=1 / 23.9e-9)
emitted = simulate_emission(emitter, duration=0.2, seed=seed)
first, second = hbt_split(emitted, seed=seed)
print(f"{len(emitted)} photons, rate {emitted.rate:.3g} /s")

curve = normalize(correlate(first, second, window=150e-9, bin_width=1e-9))
fit = fit_g2(curve)
print(f"b = {fit.b:.3f} +- {fit.b_sigma:.3f}, tau_l = {fit.tau_l * 1e9:.1f} ns")

plt.plot(curve["tau_s"] * 1e9, curve["g2"], ".", label="simulated")
plt.xlabel("tau (ns)")
plt.ylabel("g2")
plt.legend()
plt.show()

# Uncorrelated background fills in the dip. The fraction rho of signal in the
# detected light undoes the dilution.

noisy = add_background(emitted, rate=emitted.rate / 3, seed=seed)
first, second = hbt_split(noisy, seed=seed)
noisy_fit = fit_g2(normalize(correlate(first, second, 150e-9, 1e-9)))
corrected = background_correct(noisy_fit, rho=0.75)
print(f"raw g2(0) = {noisy_fit.g2_zero_raw:.2f}, corrected g2(0) = {corrected.g2_zero_corrected:.2f}")

# A blinking emitter shows up in the intensity trace:

blinking = EmitterParams(
    pump_rate=emitter.pump_rate,
    decay_rate=emitter.decay_rate,
    blinking=BlinkingParams(model="power_law", on_to_off_rate=5.0, alpha=1.5, t_min=1e-3, t_max=1.0),
)
trace = intensity_trace(simulate_emission(blinking, duration=5.0, seed=seed), bin_width=0.01)
trace.plot(x="t_start_s", y="counts", legend=False)
plt.show()

# ## Placement
#
# At a fill probability of 55% per iteration, the number of iterations to fill 99% of the holes:

expected_iterations(0.55, 0.99)

# The Poisson rate behind that fill probability, and the fraction of filled holes holding a single dot:

lam, single = estimate_lambda_from_fill(0.55)
lam, single

yield_curve = simulate_protocol(ProtocolParams(lam=lam), max_iterations=10, trials=500, seed=seed)
yield_curve

# ## Loss budget

chain = LossChain.model_validate(helpers.get_scenario_cfg("paper_loss_chain")["chain"])
loss_table(chain)

infer_source_rate(5521, chain, sigma=98)
