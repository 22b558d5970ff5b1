# -*- coding: utf-8 -*-

"""wgqdpy source modules"""

from .budget import (
    LossChain,
    LossStage,
    RateEstimate,
    chain_total_db,
    db_to_linear,
    infer_emitter_rate,
    infer_source_rate,
    linear_to_db,
    loss_table,
)
from .correlation import (
    G2Fit,
    G2Histogram,
    background_correct,
    correlate,
    estimate_rho,
    fit_g2,
    g2_composite_model,
    g2_model,
    implied_rho,
    normalize,
)
from .design_sweeps import (
    SweepResult,
    SweepSpec,
    run_sweep,
    sweep_depth,
    sweep_monitor_sum,
    sweep_position,
    sweep_radius,
)
from .emitter_sim import (
    BlinkingParams,
    DetectorParams,
    EmitterParams,
    TimestampStream,
    add_background,
    apply_loss,
    detect,
    hbt_split,
    intensity_trace,
    merge_streams,
    simulate_emission,
)
from .fdtd import (
    CouplingResult,
    DipoleSource,
    Termination,
    YeeGrid,
    YeeState,
    cfl_timestep,
    run_simulation,
    run_simulation_2d,
    step,
)
from .geometry import (
    DeviceGeometry,
    Material,
    PermittivityGrid,
    build_permittivity_grid,
    validate_geometry,
)
from .helper_functions import get_scenario_cfg, load_json_config, stream_rng
from .manifest import RunManifest
from .monitors import FluxMonitor, MonitorLayout, na_collection, total_emitted_power
from .placement import (
    ProtocolParams,
    SiteArray,
    cumulative_yield,
    estimate_lambda_from_fill,
    expected_iterations,
    markov_single_fraction,
    occupancy_stats,
    run_iteration,
    simulate_protocol,
)

__all__ = [
    "add_background",
    "apply_loss",
    "background_correct",
    "BlinkingParams",
    "build_permittivity_grid",
    "cfl_timestep",
    "chain_total_db",
    "correlate",
    "CouplingResult",
    "cumulative_yield",
    "db_to_linear",
    "detect",
    "DetectorParams",
    "DeviceGeometry",
    "DipoleSource",
    "EmitterParams",
    "estimate_lambda_from_fill",
    "estimate_rho",
    "expected_iterations",
    "fit_g2",
    "FluxMonitor",
    "G2Fit",
    "g2_composite_model",
    "G2Histogram",
    "g2_model",
    "get_scenario_cfg",
    "hbt_split",
    "implied_rho",
    "infer_emitter_rate",
    "infer_source_rate",
    "intensity_trace",
    "linear_to_db",
    "load_json_config",
    "LossChain",
    "LossStage",
    "loss_table",
    "markov_single_fraction",
    "Material",
    "merge_streams",
    "MonitorLayout",
    "na_collection",
    "normalize",
    "occupancy_stats",
    "PermittivityGrid",
    "ProtocolParams",
    "RateEstimate",
    "run_iteration",
    "run_simulation",
    "run_simulation_2d",
    "run_sweep",
    "RunManifest",
    "simulate_emission",
    "simulate_protocol",
    "SiteArray",
    "step",
    "stream_rng",
    "sweep_depth",
    "sweep_monitor_sum",
    "sweep_position",
    "sweep_radius",
    "SweepResult",
    "SweepSpec",
    "Termination",
    "TimestampStream",
    "total_emitted_power",
    "validate_geometry",
    "YeeGrid",
    "YeeState",
]
