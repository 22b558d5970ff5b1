"""Command-line entry point ``wgqd``

Every command reads a JSON run configuration (a packaged scenario by
default, or ``--config``), applies ``--set section.key=value`` overrides,
writes its CSV/JSON outputs to ``--out`` and closes with a manifest.json
listing the digest of every output.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from wgqdpy import __version__, wglogging
from wgqdpy.src.budget import (
    LossChain,
    LossStage,
    chain_total_db,
    db_to_linear,
    infer_emitter_rate,
    infer_source_rate,
    loss_table,
)
from wgqdpy.src.correlation import (
    background_correct,
    correlate,
    estimate_rho,
    fit_g2,
    fit_to_dict,
    normalize,
)
from wgqdpy.src.design_sweeps import (
    SweepSpec,
    mirror_map,
    sweep_depth,
    sweep_monitor_sum,
    sweep_position,
    sweep_radius,
)
from wgqdpy.src.emitter_sim import (
    STAGE_DETECT,
    STAGE_DETECT_2,
    BlinkingParams,
    DetectorParams,
    EmitterParams,
    add_background,
    apply_loss,
    detect,
    hbt_split,
    intensity_trace,
    merge_streams,
    read_stream_binary,
    read_stream_csv,
    simulate_emission,
    write_stream_binary,
    write_stream_csv,
)
from wgqdpy.src.exceptions import (
    ConfigurationError,
    GeometryError,
    StabilityError,
    WGQDException,
)
from wgqdpy.src.fdtd import (
    DEFAULT_COURANT,
    Termination,
    run_simulation,
    run_simulation_2d,
)
from wgqdpy.src.geometry import (
    DeviceGeometry,
    Material,
    build_permittivity_grid,
    permittivity_grid_to_frame,
    validate_geometry,
)
from wgqdpy.src.helper_functions import (
    canonical_json,
    env_setting,
    get_scenario_cfg,
    load_json_config,
    make_nested_dict,
    parse_override,
    select_mode,
    write_json,
)
from wgqdpy.src.manifest import MANIFEST_NAME, RunManifest
from wgqdpy.src.monitors import MonitorLayout
from wgqdpy.src.placement import (
    ProtocolParams,
    SiteArray,
    cumulative_yield,
    estimate_lambda_from_fill,
    expected_iterations,
    fill_probability_estimates,
    markov_single_fraction,
    run_iteration,
    simulate_protocol,
    state_to_dict,
)

logger = wglogging.get_wg_logger()

DEFAULT_OUT = "output"
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DOMAIN = 3

SWEEP_FIGURES = {
    "1b": sweep_radius,
    "1c": sweep_depth,
    "1d": sweep_position,
    "monitor-sum": sweep_monitor_sum,
}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    description: str = ""
    seed: Optional[int] = None


class FdtdRunConfig(RunConfig):
    """Single FDTD case; a plane selects the 2-D slice solver"""

    geometry: DeviceGeometry = Field(default_factory=DeviceGeometry)
    resolution: float = 20.0
    monitors: MonitorLayout = Field(default_factory=MonitorLayout)
    termination: Termination = Field(default_factory=Termination)
    courant: float = DEFAULT_COURANT
    spectrum_wavelengths: Optional[List[float]] = None
    plane: Optional[Literal["xz", "xy"]] = None
    frame_every: int = 0


class SweepRunConfig(RunConfig):
    sweeps: Dict[str, SweepSpec]
    cache_dir: Optional[str] = None


class CorrelationSettings(BaseModel):
    window: float = 150e-9
    bin_width: float = 1e-9
    rho: Optional[float] = None
    convention: Literal["dilution", "paper"] = "dilution"


class G2RunConfig(RunConfig):
    emitter: EmitterParams
    detector: DetectorParams = Field(default_factory=DetectorParams)
    duration: float = 0.5
    background_rate: float = 0.0
    loss_chain: LossChain = Field(default_factory=LossChain)
    trace_bin_width: float = 0.01
    binary_streams: bool = False
    correlation: CorrelationSettings = Field(default_factory=CorrelationSettings)


class PlacementRunConfig(RunConfig):
    protocol: ProtocolParams
    rows: int = 5
    cols: int = 5
    max_iterations: int = 10
    trials: int = 1000
    observed_filled: List[int] = Field(default_factory=list)
    observed_exposed: List[int] = Field(default_factory=list)


class BudgetRunConfig(RunConfig):
    chain: LossChain
    detected_rate: float
    detected_sigma: Optional[float] = None
    eta_wg: Optional[float] = None


SCHEMA_MODELS = [
    Material,
    DeviceGeometry,
    MonitorLayout,
    Termination,
    SweepSpec,
    BlinkingParams,
    EmitterParams,
    DetectorParams,
    ProtocolParams,
    LossStage,
    LossChain,
    FdtdRunConfig,
    SweepRunConfig,
    G2RunConfig,
    PlacementRunConfig,
    BudgetRunConfig,
]


class Run:
    """Output directory of one command plus its manifest"""

    def __init__(self, args: argparse.Namespace, config: dict, seed: Optional[int]):
        self.out = Path(args.out or env_setting("OUT", DEFAULT_OUT))
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(command=args.command_line, config=config, seed=seed)

    def register(self, path: Path) -> Path:
        self.manifest.add_output(self.out, path)
        return path

    def json(self, name: str, payload: dict) -> Path:
        return self.register(
            write_json(self.out / name, {**payload, "manifest": MANIFEST_NAME})
        )

    def csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.out / name
        frame.to_csv(path, index=False, float_format="%.12g")
        return self.register(path)

    def close(self) -> Path:
        return self.manifest.write(self.out)


def paper_mode(args: argparse.Namespace) -> bool:
    return bool(args.paper_mode or env_setting("PAPER_MODE", False, bool))


def load_run_config(args: argparse.Namespace, scenario: str, model):
    """Validated run config from --config or a packaged scenario

    :param args: Parsed command line.
    :param scenario: Packaged scenario used when --config is not given.
    :param model: RunConfig subclass to validate against.
    :returns: Tuple of the model instance and its JSON form.
    """
    raw = load_json_config(args.config) if args.config else get_scenario_cfg(scenario)
    cfg = select_mode(raw, paper_mode(args))
    for override in args.set or []:
        keys, value = parse_override(override)
        cfg = make_nested_dict(value, keys, cfg)
    try:
        config = model.model_validate(cfg)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid {model.__name__}: {e}")
    return config, config.model_dump(mode="json", by_alias=True)


def resolve_seed(args: argparse.Namespace, config: Optional[RunConfig] = None) -> int:
    """--seed, then WGQD_SEED, then the config, then 0"""
    if args.seed is not None:
        return args.seed
    seed = env_setting("SEED", None, int)
    if seed is None and config is not None:
        seed = config.seed
    return 0 if seed is None else seed


def resolve_threads(args: argparse.Namespace) -> int:
    return args.threads or env_setting("THREADS", 1, int)


def cmd_fdtd(args: argparse.Namespace):
    """``fdtd run`` for one case, ``fdtd sweep --figure ...`` for a sweep"""
    if args.action == "run":
        config, cfg = load_run_config(args, "baseline_geometry", FdtdRunConfig)
        report = validate_geometry(config.geometry)
        if not report.valid:
            raise GeometryError("Invalid geometry: " + " ".join(report.violations))
        run = Run(args, cfg, None)
        options = dict(
            monitors=config.monitors,
            termination=config.termination,
            courant=config.courant,
        )
        if config.plane:
            result = run_simulation_2d(
                config.geometry,
                config.plane,
                config.resolution,
                frame_every=config.frame_every,
                **options,
            )
            run.json("slice.json", result.to_dict())
            if not result.frames.empty:
                run.csv("frames.csv", result.frames)
        else:
            grid = build_permittivity_grid(config.geometry, config.resolution)
            result = run_simulation(
                config.geometry,
                config.resolution,
                spectrum_wavelengths=config.spectrum_wavelengths,
                grid=grid,
                **options,
            )
            emitter_z = config.geometry.emitter_coordinates()[2]
            index = int(np.argmin(np.abs(grid.cell_centers(2) - emitter_z)))
            run.json("coupling.json", result.to_dict())
            run.csv("spectrum.csv", result.spectrum)
            run.csv("eps_xy.csv", permittivity_grid_to_frame(grid, "z", index))
        for warning in result.warnings:
            logger.warning(warning)
        run.close()
        return

    config, cfg = load_run_config(args, "sweeps", SweepRunConfig)
    if args.figure not in config.sweeps:
        raise ConfigurationError(
            f"No sweep '{args.figure}' in config; available: {sorted(config.sweeps)}."
        )
    spec = config.sweeps[args.figure]
    run = Run(args, cfg, None)
    options = dict(threads=resolve_threads(args), cache_dir=config.cache_dir)
    name = "sweep_" + args.figure.replace("-", "_")
    if args.figure == "monitor-sum":
        table = SWEEP_FIGURES[args.figure](spec, **options)
        run.csv(name + ".csv", table)
        statuses = table["status"]
    else:
        result = SWEEP_FIGURES[args.figure](spec, **options)
        path = result.to_csv(run.out / (name + ".csv"))
        run.register(path)
        run.register(path.with_suffix(".spec.json"))
        if args.figure == "1d":
            run.csv(name + "_left_mirrored.csv", mirror_map(result.ok()))
        statuses = result.rows["status"]
    run.json(
        name + ".json",
        {"figure": args.figure, "rows": int(statuses.size),
         "status_counts": statuses.value_counts().to_dict()},
    )
    run.close()


def _read_stream(path: str, duration: float, channel: str):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Stream file {path} does not exist.")
    reader = read_stream_binary if path.suffix == ".bin" else read_stream_csv
    return reader(path, duration=duration, channel=channel)


def cmd_g2(args: argparse.Namespace):
    """``g2 simulate``, ``g2 correlate``, ``g2 fit`` and ``g2 correct``"""
    config, cfg = load_run_config(args, "paper_fig3", G2RunConfig)
    seed = resolve_seed(args, config)
    settings = config.correlation

    if args.action == "simulate":
        run = Run(args, cfg, seed)
        emitted = simulate_emission(config.emitter, config.duration, seed)
        guided = apply_loss(emitted, config.loss_chain, seed)
        noisy = add_background(guided, config.background_rate, seed)
        channel_1, channel_2 = hbt_split(noisy, seed)
        detected = [
            detect(channel_1, config.detector, seed, stage=STAGE_DETECT),
            detect(channel_2, config.detector, seed, stage=STAGE_DETECT_2),
        ]
        for stream in detected:
            if config.binary_streams:
                path = write_stream_binary(stream, run.out / f"stream_{stream.channel}.bin")
            else:
                path = write_stream_csv(stream, run.out / f"stream_{stream.channel}.csv")
            run.register(path)
        trace = intensity_trace(merge_streams(*detected, channel="sum"), config.trace_bin_width)
        run.csv("intensity_trace.csv", trace)
        signal_and_background = guided.rate + config.background_rate
        run.json(
            "g2_simulation.json",
            {
                "seed": seed,
                "duration_s": config.duration,
                "emitted": len(emitted),
                "emitted_rate": emitted.rate,
                "steady_state_rate": config.emitter.steady_state_rate(),
                "loss_db": chain_total_db(config.loss_chain),
                "guided_rate": guided.rate,
                "background_rate": config.background_rate,
                "rho": estimate_rho(guided.rate, config.background_rate)
                if signal_and_background > 0 else None,
                "detected": [len(stream) for stream in detected],
            },
        )

    elif args.action == "correlate":
        run = Run(args, cfg, seed)
        duration = args.duration
        s1 = _read_stream(args.stream1, duration, "1")
        s2 = _read_stream(args.stream2, duration, "2")
        curve = normalize(correlate(s1, s2, settings.window, settings.bin_width))
        run.csv("g2_curve.csv", curve)

    elif args.action == "fit":
        run = Run(args, cfg, seed)
        curve_path = Path(args.curve)
        if not curve_path.is_file():
            raise ConfigurationError(f"Curve file {curve_path} does not exist.")
        fit = fit_g2(pd.read_csv(curve_path))
        if settings.rho is not None:
            fit = background_correct(fit, settings.rho, settings.convention)
        run.json("g2_fit.json", fit_to_dict(fit))

    else:
        rho = args.rho if args.rho is not None else settings.rho
        if rho is None:
            raise ConfigurationError("g2 correct needs --rho or correlation.rho.")
        convention = args.convention or settings.convention
        if args.raw is not None:
            raw = args.raw
        elif args.fit:
            raw = load_json_config(args.fit).get("g2_zero_raw")
            if raw is None:
                raise ConfigurationError(f"{args.fit} has no g2_zero_raw.")
        else:
            raise ConfigurationError("g2 correct needs --raw or --fit.")
        run = Run(args, cfg, seed)
        run.json(
            "g2_corrected.json",
            {
                "g2_zero_raw": float(raw),
                "g2_zero_corrected": float(background_correct(raw, rho, convention)),
                "rho": rho,
                "convention": convention,
            },
        )
        if args.curve:
            curve = pd.read_csv(args.curve)
            run.csv("g2_curve_corrected.csv", background_correct(curve, rho, convention))
    run.close()


def cmd_placement(args: argparse.Namespace):
    """``placement simulate`` (Monte Carlo) and ``placement analytic``"""
    if args.action == "analytic":
        p = args.p if args.p is not None else args.fill
        if p is None:
            raise ConfigurationError("placement analytic needs --p or --fill.")
        run = Run(args, {"p": p, "target": args.target, "fill": args.fill}, None)
        k = expected_iterations(p, args.target)
        payload = {
            "p": p,
            "target": args.target,
            "expected_iterations": k,
            "cumulative_yield": [cumulative_yield(p, i) for i in range(k + 1)],
        }
        if args.fill is not None:
            lam, single = estimate_lambda_from_fill(args.fill)
            payload.update({"lambda": lam, "single_of_occupied": single})
        run.json("placement_analytic.json", payload)
        print(canonical_json(payload))
        run.close()
        return

    config, cfg = load_run_config(args, "placement_fig4", PlacementRunConfig)
    seed = resolve_seed(args, config)
    params = config.protocol
    run = Run(args, cfg, seed)
    curve = simulate_protocol(
        params,
        n_sites=config.rows * config.cols,
        max_iterations=config.max_iterations,
        trials=config.trials,
        seed=seed,
    )
    if params.lambda_schedule is None and params.destroy_existing_prob == 0:
        p = 1.0 - np.exp(-params.lam)
        curve["occupied_analytic"] = [cumulative_yield(p, k) for k in curve["iteration"]]
        curve["single_analytic"] = [
            markov_single_fraction(params.lam, k, params.neutralize_multi)
            for k in curve["iteration"]
        ]
    run.csv("yield_curve.csv", curve)

    state = SiteArray(rows=config.rows, cols=config.cols)
    for _ in range(config.max_iterations):
        state = run_iteration(state, params, seed)
    run.json("example_state.json", state_to_dict(state))

    if config.observed_filled:
        estimate = fill_probability_estimates(config.observed_filled, config.observed_exposed)
        run.csv("fill_estimates.csv", estimate.table)
        lam, single = estimate_lambda_from_fill(estimate.pooled_p)
        run.json(
            "fill_summary.json",
            {
                "mean_p": estimate.mean_p,
                "pooled_p": estimate.pooled_p,
                "lambda": lam,
                "single_of_occupied": single,
            },
        )
    run.close()


def cmd_budget(args: argparse.Namespace):
    """``budget infer``: source rate before the loss chain"""
    config, cfg = load_run_config(args, "paper_loss_chain", BudgetRunConfig)
    run = Run(args, cfg, None)
    total_db = chain_total_db(config.chain)
    estimate = infer_source_rate(config.detected_rate, config.chain, config.detected_sigma)
    payload = {
        "detected_rate": config.detected_rate,
        "total_db": total_db,
        "transmission": db_to_linear(total_db),
        "source_rate": estimate.rate,
        "source_rate_sigma": estimate.sigma,
    }
    if config.eta_wg is not None:
        payload["emitter_rate"] = infer_emitter_rate(estimate.rate, config.eta_wg)
    table = loss_table(config.chain)
    logger.info("Loss chain:\n" + table.to_string(index=False))
    run.csv("loss_table.csv", table)
    run.json("budget.json", payload)
    print(canonical_json(payload))
    run.close()


def cmd_schema(args: argparse.Namespace):
    """Print the JSON schema of every config model"""
    schemas = {model.__name__: model.model_json_schema() for model in SCHEMA_MODELS}
    print(json.dumps(schemas, sort_keys=True, indent=2))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; default is a packaged scenario")
    common.add_argument("--seed", type=int, help="master seed (env WGQD_SEED)")
    common.add_argument("--out", help=f"output directory (env WGQD_OUT, default {DEFAULT_OUT})")
    common.add_argument(
        "--paper-mode", action="store_true", help="use the full-fidelity scenario block"
    )
    common.add_argument("--threads", type=int, help="worker processes (env WGQD_THREADS)")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    common.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override a config entry, e.g. geometry.hole_radius=30",
    )

    parser = argparse.ArgumentParser(
        prog="wgqd", description="Waveguide-integrated quantum-dot source toolkit"
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    fdtd = commands.add_parser("fdtd", help="FDTD coupling simulations")
    fdtd_actions = fdtd.add_subparsers(dest="action", required=True)
    fdtd_actions.add_parser("run", parents=[common], help="single case")
    sweep = fdtd_actions.add_parser("sweep", parents=[common], help="design sweep")
    sweep.add_argument("--figure", required=True, choices=list(SWEEP_FIGURES))
    fdtd.set_defaults(handler=cmd_fdtd)

    g2 = commands.add_parser("g2", help="photon statistics")
    g2_actions = g2.add_subparsers(dest="action", required=True)
    g2_actions.add_parser("simulate", parents=[common], help="detected HBT streams")
    corr = g2_actions.add_parser("correlate", parents=[common], help="g2 histogram")
    corr.add_argument("--stream1", required=True)
    corr.add_argument("--stream2", required=True)
    corr.add_argument(
        "--duration",
        type=float,
        help="stream duration in s; default is the duration stored in the stream files",
    )
    fit = g2_actions.add_parser("fit", parents=[common], help="fit a g2 curve")
    fit.add_argument("--curve", required=True)
    correct = g2_actions.add_parser("correct", parents=[common], help="background correction")
    correct.add_argument("--fit", help="g2_fit.json to correct")
    correct.add_argument("--raw", type=float, help="raw g2(0)")
    correct.add_argument("--curve", help="g2 curve CSV to correct")
    correct.add_argument("--rho", type=float)
    correct.add_argument("--convention", choices=["dilution", "paper"])
    g2.set_defaults(handler=cmd_g2)

    placement = commands.add_parser("placement", help="placement protocol")
    placement_actions = placement.add_subparsers(dest="action", required=True)
    placement_actions.add_parser("simulate", parents=[common], help="Monte Carlo yield")
    analytic = placement_actions.add_parser("analytic", parents=[common], help="closed forms")
    analytic.add_argument("--p", type=float, help="fill probability per iteration")
    analytic.add_argument("--target", type=float, default=0.99)
    analytic.add_argument("--fill", type=float, help="observed fill fraction")
    placement.set_defaults(handler=cmd_placement)

    budget = commands.add_parser("budget", help="loss budget")
    budget_actions = budget.add_subparsers(dest="action", required=True)
    budget_actions.add_parser("infer", parents=[common], help="infer the source rate")
    budget.set_defaults(handler=cmd_budget)

    schema = commands.add_parser("schema", parents=[common], help="print config schemas")
    schema.set_defaults(handler=cmd_schema)
    return parser


def _report(error: Exception, code: int) -> int:
    payload = {"error": type(error).__name__, "message": str(error), "exit_code": code}
    if isinstance(error, StabilityError):
        payload["step_index"] = error.step_index
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.command_line = ["wgqd"] + argv
    try:
        if args.log_level:
            wglogging.set_wg_log_level(args.log_level)
        args.handler(args)
    except ConfigurationError as e:
        return _report(e, EXIT_CONFIG)
    except (WGQDException, ValueError) as e:
        return _report(e, EXIT_DOMAIN)
    except Exception as e:
        logger.debug("Unexpected error", exc_info=True)
        return _report(e, EXIT_ERROR)
    return 0


if __name__ == "__main__":
    sys.exit(main())
