"""Parameter sweeps over the device geometry

Each sweep expands a SweepSpec into independent rows (one geometry and one
dipole orientation per row), evaluates every row with run_simulation and
collects the results in a plot-ready DataFrame. Rows can be evaluated in a
process pool and cached on disk by a content hash of their configuration.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Literal, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from wgqdpy import wglogging
from wgqdpy.src.exceptions import ConfigurationError, WGQDException
from wgqdpy.src.fdtd import DEFAULT_COURANT, Termination, run_simulation
from wgqdpy.src.geometry import DeviceGeometry, validate_geometry
from wgqdpy.src.helper_functions import content_hash, write_json
from wgqdpy.src.monitors import MonitorLayout

logger = wglogging.get_wg_logger()

RESULT_COLUMNS = [
    "orientation",
    "eta_wg",
    "eta_NA",
    "eta_left",
    "eta_right",
    "P_left",
    "P_right",
    "P_top",
    "P_bottom",
    "P_total",
    "monitor_sum_fraction",
    "status",
    "error",
]

# total collected light per orientation, hole depth 100 nm
MONITOR_SUM_REFERENCE = pd.DataFrame(
    {
        "hole_radius_nm": [40.0, 37.5, 35.0, 32.5, 30.0, 27.5, 25.0, 22.5, 20.0],
        "x": [0.513, 0.515, 0.516, 0.518, 0.519, 0.522, 0.524, 0.527, 0.530],
        "y": [0.833, 0.834, 0.835, 0.836, 0.837, 0.839, 0.841, 0.844, 0.846],
        "z": [0.403] * 9,
    }
)


class SweepSpec(BaseModel):
    """One design sweep

    For swept_parameter 'emitter_position' the grid is the product of
    x_values and y_values (offsets from the hole center, nm); otherwise
    values holds the swept hole radii or depths in nm.
    """

    model_config = ConfigDict(frozen=True)

    swept_parameter: Literal["hole_radius", "hole_depth", "emitter_position"]
    values: List[float] = Field(default_factory=list)
    x_values: List[float] = Field(default_factory=list)
    y_values: List[float] = Field(default_factory=list)
    dipole_orientations: List[Literal["x", "y", "z"]] = Field(
        default_factory=lambda: ["y"]
    )
    base_geometry: DeviceGeometry = Field(default_factory=DeviceGeometry)
    resolution: float = 20.0
    monitors: MonitorLayout = Field(default_factory=MonitorLayout)
    termination: Termination = Field(default_factory=Termination)
    courant: float = DEFAULT_COURANT
    spectrum_wavelengths: List[float] = Field(default_factory=list)


@dataclass
class SweepResult:
    """Rows of a sweep, one per (parameter value, orientation)"""

    spec: SweepSpec
    rows: pd.DataFrame = field(default_factory=pd.DataFrame)

    @property
    def parameter_columns(self) -> List[str]:
        if self.spec.swept_parameter == "emitter_position":
            return ["emitter_x_nm", "emitter_y_nm"]
        return [f"{self.spec.swept_parameter}_nm"]

    def ok(self) -> pd.DataFrame:
        return self.rows[self.rows["status"] == "ok"]

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write the rows as CSV and the spec as a JSON manifest next to it"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.rows.to_csv(path, index=False, float_format="%.10g")
        write_json(path.with_suffix(".spec.json"), self.spec.model_dump(mode="json"))
        return path


def _check_increasing(values: List[float], name: str):
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigurationError(f"{name} should be strictly increasing, but is {values}.")


def validate_sweep_spec(spec: SweepSpec):
    """Raise ConfigurationError if the sweep cannot be run"""
    if spec.swept_parameter == "emitter_position":
        _check_increasing(spec.x_values, "x_values")
        _check_increasing(spec.y_values, "y_values")
    else:
        _check_increasing(spec.values, "values")
    report = validate_geometry(spec.base_geometry)
    if not report.valid:
        raise ConfigurationError(
            "Invalid base geometry: " + " ".join(report.violations)
        )
    if not spec.resolution > 0:
        raise ConfigurationError(
            f"resolution should be > 0, but is {spec.resolution}."
        )


def row_config(spec: SweepSpec, geometry: DeviceGeometry) -> dict:
    """Everything that determines the outcome of one row"""
    return {
        "geometry": geometry.model_dump(mode="json"),
        "resolution": spec.resolution,
        "monitors": spec.monitors.model_dump(mode="json"),
        "termination": spec.termination.model_dump(mode="json"),
        "courant": spec.courant,
        "spectrum_wavelengths": list(spec.spectrum_wavelengths),
    }


def evaluate_row(config: dict, simulate: Callable = run_simulation) -> dict:
    """Run one row and return its result columns

    Domain errors are caught and reported in the 'status' and 'error'
    columns so that the other rows of a sweep survive.
    """
    geometry = DeviceGeometry.model_validate(config["geometry"])
    try:
        result = simulate(
            geometry,
            config["resolution"],
            monitors=MonitorLayout.model_validate(config["monitors"]),
            termination=Termination.model_validate(config["termination"]),
            courant=config["courant"],
            spectrum_wavelengths=config["spectrum_wavelengths"],
        )
    except WGQDException as e:
        logger.warning(f"Row failed: {type(e).__name__}: {e}")
        return {"status": "failed", "error": f"{type(e).__name__}: {e}"}
    p_total = result.P_total
    return {
        "eta_wg": result.eta_wg,
        "eta_NA": result.eta_NA,
        "eta_left": result.P_left / p_total if p_total else np.nan,
        "eta_right": result.P_right / p_total if p_total else np.nan,
        "P_left": result.P_left,
        "P_right": result.P_right,
        "P_top": result.P_top,
        "P_bottom": result.P_bottom,
        "P_total": p_total,
        "monitor_sum_fraction": result.monitor_sum_fraction,
        "status": "ok",
        "error": "",
    }


def _cached_evaluate(args) -> dict:
    config, cache_dir, simulate = args
    cache_file = None
    if cache_dir is not None:
        cache_file = Path(cache_dir) / f"{content_hash(config)}.json"
        if cache_file.is_file():
            with open(cache_file, "r") as f:
                return json.load(f)
    row = evaluate_row(config, simulate)
    if cache_file is not None and row["status"] == "ok":
        write_json(cache_file, row)
    return row


def run_sweep(
    spec: SweepSpec,
    threads: int = 1,
    cache_dir: Optional[Union[str, Path]] = None,
    simulate: Callable = run_simulation,
) -> SweepResult:
    """Expand a sweep into rows and evaluate them

    Rows are independent, so they are dispatched to a process pool when
    threads > 1 and put back in sweep order afterwards. Successful rows are
    cached under cache_dir, keyed by the sha256 of their configuration.

    :param spec: Sweep specification.
    :param threads: Number of worker processes. Default is 1.
    :param cache_dir: Directory for the per-row cache. Default is None.
    :param simulate: Row simulator; must be picklable if threads > 1.
    :returns: SweepResult.
    """
    validate_sweep_spec(spec)
    points = _expand(spec)
    jobs = [
        (row_config(spec, geometry), cache_dir, simulate)
        for _, _, geometry in points
        if geometry is not None
    ]
    logger.info(
        f"Sweeping {spec.swept_parameter} over {len(jobs)} rows "
        f"at {spec.resolution} nm."
    )

    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outputs = iter(list(pool.map(_cached_evaluate, jobs)))
    else:
        outputs = (_cached_evaluate(job) for job in jobs)

    records = []
    for parameters, orientation, geometry in points:
        record = dict(parameters)
        record["orientation"] = orientation
        if geometry is None:
            record.update(
                {"status": "rejected", "error": "CQD does not fit in the hole footprint"}
            )
        else:
            record.update(next(outputs))
        records.append(record)
    rows = pd.DataFrame(records)
    result = SweepResult(spec=spec)
    rows = rows.reindex(columns=result.parameter_columns + RESULT_COLUMNS)
    result.rows = rows
    return result


def _expand(spec: SweepSpec) -> List[tuple]:
    """(parameter columns, orientation, geometry) per row, in sweep order

    The geometry is None for emitter positions where the CQD sphere does
    not fit inside the hole footprint.
    """
    base = spec.base_geometry
    points = []
    if spec.swept_parameter == "emitter_position":
        grid = [(x, y) for x in spec.x_values for y in spec.y_values]
        for x, y in grid:
            fits = np.hypot(x, y) + base.cqd_shell_radius <= base.hole_radius
            for orientation in spec.dipole_orientations:
                geometry = None
                if fits:
                    geometry = base.updated(
                        emitter_position=(x, y, 0.0), dipole_orientation=orientation
                    )
                points.append(
                    ({"emitter_x_nm": x, "emitter_y_nm": y}, orientation, geometry)
                )
    else:
        for value in spec.values:
            for orientation in spec.dipole_orientations:
                geometry = base.updated(
                    **{spec.swept_parameter: value, "dipole_orientation": orientation}
                )
                points.append(
                    ({f"{spec.swept_parameter}_nm": value}, orientation, geometry)
                )
    return points


def _require(spec: SweepSpec, parameter: str):
    if spec.swept_parameter != parameter:
        raise ConfigurationError(
            f"Expected a {parameter} sweep, but got {spec.swept_parameter}."
        )


def sweep_radius(spec: SweepSpec, **kwargs) -> SweepResult:
    """Coupling efficiency versus hole radius at fixed depth"""
    _require(spec, "hole_radius")
    return run_sweep(spec, **kwargs)


def sweep_depth(spec: SweepSpec, **kwargs) -> SweepResult:
    """Coupling efficiency versus hole depth at fixed radius"""
    _require(spec, "hole_depth")
    return run_sweep(spec, **kwargs)


def sweep_position(spec: SweepSpec, **kwargs) -> SweepResult:
    """Single-sided coupling map over emitter positions in the hole

    Positions where the CQD sphere does not fit inside the hole footprint
    are not simulated and reported with status 'rejected'. The map of
    interest is eta_right = P_right / P_total; eta_left is the mirror image.
    """
    _require(spec, "emitter_position")
    return run_sweep(spec, **kwargs)


def mirror_map(rows: pd.DataFrame, column: str = "eta_left") -> pd.DataFrame:
    """Position map of a column with x mirrored, for comparison with eta_right"""
    mirrored = rows[["emitter_x_nm", "emitter_y_nm", "orientation", column]].copy()
    mirrored["emitter_x_nm"] = 0.0 - mirrored["emitter_x_nm"]
    return mirrored.sort_values(
        ["orientation", "emitter_x_nm", "emitter_y_nm"], ignore_index=True
    )


def sweep_monitor_sum(spec: SweepSpec, **kwargs) -> pd.DataFrame:
    """Monitor-sum fraction per radius and orientation, next to reference data

    :param spec: A hole_radius sweep; its orientations are replaced by x, y, z.
    :returns: DataFrame with columns hole_radius_nm, orientation,
        monitor_sum_fraction, reference and difference. The reference is
        NaN for radii without reference values.
    """
    _require(spec, "hole_radius")
    spec = spec.model_copy(update={"dipole_orientations": ["x", "y", "z"]})
    result = run_sweep(spec, **kwargs)
    table = result.rows[
        ["hole_radius_nm", "orientation", "monitor_sum_fraction", "status"]
    ].copy()
    reference = MONITOR_SUM_REFERENCE.melt(
        id_vars="hole_radius_nm", var_name="orientation", value_name="reference"
    )
    table = table.merge(reference, on=["hole_radius_nm", "orientation"], how="left")
    table["difference"] = table["monitor_sum_fraction"] - table["reference"]
    return table
