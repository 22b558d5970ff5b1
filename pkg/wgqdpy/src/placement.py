"""Iterative CQD placement protocol

Every iteration exposes the vacant sites of an array, each exposed aperture
receives K ~ Poisson(lambda) emitters, and filled sites are passivated so
later iterations leave them alone. Optionally, sites holding several
emitters are neutralized at the start of an iteration and exposed again.

Site occupancy is an integer per site: 0 vacant, n >= 1 occupied by n
emitters, -1 neutralized (empty, exposable).
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import norm

from wgqdpy import wglogging
from wgqdpy.src.exceptions import UnreachableTargetError
from wgqdpy.src.helper_functions import (
    check_positive,
    check_probability,
    derive_seed,
    stream_rng,
)

logger = wglogging.get_wg_logger()

VACANT = 0
NEUTRALIZED = -1
Z_95 = float(norm.ppf(0.975))


class ProtocolParams(BaseModel):
    """Deposition parameters; ``lambda`` is accepted as alias of lam"""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(alias="lambda")
    neutralize_multi: bool = False
    destroy_existing_prob: float = 0.0
    lambda_schedule: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check(self):
        check_positive(self.lam, "lambda", strict=False)
        check_probability(self.destroy_existing_prob, "destroy_existing_prob")
        for value in self.lambda_schedule or []:
            check_positive(value, "lambda_schedule entry", strict=False)
        return self

    def lambda_at(self, iteration: int) -> float:
        """lambda of an iteration (0-based); the schedule wins where given"""
        if self.lambda_schedule and iteration < len(self.lambda_schedule):
            return self.lambda_schedule[iteration]
        return self.lam


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    exposed: Tuple[int, ...]
    newly_filled: int
    neutralized: Tuple[int, ...]
    destroyed: Tuple[int, ...]
    occupancy: Tuple[int, ...]


@dataclass
class SiteArray:
    rows: int = 5
    cols: int = 5
    occupancy: np.ndarray = None
    iteration_log: List[IterationRecord] = field(default_factory=list)

    def __post_init__(self):
        if self.occupancy is None:
            self.occupancy = np.zeros(self.rows * self.cols, dtype=np.int64)
        self.occupancy = np.asarray(self.occupancy, dtype=np.int64).ravel()
        if self.occupancy.size != self.rows * self.cols:
            raise ValueError(
                f"occupancy has {self.occupancy.size} sites, expected "
                f"{self.rows * self.cols}."
            )

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    @property
    def iterations(self) -> int:
        return len(self.iteration_log)

    def grid(self) -> np.ndarray:
        return self.occupancy.reshape(self.rows, self.cols)

    def copy(self) -> "SiteArray":
        return SiteArray(
            self.rows, self.cols, self.occupancy.copy(), list(self.iteration_log)
        )


def run_iteration(state: SiteArray, params: ProtocolParams, seed: int) -> SiteArray:
    """One pattern-deposit-passivate cycle

    Order within an iteration: neutralize multi-occupied sites (if
    enabled), expose every vacant or neutralized site, then damage
    previously occupied sites with destroy_existing_prob. A damaged site is
    vacant from the next iteration on.

    :param state: Current site array; it is not modified.
    :param params: Protocol parameters.
    :param seed: Seed of this array; the iteration index selects the substream.
    :returns: New SiteArray with one more log record.
    """
    iteration = state.iterations
    rng = stream_rng(seed, iteration)
    new = state.copy()
    occupancy = new.occupancy

    neutralized = np.flatnonzero(occupancy >= 2) if params.neutralize_multi else np.empty(0, int)
    occupancy[neutralized] = NEUTRALIZED

    previously_occupied = np.flatnonzero(occupancy >= 1)
    exposed = np.flatnonzero(occupancy <= VACANT)
    k = rng.poisson(params.lambda_at(iteration), exposed.size)
    filled = exposed[k >= 1]
    occupancy[filled] = k[k >= 1]

    destroyed = np.empty(0, int)
    if params.destroy_existing_prob > 0 and previously_occupied.size:
        hit = rng.random(previously_occupied.size) < params.destroy_existing_prob
        destroyed = previously_occupied[hit]
        occupancy[destroyed] = VACANT

    new.iteration_log.append(
        IterationRecord(
            iteration=iteration,
            exposed=tuple(int(i) for i in exposed),
            newly_filled=int(filled.size),
            neutralized=tuple(int(i) for i in neutralized),
            destroyed=tuple(int(i) for i in destroyed),
            occupancy=tuple(int(n) for n in occupancy),
        )
    )
    return new


@dataclass(frozen=True)
class OccupancyStats:
    occupied_fraction: float
    single_of_occupied: Optional[float]
    single_of_all: float


def occupancy_stats(state: SiteArray) -> OccupancyStats:
    """Occupied and single-emitter fractions

    single_of_occupied is None when no site is occupied.
    """
    occupied = int(np.sum(state.occupancy >= 1))
    single = int(np.sum(state.occupancy == 1))
    return OccupancyStats(
        occupied_fraction=occupied / state.n_sites,
        single_of_occupied=single / occupied if occupied else None,
        single_of_all=single / state.n_sites,
    )


def cumulative_yield(p: float, k: int) -> float:
    """Fraction of sites filled after k iterations at fill probability p"""
    check_probability(p, "p")
    if k < 0:
        raise ValueError(f"k should be >= 0, but is {k}.")
    return float(1.0 - (1.0 - p) ** k)


def expected_iterations(p: float, target_fraction: float) -> int:
    """Smallest k with cumulative_yield(p, k) >= target_fraction"""
    check_probability(p, "p")
    if not 0.0 <= target_fraction < 1.0:
        raise ValueError(
            f"target_fraction should be in [0, 1), but is {target_fraction}."
        )
    if target_fraction == 0:
        return 0
    if p == 0:
        raise UnreachableTargetError(
            f"A fill probability of 0 never reaches {target_fraction}."
        )
    if p == 1:
        return 1
    k = max(int(np.ceil(np.log(1 - target_fraction) / np.log(1 - p))), 1)
    # guard the closed form against rounding at exact boundaries
    while cumulative_yield(p, k) < target_fraction:
        k += 1
    while k > 1 and cumulative_yield(p, k - 1) >= target_fraction:
        k -= 1
    return k


def estimate_lambda_from_fill(p_fill: float) -> Tuple[float, float]:
    """lambda with P(K >= 1) = p_fill, and the implied single-of-occupied fraction

    :returns: (lambda, lambda e^-lambda / (1 - e^-lambda)); the fraction is
        1 at p_fill = 0 (its limit).
    """
    if not 0.0 <= p_fill < 1.0:
        raise ValueError(f"p_fill should be in [0, 1), but is {p_fill}.")
    lam = float(-np.log1p(-p_fill))
    if lam == 0:
        return 0.0, 1.0
    return lam, float(lam * np.exp(-lam) / p_fill)


def markov_single_fraction(lam: float, k: int, neutralize_multi: bool) -> float:
    """Expected fraction of single-emitter sites after k iterations

    With neutralization every non-single site is exposed again each
    iteration, so the single state absorbs with probability
    s = lambda e^-lambda per iteration. Without it only empty sites are
    exposed and multi-occupied sites are stuck.
    """
    check_positive(lam, "lam", strict=False)
    single = lam * np.exp(-lam)
    if neutralize_multi:
        return float(1.0 - (1.0 - single) ** k)
    empty = np.exp(-lam)
    return float(single * np.sum(empty ** np.arange(k)))


def simulate_protocol(
    params: ProtocolParams,
    n_sites: int = 25,
    max_iterations: int = 10,
    trials: int = 1000,
    seed: int = 0,
) -> pd.DataFrame:
    """Monte Carlo yield curves over independent site arrays

    Trial t uses its own seed derived from (seed, t), so a trajectory does
    not depend on the number of trials.

    :returns: DataFrame with columns iteration (1-based), occupied_mean,
        occupied_ci, single_mean, single_ci, with 95% normal-approximation
        half-widths.
    """
    if trials < 1:
        raise ValueError(f"trials should be >= 1, but is {trials}.")
    occupied = np.zeros((trials, max_iterations))
    single = np.zeros((trials, max_iterations))
    for trial in range(trials):
        trial_seed = derive_seed(seed, trial)
        state = SiteArray(rows=1, cols=n_sites)
        for iteration in range(max_iterations):
            state = run_iteration(state, params, trial_seed)
            stats = occupancy_stats(state)
            occupied[trial, iteration] = stats.occupied_fraction
            single[trial, iteration] = stats.single_of_all

    def half_width(values):
        if trials < 2:
            return np.zeros(values.shape[1])
        return Z_95 * values.std(axis=0, ddof=1) / np.sqrt(trials)

    logger.info(
        f"Simulated {trials} placement trials of {max_iterations} iterations."
    )
    return pd.DataFrame(
        {
            "iteration": np.arange(1, max_iterations + 1),
            "occupied_mean": occupied.mean(axis=0),
            "occupied_ci": half_width(occupied),
            "single_mean": single.mean(axis=0),
            "single_ci": half_width(single),
        }
    )


@dataclass(frozen=True)
class FillEstimate:
    table: pd.DataFrame
    mean_p: float
    pooled_p: float


def fill_probability_estimates(
    filled: Sequence[int], exposed: Sequence[int]
) -> FillEstimate:
    """Per-iteration fill probabilities from observed counts

    :param filled: Newly filled sites per iteration.
    :param exposed: Exposed sites per iteration.
    :returns: FillEstimate with the per-iteration table (iteration, filled,
        exposed, p_fill), the mean of p_fill and the pooled ratio.
    """
    filled = np.asarray(filled, dtype=float)
    exposed = np.asarray(exposed, dtype=float)
    if filled.shape != exposed.shape or np.any(exposed <= 0) or np.any(filled > exposed):
        raise ValueError("Expected 0 <= filled <= exposed and exposed > 0 per iteration.")
    p_fill = filled / exposed
    table = pd.DataFrame(
        {
            "iteration": np.arange(1, filled.size + 1),
            "filled": filled.astype(int),
            "exposed": exposed.astype(int),
            "p_fill": p_fill,
        }
    )
    return FillEstimate(
        table=table,
        mean_p=float(p_fill.mean()),
        pooled_p=float(filled.sum() / exposed.sum()),
    )


def state_to_dict(state: SiteArray) -> dict:
    return {
        "rows": state.rows,
        "cols": state.cols,
        "occupancy": state.grid().tolist(),
        "iterations": [
            {
                "iteration": record.iteration,
                "exposed": list(record.exposed),
                "newly_filled": record.newly_filled,
                "neutralized": list(record.neutralized),
                "destroyed": list(record.destroyed),
                "occupancy": list(record.occupancy),
            }
            for record in state.iteration_log
        ],
    }
