"""Photon and detection timestamp streams of a blinking two-level emitter

While the emitter is ON it cycles ground -> excited after Exp(k_exc) and
excited -> ground after Exp(k_dec), emitting a photon with probability
quantum_efficiency. OFF periods suppress excitation completely. Every
stochastic stage draws from its own Philox substream keyed by
(seed, stage), see helper_functions.stream_rng.
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from wgqdpy import wglogging
from wgqdpy.src.budget import LossChain, chain_total_db, db_to_linear
from wgqdpy.src.helper_functions import check_positive, check_probability, stream_rng

logger = wglogging.get_wg_logger()

STAGE_EMISSION = 0
STAGE_SPLIT = 1
STAGE_BACKGROUND = 2
STAGE_DETECT = 3
STAGE_LOSS = 4
STAGE_DETECT_2 = 5

CSV_FLOAT_FORMAT = "%.17g"
DURATION_PREFIX = "# duration_s="


class BlinkingParams(BaseModel):
    """ON/OFF switching of the emitter

    model 'none' keeps the emitter ON. 'exponential' (the default) draws ON
    and OFF durations from exponentials with means 1/on_to_off_rate and
    1/off_to_on_rate; with both rates 0 the emitter keeps its initial
    state. 'power_law' keeps exponential ON durations and draws OFF
    durations from p(t) ~ t**-alpha on [t_min, t_max].
    """

    model_config = ConfigDict(frozen=True)

    model: Literal["none", "exponential", "power_law"] = "exponential"
    on_to_off_rate: float = 0.0
    off_to_on_rate: float = 0.0
    alpha: float = 1.5
    t_min: float = 1e-3
    t_max: float = 10.0

    @model_validator(mode="after")
    def _check(self):
        if self.on_to_off_rate < 0 or self.off_to_on_rate < 0:
            raise ValueError("Blinking rates should be >= 0.")
        if self.model == "exponential" and self.on_to_off_rate > 0 and self.off_to_on_rate <= 0:
            raise ValueError("off_to_on_rate should be > 0 for exponential blinking.")
        if self.model == "power_law":
            if not self.alpha > 1:
                raise ValueError(f"alpha should be > 1, but is {self.alpha}.")
            if not self.t_max > self.t_min > 0:
                raise ValueError(
                    f"Power law needs t_max > t_min > 0, but got "
                    f"t_min={self.t_min}, t_max={self.t_max}."
                )
        return self


class EmitterParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    pump_rate: float
    decay_rate: float
    quantum_efficiency: float = 1.0
    blinking: BlinkingParams = Field(default_factory=BlinkingParams)
    initially_on: bool = True

    @model_validator(mode="after")
    def _check(self):
        check_positive(self.pump_rate, "pump_rate", strict=False)
        check_positive(self.decay_rate, "decay_rate")
        check_probability(self.quantum_efficiency, "quantum_efficiency")
        return self

    @property
    def lifetime(self) -> float:
        return 1.0 / self.decay_rate

    def steady_state_rate(self) -> float:
        """Mean emitted photon rate of a never-blinking emitter"""
        k = self.pump_rate * self.decay_rate
        if k == 0:
            return 0.0
        return k / (self.pump_rate + self.decay_rate) * self.quantum_efficiency


class DetectorParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    efficiency: float = 1.0
    dead_time: float = 0.0
    jitter_sigma: float = 0.0
    dark_count_rate: float = 0.0

    @model_validator(mode="after")
    def _check(self):
        check_probability(self.efficiency, "efficiency")
        check_positive(self.dead_time, "dead_time", strict=False)
        check_positive(self.jitter_sigma, "jitter_sigma", strict=False)
        check_positive(self.dark_count_rate, "dark_count_rate", strict=False)
        return self


@dataclass(frozen=True)
class TimestampStream:
    """Strictly increasing event times in s on [0, duration]"""

    times: np.ndarray
    duration: float
    channel: str = "0"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if not self.duration > 0:
            raise ValueError(f"duration should be > 0, but is {self.duration}.")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("Stream times should be strictly increasing.")
            if times[0] < 0 or times[-1] > self.duration:
                raise ValueError(
                    f"Stream times should lie in [0, {self.duration}] s."
                )

    def __len__(self) -> int:
        return self.times.size

    @property
    def rate(self) -> float:
        return len(self) / self.duration

    def with_times(self, times: np.ndarray, channel: str = None) -> "TimestampStream":
        return TimestampStream(
            times=times,
            duration=self.duration,
            channel=self.channel if channel is None else channel,
        )


def _draw_off(blinking: BlinkingParams, rng: np.random.Generator, n: int) -> np.ndarray:
    if blinking.model == "power_law":
        a = 1.0 - blinking.alpha
        lo, hi = blinking.t_min**a, blinking.t_max**a
        return (lo + rng.random(n) * (hi - lo)) ** (1.0 / a)
    if blinking.off_to_on_rate == 0:
        return np.full(n, np.inf)
    return rng.exponential(1.0 / blinking.off_to_on_rate, n)


def on_intervals(
    params: EmitterParams, duration: float, rng: np.random.Generator
) -> np.ndarray:
    """ON periods of the blinking process as an (n, 2) array of [start, stop)"""
    blinking = params.blinking
    if blinking.model == "none":
        return np.array([[0.0, duration]])
    if blinking.on_to_off_rate == 0:
        # once ON the emitter stays ON
        start = 0.0 if params.initially_on else float(_draw_off(blinking, rng, 1)[0])
        if start >= duration:
            return np.empty((0, 2))
        return np.array([[start, duration]])

    intervals = []
    t = 0.0
    on = params.initially_on
    batch = 1024
    while t < duration:
        on_times = rng.exponential(1.0 / blinking.on_to_off_rate, batch)
        off_times = _draw_off(blinking, rng, batch)
        first, second = (on_times, off_times) if on else (off_times, on_times)
        # alternate the two states, starting with the current one
        steps = np.empty(2 * batch)
        steps[0::2] = first
        steps[1::2] = second
        edges = t + np.concatenate([[0.0], np.cumsum(steps)])
        starts, stops = edges[:-1], edges[1:]
        on_mask = np.zeros(2 * batch, dtype=bool)
        on_mask[slice(0, None, 2) if on else slice(1, None, 2)] = True
        keep = on_mask & (starts < duration)
        intervals.append(np.stack([starts[keep], np.minimum(stops[keep], duration)], 1))
        t = edges[-1]
    return np.concatenate(intervals) if intervals else np.empty((0, 2))


def _cycle_times(
    start: float, stop: float, k_exc: float, k_dec: float, rng: np.random.Generator
) -> np.ndarray:
    """Photon emission times of excitation/decay cycles on [start, stop)"""
    mean_cycle = 1.0 / k_exc + 1.0 / k_dec
    times = []
    t = start
    while t < stop:
        n = int((stop - t) / mean_cycle * 1.05) + 16
        cycles = rng.exponential(1.0 / k_exc, n) + rng.exponential(1.0 / k_dec, n)
        emitted = t + np.cumsum(cycles)
        times.append(emitted[emitted < stop])
        t = emitted[-1]
    return np.concatenate(times) if times else np.empty(0)


def simulate_emission(
    params: EmitterParams, duration: float, seed: int, stage: int = STAGE_EMISSION
) -> TimestampStream:
    """Emitted photon times of a blinking two-level emitter

    The emitter starts every ON period in the ground state.

    :param params: Emitter parameters.
    :param duration: Simulated time in s.
    :param seed: Master seed.
    :param stage: Substream index. Default is 0.
    :returns: TimestampStream with channel 'emitter'.
    """
    check_positive(duration, "duration")
    rng = stream_rng(seed, stage)
    if params.pump_rate == 0:
        return TimestampStream(np.empty(0), duration, "emitter")

    periods = on_intervals(params, duration, rng)
    times = [
        _cycle_times(start, stop, params.pump_rate, params.decay_rate, rng)
        for start, stop in periods
    ]
    times = np.concatenate(times) if times else np.empty(0)
    if params.quantum_efficiency < 1.0:
        times = times[rng.random(times.size) < params.quantum_efficiency]
    logger.debug(
        f"Emitted {times.size} photons in {duration} s over {len(periods)} ON periods."
    )
    return TimestampStream(times, duration, "emitter")


def hbt_split(
    stream: TimestampStream, seed: int, stage: int = STAGE_SPLIT
) -> Tuple[TimestampStream, TimestampStream]:
    """Route every event to channel '1' or '2' with probability 1/2"""
    rng = stream_rng(seed, stage)
    first = rng.random(len(stream)) < 0.5
    return (
        stream.with_times(stream.times[first], "1"),
        stream.with_times(stream.times[~first], "2"),
    )


def poisson_times(
    rate: float, duration: float, rng: np.random.Generator
) -> np.ndarray:
    """Sorted event times of a homogeneous Poisson process"""
    n = rng.poisson(rate * duration)
    return np.sort(rng.random(n) * duration)


def merge_streams(*streams: TimestampStream, channel: str = None) -> TimestampStream:
    """Union of streams, sorted; the duration is the longest one"""
    if not streams:
        raise ValueError("merge_streams needs at least one stream.")
    times = np.sort(np.concatenate([s.times for s in streams]), kind="stable")
    return TimestampStream(
        times,
        max(s.duration for s in streams),
        streams[0].channel if channel is None else channel,
    )


def add_background(
    stream: TimestampStream, rate: float, seed: int, stage: int = STAGE_BACKGROUND
) -> TimestampStream:
    """Merge an independent Poisson stream of the given rate"""
    check_positive(rate, "rate", strict=False)
    if rate == 0:
        return stream
    rng = stream_rng(seed, stage)
    background = poisson_times(rate, stream.duration, rng)
    return merge_streams(stream, stream.with_times(background))


def _apply_dead_time(times: np.ndarray, dead_time: float) -> np.ndarray:
    if dead_time <= 0 or times.size == 0:
        return times
    keep = np.zeros(times.size, dtype=bool)
    last = -np.inf
    for i, t in enumerate(times.tolist()):
        if t - last >= dead_time:
            keep[i] = True
            last = t
    return times[keep]


def detect(
    stream: TimestampStream,
    det: DetectorParams,
    seed: int,
    stage: int = STAGE_DETECT,
) -> TimestampStream:
    """Detector clicks for a photon stream

    Photons are kept with probability efficiency, dark counts are added,
    every click is jittered, and clicks within dead_time after an accepted
    click are dropped. Clicks jittered outside [0, duration] are lost.
    """
    rng = stream_rng(seed, stage)
    times = stream.times[rng.random(len(stream)) < det.efficiency]
    if det.dark_count_rate > 0:
        times = np.concatenate(
            [times, poisson_times(det.dark_count_rate, stream.duration, rng)]
        )
    if det.jitter_sigma > 0:
        times = times + rng.normal(0.0, det.jitter_sigma, times.size)
        times = times[(times >= 0) & (times <= stream.duration)]
    times = np.sort(times, kind="stable")
    times = _apply_dead_time(times, det.dead_time)
    return stream.with_times(times)


def apply_loss(
    stream: TimestampStream, chain: LossChain, seed: int, stage: int = STAGE_LOSS
) -> TimestampStream:
    """Thin the stream with the survival probability of a loss chain"""
    survival = db_to_linear(chain_total_db(chain))
    rng = stream_rng(seed, stage)
    return stream.with_times(stream.times[rng.random(len(stream)) < survival])


def intensity_trace(stream: TimestampStream, bin_width: float) -> pd.DataFrame:
    """Counts per time bin over [0, duration]

    The last bin is kept even if it extends beyond the duration.

    :returns: DataFrame with columns t_start_s and counts.
    """
    check_positive(bin_width, "bin_width")
    n_bins = int(np.ceil(stream.duration / bin_width - 1e-9))
    edges = np.arange(n_bins + 1) * bin_width
    counts, _ = np.histogram(stream.times, bins=edges)
    return pd.DataFrame({"t_start_s": edges[:-1], "counts": counts})


def write_stream_csv(stream: TimestampStream, path: Union[str, Path]) -> Path:
    """One event time per row, column time_s, after a '# duration_s=' line"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"{DURATION_PREFIX}{float(stream.duration)!r}\n")
        pd.DataFrame({"time_s": stream.times}).to_csv(
            f, index=False, float_format=CSV_FLOAT_FORMAT
        )
    return path


def read_stream_csv(
    path: Union[str, Path], duration: Optional[float] = None, channel: str = "0"
) -> TimestampStream:
    """Read a stream written by write_stream_csv

    :param duration: Stream duration in s. Default is the duration stored in
        the file, or the last event time for files without one.
    """
    with open(path, "r") as f:
        first = f.readline().strip()
    stored = None
    if first.startswith(DURATION_PREFIX):
        stored = float(first[len(DURATION_PREFIX):])
    frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    times = frame["time_s"].to_numpy(dtype=float)
    if duration is None:
        duration = stored
    return _from_times(times, duration, channel)


def write_stream_binary(stream: TimestampStream, path: Union[str, Path]) -> Path:
    """uint64 event count, float64 duration, then float64 times in s

    All values are little-endian.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(struct.pack("<Qd", len(stream), stream.duration))
        f.write(stream.times.astype("<f8").tobytes())
    return path


def read_stream_binary(
    path: Union[str, Path], duration: Optional[float] = None, channel: str = "0"
) -> TimestampStream:
    """Read a stream written by write_stream_binary

    :param duration: Stream duration in s. Default is the stored duration.
    """
    with open(path, "rb") as f:
        count, stored = struct.unpack("<Qd", f.read(16))
        times = np.frombuffer(f.read(8 * count), dtype="<f8", count=count)
    if duration is None:
        duration = stored
    return _from_times(times.astype(float), duration, channel)


def _from_times(times: np.ndarray, duration: Optional[float], channel: str):
    if duration is None:
        if times.size == 0:
            raise ValueError("duration is required for an empty stream.")
        duration = float(times[-1])
    return TimestampStream(times, duration, channel)
