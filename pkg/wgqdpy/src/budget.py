"""dB loss-chain arithmetic and source-rate inference

Attenuations are stored as positive dB values; a stage quoted as
"-5.5 dB loss" is entered as 5.5.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator

from wgqdpy import wglogging

logger = wglogging.get_wg_logger()


class LossStage(BaseModel):
    name: str
    attenuation_db: float
    # measurement spread of the stage; not used in the arithmetic
    signal_sigma_db: Optional[float] = None

    @field_validator("attenuation_db")
    @classmethod
    def _finite_non_negative(cls, value):
        if not np.isfinite(value) or value < 0:
            raise ValueError(
                f"attenuation_db should be finite and >= 0, but is {value}."
            )
        return value

    @field_validator("signal_sigma_db")
    @classmethod
    def _sigma_non_negative(cls, value):
        if value is not None and not value >= 0:
            raise ValueError(f"signal_sigma_db should be >= 0, but is {value}.")
        return value


class LossChain(BaseModel):
    stages: List[LossStage] = Field(default_factory=list)

    @classmethod
    def from_values(cls, values: List[float], names: List[str] = None) -> "LossChain":
        """Chain from bare attenuations, named stage_0, stage_1, ..."""
        names = names or [f"stage_{i}" for i in range(len(values))]
        return cls(
            stages=[
                LossStage(name=name, attenuation_db=value)
                for name, value in zip(names, values)
            ]
        )


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    sigma: Optional[float] = None


def chain_total_db(chain: LossChain) -> float:
    """Sum of the stage attenuations in dB"""
    return float(sum(stage.attenuation_db for stage in chain.stages))


def db_to_linear(attenuation_db: float) -> float:
    """Transmission fraction 10**(-dB/10)"""
    return float(10.0 ** (-attenuation_db / 10.0))


def linear_to_db(fraction: float) -> float:
    """Attenuation in dB of a transmission fraction in (0, 1]"""
    if not fraction > 0:
        raise ValueError(f"fraction should be > 0, but is {fraction}.")
    return float(-10.0 * np.log10(fraction))


def infer_source_rate(
    detected_rate: float, chain: LossChain, sigma: Optional[float] = None
) -> RateEstimate:
    """Rate before the loss chain from a detected count rate

    :param detected_rate: Detected counts/s, >= 0.
    :param chain: Loss chain between source and detector.
    :param sigma: Optional 1-sigma uncertainty of detected_rate; it is
        scaled by the same factor.
    :returns: RateEstimate in photons/s.
    """
    if detected_rate < 0:
        raise ValueError(f"detected_rate should be >= 0, but is {detected_rate}.")
    gain = 10.0 ** (chain_total_db(chain) / 10.0)
    return RateEstimate(
        rate=float(detected_rate * gain),
        sigma=None if sigma is None else float(sigma * gain),
    )


def infer_emitter_rate(waveguide_rate: float, eta_wg: float) -> float:
    """Total emission rate from the rate launched into the waveguide

    :param waveguide_rate: Photons/s coupled into both waveguide directions.
    :param eta_wg: Simulated coupling efficiency in (0, 1].
    """
    if not 0 < eta_wg <= 1:
        raise ValueError(f"eta_wg should be in (0, 1], but is {eta_wg}.")
    return float(waveguide_rate / eta_wg)


def loss_table(chain: LossChain) -> pd.DataFrame:
    """Per-stage and cumulative attenuation

    :returns: DataFrame with columns stage, attenuation_db, signal_sigma_db,
        transmission and cumulative_db. signal_sigma_db is NaN for stages
        without a quoted spread.
    """
    attenuation = [stage.attenuation_db for stage in chain.stages]
    return pd.DataFrame(
        {
            "stage": [stage.name for stage in chain.stages],
            "attenuation_db": attenuation,
            "signal_sigma_db": [
                np.nan if stage.signal_sigma_db is None else stage.signal_sigma_db
                for stage in chain.stages
            ],
            "transmission": [db_to_linear(a) for a in attenuation],
            "cumulative_db": np.cumsum(attenuation) if attenuation else [],
        }
    )
