"""Coincidence histograms, g2 normalization, fitting and background correction

Time differences tau = t2 - t1 are binned around integer multiples of the
bin width, so tau = 0 sits at the center of the middle bin. The bin index
of a pair is sign(tau) * floor(|tau| / bin_width + 1/2), which makes the
histogram of (s2, s1) the exact mirror image of the one of (s1, s2).
"""

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
import pandas as pd
from scipy import integrate, optimize

from wgqdpy import wglogging
from wgqdpy.src.emitter_sim import TimestampStream
from wgqdpy.src.exceptions import FitConvergenceError

logger = wglogging.get_wg_logger()

NS = 1e-9
MAX_ITERATIONS = 10_000
CHUNK_EVENTS = 4096
MIN_BINS = 10

Convention = Literal["dilution", "paper"]


@dataclass(frozen=True)
class G2Histogram:
    """Coincidence counts per time-difference bin

    bin_centers are k * bin_width for k = -m..m, in s.
    """

    bin_centers: np.ndarray
    bin_width: float
    counts: np.ndarray
    rate_1: float
    rate_2: float
    duration: float

    def __post_init__(self):
        if np.any(self.counts < 0):
            raise ValueError("Coincidence counts should be >= 0.")
        if self.bin_centers.size != self.counts.size:
            raise ValueError("bin_centers and counts should have equal length.")

    @property
    def bin_edges(self) -> np.ndarray:
        return np.append(self.bin_centers - self.bin_width / 2,
                         self.bin_centers[-1] + self.bin_width / 2)

    @property
    def normalization(self) -> float:
        return self.rate_1 * self.rate_2 * self.bin_width * self.duration


def bin_index(tau: np.ndarray, bin_width: float) -> np.ndarray:
    """Antisymmetric bin index of time differences"""
    return (np.sign(tau) * np.floor(np.abs(tau) / bin_width + 0.5)).astype(np.int64)


def correlate(
    s1: TimestampStream, s2: TimestampStream, window: float, bin_width: float
) -> G2Histogram:
    """Histogram of t2 - t1 over all ordered pairs within +-window

    Partner ranges are found with a sorted search per chunk of s1, so the
    cost is linear in the number of events plus the number of pairs.

    :param s1: Start channel.
    :param s2: Stop channel.
    :param window: Half-width of the tau range in s.
    :param bin_width: Bin width in s.
    :returns: G2Histogram with 2 * floor(window / bin_width) + 1 bins.
    """
    if not window > bin_width > 0:
        raise ValueError(
            f"Expected window > bin_width > 0, but got window={window}, "
            f"bin_width={bin_width}."
        )
    m = int(np.floor(window / bin_width + 1e-9))
    counts = np.zeros(2 * m + 1, dtype=np.int64)
    t1, t2 = s1.times, s2.times
    # pairs beyond the reach of the outermost bin are dropped by the index test
    reach = (m + 1) * bin_width

    for start in range(0, t1.size, CHUNK_EVENTS):
        chunk = t1[start:start + CHUNK_EVENTS]
        lo = np.searchsorted(t2, chunk - reach, side="left")
        hi = np.searchsorted(t2, chunk + reach, side="right")
        n_partners = hi - lo
        total = int(n_partners.sum())
        if total == 0:
            continue
        first = np.repeat(np.arange(chunk.size), n_partners)
        offsets = np.arange(total) - np.repeat(np.cumsum(n_partners) - n_partners, n_partners)
        second = np.repeat(lo, n_partners) + offsets
        k = bin_index(t2[second] - chunk[first], bin_width)
        k = k[np.abs(k) <= m]
        counts += np.bincount(k + m, minlength=2 * m + 1)

    duration = min(s1.duration, s2.duration)
    return G2Histogram(
        bin_centers=np.arange(-m, m + 1) * bin_width,
        bin_width=bin_width,
        counts=counts,
        rate_1=len(s1) / s1.duration,
        rate_2=len(s2) / s2.duration,
        duration=duration,
    )


def normalize(hist: G2Histogram) -> pd.DataFrame:
    """Normalized g2 curve with Poisson errors

    g2 = counts / (r1 * r2 * bin_width * (T - |tau|)). Bins without
    coincidences get g2 = 0 and sigma = 0; fit_g2 replaces their variance
    by that of a single count.

    :returns: DataFrame with columns tau_s, g2, sigma, counts and norm.
    """
    t_eff = hist.duration - np.abs(hist.bin_centers)
    norm = hist.rate_1 * hist.rate_2 * hist.bin_width * t_eff
    if np.any(norm <= 0):
        raise ValueError(
            "g2 normalization is zero: empty stream or tau range beyond the duration."
        )
    counts = hist.counts.astype(float)
    return pd.DataFrame(
        {
            "tau_s": hist.bin_centers,
            "g2": counts / norm,
            "sigma": np.sqrt(counts) / norm,
            "counts": hist.counts,
            "norm": norm,
        }
    )


def g2_model(tau, b: float, tau_l: float):
    """Two-level antibunching 1 - b * exp(-|tau| / tau_l)"""
    return 1.0 - b * np.exp(-np.abs(tau) / tau_l)


def g2_composite_model(
    tau, b: float, tau_l: float, rho: float, convention: Convention = "dilution"
):
    """Raw g2 of the emitter diluted by uncorrelated background

    'dilution' gives 1 + (g2_func - 1) * rho**2, the usual background
    model. 'paper' gives 1 + (g2_func - 1) / rho**2.
    """
    _check_rho(rho)
    excess = g2_model(tau, b, tau_l) - 1.0
    if convention == "dilution":
        return 1.0 + excess * rho**2
    if convention == "paper":
        return 1.0 + excess / rho**2
    raise ValueError(f"convention should be 'dilution' or 'paper', but is {convention}.")


@dataclass
class G2Fit:
    b: float
    tau_l: float
    b_sigma: float
    tau_l_sigma: float
    residual_norm: float
    iterations: int
    converged: bool = True
    tau_unconstrained: bool = False
    rho: float = 1.0
    g2_zero_corrected: Optional[float] = None
    messages: List[str] = field(default_factory=list)

    @property
    def g2_zero_raw(self) -> float:
        return 1.0 - self.b

    def __post_init__(self):
        if self.g2_zero_corrected is None:
            self.g2_zero_corrected = self.g2_zero_raw


def _fit_sigma(curve: pd.DataFrame) -> Optional[np.ndarray]:
    if {"counts", "norm"} <= set(curve.columns):
        counts = curve["counts"].to_numpy(dtype=float)
        return np.sqrt(np.where(counts > 0, counts, counts + 1)) / curve["norm"].to_numpy()
    if "sigma" in curve.columns:
        sigma = curve["sigma"].to_numpy(dtype=float)
        if np.any(sigma > 0):
            return np.where(sigma > 0, sigma, sigma[sigma > 0].min())
    return None


def _initial_guess(tau_ns: np.ndarray, g2: np.ndarray):
    b0 = float(np.clip(1.0 - g2[np.argmin(np.abs(tau_ns))], 0.0, 1.0))
    span = float(np.abs(tau_ns).max())
    if b0 < 0.05:
        return b0, span / 4
    # the dip area equals 2 * b * tau_l
    order = np.argsort(tau_ns)
    area = integrate.trapezoid(np.clip(1.0 - g2[order], 0, None), tau_ns[order])
    return b0, float(np.clip(area / (2 * b0), np.diff(tau_ns[order]).min(), span))


def _refine(tau_ns, g2, sigma, p0, max_iterations: int):
    """Bounded least-squares fit started at p0; returns (popt, cov, nfev)"""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", optimize.OptimizeWarning)
            popt, cov, info, _, _ = optimize.curve_fit(
                g2_model,
                tau_ns,
                g2,
                p0=p0,
                sigma=sigma,
                absolute_sigma=sigma is not None,
                bounds=([0.0, 1e-12], [1.05, np.inf]),
                method="trf",
                max_nfev=max_iterations,
                ftol=1e-15,
                xtol=1e-15,
                gtol=1e-15,
                full_output=True,
            )
    except (RuntimeError, ValueError) as e:
        raise FitConvergenceError(f"least-squares refinement failed: {e}")
    return popt, cov, int(info["nfev"])


def fit_g2(
    curve: pd.DataFrame, max_iterations: int = MAX_ITERATIONS
) -> G2Fit:
    """Weighted least-squares fit of 1 - b exp(-|tau| / tau_l)

    A Nelder-Mead search is refined by a Gauss-Newton type least-squares
    solve, whose Jacobian gives the 1-sigma uncertainties. Weights come
    from the Poisson errors of the curve; bins without counts use the
    variance of one count. Non-convergence is reported on the result, not
    raised.

    :param curve: DataFrame with tau_s and g2, and optionally counts and
        norm (as from normalize) or sigma.
    :param max_iterations: Iteration budget per stage. Default is 1e4.
    :returns: G2Fit with tau_l in s.
    """
    if len(curve) < MIN_BINS:
        raise ValueError(f"fit_g2 needs at least {MIN_BINS} bins, but got {len(curve)}.")
    tau_ns = curve["tau_s"].to_numpy(dtype=float) / NS
    g2 = curve["g2"].to_numpy(dtype=float)
    sigma = _fit_sigma(curve)
    weights = np.ones_like(g2) if sigma is None else 1.0 / sigma
    messages = []

    def chi2(params):
        b, log_tau = params
        return float(np.sum(((g2 - g2_model(tau_ns, b, np.exp(log_tau))) * weights) ** 2))

    b0, tau0 = _initial_guess(tau_ns, g2)
    simplex = optimize.minimize(
        chi2,
        x0=[b0, np.log(tau0)],
        method="Nelder-Mead",
        options={"maxiter": max_iterations, "xatol": 1e-12, "fatol": 1e-16},
    )
    b_best = float(np.clip(simplex.x[0], 0.0, 1.05))
    tau_best = float(np.exp(simplex.x[1]))
    iterations = int(simplex.nit)
    converged = bool(simplex.success)
    cov = np.full((2, 2), np.inf)

    try:
        popt, cov, nfev = _refine(tau_ns, g2, sigma, [b_best, tau_best], max_iterations)
        b_best, tau_best = float(popt[0]), float(popt[1])
        iterations += nfev
        converged = True
    except FitConvergenceError as e:
        messages.append(str(e))
        converged = False

    errors = np.sqrt(np.clip(np.diag(cov), 0, None)) if np.all(np.isfinite(cov)) else np.full(2, np.inf)
    residual = float(np.sqrt(np.mean((g2 - g2_model(tau_ns, b_best, tau_best)) ** 2)))

    tau_unconstrained = (
        not np.isfinite(errors[1])
        or errors[1] > tau_best
        or b_best <= 3 * errors[0]
    )
    if tau_unconstrained:
        messages.append("tau_l is not constrained by the data (flat curve)")
    elif np.abs(tau_ns).max() < 3 * tau_best:
        messages.append("tau range covers less than 3 tau_l")
    if not converged:
        warnings.warn(f"g2 fit did not converge: {'; '.join(messages)}")

    fit = G2Fit(
        b=b_best,
        tau_l=tau_best * NS,
        b_sigma=float(errors[0]),
        tau_l_sigma=float(errors[1] * NS),
        residual_norm=residual,
        iterations=iterations,
        converged=converged,
        tau_unconstrained=tau_unconstrained,
        messages=messages,
    )
    logger.info(
        f"g2 fit: b = {fit.b:.4f} +- {fit.b_sigma:.4f}, "
        f"tau_l = {fit.tau_l / NS:.3f} +- {fit.tau_l_sigma / NS:.3f} ns."
    )
    return fit


def _check_rho(rho: float):
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho should be in (0, 1], but is {rho}.")


def _correct(values, rho: float, convention: Convention):
    _check_rho(rho)
    if convention == "dilution":
        return 1.0 + (values - 1.0) / rho**2
    if convention == "paper":
        return 1.0 + (values - 1.0) * rho**2
    raise ValueError(f"convention should be 'dilution' or 'paper', but is {convention}.")


def background_correct(
    fit_or_curve: Union[G2Fit, pd.DataFrame, float, np.ndarray],
    rho: float,
    convention: Convention = "dilution",
):
    """Remove the effect of uncorrelated background from g2

    The default inverts the dilution model: g2_corr = 1 + (g2_raw - 1) / rho**2.
    convention='paper' inverts the composite form 1 + (g2_func - 1) / rho**2
    instead.

    :param fit_or_curve: G2Fit, g2 curve DataFrame, or raw g2 value(s).
    :param rho: signal / (signal + background), in (0, 1].
    :returns: G2Fit with rho and g2_zero_corrected set, a curve copy with
        g2_corrected and sigma_corrected columns, or corrected value(s).
    """
    if isinstance(fit_or_curve, G2Fit):
        return replace(
            fit_or_curve,
            rho=rho,
            g2_zero_corrected=float(_correct(fit_or_curve.g2_zero_raw, rho, convention)),
        )
    if isinstance(fit_or_curve, pd.DataFrame):
        corrected = fit_or_curve.copy()
        corrected["g2_corrected"] = _correct(corrected["g2"].to_numpy(), rho, convention)
        scale = 1 / rho**2 if convention == "dilution" else rho**2
        corrected["sigma_corrected"] = corrected["sigma"] * scale
        return corrected
    return _correct(np.asarray(fit_or_curve, dtype=float), rho, convention)


def implied_rho(raw_g2_zero: float, corrected_g2_zero: float) -> float:
    """rho for which the default correction maps raw onto corrected"""
    if not raw_g2_zero < 1 or not corrected_g2_zero < 1:
        raise ValueError("Both g2(0) values should be < 1.")
    return float(np.sqrt((1.0 - raw_g2_zero) / (1.0 - corrected_g2_zero)))


def estimate_rho(signal_rate: float, background_rate: float) -> float:
    """rho = S / (S + B)"""
    if signal_rate < 0 or background_rate < 0:
        raise ValueError("Rates should be >= 0.")
    if signal_rate + background_rate == 0:
        raise ValueError("Signal and background rates are both zero.")
    return float(signal_rate / (signal_rate + background_rate))


def write_curve_csv(curve: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    curve.to_csv(path, index=False, float_format="%.12g")
    return path


def fit_to_dict(fit: G2Fit) -> dict:
    return {
        "b": fit.b,
        "b_sigma": fit.b_sigma,
        "tau_l_s": fit.tau_l,
        "tau_l_sigma_s": fit.tau_l_sigma if np.isfinite(fit.tau_l_sigma) else None,
        "g2_zero_raw": fit.g2_zero_raw,
        "g2_zero_corrected": fit.g2_zero_corrected,
        "rho": fit.rho,
        "residual_norm": fit.residual_norm,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "tau_unconstrained": fit.tau_unconstrained,
        "messages": list(fit.messages),
    }
