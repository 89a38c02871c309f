"""IRF convolution, lifetime fitting and negativity-vs-window analysis.

Model curves are built on a fine grid aligned with the histogram bins,
convolved with the Gaussian pair response and summed back into bins, so that
they can be compared with counts directly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .cascade_model import CascadeParams, exciton_decay_rate, windowed_negativity_analytic
from .errors import EmptyWindowError
from .metrics import negativity
from .polarization import pair_state
from .tomography import (
    TomographyInput,
    aggregate,
    bootstrap_counts,
    linear_from_counts,
    normalization_indices,
    reconstruct_counts,
)

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
KERNEL_HALF_WIDTH = 6.0  # in sigmas


class AccuracyWarning(UserWarning):
    """Sampling grid too coarse for the IRF width."""


@dataclass(frozen=True)
class Irf:
    """Gaussian pair response of the detection chain."""

    fwhm_ps: float

    def __post_init__(self):
        if not self.fwhm_ps >= 0:
            raise ValueError("IRF FWHM must be non-negative")

    @property
    def sigma_ps(self) -> float:
        return self.fwhm_ps * FWHM_TO_SIGMA

    def kernel(self, dt: float) -> np.ndarray:
        """Samples on ``k * dt`` normalized to unit integral on that grid."""
        if self.sigma_ps == 0:
            return np.array([1.0 / dt])
        half = int(math.ceil(KERNEL_HALF_WIDTH * self.sigma_ps / dt))
        x = dt * np.arange(-half, half + 1)
        k = np.exp(-0.5 * (x / self.sigma_ps) ** 2)
        return k / (k.sum() * dt)


def convolve(curve: np.ndarray, dt: float, irf: Irf) -> np.ndarray:
    """Convolve a uniformly sampled curve with the IRF on the same grid.

    The grid should extend at least 5 sigma past the curve's support on both
    sides; otherwise mass leaks off the ends.
    """
    curve = np.asarray(curve)
    if irf.sigma_ps > 0 and dt > irf.sigma_ps / 2:
        warnings.warn(f"grid step {dt} ps exceeds half the IRF sigma ({irf.sigma_ps:.2f} ps)",
                      AccuracyWarning, stacklevel=2)
    kernel = irf.kernel(dt) * dt
    if kernel.size > curve.size:
        full = np.convolve(curve, kernel, mode="full")
        lo = (kernel.size - 1) // 2
        return full[lo:lo + curve.size]
    return np.convolve(curve, kernel, mode="same")


def irf_degraded_negativity(delta_t, params: CascadeParams, irf: Irf):
    """Square-window negativity with the phase also smeared by Gaussian timing
    jitter: the ideal value times ``exp(-2 pi^2 sigma^2 / T_P^2)``.
    """
    damping = math.exp(-2 * math.pi ** 2 * irf.sigma_ps ** 2 / params.precession_ps ** 2)
    return windowed_negativity_analytic(delta_t, params) * damping


def _setting_coefficients(settings):
    # |a + b exp(-i w t)|^2 = alpha + 2 Re(beta exp(i w t))
    alpha, beta = [], []
    for s in settings:
        bra = pair_state(s.p1, s.p2).conj() / math.sqrt(2)
        a, b = bra[0], bra[3]
        alpha.append(abs(a) ** 2 + abs(b) ** 2)
        beta.append(a * np.conj(b))
    return np.array(alpha), np.array(beta)


def model_bin_probabilities(settings, params: CascadeParams, edges: np.ndarray, irf: Irf,
                            oversample: int = 8) -> np.ndarray:
    """Per-pulse pair probability in each delay bin for every setting (eta = 1).

    Shape ``(len(settings), len(edges) - 1)``; bins must be uniform.
    """
    edges = np.asarray(edges, dtype=float)
    bin_ps = edges[1] - edges[0]
    dt = bin_ps / oversample
    pad = int(math.ceil((KERNEL_HALF_WIDTH * irf.sigma_ps + bin_ps) / bin_ps))
    n_bins = edges.size - 1
    fine_lo = edges[0] - pad * bin_ps
    n_fine = (n_bins + 2 * pad) * oversample
    t = fine_lo + dt * (np.arange(n_fine) + 0.5)
    decay = exciton_decay_rate(t, params.tau_x_ps)
    base = convolve(decay, dt, irf)
    osc = convolve(decay * np.exp(1j * params.omega * t), dt, irf)
    alpha, beta = _setting_coefficients(settings)
    rate = alpha[:, None] * base[None, :] + 2 * np.real(beta[:, None] * osc[None, :])
    binned = rate.reshape(len(settings), -1, oversample).sum(axis=2) * dt
    return binned[:, pad:pad + n_bins]


def residuals_normalized(data, model) -> np.ndarray:
    """``(data - model) / sqrt(model)``; NaN where the model expects nothing."""
    data = np.asarray(data, dtype=float)
    model = np.asarray(model, dtype=float)
    out = np.full(np.broadcast(data, model).shape, np.nan)
    ok = model > 0
    out[ok] = ((data - model)[ok]) / np.sqrt(model[ok])
    return out


def poisson_deviance(data, model) -> float:
    data = np.asarray(data, dtype=float)
    model = np.maximum(np.asarray(model, dtype=float), 1e-300)
    term = np.where(data > 0, data * np.log(np.where(data > 0, data, 1.0) / model), 0.0)
    return float(2 * np.sum(term - (data - model)))


def pearson_chi2(data, model, min_expected: float = 5.0) -> tuple[float, int]:
    """Chi-square over bins expecting at least ``min_expected`` counts."""
    data = np.asarray(data, dtype=float)
    model = np.asarray(model, dtype=float)
    ok = model >= min_expected
    return float(np.sum((data[ok] - model[ok]) ** 2 / model[ok])), int(ok.sum())


@dataclass
class FitResult:
    tau_r_ps: float
    tau_r_sigma_ps: float
    scale: float
    chi2_per_dof: float
    deviance: float
    converged: bool
    precession_ps: float
    curve_chi2: list = field(default_factory=list)
    residuals: np.ndarray | None = field(default=None, repr=False)
    model: np.ndarray | None = field(default=None, repr=False)


def fit_tau_r(hist: TomographyInput, params: CascadeParams, irf: Irf | None = None,
              bounds: tuple[float, float] = (50.0, 3000.0), min_expected: float = 5.0) -> FitResult:
    """Fit the exciton lifetime jointly to all projection histograms.

    Two free numbers: ``tau_R`` and one scale shared by every curve. The
    precession period and the IRF stay fixed. The objective is the summed
    Poisson deviance; the 1-sigma interval is where the scale-profiled
    deviance rises by one.
    """
    irf = Irf(params.irf_fwhm_ps) if irf is None else irf
    data = hist.counts
    total = data.sum()
    if total <= 0:
        raise EmptyWindowError("no counts to fit")

    def profile(tau):
        shape = model_bin_probabilities(hist.settings, params.with_(tau_x_ps=tau), hist.edges, irf)
        scale = total / shape.sum()
        return poisson_deviance(data, scale * shape), scale, shape

    opt = minimize_scalar(lambda tau: profile(tau)[0], bounds=bounds, method="bounded",
                          options={"xatol": 1e-4, "maxiter": 500})
    tau = float(opt.x)
    dev, scale, shape = profile(tau)
    converged = bool(opt.success) and bounds[0] + 1e-3 < tau < bounds[1] - 1e-3

    def excess(t):
        return profile(t)[0] - dev - 1.0

    def crossing(a, b, fallback):
        # where the deviance crosses +1 between tau and an outer point
        if excess(b) <= 0:
            return fallback
        return brentq(excess, a, b, xtol=1e-6)

    try:
        lo = crossing(tau, max(bounds[0], tau * 0.5), bounds[0])
        hi = crossing(tau, min(bounds[1], tau * 2.0), bounds[1])
        sigma = 0.5 * (hi - lo)
    except ValueError:
        sigma = float("nan")

    model = scale * shape
    chi2, n_used = pearson_chi2(data, model, min_expected)
    curve_chi2 = []
    for k in range(data.shape[0]):
        c, n = pearson_chi2(data[k], model[k], min_expected)
        curve_chi2.append(c / n if n else float("nan"))
    return FitResult(
        tau_r_ps=tau,
        tau_r_sigma_ps=float(sigma),
        scale=float(scale),
        chi2_per_dof=chi2 / max(n_used - 2, 1),
        deviance=dev,
        converged=converged,
        precession_ps=params.precession_ps,
        curve_chi2=curve_chi2,
        residuals=residuals_normalized(data, model),
        model=model,
    )


@dataclass
class NegativityCurve:
    delta_t: np.ndarray
    n_data: np.ndarray
    n_sigma: np.ndarray
    n_ideal: np.ndarray
    n_irf_model: np.ndarray
    low_stats: np.ndarray


def negativity_vs_window(hist: TomographyInput, delta_t_grid, params: CascadeParams,
                         irf: Irf | None = None, start_ps: float = 0.0,
                         weighting: str = "uniform", n_resamples: int = 100,
                         method: str = "mle", rng=None) -> NegativityCurve:
    """Negativity of the state reconstructed over ``[start, start + dT)``.

    Alongside the data this returns the square-window law and the same
    windowing applied to the IRF-convolved model expectation.
    """
    irf = Irf(params.irf_fwhm_ps) if irf is None else irf
    rng = np.random.default_rng(rng)
    grid = np.asarray(delta_t_grid, dtype=float)
    settings = hist.settings
    norm_idx = normalization_indices(settings)
    expected = model_bin_probabilities(settings, params, hist.edges, irf)
    n_data = np.full(grid.size, np.nan)
    n_sigma = np.full(grid.size, np.nan)
    n_model = np.full(grid.size, np.nan)
    low = np.zeros(grid.size, dtype=bool)
    for k, width in enumerate(grid):
        window = hist.window_bins(start_ps, start_ps + width)
        raw = hist.counts[:, window]
        if raw.shape[1] == 0:
            continue
        n_model[k] = negativity(linear_from_counts(
            aggregate(expected[:, window], norm_idx, weighting), settings).rho).value
        low[k] = raw.sum() < 100
        try:
            res = reconstruct_counts(aggregate(raw, norm_idx, weighting), settings, method,
                                     low_stats=low[k])
        except EmptyWindowError:
            continue
        n_data[k] = negativity(res.rho).value
        if n_resamples:
            n_sigma[k] = bootstrap_counts(raw, settings, n_resamples, rng, weighting, method,
                                          center=res).negativity_sigma
    return NegativityCurve(grid, n_data, n_sigma, windowed_negativity_analytic(grid, params),
                           n_model, low)
