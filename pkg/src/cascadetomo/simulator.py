"""Monte Carlo coincidence generator for the pulsed cascade experiment.

Every pulse creates a biexciton at t = 0. The biexciton photon leaves after an
exponential delay (mean tau_XX), the exciton photon an exponential delay
(mean tau_R) later. A pair is recorded with probability
``eta**2 * |<P1 P2|psi(t)>|**2`` and each detector adds independent Gaussian
jitter whose pair sum has the configured IRF width.

Random streams are keyed by ``(seed, setting_id, pulse_block)`` so the output
does not depend on how blocks are spread over workers.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cascade_model import CascadeParams
from .polarization import ProjectionSetting, pair_state
from .tomography import TomographyInput, default_settings

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
PULSE_BLOCK = 1 << 20
# above this per-pulse efficiency draw one uniform per pulse, below it
# thin pulses with a binomial draw
_DENSE_EFFICIENCY = 0.05

EVENT_DTYPE = np.dtype([
    ("pulse_index", "<i8"),
    ("setting_id", "<i4"),
    ("t1_ps", "<f8"),
    ("t2_ps", "<f8"),
])


@dataclass(frozen=True)
class RunConfig:
    params: CascadeParams = field(default_factory=CascadeParams)
    settings: list = field(default_factory=default_settings)
    pulses_per_setting: int = 1_000_000
    rng_seed: int = 1
    repetition_mhz: float = 76.0

    def __post_init__(self):
        if self.pulses_per_setting <= 0:
            raise ValueError("pulses_per_setting must be positive")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")
        ids = [s.setting_id for s in self.settings]
        if len(set(ids)) != len(ids):
            raise ValueError("setting ids must be unique")
        if self.repetition_mhz <= 0:
            raise ValueError("repetition_mhz must be positive")
        if self.repetition_period_ps < 10 * (self.params.tau_x_ps + self.params.tau_xx_ps):
            warnings.warn(
                f"repetition period {self.repetition_period_ps:.0f} ps is not much longer "
                "than the cascade; emission from successive pulses would overlap",
                RuntimeWarning, stacklevel=3,
            )

    @property
    def repetition_period_ps(self) -> float:
        return 1e6 / self.repetition_mhz


@dataclass
class SimulationResult:
    events: np.ndarray
    config: RunConfig
    complete: bool = True

    def for_setting(self, setting_id: int) -> np.ndarray:
        return self.events[self.events["setting_id"] == setting_id]


def detector_sigma(params: CascadeParams) -> float:
    """Per-detector jitter; two detectors add up to the pair IRF."""
    return params.irf_fwhm_ps * FWHM_TO_SIGMA / math.sqrt(2.0)


def block_rng(seed: int, setting_id: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(setting_id, block))))


def sample_emission(rng: np.random.Generator, params: CascadeParams, size=None):
    """Emission times ``(t_xx, t_x)`` in ps after the pulse."""
    if params.tau_xx_ps > 0:
        t_xx = rng.exponential(params.tau_xx_ps, size)
    else:
        t_xx = np.zeros(size) if size is not None else 0.0
    return t_xx, t_xx + rng.exponential(params.tau_x_ps, size)


def projection_probability(delay, setting: ProjectionSetting, params: CascadeParams):
    """``|<P1 P2|psi(delay)>|^2``."""
    bra = pair_state(setting.p1, setting.p2).conj()
    amp = (bra[0] + bra[3] * np.exp(-1j * params.omega * np.asarray(delay))) / math.sqrt(2)
    return np.abs(amp) ** 2


def detect_pairs(rng: np.random.Generator, t_xx, t_x, setting: ProjectionSetting,
                 params: CascadeParams, efficiency: float | None = None):
    """Decide detection for each emission and jitter the survivors.

    ``efficiency`` defaults to ``eta**2``. Returns ``(accepted_mask, t1, t2)``
    where the time arrays hold only the accepted pairs.
    """
    t_xx, t_x = np.atleast_1d(t_xx), np.atleast_1d(t_x)
    efficiency = params.eta ** 2 if efficiency is None else efficiency
    prob = efficiency * projection_probability(t_x - t_xx, setting, params)
    accepted = rng.random(t_xx.shape) < prob
    n = int(accepted.sum())
    sigma = detector_sigma(params)
    if sigma > 0:
        t1 = t_xx[accepted] + rng.normal(0.0, sigma, n)
        t2 = t_x[accepted] + rng.normal(0.0, sigma, n)
    else:
        t1, t2 = t_xx[accepted].copy(), t_x[accepted].copy()
    return accepted, t1, t2


def simulate_block(config: RunConfig, setting: ProjectionSetting, block: int) -> np.ndarray:
    params = config.params
    first = block * PULSE_BLOCK
    n_pulses = min(PULSE_BLOCK, config.pulses_per_setting - first)
    rng = block_rng(config.rng_seed, setting.setting_id, block)
    eff = params.eta ** 2
    if eff >= _DENSE_EFFICIENCY:
        pulses = np.flatnonzero(rng.random(n_pulses) < eff)
    else:
        k = rng.binomial(n_pulses, eff)
        pulses = np.sort(rng.choice(n_pulses, size=k, replace=False))
    t_xx, t_x = sample_emission(rng, params, pulses.size)
    accepted, t1, t2 = detect_pairs(rng, t_xx, t_x, setting, params, efficiency=1.0)
    out = np.empty(t1.size, dtype=EVENT_DTYPE)
    out["pulse_index"] = first + pulses[accepted]
    out["setting_id"] = setting.setting_id
    out["t1_ps"] = t1
    out["t2_ps"] = t2
    return out


def run_experiment(config: RunConfig, workers: int = 1) -> SimulationResult:
    """Simulate ``pulses_per_setting`` pulses for every setting.

    Events come back sorted by ``(setting_id, pulse_index)``. The result is a
    function of the config alone, independent of ``workers``.
    """
    n_blocks = -(-config.pulses_per_setting // PULSE_BLOCK)
    settings = sorted(config.settings, key=lambda s: s.setting_id)
    tasks = [(s, b) for s in settings for b in range(n_blocks)]
    parts: list[np.ndarray] = []
    complete = True
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda task: simulate_block(config, *task), tasks))
        else:
            for s, b in tasks:
                parts.append(simulate_block(config, s, b))
    except MemoryError:
        complete = False
    events = np.concatenate(parts) if parts else np.empty(0, dtype=EVENT_DTYPE)
    return SimulationResult(events, config, complete)


def histogram_2d(events: np.ndarray, bin_ps: float, t_max_ps: float):
    """Counts over (biexciton time, exciton time) on ``[0, t_max_ps)^2``.

    Returns ``(counts, edges)``; rows index t1, columns t2.
    """
    if bin_ps <= 0:
        raise ValueError("bin_ps must be positive")
    edges = np.arange(0.0, t_max_ps + bin_ps / 2, bin_ps)
    counts, _, _ = np.histogram2d(events["t1_ps"], events["t2_ps"], bins=[edges, edges])
    return counts.astype(np.int64), edges


def delay_edges(bin_ps: float, t_max_ps: float, t_min_ps: float) -> np.ndarray:
    """Bin edges aligned so that zero delay falls on an edge."""
    lo = math.floor(t_min_ps / bin_ps + 1e-9)
    hi = math.ceil(t_max_ps / bin_ps - 1e-9)
    return bin_ps * np.arange(lo, hi + 1, dtype=float)


def histogram_dt(events: np.ndarray, bin_ps: float, t_max_ps: float, t_min_ps: float = -200.0,
                 settings: list | None = None) -> TomographyInput:
    """Per-setting counts over ``t2 - t1``; negative delays come from jitter."""
    if bin_ps <= 0:
        raise ValueError("bin_ps must be positive")
    settings = default_settings() if settings is None else list(settings)
    known = {s.setting_id: k for k, s in enumerate(settings)}
    unknown = set(np.unique(events["setting_id"]).tolist()) - set(known)
    if unknown:
        raise ValueError(f"events reference unknown setting ids {sorted(unknown)}")
    edges = delay_edges(bin_ps, t_max_ps, t_min_ps)
    counts = np.zeros((len(settings), edges.size - 1))
    dt = events["t2_ps"] - events["t1_ps"]
    for sid, k in known.items():
        sel = events["setting_id"] == sid
        counts[k], _ = np.histogram(dt[sel], bins=edges)
    return TomographyInput(counts, edges, settings)
