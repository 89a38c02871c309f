"""Closed-form model of the biexciton-exciton cascade.

After the biexciton photon is emitted the exciton precesses between its two
fine-structure eigenstates with period ``T_P = h / delta``. The photon pair
emitted a time ``t`` apart is in the pure state

    (|HH> + exp(-2 pi i t / T_P) |VV>) / sqrt(2)

and the exciton photon arrives at rate ``exp(-t / tau_R) / tau_R``. Times are
in picoseconds, energies in micro-electronvolts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .polarization import PolarizationState, pair_state

PLANCK_UEV_PS = 4135.667696
# relative mismatch allowed between delta_ueV and precession_ps; the published
# pair (34 ueV, 122 ps) is itself rounded and disagrees by 0.3%
PRECESSION_CONSISTENCY = 5e-3
_THETA_TOL = 1e-9


def precession_period(delta_ueV: float) -> float:
    return PLANCK_UEV_PS / delta_ueV


@dataclass(frozen=True)
class CascadeParams:
    """Physical parameters of one quantum-dot cascade and its detection.

    ``precession_ps`` governs every phase in the model; ``delta_ueV`` is kept
    for reporting and must agree with it through ``T_P = h / delta``.
    ``tau_xx_ps = 0`` and ``irf_fwhm_ps = 0`` are accepted as the instantaneous
    biexciton decay and jitter-free detection limits.
    """

    delta_ueV: float = 34.0
    precession_ps: float = 122.0
    tau_x_ps: float = 410.0
    tau_xx_ps: float = 260.0
    eta: float = math.sqrt(2e-6)
    irf_fwhm_ps: float = 42.0

    def __post_init__(self):
        for name in ("delta_ueV", "precession_ps", "tau_x_ps", "tau_xx_ps", "eta", "irf_fwhm_ps"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
        if self.delta_ueV <= 0 or self.precession_ps <= 0 or self.tau_x_ps <= 0:
            raise ValueError("delta_ueV, precession_ps and tau_x_ps must be positive")
        if self.tau_xx_ps < 0 or self.irf_fwhm_ps < 0:
            raise ValueError("tau_xx_ps and irf_fwhm_ps must be non-negative")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        derived = precession_period(self.delta_ueV)
        if abs(derived - self.precession_ps) > PRECESSION_CONSISTENCY * self.precession_ps:
            raise ValueError(
                f"precession_ps={self.precession_ps} inconsistent with "
                f"delta_ueV={self.delta_ueV} (h/delta = {derived:.3f} ps)"
            )

    @classmethod
    def from_splitting(cls, delta_ueV: float, **kwargs) -> "CascadeParams":
        return cls(delta_ueV=delta_ueV, precession_ps=precession_period(delta_ueV), **kwargs)

    @classmethod
    def from_precession(cls, precession_ps: float, **kwargs) -> "CascadeParams":
        return cls(delta_ueV=PLANCK_UEV_PS / precession_ps, precession_ps=precession_ps, **kwargs)

    @property
    def omega(self) -> float:
        """Angular precession frequency in rad/ps."""
        return 2 * math.pi / self.precession_ps

    def with_(self, **changes) -> "CascadeParams":
        return replace(self, **changes)


def exciton_decay_rate(t, tau_x_ps: float):
    """``p_X(t) = exp(-t / tau) / tau``; zero for ``t < 0``."""
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0, np.exp(-np.clip(t, 0, None) / tau_x_ps) / tau_x_ps, 0.0)


def two_photon_state(t, params: CascadeParams) -> np.ndarray:
    """Pair polarization state at emission delay ``t``; shape ``t.shape + (4,)``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (4,), dtype=complex)
    out[..., 0] = 1 / math.sqrt(2)
    out[..., 3] = np.exp(-1j * params.omega * t) / math.sqrt(2)
    return out


def density_matrix(t, params: CascadeParams) -> np.ndarray:
    """``|psi(t)><psi(t)|``; element ``[0, 3]`` is ``exp(+i omega t) / 2``."""
    psi = two_photon_state(t, params)
    return psi[..., :, None] * psi[..., None, :].conj()


def _pair_amplitudes(p1: PolarizationState, p2: PolarizationState):
    # sqrt(2) <p1 p2|psi(t)> = a + b exp(-i omega t); the sqrt(2) stays out so
    # that rectilinear cases come out exact
    bra = pair_state(p1, p2).conj()
    return bra[0], bra[3]


def coincidence_rate(t, p1: PolarizationState, p2: PolarizationState, params: CascadeParams):
    """Rate density (1/ps) of the exciton photon in ``p2`` at delay ``t``
    given the biexciton photon in ``p1``.
    """
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("t must be finite")
    if np.any(t < 0):
        raise ValueError("t must be non-negative: the exciton photon follows the biexciton photon")
    a, b = _pair_amplitudes(p1, p2)
    amp = a + b * np.exp(-1j * params.omega * t)
    return exciton_decay_rate(t, params.tau_x_ps) * np.abs(amp) ** 2 / 2


def coincidence_rate_angles(t, theta1, phi1, theta2, phi2, tau_x_ps, precession_ps):
    """Trigonometric form of the rate in terms of the two analyzers' angles."""
    t = np.asarray(t, dtype=float)
    arg = (phi1 + phi2) / 2 + math.pi * t / precession_ps
    amp = (np.cos((theta1 - theta2) / 2) * np.cos(arg)
           + 1j * np.cos((theta1 + theta2) / 2) * np.sin(arg))
    return np.exp(-t / tau_x_ps) / (2 * tau_x_ps) * np.abs(amp) ** 2


@dataclass(frozen=True)
class RateCase:
    """One row of the rate classification for analyzer pairs.

    Rows: 1 co-rectilinear (1/2), 2 cross-rectilinear (0), 3 rectilinear then
    equatorial (1/4), 4 equatorial then rectilinear (1/4), 5 both equatorial
    ``(1/4)[1 + cos(phase + 2 pi t / T_P)]``.
    """

    row: int
    constant: float | None
    phase: float | None = None

    def ratio(self, t, params: CascadeParams):
        """``rate / p_X(t)`` for this case."""
        t = np.asarray(t, dtype=float)
        if self.row == 5:
            return 0.25 * (1 + np.cos(self.phase + params.omega * t))
        return np.full(t.shape, self.constant)

    def rate(self, t, params: CascadeParams):
        return exciton_decay_rate(t, params.tau_x_ps) * self.ratio(t, params)


def _theta_class(theta: float) -> str:
    if abs(theta) < _THETA_TOL:
        return "H"
    if abs(theta - math.pi) < _THETA_TOL:
        return "V"
    if abs(theta - math.pi / 2) < _THETA_TOL:
        return "E"
    raise ValueError(f"theta={theta} is not a pole or the equator; no closed-form row applies")


def classify_rate(p1: PolarizationState, p2: PolarizationState) -> RateCase:
    c1, c2 = _theta_class(p1.theta), _theta_class(p2.theta)
    if c1 == "E" and c2 == "E":
        return RateCase(5, None, (p1.phi + p2.phi) % (2 * math.pi))
    if c1 == "E" or c2 == "E":
        return RateCase(4 if c1 == "E" else 3, 0.25)
    return RateCase(1, 0.5) if c1 == c2 else RateCase(2, 0.0)


def integrated_pair_probability(p1: PolarizationState, p2: PolarizationState,
                                params: CascadeParams) -> float:
    """Total probability of the pair outcome over all emission delays."""
    a, b = _pair_amplitudes(p1, p2)
    x = params.omega * params.tau_x_ps
    # int_0^inf exp(-t/tau)/tau exp(i omega t) dt = 1 / (1 - i omega tau)
    cross = a * b.conjugate() / (1 - 1j * x)
    return float((abs(a) ** 2 + abs(b) ** 2) / 2 + cross.real)


def windowed_negativity_analytic(delta_t, params: CascadeParams):
    """Negativity seen with a square time window of width ``delta_t``:
    ``0.5 |sin(x) / x|`` with ``x = pi delta_t / T_P``.
    """
    delta_t = np.asarray(delta_t, dtype=float)
    if np.any(delta_t <= 0):
        raise ValueError("delta_t must be positive")
    # np.sinc(u) = sin(pi u) / (pi u)
    out = 0.5 * np.abs(np.sinc(delta_t / params.precession_ps))
    return out if out.ndim else float(out)


def window_average_density(t0: float, delta_t: float, params: CascadeParams) -> np.ndarray:
    """``(1 / delta_t) * integral of rho(t')`` over ``[t0, t0 + delta_t]``."""
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    w = params.omega
    # mean of exp(i w t') over the window
    mean_phase = np.exp(1j * w * t0) * np.exp(1j * w * delta_t / 2) * np.sinc(delta_t / params.precession_ps)
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = rho[3, 3] = 0.5
    rho[0, 3] = 0.5 * mean_phase
    rho[3, 0] = 0.5 * np.conj(mean_phase)
    return rho
