"""Entanglement and fidelity measures for two-photon density matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cascade_model import CascadeParams, window_average_density

EIGEN_NOISE_FLOOR = 1e-9
TRACE_TOL = 1e-6


@dataclass(frozen=True)
class NegativityValue:
    value: float
    negative_eigenvalues: list = field(default_factory=list)

    def __float__(self):
        return self.value


def partial_transpose(rho: np.ndarray) -> np.ndarray:
    """Transpose on the second photon: ``((i,j),(k,l)) -> ((i,l),(k,j))``."""
    rho = np.asarray(rho)
    return rho.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)


def negativity(rho: np.ndarray) -> NegativityValue:
    """Sum of the magnitudes of the partial transpose's negative eigenvalues.

    Eigenvalues within ``EIGEN_NOISE_FLOOR`` of zero count as zero. Raises
    ``ValueError`` if the trace is off by more than ``TRACE_TOL``.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {rho.shape}")
    trace = np.trace(rho).real
    if abs(trace - 1.0) > TRACE_TOL:
        raise ValueError(f"density matrix trace is {trace}, expected 1")
    pt = partial_transpose(rho)
    eig = np.linalg.eigvalsh((pt + pt.conj().T) / 2)
    neg = [float(e) for e in eig if e < -EIGEN_NOISE_FLOOR]
    value = min(0.5, float(sum(-e for e in neg)))
    return NegativityValue(value, neg)


def bell_fidelity(rho: np.ndarray, phase: float) -> float:
    """Overlap of ``rho`` with ``(|HH> + exp(-i phase)|VV>) / sqrt(2)``."""
    phi = np.zeros(4, dtype=complex)
    phi[0] = 1
    phi[3] = np.exp(-1j * phase)
    phi /= np.sqrt(2)
    return float(np.real(phi.conj() @ np.asarray(rho) @ phi))


def max_bell_fidelity(rho: np.ndarray) -> tuple[float, float]:
    """Best fidelity over the Bell-state phase; returns ``(fidelity, phase)``."""
    rho = np.asarray(rho)
    phase = float(np.angle(rho[0, 3]) % (2 * np.pi))
    return bell_fidelity(rho, phase), phase


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    rho, sigma = np.asarray(rho), np.asarray(sigma)
    for a, b in ((rho, sigma), (sigma, rho)):
        w, v = np.linalg.eigh(a)
        if w[-1] > 1 - 1e-12:
            # pure argument: square roots of noise eigenvalues would cost ~1e-8
            psi = v[:, -1]
            return float(np.real(psi.conj() @ b @ psi))
    w, v = np.linalg.eigh(rho)
    sqrt_rho = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    inner = sqrt_rho @ sigma @ sqrt_rho
    ev = np.linalg.eigvalsh((inner + inner.conj().T) / 2)
    return float(np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    diff = np.asarray(rho) - np.asarray(sigma)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2))))


def window_average_negativity(t0: float, delta_t: float, params: CascadeParams) -> float:
    """Negativity of the model density matrix averaged over ``[t0, t0 + delta_t]``."""
    return negativity(window_average_density(t0, delta_t, params)).value
