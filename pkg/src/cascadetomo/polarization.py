"""Single-photon polarization states on the Poincare sphere.

States are stored as normalized amplitude pairs ``(a_H, a_V)``; the angle
form ``cos(theta/2) |H> + exp(i phi) sin(theta/2) |V>`` is a constructor
convention. Two-photon objects use the basis order HH, HV, VH, VV with the
biexciton photon first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_NORM_TOL = 1e-12
_POLE_TOL = 1e-12

# (theta, phi) of the six analyzer states
NAMED_ANGLES = {
    "H": (0.0, 0.0),
    "V": (math.pi, 0.0),
    "D": (math.pi / 2, 0.0),
    "Dbar": (math.pi / 2, math.pi),
    "L": (math.pi / 2, math.pi / 2),
    "R": (math.pi / 2, 3 * math.pi / 2),
}


@dataclass(frozen=True)
class PolarizationState:
    """Pure polarization state ``a_h |H> + a_v |V>``."""

    a_h: complex
    a_v: complex

    def __post_init__(self):
        a_h, a_v = complex(self.a_h), complex(self.a_v)
        if not all(map(math.isfinite, (a_h.real, a_h.imag, a_v.real, a_v.imag))):
            raise ValueError("polarization amplitudes must be finite")
        norm = abs(a_h) ** 2 + abs(a_v) ** 2
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"polarization state is not normalized (|a|^2 = {norm})")
        # renormalize away the rounding residue so the 1e-12 invariant holds
        scale = 1.0 / math.sqrt(norm)
        object.__setattr__(self, "a_h", a_h * scale)
        object.__setattr__(self, "a_v", a_v * scale)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a_h, self.a_v], dtype=complex)

    @property
    def theta(self) -> float:
        return 2.0 * math.atan2(abs(self.a_v), abs(self.a_h))

    @property
    def phi(self) -> float:
        """Relative phase of the V amplitude; 0 at the poles."""
        if abs(self.a_h) < _POLE_TOL or abs(self.a_v) < _POLE_TOL:
            return 0.0
        phi = (np.angle(self.a_v) - np.angle(self.a_h)) % (2 * math.pi)
        # a tiny negative difference wraps to exactly 2 pi
        return 0.0 if phi >= 2 * math.pi else float(phi)

    def projector(self) -> np.ndarray:
        v = self.vector
        return np.outer(v, v.conj())

    def name(self) -> str | None:
        """Label among the six named states, if this is one of them."""
        for label in NAMED_ANGLES:
            if overlap_probability(self, named_state(label)) > 1 - 1e-12:
                return label
        return None


def state_from_angles(theta: float, phi: float) -> PolarizationState:
    """Point on the Poincare sphere, H at the north pole."""
    theta, phi = float(theta), float(phi)
    if not (math.isfinite(theta) and math.isfinite(phi)):
        raise ValueError("theta and phi must be finite")
    if theta < -_POLE_TOL or theta > math.pi + _POLE_TOL:
        raise ValueError(f"theta must lie in [0, pi], got {theta}")
    theta = min(max(theta, 0.0), math.pi)
    phi = phi % (2 * math.pi)
    a_h, s = math.cos(theta / 2), math.sin(theta / 2)
    # exact amplitudes at the poles, where phi carries no meaning
    if s < _POLE_TOL:
        a_h, s, phi = 1.0, 0.0, 0.0
    elif a_h < _POLE_TOL:
        a_h, s, phi = 0.0, 1.0, 0.0
    a_v = complex(math.cos(phi), math.sin(phi)) * s
    return PolarizationState(a_h, a_v)


def named_state(name: str) -> PolarizationState:
    try:
        theta, phi = NAMED_ANGLES[name]
    except KeyError:
        raise ValueError(
            f"unknown polarization {name!r}; expected one of {sorted(NAMED_ANGLES)}"
        ) from None
    return state_from_angles(theta, phi)


def overlap_probability(a: PolarizationState, b: PolarizationState) -> float:
    """Born probability ``|<a|b>|^2``."""
    amp = a.a_h.conjugate() * b.a_h + a.a_v.conjugate() * b.a_v
    return min(1.0, abs(amp) ** 2)


def pair_state(p1: PolarizationState, p2: PolarizationState) -> np.ndarray:
    """Tensor product ``|p1 p2>`` as a 4-vector in HH, HV, VH, VV order."""
    return np.kron(p1.vector, p2.vector)


def pair_projector(p1: PolarizationState, p2: PolarizationState) -> np.ndarray:
    """Rank-1 projector ``|p1 p2><p1 p2|`` (4x4, Hermitian, unit trace)."""
    v = pair_state(p1, p2)
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class ProjectionSetting:
    """Analyzer pair: ``p1`` on the biexciton arm, ``p2`` on the exciton arm."""

    setting_id: int
    p1: PolarizationState
    p2: PolarizationState

    @property
    def projector(self) -> np.ndarray:
        return pair_projector(self.p1, self.p2)

    @property
    def label(self) -> str:
        n1, n2 = self.p1.name(), self.p2.name()
        if n1 is None or n2 is None:
            return f"S{self.setting_id}"
        return f"{n1}{n2}"
