"""Simulation and tomography of polarization-entangled photon pairs from the
biexciton-exciton radiative cascade."""

__version__ = "0.1.0"

from .polarization import (
    PolarizationState,
    ProjectionSetting,
    named_state,
    overlap_probability,
    pair_projector,
    state_from_angles,
)
from .cascade_model import (
    CascadeParams,
    coincidence_rate,
    density_matrix,
    integrated_pair_probability,
    two_photon_state,
    windowed_negativity_analytic,
)
from .metrics import bell_fidelity, negativity, partial_transpose

__all__ = [
    "CascadeParams",
    "PolarizationState",
    "ProjectionSetting",
    "bell_fidelity",
    "coincidence_rate",
    "density_matrix",
    "integrated_pair_probability",
    "named_state",
    "negativity",
    "overlap_probability",
    "pair_projector",
    "partial_transpose",
    "state_from_angles",
    "two_photon_state",
    "windowed_negativity_analytic",
]
