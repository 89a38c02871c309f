"""Two-photon polarization tomography from projection histograms.

Sixteen analyzer settings are binned over the same delay axis. For a time
window the counts are aggregated, normalized by the rectilinear quadruple
``HH + HV + VH + VV`` (whose projectors sum to the identity) and inverted
either linearly or by Poisson maximum likelihood over physical states
``rho = T^dag T / Tr(T^dag T)`` with ``T`` lower triangular.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError, EmptyWindowError
from .metrics import negativity
from .polarization import ProjectionSetting, named_state, pair_projector

LOW_STATS_EVENTS = 100
TOMOGRAPHY_STATES = ("H", "V", "D", "L")

_PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
# rho = sum_k r_k B_k with B_k = sigma_i (x) sigma_j / 4
_HERMITIAN_BASIS = np.array([np.kron(a, b) / 4 for a, b in itertools.product(_PAULI, _PAULI)])


def default_settings() -> list[ProjectionSetting]:
    """``{H, V, D, L} x {H, V, D, L}`` with ids in row-major order."""
    return [
        ProjectionSetting(4 * i + j, named_state(a), named_state(b))
        for (i, a), (j, b) in itertools.product(enumerate(TOMOGRAPHY_STATES), repeat=2)
    ]


def projector_stack(settings) -> np.ndarray:
    return np.array([s.projector for s in settings])


def design_matrix(settings) -> np.ndarray:
    """Real matrix mapping Pauli coordinates of rho to projection probabilities."""
    proj = projector_stack(settings)
    return np.einsum("nij,kji->nk", proj, _HERMITIAN_BASIS).real


def normalization_indices(settings) -> list[int]:
    """Positions of the HH, HV, VH, VV settings."""
    targets = [pair_projector(named_state(a), named_state(b)) for a in "HV" for b in "HV"]
    found = []
    for target in targets:
        for k, s in enumerate(settings):
            if np.allclose(s.projector, target, atol=1e-12):
                found.append(k)
                break
        else:
            raise ConfigurationError(
                "settings must include the four rectilinear pairs HH, HV, VH, VV for normalization"
            )
    return found


@dataclass(frozen=True)
class _Design:
    design: np.ndarray
    projectors: np.ndarray
    norm_idx: list


@lru_cache(maxsize=32)
def _design_for(settings: tuple) -> _Design:
    a = design_matrix(settings)
    sv = np.linalg.svd(a, compute_uv=False)
    if a.shape[0] < 16 or sv[-1] < 1e-10 * sv[0]:
        raise ConfigurationError("projection settings are not informationally complete")
    return _Design(a, projector_stack(settings), normalization_indices(settings))


def _check_design(settings) -> _Design:
    return _design_for(tuple(settings))


def project_to_physical(rho: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues and renormalize."""
    rho = (rho + rho.conj().T) / 2
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0, None)
    if w.sum() <= 0:
        return np.eye(4, dtype=complex) / 4
    w /= w.sum()
    return (v * w) @ v.conj().T


@dataclass
class TomographyInput:
    """Per-setting counts on a common delay binning.

    ``counts`` has shape ``(len(settings), len(edges) - 1)``.
    """

    counts: np.ndarray
    edges: np.ndarray
    settings: list

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        self.edges = np.asarray(self.edges, dtype=float)
        if self.counts.ndim != 2 or self.counts.shape != (len(self.settings), len(self.edges) - 1):
            raise ValueError(
                f"counts shape {self.counts.shape} does not match "
                f"{len(self.settings)} settings x {len(self.edges) - 1} bins"
            )
        if np.any(self.counts < 0) or not np.all(np.isfinite(self.counts)):
            raise ValueError("counts must be finite and non-negative")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        ids = [s.setting_id for s in self.settings]
        if len(set(ids)) != len(ids):
            raise ValueError("setting ids must be unique")

    @property
    def bin_ps(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def window_bins(self, start: float, stop: float) -> slice:
        """Bins fully inside ``[start, stop)``."""
        tol = 1e-9 * max(1.0, abs(self.bin_ps))
        lo = int(np.searchsorted(self.edges, start - tol, side="left"))
        hi = int(np.searchsorted(self.edges, stop + tol, side="right")) - 1
        return slice(lo, max(lo, hi))

    def window_counts(self, start: float, stop: float) -> np.ndarray:
        """Raw per-setting, per-bin counts in the window, shape ``(S, nbins)``."""
        return self.counts[:, self.window_bins(start, stop)]

    def scaled(self, factor: float) -> "TomographyInput":
        return TomographyInput(self.counts * factor, self.edges, self.settings)


def aggregate(raw: np.ndarray, norm_idx, weighting: str = "counts") -> np.ndarray:
    """Collapse per-bin counts ``(S, nbins)`` to per-setting totals.

    ``"counts"`` sums the bins. ``"uniform"`` first rescales every bin to the
    same rectilinear-quadruple total, so that each bin's normalized state
    carries equal weight, as in a square time average of rho(t).
    """
    raw = np.asarray(raw, dtype=float)
    if weighting == "counts":
        return raw.sum(axis=1)
    if weighting != "uniform":
        raise ValueError(f"unknown weighting {weighting!r}")
    quad = raw[norm_idx].sum(axis=0)
    ok = quad > 0
    if not ok.any():
        return np.zeros(raw.shape[0])
    weights = np.zeros_like(quad)
    weights[ok] = quad[ok].mean() / quad[ok]
    return raw @ weights


@dataclass
class ReconstructionResult:
    rho: np.ndarray
    method: str
    normalization: float
    log_likelihood: float | None = None
    converged: bool = True
    iterations: int = 0
    low_stats: bool = False
    history: list = field(default_factory=list, repr=False)

    @property
    def negativity(self) -> float:
        return negativity(self.rho).value


def _log_likelihood(counts, mu) -> float:
    mu = np.maximum(mu, 1e-300)
    return float(np.sum(np.where(counts > 0, counts * np.log(mu), 0.0) - mu))


def linear_from_counts(counts, settings, low_stats: bool | None = None) -> ReconstructionResult:
    """Least-squares inversion of ``counts_v = N Tr(P_v rho)``.

    Hermitian and unit trace by construction; may be non-positive.
    """
    counts = np.asarray(counts, dtype=float)
    design = _check_design(settings)
    norm = counts[design.norm_idx].sum()
    if norm <= 0:
        raise EmptyWindowError("no rectilinear counts in window")
    r, *_ = np.linalg.lstsq(design.design, counts / norm, rcond=None)
    rho = np.einsum("k,kij->ij", r, _HERMITIAN_BASIS)
    rho = (rho + rho.conj().T) / 2
    rho /= np.trace(rho).real
    if low_stats is None:
        low_stats = counts.sum() < LOW_STATS_EVENTS
    mu = norm * np.einsum("nij,ji->n", design.projectors, rho).real
    return ReconstructionResult(rho, "linear", norm, _log_likelihood(counts, mu), low_stats=low_stats)


_TRIL = np.tril_indices(4, -1)
# identity admixture of the starting point; small enough to leave exact pure
# data at the optimum, large enough for rank-raising directions to have gradient
_INIT_MIX = 1e-9


def _rho_to_params(rho: np.ndarray) -> np.ndarray:
    rho = project_to_physical(rho)
    # keep the start strictly inside the cone so Cholesky exists
    rho = (1 - _INIT_MIX) * rho + _INIT_MIX * np.eye(4) / 4
    j = np.eye(4)[::-1]
    chol = np.linalg.cholesky(j @ rho @ j)
    t = j @ chol.conj().T @ j  # lower triangular with T^dag T = rho
    off = t[_TRIL]
    return np.concatenate([np.diag(t).real, off.real, off.imag])


def _params_to_t(x: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = x[:4]
    t[_TRIL] = x[4:10] + 1j * x[10:16]
    return t


def params_to_rho(x: np.ndarray) -> np.ndarray:
    t = _params_to_t(x)
    s = t.conj().T @ t
    return s / np.trace(s).real


class _Objective:
    """Scaled negative log-likelihood ``-sum(f ln p - p)`` with ``f = n / N``."""

    def __init__(self, freqs, projectors):
        self.f = freqs
        self.proj = projectors.reshape(len(projectors), 16)
        # Tr(P S) = sum_ij P_ij S_ji
        self.proj_t = projectors.transpose(0, 2, 1).reshape(len(projectors), 16)
        self.mask = freqs > 0

    def __call__(self, x):
        t = _params_to_t(x)
        s = t.conj().T @ t
        tr = np.trace(s).real
        p = (self.proj_t @ s.reshape(16)).real / tr
        p_safe = np.maximum(p, 1e-300)
        value = -np.sum(np.where(self.mask, self.f * np.log(p_safe), 0.0)) + p.sum()
        g = np.where(self.mask, -self.f / p_safe, 0.0) + 1.0
        gmat = (g @ self.proj).reshape(4, 4)
        gmat = (gmat - np.dot(g, p) * np.eye(4)) / tr
        m = t @ gmat
        grad = 2 * np.concatenate([np.diag(m).real, m[_TRIL].real, m[_TRIL].imag])
        return value, grad


def mle_from_counts(counts, settings, init: np.ndarray | None = None,
                    max_iter: int = 5000, low_stats: bool | None = None) -> ReconstructionResult:
    """Physical maximum-likelihood state for one window of counts.

    Starts from ``init`` (default: the linear estimate projected onto the
    positive cone). Converged when the scaled gradient norm drops below 1e-8
    or the relative likelihood change below 1e-12.
    """
    counts = np.asarray(counts, dtype=float)
    design = _check_design(settings)
    norm = counts[design.norm_idx].sum()
    if norm <= 0:
        raise EmptyWindowError("no rectilinear counts in window")
    if low_stats is None:
        low_stats = counts.sum() < LOW_STATS_EVENTS
    proj = design.projectors
    if init is None:
        init = linear_from_counts(counts, settings).rho
    objective = _Objective(counts / norm, proj)
    x0 = _rho_to_params(init)

    history = [objective(x0)[0]]

    def record(intermediate_result):
        history.append(float(intermediate_result.fun))

    res = minimize(objective, x0, jac=True, method="L-BFGS-B", callback=record,
                   options={"maxiter": max_iter, "maxcor": 30, "gtol": 1e-12, "ftol": 1e-15})
    x = res.x
    value, grad = objective(x)
    # the trace scale of T is a flat direction; measure the gradient at unit scale
    scale = np.sqrt(np.trace(_params_to_t(x).conj().T @ _params_to_t(x)).real)
    gnorm = float(np.linalg.norm(grad * scale))
    rel = abs(history[-1] - history[-2]) / max(abs(history[-1]), 1.0) if len(history) > 1 else np.inf
    converged = gnorm < 1e-8 or rel < 1e-12
    rho = params_to_rho(x)
    rho = (rho + rho.conj().T) / 2
    mu = norm * np.einsum("nij,ji->n", proj, rho).real
    return ReconstructionResult(
        rho, "mle", norm, _log_likelihood(counts, mu), converged, int(res.nit), low_stats,
        history=[-norm * h for h in history],
    )


def reconstruct_counts(counts, settings, method: str = "mle", init=None, low_stats=None):
    if method == "mle":
        return mle_from_counts(counts, settings, init=init, low_stats=low_stats)
    if method == "linear":
        return linear_from_counts(counts, settings, low_stats=low_stats)
    raise ValueError(f"unknown method {method!r}")


def _window_input(inp: TomographyInput, start: float, stop: float, weighting: str):
    raw = inp.window_counts(start, stop)
    if raw.shape[1] == 0:
        raise EmptyWindowError(f"window [{start}, {stop}) holds no complete bins")
    norm_idx = normalization_indices(inp.settings)
    return raw, aggregate(raw, norm_idx, weighting), raw.sum() < LOW_STATS_EVENTS


def linear_reconstruct(inp: TomographyInput, start: float, stop: float,
                       weighting: str = "counts") -> ReconstructionResult:
    _, counts, low = _window_input(inp, start, stop, weighting)
    return linear_from_counts(counts, inp.settings, low_stats=low)


def mle_reconstruct(inp: TomographyInput, start: float, stop: float, init=None,
                    weighting: str = "counts") -> ReconstructionResult:
    _, counts, low = _window_input(inp, start, stop, weighting)
    return mle_from_counts(counts, inp.settings, init=init, low_stats=low)


@dataclass
class WindowEstimate:
    t_start: float
    t_end: float
    result: ReconstructionResult | None
    error: str | None = None
    sigma: "BootstrapResult | None" = None


def window_starts(inp: TomographyInput, window_ps: float, step_ps: float,
                  start: float | None = None, stop: float | None = None) -> np.ndarray:
    if window_ps < inp.bin_ps - 1e-9:
        raise ConfigurationError(f"window {window_ps} ps is narrower than a bin ({inp.bin_ps} ps)")
    if step_ps <= 0:
        raise ConfigurationError("step must be positive")
    start = inp.edges[0] if start is None else start
    stop = inp.edges[-1] if stop is None else min(stop, inp.edges[-1])
    n = int(np.floor((stop - window_ps - start) / step_ps + 1e-9)) + 1
    return start + step_ps * np.arange(max(n, 0))


def reconstruct_time_series(inp: TomographyInput, window_ps: float, step_ps: float | None = None,
                            method: str = "mle", start: float | None = None,
                            stop: float | None = None, n_resamples: int = 0,
                            rng=None) -> list[WindowEstimate]:
    """Reconstruct on windows ``[t, t + window_ps)`` stepped by ``step_ps``.

    Failing windows are reported in their ``error`` field; the series goes on.
    With ``n_resamples`` each window also gets a bootstrap uncertainty.
    """
    step_ps = window_ps if step_ps is None else step_ps
    rng = np.random.default_rng(rng)
    out = []
    for t0 in window_starts(inp, window_ps, step_ps, start, stop):
        t1 = t0 + window_ps
        try:
            _, counts, low = _window_input(inp, t0, t1, "counts")
            res = reconstruct_counts(counts, inp.settings, method, low_stats=low)
        except (EmptyWindowError, np.linalg.LinAlgError) as exc:
            out.append(WindowEstimate(float(t0), float(t1), None, str(exc)))
            continue
        est = WindowEstimate(float(t0), float(t1), res)
        if n_resamples:
            est.sigma = bootstrap_uncertainty(inp, t0, t1, n_resamples, rng=rng, method=method,
                                              center=res)
        out.append(est)
    return out


@dataclass
class BootstrapResult:
    rho_real_sigma: np.ndarray
    rho_imag_sigma: np.ndarray
    rho_abs_sigma: np.ndarray
    negativity_sigma: float
    n_resamples: int
    n_failed: int = 0


def bootstrap_counts(raw: np.ndarray, settings, n_resamples: int, rng=None,
                     weighting: str = "counts", method: str = "mle",
                     center: ReconstructionResult | None = None) -> BootstrapResult:
    """Poisson parametric bootstrap on per-bin counts ``(S, nbins)``."""
    if n_resamples < 100:
        raise ConfigurationError(f"n_resamples must be at least 100, got {n_resamples}")
    rng = np.random.default_rng(rng)
    norm_idx = normalization_indices(settings)
    raw = np.asarray(raw, dtype=float)
    init = None if center is None else center.rho
    rhos, negs = [], []
    failed = 0
    for _ in range(n_resamples):
        counts = aggregate(rng.poisson(raw), norm_idx, weighting)
        try:
            res = reconstruct_counts(counts, settings, method, init=init, low_stats=False)
        except EmptyWindowError:
            failed += 1
            continue
        rhos.append(res.rho)
        negs.append(negativity(res.rho).value)
    if len(rhos) < 2:
        raise EmptyWindowError("bootstrap resamples were empty")
    rhos = np.array(rhos)
    return BootstrapResult(
        rhos.real.std(axis=0, ddof=1), rhos.imag.std(axis=0, ddof=1),
        np.abs(rhos).std(axis=0, ddof=1), float(np.std(negs, ddof=1)), n_resamples, failed,
    )


def bootstrap_uncertainty(inp: TomographyInput, start: float, stop: float, n_resamples: int,
                          rng=None, weighting: str = "counts", method: str = "mle",
                          center: ReconstructionResult | None = None) -> BootstrapResult:
    raw, _, _ = _window_input(inp, start, stop, weighting)
    return bootstrap_counts(raw, inp.settings, n_resamples, rng, weighting, method, center)
