import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import unitary_group

from cascadetomo.cascade_model import CascadeParams, density_matrix, window_average_density
from cascadetomo.metrics import (
    bell_fidelity,
    fidelity,
    max_bell_fidelity,
    negativity,
    partial_transpose,
    trace_distance,
    window_average_negativity,
)
from oracles import (
    N_AT_24PS,
    REVIVAL_DT,
    REVIVAL_N,
    negativity_eig,
    partial_transpose_loops,
    window_negativity_quad,
)

P = CascadeParams()


def random_density(rng, rank=4):
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    r = g @ g.conj().T
    return r / np.trace(r).real


def test_partial_transpose_examples():
    rho0 = density_matrix(0.0, P)
    assert np.allclose(np.linalg.eigvalsh(partial_transpose(rho0)), [-0.5, 0.5, 0.5, 0.5])
    hh = np.diag([1.0, 0, 0, 0]).astype(complex)
    assert np.array_equal(partial_transpose(hh), hh)


def test_partial_transpose_matches_index_definition():
    rng = np.random.default_rng(5)
    for _ in range(20):
        r = random_density(rng)
        pt = partial_transpose(r)
        assert np.allclose(pt, partial_transpose_loops(r), atol=0)
        assert np.allclose(partial_transpose(pt), r, atol=0)
        assert np.allclose(pt, pt.conj().T)


def test_negativity_examples():
    assert negativity(np.eye(4) / 4).value == 0
    mix = np.diag([0.5, 0, 0, 0.5]).astype(complex)
    assert negativity(mix).value == 0
    assert float(negativity(density_matrix(10.0, P))) == pytest.approx(0.5, abs=1e-12)


def test_negativity_rejects_bad_trace():
    with pytest.raises(ValueError):
        negativity(np.eye(4) / 2)


def test_negativity_value_is_sum_of_negative_eigenvalues():
    rng = np.random.default_rng(11)
    for _ in range(50):
        r = random_density(rng, rank=int(rng.integers(1, 5)))
        n = negativity(r)
        assert len(n.negative_eigenvalues) <= 1
        assert abs(n.value - sum(abs(e) for e in n.negative_eigenvalues)) < 1e-12
        assert abs(n.value - negativity_eig(r)) < 1e-9


def test_negativity_local_unitary_invariance():
    rng = np.random.default_rng(3)
    for k in range(100):
        rho = density_matrix(rng.uniform(0, 1000), P)
        u = np.kron(unitary_group.rvs(2, random_state=rng), unitary_group.rvs(2, random_state=rng))
        assert abs(negativity(u @ rho @ u.conj().T).value - 0.5) < 1e-10


def test_model_states_are_maximally_entangled():
    for t in np.linspace(0, 10 * 122, 1000):
        assert abs(negativity(density_matrix(t, P)).value - 0.5) < 1e-10


def test_bell_fidelity_examples():
    t = 33.0
    rho = density_matrix(t, P)
    phase = 2 * math.pi * t / 122
    assert bell_fidelity(rho, phase) == pytest.approx(1, abs=1e-12)
    assert bell_fidelity(rho, phase + math.pi) == pytest.approx(0, abs=1e-12)
    assert bell_fidelity(np.eye(4) / 4, 1.7) == pytest.approx(0.25, abs=1e-15)
    f, ph = max_bell_fidelity(rho)
    assert f == pytest.approx(1, abs=1e-12)
    assert ph == pytest.approx(phase, abs=1e-12)


@given(st.floats(0, 5000))
def test_twice_negativity_equals_max_bell_fidelity(t):
    rho = density_matrix(t, P)
    assert abs(2 * negativity(rho).value - max_bell_fidelity(rho)[0]) < 1e-10


@given(st.floats(0, 500), st.floats(0.5, 600))
def test_window_average_bell_fidelity(t0, dt):
    # corner c / 2 gives negativity |c| / 2 and best fidelity (1 + |c|) / 2
    rho = window_average_density(t0, dt, P)
    n = negativity(rho).value
    f = max_bell_fidelity(rho)[0]
    assert abs(f - (n + 0.5)) < 1e-10
    assert 2 * n <= f + 1e-12


def test_window_average_negativity_examples():
    assert window_average_negativity(17.0, 1e-6, P) == pytest.approx(0.5, abs=1e-10)
    assert window_average_negativity(0.0, 122.0, P) < 1e-12
    assert window_average_negativity(0.0, 24.0, P) == pytest.approx(N_AT_24PS, abs=1e-10)


def test_window_average_negativity_independent_of_start():
    rng = np.random.default_rng(8)
    values = [window_average_negativity(t0, 50.0, P) for t0 in rng.uniform(0, 2000, 50)]
    assert np.ptp(values) < 1e-10


def test_window_average_negativity_against_quadrature():
    for dt in np.linspace(0.5, 5 * 122, 100):
        assert abs(window_average_negativity(0.0, dt, P) - window_negativity_quad(0.0, dt)) < 1e-8
    assert window_average_negativity(0.0, REVIVAL_DT, P) == pytest.approx(REVIVAL_N, abs=1e-10)


def test_fidelity_and_trace_distance():
    rho = density_matrix(12.0, P)
    assert fidelity(rho, rho) == pytest.approx(1, abs=1e-14)
    assert trace_distance(rho, rho) == pytest.approx(0, abs=1e-14)
    assert fidelity(np.eye(4) / 4, np.eye(4) / 4) == pytest.approx(1, abs=1e-12)
    orth = density_matrix(12.0 + 61.0, P)
    assert fidelity(rho, orth) == pytest.approx(0, abs=1e-12)
    assert trace_distance(rho, orth) == pytest.approx(1, abs=1e-12)
