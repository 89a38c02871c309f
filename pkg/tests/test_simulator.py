import math

import numpy as np
import pytest
from scipy.optimize import curve_fit

from cascadetomo.cascade_model import CascadeParams
from cascadetomo.polarization import ProjectionSetting, named_state
from cascadetomo.simulator import (
    EVENT_DTYPE,
    RunConfig,
    detect_pairs,
    detector_sigma,
    histogram_2d,
    histogram_dt,
    projection_probability,
    run_experiment,
    sample_emission,
    simulate_block,
)
from cascadetomo.tomography import default_settings

P = CascadeParams(eta=1.0)


def setting(a, b, sid=0):
    return ProjectionSetting(sid, named_state(a), named_state(b))


def test_emission_means():
    rng = np.random.default_rng(1)
    n = 1_000_000
    t_xx, t_x = sample_emission(rng, P, n)
    d = t_x - t_xx
    assert abs(d.mean() - 410) < 3 * d.std() / math.sqrt(n)
    assert abs(t_xx.mean() - 260) < 3 * t_xx.std() / math.sqrt(n)
    assert np.all(d >= 0)


def test_emission_without_biexciton_delay():
    t_xx, t_x = sample_emission(np.random.default_rng(2), P.with_(tau_xx_ps=0.0), 1000)
    assert np.all(t_xx == 0) and np.all(t_x > 0)


def test_cross_rectilinear_never_detected():
    rng = np.random.default_rng(3)
    t_xx, t_x = sample_emission(rng, P, 200_000)
    mask, t1, t2 = detect_pairs(rng, t_xx, t_x, setting("H", "V"), P)
    assert mask.sum() == 0 and t1.size == 0


def test_co_rectilinear_acceptance_half():
    rng = np.random.default_rng(4)
    n = 1_000_000
    t_xx, t_x = sample_emission(rng, P, n)
    mask, _, _ = detect_pairs(rng, t_xx, t_x, setting("H", "H"), P)
    frac = mask.mean()
    assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / n)
    # the accepted delays are polarization-blind in this setting
    d = (t_x - t_xx)[mask]
    assert abs(d.mean() - 410) < 3 * d.std() / math.sqrt(d.size)


def test_jitter_adds_two_detector_variances():
    rng = np.random.default_rng(5)
    n = 2_000_000
    t_xx, t_x = sample_emission(rng, P, n)
    mask, t1, t2 = detect_pairs(rng, t_xx, t_x, setting("H", "H"), P)
    assert mask.sum() > 1_000_000 * 0.99
    # pairing each event with its jitter-free delay removes the 410 ps spread
    extra = np.var((t2 - t1) - (t_x - t_xx)[mask])
    sd = detector_sigma(P)
    assert abs(extra - 2 * sd ** 2) < 0.05 * 2 * sd ** 2
    # the pair response is the configured FWHM
    assert math.sqrt(2) * sd * 2 * math.sqrt(2 * math.log(2)) == pytest.approx(42.0)


def test_acceptance_never_exceeds_efficiency():
    delays = np.linspace(0, 1000, 2001)
    for s in default_settings():
        for eta in (1.0, 0.3):
            prob = eta ** 2 * projection_probability(delays, s, P)
            assert prob.max() <= eta ** 2 + 1e-15


@pytest.mark.parametrize("basis", [("H", "V"), ("D", "Dbar"), ("L", "R")])
def test_complete_basis_fractions_sum_to_one(basis):
    rng = np.random.default_rng(6)
    n = 200_000
    total = 0
    for k, (a, b) in enumerate([(x, y) for x in basis for y in basis]):
        t_xx, t_x = sample_emission(rng, P, n)
        total += detect_pairs(rng, t_xx, t_x, setting(a, b, k), P)[0].sum()
    # four independent binomials; 4 sigma bound on the summed fraction
    assert abs(total / n - 1) < 4 * math.sqrt(4 * 0.25 / n)


def test_block_streams_are_independent_of_order():
    cfg = RunConfig(P, pulses_per_setting=5000, rng_seed=77)
    s = default_settings()[10]
    a = simulate_block(cfg, s, 0)
    simulate_block(cfg, default_settings()[3], 0)
    b = simulate_block(cfg, s, 0)
    assert a.tobytes() == b.tobytes()


def test_run_is_sorted_and_deterministic():
    cfg = RunConfig(P, pulses_per_setting=20_000, rng_seed=5)
    a = run_experiment(cfg)
    b = run_experiment(cfg, workers=4)
    assert a.events.dtype == EVENT_DTYPE
    assert a.events.tobytes() == b.events.tobytes()
    key = a.events["setting_id"].astype(np.int64) * 10**9 + a.events["pulse_index"]
    assert np.all(np.diff(key) > 0)
    assert a.complete


def test_low_efficiency_rate():
    cfg = RunConfig(CascadeParams(eta=1e-3), settings=[setting("H", "H")],
                    pulses_per_setting=20_000_000, rng_seed=9)
    n = run_experiment(cfg).events.size
    mean = 0.5e-6 * 20_000_000
    assert abs(n - mean) < 4 * math.sqrt(mean)


def test_short_repetition_period_warns():
    with pytest.warns(RuntimeWarning):
        RunConfig(P, repetition_mhz=500.0)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(P, pulses_per_setting=0)
    with pytest.raises(ValueError):
        RunConfig(P, rng_seed=-1)


def test_histogram_2d_basics():
    counts, edges = histogram_2d(np.empty(0, dtype=EVENT_DTYPE), 10.0, 100.0)
    assert counts.shape == (10, 10) and counts.sum() == 0
    cfg = RunConfig(P, settings=[setting("H", "H")], pulses_per_setting=100_000, rng_seed=3)
    ev = run_experiment(cfg).events
    counts, edges = histogram_2d(ev, 8.0, 4000.0)
    inside = np.sum((ev["t1_ps"] >= 0) & (ev["t1_ps"] < 4000) & (ev["t2_ps"] >= 0) & (ev["t2_ps"] < 4000))
    assert counts.sum() == inside


def test_biexciton_marginal_decay():
    cfg = RunConfig(P, settings=[setting("H", "H")], pulses_per_setting=400_000, rng_seed=12)
    ev = run_experiment(cfg).events
    counts, edges = histogram_2d(ev, 10.0, 3000.0)
    marginal = counts.sum(axis=1)
    centers = edges[:-1] + 5
    sel = centers > 100  # clear of the jitter-smeared onset
    popt, _ = curve_fit(lambda t, a, tau: a * np.exp(-t / tau), centers[sel], marginal[sel],
                        p0=(marginal.max(), 200.0), sigma=np.sqrt(np.maximum(marginal[sel], 1)))
    assert abs(popt[1] - 260) < 10


def test_circular_ridges_in_anti_phase():
    settings = [setting("L", "L", 0), setting("L", "R", 1)]
    cfg = RunConfig(P.with_(irf_fwhm_ps=0.0), settings=settings, pulses_per_setting=200_000,
                    rng_seed=8)
    hist = histogram_dt(run_experiment(cfg).events, 61.0, 1220.0, 0.0, settings=settings)
    ll, lr = hist.counts
    # bins of half a period alternate between the two settings
    assert np.all(np.sign(ll[:8] - lr[:8]) == np.array([-1, 1] * 4))


def test_histogram_dt_conservation_and_no_jitter():
    settings = default_settings()
    cfg = RunConfig(P.with_(irf_fwhm_ps=0.0), pulses_per_setting=20_000, rng_seed=4)
    ev = run_experiment(cfg).events
    hist = histogram_dt(ev, 2.0, 20000.0, -200.0)
    assert hist.counts.sum() == ev.size
    neg = hist.edges[:-1] < 0
    assert hist.counts[:, neg].sum() == 0
    with pytest.raises(ValueError):
        histogram_dt(ev, 2.0, 100.0, settings=settings[:3])
