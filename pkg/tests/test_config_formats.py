import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from cascadetomo.config import Config, ConfigError, build_config, parse_config
from cascadetomo.formats import (
    FormatError,
    SeriesRow,
    format_csv,
    format_events,
    format_series,
    parse_events,
    parse_series,
)
from cascadetomo.cascade_model import CascadeParams, density_matrix
from cascadetomo.simulator import EVENT_DTYPE, RunConfig, run_experiment
from cascadetomo.tomography import default_settings


def test_defaults():
    c = Config()
    assert c.cascade == CascadeParams(eta=c.cascade.eta)
    assert c.cascade.eta ** 2 == pytest.approx(2e-6)
    assert c.run.repetition_mhz == 76.0
    assert c.analysis.window_ps == 24.0
    assert parse_config("").canonical() == c.canonical()


def test_unknown_key_names_section_and_key():
    with pytest.raises(ConfigError) as exc:
        parse_config("[cascade]\ntau_x = 410\n")
    assert "[cascade] tau_x" in str(exc.value)
    with pytest.raises(ConfigError, match=r"\[extras\]"):
        parse_config("[extras]\nx = 1\n")


@pytest.mark.parametrize("text,where", [
    ("[cascade]\neta = 2\n", "[cascade]"),
    ("[run]\nseed = -3\n", "[run] seed"),
    ("[run]\npulses_per_setting = ten\n", "[run] pulses_per_setting"),
    ("[analysis]\nbin_ps = 0\n", "[analysis] bin_ps"),
    ("[analysis]\nn_resamples = 1\n", "[analysis] n_resamples"),
    ("[cascade]\ntau_x_ps = nan\n", "[cascade] tau_x_ps"),
])
def test_invalid_values(text, where):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert where in str(exc.value)


def test_splitting_and_period_derive_each_other():
    c = parse_config("[cascade]\ndelta_ueV = 20\n")
    assert c.cascade.precession_ps == pytest.approx(4135.667696 / 20)
    c = parse_config("[cascade]\nprecession_ps = 100\n")
    assert c.cascade.delta_ueV == pytest.approx(41.35667696)


def test_digest_tracks_content():
    a, b = Config(), parse_config("[run]\nseed = 2\n")
    assert a.digest() == Config().digest()
    assert a.digest() != b.digest()


configs = st.builds(
    lambda tau_x, tau_xx, eta, irf, seed, pulses, bin_ps: build_config({
        "cascade": {"tau_x_ps": tau_x, "tau_xx_ps": tau_xx, "eta": eta, "irf_fwhm_ps": irf},
        "run": {"seed": seed, "pulses_per_setting": pulses},
        "analysis": {"bin_ps": bin_ps},
    }),
    st.floats(50, 800), st.floats(0, 400), st.floats(0.5, 1.0), st.floats(0, 60),
    st.integers(0, 2**64 - 1), st.integers(1, 1500), st.floats(0.5, 8),
)


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(configs)
def test_files_round_trip(config):
    assert parse_config(config.canonical()).canonical() == config.canonical()
    run = RunConfig(config.cascade, default_settings(), config.run.pulses_per_setting,
                    config.run.seed)
    events = run_experiment(run).events
    text = format_events(events, config, run.settings)
    back = parse_events(text)
    assert format_events(back.events, back.config, back.settings, back.complete) == text
    assert back.config.digest() == config.digest()
    assert np.array_equal(back.events["pulse_index"], events["pulse_index"])
    assert np.max(np.abs(back.events["t1_ps"] - events["t1_ps"]), initial=0) <= 5e-7


def test_event_file_layout():
    config = Config()
    ev = np.zeros(2, dtype=EVENT_DTYPE)
    ev["pulse_index"] = [3, 9]
    ev["t1_ps"] = [1.0, 2.5]
    ev["t2_ps"] = [400.1234564, 7.0]
    text = format_events(ev, config, default_settings())
    lines = text.splitlines()
    assert lines[0] == "# cascade-events v1"
    assert lines[1].startswith("# tool: cascadetomo ") and config.digest() in lines[1]
    assert lines[-3] == "pulse_index,setting_id,t1_ps,t2_ps"
    assert lines[-2:] == ["3,0,1.000000,400.123456", "9,0,2.500000,7.000000"]


def test_event_file_rejects_disorder():
    ev = np.zeros(2, dtype=EVENT_DTYPE)
    ev["pulse_index"] = [5, 2]
    with pytest.raises(FormatError):
        format_events(ev, Config(), default_settings())
    good = format_events(ev[::-1].copy(), Config(), default_settings())
    swapped = good.replace("2,0,", "X").replace("5,0,", "2,0,").replace("X", "5,0,")
    with pytest.raises(FormatError):
        parse_events(swapped)
    with pytest.raises(FormatError):
        parse_events(good.replace("5,0,0.000000", "5,0,nan"))
    with pytest.raises(FormatError):
        parse_events(good.replace("# cascade-events v1", "# other"))


def test_series_round_trip_and_checks():
    rows = [SeriesRow(24.0 * k, 24.0 * (k + 1), density_matrix(24.0 * k + 12, CascadeParams()),
                      0.4688, 0.01, k == 1) for k in range(3)]
    text = format_series(rows, Config(), "mle", errors=[(72.0, 96.0, "no counts")])
    back = parse_series(text)
    assert format_series(back, Config(), "mle", errors=[(72.0, 96.0, "no counts")]) == text
    assert [r.low_stats for r in back] == [False, True, False]
    assert np.max(np.abs(back[2].rho - rows[2].rho)) == 0
    bad = [SeriesRow(0.0, 24.0, np.diag([0.6, 0, 0, 0.6]).astype(complex), 0.0, 0.0, False)]
    with pytest.raises(FormatError, match="trace"):
        parse_series(format_series(bad, Config(), "linear"))
    skew = density_matrix(0.0, CascadeParams())
    skew[0, 3] += 1e-6
    with pytest.raises(FormatError, match="Hermitian"):
        parse_series(format_series([SeriesRow(0.0, 1.0, skew, 0.5, 0.0, False)], Config(), "mle"))


def test_csv_header_and_provenance():
    text = format_csv(("a", "b", "c"), [(1, 2.5, math.nan), (True, np.int64(3), "x")], Config())
    lines = text.splitlines()
    assert lines[0].startswith("# tool: cascadetomo") and "config-sha256" in lines[0]
    assert lines[1:] == ["a,b,c", "1,2.5,nan", "1,3,x"]


def test_inline_comments_are_ignored():
    c = parse_config("[cascade]\ntau_x_ps = 300   ; shorter lifetime\n[run]\nseed = 4  # comment\n")
    assert c.cascade.tau_x_ps == 300.0 and c.run.seed == 4
