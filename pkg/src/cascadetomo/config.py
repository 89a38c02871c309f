"""INI configuration for the command-line tools."""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields

from .cascade_model import CascadeParams, precession_period
from .errors import ConfigurationError

DEFAULT_ETA = math.sqrt(2e-6)  # about 1e-6 co-polarized coincidences per pulse

SCHEMA = {
    "cascade": {
        "delta_ueV": float,
        "precession_ps": float,
        "tau_x_ps": float,
        "tau_xx_ps": float,
        "eta": float,
        "irf_fwhm_ps": float,
    },
    "run": {
        "pulses_per_setting": int,
        "seed": int,
        "repetition_mhz": float,
        "workers": int,
    },
    "analysis": {
        "bin_ps": float,
        "window_ps": float,
        "step_ps": float,
        "dt_max_ps": float,
        "dt_min_ps": float,
        "n_resamples": int,
    },
}


class ConfigError(ConfigurationError):
    def __init__(self, section: str, key: str | None, message: str):
        self.section = section
        self.key = key
        where = f"[{section}]" if key is None else f"[{section}] {key}"
        super().__init__(f"{where}: {message}")


@dataclass
class RunSection:
    pulses_per_setting: int = 1_000_000
    seed: int = 1
    repetition_mhz: float = 76.0
    workers: int = 1


@dataclass
class AnalysisSection:
    bin_ps: float = 2.0
    window_ps: float = 24.0
    step_ps: float = 24.0
    dt_max_ps: float = 3000.0
    dt_min_ps: float = -200.0
    n_resamples: int = 100


@dataclass
class Config:
    cascade: CascadeParams = field(default_factory=lambda: CascadeParams(eta=DEFAULT_ETA))
    run: RunSection = field(default_factory=RunSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)

    def sections(self) -> dict:
        return {
            "cascade": {f.name: getattr(self.cascade, f.name) for f in fields(self.cascade)},
            "run": {f.name: getattr(self.run, f.name) for f in fields(self.run)},
            "analysis": {f.name: getattr(self.analysis, f.name) for f in fields(self.analysis)},
        }

    def canonical(self) -> str:
        """Normalized INI text; stable across runs and platforms."""
        lines = []
        for section, values in self.sections().items():
            lines.append(f"[{section}]")
            for key in SCHEMA[section]:
                lines.append(f"{key} = {values[key]!r}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _convert(section: str, key: str, raw: str):
    kind = SCHEMA[section][key]
    try:
        if kind is int:
            value = int(raw, 0)
        else:
            value = float(raw)
    except ValueError:
        raise ConfigError(section, key, f"cannot parse {raw!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(value):
        raise ConfigError(section, key, "must be finite")
    return value


def parse_config(text: str) -> Config:
    """Parse INI text; unknown sections or keys are rejected."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"),
                                       default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", None, str(exc).splitlines()[0]) from None
    values: dict[str, dict] = {name: {} for name in SCHEMA}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, None, f"unknown section; expected one of {list(SCHEMA)}")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(section, key, f"unknown key; expected one of {list(SCHEMA[section])}")
            values[section][key] = _convert(section, key, raw)
    return build_config(values)


def build_config(values: dict) -> Config:
    cascade = dict(values.get("cascade", {}))
    cascade.setdefault("eta", DEFAULT_ETA)
    if "delta_ueV" in cascade and "precession_ps" not in cascade:
        cascade["precession_ps"] = precession_period(cascade["delta_ueV"])
    elif "precession_ps" in cascade and "delta_ueV" not in cascade:
        cascade["delta_ueV"] = precession_period(cascade["precession_ps"])
    try:
        params = CascadeParams(**cascade)
    except ValueError as exc:
        raise ConfigError("cascade", None, str(exc)) from None
    run = RunSection(**values.get("run", {}))
    if run.pulses_per_setting <= 0:
        raise ConfigError("run", "pulses_per_setting", "must be positive")
    if not 0 <= run.seed < 2**64:
        raise ConfigError("run", "seed", "must be a 64-bit unsigned integer")
    if run.repetition_mhz <= 0:
        raise ConfigError("run", "repetition_mhz", "must be positive")
    if run.workers < 1:
        raise ConfigError("run", "workers", "must be at least 1")
    analysis = AnalysisSection(**values.get("analysis", {}))
    for key in ("bin_ps", "window_ps", "step_ps", "dt_max_ps"):
        if getattr(analysis, key) <= 0:
            raise ConfigError("analysis", key, "must be positive")
    if analysis.n_resamples < 100:
        raise ConfigError("analysis", "n_resamples", "must be at least 100")
    return Config(params, run, analysis)


def load_config(path) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("file", None, f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)
