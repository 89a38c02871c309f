"""Text file formats: event files, matrix-series files and tool CSVs.

Every file starts with comment lines (``#``) carrying the tool version and the
SHA-256 of the canonical configuration, followed by a CSV header row. Files are
written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import io
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import Config, parse_config
from .polarization import ProjectionSetting, named_state

EVENTS_MAGIC = "# cascade-events v1"
SERIES_MAGIC = "# cascade-matrix-series v1"
EVENT_COLUMNS = ("pulse_index", "setting_id", "t1_ps", "t2_ps")
MATRIX_TOL = 1e-9


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def provenance_line(config: Config) -> str:
    return f"# tool: cascadetomo {__version__}; config-sha256: {config.digest()}"


def _setting_token(s: ProjectionSetting) -> str:
    n1, n2 = s.p1.name(), s.p2.name()
    if n1 is None or n2 is None:
        raise FormatError(f"setting {s.setting_id} is not built from named states")
    return f"{s.setting_id}={n1}/{n2}"


def _parse_setting_token(token: str) -> ProjectionSetting:
    try:
        sid, pair = token.split("=")
        n1, n2 = pair.split("/")
        return ProjectionSetting(int(sid), named_state(n1), named_state(n2))
    except ValueError as exc:
        raise FormatError(f"bad setting token {token!r}") from exc


# -- events -----------------------------------------------------------------

@dataclass
class EventFile:
    events: np.ndarray
    config: Config
    settings: list
    complete: bool = True


def format_events(events: np.ndarray, config: Config, settings, complete: bool = True) -> str:
    order = np.lexsort((events["pulse_index"], events["setting_id"]))
    if not np.array_equal(order, np.arange(events.size)):
        raise FormatError("events must be sorted by (setting_id, pulse_index)")
    buf = io.StringIO()
    buf.write(EVENTS_MAGIC + "\n")
    buf.write(provenance_line(config) + "\n")
    buf.write("# settings: " + " ".join(_setting_token(s) for s in settings) + "\n")
    buf.write(f"# complete: {'true' if complete else 'false'}\n")
    buf.write("# config-begin\n")
    for line in config.canonical().splitlines():
        buf.write(f"# {line}\n")
    buf.write("# config-end\n")
    buf.write(",".join(EVENT_COLUMNS) + "\n")
    if events.size:
        np.savetxt(buf, np.column_stack([events[c] for c in EVENT_COLUMNS]).astype(object),
                   fmt=["%d", "%d", "%.6f", "%.6f"], delimiter=",")
    return buf.getvalue()


def write_events(path, events, config: Config, settings, complete: bool = True) -> None:
    atomic_write(path, format_events(events, config, settings, complete))


def parse_events(text: str) -> EventFile:
    from .simulator import EVENT_DTYPE

    lines = text.splitlines()
    if not lines or lines[0] != EVENTS_MAGIC:
        raise FormatError(f"missing header line {EVENTS_MAGIC!r}")
    settings, complete, cfg_lines, in_cfg = None, True, [], False
    k = 1
    while k < len(lines) and lines[k].startswith("#"):
        line = lines[k]
        if line == "# config-begin":
            in_cfg = True
        elif line == "# config-end":
            in_cfg = False
        elif in_cfg:
            cfg_lines.append(line[2:])
        elif line.startswith("# settings:"):
            settings = [_parse_setting_token(tok) for tok in line.split(":", 1)[1].split()]
        elif line.startswith("# complete:"):
            complete = line.split(":", 1)[1].strip() == "true"
        k += 1
    if settings is None:
        raise FormatError("event file does not declare its settings")
    if k >= len(lines) or lines[k] != ",".join(EVENT_COLUMNS):
        raise FormatError("missing event column header")
    config = parse_config("\n".join(cfg_lines))
    body = lines[k + 1:]
    events = np.empty(0, dtype=EVENT_DTYPE)
    if body:
        try:
            events = np.loadtxt(body, delimiter=",", dtype=EVENT_DTYPE, ndmin=1)
        except ValueError as exc:
            raise FormatError(f"malformed event line: {exc}") from None
        if not (np.all(np.isfinite(events["t1_ps"])) and np.all(np.isfinite(events["t2_ps"]))):
            raise FormatError("event times must be finite")
        key = events["setting_id"].astype(np.int64) * (1 << 40) + events["pulse_index"]
        if np.any(np.diff(key) <= 0):
            raise FormatError("events are not strictly increasing in (setting_id, pulse_index)")
    return EventFile(events, config, settings, complete)


def read_events(path) -> EventFile:
    with open(path, encoding="utf-8") as fh:
        return parse_events(fh.read())


# -- matrix series -----------------------------------------------------------

SERIES_COLUMNS = (
    ["t_start_ps", "t_end_ps"]
    + [f"re_{i}{j}" for i in range(4) for j in range(4)]
    + [f"im_{i}{j}" for i in range(4) for j in range(4)]
    + ["negativity", "negativity_sigma", "low_stats"]
)


@dataclass
class SeriesRow:
    t_start_ps: float
    t_end_ps: float
    rho: np.ndarray
    negativity: float
    negativity_sigma: float
    low_stats: bool


def _num(x: float) -> str:
    return repr(float(x))


def format_series(rows, config: Config, method: str, errors=()) -> str:
    buf = io.StringIO()
    buf.write(SERIES_MAGIC + "\n")
    buf.write(provenance_line(config) + "\n")
    buf.write(f"# method: {method}\n")
    for t0, t1, msg in errors:
        buf.write(f"# error [{_num(t0)}, {_num(t1)}): {msg}\n")
    buf.write(",".join(SERIES_COLUMNS) + "\n")
    for r in rows:
        rho = np.asarray(r.rho)
        cells = [_num(r.t_start_ps), _num(r.t_end_ps)]
        cells += [_num(v) for v in rho.real.ravel()]
        cells += [_num(v) for v in rho.imag.ravel()]
        cells += [_num(r.negativity), _num(r.negativity_sigma), str(int(bool(r.low_stats)))]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def parse_series(text: str) -> list[SeriesRow]:
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or lines[0] != SERIES_MAGIC:
        raise FormatError(f"missing header line {SERIES_MAGIC!r}")
    body = [ln for ln in lines if not ln.startswith("#")]
    if not body or body[0] != ",".join(SERIES_COLUMNS):
        raise FormatError("missing matrix-series column header")
    rows = []
    for n, line in enumerate(body[1:], start=1):
        cells = line.split(",")
        if len(cells) != len(SERIES_COLUMNS):
            raise FormatError(f"row {n}: expected {len(SERIES_COLUMNS)} cells, got {len(cells)}")
        vals = [float(c) for c in cells[:-1]]
        rho = np.empty((4, 4), dtype=complex)
        # assign parts separately: re + 1j * im would not keep signed zeros
        rho.real = np.reshape(vals[2:18], (4, 4))
        rho.imag = np.reshape(vals[18:34], (4, 4))
        if np.max(np.abs(rho - rho.conj().T)) > MATRIX_TOL:
            raise FormatError(f"row {n}: matrix is not Hermitian")
        if abs(np.trace(rho).real - 1) > MATRIX_TOL:
            raise FormatError(f"row {n}: matrix trace is not 1")
        rows.append(SeriesRow(vals[0], vals[1], rho, vals[34], vals[35], cells[-1] == "1"))
    return rows


def read_series(path) -> list[SeriesRow]:
    with open(path, encoding="utf-8") as fh:
        return parse_series(fh.read())


# -- generic CSV -------------------------------------------------------------

def format_csv(columns, rows, config: Config, extra_comments=()) -> str:
    buf = io.StringIO()
    buf.write(provenance_line(config) + "\n")
    for c in extra_comments:
        buf.write(f"# {c}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_cell(v) for v in row) + "\n")
    return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    return str(v)


def read_csv(path) -> tuple[list[str], list[list[str]], list[str]]:
    """Returns ``(header, rows, comments)`` with cells as strings."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    data = [ln for ln in lines if ln and not ln.startswith("#")]
    if not data:
        raise FormatError(f"{path}: no header row")
    return data[0].split(","), [ln.split(",") for ln in data[1:]], comments
