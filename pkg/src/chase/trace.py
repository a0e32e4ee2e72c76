"""Carbon-intensity traces: parsing, serialization, HTTP/file sources, lookups.

A trace is a uniformly sampled series of grid carbon intensities in g CO2/kWh.
Timestamps are UTC epoch seconds everywhere; sample ``k`` covers the half-open
interval ``[start + k*interval, start + (k+1)*interval)`` and its value holds
for the whole step (zero-order hold).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import numbers
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import requests

logger = logging.getLogger(__name__)

CSV_HEADER = ("timestamp", "intensity_gco2_kwh")

TraceFormat = Literal["csv", "json"]


class TraceError(ValueError):
    """Invalid trace input. ``index`` is the offending row, when known."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        if index is not None:
            message = f"{message} (row index {index})"
        super().__init__(message)


class FetchError(RuntimeError):
    def __init__(self, message: str, endpoint: str, window: tuple[int, int], status: int | None = None):
        self.endpoint = endpoint
        self.window = window
        self.status = status
        super().__init__(f"{message} [endpoint={endpoint} window={window[0]}..{window[1]}]")


@dataclass(frozen=True)
class CarbonTrace:
    start_time: int
    interval: int
    intensities: tuple[float, ...]

    def __post_init__(self):
        if isinstance(self.interval, bool) or not isinstance(self.interval, numbers.Integral) or self.interval <= 0:
            raise TraceError(f"interval must be a positive integer, got {self.interval!r}")
        if isinstance(self.start_time, bool) or not isinstance(self.start_time, numbers.Integral):
            raise TraceError(f"start_time must be integer epoch seconds, got {self.start_time!r}")
        object.__setattr__(self, "interval", int(self.interval))
        object.__setattr__(self, "start_time", int(self.start_time))
        values = tuple(float(v) for v in self.intensities)
        if not values:
            raise TraceError("trace is empty")
        for i, v in enumerate(values):
            if not math.isfinite(v):
                raise TraceError(f"non-finite intensity {v!r}", i)
            if v < 0:
                raise TraceError(f"negative intensity {v!r}", i)
        object.__setattr__(self, "intensities", values)

    def __len__(self) -> int:
        return len(self.intensities)

    @property
    def end_time(self) -> int:
        """Exclusive end of the last step."""
        return self.start_time + len(self.intensities) * self.interval

    def timestamp(self, index: int) -> int:
        return self.start_time + index * self.interval

    def timestamps(self) -> list[int]:
        return [self.start_time + k * self.interval for k in range(len(self.intensities))]

    def index_of(self, t: float) -> int:
        if not self.start_time <= t < self.end_time:
            raise TraceError(f"time {t} outside trace [{self.start_time}, {self.end_time})")
        return int((t - self.start_time) // self.interval)

    def slice(self, start: float, end: float) -> CarbonTrace:
        """Samples whose timestamp lies in ``[start, end)``."""
        keep = [k for k in range(len(self.intensities)) if start <= self.timestamp(k) < end]
        if not keep:
            raise TraceError(f"window [{start}, {end}) contains no samples of the trace")
        return CarbonTrace(self.timestamp(keep[0]), self.interval, self.intensities[keep[0] : keep[-1] + 1])


@dataclass(frozen=True)
class TraceSource:
    """Either a local file or an HTTP endpoint plus region; exactly one."""

    path: str | Path | None = None
    url: str | None = None
    region: str | None = None

    def __post_init__(self):
        if (self.path is None) == (self.url is None):
            raise ValueError("TraceSource needs exactly one of path or url")
        if self.url is not None and not self.region:
            raise ValueError("HTTP trace source needs a region identifier")


def _build(rows: Sequence[tuple[int, float]], interval: int | None, fill: str | None) -> CarbonTrace:
    if not rows:
        raise TraceError("trace document has no data rows")
    rows = sorted(rows, key=lambda r: r[0])
    for i in range(1, len(rows)):
        if rows[i][0] == rows[i - 1][0]:
            raise TraceError(f"duplicate timestamp {rows[i][0]}", i)
    if interval is None:
        if len(rows) < 2:
            raise TraceError("cannot infer interval from a single row; declare it explicitly")
        interval = rows[1][0] - rows[0][0]
    if interval <= 0:
        raise TraceError(f"interval must be positive, got {interval}")
    if fill not in (None, "hold"):
        raise ValueError(f"unknown fill mode {fill!r}")

    values = [rows[0][1]]
    for i in range(1, len(rows)):
        gap = rows[i][0] - rows[i - 1][0]
        if gap == interval:
            values.append(rows[i][1])
        elif fill == "hold" and gap == 2 * interval:
            missing = rows[i - 1][0] + interval
            logger.warning("filled missing step at t=%d with held value %r", missing, rows[i - 1][1])
            values.extend((rows[i - 1][1], rows[i][1]))
        else:
            raise TraceError(f"gap at index {i}: spacing {gap} s, expected {interval} s", i)
    return CarbonTrace(int(rows[0][0]), int(interval), tuple(values))


def _number(value, what: str, index: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TraceError(f"{what} must be a number, got {value!r}", index)
    return float(value)


def _epoch(value, index: int) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise TraceError(f"timestamp must be integer epoch seconds, got {value!r}", index)
    return int(value)


def _parse_csv(text: str) -> list[tuple[int, float]]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TraceError("empty document") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise TraceError(f"bad CSV header {header!r}, expected {','.join(CSV_HEADER)}")
    rows = []
    for i, rec in enumerate(r for r in reader if r):
        if len(rec) != 2:
            raise TraceError(f"expected 2 fields, got {len(rec)}", i)
        try:
            t = int(rec[0])
            ci = float(rec[1])
        except ValueError:
            raise TraceError(f"malformed row {rec!r}", i) from None
        rows.append((t, ci))
    return rows


def _parse_json(text: str) -> tuple[list[tuple[int, float]], int]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "interval_s" not in doc or "points" not in doc:
        raise TraceError("JSON trace needs 'interval_s' and 'points'")
    interval = doc["interval_s"]
    if isinstance(interval, bool) or not isinstance(interval, int):
        raise TraceError(f"interval_s must be an integer, got {interval!r}")
    if not isinstance(doc["points"], list):
        raise TraceError("'points' must be a list")
    rows = []
    for i, p in enumerate(doc["points"]):
        if not isinstance(p, dict) or "t" not in p or "ci" not in p:
            raise TraceError("point needs 't' and 'ci'", i)
        rows.append((_epoch(p["t"], i), _number(p["ci"], "ci", i)))
    return rows, interval


def parse_trace(text: str, format: TraceFormat = "csv", interval: int | None = None, fill: str | None = None) -> CarbonTrace:
    """Parse a CSV or JSON trace document.

    ``interval`` declares the expected spacing for CSV input (inferred from the
    first two rows otherwise). ``fill="hold"`` forward-fills single missing
    steps; any other irregular spacing is an error.
    """
    if not text.strip():
        raise TraceError("empty document")
    if format == "csv":
        rows = _parse_csv(text)
    elif format == "json":
        rows, declared = _parse_json(text)
        if interval is not None and interval != declared:
            raise TraceError(f"declared interval_s {declared} disagrees with expected {interval}")
        interval = declared
    else:
        raise ValueError(f"unknown trace format {format!r}")
    for i, (_, ci) in enumerate(rows):
        if not math.isfinite(ci):
            raise TraceError(f"non-finite intensity {ci!r}", i)
        if ci < 0:
            raise TraceError(f"negative intensity {ci!r}", i)
    return _build(rows, interval, fill)


def serialize_trace(trace: CarbonTrace, format: TraceFormat = "csv") -> str:
    if format == "csv":
        lines = [",".join(CSV_HEADER)]
        lines += [f"{t},{v!r}" for t, v in zip(trace.timestamps(), trace.intensities)]
        return "\n".join(lines) + "\n"
    if format == "json":
        doc = {
            "interval_s": trace.interval,
            "points": [{"t": t, "ci": v} for t, v in zip(trace.timestamps(), trace.intensities)],
        }
        return json.dumps(doc) + "\n"
    raise ValueError(f"unknown trace format {format!r}")


def format_for_path(path: str | Path) -> TraceFormat:
    return "json" if str(path).lower().endswith(".json") else "csv"


def load_trace(path: str | Path, fill: str | None = None) -> CarbonTrace:
    path = Path(path)
    return parse_trace(path.read_text(encoding="utf-8"), format_for_path(path), fill=fill)


def save_trace(trace: CarbonTrace, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_trace(trace, format_for_path(path)))


def fetch_trace(source: TraceSource, window: tuple[int, int], timeout: float = 30.0) -> CarbonTrace:
    """Retrieve the trace for ``[start, end)`` from a file or HTTP source."""
    start, end = window
    if end <= start:
        raise ValueError(f"empty window {window}")
    if source.path is not None:
        return load_trace(source.path).slice(start, end)

    endpoint = source.url
    params = {"start": int(start), "end": int(end), "region": source.region}
    try:
        resp = requests.get(endpoint, params=params, timeout=timeout)
    except requests.RequestException as exc:
        raise FetchError(f"network failure: {exc}", endpoint, window) from exc
    if not 200 <= resp.status_code < 300:
        raise FetchError(f"HTTP status {resp.status_code}", endpoint, window, status=resp.status_code)
    try:
        return parse_trace(resp.text, "json").slice(start, end)
    except TraceError as exc:
        raise FetchError(f"schema mismatch: {exc}", endpoint, window, status=resp.status_code) from exc


def intensity_at(trace: CarbonTrace, t: float) -> float:
    """Step-interpolated intensity at absolute time ``t``."""
    return trace.intensities[trace.index_of(t)]


def window_max(trace: CarbonTrace, start: float, end: float) -> float:
    """Largest intensity among steps overlapping ``[start, end)``."""
    if end <= start:
        raise TraceError(f"empty window [{start}, {end})")
    lo = max(0, math.floor((start - trace.start_time) / trace.interval))
    hi = min(len(trace), math.ceil((end - trace.start_time) / trace.interval))
    if lo >= hi:
        raise TraceError(f"window [{start}, {end}) does not overlap the trace")
    return max(trace.intensities[lo:hi])
