"""Trace ingestion and grid discretization."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from itertools import groupby

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import TraceParseError, ValidationError


@dataclass(frozen=True)
class RawTrace:
    user_id: str
    points: tuple  # ((timestamp, lat, lon), ...), timestamps strictly increasing


@dataclass(frozen=True)
class DiscreteTrace:
    user_id: str
    cells: tuple  # ((time_index, location_id), ...)

    @property
    def locations(self):
        return [loc for _, loc in self.cells]


@dataclass(frozen=True)
class GridSpec:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    rows: int
    cols: int
    time_bin: float

    def __post_init__(self):
        if not self.lat_min < self.lat_max:
            raise ValidationError("lat_min must be below lat_max")
        if not self.lon_min < self.lon_max:
            raise ValidationError("lon_min must be below lon_max")
        if int(self.rows) != self.rows or int(self.cols) != self.cols or self.rows < 1 or self.cols < 1:
            raise ValidationError("rows and cols must be positive integers")
        if not self.time_bin > 0:
            raise ValidationError("time_bin must be positive")

    @property
    def n_cells(self):
        return self.rows * self.cols

    @property
    def cell_height(self):
        return (self.lat_max - self.lat_min) / self.rows

    @property
    def cell_width(self):
        return (self.lon_max - self.lon_min) / self.cols

    def contains(self, lat, lon):
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max

    def cell_of(self, lat, lon):
        """Row-major cell index; bins are half-open except the last one."""
        row = min(int((lat - self.lat_min) / self.cell_height), self.rows - 1)
        col = min(int((lon - self.lon_min) / self.cell_width), self.cols - 1)
        return row * self.cols + col

    def center(self, cell):
        row, col = divmod(int(cell), self.cols)
        return (self.lat_min + (row + 0.5) * self.cell_height,
                self.lon_min + (col + 0.5) * self.cell_width)

    @classmethod
    def from_dict(cls, cfg):
        try:
            return cls(float(cfg["lat_min"]), float(cfg["lat_max"]), float(cfg["lon_min"]),
                       float(cfg["lon_max"]), int(cfg["rows"]), int(cfg["cols"]),
                       float(cfg.get("time_bin_seconds", cfg.get("time_bin"))))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad grid configuration: {exc}") from exc

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return {"lat_min": self.lat_min, "lat_max": self.lat_max, "lon_min": self.lon_min,
                "lon_max": self.lon_max, "rows": self.rows, "cols": self.cols,
                "time_bin_seconds": self.time_bin}


def parse_traces(data) -> list:
    """Parse ``user_id,timestamp,lat,lon`` records into per-user traces.

    ``data`` may be bytes, str, or a text/binary file object. A header row is
    optional. Traces are returned sorted by user id.
    """
    if hasattr(data, "read"):
        data = data.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TraceParseError(f"input is not UTF-8: {exc}") from exc
    records = []
    for lineno, row in enumerate(csv.reader(io.StringIO(data)), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if lineno == 1 and row[0].strip().lower() == "user_id":
            continue
        if len(row) != 4:
            raise TraceParseError(f"expected 4 fields, got {len(row)}", lineno)
        user = row[0].strip()
        try:
            ts, lat, lon = float(row[1]), float(row[2]), float(row[3])
        except ValueError as exc:
            raise TraceParseError(str(exc), lineno) from exc
        if not all(math.isfinite(v) for v in (ts, lat, lon)):
            raise TraceParseError("non-finite value", lineno)
        if not -90.0 <= lat <= 90.0:
            raise TraceParseError(f"latitude {lat} out of range", lineno)
        if not -180.0 <= lon <= 180.0:
            raise TraceParseError(f"longitude {lon} out of range", lineno)
        if not user:
            raise TraceParseError("empty user_id", lineno)
        records.append((user, ts, lat, lon))

    traces = []
    records.sort(key=lambda r: (r[0], r[1]))
    for user, group in groupby(records, key=lambda r: r[0]):
        points = tuple((ts, lat, lon) for _, ts, lat, lon in group)
        for prev, cur in zip(points, points[1:]):
            if cur[0] <= prev[0]:
                raise ValidationError(f"duplicate timestamp {cur[0]} for user {user!r}")
        traces.append(RawTrace(user, points))
    return traces


def discretize(trace: RawTrace, grid: GridSpec) -> DiscreteTrace:
    inside = [p for p in trace.points if grid.contains(p[1], p[2])]
    dropped = len(trace.points) - len(inside)
    if dropped:
        warnings.warn(f"user {trace.user_id!r}: dropped {dropped} point(s) outside the grid",
                      stacklevel=2)
    if not inside:
        raise ValidationError(f"user {trace.user_id!r} has no points inside the grid")
    t0 = min(p[0] for p in trace.points)
    bins = {}
    for ts, lat, lon in inside:  # sorted by time, so the last fix in a bin wins
        bins[int(math.floor((ts - t0) / grid.time_bin))] = grid.cell_of(lat, lon)
    return DiscreteTrace(trace.user_id, tuple(sorted(bins.items())))


def support_set(traces) -> list:
    traces = list(traces)
    if not traces or all(not t.cells for t in traces):
        raise ValidationError("support_set needs at least one non-empty trace")
    return sorted({loc for t in traces for _, loc in t.cells})


def reindex(trace: DiscreteTrace, support) -> DiscreteTrace:
    index = {loc: i for i, loc in enumerate(support)}
    try:
        return DiscreteTrace(trace.user_id, tuple((t, index[loc]) for t, loc in trace.cells))
    except KeyError as exc:
        raise ValidationError(f"location {exc.args[0]} is outside the fitted support") from exc


class GridDiscretizer(TransformerMixin, BaseEstimator):
    """Map raw traces onto grid cells re-indexed to the visited support.

    After ``fit``, ``support_`` holds the sorted grid cells that were visited
    and ``n_locations_`` their count.
    """

    def __init__(self, grid=None):
        self.grid = grid

    def _grid(self):
        if self.grid is None:
            raise ValidationError("GridDiscretizer needs a GridSpec")
        return self.grid if isinstance(self.grid, GridSpec) else GridSpec.from_dict(self.grid)

    def fit(self, X, y=None):
        grid = self._grid()
        self.support_ = support_set([discretize(t, grid) for t in X])
        self.n_locations_ = len(self.support_)
        return self

    def transform(self, X):
        check_is_fitted(self, "support_")
        grid = self._grid()
        return [reindex(discretize(t, grid), self.support_) for t in X]
