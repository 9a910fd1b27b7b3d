"""Privacy-gain and quality-loss functions, and scenario declarations.

Location vectors are plain tuples of location ids ordered by time. A
scenario fixes the relative time offsets of the protected events
(``a_trg_times``), of the pseudolocations already released
(``o_pre_times``), of the ones being chosen now (``o_post_times``) and of
the events that matter for service quality (``q_trg_times``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from ._validation import ValidationError, check_nonnegative, check_times
from .geo import GridSpec

KINDS = ("hamming_vector", "hamming_per_coordinate_sum", "euclidean_sum", "weighted_table")


@dataclass(frozen=True)
class EventVector:
    locs: tuple
    times: tuple

    def __post_init__(self):
        object.__setattr__(self, "locs", tuple(int(v) for v in self.locs))
        object.__setattr__(self, "times", check_times(self.times, "times"))
        if len(self.locs) != len(self.times):
            raise ValidationError("locs and times must have the same length")


@dataclass(frozen=True, eq=False)
class DistanceFn:
    """A distance between two equal-length location vectors.

    ``weighted_table`` takes either ``table`` (a mapping from
    ``(estimate, truth)`` tuple pairs to values, with ``default`` for missing
    pairs) or ``matrix`` (per-location weights ``matrix[est][true]`` summed
    over coordinates). Euclidean kinds measure cell-centre distances in the
    grid's coordinate units; ``cells`` maps location ids to grid cells when
    the ids were re-indexed to a support.
    """

    kind: str = "hamming_vector"
    table: dict = None
    matrix: tuple = None
    default: float = None
    grid: GridSpec = None
    cells: tuple = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown distance kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "weighted_table":
            if self.table is None and self.matrix is None:
                raise ValidationError("weighted_table needs a table or a matrix")
            if self.matrix is not None:
                m = tuple(tuple(float(v) for v in row) for row in self.matrix)
                if any(v < 0 for row in m for v in row):
                    raise ValidationError("weights must be non-negative")
                object.__setattr__(self, "matrix", m)
            if self.table is not None:
                t = {(tuple(k[0]), tuple(k[1])): float(v) for k, v in self.table.items()}
                if any(v < 0 for v in t.values()):
                    raise ValidationError("weights must be non-negative")
                object.__setattr__(self, "table", t)
        if self.kind == "euclidean_sum" and self.grid is None:
            raise ValidationError("euclidean_sum needs a grid")

    def __call__(self, est, truth):
        est, truth = tuple(est), tuple(truth)
        if len(est) != len(truth):
            raise ValidationError(f"vectors differ in length: {len(est)} vs {len(truth)}")
        kind = self.kind
        if kind == "hamming_vector":
            return 0.0 if est == truth else 1.0
        if kind == "hamming_per_coordinate_sum":
            return float(sum(a != b for a, b in zip(est, truth)))
        if kind == "euclidean_sum":
            return sum(self._euclid(a, b) for a, b in zip(est, truth))
        if self.table is not None:
            key = (est, truth)
            if key in self.table:
                return self.table[key]
            if est == truth:
                return 0.0
            if self.default is None:
                raise ValidationError(f"no weight for estimate {est} and truth {truth}")
            return float(self.default)
        return sum(self.matrix[a][b] for a, b in zip(est, truth))

    def _euclid(self, a, b):
        if self.cells is not None:
            a, b = self.cells[a], self.cells[b]
        (ya, xa), (yb, xb) = self.grid.center(a), self.grid.center(b)
        return math.hypot(ya - yb, xa - xb)

    def restrict(self, keep):
        """The same distance applied to a sub-vector (coordinates ``keep``)."""
        if self.kind != "weighted_table" or self.table is None:
            return self
        raise ValidationError("a vector-keyed weighted_table cannot be restricted to fewer coordinates")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.table is not None:
            d["table"] = [[list(k[0]), list(k[1]), v] for k, v in self.table.items()]
        if self.matrix is not None:
            d["matrix"] = [list(r) for r in self.matrix]
        if self.default is not None:
            d["default"] = self.default
        if self.grid is not None:
            d["grid"] = self.grid.to_dict()
        if self.cells is not None:
            d["cells"] = list(self.cells)
        return d

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, str):
            d = {"kind": d}
        d = dict(d)
        kind = d.pop("kind", "hamming_vector")
        table = d.pop("table", None)
        if isinstance(table, list):
            table = {(tuple(e), tuple(t)): v for e, t, v in table}
        grid = d.pop("grid", None)
        if isinstance(grid, dict):
            grid = GridSpec.from_dict(grid)
        cells = d.pop("cells", None)
        obj = cls(kind, table, d.pop("matrix", None), d.pop("default", None), grid,
                  tuple(cells) if cells is not None else None)
        if d:
            raise ValidationError(f"unknown distance keys: {sorted(d)}")
        return obj


def dp_eval(dp: DistanceFn, estimate, truth) -> float:
    if isinstance(estimate, EventVector) and isinstance(truth, EventVector):
        if estimate.times != truth.times:
            raise ValidationError("estimate and truth must share time offsets")
        estimate, truth = estimate.locs, truth.locs
    return dp(estimate, truth)


def dq_eval(dq: DistanceFn, q_trg: EventVector, o_post: EventVector, o_pre: EventVector) -> float:
    """Quality loss of reporting ``o_pre`` + ``o_post`` when ``q_trg`` is true."""
    reported = dict(zip(o_pre.times, o_pre.locs))
    reported.update(zip(o_post.times, o_post.locs))
    try:
        rep = tuple(reported[t] for t in q_trg.times)
    except KeyError as exc:
        raise ValidationError(f"no reported pseudolocation at time offset {exc.args[0]}") from exc
    return dq(q_trg.locs, rep)


@dataclass(frozen=True)
class Scenario:
    name: str
    a_trg_times: tuple
    o_pre_times: tuple
    o_post_times: tuple
    q_trg_times: tuple = None
    dp: DistanceFn = field(default_factory=DistanceFn)
    dq: DistanceFn = field(default_factory=DistanceFn)
    dq_max: float = 1.0

    def __post_init__(self):
        a = check_times(self.a_trg_times, "a_trg_times")
        pre = check_times(self.o_pre_times, "o_pre_times")
        post = check_times(self.o_post_times, "o_post_times")
        if not a:
            raise ValidationError("a_trg_times must not be empty")
        if not post:
            raise ValidationError("o_post_times must not be empty")
        if pre and max(pre) >= min(post):
            raise ValidationError("o_pre_times must all precede o_post_times")
        reported = set(pre) | set(post)
        q = self.q_trg_times
        if q is None:
            q = tuple(t for t in a if t in reported)
        q = check_times(q, "q_trg_times")
        if not set(q) <= reported:
            raise ValidationError("every q_trg time needs a reported pseudolocation")
        if not set(q) <= set(a):
            raise ValidationError("q_trg_times must be a subset of a_trg_times "
                                  "(quality targets are derived from the protected events)")
        object.__setattr__(self, "a_trg_times", a)
        object.__setattr__(self, "o_pre_times", pre)
        object.__setattr__(self, "o_post_times", post)
        object.__setattr__(self, "q_trg_times", q)
        object.__setattr__(self, "dq_max", check_nonnegative(self.dq_max, "dq_max"))
        if not isinstance(self.dp, DistanceFn) or not isinstance(self.dq, DistanceFn):
            raise ValidationError("dp and dq must be DistanceFn instances")

    def q_trg(self, a_trg):
        pos = {t: i for i, t in enumerate(self.a_trg_times)}
        return tuple(a_trg[pos[t]] for t in self.q_trg_times)

    def quality_loss(self, a_trg, o_post, o_pre=()):
        return dq_eval(self.dq, EventVector(self.q_trg(a_trg), self.q_trg_times),
                       EventVector(o_post, self.o_post_times), EventVector(o_pre, self.o_pre_times))

    def privacy_gain(self, estimate, a_trg):
        return self.dp(estimate, a_trg)

    def with_dq_max(self, dq_max):
        return replace(self, dq_max=dq_max)

    def sporadic(self):
        """The single-location, no-history version used at the first time step."""
        return Scenario(f"{self.name}:sporadic", (0,), (), (0,), (0,),
                        self.dp.restrict([0]), self.dq.restrict([0]), self.dq_max)

    def to_dict(self):
        return {
            "name": self.name,
            "a_trg_times": list(self.a_trg_times),
            "o_pre_times": list(self.o_pre_times),
            "o_post_times": list(self.o_post_times),
            "q_trg_times": list(self.q_trg_times),
            "dp": self.dp.to_dict(),
            "dq": self.dq.to_dict(),
            "dq_max": self.dq_max,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        name = d.get("name", "custom")
        base = BUILTIN.get(name)
        if base is not None and "a_trg_times" not in d:
            d = {**base.to_dict(), **d}
        try:
            return cls(
                name,
                tuple(d["a_trg_times"]),
                tuple(d.get("o_pre_times", ())),
                tuple(d["o_post_times"]),
                tuple(d["q_trg_times"]) if d.get("q_trg_times") is not None else None,
                DistanceFn.from_dict(d.get("dp", "hamming_vector")),
                DistanceFn.from_dict(d.get("dq", "hamming_vector")),
                d.get("dq_max", 1.0),
            )
        except KeyError as exc:
            raise ValidationError(f"scenario is missing {exc.args[0]!r}") from exc

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def past_present(k=1, dp=None, dq=None, dq_max=1.0):
    """Protect the current and the k previous locations given the k previous releases.

    Only k in {0, 1} is supported; k=0 is the sporadic case. Quality is
    measured on the newly released pseudolocation.
    """
    dp = dp or DistanceFn()
    dq = dq or DistanceFn()
    if k == 0:
        return Scenario("past_present_k0", (0,), (), (0,), (0,), dp, dq, dq_max)
    if k == 1:
        return Scenario("past_present", (-1, 0), (-1,), (0,), (0,), dp, dq, dq_max)
    raise ValidationError("past_present supports k in {0, 1}")


def present_future(dp=None, dq=None, dq_max=1.0):
    return Scenario("present_future", (0, 1), (), (0, 1), (0, 1), dp or DistanceFn(), dq or DistanceFn(), dq_max)


def sporadic(dp=None, dq=None, dq_max=1.0):
    return Scenario("sporadic", (0,), (), (0,), (0,), dp or DistanceFn(), dq or DistanceFn(), dq_max)


def single_location(dp=None, dq=None, dq_max=1.0):
    """Protect the current location given the previous release."""
    return Scenario("single_location", (0,), (-1,), (0,), (0,), dp or DistanceFn(), dq or DistanceFn(), dq_max)


BUILTIN = {
    "past_present": past_present(1),
    "past_present_k0": past_present(0),
    "present_future": present_future(),
    "sporadic": sporadic(),
    "single_location": single_location(),
}


def get_scenario(name_or_scenario, **overrides):
    if isinstance(name_or_scenario, Scenario):
        sc = name_or_scenario
    else:
        try:
            sc = BUILTIN[name_or_scenario]
        except KeyError as exc:
            raise ValidationError(f"unknown scenario {name_or_scenario!r}; built-ins: {sorted(BUILTIN)}") from exc
    return replace(sc, **overrides) if overrides else sc
