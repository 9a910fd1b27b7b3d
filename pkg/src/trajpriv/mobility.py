"""First-order Markov mobility profiles."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, check_distribution, check_row_stochastic


@dataclass(frozen=True)
class MobilityProfile:
    """Transition matrix ``P`` and stationary distribution ``pi`` over M locations."""

    P: np.ndarray
    pi: np.ndarray
    visit_counts: np.ndarray = None
    locations: tuple = None  # optional original cell ids, for audit

    def __post_init__(self):
        P = check_row_stochastic(self.P).copy()
        pi = check_distribution(self.pi, "pi").copy()
        if pi.size != P.shape[0]:
            raise ValidationError("pi and P disagree on the number of locations")
        P.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "pi", pi)
        if self.visit_counts is not None:
            counts = np.array(self.visit_counts, dtype=np.int64)
            counts.setflags(write=False)
            object.__setattr__(self, "visit_counts", counts)

    @property
    def M(self):
        return self.P.shape[0]

    @classmethod
    def from_matrix(cls, P, visit_counts=None):
        P = check_row_stochastic(P)
        return cls(P, stationary(P, visit_counts), visit_counts)

    def to_dict(self):
        d = {
            "M": int(self.M),
            "P": [[float(v) for v in row] for row in self.P],
            "pi": [float(v) for v in self.pi],
            "visit_counts": None if self.visit_counts is None else [int(v) for v in self.visit_counts],
        }
        if self.locations is not None:
            d["locations"] = [int(v) for v in self.locations]
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            P = np.asarray(d["P"], dtype=float)
            if P.ndim != 2:
                P = P.reshape(int(d["M"]), int(d["M"]))
            pi = np.asarray(d["pi"], dtype=float)
        except (KeyError, ValueError, TypeError) as exc:
            raise ValidationError(f"bad profile: {exc}") from exc
        if "M" in d and int(d["M"]) != P.shape[0]:
            raise ValidationError("profile M does not match P")
        locs = d.get("locations")
        return cls(P, pi, d.get("visit_counts"), tuple(locs) if locs is not None else None)

    def dumps(self):
        # repr of a float round-trips, i.e. 17 significant digits when needed
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def transition_counts(traces, M):
    counts = np.zeros((M, M), dtype=np.int64)
    visits = np.zeros(M, dtype=np.int64)
    for trace in traces:
        cells = list(trace.cells)
        for _, loc in cells:
            if not 0 <= loc < M:
                raise ValidationError(f"location {loc} outside [0, {M})")
            visits[loc] += 1
        for (t0, a), (t1, b) in zip(cells, cells[1:]):
            if t1 == t0 + 1:
                counts[a, b] += 1
    return counts, visits


def estimate_markov(traces, M, smoothing=0.0, smoothing_mode="full") -> MobilityProfile:
    """Maximum-likelihood transition matrix from consecutive time indices.

    ``smoothing_mode="full"`` adds ``smoothing`` to every cell of a row;
    ``"support"`` adds it only to transitions that were observed. Rows with
    no outgoing transitions become uniform.
    """
    M = int(M)
    if M <= 0:
        raise ValidationError("M must be positive")
    if smoothing < 0:
        raise ValidationError("smoothing must be non-negative")
    if smoothing_mode not in ("full", "support"):
        raise ValidationError(f"unknown smoothing_mode {smoothing_mode!r}")
    counts, visits = transition_counts(traces, M)
    if counts.sum() == 0 and smoothing == 0:
        raise ValidationError("no consecutive transitions observed; the chain is undefined")
    weights = counts.astype(float)
    if smoothing:
        weights += smoothing * (np.ones_like(weights) if smoothing_mode == "full" else counts > 0)
    totals = weights.sum(axis=1, keepdims=True)
    P = np.where(totals > 0, weights / np.where(totals > 0, totals, 1.0), 1.0 / M)
    return MobilityProfile(P, stationary(P, visits), visits)


def stationary(P, visit_counts=None):
    """Solve ``pi P = pi, sum(pi) = 1`` directly.

    When the solution is not unique (several closed classes) the empirical
    visit frequencies are returned instead, with a warning.
    """
    P = check_row_stochastic(P)
    M = P.shape[0]
    A = np.vstack([P.T - np.eye(M), np.ones((1, M))])
    b = np.zeros(M + 1)
    b[-1] = 1.0
    if np.linalg.matrix_rank(A, tol=1e-10) == M:
        pi, *_ = np.linalg.lstsq(A, b, rcond=None)
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()
    if visit_counts is None or np.sum(visit_counts) == 0:
        raise ValidationError("stationary distribution is not unique and no visit counts are available")
    warnings.warn("reducible chain: falling back to empirical visit frequencies", stacklevel=2)
    counts = np.asarray(visit_counts, dtype=float)
    return counts / counts.sum()


class MarkovMobility(BaseEstimator):
    """Estimator wrapper around :func:`estimate_markov`.

    ``fit`` takes re-indexed discrete traces; the fitted profile is exposed as
    ``profile_`` with ``transition_matrix_`` and ``stationary_`` shortcuts.
    """

    def __init__(self, n_locations=None, smoothing=0.0, smoothing_mode="full"):
        self.n_locations = n_locations
        self.smoothing = smoothing
        self.smoothing_mode = smoothing_mode

    def fit(self, X, y=None):
        X = list(X)
        M = self.n_locations
        if M is None:
            M = 1 + max((loc for t in X for _, loc in t.cells), default=-1)
        self.profile_ = estimate_markov(X, M, self.smoothing, self.smoothing_mode)
        self.transition_matrix_ = self.profile_.P
        self.stationary_ = self.profile_.pi
        return self

    def score(self, X, y=None):
        """Mean log-likelihood per observed transition."""
        check_is_fitted(self, "profile_")
        counts, _ = transition_counts(X, self.profile_.M)
        total = counts.sum()
        if total == 0:
            return 0.0
        seen = counts > 0
        if np.any(self.profile_.P[seen] == 0):
            return float("-inf")
        return float(np.sum(counts[seen] * np.log(self.profile_.P[seen])) / total)
