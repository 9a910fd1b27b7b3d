"""Priors on the protected events, conditioned on previously released pseudolocations.

For the one-step history case the adversary's prior on
``(r_{t-1}, r_t)`` given ``o_{t-1}`` is obtained from the observation
channel ``Pr(o_{t-1} | r_{t-1})`` (the *emission table*) by Bayes' rule.
The channel at time 1 is the sporadic policy; afterwards it is propagated
through the deployed policies with the time-reversed chain.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, check_row_stochastic
from .metrics import Scenario, present_future as _present_future, sporadic as _sporadic

OBS_THRESHOLD = 1e-12


@dataclass
class PriorTable:
    """``entries[o_pre][a_trg]`` is psi(a_trg | o_pre); ``obs_marginal[o_pre]`` is Pr(o_pre)."""

    scenario: Scenario
    entries: dict
    obs_marginal: dict

    def __post_init__(self):
        for key, dist in self.entries.items():
            total = sum(dist.values())
            if abs(total - 1.0) > 1e-9:
                raise ValidationError(f"prior for o_pre={key} sums to {total!r}")
        if self.entries and abs(sum(self.obs_marginal.values()) - 1.0) > 1e-9:
            raise ValidationError("obs_marginal does not sum to 1")

    def to_dict(self):
        return {
            "scenario": self.scenario.name,
            "entries": [
                {"o_pre": list(o), "prior": [[list(a), p] for a, p in sorted(dist.items())]}
                for o, dist in sorted(self.entries.items())
            ],
            "obs_marginal": [[list(o), p] for o, p in sorted(self.obs_marginal.items())],
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1)

    def marginal(self, times):
        """psi restricted to a subset of the a_trg time offsets."""
        pos = [self.scenario.a_trg_times.index(t) for t in times]
        out = {}
        for o, dist in self.entries.items():
            m = {}
            for a, p in dist.items():
                key = tuple(a[i] for i in pos)
                m[key] = m.get(key, 0.0) + p
            out[o] = m
        return out


@dataclass
class EmissionTable:
    """``probs[r, o]`` = Pr(o_t = o | r_t = r)."""

    t: int
    probs: np.ndarray

    def __post_init__(self):
        self.probs = check_row_stochastic(self.probs, "emission", atol=1e-9)


def window_joint(profile, times):
    """Stationary joint distribution of the locations at the given offsets."""
    times = sorted(times)
    M = profile.M
    out = {}
    steps = [np.linalg.matrix_power(profile.P, b - a) for a, b in zip(times, times[1:])]
    for seq in itertools.product(range(M), repeat=len(times)):
        p = profile.pi[seq[0]]
        for S, a, b in zip(steps, seq, seq[1:]):
            p *= S[a, b]
            if p == 0:
                break
        if p > 0:
            out[seq] = float(p)
    total = sum(out.values())
    return {k: v / total for k, v in out.items()}


def prior_sporadic(profile, scenario=None):
    scenario = scenario or _sporadic()
    return PriorTable(scenario, {(): window_joint(profile, scenario.a_trg_times)}, {(): 1.0})


def prior_present_future(profile, scenario=None):
    """psi(r_t, r_{t+1}) = pi[r_t] P[r_t, r_{t+1}], with no history."""
    scenario = scenario or _present_future()
    return PriorTable(scenario, {(): window_joint(profile, scenario.a_trg_times)}, {(): 1.0})


def emission_from_policy(policy, M, t=1):
    """Channel Pr(o | r) of a single-location, history-free policy."""
    E = np.eye(M)
    block = policy.blocks[()]
    for i, a in enumerate(block.a_domain):
        E[a[0]] = 0.0
        for j, o in enumerate(block.post_domain):
            E[a[0], o[0]] += block.probs[i, j]
    return EmissionTable(t, E)


def emission_t1(profile, scenario, solver=None):
    """Channel at time 1: the optimal sporadic policy for this scenario's metrics."""
    if solver is None:
        from .game import synthesize as solver
    spor = scenario.sporadic()
    sol = solver(profile, spor, prior_sporadic(profile, spor))
    if sol.status != "optimal":
        from ._validation import InfeasibleError
        raise InfeasibleError("sporadic step at t=1 is infeasible", sol.report())
    return emission_from_policy(sol.f, profile.M, t=1)


def reverse_transition(profile):
    """R[r, r'] = Pr(r_{t-1} = r' | r_t = r) under stationarity (zero rows for pi[r] = 0)."""
    pi, P = profile.pi, profile.P
    joint = pi[:, None] * P  # joint[r', r] = Pr(r_{t-1}=r', r_t=r)
    R = np.zeros_like(P)
    ok = pi > 0
    R[ok] = (joint[:, ok] / pi[ok]).T
    return R


def emission_recursive(prev_emission, kernel, profile, t=None):
    """Propagate the observation channel one step.

    ``kernel[r_prev, r, o_prev, o]`` is the policy that emits ``o_t`` given
    ``(r_t, r_{t-1}, o_{t-1})``; an :class:`~trajpriv.game.ObfuscationPolicy`
    for a one-step-history scenario is converted automatically. States with
    zero stationary mass keep a truthful row.
    """
    M = profile.M
    if hasattr(kernel, "kernel"):
        kernel = kernel.kernel(M)
    kernel = np.asarray(kernel, dtype=float)
    if kernel.shape != (M, M, M, M):
        raise ValidationError(f"kernel must have shape {(M,) * 4}, got {kernel.shape}")
    R = reverse_transition(profile)
    E = np.einsum("abcd,ac,ba->bd", kernel, prev_emission.probs, R)
    dead = profile.pi <= 0
    E[dead] = np.eye(M)[dead]
    E /= E.sum(axis=1, keepdims=True)
    return EmissionTable(prev_emission.t + 1 if t is None else t, E)


def prior_past_present(profile, emission, scenario=None, threshold=OBS_THRESHOLD):
    """psi(r_{t-1}, r_t | o_{t-1}) from the channel at t-1.

    Keys of each distribution follow the scenario's a_trg time order; the
    default scenario protects offsets (-1, 0). Scenarios protecting only one
    of the two offsets get the corresponding marginal. Observations with
    marginal probability at or below ``threshold`` are dropped.
    """
    from .metrics import past_present as _past_present

    scenario = scenario or _past_present(1)
    if scenario.o_pre_times != (-1,) or not set(scenario.a_trg_times) <= {-1, 0}:
        raise ValidationError("prior_past_present needs o_pre at offset -1 and a_trg within {-1, 0}")
    pi, P = profile.pi, profile.P
    E = emission.probs if isinstance(emission, EmissionTable) else np.asarray(emission, float)
    M = profile.M
    obs = pi @ E
    keep = [o for o in range(M) if obs[o] > threshold]
    total_obs = sum(obs[o] for o in keep)
    pos = {-1: 0, 0: 1}
    idx = [pos[t] for t in scenario.a_trg_times]
    entries, marg = {}, {}
    for o in keep:
        post = E[:, o] * pi / obs[o]
        dist = {}
        for r_prev in range(M):
            if post[r_prev] == 0:
                continue
            for r in range(M):
                p = post[r_prev] * P[r_prev, r]
                if p > 0:
                    pair = (r_prev, r)
                    key = tuple(pair[i] for i in idx)
                    dist[key] = dist.get(key, 0.0) + p
        s = sum(dist.values())
        entries[(o,)] = {k: v / s for k, v in dist.items()}
        marg[(o,)] = float(obs[o] / total_obs)
    return PriorTable(scenario, entries, marg)


def build_prior(profile, scenario, emission=None, threshold=OBS_THRESHOLD):
    """Prior table for any scenario supported by the built-in mobility model."""
    if not scenario.o_pre_times:
        return PriorTable(scenario, {(): window_joint(profile, scenario.a_trg_times)}, {(): 1.0})
    if emission is None:
        raise ValidationError(f"scenario {scenario.name!r} conditions on history; an emission table is required")
    return prior_past_present(profile, emission, scenario, threshold)
