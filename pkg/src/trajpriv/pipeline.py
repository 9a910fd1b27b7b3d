"""Time-stepped synthesis for scenarios that condition on the previous release."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import InfeasibleError, ValidationError
from .game import synthesize
from .prior import build_prior, emission_from_policy, emission_recursive, prior_sporadic


@dataclass
class Step:
    t: int
    prior: object
    solution: object
    emission: object = None  # channel Pr(o_{t-1} | r_{t-1}) the prior was built from


@dataclass
class TrajectoryResult:
    mode: str
    steps: list
    converged: bool = True
    iterations: int = 0
    residuals: list = field(default_factory=list)

    @property
    def final(self):
        return self.steps[-1]

    @property
    def solution(self):
        return self.steps[-1].solution


def _check(solution, t):
    if solution.status != "optimal":
        raise InfeasibleError(f"synthesis at t={t} is infeasible", solution.report())
    return solution


def synthesize_trajectory(profile, scenario, horizon=2, mode="finite", tol=1e-6, max_iter=50, n_jobs=None):
    """Synthesize the policy in force at time ``horizon``.

    History-free scenarios are solved once against the stationary prior. For
    scenarios conditioning on the previous release, t=1 uses the sporadic
    policy, and each later step builds the conditional prior from the
    channel induced by the policies deployed so far. ``mode="stationary"``
    iterates that map until the channel moves by less than ``tol``
    (sup-norm) or ``max_iter`` rounds have run; non-convergence is recorded,
    not raised.
    """
    if mode not in ("finite", "stationary"):
        raise ValidationError(f"unknown mode {mode!r}")
    if not scenario.o_pre_times:
        prior = build_prior(profile, scenario)
        sol = _check(synthesize(profile, scenario, prior, n_jobs=n_jobs), 1)
        return TrajectoryResult(mode, [Step(1, prior, sol)])

    spor = scenario.sporadic()
    first_prior = prior_sporadic(profile, spor)
    first = _check(synthesize(profile, spor, first_prior, n_jobs=n_jobs), 1)
    steps = [Step(1, first_prior, first)]
    emission = emission_from_policy(first.f, profile.M, t=1)

    if mode == "finite":
        if horizon < 1:
            raise ValidationError("horizon must be at least 1")
        for t in range(2, horizon + 1):
            prior = build_prior(profile, scenario, emission)
            sol = _check(synthesize(profile, scenario, prior, n_jobs=n_jobs), t)
            steps.append(Step(t, prior, sol, emission))
            if t < horizon:
                emission = emission_recursive(emission, sol.f, profile)
        return TrajectoryResult(mode, steps)

    residuals = []
    converged = False
    for it in range(1, max_iter + 1):
        prior = build_prior(profile, scenario, emission)
        sol = _check(synthesize(profile, scenario, prior, n_jobs=n_jobs), it + 1)
        steps = [steps[0], Step(it + 1, prior, sol, emission)]
        nxt = emission_recursive(emission, sol.f, profile)
        delta = float(np.max(np.abs(nxt.probs - emission.probs)))
        residuals.append(delta)
        emission = nxt
        if delta < tol:
            converged = True
            break
    return TrajectoryResult(mode, steps, converged, len(residuals), residuals)
