"""Estimator-style wrapper around policy synthesis and sampling."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError
from .metrics import Scenario, get_scenario
from .mobility import MarkovMobility, MobilityProfile
from .pipeline import synthesize_trajectory
from .rng import XorShift64Star


def sample_release(policy, a_trg, o_pre=(), rng=None, seed=0):
    """Draw o_post from f(. | a_trg, o_pre). Unknown keys raise KeyError."""
    rng = rng or XorShift64Star(seed)
    dist = policy.distribution(tuple(a_trg), tuple(o_pre))
    items = sorted(dist)
    return rng.choice(items, [dist[o] for o in items])


class OptimalLPPM(BaseEstimator):
    """Optimal obfuscation for one user.

    ``fit`` accepts a :class:`MobilityProfile` or re-indexed discrete traces
    (a Markov model is estimated first). ``transform`` maps rows
    ``(a_trg, o_pre)`` to sampled releases.

    Parameters
    ----------
    scenario : str or Scenario
    dq_max : float or None
        Overrides the scenario's quality budget when given.
    horizon : int
    stationary : bool
        Iterate the channel to its fixed point instead of stopping at ``horizon``.
    n_jobs : int or None
    random_state : int
        Seed for the portable sampler used by ``transform``.
    """

    def __init__(self, scenario="past_present", dq_max=None, horizon=2, stationary=False,
                 n_jobs=None, random_state=0):
        self.scenario = scenario
        self.dq_max = dq_max
        self.horizon = horizon
        self.stationary = stationary
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _scenario(self):
        sc = self.scenario if isinstance(self.scenario, Scenario) else get_scenario(self.scenario)
        return sc if self.dq_max is None else sc.with_dq_max(self.dq_max)

    def fit(self, X, y=None):
        if isinstance(X, MobilityProfile):
            profile = X
        else:
            profile = MarkovMobility().fit(X).profile_
        mode = "stationary" if self.stationary else "finite"
        res = synthesize_trajectory(profile, self._scenario(), self.horizon, mode, n_jobs=self.n_jobs)
        self.profile_ = profile
        self.result_ = res
        self.policy_ = res.solution.f
        self.attack_ = res.solution.h
        self.privacy_ = res.solution.privacy
        self.q_loss_ = res.solution.q_loss
        return self

    def transform(self, X):
        check_is_fitted(self, "policy_")
        rng = XorShift64Star(self.random_state)
        out = []
        for row in X:
            if len(row) != 2:
                raise ValidationError("each row must be a pair (a_trg, o_pre)")
            a, o_pre = row
            try:
                out.append(sample_release(self.policy_, a, o_pre, rng))
            except KeyError as exc:
                raise ValidationError(f"policy has no entry for a_trg={tuple(a)}, o_pre={tuple(o_pre)}") from exc
        return out

    def score(self, X=None, y=None):
        """Expected privacy of the fitted policy against its best response."""
        check_is_fitted(self, "policy_")
        return self.privacy_
