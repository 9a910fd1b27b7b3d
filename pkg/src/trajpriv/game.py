"""Defender/adversary Stackelberg game solved as one linear program per history.

For a fixed history ``o_pre`` the defender picks ``f(o_post | a_trg)`` to
maximize the adversary's expected error, knowing the adversary will answer
with the Bayes-optimal estimator. Introducing one auxiliary variable per
released value ``o_post`` (the smallest expected error the adversary can
achieve after seeing it) turns the max-min into an LP.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import lp as lpmod
from ._validation import ValidationError

CLAMP = 1e-10
TIE_TOL = 1e-12


def _key(seq):
    return "-".join(str(v) for v in seq)


def _unkey(text):
    text = text.strip()
    return tuple(int(v) for v in text.split("-")) if text else ()


@dataclass
class PolicyBlock:
    """Dense conditional table for one history: ``probs[i, j] = f(post_domain[j] | a_domain[i])``."""

    a_domain: list
    post_domain: list
    probs: np.ndarray

    def __post_init__(self):
        self.a_index = {a: i for i, a in enumerate(self.a_domain)}
        self.post_index = {o: j for j, o in enumerate(self.post_domain)}


class ObfuscationPolicy:
    """The defender's codebook f(o_post | a_trg, o_pre)."""

    def __init__(self, scenario, blocks):
        self.scenario = scenario
        self.blocks = dict(blocks)

    def distribution(self, a_trg, o_pre=()):
        block = self.blocks.get(tuple(o_pre))
        if block is None or tuple(a_trg) not in block.a_index:
            raise KeyError((tuple(a_trg), tuple(o_pre)))
        row = block.probs[block.a_index[tuple(a_trg)]]
        return {o: float(p) for o, p in zip(block.post_domain, row) if p > 0}

    def rows(self):
        for o_pre in sorted(self.blocks):
            block = self.blocks[o_pre]
            order = sorted(range(len(block.a_domain)), key=lambda i: block.a_domain[i])
            for i in order:
                for j in sorted(range(len(block.post_domain)), key=lambda j: block.post_domain[j]):
                    p = block.probs[i, j]
                    if p > 0:
                        yield block.a_domain[i], o_pre, block.post_domain[j], float(p)

    def broadcast(self, scenario, o_pre_keys):
        """Reuse a history-free policy under a scenario that conditions on history."""
        base = self.blocks[()]
        return ObfuscationPolicy(scenario, {tuple(k): base for k in o_pre_keys})

    def kernel(self, M):
        """Array K[r_prev, r, o_prev, o] for one-step-history scenarios.

        Combinations the policy never conditions on (zero prior mass) are
        filled with truthful reporting; they carry no probability weight.
        """
        sc = self.scenario
        if sc.o_pre_times != (-1,) or sc.o_post_times != (0,) or not set(sc.a_trg_times) <= {-1, 0}:
            raise ValidationError("kernel() needs a scenario with o_pre=(-1,), o_post=(0,), a_trg within {-1, 0}")
        pos = {-1: 0, 0: 1}
        idx = [pos[t] for t in sc.a_trg_times]
        K = np.zeros((M, M, M, M))
        for r_prev, r, o_prev in itertools.product(range(M), repeat=3):
            block = self.blocks.get((o_prev,))
            a = tuple((r_prev, r)[i] for i in idx)
            if block is not None and a in block.a_index:
                row = block.probs[block.a_index[a]]
                for o, p in zip(block.post_domain, row):
                    K[r_prev, r, o_prev, o[0]] += p
            else:
                K[r_prev, r, o_prev, r] = 1.0
        return K

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["a_trg", "o_pre", "o_post", "probability"])
        for a, o_pre, o_post, p in self.rows():
            w.writerow([_key(a), _key(o_pre), _key(o_post), repr(p)])
        return buf.getvalue()

    def save_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text, scenario=None):
        rows = {}
        reader = csv.DictReader(io.StringIO(text))
        missing = {"a_trg", "o_pre", "o_post", "probability"} - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"policy CSV is missing columns {sorted(missing)}")
        for line in reader:
            try:
                p = float(line["probability"])
                a, o_pre, o_post = _unkey(line["a_trg"]), _unkey(line["o_pre"]), _unkey(line["o_post"])
            except ValueError as exc:
                raise ValidationError(f"bad policy row {line}: {exc}") from exc
            rows.setdefault(o_pre, {}).setdefault(a, {})[o_post] = p
        blocks = {}
        for o_pre, table in rows.items():
            a_dom = sorted(table)
            post_dom = sorted({o for d in table.values() for o in d})
            probs = np.array([[table[a].get(o, 0.0) for o in post_dom] for a in a_dom])
            blocks[o_pre] = PolicyBlock(a_dom, post_dom, probs)
        return cls(scenario, blocks)


@dataclass
class AttackPolicy:
    """h(a_hat | o_pre, o_post) as a mapping to distributions over estimates."""

    scenario: object
    h: dict

    def distribution(self, o_pre, o_post):
        return self.h[(tuple(o_pre), tuple(o_post))]

    def estimate(self, o_pre, o_post):
        dist = self.distribution(o_pre, o_post)
        return max(sorted(dist), key=lambda k: dist[k])


@dataclass
class OpreResult:
    weight: float
    status: str
    privacy: float = float("nan")
    q_loss: float = float("nan")
    objective: float = float("nan")
    lp_size: tuple = (0, 0)


@dataclass
class GameSolution:
    scenario: object
    f: ObfuscationPolicy
    h: AttackPolicy
    privacy: float
    q_loss: float
    per_opre: dict
    status: str
    lps: dict = field(default_factory=dict, repr=False)

    def report(self):
        return {
            "scenario": self.scenario.to_dict(),
            "status": self.status,
            "privacy": self.privacy,
            "q_loss": self.q_loss,
            "per_opre": [
                {"o_pre": list(o), "weight": r.weight, "status": r.status, "privacy": r.privacy,
                 "q_loss": r.q_loss, "lp_objective": r.objective,
                 "lp_rows": r.lp_size[0], "lp_vars": r.lp_size[1]}
                for o, r in sorted(self.per_opre.items())
            ],
        }

    def to_dict(self):
        d = self.report()
        if self.h is not None:
            d["attack"] = [
                {"o_pre": list(o_pre), "o_post": list(o_post),
                 "estimate": [[list(a), p] for a, p in sorted(dist.items())]}
                for (o_pre, o_post), dist in sorted(self.h.h.items())
            ]
        return d

    def dumps(self):
        return json.dumps(_jsonable(self.to_dict()), indent=1, allow_nan=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# -- domains -----------------------------------------------------------------

def post_domain(scenario, profile):
    """Candidate released vectors: any location for a single release, otherwise
    sequences that the chain can actually produce between the release times."""
    M = profile.M
    times = scenario.o_post_times
    if len(times) == 1:
        return [(o,) for o in range(M)]
    steps = [np.linalg.matrix_power(profile.P, b - a) > 0 for a, b in zip(times, times[1:])]
    out = []
    for seq in itertools.product(range(M), repeat=len(times)):
        if all(S[a, b] for S, a, b in zip(steps, seq, seq[1:])):
            out.append(seq)
    return out


def estimate_domain(scenario, a_domain, M):
    """Estimates the adversary may output.

    For the vector Hamming gain the Bayes estimate is always a posterior
    mode, hence inside the prior support; other gains need every vector.
    """
    if scenario.dp.kind == "hamming_vector":
        return sorted(a_domain)
    return list(itertools.product(range(M), repeat=len(scenario.a_trg_times)))


def _gain_matrix(scenario, est_domain, a_domain):
    dp = scenario.dp
    return np.array([[dp(e, a) for a in a_domain] for e in est_domain], dtype=float)


# -- LP construction ------------------------------------------------------------

@dataclass
class GameLP:
    lp: lpmod.LinearProgram
    a_domain: list
    post_domain: list
    est_domain: list
    psi: np.ndarray
    gain: np.ndarray  # gain[k, i] = dp(est_domain[k], a_domain[i])

    def f_index(self, i, j):
        J = len(self.post_domain)
        return J + i * J + j

    def policy_matrix(self, x):
        I, J = len(self.a_domain), len(self.post_domain)
        F = np.asarray(x[J:], dtype=float).reshape(I, J).copy()
        F[F < CLAMP] = 0.0
        F /= F.sum(axis=1, keepdims=True)
        return F


def build_lp(prior_entry, scenario, post_dom, o_pre=(), est_dom=None, include_quality=True, M=None):
    """LP for one history. Variables: x_j per released value, then f[i, j] row-major."""
    a_domain = sorted(a for a, p in prior_entry.items() if p > 0)
    if not a_domain:
        raise ValidationError(f"empty a_trg domain for o_pre={o_pre}")
    if M is None:
        M = 1 + max(max(v for a in a_domain for v in a), max(v for o in post_dom for v in o))
    est_dom = est_dom if est_dom is not None else estimate_domain(scenario, a_domain, M)
    psi = np.array([prior_entry[a] for a in a_domain])
    gain = _gain_matrix(scenario, est_dom, a_domain)
    I, J, K = len(a_domain), len(post_dom), len(est_dom)
    n = J + I * J

    W = gain * psi[None, :]  # W[k, i]
    Af = np.zeros((K, J, I, J))
    for j in range(J):
        Af[:, j, :, j] = -W
    A_priv = np.hstack([np.tile(np.eye(J), (K, 1)), Af.reshape(K * J, I * J)])
    b_priv = np.zeros(K * J)

    A_ub, b_ub = A_priv, b_priv
    if include_quality:
        q = np.zeros(n)
        for i, a in enumerate(a_domain):
            for j, o in enumerate(post_dom):
                q[J + i * J + j] = psi[i] * scenario.quality_loss(a, o, o_pre)
        A_ub = np.vstack([A_priv, q])
        b_ub = np.append(b_priv, scenario.dq_max)

    A_eq = np.zeros((I, n))
    for i in range(I):
        A_eq[i, J + i * J: J + (i + 1) * J] = 1.0
    c = np.zeros(n)
    c[:J] = 1.0
    names = [f"x[{_key(o)}]" for o in post_dom] + [
        f"f[{_key(o)}|{_key(a)}]" for a in a_domain for o in post_dom]
    lp = lpmod.LinearProgram(n, c, A_ub, b_ub, A_eq, np.ones(I), names)
    return GameLP(lp, a_domain, list(post_dom), list(est_dom), psi, gain)


# -- attack and evaluation ---------------------------------------------------

def _bayes_estimate(weights, gain, est_domain):
    losses = gain @ weights
    best = losses.min()
    k = int(np.flatnonzero(losses <= best + TIE_TOL * max(1.0, abs(best)))[0])
    return est_domain[k]


def best_response(f, prior, dp=None, M=None):
    """Deterministic Bayes-optimal attack against policy ``f``.

    Ties go to the lexicographically smallest estimate. Releases the policy
    never produces map to the best estimate under the prior alone.
    """
    scenario = f.scenario
    if dp is not None and dp is not scenario.dp:
        from dataclasses import replace
        scenario = replace(scenario, dp=dp)
    h = {}
    for o_pre, dist in prior.entries.items():
        a_domain = sorted(a for a, p in dist.items() if p > 0)
        psi = np.array([dist[a] for a in a_domain])
        block = f.blocks[o_pre]
        m = M or 1 + max(max(v for a in a_domain for v in a),
                         max(v for o in block.post_domain for v in o),
                         max((v for a in block.a_domain for v in a), default=0))
        est_dom = estimate_domain(scenario, a_domain, m)
        gain = _gain_matrix(scenario, est_dom, a_domain)
        rows = np.array([block.a_index[a] for a in a_domain])
        joint = psi[:, None] * block.probs[rows]  # joint[i, j]
        prior_guess = _bayes_estimate(psi, gain, est_dom)
        for j, o in enumerate(block.post_domain):
            w = joint[:, j]
            est = _bayes_estimate(w, gain, est_dom) if w.sum() > 0 else prior_guess
            h[(o_pre, o)] = {est: 1.0}
    return AttackPolicy(f.scenario, h)


def evaluate(f, h, prior, o_pre=(), dp=None, dq=None):
    """Expected privacy gain and expected quality loss for one history."""
    scenario = f.scenario
    dp = dp or scenario.dp
    o_pre = tuple(o_pre)
    privacy = q_loss = 0.0
    for a, pa in prior.entries[o_pre].items():
        if pa <= 0:
            continue
        for o_post, pf in f.distribution(a, o_pre).items():
            w = pa * pf
            q = scenario.quality_loss(a, o_post, o_pre) if dq is None else _dq(dq, scenario, a, o_post, o_pre)
            q_loss += w * q
            for est, ph in h.distribution(o_pre, o_post).items():
                privacy += w * ph * dp(est, a)
    return privacy, q_loss


def _dq(dq, scenario, a, o_post, o_pre):
    from dataclasses import replace
    return replace(scenario, dq=dq).quality_loss(a, o_post, o_pre)


# -- synthesis -------------------------------------------------------------------

def _solve_one(prior_entry, scenario, post_dom, o_pre, include_quality, M):
    game = build_lp(prior_entry, scenario, post_dom, o_pre, include_quality=include_quality, M=M)
    sol = lpmod.solve(game.lp)
    if sol.status == lpmod.UNBOUNDED:
        raise RuntimeError(f"game LP for o_pre={o_pre} reported unbounded; the gains must be finite")
    return game, sol


def synthesize(profile, scenario, prior, n_jobs=None, include_quality=True):
    """Optimal policy, best-response attack and achieved privacy/quality loss.

    One LP is solved per history in ``prior``; with ``n_jobs > 1`` they are
    solved on a thread pool. ``include_quality=False`` drops the quality
    budget and exists for diagnostics only.
    """
    if set(prior.entries) != set(prior.obs_marginal):
        raise ValidationError("prior entries and obs_marginal cover different histories")
    post_dom = post_domain(scenario, profile)
    keys = sorted(prior.entries)

    def work(o_pre):
        return _solve_one(prior.entries[o_pre], scenario, post_dom, o_pre, include_quality, profile.M)

    if n_jobs and n_jobs > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(work, keys))
    else:
        results = [work(k) for k in keys]

    blocks, per_opre, lps = {}, {}, {}
    for o_pre, (game, sol) in zip(keys, results):
        lps[o_pre] = (game, sol)
        res = OpreResult(prior.obs_marginal[o_pre], sol.status, lp_size=(game.lp.n_ineq + game.lp.n_eq, game.lp.n_vars))
        if sol.status == lpmod.OPTIMAL:
            blocks[o_pre] = PolicyBlock(game.a_domain, game.post_domain, game.policy_matrix(sol.x))
            res.objective = sol.objective_value
        per_opre[o_pre] = res

    status = "optimal" if all(r.status == lpmod.OPTIMAL for r in per_opre.values()) else "infeasible"
    f = ObfuscationPolicy(scenario, blocks)
    if status != "optimal":
        return GameSolution(scenario, f, None, float("nan"), float("nan"), per_opre, status, lps)

    h = best_response(f, prior, M=profile.M)
    privacy = q_loss = 0.0
    for o_pre, res in per_opre.items():
        res.privacy, res.q_loss = (float(v) for v in evaluate(f, h, prior, o_pre))
        privacy += res.weight * res.privacy
        q_loss += res.weight * res.q_loss
    return GameSolution(scenario, f, h, float(privacy), float(q_loss), per_opre, status, lps)


def dual_attack(game, sol):
    """Attack read off the privacy-row multipliers (cross-check for best_response).

    For each release the multipliers over estimates form a distribution
    whenever the release has positive probability.
    """
    K, J = len(game.est_domain), len(game.post_domain)
    y = sol.duals_ineq[: K * J].reshape(K, J)
    out = {}
    for j, o in enumerate(game.post_domain):
        col = np.clip(y[:, j], 0.0, None)
        if col.sum() > 0:
            out[o] = {game.est_domain[k]: float(v / col.sum()) for k, v in enumerate(col) if v > 0}
    return out


# -- equilibrium audit ---------------------------------------------------------

def _min_loss_matrix(scenario, a_domain, post_dom, o_pre):
    L = np.array([[scenario.quality_loss(a, o, o_pre) for o in post_dom] for a in a_domain])
    F = np.zeros_like(L)
    F[np.arange(len(a_domain)), L.argmin(axis=1)] = 1.0
    return L, F


def saddle_check(solution, prior, scenario=None, samples=100, seed=0, tol=1e-7):
    """Audit an equilibrium by sampling alternative feasible policies.

    Checks per history: the LP objective matches the value of f* against its
    best response, f* respects the quality budget, and no sampled policy that
    respects the budget does better than f* against its own best response.
    Half the samples are global (random rows pulled towards the lowest-loss
    policy until the budget holds), half are local perturbations of f*.
    """
    scenario = scenario or solution.scenario
    rng = np.random.default_rng(seed)
    violations = []
    checked = 0
    for o_pre, res in sorted(solution.per_opre.items()):
        if res.status != lpmod.OPTIMAL:
            violations.append({"o_pre": o_pre, "check": "status", "detail": res.status})
            continue
        block = solution.f.blocks[o_pre]
        sub_prior = _single_prior(prior, o_pre)
        f_star = ObfuscationPolicy(scenario, {o_pre: block})
        value = evaluate(f_star, best_response(f_star, sub_prior), sub_prior, o_pre)
        if abs(value[0] - res.objective) > tol:
            violations.append({"o_pre": o_pre, "check": "objective", "lp": res.objective, "value": value[0]})
        if value[1] > scenario.dq_max + 1e-8:
            violations.append({"o_pre": o_pre, "check": "quality", "q_loss": value[1], "dq_max": scenario.dq_max})

        psi = np.array([sub_prior.entries[o_pre].get(a, 0.0) for a in block.a_domain])
        L, F_min = _min_loss_matrix(scenario, block.a_domain, block.post_domain, o_pre)
        loss_min = float(psi @ (F_min * L).sum(axis=1))
        if loss_min > scenario.dq_max + 1e-12:
            continue
        I, J = block.probs.shape
        for s in range(samples):
            if s % 2 == 0:
                F = rng.dirichlet(np.full(J, 0.5), size=I)
            else:
                eps = rng.uniform(0.0, 0.2)
                F = (1 - eps) * block.probs + eps * rng.dirichlet(np.ones(J), size=I)
            loss = float(psi @ (F * L).sum(axis=1))
            if loss > scenario.dq_max:
                lam = (loss - scenario.dq_max) / (loss - loss_min)
                F = lam * F_min + (1 - lam) * F
            alt = ObfuscationPolicy(scenario, {o_pre: PolicyBlock(block.a_domain, block.post_domain, F)})
            v_alt, q_alt = evaluate(alt, best_response(alt, sub_prior), sub_prior, o_pre)
            checked += 1
            if q_alt <= scenario.dq_max + 1e-9 and v_alt > res.objective + tol:
                violations.append({"o_pre": o_pre, "check": "sample", "lp": res.objective,
                                   "value": v_alt, "policy": F.tolist()})
    return {"ok": not violations, "samples": checked, "violations": violations}


def _single_prior(prior, o_pre):
    from .prior import PriorTable
    return PriorTable(prior.scenario, {o_pre: prior.entries[o_pre]}, {o_pre: 1.0})
