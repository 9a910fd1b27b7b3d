"""Experiments: the 5x5 correlation toy, attack comparison, tradeoff sweeps, CSV/SVG output."""

from __future__ import annotations

import csv
import io
import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import metrics
from ._validation import InfeasibleError, ValidationError
from .game import AttackPolicy, best_response, evaluate, synthesize
from .mobility import MobilityProfile
from .pipeline import synthesize_trajectory
from .prior import build_prior, emission_from_policy, prior_sporadic

MONOTONE_TOL = 1e-7
PLATEAU_TOL = 1e-6


# -- toy example ---------------------------------------------------------------

def _square(cell, n):
    x, y = cell
    return [(x + i, y + j) for i in (-1, 0, 1) for j in (-1, 0, 1)
            if 1 <= x + i <= n and 1 <= y + j <= n]


def toy_correlation_demo(n=5):
    """Exact numbers for the 5x5 toy: Moore-neighbourhood moves, uniform 3x3 obfuscation.

    The headline figures treat the adversary as knowing only which
    locations are compatible with the releases and guessing uniformly among
    them. The full Bayesian posterior (stationary start, uniform move over
    the neighbourhood) is reported alongside under ``bayes_*``.
    """
    cells = [(x, y) for x in range(1, n + 1) for y in range(1, n + 1)]
    nbr = {c: _square(c, n) for c in cells}  # moves and obfuscation share the clipped 3x3 shape
    f = {c: {o: Fraction(1, len(nbr[c])) for o in nbr[c]} for c in cells}
    total_deg = sum(len(nbr[c]) for c in cells)
    pi = {c: Fraction(len(nbr[c]), total_deg) for c in cells}  # stationary for the lazy walk

    def compatible(o_prev, o_cur):
        return [(a, b) for a in cells if o_prev in f[a] for b in nbr[a] if o_cur in f[b]]

    def bayes(o_prev, o_cur):
        post = {}
        for a, b in compatible(o_prev, o_cur):
            w = pi[a] * f[a][o_prev] * Fraction(1, len(nbr[a])) * f[b][o_cur]
            post[b] = post.get(b, 0) + w
        z = sum(post.values())
        return {k: v / z for k, v in post.items()}

    first = compatible((2, 2), (4, 4))
    current = sorted({b for _, b in first})
    second = compatible((1, 1), (4, 4))
    naive = [c for c in cells if (4, 4) in f[c]]
    bayes_first = bayes((2, 2), (4, 4))
    bayes_second = bayes((1, 1), (4, 4))
    return {
        "grid": n,
        "case_22_44": {
            "observations": [(2, 2), (4, 4)],
            "true_path": [(2, 2), (3, 3)],
            "current_support": current,
            "correct_guess": Fraction(1, len(current)),
            "bayes_posterior": dict(sorted(bayes_first.items())),
            "bayes_correct_guess": max(bayes_first.values()),
        },
        "case_11_44": {
            "observations": [(1, 1), (4, 4)],
            "compatible_paths": sorted(second),
            "correct_guess": Fraction(1, len(second)),
            "bayes_correct_guess": max(bayes_second.values()),
        },
        "naive_single_release": Fraction(1, len(naive)),
    }


def format_toy_report(rep):
    a, b = rep["case_22_44"], rep["case_11_44"]
    lines = [
        f"toy grid {rep['grid']}x{rep['grid']}, moves to adjacent cells, uniform 3x3 obfuscation",
        f"releases (2,2) then (4,4): current location confined to {len(a['current_support'])} cells "
        f"{a['current_support']}",
        f"  correct-guess probability: {a['correct_guess']} ({float(a['correct_guess']):.6f})",
        f"  naive single-release bound: {rep['naive_single_release']} "
        f"({float(rep['naive_single_release']):.6f})",
        f"  Bayes-optimal guess under the stationary walk: {a['bayes_correct_guess']}",
        f"releases (1,1) then (4,4): compatible trajectories {b['compatible_paths']}",
        f"  correct-guess probability: {b['correct_guess']} ({float(b['correct_guess']):.6f})",
    ]
    return "\n".join(lines)


# -- synthetic users ---------------------------------------------------------------

def deterministic_cycle(M):
    return MobilityProfile.from_matrix(np.roll(np.eye(M), 1, axis=1))


def uniform_mobility(M):
    return MobilityProfile.from_matrix(np.full((M, M), 1.0 / M))


def iid_mobility(weights):
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    return MobilityProfile.from_matrix(np.tile(w, (w.size, 1)))


def random_mobility(M, rng, concentration=1.0):
    """Random chain with strictly positive rows (hence irreducible)."""
    P = rng.dirichlet(np.full(M, concentration), size=M)
    P = np.clip(P, 1e-6, None)
    return MobilityProfile.from_matrix(P / P.sum(axis=1, keepdims=True))


def bundled_users(M=8):
    return {"deterministic_cycle": deterministic_cycle(M), "uniform": uniform_mobility(M)}


def default_grid(max_loss=1.0, points=11):
    return [float(v) for v in np.linspace(0.0, max_loss, points)]


def max_quality_loss(scenario, M):
    """Largest single-outcome quality loss over targets and releases (histories ignored)."""
    from .game import post_domain
    prof = uniform_mobility(M)
    posts = post_domain(scenario, prof)
    pre = tuple(0 for _ in scenario.o_pre_times)
    worst = 0.0
    for a in itertools.product(range(M), repeat=len(scenario.a_trg_times)):
        for o in posts:
            worst = max(worst, scenario.quality_loss(a, o, pre))
    return worst


# -- attack comparison ----------------------------------------------------------------

@dataclass
class AttackComparison:
    user_id: str
    points: list  # (dq_max, privacy_sporadic_attack, privacy_correlation_attack)

    def violations(self, tol=MONOTONE_TOL):
        return [p for p in self.points if p[2] > p[1] + tol]


def compare_attacks_at(profile, dq_max, dp=None, dq=None):
    """Privacy of the optimal sporadic policy against a sporadic and a correlation-aware attack."""
    spor = metrics.sporadic(dp, dq, dq_max)
    sol = synthesize(profile, spor, prior_sporadic(profile, spor))
    if sol.status != "optimal":
        raise InfeasibleError(f"sporadic synthesis infeasible at dq_max={dq_max}", sol.report())
    cond = metrics.single_location(dp, dq, dq_max)
    cprior = build_prior(profile, cond, emission_from_policy(sol.f, profile.M))
    f = sol.f.broadcast(cond, cprior.entries)
    h_corr = best_response(f, cprior, M=profile.M)
    h_spor = AttackPolicy(cond, {(o_pre, o): est for o_pre in cprior.entries
                                 for ((_, o), est) in sol.h.h.items()})
    p_spor = p_corr = 0.0
    for o_pre, w in cprior.obs_marginal.items():
        p_spor += w * evaluate(f, h_spor, cprior, o_pre)[0]
        p_corr += w * evaluate(f, h_corr, cprior, o_pre)[0]
    return float(p_spor), float(p_corr)


def attack_comparison(profile, dq_grid=None, user_id="user", dp=None, dq=None, n_jobs=None):
    dq_grid = default_grid() if dq_grid is None else list(dq_grid)
    pts = _map(lambda d: (float(d), *compare_attacks_at(profile, d, dp, dq)), dq_grid, n_jobs)
    return AttackComparison(user_id, pts)


# -- tradeoff sweep ---------------------------------------------------------------

@dataclass
class SweepResult:
    user_id: str
    points: list  # (dq_max, privacy, q_loss, status)
    plateau: tuple = None  # (dq_max, privacy) where the curve first reaches its final level
    anomalies: list = field(default_factory=list)
    runs: list = field(default_factory=list, repr=False)  # TrajectoryResult per point, None if infeasible


def _map(fn, items, n_jobs):
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def tradeoff_sweep(profile, scenario, dq_grid=None, user_id="user", horizon=2, mode="finite", n_jobs=None):
    """Optimal privacy as a function of the quality budget."""
    if dq_grid is None:
        dq_grid = default_grid(max_quality_loss(scenario, profile.M))
    dq_grid = sorted(float(d) for d in dq_grid)
    if len(dq_grid) < 2:
        raise ValidationError("a sweep needs at least two dq_max values")

    def point(d):
        try:
            res = synthesize_trajectory(profile, scenario.with_dq_max(d), horizon, mode)
        except InfeasibleError:
            return (d, float("nan"), float("nan"), "infeasible"), None
        sol = res.solution
        return (d, sol.privacy, sol.q_loss, sol.status), res

    out = _map(point, dq_grid, n_jobs)
    pts = [p for p, _ in out]
    ok = [p for p in pts if p[3] == "optimal"]
    anomalies = [(a[0], b[0]) for a, b in zip(ok, ok[1:]) if b[1] < a[1] - MONOTONE_TOL]
    plateau = None
    if ok:
        final = ok[-1][1]
        plateau = next((p[0], p[1]) for p in ok if abs(p[1] - final) <= PLATEAU_TOL)
    return SweepResult(user_id, pts, plateau, anomalies, [r for _, r in out])


# -- export ---------------------------------------------------------------------------

SWEEP_HEADER = ["user_id", "dq_max", "privacy", "q_loss", "status"]
COMPARE_HEADER = ["user_id", "dq_max", "privacy_sporadic_attack", "privacy_correlation_attack"]


def _num(v):
    return repr(float(v))


def sweep_csv(results):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in results:
        for d, p, q, s in r.points:
            w.writerow([r.user_id, _num(d), _num(p), _num(q), s])
    return buf.getvalue()


def comparison_csv(results):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_HEADER)
    for r in results:
        for d, ps, pc in r.points:
            w.writerow([r.user_id, _num(d), _num(ps), _num(pc)])
    return buf.getvalue()


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def svg_chart(series, xlabel, ylabel, title=""):
    """Standalone SVG 1.1 line chart, 800x600, one polyline per series.

    ``series`` is a list of ``(label, [(x, y), ...])``. Output depends only
    on the input values.
    """
    W, H, L, R, T, B = 800, 600, 80, 160, 40, 70
    xs = [x for _, pts in series for x, y in pts if np.isfinite(y)]
    ys = [y for _, pts in series for x, y in pts if np.isfinite(y)]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(0.0, min(ys)), max(ys)) if ys else (0.0, 1.0)
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0

    def px(x):
        return L + (x - x0) / (x1 - x0) * (W - L - R)

    def py(y):
        return H - B - (y - y0) / (y1 - y0) * (H - T - B)

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
        f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>',
    ]
    for k in range(6):
        xv = x0 + k * (x1 - x0) / 5
        yv = y0 + k * (y1 - y0) / 5
        out.append(f'<text x="{px(xv):.2f}" y="{H - B + 18}" font-size="12" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{L - 8}" y="{py(yv) + 4:.2f}" font-size="12" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{(L + W - R) / 2:.1f}" y="{H - 20}" font-size="14" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="20" y="{(T + H - B) / 2:.1f}" font-size="14" text-anchor="middle" '
               f'transform="rotate(-90 20 {(T + H - B) / 2:.1f})">{_esc(ylabel)}</text>')
    if title:
        out.append(f'<text x="{W / 2:.1f}" y="24" font-size="16" text-anchor="middle">{_esc(title)}</text>')
    for idx, (label, pts) in enumerate(series):
        color = _COLORS[idx % len(_COLORS)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts if np.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        ly = T + 20 * idx + 10
        out.append(f'<line x1="{W - R + 10}" y1="{ly}" x2="{W - R + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - R + 36}" y="{ly + 4}" font-size="12">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(text):
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def export(results, path, fmt=None):
    """Write sweep or comparison results as CSV or SVG, chosen by ``fmt`` or the file suffix."""
    results = list(results)
    if not results:
        raise ValidationError("nothing to export")
    fmt = fmt or os.path.splitext(path)[1].lstrip(".").lower()
    is_sweep = isinstance(results[0], SweepResult)
    if fmt == "csv":
        text = sweep_csv(results) if is_sweep else comparison_csv(results)
    elif fmt == "svg":
        if is_sweep:
            text = svg_chart([(r.user_id, [(p[0], p[1]) for p in r.points]) for r in results],
                             "dq_max", "privacy", "privacy-quality tradeoff")
        else:
            series = []
            for r in results:
                series.append((f"{r.user_id} sporadic", [(p[0], p[1]) for p in r.points]))
                series.append((f"{r.user_id} correlation", [(p[0], p[2]) for p in r.points]))
            text = svg_chart(series, "dq_max", "privacy", "sporadic vs correlation-aware attack")
    else:
        raise ValidationError(f"unknown export format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path
