"""Command-line interface.

Exit codes: 0 ok, 1 I/O error, 2 invalid input, 3 infeasible model.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import bench
from ._validation import InfeasibleError, ValidationError
from .estimators import sample_release
from .game import ObfuscationPolicy, _key, _unkey, _jsonable
from .geo import GridSpec, discretize, parse_traces, reindex, support_set
from .metrics import BUILTIN, Scenario, get_scenario
from .mobility import MobilityProfile, estimate_markov
from .pipeline import synthesize_trajectory

log = logging.getLogger("trajpriv")

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2, 3

DEFAULTS = {
    "smoothing": 0.0,
    "smoothing_mode": "full",
    "scenario": "past_present",
    "dq_max": None,
    "horizon": 2,
    "stationary": False,
    "threads": None,
    "seed": 0,
    "o_pre": "",
    "points": 11,
    "dq_grid": None,
    "users": 20,
    "states": 5,
    "bundled": False,
    "M": 8,
}


def _resolve(args):
    """Merge built-in defaults, the optional JSON config and explicit flags (flags win)."""
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ValidationError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    out = {}
    for key, value in vars(args).items():
        if value is None or value is False:
            value = cfg.get(key, DEFAULTS.get(key, value))
        out[key] = value
    for key in cfg:
        out.setdefault(key, cfg[key])
    return argparse.Namespace(**out)


def _require(ns, *names):
    missing = [n for n in names if getattr(ns, n, None) in (None, "", [])]
    if missing:
        raise ValidationError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _threads(ns):
    t = ns.threads
    if t is not None and int(t) < 1:
        raise ValidationError("--threads must be at least 1")
    return None if t is None else int(t)


def _load_scenario(ns):
    spec = ns.scenario
    if isinstance(spec, dict):
        sc = Scenario.from_dict(spec)
    elif spec in BUILTIN:
        sc = get_scenario(spec)
    elif os.path.exists(spec):
        try:
            sc = Scenario.load(spec)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"scenario {spec}: {exc}") from exc
    else:
        raise ValidationError(f"scenario {spec!r} is neither a built-in ({sorted(BUILTIN)}) nor a file")
    if ns.dq_max is not None:
        sc = sc.with_dq_max(float(ns.dq_max))
    return sc


def _load_profile(path):
    try:
        return MobilityProfile.load(path)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"profile {path}: {exc}") from exc


def _grid_values(ns, max_loss):
    if ns.dq_grid is not None:
        vals = ns.dq_grid
        if isinstance(vals, str):
            try:
                vals = [float(v) for v in vals.split(",") if v.strip()]
            except ValueError as exc:
                raise ValidationError(f"bad --dq-grid: {exc}") from exc
        vals = sorted(float(v) for v in vals)
    else:
        vals = bench.default_grid(max_loss, int(ns.points))
    if len(vals) < 2 or min(vals) < 0:
        raise ValidationError("the dq_max grid needs at least two non-negative values")
    return vals


def _check_outputs(paths):
    if isinstance(paths, str):
        paths = [paths]
    for p in paths:
        ext = os.path.splitext(p)[1].lower()
        if ext not in (".csv", ".svg"):
            raise ValidationError(f"output {p} must end in .csv or .svg")
        parent = os.path.dirname(os.path.abspath(p))
        if not os.path.isdir(parent):
            raise OSError(f"output directory {parent} does not exist")
    return list(paths)


# -- commands -----------------------------------------------------------------

def cmd_profile(ns):
    _require(ns, "traces", "grid", "out")
    if float(ns.smoothing) < 0:
        raise ValidationError("--smoothing must be non-negative")
    grid = GridSpec.load(ns.grid)
    with open(ns.traces, "rb") as fh:
        raw = parse_traces(fh)
    if ns.user:
        raw = [t for t in raw if t.user_id == ns.user]
    if not raw:
        raise ValidationError("no traces to profile" + (f" for user {ns.user!r}" if ns.user else ""))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        disc = [discretize(t, grid) for t in raw]
    for w in caught:
        log.warning("%s", w.message)
    support = support_set(disc)
    traces = [reindex(t, support) for t in disc]
    prof = estimate_markov(traces, len(support), float(ns.smoothing), ns.smoothing_mode)
    prof = replace(prof, locations=tuple(support))
    prof.save(ns.out)
    log.info("profile with %d locations written to %s", prof.M, ns.out)
    return EXIT_OK


def cmd_synthesize(ns):
    _require(ns, "profile", "out")
    prof = _load_profile(ns.profile)
    sc = _load_scenario(ns)
    horizon = int(ns.horizon)
    if horizon < 1:
        raise ValidationError("--horizon must be at least 1")
    threads = _threads(ns)
    os.makedirs(ns.out, exist_ok=True)
    mode = "stationary" if ns.stationary else "finite"
    try:
        res = synthesize_trajectory(prof, sc, horizon, mode, n_jobs=threads)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        print(json.dumps(_jsonable(exc.report), indent=1), file=sys.stderr)
        return EXIT_INFEASIBLE
    sol = res.solution
    sol.f.save_csv(os.path.join(ns.out, "policy.csv"))
    doc = sol.to_dict()
    doc["mode"] = res.mode
    doc["horizon"] = res.final.t
    if mode == "stationary":
        doc["converged"] = res.converged
        doc["iterations"] = res.iterations
        doc["residuals"] = res.residuals
        if not res.converged:
            log.warning("channel did not converge after %d rounds", res.iterations)
    with open(os.path.join(ns.out, "solution.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_jsonable(doc), indent=1) + "\n")
    print(f"privacy={sol.privacy!r} q_loss={sol.q_loss!r}")
    return EXIT_OK


def cmd_apply(ns):
    _require(ns, "policy", "a_trg")
    with open(ns.policy, encoding="utf-8") as fh:
        policy = ObfuscationPolicy.from_csv(fh.read())
    try:
        a, o_pre = _unkey(str(ns.a_trg)), _unkey(str(ns.o_pre or ""))
    except ValueError as exc:
        raise ValidationError(f"bad location vector: {exc}") from exc
    try:
        o = sample_release(policy, a, o_pre, seed=int(ns.seed))
    except KeyError as exc:
        raise ValidationError(f"policy has no entry for a_trg={_key(a)} o_pre={_key(o_pre)}") from exc
    print(_key(o))
    return EXIT_OK


def _users(ns):
    if ns.profile:
        if isinstance(ns.profile, str):
            ns.profile = [ns.profile]
        return {os.path.splitext(os.path.basename(p))[0]: _load_profile(p) for p in ns.profile}
    M = int(ns.M)
    if M < 1:
        raise ValidationError("--M must be positive")
    return bench.bundled_users(M)


def cmd_sweep(ns):
    _require(ns, "out")
    ns.out = _check_outputs(ns.out)
    users = _users(ns)
    sc = _load_scenario(ns)
    threads = _threads(ns)
    M = next(iter(users.values())).M
    grid = _grid_values(ns, bench.max_quality_loss(sc, M))
    mode = "stationary" if ns.stationary else "finite"
    results = bench._map(lambda kv: bench.tradeoff_sweep(kv[1], sc, grid, kv[0], int(ns.horizon), mode),
                         list(users.items()), threads)
    for r in results:
        if r.anomalies:
            log.warning("user %s: privacy decreases between %s", r.user_id, r.anomalies)
        log.info("user %s plateau at %s", r.user_id, r.plateau)
    for p in ns.out:
        bench.export(results, p)
    return EXIT_OK


def cmd_compare(ns):
    _require(ns, "out")
    ns.out = _check_outputs(ns.out)
    threads = _threads(ns)
    if ns.profile:
        users = _users(ns)
    else:
        n, m = int(ns.users), int(ns.states)
        if n < 1 or m < 1:
            raise ValidationError("--users and --states must be positive")
        rng = np.random.default_rng(int(ns.seed))
        users = {f"random{i:02d}": bench.random_mobility(m, rng) for i in range(n)}
        users["iid"] = bench.iid_mobility(rng.dirichlet(np.ones(m)))
    grid = _grid_values(ns, 1.0)
    results = bench._map(lambda kv: bench.attack_comparison(kv[1], grid, kv[0]), list(users.items()), threads)
    bad = [(r.user_id, v) for r in results for v in r.violations()]
    if bad:
        log.warning("correlation attack beats the sporadic attack at %s", bad)
    for p in ns.out:
        bench.export(results, p)
    return EXIT_OK


def cmd_demo_toy(ns):
    print(bench.format_toy_report(bench.toy_correlation_demo()))
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="trajpriv", description="Optimal location obfuscation against trajectory attacks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with option values; flags override it")
        p.add_argument("--threads", type=int, help="maximum worker threads")
        return p

    p = common(sub.add_parser("profile", help="estimate a mobility profile from traces"))
    p.add_argument("traces", nargs="?")
    p.add_argument("--grid", help="grid configuration JSON")
    p.add_argument("-o", "--out")
    p.add_argument("--smoothing", type=float)
    p.add_argument("--smoothing-mode", choices=["full", "support"])
    p.add_argument("--user", help="only use this user's traces")
    p.set_defaults(func=cmd_profile)

    p = common(sub.add_parser("synthesize", help="synthesize the optimal policy"))
    p.add_argument("profile", nargs="?")
    p.add_argument("--scenario", help=f"built-in name {sorted(BUILTIN)} or scenario JSON file")
    p.add_argument("--dq-max", type=float)
    p.add_argument("-o", "--out", help="output directory")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--horizon", type=int)
    g.add_argument("--stationary", action="store_true")
    p.set_defaults(func=cmd_synthesize)

    p = common(sub.add_parser("apply", help="sample a release from a policy"))
    p.add_argument("policy", nargs="?")
    p.add_argument("--a-trg", help="true locations, dash-separated (e.g. 3-4)")
    p.add_argument("--o-pre", help="previous releases, dash-separated")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_apply)

    for name, func, text in (("sweep", cmd_sweep, "privacy vs quality budget"),
                             ("compare", cmd_compare, "sporadic vs correlation-aware attack")):
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--profile", action="append", help="profile JSON (repeatable)")
        p.add_argument("--dq-grid", help="comma-separated dq_max values")
        p.add_argument("--points", type=int, help="number of grid points when --dq-grid is absent")
        p.add_argument("-o", "--out", action="append", help=".csv or .svg output (repeatable)")
        p.set_defaults(func=func)
        if name == "sweep":
            p.add_argument("--scenario")
            p.add_argument("--M", type=int, help="size of the bundled synthetic users")
            p.add_argument("--horizon", type=int)
            p.add_argument("--stationary", action="store_true")
            p.set_defaults(dq_max=None)
        else:
            p.add_argument("--users", type=int, help="number of random users")
            p.add_argument("--states", type=int, help="locations per random user")
            p.add_argument("--seed", type=int)

    p = sub.add_parser("demo-toy", help="exact numbers for the 5x5 correlation example")
    p.set_defaults(func=cmd_demo_toy)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        ns = _resolve(args)
        return ns.func(ns)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
