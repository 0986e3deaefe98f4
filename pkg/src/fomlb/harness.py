"""Command line entry point: ``harness verify|run|frontplot|bounds``.

Instance flags (``--m1 --m2 --dbar --eps --lf --beta``) override values read
from ``--config FILE.json``; anything left unset falls back to the reference
configuration m1=2, m2=2, dbar=5, eps=0.1, L_f=1 with the default beta.

Exit codes: 0 on success (for ``verify``: every check passed), 1 when a check
fails, 2 for an invalid configuration or usage error.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import checks, linops
from .algorithms import (
    DivergenceError,
    run_alm_class1,
    run_generic,
    run_ladmm_class2,
    run_penalty_class1,
    zero_rule,
)
from .instance import InstanceParams, beta_lower_bound, delta_f0_upper
from .stationarity import residual_SP_batch, witness_threshold

ALGOS = {
    "penalty": (1, lambda p, n: run_penalty_class1(p, max_oracles=n)),
    "alm": (1, lambda p, n: run_alm_class1(p, max_oracles=n)),
    "ladmm": (2, lambda p, n: run_ladmm_class2(p, max_oracles=n)),
    "zero1": (1, lambda p, n: run_generic(p, zero_rule, 1, max_oracles=n, name="zero1")),
    "zero2": (2, lambda p, n: run_generic(p, zero_rule, 2, max_oracles=n, name="zero2")),
}
THEOREM_CONSTANTS = {"class1_composite": 36000.0, "class2_splitting": 72000.0, "class1_constrained": 18000.0}
DELTA_LABEL = "computed with Delta_F0 upper estimate 3000 pi^2 dbar eps^2 / L_f"


class ConfigError(ValueError):
    pass


def build_parser():
    parser = argparse.ArgumentParser(prog="harness", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("verify", "run acceptance checks 1-10; exit 0 iff all pass"),
        ("run", "run one algorithm and write its trace and summary"),
        ("frontplot", "write support-front traces and the theoretical staircase"),
        ("bounds", "print condition numbers and lower-bound thresholds"),
    ):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="JSON file with instance keys and optional algo/max_oracles/seed/out")
        sp.add_argument("--m1", type=int)
        sp.add_argument("--m2", type=int)
        sp.add_argument("--dbar", type=int)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--lf", type=float)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--algo", help=f"one of {', '.join(ALGOS)} (frontplot accepts a comma list)")
        sp.add_argument("--max-oracles", type=int, dest="max_oracles")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
    return parser


def load_config(args):
    """Merge the JSON config file and command line flags into one settings dict."""
    doc = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    settings = dict(checks.C0, beta=None, algo=None, max_oracles=500, seed=0, out=None)
    unknown = set(doc) - set(settings)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    settings.update(doc)
    for key in ("m1", "m2", "dbar", "eps", "lf", "beta", "algo", "max_oracles", "seed", "out"):
        val = getattr(args, key)
        if val is not None:
            settings[key] = val
    return settings


def make_params(settings):
    try:
        return InstanceParams(
            eps=float(settings["eps"]),
            lf=float(settings["lf"]),
            m1=int(settings["m1"]),
            m2=int(settings["m2"]),
            dbar=int(settings["dbar"]),
            beta=None if settings["beta"] is None else float(settings["beta"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(params):
    return hashlib.sha1(params.to_json().encode()).hexdigest()[:10]


def _outdir(settings):
    out = settings["out"] or "."
    os.makedirs(out, exist_ok=True)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def theorem_thresholds(params):
    """Lower-bound oracle counts with Delta_F0 replaced by its upper estimate.

    Also returns the coefficient of Delta_F0 in each bound, which scales as eps^-2.
    """
    kj = linops.kappa_joint(params)
    delta = delta_f0_upper(params)
    rows = {}
    for name, const in THEOREM_CONSTANTS.items():
        per_delta = kj * params.lf / (const * math.pi**2 * params.eps**2)
        rows[name] = {"constant": const, "per_unit_delta": per_delta, "threshold": math.ceil(per_delta * delta)}
    return {"delta_f0_upper": delta, "label": DELTA_LABEL, "bounds": rows}


def support_thresholds(params):
    m, dbar = params.m, params.dbar
    return {
        "class1_min_nonstationary_iterations": 2 + m * (dbar - 2) // 6,
        "class2_min_nonstationary_iterations": 2 + m * (dbar - 2) // 3,
        "class1_nonstationary_through_t": 1 + m * (dbar - 2) // 6,
        "class2_nonstationary_through_t": 1 + m * (dbar - 2) // 3,
    }


def bounds_report(params):
    kj = linops.kappa_joint(params)
    ka = linops.kappa_A(params)
    return {
        "config": params.to_dict(),
        "beta": params.beta,
        "beta_lower_bound": beta_lower_bound(params),
        "kappa_joint": kj,
        "kappa_A": ka,
        "ratio": kj / ka,
        "ratio_bound_3m2/4": 3 * params.m2 / 4,
        "ratio_bound_holds": kj / ka >= 3 * params.m2 / 4,
        "m/4 <= kappa_joint < m": params.m / 4 <= kj < params.m,
        "omega_bound_150pi_eps/L_f": 150 * math.pi * params.eps / params.lf,
        "theorem": theorem_thresholds(params),
        "support": support_thresholds(params),
    }


def cmd_bounds(params, settings):
    rep = bounds_report(params)
    lines = [
        f"config                 {params.to_json()}",
        f"beta                   {rep['beta']!r} (lower bound {rep['beta_lower_bound']!r})",
        f"kappa_joint            {rep['kappa_joint']!r}",
        f"kappa_A                {rep['kappa_A']!r}",
        f"ratio                  {rep['ratio']!r} >= 3 m2/4 = {rep['ratio_bound_3m2/4']!r}: {rep['ratio_bound_holds']}",
        f"m/4 <= kappa_joint < m {rep['m/4 <= kappa_joint < m']}",
        f"omega bound            {rep['omega_bound_150pi_eps/L_f']!r}",
        f"Delta_F0 surrogate     {rep['theorem']['delta_f0_upper']!r} ({DELTA_LABEL})",
    ]
    for name, row in rep["theorem"]["bounds"].items():
        lines.append(
            f"threshold {name:<20} {row['threshold']} (C = {row['constant']:g}; per unit Delta {row['per_unit_delta']!r})"
        )
    for name, val in rep["support"].items():
        lines.append(f"{name:<38} {val!r}")
    print("\n".join(lines))
    if settings["out"]:
        path = os.path.join(_outdir(settings), f"bounds-{config_hash(params)}.json")
        with open(path, "w") as fh:
            json.dump(_jsonable(rep), fh, indent=2, sort_keys=True)
    return 0


def cmd_verify(params, settings):
    results = checks.run_all(params, seed=int(settings["seed"]))
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("ALL PASS" if ok else "SOME CHECKS FAILED")
    if settings["out"]:
        path = os.path.join(_outdir(settings), f"verify-{config_hash(params)}.json")
        doc = {"config": params.to_dict(), "passed": ok, "checks": [r.to_dict() for r in results]}
        with open(path, "w") as fh:
            json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
    return 0 if ok else 1


def _algo_names(settings, default):
    raw = settings["algo"] or default
    names = [a.strip() for a in str(raw).split(",") if a.strip()]
    bad = [a for a in names if a not in ALGOS]
    if bad:
        raise ConfigError(f"unknown algorithm(s) {bad}; choose from {sorted(ALGOS)}")
    return names


def _run(params, name, max_oracles):
    if max_oracles < 0:
        raise ConfigError("max-oracles must be >= 0")
    # any budget below one iteration yields just the starting point
    return ALGOS[name][1](params, max(max_oracles, 1))


def run_summary(params, trace):
    """Summary of one run with measured and theoretical oracle counts."""
    doc = trace.summary()
    eps = params.eps
    rate_key = "class1" if trace.class_id == 1 else "class2"
    sup = support_thresholds(params)
    doc["min_nonstationary_iterations"] = sup[f"{rate_key}_min_nonstationary_iterations"]
    doc["initial_residual_AP"] = trace.records[0].residual_AP
    doc["initial_certificate_lb"] = trace.records[0].certificate_lb
    if trace.class_id == 1:
        hit = trace.first_eps_stationary(eps)
        doc["stationarity_measure"] = "residual_AP"
        doc["min_residual"] = min(r.residual_AP for r in trace.records)
    else:
        out = residual_SP_batch(params, np.array(trace.history.xs), np.array(trace.history.ys))
        res = out["residual"]
        idx = np.flatnonzero(res <= eps / 2)
        hit = trace.records[int(idx[0])] if idx.size else None
        doc["stationarity_measure"] = "residual_SP at eps/2"
        doc["min_residual"] = float(res.min())
    if hit is None:
        doc["oracles_to_eps"] = "not reached"
        doc["iterations_to_eps"] = "not reached"
    else:
        doc["oracles_to_eps"] = hit.oracle_count
        doc["iterations_to_eps"] = hit.t
    viol = checks.front_violations(params, trace)
    doc["front_rate_violations"] = viol
    rep = trace.verify(params)
    doc["class_verification"] = {"passed": rep.passed, "max_residual": rep.max_residual}
    doc["theorem_thresholds"] = theorem_thresholds(params)
    doc["omega_bound"] = 150 * math.pi * eps / params.lf
    doc["witness_threshold"] = witness_threshold(params)
    return doc


def cmd_run(params, settings):
    names = _algo_names(settings, "penalty")
    out = _outdir(settings)
    tag = config_hash(params)
    ok = True
    for name in names:
        try:
            trace = _run(params, name, int(settings["max_oracles"]))
        except DivergenceError as exc:
            print(f"{name}: {exc}", file=sys.stderr)
            return 1
        doc = run_summary(params, trace)
        doc["config"] = params.to_dict()
        base = os.path.join(out, f"{name}-{tag}")
        trace.to_csv(base + ".csv")
        trace.transcript.to_jsonl(base + ".oracles.jsonl")
        with open(base + ".json", "w") as fh:
            json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        print(
            f"{name}: iterations={doc['iterations']} oracle_calls={doc['oracle_calls']} "
            f"front={doc['final_front']} min_nonstationary_iterations={doc['min_nonstationary_iterations']:g} "
            f"oracles_to_eps={doc['oracles_to_eps']} initial_residual_AP={doc['initial_residual_AP']:.6g}"
        )
        print(f"  wrote {base}.csv, {base}.json, {base}.oracles.jsonl")
        ok = ok and doc["class_verification"]["passed"] and not doc["front_rate_violations"]
    return 0 if ok else 1


def cmd_frontplot(params, settings):
    names = _algo_names(settings, "penalty,alm,ladmm")
    out = _outdir(settings)
    path = os.path.join(out, f"fronts-{config_hash(params)}.csv")
    ok = True
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algo", "class", "t", "oracle_count", "J", "staircase"])
        for name in names:
            trace = _run(params, name, int(settings["max_oracles"]))
            for r in trace.records:
                stair = checks.staircase(params, r.t, trace.class_id)
                J = max(r.J, r.J_y)
                ok = ok and J <= stair
                w.writerow([name, trace.class_id, r.t, r.oracle_count, J, stair])
    print(f"wrote {path}")
    if not ok:
        print("measured front exceeded the staircase", file=sys.stderr)
    return 0 if ok else 1


COMMANDS = {"verify": cmd_verify, "run": cmd_run, "frontplot": cmd_frontplot, "bounds": cmd_bounds}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        settings = load_config(args)
        params = make_params(settings)
        return COMMANDS[args.command](params, settings)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
