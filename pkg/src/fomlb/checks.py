"""Acceptance suites: each function runs one numbered check and reports pass/fail.

Every check returns a :class:`CheckResult` holding the verdict, the measured
quantities it was decided on and its wall time. ``run_all`` runs checks 1-10
in order; the command line ``verify`` subcommand is a thin wrapper around it.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import bruteforce, linops
from .algorithms import random_rule, run_alm_class1, run_generic, run_ladmm_class2, run_penalty_class1
from .instance import InstanceParams, as_blocks, grad_f0, grad_h, h, f0
from .prox import prox_check, prox_g, prox_gbar
from .stationarity import (
    ap_components,
    certificate_lb,
    residual_P_batch,
    residual_SP_batch,
    small_coordinate_witness,
    witness_threshold,
)

__all__ = [
    "CheckResult",
    "C0",
    "SCALING_CONFIGS",
    "front_rate_threshold",
    "front_violations",
    "staircase",
    "consensus_path",
    "check_spectrum",
    "check_gradients",
    "check_prox",
    "check_supports",
    "check_certificate",
    "check_front_rate_class1",
    "check_front_rate_class2",
    "check_scaling",
    "check_transfer",
    "check_ratio",
    "CHECKS",
    "run_all",
]

C0 = dict(eps=0.1, lf=1.0, m1=2, m2=2, dbar=5)
SCALING_CONFIGS = ((2, 2), (2, 4), (2, 8))
RATES = {1: 6, 2: 3}


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    runtime: float
    limit: float
    details: dict = field(default_factory=dict)

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} {verdict}  {self.name} ({self.runtime:.2f} s, limit {self.limit:g} s)"

    def to_dict(self):
        return {
            "number": self.number,
            "name": self.name,
            "passed": self.passed,
            "runtime": self.runtime,
            "limit": self.limit,
            "details": self.details,
        }


def _timed(number, name, limit):
    def wrap(fn):
        def run(*args, **kwargs):
            start = time.perf_counter()
            ok, details = fn(*args, **kwargs)
            elapsed = time.perf_counter() - start
            details["within_time"] = elapsed < limit
            return CheckResult(number, name, bool(ok) and elapsed < limit, elapsed, limit, details)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.number = number
        return run

    return wrap


def _c0():
    return InstanceParams(**C0)


def front_rate_threshold(params, J, class_id):
    """Earliest iteration at which a class member may have support front J (J >= 2)."""
    return 2.0 + params.m * (J - 2) / RATES[class_id]


def front_violations(params, trace):
    """Records with J >= 2 reached before the class-dependent threshold."""
    bad = []
    for r in trace.records:
        J = max(r.J, r.J_y)
        if J >= 2 and r.t < front_rate_threshold(params, J, trace.class_id):
            bad.append((r.t, J))
    return bad


def staircase(params, t, class_id):
    """Largest front reachable by iteration t: max{J : t >= 2 + m (J - 2) / rate}, capped at dbar."""
    if t < 1:
        return 0
    if t < 2:
        return 1
    J = 2 + math.floor((t - 2) * RATES[class_id] / params.m + 1e-12)
    return min(J, params.dbar)


def _horizon_budget(params, class_id):
    # past this iteration no front J <= dbar can break the bound
    last = math.ceil(front_rate_threshold(params, params.dbar, class_id))
    return 3 * last


def _nonstationary_horizon(params, class_id):
    return 1 + params.m * (params.dbar - 2) // RATES[class_id]


@_timed(1, "closed-form spectrum of H H^T and joint condition number", 1.0)
def check_spectrum(params=None):
    p = params or _c0()
    closed = np.sort(np.repeat([linops.eig_HHT(p, i) for i in range(1, p.m)], p.dbar))
    dense_ev = bruteforce.eig_dense(p, "HHT")
    dev = float(np.max(np.abs(closed - dense_ev)))
    kj = linops.kappa_joint(p)
    k_dense = math.sqrt(dense_ev[-1] / dense_ev[0])
    kdev = abs(kj - k_dense)
    bracket = p.m / 4 <= kj < p.m
    ok = dev <= 1e-9 and kdev <= 1e-9 and bracket
    return ok, {
        "max_eig_deviation": dev,
        "kappa_joint": kj,
        "kappa_dense": k_dense,
        "kappa_deviation": kdev,
        "m/4 <= kappa < m": bracket,
    }


def _rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@_timed(2, "gradients against finite differences and Lipschitz probe", 5.0)
def check_gradients(params=None, seed=0, points=100, pairs=10_000):
    p = params or _c0()
    rng = np.random.default_rng(seed)
    scale = witness_threshold(p)
    worst_h = worst_f0 = 0.0
    for k in range(points):
        i = k % p.m + 1
        z = rng.normal(scale=2.0, size=p.dbar)
        fd = bruteforce.fd_grad(lambda zz: h(p, i, zz), z)
        worst_h = max(worst_h, _rel_err(fd, grad_h(p, i, z)))
        x = rng.normal(scale=scale, size=p.d)
        fd = bruteforce.fd_grad(lambda xx: f0(p, xx), x, step=1e-5 * scale)
        worst_f0 = max(worst_f0, _rel_err(fd, grad_f0(p, x)))
    probe = bruteforce.lipschitz_probe(
        lambda X: grad_f0(p, X), p.d, pairs, seed=seed, center_scale=scale, step_scales=(1e-3 * scale, 3.0 * scale)
    )
    ok = worst_h <= 1e-6 and worst_f0 <= 1e-6 and probe <= p.lf * (1 + 1e-8)
    return ok, {"max_rel_err_grad_h": worst_h, "max_rel_err_grad_f0": worst_f0, "lipschitz_probe": probe, "L_f": p.lf}


@_timed(3, "prox maps against numeric minimization and subgradient optimality", 2.0)
def check_prox(params=None, seed=0, samples=1000):
    p = params or _c0()
    rng = np.random.default_rng(seed)
    pairs_per_point = len(p.M) * p.dbar
    npts = -(-samples // pairs_per_point)
    etas = 10 ** rng.uniform(-3, 0, size=npts)
    # spread pair gaps across both branches of the two-point prox
    X = rng.normal(size=(npts, p.d)) * (p.beta * etas)[:, None] * rng.uniform(0.2, 3.0, size=(npts, 1))
    err_g = opt_g = 0.0
    for x, eta in zip(X, etas):
        err_g = max(err_g, float(np.max(np.abs(prox_g(p, x, eta) - bruteforce.prox_numeric(p, "g", x, eta)))))
        opt_g = max(opt_g, prox_check(p, "g", x, eta))
    npts_y = -(-samples // p.nbar)
    etas_y = 10 ** rng.uniform(-3, 0, size=npts_y)
    cy = p.beta / (p.m * p.lf)
    Y = rng.normal(size=(npts_y, p.nbar)) * (cy * etas_y)[:, None] * 2.0
    err_y = opt_y = 0.0
    for y, eta in zip(Y, etas_y):
        err_y = max(err_y, float(np.max(np.abs(prox_gbar(p, y, eta) - bruteforce.prox_numeric(p, "gbar", y, eta)))))
        opt_y = max(opt_y, prox_check(p, "gbar", y, eta))
    ok = err_g <= 1e-8 and err_y <= 1e-8 and opt_g <= 1e-10 and opt_y <= 1e-10
    return ok, {
        "pairs_tested": npts * pairs_per_point,
        "coordinates_tested": npts_y * p.nbar,
        "max_abs_err_prox_g": err_g,
        "max_abs_err_prox_gbar": err_y,
        "max_optimality_residual_g": opt_g,
        "max_optimality_residual_gbar": opt_y,
    }


def _predicted_grad_support(group, active):
    """Coordinates where grad h of a given group is nonzero, from the support of its argument.

    Coordinate 1 is always active (the leading term is shared by all groups).
    Otherwise a backward term at j is nonzero iff z_(j-1) is, and a forward
    term iff z_j is, with no forward term at the last coordinate.
    """
    dbar = active.shape[0]
    prev = np.concatenate([[False], active[:-1]])
    fwd = active.copy()
    fwd[-1] = False
    even = np.arange(1, dbar + 1) % 2 == 0
    if group == 0:
        out = np.where(even, prev, fwd)
    elif group == 2:
        out = np.where(even, fwd, prev)
    else:
        out = np.zeros(dbar, dtype=bool)
    out[0] = True
    return out


def _coord_support(v, dbar):
    return (np.asarray(v).reshape(-1, dbar) != 0.0).any(axis=0)


@_timed(4, "support propagation of gradients and linear maps", 2.0)
def check_supports(params=None, seed=0, samples=1000):
    p = params or _c0()
    rng = np.random.default_rng(seed)
    scale = witness_threshold(p)
    grad_fail = lin_fail = gram_fail = 0
    for _ in range(samples):
        J = int(rng.integers(0, p.dbar + 1))
        mask = np.zeros((p.m, p.dbar), dtype=bool)
        mask[:, :J] = rng.random((p.m, J)) < 0.6
        # magnitudes bounded away from 0 so that no term underflows
        vals = rng.choice([-1.0, 1.0], size=mask.shape) * rng.uniform(0.3, 3.0, size=mask.shape) * scale
        x = np.where(mask, vals, 0.0).ravel()
        gb = as_blocks(p, grad_f0(p, x))
        for i in range(p.m):
            want = _predicted_grad_support(int(p.block_group[i]), mask[i])
            if not np.array_equal(gb[i] != 0.0, want):
                grad_fail += 1
        sx = _coord_support(x, p.dbar)
        for tag in ("AtA", "AbarTAbar", "Abar", "A"):
            if np.any(_coord_support(linops.apply(p, tag, x), p.dbar) & ~sx):
                lin_fail += 1
        ymask = np.zeros((3 * p.m2 - 1, p.dbar), dtype=bool)
        ymask[:, :J] = rng.random((3 * p.m2 - 1, J)) < 0.6
        y = np.where(ymask, rng.normal(size=ymask.shape), 0.0).ravel()
        if np.any(_coord_support(linops.apply(p, "Abar_adj", y), p.dbar) & ~_coord_support(y, p.dbar)):
            lin_fail += 1
        if not np.array_equal(linops.apply(p, "AbarAbarT", y) != 0.0, y != 0.0):
            gram_fail += 1
    ok = grad_fail == 0 and lin_fail == 0 and gram_fail == 0
    return ok, {
        "samples": samples,
        "gradient_support_mismatches": grad_fail,
        "linear_map_support_leaks": lin_fail,
        "AbarAbarT_support_mismatches": gram_fail,
    }


@_timed(5, "non-stationarity certificate chain", 5.0)
def check_certificate(params=None, seed=0, samples=10_000):
    p = params or _c0()
    rng = np.random.default_rng(seed)
    scale = witness_threshold(p)
    # consensus-like points with a random number of zeroed trailing coordinates,
    # plus unstructured noise, so that both witness outcomes occur
    base = rng.normal(scale=2.0 * scale, size=(samples, 1, p.dbar))
    keep = rng.integers(0, p.dbar + 1, size=samples)
    base = np.where(np.arange(p.dbar)[None, None, :] < keep[:, None, None], base, 0.0)
    noise = rng.normal(size=(samples, p.m, p.dbar)) * (10 ** rng.uniform(-3, 0.5, size=(samples, 1, 1))) * scale
    X = (base + noise).reshape(samples, p.d)
    hx, gx = ap_components(p, X)
    ap = np.maximum(hx, gx)
    lb = certificate_lb(p, X)
    chain_viol = int(np.sum(ap < lb - 1e-12))
    witnessed = np.array([small_coordinate_witness(p, x) is not None for x in X])
    cert_viol = int(np.sum(witnessed & ~(lb > p.eps)))
    ok = chain_viol == 0 and cert_viol == 0 and witnessed.any()
    return ok, {
        "samples": samples,
        "residual_AP_below_certificate": chain_viol,
        "with_witness": int(witnessed.sum()),
        "witness_but_certificate_le_eps": cert_viol,
        "min_certificate_with_witness": float(lb[witnessed].min()) if witnessed.any() else None,
        "min_slack_residual_minus_certificate": float(np.min(ap - lb)),
    }


def _front_rate_suite(p, class_id, seed, rules, shipped):
    budget = _horizon_budget(p, class_id)
    runs = list(shipped)
    for k in range(rules):
        runs.append(run_generic(p, random_rule(p, seed * 100_003 + k), class_id, max_oracles=budget, name=f"random-{k}"))
    violations = {}
    verify_fail = []
    for tr in runs:
        bad = front_violations(p, tr)
        if bad:
            violations[tr.algo] = bad
        rep = tr.verify(p)
        if not rep.passed:
            verify_fail.append((tr.algo, rep.first_failure, rep.max_residual))
    return runs, violations, verify_fail


def _reach_table(runs, dbar):
    return {tr.algo: [tr.first_reach(J) for J in range(1, dbar + 1)] for tr in runs}


@_timed(6, "front-rate bound for the first class", 10.0)
def check_front_rate_class1(params=None, seed=0, rules=100, max_oracles=500):
    p = params or _c0()
    shipped = [run_penalty_class1(p, max_oracles=max_oracles), run_alm_class1(p, max_oracles=max_oracles)]
    runs, violations, verify_fail = _front_rate_suite(p, 1, seed, rules, shipped)
    horizon = _nonstationary_horizon(p, 1)
    early = [(tr.algo, r.t, r.residual_AP) for tr in runs for r in tr.records if r.t <= horizon and not r.residual_AP > p.eps]
    ok = not violations and not verify_fail and not early
    return ok, {
        "runs": len(runs),
        "front_rate_violations": violations,
        "class_verification_failures": verify_fail,
        "nonstationary_horizon": horizon,
        "residual_AP_le_eps_before_horizon": early,
        "min_residual_AP_before_horizon": min(r.residual_AP for tr in runs for r in tr.records if r.t <= horizon),
        "shipped_first_reach": _reach_table(shipped, p.dbar),
    }


@_timed(7, "front-rate bound for the second class", 10.0)
def check_front_rate_class2(params=None, seed=0, rules=100, max_oracles=500):
    p = params or _c0()
    shipped = [run_ladmm_class2(p, max_oracles=max_oracles)]
    runs, violations, verify_fail = _front_rate_suite(p, 2, seed, rules, shipped)
    horizon = _nonstationary_horizon(p, 2)
    X, Y, tags = [], [], []
    for tr in runs:
        for t in range(min(horizon, len(tr.history.xs) - 1) + 1):
            X.append(tr.history.xs[t])
            Y.append(tr.history.ys[t])
            tags.append((tr.algo, t))
    out = residual_SP_batch(p, np.array(X), np.array(Y))
    res = out["residual"]
    early = [(tags[k][0], tags[k][1], float(res[k])) for k in np.flatnonzero(~(res > p.eps / 2))]
    ok = not violations and not verify_fail and not early
    return ok, {
        "runs": len(runs),
        "front_rate_violations": violations,
        "class_verification_failures": verify_fail,
        "nonstationary_horizon": horizon,
        "points_checked": len(X),
        "residual_SP_le_half_eps_before_horizon": early,
        "min_residual_SP_before_horizon": float(res.min()),
        "inner_solves_capped": int(np.sum(out["approximate"])),
        "shipped_first_reach": _reach_table(shipped, p.dbar),
    }


@_timed(8, "linear growth in m of the oracle count to reach the last coordinate", 60.0)
def check_scaling(params=None, seed=0, rules=100, max_oracles=500, configs=SCALING_CONFIGS):
    base = params or _c0()
    target = (base.dbar - 2) / RATES[1]
    ms, reach, per_config = [], {}, {}
    ok = True
    for m1, m2 in configs:
        p = replace(base, m1=m1, m2=m2, beta=None) if base.beta_is_default else replace(base, m1=m1, m2=m2)
        shipped = [run_penalty_class1(p, max_oracles=max_oracles), run_alm_class1(p, max_oracles=max_oracles)]
        runs, violations, verify_fail = _front_rate_suite(p, 1, seed, rules, shipped)
        ms.append(p.m)
        for tr in shipped:
            reach.setdefault(tr.algo, []).append(tr.first_reach(p.dbar))
        per_config[f"m={p.m}"] = {"front_rate_violations": violations, "class_verification_failures": verify_fail}
        ok = ok and not violations and not verify_fail
    slopes = {}
    for algo, ts in reach.items():
        if any(t is None for t in ts):
            slopes[algo] = None
            ok = False
            continue
        slope = float(np.polyfit(np.array(ms, float), np.array(ts, float), 1)[0])
        slopes[algo] = slope
        ok = ok and abs(slope - target) <= 0.2 * target
    return ok, {"m": ms, "first_reach_last_coordinate": reach, "slopes": slopes, "target_slope": target, "per_config": per_config}


def consensus_path(params, steps=3000, every=100, start=1.5):
    """Points 1 (x) u along gradient descent on sum_i f_i(u), from u = start * witness threshold.

    They satisfy A x = 0 and Abar x = 0 exactly and their residuals decrease
    below eps, which gives the transfer check points with small residuals.
    """
    p = params
    u = start * witness_threshold(p) * np.ones(p.dbar)
    out = []
    for k in range(steps):
        g = grad_f0(p, np.tile(u, p.m)).reshape(p.m, p.dbar).sum(axis=0)
        u = u - 5.0 * g / (p.m * p.lf)
        if k % every == 0:
            out.append(np.tile(u, p.m))
    return np.array(out)


@_timed(9, "transfer of small residuals to the fully constrained problem", 10.0)
def check_transfer(params=None, seed=0, max_oracles=500):
    p = params or _c0()
    rng = np.random.default_rng(seed)
    cons = consensus_path(p)
    tr1 = [run_penalty_class1(p, max_oracles=max_oracles), run_alm_class1(p, max_oracles=max_oracles)]
    tr2 = run_ladmm_class2(p, max_oracles=max_oracles)
    X1 = np.concatenate([np.array(tr.history.xs) for tr in tr1] + [cons])
    out = residual_P_batch(p, X1)
    hx, gx = ap_components(p, X1)
    ap1 = np.maximum(hx, gx)
    prem1 = out["residual"] <= p.eps
    viol1 = int(np.sum(prem1 & (ap1 > out["residual"] * (1 + 1e-6))))

    jitter = rng.normal(size=(cons.shape[0], p.nbar)) * 1e-3
    X2 = np.concatenate([np.array(tr2.history.xs), cons, cons])
    Y2 = np.concatenate([np.array(tr2.history.ys), np.zeros((cons.shape[0], p.nbar)), jitter])
    out2 = residual_SP_batch(p, X2, Y2)
    hx, gx = ap_components(p, X2)
    ap2 = np.maximum(hx, gx)
    prem2 = out2["residual"] <= p.eps
    viol2 = int(np.sum(prem2 & (ap2 > 2.0 * out2["residual"] * (1 + 1e-6))))
    ok = viol1 == 0 and viol2 == 0
    return ok, {
        "P_points": int(X1.shape[0]),
        "P_premise_points": int(prem1.sum()),
        "P_premise_points_from_algorithm_traces": int(prem1[: X1.shape[0] - cons.shape[0]].sum()),
        "P_violations": viol1,
        "P_max_ratio": float(np.max(ap1[prem1] / out["residual"][prem1])) if prem1.any() else None,
        "SP_points": int(X2.shape[0]),
        "SP_premise_points": int(prem2.sum()),
        "SP_premise_points_from_algorithm_traces": int(prem2[: len(tr2.history.xs)].sum()),
        "SP_violations": viol2,
        "SP_max_ratio": float(np.max(ap2[prem2] / out2["residual"][prem2])) if prem2.any() else None,
        "inner_solves_capped": int(np.sum(out["approximate"]) + np.sum(out2["approximate"])),
    }


@_timed(10, "joint-to-constraint condition number ratio", 5.0)
def check_ratio(params=None, configs=SCALING_CONFIGS):
    base = params or _c0()
    rows = {}
    ok = True
    for m1, m2 in configs:
        p = replace(base, m1=m1, m2=m2, beta=None) if base.beta_is_default else replace(base, m1=m1, m2=m2)
        kj, ka = linops.kappa_joint(p), linops.kappa_A(p)
        bound = 3 * m2 / 4
        rows[f"m1={m1},m2={m2}"] = {"kappa_joint": kj, "kappa_A": ka, "ratio": kj / ka, "bound": bound}
        ok = ok and kj / ka >= bound
    return ok, rows


CHECKS = (
    check_spectrum,
    check_gradients,
    check_prox,
    check_supports,
    check_certificate,
    check_front_rate_class1,
    check_front_rate_class2,
    check_scaling,
    check_transfer,
    check_ratio,
)


def run_all(params=None, seed=0, only=None):
    """Run checks 1-10 (or the numbers in ``only``) and return their results in order."""
    results = []
    for chk in CHECKS:
        if only and chk.number not in only:
            continue
        if chk.number in (1, 10):
            results.append(chk(params))
        else:
            results.append(chk(params, seed=seed))
    return results
