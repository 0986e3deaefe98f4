"""Reference first-order methods run strictly through the metered oracles.

Each method produces a sequence of iterates that belongs to one of the two
algorithm classes, and the full history is kept so that membership can be
re-checked by ``verify_class1`` / ``verify_class2``.

One iteration t of a class member needs the gradient and the Gram products at
the previous iterate and a prox at a freshly formed point. These have
different x arguments, so an iteration uses three oracle calls:

1. at x^(t-1) with z = 0, giving grad f0(x^(t-1)) and A x^(t-1);
2. at x^(t-1) with z = A x^(t-1), giving A^T A x^(t-1)
   (for class 2 the y slot carries Abar x^(t-1), giving Abar^T Abar x^(t-1));
3. at the prox input xi^(t), giving the prox.

Traces are indexed by the iteration t, which is the index in the support-front
bounds, and every record also carries the cumulative oracle count.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import linops
from .instance import f0, g_val, gbar_val
from .oracle import IterateHistory, Oracle, support_front, verify_class1, verify_class2
from .stationarity import ap_components, certificate_lb

__all__ = [
    "DivergenceError",
    "TraceRecord",
    "RunTrace",
    "Step",
    "Choice",
    "run_penalty_class1",
    "run_alm_class1",
    "run_ladmm_class2",
    "run_generic",
    "random_rule",
    "zero_rule",
    "CALLS_PER_ITERATION",
]

CALLS_PER_ITERATION = 3
DIVERGENCE_NORM = 1e12


class DivergenceError(RuntimeError):
    pass


@dataclass
class TraceRecord:
    t: int
    oracle_count: int
    J: int
    J_y: int
    residual_AP: float
    certificate_lb: float
    objective: float


@dataclass
class RunTrace:
    """Per-iteration time series of one run plus its transcript and history."""

    algo: str
    class_id: int
    hyper: dict
    records: list = field(default_factory=list)
    history: IterateHistory = None
    transcript: object = None

    @property
    def fronts(self):
        return [max(r.J, r.J_y) for r in self.records]

    def verify(self, params):
        if self.history is None:
            raise ValueError("history was not retained (streaming mode)")
        fn = verify_class1 if self.class_id == 1 else verify_class2
        report = fn(params, self.history)
        if self.transcript is not None:
            self.transcript.span_residuals = list(report.residuals)
        return report

    def first_reach(self, J):
        """First iteration t at which the support front reaches J, or None."""
        for r in self.records:
            if max(r.J, r.J_y) >= J:
                return r.t
        return None

    def first_eps_stationary(self, eps):
        """First record whose AP residual is at most eps, or None."""
        for r in self.records:
            if r.residual_AP <= eps:
                return r
        return None

    def to_csv(self, path):
        cols = ["t", "oracle_count", "J", "J_y", "residual_AP", "certificate_lb", "objective"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.records:
                w.writerow([getattr(r, c) for c in cols])

    def summary(self):
        last = self.records[-1]
        return {
            "algo": self.algo,
            "class": self.class_id,
            "hyper": self.hyper,
            "iterations": last.t,
            "oracle_calls": last.oracle_count,
            "final_front": max(last.J, last.J_y),
            "final_residual_AP": last.residual_AP,
            "final_certificate_lb": last.certificate_lb,
            "final_objective": last.objective,
        }

    def to_json(self, path, extra=None):
        doc = self.summary()
        if extra:
            doc.update(extra)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)


def _schedule(value):
    return value if callable(value) else (lambda t: value)


class _Recorder:
    def __init__(self, params, algo, class_id, hyper, keep_history):
        self.params = params
        self.oracle = Oracle(params)
        self.trace = RunTrace(algo, class_id, hyper, transcript=self.oracle.transcript)
        if keep_history:
            self.trace.history = IterateHistory(class_id)

    def record(self, t, x, y=None, xi=None, eta=None):
        p = self.params
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            raise DivergenceError(f"{self.trace.algo}: iterate norm exceeded {DIVERGENCE_NORM:g} at t={t}")
        hist = self.trace.history
        if hist is not None:
            hist.xs.append(x.copy())
            if y is not None:
                hist.ys.append(y.copy())
            if t > 0:
                hist.xis.append(xi.copy())
                hist.etas.append(float(eta))
        hx, gx = ap_components(p, x)
        obj = f0(p, x) + (g_val(p, x) if y is None else gbar_val(p, y))
        self.trace.records.append(
            TraceRecord(
                t=t,
                oracle_count=self.oracle.count,
                J=support_front(x, p.dbar),
                J_y=0 if y is None else support_front(y, p.dbar),
                residual_AP=float(max(hx, gx)),
                certificate_lb=certificate_lb(p, x),
                objective=float(obj),
            )
        )

    def budget_left(self, max_oracles):
        return self.oracle.count + CALLS_PER_ITERATION <= max_oracles


def _first_calls1(oracle, x, eta, n):
    b1 = oracle.oracle1(x, np.zeros(n), eta)
    b2 = oracle.oracle1(x, b1.Ax, eta)
    return b1.grad, b2.Atz


def run_penalty_class1(params, rho_schedule=1.0, eta_schedule=None, max_oracles=500, keep_history=True):
    """Proximal gradient on f0 + (rho/2)||Ax||^2 + g, a member of the first class.

    x^(t) = prox_{eta g}(x^(t-1) - eta (grad f0(x^(t-1)) + rho A^T A x^(t-1))),
    started at 0. The default step is 1 / (L_f + rho ||A||^2).
    """
    if max_oracles < 1:
        raise ValueError("max_oracles must be >= 1")
    rho_of = _schedule(rho_schedule)
    norm_a2 = linops.opnorm(params, "A") ** 2
    eta_of = _schedule(eta_schedule) if eta_schedule is not None else (lambda t: 1.0 / (params.lf + rho_of(t) * norm_a2))
    hyper = {"rho": rho_schedule if not callable(rho_schedule) else "schedule"}
    rec = _Recorder(params, "penalty", 1, hyper, keep_history)
    x = np.zeros(params.d)
    rec.record(0, x)
    t = 0
    while rec.budget_left(max_oracles):
        t += 1
        rec.oracle.iteration = t
        rho, eta = rho_of(t), eta_of(t)
        if not (rho >= 0 and eta > 0):
            raise ValueError("schedules must give rho >= 0 and eta > 0")
        grad, ata = _first_calls1(rec.oracle, x, eta, params.n)
        xi = x - eta * (grad + rho * ata)
        x = rec.oracle.oracle1(xi, np.zeros(params.n), eta).prox
        rec.record(t, x, xi=xi, eta=eta)
    return rec.trace


def run_alm_class1(params, penalty=1.0, dual_stepsize=1.0, max_oracles=500, eta_schedule=None, keep_history=True):
    """Linearized proximal augmented Lagrangian, a member of the first class.

    The multiplier is stored as w = A^T z (z^(0) = 0) and updated by
    w += dual_stepsize * penalty * A^T A x using the Gram product already fetched
    for the gradient step, so w stays in the span of past A^T A x^(s). With
    penalty 0 the method is the penalty-free proximal gradient method.
    """
    if max_oracles < 1:
        raise ValueError("max_oracles must be >= 1")
    norm_a2 = linops.opnorm(params, "A") ** 2
    eta_of = _schedule(eta_schedule) if eta_schedule is not None else (lambda t: 1.0 / (params.lf + penalty * norm_a2))
    rec = _Recorder(params, "alm", 1, {"penalty": penalty, "dual_stepsize": dual_stepsize}, keep_history)
    x = np.zeros(params.d)
    w = np.zeros(params.d)
    rec.record(0, x)
    t = 0
    while rec.budget_left(max_oracles):
        t += 1
        rec.oracle.iteration = t
        eta = eta_of(t)
        grad, ata = _first_calls1(rec.oracle, x, eta, params.n)
        if t > 1:
            # dual ascent with the residual of x^(t-1); z^(0) = 0 keeps w = 0 on the first step
            w = w + dual_stepsize * penalty * ata
        xi = x - eta * ((grad + w) + penalty * ata)
        x = rec.oracle.oracle1(xi, np.zeros(params.n), eta).prox
        rec.record(t, x, xi=xi, eta=eta)
    return rec.trace


def run_ladmm_class2(params, penalty=1.0, eta_schedule=None, max_oracles=500, keep_history=True):
    """Linearized ADMM on the splitting problem, a member of the second class.

    Augmented Lagrangian f0(x) + gbar(y) + <lam, Abar x - y> + <mu, A x>
    + (rho/2)(||Abar x - y||^2 + ||A x||^2). Each iteration uses only
    quantities at (x^(t-1), y^(t-1)):

    x^(t) = x^(t-1) - eta (grad f0 + Abar^T lam + A^T mu + rho Abar^T (Abar x - y) + rho A^T A x),
    y^(t) = prox_{gbar / rho}(Abar x^(t-1) + lam / rho),

    followed by the dual steps lam += rho (Abar x^(t) - y^(t)), mu += rho A x^(t)
    once those products are fetched. Abar^T lam and A^T mu are accumulated in
    x-space from Gram products, so no oracle is ever applied to a multiplier.
    """
    if max_oracles < 1:
        raise ValueError("max_oracles must be >= 1")
    rho = float(penalty)
    if not rho > 0:
        raise ValueError("penalty must be positive")
    na2 = linops.opnorm(params, "A") ** 2
    nb2 = linops.opnorm(params, "Abar") ** 2
    eta_of = _schedule(eta_schedule) if eta_schedule is not None else (lambda t: 1.0 / (params.lf + rho * nb2 + rho * na2))
    rec = _Recorder(params, "ladmm", 2, {"penalty": rho}, keep_history)
    p = params
    x = np.zeros(p.d)
    y = np.zeros(p.nbar)
    lam = np.zeros(p.nbar)
    w_lam = np.zeros(p.d)
    w_mu = np.zeros(p.d)
    rec.record(0, x, y)
    t = 0
    while rec.budget_left(max_oracles):
        t += 1
        rec.oracle.iteration = t
        eta = eta_of(t)
        b1 = rec.oracle.oracle2(x, y, np.zeros(p.n), 1.0 / rho)
        b2 = rec.oracle.oracle2(b1.Abarty, b1.Abarx, b1.Ax, 1.0 / rho)
        bb, ata = b2.Abarty, b2.Atz
        if t > 1:
            lam = lam + rho * (b1.Abarx - y)
            w_lam = w_lam + rho * (bb - b1.Abarty)
            w_mu = w_mu + rho * ata
        x_new = x - eta * (b1.grad + w_lam + w_mu + rho * (bb - b1.Abarty) + rho * ata)
        xi = b1.Abarx + lam / rho
        y = rec.oracle.oracle2(x, xi, np.zeros(p.n), 1.0 / rho).prox
        x = x_new
        rec.record(t, x, y, xi=xi, eta=1.0 / rho)
    return rec.trace


@dataclass
class Step:
    """What a generic update rule sees at iteration t.

    ``x_gens`` stacks the permitted x-space generators of all s < t as rows,
    labelled in ``x_labels`` by (kind, s). For class 1 the kinds are
    ``x, grad, AtAx``; for class 2 they are ``x, grad, AtAx, AbarTAbarx, Abarty``
    and ``y_gens`` holds ``y, AbarAbarTy, Abarx``.
    """

    t: int
    class_id: int
    x_gens: np.ndarray
    x_labels: list
    y_gens: np.ndarray = None
    y_labels: list = None


@dataclass
class Choice:
    """Span coefficients returned by a generic rule.

    Class 1: ``xi_coef`` over ``x_gens`` defines xi^(t), and
    x^(t) = a xi^(t) + b prox_{eta g}(xi^(t)).
    Class 2: ``x_coef`` over ``x_gens`` defines x^(t), ``xi_coef`` over ``y_gens``
    defines xi^(t), and y^(t) = a xi^(t) + b prox_{eta gbar}(xi^(t)).
    ``inject`` is added to x^(t) unchecked; it exists to exercise the verifier.
    """

    xi_coef: np.ndarray
    eta: float = 1.0
    a: float = 0.0
    b: float = 1.0
    x_coef: np.ndarray = None
    inject: np.ndarray = None


def run_generic(params, update_rule, class_id, max_oracles=500, keep_history=True, name="generic"):
    """Run an arbitrary class member given by ``update_rule(step) -> Choice``."""
    if class_id not in (1, 2):
        raise ValueError("class_id must be 1 or 2")
    if max_oracles < 1:
        raise ValueError("max_oracles must be >= 1")
    p = params
    rec = _Recorder(p, name, class_id, {"class": class_id}, keep_history)
    x = np.zeros(p.d)
    y = np.zeros(p.nbar) if class_id == 2 else None
    rec.record(0, x, y)
    xg, xl, yg, yl = [], [], [], []
    t = 0
    while rec.budget_left(max_oracles):
        t += 1
        rec.oracle.iteration = t
        if class_id == 1:
            grad, ata = _first_calls1(rec.oracle, x, 1.0, p.n)
            for kind, vec in (("x", x), ("grad", grad), ("AtAx", ata)):
                xg.append(vec)
                xl.append((kind, t - 1))
            choice = update_rule(Step(t, 1, np.array(xg), list(xl)))
            xi = np.asarray(choice.xi_coef, dtype=float) @ np.array(xg)
            prox = rec.oracle.oracle1(xi, np.zeros(p.n), choice.eta).prox
            x = choice.a * xi + choice.b * prox
            if choice.inject is not None:
                x = x + choice.inject
            rec.record(t, x, xi=xi, eta=choice.eta)
        else:
            b1 = rec.oracle.oracle2(x, y, np.zeros(p.n), 1.0)
            b2 = rec.oracle.oracle2(b1.Abarty, b1.Abarx, b1.Ax, 1.0)
            for kind, vec in (("x", x), ("grad", b1.grad), ("AtAx", b2.Atz), ("AbarTAbarx", b2.Abarty), ("Abarty", b1.Abarty)):
                xg.append(vec)
                xl.append((kind, t - 1))
            for kind, vec in (("y", y), ("AbarAbarTy", b2.Abarx), ("Abarx", b1.Abarx)):
                yg.append(vec)
                yl.append((kind, t - 1))
            choice = update_rule(Step(t, 2, np.array(xg), list(xl), np.array(yg), list(yl)))
            x_new = np.asarray(choice.x_coef, dtype=float) @ np.array(xg)
            xi = np.asarray(choice.xi_coef, dtype=float) @ np.array(yg)
            prox = rec.oracle.oracle2(x, xi, np.zeros(p.n), choice.eta).prox
            y = choice.a * xi + choice.b * prox
            x = x_new
            if choice.inject is not None:
                x = x + choice.inject
            rec.record(t, x, y, xi=xi, eta=choice.eta)
    return rec.trace


def zero_rule(step):
    """The rule that always returns the zero combination."""
    k = step.x_gens.shape[0]
    if step.class_id == 1:
        return Choice(xi_coef=np.zeros(k))
    return Choice(xi_coef=np.zeros(step.y_gens.shape[0]), x_coef=np.zeros(k))


def random_rule(params, seed, window=2, scale=None):
    """A randomized class member.

    Each step combines the generators of the last ``window`` iterations with
    Gaussian coefficients (each generator normalized, some dropped at random),
    rescales the result to a random radius on the natural length scale of the
    instance and draws a log-uniform prox step. All of these are span
    coefficients, so the rule stays inside its class.
    """
    rng = np.random.default_rng(seed)
    radius = scale if scale is not None else 150.0 * math.pi * params.eps / (math.sqrt(params.m) * params.lf)

    def combine(gens, labels, t):
        coef = np.zeros(len(labels))
        for k, (_, s) in enumerate(labels):
            if s >= t - window:
                nrm = np.linalg.norm(gens[k])
                if nrm > 0 and rng.random() > 0.2:
                    coef[k] = rng.normal() / nrm
        vec = coef @ gens if len(labels) else None
        nv = 0.0 if vec is None else np.linalg.norm(vec)
        if nv > 0:
            coef *= radius * rng.uniform(0.2, 3.0) / nv
        return coef

    def rule(step):
        eta = float(10 ** rng.uniform(-3, 0))
        a, b = rng.normal(size=2)
        if step.class_id == 1:
            return Choice(xi_coef=combine(step.x_gens, step.x_labels, step.t), eta=eta, a=a, b=b)
        return Choice(
            xi_coef=combine(step.y_gens, step.y_labels, step.t),
            x_coef=combine(step.x_gens, step.x_labels, step.t),
            eta=eta,
            a=a,
            b=b,
        )

    return rule
