"""Metered first-order oracles, support fronts and algorithm-class membership checks."""

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import linops
from .instance import grad_f0
from .prox import prox_g, prox_gbar

__all__ = [
    "Bundle1",
    "Bundle2",
    "CallRecord",
    "OracleTranscript",
    "Oracle",
    "IterateHistory",
    "SpanReport",
    "support_front",
    "verify_class1",
    "verify_class2",
    "SPAN_TOL",
]

SPAN_TOL = 1e-8


class Bundle1:
    """Output of the first oracle: gradient, A x, A^T z and prox of eta g at x.

    Components are evaluated on first access; the call is metered once either way.
    """

    def __init__(self, params, x, z, eta):
        self._p, self._x, self._z, self._eta = params, x, z, eta

    @cached_property
    def grad(self):
        return grad_f0(self._p, self._x)

    @cached_property
    def Ax(self):
        return linops.apply(self._p, "A", self._x)

    @cached_property
    def Atz(self):
        return linops.apply(self._p, "A_adj", self._z)

    @cached_property
    def prox(self):
        return prox_g(self._p, self._x, self._eta)


class Bundle2:
    """Output of the second oracle: gradient, Abar x, A x, Abar^T y, A^T z, prox of eta gbar at y."""

    def __init__(self, params, x, y, z, eta):
        self._p, self._x, self._y, self._z, self._eta = params, x, y, z, eta

    @cached_property
    def grad(self):
        return grad_f0(self._p, self._x)

    @cached_property
    def Abarx(self):
        return linops.apply(self._p, "Abar", self._x)

    @cached_property
    def Ax(self):
        return linops.apply(self._p, "A", self._x)

    @cached_property
    def Abarty(self):
        return linops.apply(self._p, "Abar_adj", self._y)

    @cached_property
    def Atz(self):
        return linops.apply(self._p, "A_adj", self._z)

    @cached_property
    def prox(self):
        return prox_gbar(self._p, self._y, self._eta)


@dataclass
class CallRecord:
    kind: int
    digest: str
    eta: float
    front: int
    iteration: int


@dataclass
class OracleTranscript:
    """Ordered log of oracle calls."""

    calls: list = field(default_factory=list)
    span_residuals: list = None

    @property
    def count(self):
        return len(self.calls)

    def to_jsonl(self, path):
        """Write one JSON record per call: {t, kind, eta, J, span_residual}.

        ``t`` is the iteration the call contributes to and ``J`` the support
        front of the call's x argument. ``span_residual`` is the verifier's
        residual for that iteration when verification has been run, else null.
        """
        res = self.span_residuals
        with open(path, "w") as fh:
            for rec in self.calls:
                t = rec.iteration
                span = None
                if res is not None and 1 <= t <= len(res):
                    span = res[t - 1]
                row = {"t": t, "kind": rec.kind, "eta": rec.eta, "J": rec.front, "span_residual": span}
                fh.write(json.dumps(row) + "\n")


def _digest(*arrays):
    h = hashlib.sha1()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()[:16]


def support_front(x, dbar):
    """Largest 1-based coordinate index that is nonzero in some block (0 for x = 0).

    The test is exact: any value different from 0.0 counts.
    """
    x = np.asarray(x, dtype=float)
    active = (x.reshape(-1, dbar) != 0.0).any(axis=0)
    idx = np.flatnonzero(active)
    return int(idx[-1] + 1) if idx.size else 0


class Oracle:
    """Metered access to the two oracles of the instance.

    Every call increments the transcript by one, whatever the caller uses.
    ``iteration`` is a caller-maintained tag copied into each call record.
    """

    def __init__(self, params, transcript=None):
        self.params = params
        self.transcript = OracleTranscript() if transcript is None else transcript
        self.iteration = 0

    @property
    def count(self):
        return self.transcript.count

    def _check(self, vec, length, name):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (length,):
            raise ValueError(f"{name} must have shape ({length},), got {vec.shape}")
        return vec

    def _log(self, kind, eta, x, *others):
        self.transcript.calls.append(
            CallRecord(kind, _digest(x, *others), float(eta), support_front(x, self.params.dbar), self.iteration)
        )

    def oracle1(self, x, z, eta):
        p = self.params
        if not eta > 0:
            raise ValueError(f"eta must be positive, got {eta}")
        x = self._check(x, p.d, "x")
        z = self._check(z, p.n, "z")
        self._log(1, eta, x, z)
        return Bundle1(p, x.copy(), z.copy(), eta)

    def oracle2(self, x, y, z, eta):
        p = self.params
        if not eta > 0:
            raise ValueError(f"eta must be positive, got {eta}")
        x = self._check(x, p.d, "x")
        y = self._check(y, p.nbar, "y")
        z = self._check(z, p.n, "z")
        self._log(2, eta, x, y, z)
        return Bundle2(p, x.copy(), y.copy(), z.copy(), eta)


@dataclass
class IterateHistory:
    """Iterates of one run, enough to re-derive every permitted span.

    For class 1, ``xis[t-1]`` is the point at which the prox of iteration t was
    taken; for class 2 it is the y-side prox input. ``etas[t-1]`` is that
    prox step. ``xs[0]`` (and ``ys[0]``) is the starting point.
    """

    class_id: int
    xs: list = field(default_factory=list)
    ys: list = field(default_factory=list)
    xis: list = field(default_factory=list)
    etas: list = field(default_factory=list)


@dataclass
class SpanReport:
    passed: bool
    residuals: list
    first_failure: int = None

    @property
    def max_residual(self):
        return max(self.residuals, default=0.0)


class _Span:
    """Incrementally grown orthonormal basis (Gram-Schmidt with reorthogonalization)."""

    def __init__(self, dim):
        self.dim = dim
        self.q = np.zeros((dim, 0))

    @property
    def full(self):
        return self.q.shape[1] >= self.dim

    def add(self, v, drop=1e-13):
        if self.full:
            return
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return
        r = v / nv
        for _ in range(2):
            r = r - self.q @ (self.q.T @ r)
        nr = np.linalg.norm(r)
        if nr > drop:
            self.q = np.column_stack([self.q, r / nr])

    def distance(self, v):
        v = np.asarray(v, dtype=float)
        if self.full:
            return 0.0
        r = v - self.q @ (self.q.T @ v)
        r = r - self.q @ (self.q.T @ r)
        return float(np.linalg.norm(r))


def _two_span_distance(v, a, b):
    g = np.column_stack([a, b])
    if not np.any(g):
        return float(np.linalg.norm(v))
    coef, *_ = np.linalg.lstsq(g, v, rcond=None)
    return float(np.linalg.norm(g @ coef - v))


def _rel(dist, target):
    return dist / (1.0 + float(np.linalg.norm(target)))


def verify_class1(params, history, tol=SPAN_TOL):
    """Check every iterate against the first algorithm class.

    For each t: xi^(t) must lie in span{x^(s), grad f0(x^(s)), A^T A x^(s) : s < t}
    and x^(t) in span{xi^(t), prox_{eta_t g}(xi^(t))}. Generators are recomputed
    from the stored iterates, not read from the oracle outputs. The residual of
    step t is the larger of the two distances, each divided by 1 + the target norm.
    """
    if history.class_id != 1:
        raise ValueError("history does not belong to a class-1 run")
    xs, xis, etas = history.xs, history.xis, history.etas
    if len(xis) != len(xs) - 1 or len(etas) != len(xis):
        raise ValueError("iterate history is truncated")
    span = _Span(params.d)
    residuals = []
    first = None
    for t in range(1, len(xs)):
        prev = xs[t - 1]
        span.add(prev)
        span.add(grad_f0(params, prev))
        span.add(linops.apply(params, "AtA", prev))
        xi = xis[t - 1]
        r1 = _rel(span.distance(xi), xi)
        r2 = _rel(_two_span_distance(xs[t], xi, prox_g(params, xi, etas[t - 1])), xs[t])
        r = max(r1, r2)
        residuals.append(r)
        if r > tol and first is None:
            first = t
    return SpanReport(first is None, residuals, first)


def verify_class2(params, history, tol=SPAN_TOL):
    """Check every iterate pair against the second algorithm class.

    x^(t) in span{x^(s), grad f0(x^(s)), A^T A x^(s), Abar^T Abar x^(s), Abar^T y^(s) : s < t};
    xi^(t) in span{y^(s), Abar Abar^T y^(s), Abar x^(s) : s < t};
    y^(t) in span{xi^(t), prox_{eta_t gbar}(xi^(t))}.
    """
    if history.class_id != 2:
        raise ValueError("history does not belong to a class-2 run")
    xs, ys, xis, etas = history.xs, history.ys, history.xis, history.etas
    if not (len(ys) == len(xs) and len(xis) == len(xs) - 1 and len(etas) == len(xis)):
        raise ValueError("iterate history is truncated")
    xspan = _Span(params.d)
    yspan = _Span(params.nbar)
    residuals = []
    first = None
    for t in range(1, len(xs)):
        px, py = xs[t - 1], ys[t - 1]
        xspan.add(px)
        xspan.add(grad_f0(params, px))
        xspan.add(linops.apply(params, "AtA", px))
        xspan.add(linops.apply(params, "AbarTAbar", px))
        xspan.add(linops.apply(params, "Abar_adj", py))
        yspan.add(py)
        yspan.add(linops.apply(params, "AbarAbarT", py))
        yspan.add(linops.apply(params, "Abar", px))
        xi = xis[t - 1]
        r1 = _rel(xspan.distance(xs[t]), xs[t])
        r2 = _rel(yspan.distance(xi), xi)
        r3 = _rel(_two_span_distance(ys[t], xi, prox_gbar(params, xi, etas[t - 1])), ys[t])
        r = max(r1, r2, r3)
        residuals.append(r)
        if r > tol and first is None:
            first = t
    return SpanReport(first is None, residuals, first)
