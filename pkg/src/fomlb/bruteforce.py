"""Independent desk-scale oracles used to check the structured code paths.

Nothing here is fast and nothing here reuses the closed forms it is meant to
check: operators are materialized column by column, eigenvalues come from a
cyclic Jacobi sweep, prox maps from golden-section search.
"""

import math

import numpy as np

from . import linops

__all__ = [
    "dense",
    "fd_grad",
    "jacobi_eigh",
    "eig_dense",
    "golden_section",
    "prox_numeric",
    "lipschitz_probe",
    "grid_min_residual_P",
]

MAX_DENSE = 2048
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def dense(params, tag):
    """Materialize an operator by applying it to every basis vector.

    Besides the operator tags of ``linops``, ``"HHT"`` gives H H^T, formed
    from the dense H.
    """
    if params.m * params.dbar > MAX_DENSE:
        raise ValueError(f"dense materialization limited to m*dbar <= {MAX_DENSE}")
    if tag == "HHT":
        h = dense(params, "H")
        return h @ h.T
    n_in = linops.in_dim(params, tag)
    return linops.apply(params, tag, np.eye(n_in)).T


def fd_grad(fn, point, step=1e-5):
    """Central-difference gradient of a scalar function.

    ``fn`` may accept a batch (rows are points); all 2n perturbed points are
    then evaluated in one call.
    """
    point = np.asarray(point, dtype=float)
    if not step > 0:
        raise ValueError("step must be positive")
    n = point.size
    e = np.eye(n) * step
    pts = np.concatenate([point + e, point - e])
    try:
        vals = np.asarray(fn(pts), dtype=float)
        if vals.shape != (2 * n,):
            raise ValueError
    except (ValueError, TypeError):
        vals = np.array([fn(q) for q in pts], dtype=float)
    return (vals[:n] - vals[n:]) / (2.0 * step)


def jacobi_eigh(a, tol=1e-11, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted ascending.

    Sweeps stop when the off-diagonal Frobenius norm is at most ``tol`` times
    the Frobenius norm of the input.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("square matrix required")
    n = a.shape[0]
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = math.sqrt(2.0) * np.linalg.norm(np.triu(a, 1))
        if off <= tol * scale:
            return np.sort(np.diag(a))
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * scale:
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e100:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
    raise RuntimeError("Jacobi eigensolver did not converge")


def eig_dense(params, tag, tol=1e-11):
    """Full sorted spectrum of a (symmetric) Gram operator from its dense matrix."""
    return jacobi_eigh(dense(params, tag), tol=tol)


def golden_section(diff_fn, lo, hi, tol=1e-10, max_iter=400):
    """Vectorized golden-section search for the minimizers of unimodal functions.

    ``diff_fn(u, v)`` must return f(u) - f(v) elementwise; working with the
    difference instead of two separate values keeps comparisons accurate near
    a smooth minimum, where f(u) and f(v) agree to many digits.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    a, b = lo.copy(), hi.copy()
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    for _ in range(max_iter):
        if np.all(b - a <= tol * (1.0 + np.abs(a) + np.abs(b))):
            break
        left = diff_fn(c, d) < 0.0
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c = b - INV_PHI * (b - a)
        d = a + INV_PHI * (b - a)
    return 0.5 * (a + b)


def _prox_1d(y, c):
    # minimize 0.5 (z - y)^2 + c |z|
    def diff(u, v):
        return 0.5 * (u - v) * (u + v - 2.0 * y) + c * (np.abs(u) - np.abs(v))

    width = np.abs(y) + c + 1.0
    return golden_section(diff, y - width, y + width)


def _prox_pair(a, b, c):
    # minimize 0.5 (z1 - a)^2 + 0.5 (z2 - b)^2 + c |z1 - z2|; in the rotated
    # coordinates s = (z1 + z2)/2, r = z1 - z2 the objective splits into
    # (s - (a+b)/2)^2 + (r - (a-b))^2 / 4 + c |r| up to a constant
    mid = 0.5 * (a + b)
    gap = a - b

    def diff_s(u, v):
        return (u - v) * (u + v - 2.0 * mid)

    def diff_r(u, v):
        return 0.25 * (u - v) * (u + v - 2.0 * gap) + c * (np.abs(u) - np.abs(v))

    ws = np.abs(mid) + 1.0
    wr = np.abs(gap) + 2.0 * c + 1.0
    s = golden_section(diff_s, mid - ws, mid + ws)
    r = golden_section(diff_r, gap - wr, gap + wr)
    return s + 0.5 * r, s - 0.5 * r


def prox_numeric(params, which, point, eta):
    """Prox of eta*g (``which="g"``) or eta*gbar (``"gbar"``) by numeric minimization."""
    point = np.asarray(point, dtype=float)
    if which == "gbar":
        return _prox_1d(point, eta * params.beta / (params.m * params.lf))
    if which != "g":
        raise ValueError(f"unknown prox {which!r}")
    xb = point.reshape(point.shape[:-1] + (params.m, params.dbar)).copy()
    c = eta * params.beta
    for i in params.M:
        za, zb = _prox_pair(xb[..., i - 1, :], xb[..., i, :], c)
        xb[..., i - 1, :] = za
        xb[..., i, :] = zb
    return xb.reshape(point.shape)


def lipschitz_probe(fn_grad, dim, trials, seed=0, center_scale=1.0, step_scales=(1e-3, 1e1)):
    """Largest observed ratio ||G(x) - G(x')|| / ||x - x'|| over random pairs.

    Base points are Gaussian with standard deviation ``center_scale``. The
    direction x' - x has 1, 2, 3 or ``dim`` nonzero entries (chosen uniformly)
    with random signs, so that sparse directions aligned with coupled
    coordinates are sampled often; its length is log-uniform in
    ``step_scales``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=center_scale, size=(trials, dim))
    direction = np.zeros((trials, dim))
    counts = rng.choice([1, 2, 3, dim], size=trials)
    for k in range(trials):
        idx = rng.choice(dim, size=counts[k], replace=False)
        direction[k, idx] = rng.choice([-1.0, 1.0], size=counts[k]) * rng.uniform(0.5, 1.0, size=counts[k])
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    lengths = 10 ** rng.uniform(math.log10(step_scales[0]), math.log10(step_scales[1]), size=trials)
    xp = x + lengths[:, None] * direction
    num = np.linalg.norm(np.asarray(fn_grad(x)) - np.asarray(fn_grad(xp)), axis=1)
    den = np.linalg.norm(x - xp, axis=1)
    return float(np.max(num / den))


def grid_min_residual_P(params, x, points=41, rounds=12):
    """Brute-force value of min over the box of ||P_{Null A}(grad f0(x) + Abar^T u)||.

    Every operator acts coordinate by coordinate (Kronecker product with the
    identity), so the squared objective is a sum over the dbar coordinates and
    each coordinate's multipliers (one per coupled pair) are gridded on their
    own. The grid has ``points`` values per multiplier; each round recenters it
    on the best point and shrinks it by a factor four. Intended for tiny
    instances (at most 4 coupled pairs).
    """
    from .instance import grad_f0

    v = grad_f0(params, x)
    c = params.beta / (params.m * params.lf)
    ax = linops.apply(params, "Abar", x)
    lo = np.where(ax == 0.0, -c, c * np.sign(ax))
    hi = np.where(ax == 0.0, c, c * np.sign(ax))
    pairs = 3 * params.m2 - 1
    if pairs > 4:
        raise ValueError(f"{pairs} coupled pairs is too many for a grid search")
    mat = dense(params, "Abar_adj")
    total = 0.0
    for j in range(params.dbar):
        idx = np.arange(pairs) * params.dbar + j
        rows = np.arange(params.m) * params.dbar + j
        sub = mat[np.ix_(rows, idx)]
        vj = v[rows]

        def value(us):
            w = vj[None, :] + us @ sub.T
            return np.linalg.norm(_group_center(params, w), axis=1)

        center = 0.5 * (lo[idx] + hi[idx])
        half = 0.5 * (hi[idx] - lo[idx])
        best = float(value(np.clip(np.zeros((1, pairs)), lo[idx], hi[idx]))[0])
        for _ in range(rounds):
            if not np.any(half > 0):
                break
            axes = [np.linspace(center[k] - half[k], center[k] + half[k], points) for k in range(pairs)]
            mesh = np.meshgrid(*axes, indexing="ij")
            us = np.clip(np.stack([g.ravel() for g in mesh], axis=1), lo[idx], hi[idx])
            vals = value(us)
            k = int(np.argmin(vals))
            best = min(best, float(vals[k]))
            center = us[k]
            half = half / 4.0
        total += best**2
    return float(np.sqrt(total))


def _group_center(params, w):
    # projection onto Null(A) for one coordinate: average within each group of m1 blocks
    g = w.reshape(w.shape[0], 3 * params.m2, params.m1)
    return (g.mean(axis=2, keepdims=True) * np.ones_like(g)).reshape(w.shape)
