"""Matrix-free chain-difference operators H, A, Abar and their spectra.

Row k (1-based, k = 1..m-1) of H maps a block vector to
``m L_f (x_{k+1} - x_k)``; A keeps the rows with k outside M and Abar the rows
with k in M, both in ascending k. Nothing is materialized here.

Adjoints scale their input by ``m L_f`` first and then take block differences.
With that ordering H^T H x equals A^T A x + Abar^T Abar x bitwise, because each
block of the split sum adds a value to an exact zero.
"""

import logging
import math
from functools import lru_cache

import numpy as np

__all__ = [
    "TAGS",
    "in_dim",
    "out_dim",
    "apply",
    "opnorm",
    "eig_HHT",
    "kappa_joint",
    "kappa_A",
    "null_project_H",
    "null_project_A",
    "solve_AAt",
]

logger = logging.getLogger(__name__)

TAGS = (
    "A",
    "Abar",
    "H",
    "A_adj",
    "Abar_adj",
    "H_adj",
    "AtA",
    "AbarTAbar",
    "HtH",
    "AAt",
    "AbarAbarT",
)


def _m(p):
    return 3 * p.m1 * p.m2


def _rows(p, which):
    """0-based row positions (k - 1) of H kept by ``which``."""
    m = _m(p)
    coupled = {i * p.m1 for i in range(1, 3 * p.m2)}
    if which == "H":
        ks = range(1, m)
    elif which == "Abar":
        ks = sorted(coupled)
    else:
        ks = [k for k in range(1, m) if k not in coupled]
    return np.fromiter((k - 1 for k in ks), dtype=int)


def _nrows(p, which):
    m = _m(p)
    if which == "H":
        return m - 1
    if which == "Abar":
        return 3 * p.m2 - 1
    return m - 3 * p.m2


def in_dim(p, tag):
    """Input length of the operator named by ``tag``."""
    m, dbar = _m(p), p.dbar
    base = {"A_adj": "A", "Abar_adj": "Abar", "H_adj": "H", "AAt": "A", "AbarAbarT": "Abar"}
    if tag in base:
        return _nrows(p, base[tag]) * dbar
    if tag in TAGS:
        return m * dbar
    raise ValueError(f"unknown operator tag {tag!r}")


def out_dim(p, tag):
    """Output length of the operator named by ``tag``."""
    m, dbar = _m(p), p.dbar
    if tag in ("A", "Abar", "H", "AAt", "AbarAbarT"):
        return _nrows(p, tag.replace("AAt", "A").replace("AbarAbarT", "Abar")) * dbar
    if tag in TAGS:
        return m * dbar
    raise ValueError(f"unknown operator tag {tag!r}")


def _forward(p, which, x):
    m, dbar = _m(p), p.dbar
    xb = x.reshape(x.shape[:-1] + (m, dbar))
    diff = p.lf * m * (xb[..., 1:, :] - xb[..., :-1, :])
    if which != "H":
        diff = diff[..., _rows(p, which), :]
    return diff.reshape(x.shape[:-1] + (-1,))


def _adjoint(p, which, r):
    m, dbar = _m(p), p.dbar
    rb = r.reshape(r.shape[:-1] + (_nrows(p, which), dbar))
    s = np.zeros(r.shape[:-1] + (m + 1, dbar))
    # s[k] holds the scaled row k (1-based); s[0] and s[m] stay zero
    s[..., 1 + _rows(p, which), :] = p.lf * m * rb
    out = s[..., :-1, :] - s[..., 1:, :]
    return out.reshape(r.shape[:-1] + (-1,))


def apply(p, tag, v):
    """Apply the operator named by ``tag`` to ``v`` (leading batch axes allowed).

    Parameters
    ----------
    p : InstanceParams
        Any object with ``m1``, ``m2``, ``dbar`` and ``lf`` attributes.
    tag : str
        One of ``TAGS``.
    v : array_like
        Input whose trailing length is ``in_dim(p, tag)``.

    Returns
    -------
    numpy.ndarray
        Output of trailing length ``out_dim(p, tag)``.
    """
    v = np.asarray(v, dtype=float)
    n_in = in_dim(p, tag)
    if v.shape[-1] != n_in:
        raise ValueError(f"{tag} expects trailing length {n_in}, got {v.shape[-1]}")
    if tag in ("A", "Abar", "H"):
        return _forward(p, tag, v)
    if tag.endswith("_adj"):
        return _adjoint(p, tag[:-4], v)
    if tag == "AtA":
        return _adjoint(p, "A", _forward(p, "A", v))
    if tag == "AbarTAbar":
        return _adjoint(p, "Abar", _forward(p, "Abar", v))
    if tag == "HtH":
        return _adjoint(p, "H", _forward(p, "H", v))
    if tag == "AAt":
        return _forward(p, "A", _adjoint(p, "A", v))
    return _forward(p, "Abar", _adjoint(p, "Abar", v))


def _lcg_start(n, seed=12345):
    """All-ones vector perturbed by a 32-bit linear congruential sequence."""
    state = seed
    vals = np.empty(n)
    for k in range(n):
        state = (1664525 * state + 1013904223) % 2**32
        vals[k] = state / 2**32 - 0.5
    return 1.0 + 0.1 * vals


def _power(gram, n, tol=1e-10, max_iter=100_000):
    v = _lcg_start(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = gram(v)
        new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(new - lam) <= tol * abs(new):
            logger.debug("power iteration converged in %d steps", it)
            return new
        lam = new
    raise RuntimeError(f"power iteration did not converge in {max_iter} iterations")


@lru_cache(maxsize=256)
def _opnorm_cached(m1, m2, dbar, lf, tag):
    from types import SimpleNamespace

    p = SimpleNamespace(m1=m1, m2=m2, dbar=dbar, lf=lf)
    base = {"A_adj": "A", "Abar_adj": "Abar", "H_adj": "H"}.get(tag, tag)
    if base in ("A", "Abar", "H"):
        gram = {"A": "AAt", "Abar": "AbarAbarT", "H": None}[base]
        if gram is None:
            lam = _power(lambda u: apply(p, "H", apply(p, "H_adj", u)), out_dim(p, "H"))
        else:
            lam = _power(lambda u: apply(p, gram, u), in_dim(p, gram))
        return math.sqrt(lam)
    # Gram operators are symmetric positive semidefinite: the norm is the top eigenvalue
    return _power(lambda u: apply(p, tag, u), in_dim(p, tag))


def opnorm(p, tag):
    """Largest singular value by power iteration on the Gram operator.

    The start vector is deterministic, so repeated calls return identical
    floats. Relative tolerance 1e-10 on successive Rayleigh quotients.
    """
    if tag not in TAGS:
        raise ValueError(f"unknown operator tag {tag!r}")
    return _opnorm_cached(int(p.m1), int(p.m2), int(p.dbar), float(p.lf), tag)


def eig_HHT(p, i):
    """Closed-form i-th eigenvalue 4 m^2 L_f^2 sin^2(i pi / (2m)) of the chain Gram.

    Each value has multiplicity dbar in H H^T; i = m - 1 is the largest.
    """
    m = _m(p)
    if not 1 <= i <= m - 1:
        raise ValueError(f"eigenvalue index {i} outside 1..{m - 1}")
    return 4.0 * m**2 * p.lf**2 * math.sin(i * math.pi / (2 * m)) ** 2


def kappa_joint(p):
    """Condition number of the stacked operator [Abar; A], equal to that of H."""
    m = _m(p)
    return math.sin((m - 1) * math.pi / (2 * m)) / math.sin(math.pi / (2 * m))


def solve_AAt(p, r):
    """Solve A A^T g = r using its block structure.

    Within each group of m1 consecutive blocks the rows of A form a chain of
    length m1 - 1, so A A^T = m^2 L_f^2 blockdiag(T) (x) I with T the
    tridiagonal matrix (-1, 2, -1) of size m1 - 1.
    """
    r = np.asarray(r, dtype=float)
    m, dbar, m1 = _m(p), p.dbar, p.m1
    q = m1 - 1
    t = 2.0 * np.eye(q) - np.eye(q, k=1) - np.eye(q, k=-1)
    rb = r.reshape(r.shape[:-1] + (3 * p.m2, q, dbar))
    sol = np.linalg.solve(t, rb.reshape(-1, q, dbar)).reshape(rb.shape)
    return sol.reshape(r.shape) / (m * p.lf) ** 2


def kappa_A(p, tol=1e-9, max_iter=100_000):
    """Condition number sqrt(lambda_max / lambda_min) of A A^T.

    A has full row rank, so the smallest positive eigenvalue is the smallest
    one. For m1 = 2 the Gram is 2 m^2 L_f^2 I and the answer is 1; otherwise
    power iteration gives lambda_max and inverse iteration lambda_min.
    """
    if p.m1 == 2:
        return 1.0
    n = in_dim(p, "AAt")
    lam_max = _power(lambda u: apply(p, "AAt", u), n, tol=tol, max_iter=max_iter)
    mu = _power(lambda u: solve_AAt(p, u), n, tol=tol, max_iter=max_iter)
    return math.sqrt(lam_max * mu)


def null_project_H(p, v):
    """Orthogonal projection onto Null(H): every block replaced by the block average.

    A coordinate whose entries already agree across blocks is returned as is,
    so the projection fixes Null(H) bit-exactly and is exactly idempotent.
    """
    v = np.asarray(v, dtype=float)
    m, dbar = _m(p), p.dbar
    vb = v.reshape(v.shape[:-1] + (m, dbar))
    acc = np.zeros(v.shape[:-1] + (dbar,))
    for i in range(m):
        acc = acc + vb[..., i, :]
    same = np.all(vb == vb[..., :1, :], axis=-2)
    avg = np.where(same, vb[..., 0, :], acc / m)
    return np.broadcast_to(avg[..., None, :], vb.shape).reshape(v.shape).copy()


def null_project_A(p, v):
    """Orthogonal projection onto Null(A): blocks averaged within each group of m1.

    Entries that already agree within a group are kept bit-exactly.
    """
    v = np.asarray(v, dtype=float)
    m1, dbar = p.m1, p.dbar
    vb = v.reshape(v.shape[:-1] + (3 * p.m2, m1, dbar))
    acc = np.zeros(v.shape[:-1] + (3 * p.m2, dbar))
    for k in range(m1):
        acc = acc + vb[..., k, :]
    same = np.all(vb == vb[..., :1, :], axis=-2)
    avg = np.where(same, vb[..., 0, :], acc / m1)
    return np.broadcast_to(avg[..., None, :], vb.shape).reshape(v.shape).copy()
