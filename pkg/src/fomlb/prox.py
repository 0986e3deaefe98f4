"""Closed-form proximal maps of the pairwise coupling g and of the scaled l1 norm gbar."""

import numpy as np

from .instance import as_blocks

__all__ = ["prox_g", "prox_gbar", "two_point_prox", "soft_threshold", "prox_check"]


def two_point_prox(a, b, c):
    """Minimizer of 0.5 (z1 - a)^2 + 0.5 (z2 - b)^2 + c |z1 - z2|, elementwise.

    If |a - b| <= 2c both points meet at the average; otherwise each moves by
    c toward the other. The tie |a - b| = 2c takes the averaging branch.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = a - b
    meet = np.abs(diff) <= 2.0 * c
    avg = 0.5 * (a + b)
    shift = c * np.sign(diff)
    return np.where(meet, avg, a - shift), np.where(meet, avg, b + shift)


def soft_threshold(y, c):
    """sign(y) * max(|y| - c, 0); returns an exact zero when |y| <= c."""
    y = np.asarray(y, dtype=float)
    return np.where(np.abs(y) <= c, 0.0, y - c * np.sign(y))


def prox_g(params, x, eta):
    """Proximal map of eta * g, with g(x) = beta * sum_{i in M} ||x_i - x_{i+1}||_1.

    Parameters
    ----------
    params : InstanceParams
    x : array_like
        Flat point(s) of trailing length d.
    eta : float
        Step, > 0.

    Returns
    -------
    numpy.ndarray
        Same shape as ``x``. Blocks outside the coupled pairs are copied.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    x = np.asarray(x, dtype=float)
    xb = as_blocks(params, x)
    out = xb.copy()
    c = eta * params.beta
    left = np.asarray(params.M) - 1
    za, zb = two_point_prox(xb[..., left, :], xb[..., left + 1, :], c)
    out[..., left, :] = za
    out[..., left + 1, :] = zb
    return out.reshape(x.shape)


def prox_gbar(params, y, eta):
    """Proximal map of eta * gbar: soft-threshold at eta * beta / (m L_f)."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != params.nbar:
        raise ValueError(f"expected trailing length {params.nbar}, got {y.shape[-1]}")
    return soft_threshold(y, eta * params.beta / (params.m * params.lf))


def prox_check(params, which, point, eta, candidate=None):
    """Optimality residual dist(0, dphi(z) + (z - point) / eta) at a candidate prox point.

    ``which`` is ``"g"`` or ``"gbar"``. When ``candidate`` is omitted the
    closed-form prox output is checked. For g the subdifferential is
    Abar^T times the box subdifferential of gbar at Abar z; each coupled pair
    contributes one scalar multiplier per coordinate, so the inner minimization
    is a clipped one-dimensional least squares solved exactly.
    """
    point = np.asarray(point, dtype=float)
    c = params.beta / (params.m * params.lf)
    if which == "gbar":
        z = prox_gbar(params, point, eta) if candidate is None else np.asarray(candidate, float)
        w = (z - point) / eta
        res = np.where(z != 0.0, np.abs(c * np.sign(z) + w), np.maximum(np.abs(w) - c, 0.0))
        return float(np.linalg.norm(res))
    if which != "g":
        raise ValueError(f"unknown prox {which!r}")
    z = prox_g(params, point, eta) if candidate is None else np.asarray(candidate, float)
    zb = as_blocks(params, z)
    wb = as_blocks(params, (z - point) / eta).copy()
    mlf = params.m * params.lf
    left = np.asarray(params.M) - 1
    wa, wnext = wb[..., left, :], wb[..., left + 1, :]
    gap = zb[..., left + 1, :] - zb[..., left, :]
    lo = np.where(gap == 0.0, -c, c * np.sign(gap))
    hi = np.where(gap == 0.0, c, c * np.sign(gap))
    u = np.clip((wa - wnext) / (2.0 * mlf), lo, hi)
    wb[..., left, :] = wa - mlf * u
    wb[..., left + 1, :] = wnext + mlf * u
    return float(np.linalg.norm(wb))
