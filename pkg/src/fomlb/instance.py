"""Hard instance construction: parameters, smooth chain functions, nonsmooth terms.

A point ``x`` of the instance lives in R^d with d = m * dbar and is stored as a
flat array; ``as_blocks`` reshapes it to ``(..., m, dbar)`` so that block i is
``x[..., i, :]``. Every function here accepts leading batch dimensions.

Zeros are kept exact on purpose: ``psi`` and ``psi_prime`` return literal 0.0
for u <= 0 and the gradient formulas select per-case expressions instead of
multiplying by masks, so that support sets survive floating point.
"""

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "InstanceParams",
    "as_blocks",
    "psi",
    "psi_prime",
    "phi",
    "phi_prime",
    "h",
    "grad_h",
    "f",
    "grad_f",
    "f0",
    "grad_f0",
    "g_val",
    "gbar_val",
    "delta_f0_upper",
    "beta_lower_bound",
]

PSI_ONE = -math.expm1(-1.0)


@dataclass(frozen=True)
class InstanceParams:
    """Parameters of the hard instance.

    Parameters
    ----------
    eps : float
        Target accuracy, in (0, 1).
    lf : float
        Gradient Lipschitz modulus of the smooth part, > 0.
    m1, m2 : int
        Chain shape; m = 3 * m1 * m2 blocks, m1 >= 2, m1 * m2 even.
    dbar : int
        Block length, odd and >= 5.
    beta : float or None
        Weight of the l1 coupling. ``None`` selects 1.05 times the lower bound
        (50 pi + 1 + ||A||) sqrt(m) eps.
    """

    eps: float
    lf: float
    m1: int
    m2: int
    dbar: int
    beta: float = None
    beta_is_default: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        if not (isinstance(self.m1, (int, np.integer)) and isinstance(self.m2, (int, np.integer))):
            raise ValueError("m1 and m2 must be integers")
        if self.m1 < 2 or self.m2 < 1:
            raise ValueError(f"need m1 >= 2 and m2 >= 1, got m1={self.m1}, m2={self.m2}")
        if (self.m1 * self.m2) % 2:
            raise ValueError(f"m1*m2 must be even, got {self.m1 * self.m2}")
        if not isinstance(self.dbar, (int, np.integer)) or self.dbar < 5 or self.dbar % 2 == 0:
            raise ValueError(f"dbar must be an odd integer >= 5, got {self.dbar}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not self.lf > 0.0:
            raise ValueError(f"lf must be positive, got {self.lf}")
        if self.m % 3:
            raise ValueError("m must be divisible by 3")
        bound = beta_lower_bound(self)
        if self.beta is None:
            object.__setattr__(self, "beta", 1.05 * bound)
            object.__setattr__(self, "beta_is_default", True)
        elif not float(self.beta) > bound:
            raise ValueError(
                f"beta={self.beta} violates beta > (50*pi + 1 + ||A||)*sqrt(m)*eps = {bound!r}"
            )
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def m(self):
        return 3 * self.m1 * self.m2

    @property
    def d(self):
        return self.m * self.dbar

    @property
    def n(self):
        return (self.m - 3 * self.m2) * self.dbar

    @property
    def nbar(self):
        return (3 * self.m2 - 1) * self.dbar

    @property
    def M(self):
        """Coupled pair indices (1-based): i * m1 for i = 1..3 m2 - 1."""
        return tuple(i * self.m1 for i in range(1, 3 * self.m2))

    @property
    def Mc(self):
        """Constraint row indices (1-based): {1..m-1} minus M."""
        coupled = set(self.M)
        return tuple(k for k in range(1, self.m) if k not in coupled)

    @cached_property
    def block_group(self):
        """Group id per block (0-based): 0, 1, 2 for the first, middle, last third."""
        third = self.m // 3
        return np.repeat(np.arange(3), third)

    @property
    def scale_in(self):
        """Argument scaling sqrt(m) L_f / (150 pi eps) of f_i."""
        return math.sqrt(self.m) * self.lf / (150.0 * math.pi * self.eps)

    @property
    def scale_out(self):
        """Value scaling 300 pi eps^2 / (m L_f) of f_i."""
        return 300.0 * math.pi * self.eps**2 / (self.m * self.lf)

    @property
    def scale_grad(self):
        """Gradient scaling 2 eps / sqrt(m), the product of the two above."""
        return 2.0 * self.eps / math.sqrt(self.m)

    def to_dict(self):
        return {
            "eps": self.eps,
            "lf": self.lf,
            "m1": int(self.m1),
            "m2": int(self.m2),
            "dbar": int(self.dbar),
            "beta": None if self.beta_is_default else self.beta,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        return cls(
            eps=float(doc["eps"]),
            lf=float(doc["lf"]),
            m1=int(doc["m1"]),
            m2=int(doc["m2"]),
            dbar=int(doc["dbar"]),
            beta=None if doc.get("beta") is None else float(doc["beta"]),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def beta_lower_bound(params):
    """Return (50 pi + 1 + ||A||) sqrt(m) eps, the strict lower bound on beta."""
    from .linops import opnorm

    return (50.0 * math.pi + 1.0 + opnorm(params, "A")) * math.sqrt(params.m) * params.eps


def as_blocks(params, x):
    """View a flat point of length m * dbar as ``(..., m, dbar)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.d:
        raise ValueError(f"expected trailing length {params.d}, got {x.shape[-1]}")
    return x.reshape(x.shape[:-1] + (params.m, params.dbar))


def psi(u):
    """0 for u <= 0, 1 - exp(-u^2) otherwise (literal 0.0 on the first branch)."""
    u = np.asarray(u, dtype=float)
    out = np.where(u > 0.0, -np.expm1(-u * u), 0.0)
    return out if out.ndim else float(out)


def psi_prime(u):
    """0 for u <= 0, 2 u exp(-u^2) otherwise."""
    u = np.asarray(u, dtype=float)
    out = np.where(u > 0.0, 2.0 * u * np.exp(-u * u), 0.0)
    return out if out.ndim else float(out)


def phi(v):
    """4 arctan(v) + 2 pi, valued in (0, 4 pi)."""
    out = 4.0 * np.arctan(np.asarray(v, dtype=float)) + 2.0 * math.pi
    return out if np.ndim(out) else float(out)


def phi_prime(v):
    """4 / (1 + v^2), valued in (0, 4]."""
    v = np.asarray(v, dtype=float)
    out = 4.0 / (1.0 + v * v)
    return out if out.ndim else float(out)


def _groups_for(params, i):
    """Group id for block index i (1-based), as a 0-d array."""
    if not 1 <= i <= params.m:
        raise IndexError(f"block index {i} outside 1..{params.m}")
    return np.asarray(params.block_group[i - 1])


def _h_values(groups, z):
    # z: (..., dbar); groups broadcasts against z[..., 0]
    dbar = z.shape[-1]
    g = groups
    total = -PSI_ONE * phi(z[..., 0])
    total = np.asarray(total, dtype=float)
    even_sum = np.zeros(z.shape[:-1])
    odd_sum = np.zeros(z.shape[:-1])
    for j in range(2, dbar + 1):
        prev, cur = z[..., j - 2], z[..., j - 1]
        term = psi(-prev) * phi(-cur) - psi(prev) * phi(cur)
        if j % 2 == 0:
            even_sum = even_sum + term
        else:
            odd_sum = odd_sum + term
    return np.where(g == 0, total + 3.0 * even_sum, np.where(g == 2, total + 3.0 * odd_sum, total))


def _h_grads(groups, z):
    dbar = z.shape[-1]
    ps, psn = psi(z), psi(-z)
    dps, dpsn = psi_prime(z), psi_prime(-z)
    ph, phn = phi(z), phi(-z)
    dph = phi_prime(z)
    # back[j]: derivative of phi(z, j) wrt z_j; fwd[j]: derivative of phi(z, j+1) wrt z_j
    back = np.zeros_like(z)
    fwd = np.zeros_like(z)
    back[..., 1:] = -psn[..., :-1] * dph[..., 1:] - ps[..., :-1] * dph[..., 1:]
    fwd[..., :-1] = -dpsn[..., :-1] * phn[..., 1:] - dps[..., :-1] * ph[..., 1:]
    first = -PSI_ONE * dph[..., 0]
    g = groups[..., None]
    out = np.empty_like(z)
    out[..., 0] = np.where(groups == 0, first + 3.0 * fwd[..., 0], first)
    even = (np.arange(2, dbar + 1) % 2) == 0
    # first third: even j uses back, odd j uses fwd; last third the other way round
    first_third = np.where(even, back[..., 1:], fwd[..., 1:])
    last_third = np.where(even, fwd[..., 1:], back[..., 1:])
    out[..., 1:] = np.where(g == 0, 3.0 * first_third, np.where(g == 2, 3.0 * last_third, 0.0))
    return out


def h(params, i, z):
    """Chain function h_i(z) for block index i in 1..m (z has trailing length dbar)."""
    z = np.asarray(z, dtype=float)
    out = _h_values(_groups_for(params, i), z)
    return out if np.ndim(out) else float(out)


def grad_h(params, i, z):
    """Closed-form gradient of h_i, with exact zeros where every term has a zero Psi factor."""
    z = np.asarray(z, dtype=float)
    return _h_grads(_groups_for(params, i), z)


def f(params, i, z):
    """Scaled block function f_i(z) = (300 pi eps^2 / (m L_f)) h_i(sqrt(m) L_f z / (150 pi eps))."""
    z = np.asarray(z, dtype=float)
    return params.scale_out * h(params, i, params.scale_in * z)


def grad_f(params, i, z):
    """Gradient of f_i: (2 eps / sqrt(m)) grad_h_i at the scaled point."""
    z = np.asarray(z, dtype=float)
    return params.scale_grad * grad_h(params, i, params.scale_in * z)


def f0(params, x):
    """Sum of f_i over blocks, accumulated in ascending block order."""
    xb = as_blocks(params, x)
    vals = params.scale_out * _h_values(params.block_group, params.scale_in * xb)
    total = np.zeros(xb.shape[:-2])
    for i in range(params.m):
        total = total + vals[..., i]
    return total if total.ndim else float(total)


def grad_f0(params, x):
    """Blockwise gradient of f0, returned flat with the same shape as x."""
    x = np.asarray(x, dtype=float)
    xb = as_blocks(params, x)
    gb = params.scale_grad * _h_grads(params.block_group, params.scale_in * xb)
    return gb.reshape(x.shape)


def g_val(params, x):
    """beta * sum over i in M of ||x_i - x_{i+1}||_1."""
    xb = as_blocks(params, x)
    total = np.zeros(xb.shape[:-2])
    for i in params.M:
        total = total + np.abs(xb[..., i - 1, :] - xb[..., i, :]).sum(axis=-1)
    out = params.beta * total
    return out if out.ndim else float(out)


def gbar_val(params, y):
    """(beta / (m L_f)) ||y||_1."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != params.nbar:
        raise ValueError(f"expected trailing length {params.nbar}, got {y.shape[-1]}")
    out = params.beta / (params.m * params.lf) * np.abs(y).sum(axis=-1)
    return out if np.ndim(out) else float(out)


def delta_f0_upper(params):
    """Upper estimate 3000 pi^2 dbar eps^2 / L_f of f0(0) - inf f0."""
    return 3000.0 * math.pi**2 * params.dbar * params.eps**2 / params.lf
