"""Analytic constants of the (d, k) core model.

Everything here is a pure function of ``(d, k)``: the Poisson fixed point
``p``, the core threshold ``d_k``, the derived probabilities ``q``, ``q_bar``,
the type/edge laws ``nu``, ``mu``, the Poisson rates ``lam`` and the limiting
Forge success probability ``zeta``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import optimize, special

FLOOR = 1e-9
TAIL_EPS = 1e-16


class DegenerateParamsError(ValueError):
    """Raised when d <= d_k, where the core is empty and q, zeta are undefined."""


def _check(d, k):
    if not d > 0:
        raise ValueError(f"d must be positive, got {d}")
    if int(k) != k or k < 3:
        raise ValueError(f"k must be an integer >= 3, got {k}")


def phi_ell(ell: int, y):
    """``Pr[Po(y) >= ell - 1]``; vectorised over ``y``."""
    y = np.asarray(y, dtype=float)
    if ell <= 1:
        return np.ones_like(y)[()]
    # regularized lower incomplete gamma: P(a, y) = Pr[Po(y) >= a]
    return special.gammainc(ell - 1, y)[()]


def phi(d: float, k: int, x):
    """The map ``x -> Pr[Po(d x) >= k - 1]``."""
    _check(d, k)
    xa = np.asarray(x, dtype=float)
    if np.any((xa < 0) | (xa > 1)):
        raise ValueError("x must lie in [0, 1]")
    return phi_ell(k, d * xa)


def _dphi(d, k, x):
    # derivative of phi: d * Pr[Po(dx) = k-2]
    y = d * x
    if y == 0:
        return d if k == 2 else 0.0
    return d * math.exp((k - 2) * math.log(y) - y - math.lgamma(k - 1))


def _turning_point(d, k):
    """Maximiser of phi(x) - x on the concave branch, or None if phi' < 1 throughout."""
    x_inf = min(1.0, (k - 2) / d)
    if _dphi(d, k, x_inf) < 1:
        return None
    if _dphi(d, k, 1.0) >= 1:
        return 1.0
    return optimize.brentq(lambda x: _dphi(d, k, x) - 1, x_inf, 1.0, xtol=1e-15)


def has_core(d: float, k: int) -> bool:
    """True iff ``phi(x) - x`` reaches 0 on (FLOOR, 1], i.e. iff ``p(d, k) > 0``."""
    _check(d, k)
    xm = _turning_point(d, k)
    return xm is not None and xm > FLOOR and float(phi_ell(k, d * xm)) - xm >= 0


def largest_fixed_point(d: float, k: int, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Largest fixed point of ``phi``; returns 0 below the threshold.

    Iterates ``x <- phi(x)`` from 1, which decreases monotonically onto the
    largest fixed point, then polishes by bracketing. Near the threshold the
    iteration can crawl through a bottleneck, so the bracket is anchored at the
    maximiser of ``phi(x) - x`` rather than trusted from the iterate alone.
    """
    _check(d, k)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not has_core(d, k):
        return 0.0
    x = 1.0
    for _ in range(max_iter):
        nx = float(phi_ell(k, d * x))
        if abs(nx - x) < 1e-14:
            x = nx
            break
        x = nx
        if x < FLOOR:
            return 0.0
    g = lambda t: float(phi_ell(k, d * t)) - t
    if abs(g(x)) <= tol * 1e-2:
        return x
    xm = _turning_point(d, k)
    if xm is None or g(xm) < 0:
        return 0.0
    if g(1.0) >= 0:
        return 1.0
    hi = x if (x >= xm and g(x) <= 0) else 1.0
    p = optimize.brentq(g, xm, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    return 0.0 if p < FLOOR else p


def threshold(k: int, tol: float = 1e-10) -> float:
    """Core threshold ``d_k = inf{d : p(d, k) > 0}`` by bisection on d."""
    _check(1.0, k)
    lo, hi = 0.5, 4.0 * k
    while has_core(lo, k):
        lo /= 2
    while not has_core(hi, k):
        hi *= 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if has_core(mid, k):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ModelParams:
    d: float
    k: int
    p: float
    q: float
    q_bar: float
    nu: tuple
    mu: tuple
    lam: tuple
    zeta: float
    gamma_plus: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out


def derive_params(d: float, k: int) -> ModelParams:
    """Fill every ModelParams field from the closed forms.

    Raises DegenerateParamsError when ``p(d, k) = 0``.
    """
    _check(d, k)
    p = largest_fixed_point(d, k)
    if p <= 0 or p >= 1:
        raise DegenerateParamsError(f"no nontrivial fixed point at d={d}, k={k} (p={p})")
    k = int(k)
    # q = Pr[Po(dp) = k-1] / p, written in log space
    q = math.exp((k - 1) * math.log(d) + (k - 2) * math.log(p) - d * p - math.lgamma(k))
    q_bar = (k - 1) * q / ((1 - p) * d)
    nu = (1 - p, p * q, p * (1 - q))
    mu = ((1 - p) ** 2, p * (1 - p), p * (1 - p), p * p)
    lam = (d * (1 - p), d * (1 - p), d * p, d * p)
    gp = (k - 1) * q
    zeta = (1 - gp) ** 1.5 * math.exp(-d / 2 - d * d / 4) if gp < 1 else 0.0
    return ModelParams(d=float(d), k=k, p=p, q=q, q_bar=q_bar, nu=nu, mu=mu, lam=lam,
                       zeta=zeta, gamma_plus=gp)


@dataclass(frozen=True)
class TruncatedPoisson:
    """Poisson law, optionally conditioned on ``X <= upper`` or ``X >= lower``."""

    rate: float
    lower: Optional[int] = None
    upper: Optional[int] = None

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be nonnegative")
        if self.lower is not None and self.upper is not None:
            raise ValueError("use at most one of lower / upper")
        if self.cond_prob() <= 0:
            raise ValueError(f"conditioning event has zero probability: {self}")

    @classmethod
    def at_most(cls, rate, t):
        return cls(rate, upper=int(t))

    @classmethod
    def at_least(cls, rate, t):
        return cls(rate, lower=int(t))

    def cond_prob(self) -> float:
        r = self.rate
        if self.upper is not None:
            if self.upper < 0:
                return 0.0
            return 1.0 if r == 0 else float(special.pdtr(self.upper, r))
        if self.lower is not None and self.lower > 0:
            return 0.0 if r == 0 else float(special.pdtrc(self.lower - 1, r))
        return 1.0

    def log_cond_prob(self) -> float:
        r = self.rate
        if self.lower is not None and self.lower > 0 and r > 0:
            # Pr[Po(r) >= t] = P(t, r), tiny for small r; gammainc keeps relative accuracy
            return math.log(special.gammainc(self.lower, r))
        return math.log(self.cond_prob())

    def support(self) -> np.ndarray:
        lo = self.lower or 0
        if self.upper is not None:
            return np.arange(0, self.upper + 1)
        if self.rate == 0:
            return np.arange(lo, lo + 1)
        # extend until the conditional tail mass drops below TAIL_EPS
        hi = max(lo, int(self.rate)) + 1
        lc = self.log_cond_prob()
        while special.pdtrc(hi, self.rate) / math.exp(lc) > TAIL_EPS:
            hi += max(1, int(math.sqrt(self.rate)))
        return np.arange(lo, hi + 1)

    def logpmf(self, ell):
        ell = np.asarray(ell)
        lo = self.lower or 0
        ok = ell >= lo
        if self.upper is not None:
            ok &= ell <= self.upper
        ellf = np.where(ok, ell, 0).astype(float)
        if self.rate == 0:
            base = np.where(ellf == 0, 0.0, -np.inf)
        else:
            base = ellf * math.log(self.rate) - self.rate - special.gammaln(ellf + 1)
        return np.where(ok, base - self.log_cond_prob(), -np.inf)[()]

    def pmf(self, ell):
        return np.exp(self.logpmf(ell))

    def mean(self) -> float:
        s = self.support()
        return float(np.dot(s, self.pmf(s)))

    def var(self) -> float:
        s = self.support()
        w = self.pmf(s)
        m = np.dot(s, w)
        return float(np.dot((s - m) ** 2, w))

    def sample(self, rng, size=None):
        """Inverse-CDF draw over the (short) truncated support."""
        s = self.support()
        cdf = np.cumsum(self.pmf(s))
        cdf /= cdf[-1]
        u = rng.random(size)
        idx = np.searchsorted(cdf, u, side="right")
        return s[np.minimum(idx, len(s) - 1)]


def trunc_pmf(dist: TruncatedPoisson, ell: int) -> float:
    return float(dist.pmf(ell))


def trunc_sample(dist: TruncatedPoisson, rng, size=None):
    return dist.sample(rng, size)


def contraction_fk(params: ModelParams, x):
    """``f_k(x) = sum_j (dp)^j / ((1-p) j! e^{dp}) * phi_{k-j}(d (1-p) x)``."""
    d, k, p = params.d, params.k, params.p
    x = np.asarray(x, dtype=float)
    lam = d * p
    total = np.zeros_like(x)
    for j in range(k - 1):
        w = math.exp(j * math.log(lam) - math.lgamma(j + 1) - lam) / (1 - p) if lam > 0 else float(j == 0) / (1 - p)
        total = total + w * phi_ell(k - j, d * (1 - p) * x)
    return total[()]
