"""Limit-theorem numerics: covariance matrices, lattice point probabilities,
the degree-total probability ``u`` and asymptotic class counts.

Matrix polynomials live in exactly one place (``_q4_raw`` / ``q2_polynomials``)
and are cross-checked by the block and marginal identities below.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special

from .params import DegenerateParamsError, ModelParams, TruncatedPoisson

LN2PI = math.log(2 * math.pi)


def _need(params: ModelParams):
    if params is None or not params.p > 0:
        raise DegenerateParamsError("matrices need d > d_k")


# ----------------------------------------------------------------- matrices

def _q4_raw(d, k, p, q):
    Q11 = -(1/d)*((d*k**2-2*d*k+d)*p**2*q**4+(2*(d**2*k-d**2)*p**3-(2*d*k**2-d**2+(d**2-2*d)*k)*p**2+(d*k**2-2*d*k+d)*p)*q**3
                  - d*p*q+((d**3+2*d**2)*p**4-(d**3+2*(d**2+2*d)*k-4*d)*p**3+((d+2)*k**2-d**2+2*(d**2-2)*k+2)*p**2-(d*k**2-2*d*k+d)*p)*q**2)
    Q12 = ((k**2-2*k+1)*p**2*q**4+(2*(d*k-d)*p**3-((d-2)*k+2*k**2-d)*p**2+(k**2-2*k+1)*p)*q**3
           + ((d**2+2*d)*p**4-(d**2+2*(d+1)*k-2)*p**3+((2*d+1)*k+k**2-d-1)*p**2-(k**2-k)*p)*q**2
           + (d*p**3-(d+k)*p**2+(k-1)*p)*q)
    Q13 = -(1/d)*((2*(d*k-d)*p**4+2*((d+2)*k-k**2-d-1)*p**3-3*(d*k-d)*p**2+((d-2)*k+k**2-d+1)*p)*q**2
                  + (2*(d**2+d)*p**4-(3*d**2+2*(d+1)*k+2*d-2)*p**3+(d**2+(3*d+2)*k-2)*p**2-((d+1)*k-1)*p)*q)
    Q14 = (2/d)*(((d*k-d)*p**4+((d+2)*k-k**2-d-1)*p**3)*q**2+((d**2+d)*p**4-(d**2+(d+1)*k-1)*p**3+(d*k-d)*p**2)*q)
    Q22 = (-(k**2-2*k+1)*p**2*q**4-(2*(d*k-d)*p**3-((d-2)*k+2*k**2-d)*p**2+(k**2-2*k+1)*p)*q**3
           - ((d**2+2*d)*p**4-(d**2+2*d*k)*p**3+(2*(d+1)*k+k**2-d-2)*p**2-(k**2-1)*p)*q**2-p**2
           - (2*d*p**3-2*(d+k)*p**2+(2*k-1)*p)*q+p)
    Q23 = (2*p**3+(2*(k-1)*p**4+2*(k-1)*p**3-3*(k-1)*p**2+(k-1)*p)*q**2-3*p**2
           + (2*(d+1)*p**4-(3*d+2*k+2)*p**3+(d+3*k)*p**2-k*p)*q+p)
    Q24 = (-2*p**3-2*((k-1)*p**4+(k-1)*p**3)*q**2+2*p**2-2*((d+1)*p**4-(d+k)*p**3+(k-1)*p**2)*q)
    Q33 = -(1/d)*(2*(2*d+1)*p**4-4*(2*d+1)*p**3+(5*d+3)*p**2+(2*(k**2-2*k+1)*p**4-2*(k**2-2*k+1)*p**2+(k**2-2*k+1)*p)*q**2
                  - (d+1)*p+(4*(k-1)*p**4-4*(k-1)*p**3+(k-1)*p**2)*q)
    Q34 = (2/d)*((k**2-2*k+1)*p**4*q**2+(2*d+1)*p**4-(3*d+1)*p**3+d*p**2+(2*(k-1)*p**4-(k-1)*p**3)*q)
    Q44 = -(2/d)*(2*(k-1)*p**4*q+(2*d+1)*p**4-2*d*p**3+((k**2-2*k+1)*p**4+(k**2-2*k+1)*p**2)*q**2-p**2)
    return np.array([[Q11, Q12, Q13, Q14],
                     [Q12, Q22, Q23, Q24],
                     [Q13, Q23, Q33, Q34],
                     [Q14, Q24, Q34, Q44]])


def q4_matrix(params: ModelParams) -> np.ndarray:
    """4x4 matrix Q (covariance form of Delta(N, M) after scaling by sqrt(n))."""
    _need(params)
    d, k, p, q = params.d, params.k, params.p, params.q
    return _q4_raw(d, k, p, q) / (1 - (k - 1) * q) ** 2


def q2_polynomials(params: ModelParams) -> np.ndarray:
    """The 2x2 polynomial matrix for the (n_1, m_11 / 2) projection, as displayed."""
    _need(params)
    d, k, p, q = params.d, params.k, params.p, params.q
    c11 = (-(d*k**2-2*d*k+d)*p**2*q**4-(2*(d**2*k-d**2)*p**3-(2*d*k**2-d**2+(d**2-2*d)*k)*p**2+(d*k**2-2*d*k+d)*p)*q**3-d*p**2
           - ((d**3+2*d**2)*p**4-(d**3+2*d**2*k)*p**3+(d*k**2-d**2+2*(d**2+d)*k-2*d)*p**2-(d*k**2-d)*p)*q**2+d*p
           - (2*d**2*p**3-2*(d**2+d*k)*p**2+(2*d*k-d)*p)*q)
    c12 = (-2*d*p**3+2*d*p**2-2*((d*k-d)*p**4+(d*k-d)*p**3)*q**2-2*((d**2+d)*p**4-(d**2+d*k)*p**3+(d*k-d)*p**2)*q)
    c22 = (-4*(k-1)*p**4*q-2*(2*d+1)*p**4+4*d*p**3-2*((k**2-2*k+1)*p**4+(k**2-2*k+1)*p**2)*q**2+2*p**2)
    return np.array([[c11, c12], [c12, c22]]) / (1 - (k - 1) * q) ** 2


def clt_covariance(params: ModelParams) -> np.ndarray:
    """Limiting covariance of sqrt(n) (X/n - p(1-q), Y/m - p^2).

    The displayed polynomial matrix equals d times this covariance; see
    ``q2_matrix`` for the precision form used in the point formula.
    """
    return q2_polynomials(params) / params.d


def q2_matrix(params: ModelParams) -> np.ndarray:
    """Precision matrix of the core pair, i.e. the inverse of ``clt_covariance``."""
    return np.linalg.inv(clt_covariance(params))


def sigma_matrix(params: ModelParams) -> np.ndarray:
    _need(params)
    d, k, p, q, qb = params.d, params.k, params.p, params.q, params.q_bar
    return np.diag([
        (1 - p) ** 2,
        p * (1 - p),
        p * (1 - p) * (1 + qb * (d * p * (1 - qb) - (k - 1))),
        p * p * (1 - d * p / (1 - q) + d * (p + (1 - p) * qb)),
    ]) / d


def l_matrix(params: ModelParams) -> np.ndarray:
    _need(params)
    d, k, p, q, qb = params.d, params.k, params.p, params.q, params.q_bar
    return np.array([
        [1 - p, 0, 0],
        [0, 1 - p, 1 - p],
        [p * (1 - qb), (k - 1) / d, 0],
        [0, 0, p / (1 - q)],
    ])


def t_matrix() -> np.ndarray:
    """Maps Delta(N, M) onto the stacked (Delta(n), Delta(m)) vector."""
    return np.array([
        [-1, -1, 0, 0],
        [1, 0, 0, 0],
        [0, 1, 0, 0],
        [0, 0, -2, -1],
        [0, 0, 1, 0],
        [0, 0, 1, 0],
        [0, 0, 0, 1],
    ], dtype=float)


def degree_block(params: ModelParams) -> np.ndarray:
    """7x7 quadratic form of the degree-total LLT (no entropy terms)."""
    S = np.linalg.inv(sigma_matrix(params))
    L = l_matrix(params)
    return np.block([[L.T @ S @ L, -L.T @ S], [-S @ L, S]])


def b_matrix(params: ModelParams) -> np.ndarray:
    """Degree block plus the second-order entropy corrections."""
    B = degree_block(params).copy()
    B[:3, :3] += np.diag(1 / np.asarray(params.nu))
    B[3:, 3:] -= params.d / 2 * np.diag(1 / np.asarray(params.mu))
    return B


def block_identity_check(params: ModelParams, detail: bool = False):
    """Max entrywise gap between both sides of ``Q^{-1} = T' B T``.

    Compared in covariance orientation, ``Q`` against ``inv(T' B T)``. The
    precision-side gap ``inv(Q) - T' B T`` is amplified by the huge entries
    ``1/nu_0`` when p is close to 1 and by the cond(Q) cancellation in the
    polynomials, so it is only reported in ``detail``.
    """
    Q = q4_matrix(params)
    T = t_matrix()
    R = T.T @ b_matrix(params) @ T
    err = float(np.abs(Q - np.linalg.inv(R)).max())
    if not detail:
        return err
    return err, {
        "inv_Q_minus_R": float(np.abs(np.linalg.inv(Q) - R).max()),
        "QR_minus_I": float(np.abs(Q @ R - np.eye(4)).max()),
        "cond_Q": float(np.linalg.cond(Q)),
    }


def marginal_consistency_check(params: ModelParams) -> float:
    """Gap between the 2x2 covariance and the (n_1, m_11) block of Q."""
    Q = q4_matrix(params)
    sub = Q[np.ix_([1, 3], [1, 3])]
    return float(np.abs(np.linalg.inv(q2_matrix(params)) - sub).max())


# ------------------------------------------------------- point probabilities

def delta_nm(N, M, n, m, params: ModelParams) -> np.ndarray:
    p, q = params.p, params.q
    n_star, n_1 = N
    m_10, m_11 = M
    return np.array([n_star / n - p * q, n_1 / n - p * (1 - q),
                     m_10 / (2 * m) - p * (1 - p), m_11 / (2 * m) - p * p])


def log_llt_joint(N, M, n, m, params: ModelParams) -> float:
    if int(M[1]) % 2:
        return -math.inf
    Q = q4_matrix(params)
    D = delta_nm(N, M, n, m, params)
    quad = float(D @ np.linalg.solve(Q, D))
    d = params.d
    return -math.log(2) - 2 * math.log(math.pi * d * n) - 0.5 * math.log(np.linalg.det(Q)) - n / 2 * quad


def llt_joint_probability(N, M, n, m, params: ModelParams) -> float:
    """Point probability of (n_star, n_1, m_10, m_11); 0 when m_11 is odd."""
    return math.exp(log_llt_joint(N, M, n, m, params))


def log_llt_core(x, y, n, m, params: ModelParams):
    P = q2_matrix(params)
    v1 = np.asarray(x, float) / n - params.p * (1 - params.q)
    v2 = np.asarray(y, float) / m - params.p ** 2
    quad = P[0, 0] * v1 * v1 + 2 * P[0, 1] * v1 * v2 + P[1, 1] * v2 * v2
    return 0.5 * math.log(np.linalg.det(P)) - math.log(math.pi * params.d * n) - n / 2 * quad


def llt_core_probability(x, y, n, m, params: ModelParams):
    """Point probability that the core has x vertices and y edges; vectorised."""
    return np.exp(log_llt_core(x, y, n, m, params))[()]


def centered_targets(n, m, params: ModelParams):
    """(n_star, n_1, m_10, m_11) nearest the centring, m_11 rounded down to even."""
    p, q = params.p, params.q
    m11 = int(math.floor(2 * m * p * p))
    m11 -= m11 % 2
    return (int(round(n * p * q)), int(round(n * p * (1 - q))), int(round(2 * m * p * (1 - p))), m11)


# --------------------------------------------------------- lattice summation

def core_lattice_sum(n, m, params: ModelParams, half_width=None, chunk=512) -> float:
    """Direct sum of the core point formula over a +-8 sqrt(n) box."""
    hw = int(math.ceil(8 * math.sqrt(n))) if half_width is None else int(half_width)
    x0 = int(round(n * params.p * (1 - params.q)))
    y0 = int(round(m * params.p ** 2))
    ys = np.arange(max(0, y0 - hw), y0 + hw + 1)
    total = 0.0
    for start in range(max(0, x0 - hw), x0 + hw + 1, chunk):
        xs = np.arange(start, min(start + chunk, x0 + hw + 1))
        total += float(llt_core_probability(xs[:, None], ys[None, :], n, m, params).sum())
    return total


def _theta(h, half_width, shifts=64):
    """sum_z exp(-h (z - c)^2 / 2) over |z - c| <= half_width, tabulated over c in [0, 1)."""
    zs = np.arange(-half_width - 1, half_width + 2)
    vals = []
    for c in np.arange(shifts) / shifts:
        r = zs - c
        r = r[np.abs(r) <= half_width]
        vals.append(np.exp(-0.5 * h * r * r).sum())
    vals = np.array(vals)
    return float(vals.mean()), float((vals.max() - vals.min()) / vals.mean())


def joint_lattice_sum(n, m, params: ModelParams, half_width=None):
    """Sum of the joint point formula over the (Z^3 x 2Z) lattice.

    Coordinates are eliminated one at a time: for fixed outer coordinates the
    innermost sum is a 1-D lattice sum of a Gaussian whose value depends only
    on the fractional part of its centre. That periodic function is evaluated
    numerically over a grid of shifts; its relative oscillation is returned so
    the caller can see that replacing it by its mean is exact to that level.
    """
    hw = 8 * math.sqrt(n) if half_width is None else float(half_width)
    Q = q4_matrix(params)
    P = np.linalg.inv(Q)
    # lattice coordinates z = (n_star, n_1, m_10, m_11 / 2); Delta = A z - c
    A = np.diag([1 / n, 1 / n, 1 / (2 * m), 2 / (2 * m)])
    H = n * A.T @ P @ A
    widths = [hw, hw, hw, hw / 2]
    total = 1.0
    osc = 0.0
    for i in range(3, -1, -1):
        h = H[i, i]
        val, o = _theta(h, widths[i])
        total *= val
        osc = max(osc, o)
        if i:
            H = H[:i, :i] - np.outer(H[:i, i], H[i, :i]) / h
    pref = math.exp(-math.log(2) - 2 * math.log(math.pi * params.d * n) - 0.5 * math.log(np.linalg.det(Q)))
    return pref * total, osc


def projected_core_probability(x, y, n, m, params: ModelParams, half_width=None) -> float:
    """Sum of the joint formula over (n_star, m_10) at n_1 = x, m_11 = 2y."""
    Q = q4_matrix(params)
    P = np.linalg.inv(Q)
    p, q = params.p, params.q
    sd_s = math.sqrt(n * Q[0, 0])
    sd_m = 2 * m * math.sqrt(Q[2, 2] / n)
    hw_s = int(12 * sd_s) + 2 if half_width is None else half_width
    hw_m = int(12 * sd_m) + 2 if half_width is None else half_width
    # conditional centre of (n_star, m_10) given the other two coordinates
    d2 = np.array([x / n - p * (1 - q), 2 * y / (2 * m) - p * p])
    cen = Q[np.ix_([0, 2], [1, 3])] @ np.linalg.solve(Q[np.ix_([1, 3], [1, 3])], d2)
    s0 = int(round(n * (p * q + cen[0])))
    t0 = int(round(2 * m * (p * (1 - p) + cen[1])))
    ss = np.arange(max(0, s0 - hw_s), s0 + hw_s + 1)
    ts = np.arange(max(0, t0 - hw_m), t0 + hw_m + 1)
    D = np.empty((len(ss), len(ts), 4))
    D[..., 0] = (ss / n - p * q)[:, None]
    D[..., 1] = d2[0]
    D[..., 2] = (ts / (2 * m) - p * (1 - p))[None, :]
    D[..., 3] = d2[1]
    quad = np.einsum("abi,ij,abj->ab", D, P, D)
    lp = -math.log(2) - 2 * math.log(math.pi * params.d * n) - 0.5 * math.log(np.linalg.det(Q))
    return float(np.exp(lp - n / 2 * quad).sum())


# ----------------------------------------------------------- entropy and KL

def _prob_vector(rho):
    r = np.asarray(rho, dtype=float)
    if np.any(r < 0) or np.any(r > 1) or abs(r.sum() - 1) > 1e-9:
        raise ValueError(f"not a probability vector: {rho}")
    return r


def entropy(rho) -> float:
    r = _prob_vector(rho)
    nz = r[r > 0]
    return float(-(nz * np.log(nz)).sum())


def kl(rho, rho_prime) -> float:
    """Kullback-Leibler divergence, standard convention (inf if rho > 0 = rho')."""
    r = _prob_vector(rho)
    s = _prob_vector(rho_prime)
    if r.shape != s.shape:
        raise ValueError("shape mismatch")
    if np.any((r > 0) & (s == 0)):
        return math.inf
    nz = r > 0
    return float((r[nz] * np.log(r[nz] / s[nz])).sum())


# ------------------------------------------------------------ u(n, m)

def _log_dfact_odd(n):
    """log of (n - 1)!! for even n >= 0 via (2l - 1)!! = (2l)! / (2^l l!)."""
    if n % 2:
        raise ValueError("double factorial needs an even count of half-edges")
    ell = n // 2
    return math.lgamma(2 * ell + 1) - ell * math.log(2) - math.lgamma(ell + 1)


def _lognormalise(arr):
    mx = arr.max()
    return arr / mx, math.log(mx)


@lru_cache(maxsize=256)
def _sum_law(dist: TruncatedPoisson, count: int, rel_floor: float = 1e-280):
    """Law of a sum of ``count`` iid copies: (offset, scaled pmf, log scale).

    Binary powering with direct convolution; entries below ``rel_floor`` of the
    running maximum are trimmed, which keeps tails accurate to that level.
    """
    s = dist.support()
    base = dist.pmf(s)
    base_off = int(s[0])

    def trim(off, arr, ls):
        arr, extra = _lognormalise(arr)
        keep = np.flatnonzero(arr > rel_floor)
        return off + int(keep[0]), arr[keep[0]:keep[-1] + 1].copy(), ls + extra

    def conv(a, b):
        return trim(a[0] + b[0], np.convolve(a[1], b[1]), a[2] + b[2])

    result = (0, np.array([1.0]), 0.0)
    power = trim(base_off, base.copy(), 0.0)
    c = int(count)
    while c:
        if c & 1:
            result = conv(result, power)
        c >>= 1
        if c:
            power = conv(power, power)
    return result


def _log_sum_pmf(dist, count, value):
    off, arr, ls = _sum_law(dist, int(count))
    i = int(value) - off
    if i < 0 or i >= len(arr) or arr[i] <= 0:
        return -math.inf
    return math.log(arr[i]) + ls


def _poisson_logpmf(j, rate):
    if rate == 0:
        return 0.0 if j == 0 else -math.inf
    return j * math.log(rate) - rate - math.lgamma(j + 1)


def log_u_exact(n_vec, m_vec, params: ModelParams) -> float:
    n0, ns, n1 = map(int, n_vec)
    m00, m01, m10, m11 = map(int, m_vec)
    if min(n0, ns, n1, m00, m01, m10, m11) < 0:
        return -math.inf
    k = params.k
    l00, l01, l10, l11 = params.lam
    out = _poisson_logpmf(m00, n0 * l00) + _poisson_logpmf(m01, (ns + n1) * l01)
    rest = m10 - (k - 1) * ns
    if rest < 0:
        return -math.inf
    if n0:
        out += _log_sum_pmf(TruncatedPoisson.at_most(l10, k - 2), n0, rest)
    elif rest:
        return -math.inf
    if n1:
        out += _log_sum_pmf(TruncatedPoisson.at_least(l11, k), n1, m11)
    elif m11:
        return -math.inf
    return out


def u_exact(n_vec, m_vec, params: ModelParams) -> float:
    """Probability that Forge's degree step yields the totals ``m_vec`` given the type counts."""
    return math.exp(log_u_exact(n_vec, m_vec, params))


def _delta_n_m(n_vec, m_vec, params, m=None):
    n = sum(n_vec)
    two_m = sum(m_vec) if m is None else 2 * m
    dn = np.asarray(n_vec, float) / n - np.asarray(params.nu)
    dm = np.asarray(m_vec, float) / two_m - np.asarray(params.mu)
    return np.concatenate([dn, dm])


def log_u_gaussian(n_vec, m_vec, params: ModelParams, m=None) -> float:
    """Gaussian form of log u; ``m`` defaults to half the half-edge total of ``m_vec``."""
    n = sum(n_vec)
    D = _delta_n_m(n_vec, m_vec, params, m)
    quad = float(D @ degree_block(params) @ D)
    S = sigma_matrix(params)
    return -2 * math.log(2 * math.pi * n) - 4 * math.log(params.d) - 0.5 * math.log(np.linalg.det(S)) - n / 2 * quad


def u_gaussian(n_vec, m_vec, params: ModelParams, m=None) -> float:
    return math.exp(log_u_gaussian(n_vec, m_vec, params, m))


# ---------------------------------------------------------- class counts

def full_vectors(N, M, n, m):
    n_star, n_1 = map(int, N)
    m_10, m_11 = map(int, M)
    n_vec = (n - n_star - n_1, n_star, n_1)
    m_vec = (2 * m - 2 * m_10 - m_11, m_10, m_10, m_11)
    if min(n_vec) < 0 or min(m_vec) < 0:
        raise ValueError(f"infeasible counts N={N}, M={M} for n={n}, m={m}")
    if m_vec[0] % 2 or m_vec[3] % 2:
        raise ValueError("m_00 and m_11 must be even")
    return n_vec, m_vec


def log_binom(a, b) -> float:
    return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)


GAMMA_MODES = ("exact-u", "gaussian-u", "closed-form", "kl-form")


def gamma_count(N, M, n, m, params: ModelParams, mode: str = "exact-u") -> float:
    """Natural log of the asymptotic size of the class Gamma_{n,m}(N, M)."""
    n_vec, m_vec = full_vectors(N, M, n, m)
    d = params.d
    if mode == "closed-form":
        Q = q4_matrix(params)
        D = delta_nm(N, M, n, m, params)
        quad = float(D @ np.linalg.solve(Q, D))
        return (-math.log(2 * math.pi ** 2 * d * d * n * n) - 0.5 * math.log(np.linalg.det(Q))
                - n / 2 * quad + log_binom(n * (n - 1) // 2, m))
    if mode in ("exact-u", "gaussian-u"):
        lu = log_u_exact(n_vec, m_vec, params) if mode == "exact-u" else log_u_gaussian(n_vec, m_vec, params)
        nu, lam = params.nu, params.lam
        log_eta = math.lgamma(n + 1) + sum(c * math.log(v) - math.lgamma(c + 1) for c, v in zip(n_vec, nu))
        log_kappa = _log_dfact_odd(m_vec[0]) + _log_dfact_odd(m_vec[3]) + math.lgamma(m_vec[1] + 1)
        log_lam = sum(c * math.log(v) for c, v in zip(m_vec, lam) if c)
        return math.log(params.zeta) + d * n + log_eta + log_kappa + lu - log_lam
    if mode == "kl-form":
        p, q = params.p, params.q
        lu = log_u_exact(n_vec, m_vec, params)
        kn = kl(np.asarray(n_vec) / n, params.nu)
        km = kl(np.asarray(m_vec) / (2 * m), params.mu)
        return (0.5 * math.log(2) + math.log(d * params.zeta) + lu - 0.5 * math.log(p * q * (1 - q))
                - n * (kn - d / 2 * km) + d / 2 + d * d / 4 + log_binom(n * (n - 1) // 2, m))
    raise ValueError(f"unknown mode {mode!r}; choose from {GAMMA_MODES}")


def u_centre(n, m, params: ModelParams):
    """Feasible (n_vec, m_vec) closest to (n nu, 2m mu) in the degree-LLT metric.

    Candidates are the floor/ceil roundings of n_star, n_1, m_10 and the two even
    neighbours of 2m mu_11; n_0 and m_00 absorb the remainder.
    """
    p = params
    best = None
    B = degree_block(p)
    for ns in (math.floor(n * p.nu[1]), math.ceil(n * p.nu[1])):
        for n1 in (math.floor(n * p.nu[2]), math.ceil(n * p.nu[2])):
            for m10 in (math.floor(2 * m * p.mu[2]), math.ceil(2 * m * p.mu[2])):
                lo = 2 * math.floor(m * p.mu[3])
                for m11 in (lo, lo + 2):
                    try:
                        nv, mv = full_vectors((ns, n1), (m10, m11), n, m)
                    except ValueError:
                        continue
                    D = _delta_n_m(nv, mv, p)
                    val = float(D @ B @ D)
                    if best is None or val < best[0]:
                        best = (val, nv, mv)
    return best[1], best[2]
