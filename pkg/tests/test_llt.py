import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from kcore_forge.llt import (GAMMA_MODES, b_matrix, block_identity_check, centered_targets, clt_covariance,
                             core_lattice_sum, delta_nm, entropy, full_vectors, gamma_count,
                             joint_lattice_sum, kl, l_matrix, llt_core_probability, llt_joint_probability,
                             log_u_exact, marginal_consistency_check, projected_core_probability, q2_matrix,
                             q2_polynomials, q4_matrix, sigma_matrix, t_matrix, u_centre, u_exact, u_gaussian)
from kcore_forge.params import DegenerateParamsError, TruncatedPoisson, derive_params, threshold

DK = {k: threshold(k) for k in (3, 4, 5, 6)}
GRID = [(d, k) for k in (3, 4, 5, 6) for d in np.arange(DK[k] + 0.25, 10.0001, 0.25)]


def po_pmf(j, lam):
    return math.exp(j * math.log(lam) - lam - math.lgamma(j + 1)) if lam > 0 else float(j == 0)


def trunc_oracle(lam, lo, hi, top):
    """pmf of Po(lam) restricted to [lo, hi] on 0..top, from the series."""
    w = np.array([po_pmf(j, lam) if lo <= j <= hi else 0.0 for j in range(top + 1)])
    return w / w.sum()


def sum_oracle(pmf, count):
    out = np.array([1.0])
    for _ in range(count):
        out = np.convolve(out, pmf)
    return out


# ------------------------------------------------------------ matrices

@pytest.mark.parametrize("d,k", GRID[::3])
def test_matrices_symmetric_and_regular(d, k):
    P = derive_params(d, k)
    Q4, Q2 = q4_matrix(P), q2_matrix(P)
    for M in (Q4, Q2):
        assert np.abs(M - M.T).max() <= 1e-12 * max(1.0, np.abs(M).max())
        assert np.linalg.det(M) > 0
        assert np.all(np.linalg.eigvalsh(M) > 0)
    assert np.all(np.diag(clt_covariance(P)) > 0)
    S = sigma_matrix(P)
    assert np.count_nonzero(S - np.diag(np.diag(S))) == 0 and np.all(np.diag(S) > 0)
    assert l_matrix(P).shape == (4, 3) and b_matrix(P).shape == (7, 7)


def test_t_matrix_first_column():
    T = t_matrix()
    assert T.shape == (7, 4)
    assert (T @ np.array([1, 0, 0, 0])).tolist() == [-1, 1, 0, 0, 0, 0, 0]
    # column sums: n-part and m-part of T Delta(N, M) each total zero
    assert np.allclose(T[:3].sum(axis=0), 0) and np.allclose(T[3:].sum(axis=0), 0)


@pytest.mark.parametrize("d,k", [(5.0, 3), (7.0, 4), (4.0, 3)] + GRID[1::4])
def test_block_identity(d, k):
    assert block_identity_check(derive_params(d, k)) <= 1e-8


@pytest.mark.parametrize("d,k", [(5.0, 3), (7.0, 5), (3.5, 3)] + GRID[2::4])
def test_marginal_consistency(d, k):
    P = derive_params(d, k)
    assert marginal_consistency_check(P) <= 1e-8
    sub = q4_matrix(P)[np.ix_([1, 3], [1, 3])]
    assert np.abs(sub - clt_covariance(P)).max() <= 1e-8


def test_d6_k5_has_no_core():
    # 6 < d_5, so there is no matrix to check at (6, 5)
    with pytest.raises(DegenerateParamsError):
        derive_params(6.0, 5)


def test_q2_is_inverse_covariance():
    P = derive_params(5.0, 3)
    assert np.abs(np.linalg.inv(clt_covariance(P)) - q2_matrix(P)).max() <= 1e-10 * np.abs(q2_matrix(P)).max()
    assert np.allclose(q2_polynomials(P), P.d * clt_covariance(P), rtol=1e-14)


def test_matrices_need_core():
    with pytest.raises(DegenerateParamsError):
        q4_matrix(None)


# ---------------------------------------------------- point probabilities

def test_joint_near_zero_delta():
    # at the rounded centring Delta = O(1/n), so the exponent is O(1/n)
    P = derive_params(5.0, 3)
    n, m = 10 ** 4, 25000
    pref = 1 / (2 * (math.pi * P.d * n) ** 2 * math.sqrt(np.linalg.det(q4_matrix(P))))
    t = centered_targets(n, m, P)
    assert np.abs(delta_nm(t[:2], t[2:], n, m, P)).max() <= 1.0 / n
    assert llt_joint_probability(t[:2], t[2:], n, m, P) == pytest.approx(pref, rel=1e-2)
    assert llt_joint_probability(t[:2], (t[2], t[3] + 1), n, m, P) == 0.0
    assert llt_joint_probability(t[:2], (t[2], t[3] + 400), n, m, P) < pref


def test_core_point_near_mode():
    P = derive_params(5.0, 3)
    n, m = 10 ** 5, 250000
    x, y = round(n * P.p * (1 - P.q)), round(m * P.p ** 2)
    peak = math.sqrt(np.linalg.det(q2_matrix(P))) / (math.pi * P.d * n)
    assert llt_core_probability(x, y, n, m, P) == pytest.approx(peak, rel=1e-2)
    # vectorised evaluation agrees with scalar calls
    xs = np.array([x - 50, x, x + 50])
    assert np.allclose(llt_core_probability(xs, y, n, m, P), [llt_core_probability(int(v), y, n, m, P) for v in xs])


@pytest.mark.parametrize("d,k,n", [(5.0, 3, 10 ** 4), (7.0, 4, 10 ** 4), (5.0, 3, 10 ** 5)])
def test_lattice_sums(d, k, n):
    P = derive_params(d, k)
    m = math.ceil(d * n / 2)
    assert core_lattice_sum(n, m, P) == pytest.approx(1, abs=0.01)
    total, osc = joint_lattice_sum(n, m, P)
    assert total == pytest.approx(1, abs=0.01)
    assert osc < 1e-6


def test_projection_matches_core_formula():
    P = derive_params(5.0, 3)
    n, m = 10 ** 4, 25000
    x0, y0 = round(n * P.p * (1 - P.q)), round(m * P.p ** 2)
    sd = math.sqrt(n * clt_covariance(P)[0, 0])
    for dx, dy in [(0, 0), (int(sd), 0), (0, int(2 * sd)), (-int(sd), int(sd))]:
        core = llt_core_probability(x0 + dx, y0 + dy, n, m, P)
        proj = projected_core_probability(x0 + dx, y0 + dy, n, m, P)
        assert proj == pytest.approx(core, rel=0.02)


def test_centered_targets():
    P = derive_params(5.0, 3)
    t = centered_targets(1000, 2500, P)
    assert t[3] % 2 == 0 and t[3] <= 2 * 2500 * P.p ** 2
    assert t[0] == round(1000 * P.p * P.q)


# ------------------------------------------------------------ entropy/KL

def test_entropy_kl_examples():
    assert entropy([0.25] * 4) == pytest.approx(math.log(4), abs=1e-15)
    assert kl((1, 0), (0.5, 0.5)) == pytest.approx(math.log(2), abs=1e-15)
    assert kl((0.5, 0.5), (1, 0)) == math.inf
    assert entropy((1, 0)) == 0
    with pytest.raises(ValueError):
        kl((0.5, 0.6), (0.5, 0.5))
    with pytest.raises(ValueError):
        entropy((-0.1, 1.1))


@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=6), st.lists(st.floats(0.01, 1), min_size=6, max_size=6))
def test_kl_properties(a, b):
    r = np.array(a) / sum(a)
    s = np.array(b[:len(a)]) / sum(b[:len(a)])
    assert kl(r, r) == pytest.approx(0, abs=1e-12)
    assert kl(r, s) >= -1e-12
    assert kl(r, s) == pytest.approx(stats.entropy(r, s), abs=1e-10)
    assert 0 <= entropy(r) <= math.log(len(r)) + 1e-12


# ------------------------------------------------------------------- u

def test_u_exact_examples():
    P = derive_params(5.0, 3)
    k = P.k
    l00, l01, l10, _ = P.lam
    n = 6
    p0 = TruncatedPoisson.at_most(l10, k - 2).pmf(0)
    assert u_exact((n, 0, 0), (0, 0, 0, 0), P) == pytest.approx(math.exp(-n * l00) * p0 ** n, rel=1e-12)
    for j in range(6):
        assert u_exact((0, 1, 0), (0, j, k - 1, 0), P) == pytest.approx(po_pmf(j, l01), rel=1e-12)
    assert u_exact((0, 1, 0), (0, 1, k, 0), P) == 0.0
    assert u_exact((0, 0, 1), (0, 0, 0, k - 1), P) == 0.0
    assert log_u_exact((1, 0, 0), (-1, 0, 0, 0), P) == -math.inf


@pytest.mark.parametrize("n_vec", [(1, 1, 3), (2, 0, 3), (0, 2, 3), (3, 1, 1)])
def test_u_exact_sums_to_one(n_vec):
    P = derive_params(5.0, 3)
    n0, ns, n1 = n_vec
    k = P.k
    tot = 0.0
    m11s = range(k * n1, 25 * n1 + 1) if n1 else [0]
    for m00, m01 in itertools.product(range(18), range(24)):
        for m10 in range((k - 1) * ns, (k - 1) * ns + (k - 2) * n0 + 1):
            tot += sum(u_exact(n_vec, (m00, m01, m10, m11), P) for m11 in m11s)
    assert tot == pytest.approx(1, abs=1e-10)


def test_u_exact_marginals():
    """Summing out one coordinate leaves the product of the other factors; tails match Poisson sf."""
    P = derive_params(5.0, 3)
    k = P.k
    l00, l01, l10, l11 = P.lam
    n_vec = (3, 2, 5)
    n0, ns, n1 = n_vec
    s10 = sum_oracle(trunc_oracle(l10, 0, k - 2, k - 2), n0)
    s11 = sum_oracle(trunc_oracle(l11, k, 10 ** 9, 80), n1)
    m00, m01, m10, m11 = 2, 3, (k - 1) * ns + 1, 30
    base = po_pmf(m00, n0 * l00) * po_pmf(m01, (ns + n1) * l01)
    out = sum(u_exact(n_vec, (m00, m01, m10, j), P) for j in range(0, 400))
    assert out == pytest.approx(base * s10[m10 - (k - 1) * ns], abs=1e-10)
    out = sum(u_exact(n_vec, (m00, j, m10, m11), P) for j in range(0, 80))
    assert out == pytest.approx(po_pmf(m00, n0 * l00) * s10[1] * s11[m11], abs=1e-10)
    # tail of the m_01 marginal
    rest = po_pmf(m00, n0 * l00) * s10[1] * s11[m11]
    t = 7
    tail = sum(u_exact(n_vec, (m00, j, m10, m11), P) for j in range(t, 80)) / rest
    assert tail == pytest.approx(stats.poisson.sf(t - 1, (ns + n1) * l01), abs=1e-10)
    # the m_11 factor against the brute convolution on its support
    ratio = [u_exact(n_vec, (m00, m01, m10, j), P) / (base * s10[1]) for j in range(k * n1, 60)]
    assert np.allclose(ratio, s11[k * n1:60], atol=1e-12)


def test_u_gaussian_centre_and_agreement():
    P = derive_params(5.0, 3)
    n, m = 200, 500
    nv, mv = u_centre(n, m, P)
    assert sum(nv) == n and sum(mv) == 2 * m and mv[1] == mv[2] and mv[3] % 2 == 0
    assert u_gaussian(nv, mv, P) == pytest.approx(u_exact(nv, mv, P), rel=0.15)
    S = sigma_matrix(P)
    peak = 1 / ((2 * math.pi * n) ** 2 * P.d ** 4 * math.sqrt(np.linalg.det(S)))
    assert u_gaussian(nv, mv, P) <= peak * (1 + 1e-12)


@pytest.mark.parametrize("d,k", [(5.0, 3), (7.0, 4)])
def test_u_gaussian_lattice_sum(d, k):
    # Sigma is diagonal, so the m-window sum factorises over the four coordinates
    P = derive_params(d, k)
    n = 1000
    m = int(d * n / 2)
    nv, mv = u_centre(n, m, P)
    S = sigma_matrix(P)
    c = u_gaussian(nv, mv, P, m)
    total = c ** -3
    for i in range(4):
        w = int(10 * P.d * math.sqrt(n * S[i, i])) + 2
        s = 0.0
        for j in range(max(0, mv[i] - w), mv[i] + w + 1):
            v = list(mv)
            v[i] = j
            s += u_gaussian(nv, v, P, m)
        total *= s
    assert total == pytest.approx(1, abs=0.02)


# ----------------------------------------------------------- gamma_count

def test_full_vectors():
    assert full_vectors((1, 2), (3, 4), 5, 8) == ((2, 1, 2), (6, 3, 3, 4))
    with pytest.raises(ValueError):
        full_vectors((4, 2), (0, 0), 5, 8)
    with pytest.raises(ValueError):
        full_vectors((1, 2), (3, 3), 5, 8)
    with pytest.raises(ValueError):
        full_vectors((1, 2), (9, 0), 5, 8)


def test_gamma_modes_consistent():
    P = derive_params(5.0, 3)
    n = 10 ** 4
    m = math.ceil(P.d * n / 2)
    t = centered_targets(n, m, P)
    vals = [gamma_count(t[:2], t[2:], n, m, P, mode) for mode in GAMMA_MODES]
    assert max(vals) - min(vals) <= 0.5
    with pytest.raises(ValueError):
        gamma_count(t[:2], t[2:], n, m, P, "nope")


def test_gamma_count_totals_below_all_graphs():
    # the classes partition all graphs: a single class is at most C(C(n,2), m)
    P = derive_params(5.0, 3)
    n, m = 2000, 5000
    t = centered_targets(n, m, P)
    allg = math.lgamma(n * (n - 1) // 2 + 1) - math.lgamma(m + 1) - math.lgamma(n * (n - 1) // 2 - m + 1)
    for mode in GAMMA_MODES:
        assert gamma_count(t[:2], t[2:], n, m, P, mode) < allg
