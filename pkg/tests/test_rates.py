import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cn, random_channel, random_psd_trace1, unit_params
from symbiotic_radio.channel import dbm_to_watt
from symbiotic_radio.errors import NonPSD
from symbiotic_radio.rates import (
    BDSymbolSource, _sic_rates, bd_effective_vectors, bd_gram_matrix, bd_sumrate_from_precoder,
    bd_sumrate_kron, bd_sumrate_logdet, equivalent_channel, mmse_sic, primary_rate_instant,
    primary_rate_mc, psi_matrix, upper_bound_matrix,
)


def sic_oracle(x, sigma2, K, order):
    """Per-user MMSE SINR with an explicit inverse, users decoded in ``order``."""
    n = x.shape[1]
    sinr = {}
    for pos, j in enumerate(order):
        C = sigma2 * np.eye(n, dtype=complex)
        for i in order[pos + 1:]:
            C += np.outer(x[i], x[i].conj())
        sinr[j] = np.real(x[j].conj() @ np.linalg.inv(C) @ x[j])
    return sum(np.log2(1 + s) for s in sinr.values()) / K, sinr


def random_precoder(rng, M_t):
    M_s = rng.integers(1, M_t + 1)
    F = cn(rng, M_t, M_s)
    return F / np.linalg.norm(F) * np.sqrt(rng.uniform(0.3, 1.0))


@pytest.mark.parametrize("constellation", ["CSCG", "QPSK"])
def test_symbol_source_moments(constellation):
    c = BDSymbolSource(constellation, np.random.default_rng(0)).draw(200_000)
    assert np.mean(np.abs(c) ** 2) == pytest.approx(1.0, abs=0.01)
    assert abs(np.mean(c)) < 0.01
    if constellation == "QPSK":
        np.testing.assert_allclose(np.abs(c), 1.0)


def test_symbol_source_rejects_unknown():
    with pytest.raises(ValueError):
        BDSymbolSource("16QAM")


def test_equivalent_channel_cases(rng):
    ch = random_channel(rng, 3, 2, 4)
    c = cn(rng, 3)
    np.testing.assert_array_equal(equivalent_channel(ch, c, 0.0), ch.H_d)
    empty = ch.subset(0)
    np.testing.assert_array_equal(equivalent_channel(empty, np.zeros(0), 1.0), ch.H_d)
    one = ch.subset(1)
    H = equivalent_channel(one, np.array([1.0]), 0.49)
    for r in range(4):
        for t in range(2):
            assert H[r, t] == pytest.approx(ch.H_d[r, t] + 0.7 * ch.g[0, r] * np.conj(ch.h[0, t]))
    batch = cn(rng, 5, 3)
    Hs = equivalent_channel(ch, batch, 0.5)
    for s in range(5):
        np.testing.assert_allclose(Hs[s], equivalent_channel(ch, batch[s], 0.5), atol=1e-14)
    with pytest.raises(ValueError):
        equivalent_channel(ch, np.ones(2), 1.0)


def test_primary_rate_instant_cases(rng):
    H = cn(rng, 4, 3)
    assert primary_rate_instant(H, np.zeros((3, 3)), 10.0) == 0.0
    h = 0.3 - 0.4j
    assert primary_rate_instant(np.array([[h]]), np.array([[0.6]]), 7.0) == pytest.approx(
        np.log2(1 + 7.0 * abs(h) ** 2 * 0.6))
    Q = random_psd_trace1(rng, 3)
    lhs = primary_rate_instant(H, Q, 5.0)
    rhs = np.log2(np.real(np.linalg.det(np.eye(3) + 5.0 * Q @ H.conj().T @ H)))
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_primary_rate_rejects_bad_covariance(rng):
    H = cn(rng, 2, 2)
    with pytest.raises(NonPSD):
        primary_rate_instant(H, np.diag([1.2, -0.2]), 1.0)
    with pytest.raises(ValueError):
        primary_rate_instant(H, np.eye(2), 1.0)


def test_primary_rate_concave(rng):
    H = cn(rng, 4, 3)
    f = lambda Q: primary_rate_instant(H, Q, 20.0)
    for _ in range(50):
        Q1, Q2 = random_psd_trace1(rng, 3), random_psd_trace1(rng, 3, rank=1)
        t = rng.uniform()
        assert f(t * Q1 + (1 - t) * Q2) >= t * f(Q1) + (1 - t) * f(Q2) - 1e-9


def test_primary_rate_mc(rng):
    ch = random_channel(rng, 4, 2, 3)
    Q = random_psd_trace1(rng, 2)
    p = unit_params(4, 2, 3, alpha=0.0)
    m, se = primary_rate_mc(ch, Q, p, BDSymbolSource(rng=1), 50)
    assert se == pytest.approx(0.0, abs=1e-12)
    assert m == pytest.approx(primary_rate_instant(ch.H_d, Q, p.snr), abs=1e-12)
    p = unit_params(4, 2, 3)
    m1, se1 = primary_rate_mc(ch, Q, p, BDSymbolSource(rng=2), 1)
    c = BDSymbolSource(rng=2).draw((1, 4))
    assert np.isnan(se1)
    assert m1 == primary_rate_instant(equivalent_channel(ch, c[0], 1.0), Q, p.snr)
    a = primary_rate_mc(ch, Q, p, BDSymbolSource(rng=3), 100)
    b = primary_rate_mc(ch, Q, p, BDSymbolSource(rng=3), 100)
    assert a == b


def test_effective_vectors(rng):
    ch = random_channel(rng, 3, 3, 2)
    p = unit_params(3, 3, 2)
    assert np.all(bd_effective_vectors(ch, np.zeros((3, 2)), p) == 0)
    scale = np.sqrt(p.K * dbm_to_watt(p.P_dbm) * p.alpha)
    f = cn(rng, 3, 1)
    x = bd_effective_vectors(ch, f, p)
    for j in range(3):
        np.testing.assert_allclose(x[j], scale * (ch.h[j].conj() @ f[:, 0]) * ch.g[j], atol=1e-12)
    F = random_precoder(rng, 3)
    x = bd_effective_vectors(ch, F, p)
    vecI = np.eye(3).reshape(-1, order="F")
    for j in range(3):
        Hj = np.outer(ch.g[j], ch.h[j].conj())
        np.testing.assert_allclose(x[j], scale * np.kron(F.T, Hj) @ vecI, atol=1e-10)


def test_psi_selects_effective_vectors(rng):
    # (F^T kron H) Psi stacks the x_j / scale as columns
    for J, M_t, M_r in [(1, 1, 1), (2, 3, 2), (4, 2, 3)]:
        ch = random_channel(rng, J, M_t, M_r)
        p = unit_params(J, M_t, M_r)
        F = random_precoder(rng, M_t)
        X = np.kron(F.T, ch.cascade()) @ psi_matrix(M_t, J)
        scale = np.sqrt(p.K * dbm_to_watt(p.P_dbm) * p.alpha)
        np.testing.assert_allclose(X.T * scale, bd_effective_vectors(ch, F, p), atol=1e-10)
        Psi = psi_matrix(M_t, J)
        assert Psi.shape == (M_t * M_t * J, J)
        np.testing.assert_array_equal(Psi.T @ Psi, M_t * np.eye(J))


def test_mmse_sic_trivial_cases(rng):
    x = cn(rng, 1, 6)
    rep = mmse_sic(x, 2.0, 64)
    gamma = np.sum(np.abs(x) ** 2) / 2.0
    assert rep.per_bd_sinr[0] == pytest.approx(gamma)
    assert rep.bd_sum_rate_bits == pytest.approx(np.log2(1 + gamma) / 64)
    assert mmse_sic(np.zeros((3, 4)), 1.0, 8).bd_sum_rate_bits == 0.0
    assert mmse_sic(np.zeros((0, 4)), 1.0, 8).bd_sum_rate_bits == 0.0


def test_mmse_sic_matches_oracle_and_order(rng):
    x = cn(rng, 3, 5) * np.array([[0.5], [2.0], [1.0]])
    rep = mmse_sic(x, 0.7, 16)
    assert rep.decode_order == [2, 3, 1]
    total, sinr = sic_oracle(x, 0.7, 16, [1, 2, 0])
    assert rep.bd_sum_rate_bits == pytest.approx(total, rel=1e-12)
    np.testing.assert_allclose(rep.per_bd_sinr, [sinr[j] for j in range(3)], rtol=1e-10)
    assert rep.bd_sum_rate_bits == pytest.approx(bd_sumrate_logdet(x, 0.7, 16), rel=1e-9)
    assert rep.bd_sum_rate_bits == pytest.approx(
        np.sum(np.log2(1 + np.array(rep.per_bd_sinr))) / 16, rel=1e-9)


def test_mmse_sic_ties_by_index():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1j, 0.0]])
    assert mmse_sic(x, 1.0, 1).decode_order == [1, 2, 3]


def test_sic_sum_invariant_to_order(rng):
    x = cn(rng, 4, 3)
    ref = bd_sumrate_logdet(x, 0.3, 8)
    sinrs = set()
    for order in itertools.permutations(range(4)):
        rep = _sic_rates(x, 0.3, 8, list(order))
        assert rep.bd_sum_rate_bits == pytest.approx(ref, rel=1e-10)
        sinrs.add(tuple(np.round(rep.per_bd_sinr, 8)))
    assert len(sinrs) > 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5), st.integers(1, 6))
def test_adding_a_bd_never_lowers_the_sum(seed, J, n):
    rng = np.random.default_rng(seed)
    x = cn(rng, J + 1, n)
    assert bd_sumrate_logdet(x, 1.0, 4) >= bd_sumrate_logdet(x[:J], 1.0, 4) - 1e-12


def test_kron_form_cases(rng):
    ch = random_channel(rng, 1, 3, 2)
    p = unit_params(1, 3, 2)
    assert bd_sumrate_kron(np.zeros((3, 3)), ch, p) == 0.0
    Q = random_psd_trace1(rng, 3)
    h, g = ch.h[0], ch.g[0]
    closed = np.log2(1 + p.K * p.snr * p.alpha * np.sum(np.abs(g) ** 2)
                     * np.real(h.conj() @ Q @ h)) / p.K
    assert bd_sumrate_kron(Q, ch, p) == pytest.approx(closed, rel=1e-10)


def test_kron_form_equals_logdet_and_independent_of_factorization(rng):
    ch = random_channel(rng, 4, 3, 3)
    p = unit_params(4, 3, 3)
    F = random_precoder(rng, 3)
    Q = F @ F.conj().T
    ref = bd_sumrate_logdet(bd_effective_vectors(ch, F, p), dbm_to_watt(p.sigma2_dbm), p.K)
    for literal in (True, False):
        assert bd_sumrate_kron(Q, ch, p, literal=literal) == pytest.approx(ref, rel=1e-9)
    # any other square root of Q gives the same BD rate
    U, _ = np.linalg.qr(cn(rng, F.shape[1], F.shape[1]))
    F2 = np.hstack([F @ U, np.zeros((3, 2))])
    assert bd_sumrate_from_precoder(F2, ch, p).bd_sum_rate_bits == pytest.approx(ref, rel=1e-9)


def test_gram_entries(rng):
    ch = random_channel(rng, 3, 2, 2)
    Q = random_psd_trace1(rng, 2)
    G = bd_gram_matrix(Q, ch, None)
    for i in range(3):
        for j in range(3):
            expect = (ch.h[i].conj() @ Q @ ch.h[j]) * (ch.g[j].conj() @ ch.g[i])
            assert G[i, j] == pytest.approx(expect)


def test_upper_bound_matrix(rng):
    ch = random_channel(rng, 3, 2, 4)
    R = ch.H_d.conj().T @ ch.H_d
    for j in range(3):
        R = R + 0.5 * np.linalg.norm(ch.g[j]) ** 2 * np.outer(ch.h[j], ch.h[j].conj())
    np.testing.assert_allclose(upper_bound_matrix(ch, 0.5), R, atol=1e-12)
    np.testing.assert_allclose(upper_bound_matrix(ch.subset(0), 0.5),
                               ch.H_d.conj().T @ ch.H_d, atol=1e-12)
