import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimolink.channel import crandn
from mimolink.detect import (TAU_FLOOR, DetectorParams, DetectorState, RankError, SearchSpaceError,
                             estimate_tau, expand_shared_params, gaussian_denoiser, hard_decision,
                             lmmse_detect, lmmse_matrix, load_params, ml_detect, mmnet_detect,
                             mmnet_iterate, qr_reduce, save_params)
from mimolink.grid import gray_constellation

QPSK = gray_constellation(2)
QAM16 = gray_constellation(4)


def test_qr_of_identity(rng):
    y = crandn(rng, 3)
    qr = qr_reduce(np.eye(3, dtype=complex), y)
    assert np.allclose(qr.R_A, np.eye(3)) and np.allclose(qr.ybar, y)


def test_qr_diagonal_real_nonnegative(rng):
    qr = qr_reduce(crandn(rng, (10, 5, 3)), crandn(rng, (10, 5)))
    d = np.einsum("...ii->...i", qr.R_A)
    assert np.all(d.real > 0) and np.allclose(d.imag, 0)


def test_qr_rank_errors(rng):
    with pytest.raises(RankError):
        qr_reduce(crandn(rng, (2, 3)), crandn(rng, 2))
    H = crandn(rng, (4, 1))
    with pytest.raises(RankError):
        qr_reduce(np.hstack([H, H]), crandn(rng, 4))


def test_lmmse_examples(rng):
    assert lmmse_detect(np.ones((1, 1)), np.array([2.0]), 1.0)[0] == pytest.approx(1.0)
    H = crandn(rng, (3, 3))
    y = crandn(rng, 3)
    assert np.allclose(lmmse_detect(H, y, 1e-12), np.linalg.solve(H, y), atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3), st.floats(1e-3, 10), st.integers(0, 2 ** 32 - 1))
def test_lmmse_qr_invariance(K, extra, s2, seed):
    rng = np.random.default_rng(seed)
    H, y = crandn(rng, (K + extra, K)), crandn(rng, K + extra)
    qr = qr_reduce(H, y)
    a, b = lmmse_detect(H, y, s2), lmmse_detect(qr.R_A, qr.ybar, s2)
    assert np.linalg.norm(a - b) <= 1e-10 * max(1.0, np.linalg.norm(a))


def test_hard_decision_examples():
    pts = QAM16.points
    assert np.allclose(hard_decision(pts, QAM16), pts)
    assert hard_decision(np.array(0j), QPSK) == QPSK.points[0]
    x = 0.9 + 0.1j
    assert hard_decision(np.array(x), QAM16) == pts[np.argmin([abs(x - p) for p in pts])]


def test_ml_noiseless_recovers(rng):
    H = crandn(rng, (50, 4, 2))
    x = QAM16.points[rng.integers(0, 16, (50, 2))]
    y = np.einsum("blk,bk->bl", H, x)
    assert np.allclose(ml_detect(H, y, QAM16), x)


def test_ml_single_user_is_matched_filter_slicer(rng):
    h = crandn(rng, (30, 3, 1))
    y = crandn(rng, (30, 3))
    z = np.einsum("bl,bl->b", h[..., 0].conj(), y) / np.sum(np.abs(h[..., 0]) ** 2, axis=-1)
    brute = np.array([min(QAM16.points, key=lambda p: np.sum(np.abs(yy - hh[:, 0] * p) ** 2))
                      for hh, yy in zip(h, y)])
    assert np.allclose(ml_detect(h, y, QAM16)[:, 0], brute)
    assert np.allclose(hard_decision(z, QAM16), brute)


def test_ml_search_space_limit():
    with pytest.raises(SearchSpaceError):
        ml_detect(np.ones((6, 3)), np.ones(6), gray_constellation(8))


def test_expand_shared_params():
    Theta = np.arange(4.0).reshape(2, 2) + 1
    assert np.allclose(expand_shared_params(Theta, np.zeros(2)), Theta)
    assert np.allclose(expand_shared_params(Theta, np.array([1.0, -1.0])), Theta * [2, 0])


def test_iterate_at_truth_is_fixed_point(rng):
    H = crandn(rng, (4, 2))
    x = QPSK.points[[1, 2]]
    qr = qr_reduce(H, H @ x)
    st_ = mmnet_iterate(DetectorState(x), qr.R_A, qr.ybar, lmmse_matrix(qr.R_A, 0.1),
                        np.ones(2), 0.0, QPSK, 4)
    assert np.allclose(st_.kappa, x) and np.allclose(st_.xhat, x)


def test_zero_theta_freezes_linear_step(rng):
    H, y = crandn(rng, (4, 2)), crandn(rng, 4)
    qr = qr_reduce(H, y)
    x0 = crandn(rng, 2)
    st_ = mmnet_iterate(DetectorState(x0), qr.R_A, qr.ybar, np.zeros((2, 2)), np.ones(2), 0.1, QPSK, 4)
    assert np.allclose(st_.kappa, x0)


def test_tau_nonnegative_and_linear_in_psi(rng):
    H, y = crandn(rng, (20, 4, 2)), crandn(rng, (20, 4)) * 0.01
    qr = qr_reduce(H, y)
    Th = lmmse_matrix(qr.R_A, 0.5)
    t1 = estimate_tau(qr.R_A, qr.ybar, np.zeros((20, 2)), Th, np.array([0.7, 1.3]), 0.5, 4)
    t2 = estimate_tau(qr.R_A, qr.ybar, np.zeros((20, 2)), Th, np.array([1.4, 2.6]), 0.5, 4)
    assert np.all(t1 >= 0)
    assert np.array_equal(2 * t1, t2)


def test_one_iteration_matches_lmmse(rng):
    H = crandn(rng, (100, 4, 2))
    x = QPSK.points[rng.integers(0, 4, (100, 2))]
    s2 = 0.5
    y = np.einsum("blk,bk->bl", H, x) + np.sqrt(s2) * crandn(rng, (100, 4))
    qr = qr_reduce(H, y)
    params = DetectorParams(np.eye(2), np.zeros((1, 2)), np.full((1, 2), 1e-30))
    hard, state = mmnet_detect(H, y, s2, params, QPSK, Theta=lmmse_matrix(qr.R_A, s2))
    assert np.all(state.tau <= TAU_FLOOR)
    assert np.array_equal(hard, hard_decision(lmmse_detect(H, y, s2), QPSK))


def test_denoiser_examples():
    assert abs(gaussian_denoiser(0j, 0.7, QPSK)) < 1e-15
    p = (1 + 1j) / np.sqrt(2)
    assert gaussian_denoiser(p + 0.01, 1e-14, QPSK) == p
    assert gaussian_denoiser(p + 0.01, 0.0, QPSK) == p
    k, tau = 0.3 + 0j, 0.5
    w = np.exp(-np.abs(k - QPSK.points) ** 2 / tau)
    assert gaussian_denoiser(k, tau, QPSK) == pytest.approx(np.sum(w * QPSK.points) / np.sum(w), abs=1e-12)


def test_denoiser_large_tau_tends_to_mean():
    assert abs(gaussian_denoiser(0.4 - 0.2j, 1e9, QAM16)) < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.complex_numbers(max_magnitude=50), st.floats(1e-8, 1e3), st.sampled_from([2, 4, 6]))
def test_denoiser_in_convex_hull(kappa, tau, Q):
    c = gray_constellation(Q)
    out = gaussian_denoiser(kappa, tau, c)
    m = np.max(c.points.real) + 1e-12
    assert abs(out.real) <= m and abs(out.imag) <= m


def test_params_roundtrip_and_mismatch():
    p = DetectorParams(np.array([[0.5 - 0.1j, 0.2], [0, 1j]]), [[0.1, -0.2], [0.0, 0.3]], [[1, 2], [3, 4]])
    s = io.StringIO()
    save_params(p, s)
    s.seek(0)
    q = load_params(s, K=2, iterations=2)
    assert np.array_equal(p.Theta, q.Theta) and np.array_equal(p.psi, q.psi)
    s.seek(0)
    with pytest.raises(ValueError):
        load_params(s, K=3)


def test_params_validation():
    with pytest.raises(ValueError):
        DetectorParams(np.eye(2), np.zeros((1, 2)), np.zeros((1, 2)))
