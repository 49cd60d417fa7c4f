import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimolink.channel import crandn
from mimolink.equalize import (UnobservableStream, equalize_group, grouped_lmmse_grid,
                               grouped_lmmse_matrix, post_eq_variance, rescale_matrix,
                               zero_forcing_matrix)
from mimolink.grid import gray_constellation

from conftest import rel_fro


def wiener(H, s2):
    L = H.shape[-2]
    return H.conj().T @ np.linalg.inv(H @ H.conj().T + s2 * np.eye(L))


def test_scalar_example():
    W = grouped_lmmse_matrix(np.ones((1, 1)), np.zeros((1, 1)), 1.0)
    assert W[0, 0] == pytest.approx(0.5)


def test_identical_group_members_match_singleton(rng):
    H = crandn(rng, (4, 2))
    E = 0.1 * np.eye(4)
    single = grouped_lmmse_matrix(H, E, 0.3)
    pair = grouped_lmmse_matrix(np.stack([H, H]), np.stack([E, E]), 0.3)
    assert np.allclose(single, pair, atol=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(0, 4), st.floats(1e-3, 10), st.integers(0, 2 ** 32 - 1))
def test_singleton_group_is_wiener_filter(K, extra, s2, seed):
    rng = np.random.default_rng(seed)
    L = K + extra
    H = crandn(rng, (L, K))
    W = grouped_lmmse_matrix(H, np.zeros((L, L)), s2)
    assert rel_fro(W, wiener(H, s2)) < 1e-10


def test_grid_matches_per_group_operator(rng):
    Hhat = crandn(rng, (5, 9, 3, 2))
    A = crandn(rng, (5, 9, 3, 3)) * 0.1
    E = A @ np.swapaxes(A, -1, -2).conj()
    W = grouped_lmmse_grid(Hhat, E, 0.2, (2, 4))
    ref = grouped_lmmse_matrix(Hhat[2:4, 4:8].reshape(-1, 3, 2), E[2:4, 4:8].reshape(-1, 3, 3), 0.2)
    assert np.allclose(W[3, 5], ref)
    # truncated corner group
    ref = grouped_lmmse_matrix(Hhat[4:, 8:].reshape(-1, 3, 2), E[4:, 8:].reshape(-1, 3, 3), 0.2)
    assert np.allclose(W[4, 8], ref)
    assert np.allclose(W[2, 4], W[3, 7])


def test_grid_with_batch_axis(rng):
    Hhat = crandn(rng, (3, 4, 4, 2, 2))
    W = grouped_lmmse_grid(Hhat, np.zeros((4, 4, 2, 2)), 0.5, (2, 2))
    single = grouped_lmmse_grid(Hhat[1], np.zeros((4, 4, 2, 2)), 0.5, (2, 2))
    assert np.allclose(W[1], single)


def test_rescale_examples():
    assert np.allclose(rescale_matrix(np.eye(2), np.eye(2)), 1)
    assert np.allclose(rescale_matrix(np.diag([2.0, 4.0]), np.eye(2)), [0.5, 0.25])
    with pytest.raises(UnobservableStream):
        rescale_matrix(np.diag([1.0, 0.0]), np.eye(2))


def test_equalize_examples():
    W = grouped_lmmse_matrix(np.ones((1, 1)), np.zeros((1, 1)), 1e-12)
    D = rescale_matrix(W, np.ones((1, 1)))
    assert equalize_group(np.array([0.3 - 0.2j]), W, D)[0] == pytest.approx(0.3 - 0.2j)
    assert equalize_group(np.zeros(1), W, D)[0] == 0


def test_scalar_variance_is_noise():
    rho2 = post_eq_variance(np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)), 0.37)
    assert rho2[0] == pytest.approx(0.37)


def test_variance_matches_monte_carlo(rng):
    L, K, s2, T = 4, 2, 0.2, 200_000
    Hhat = crandn(rng, (L, K))
    Es = []
    for _ in range(K):
        A = 0.2 * crandn(rng, (L, L))
        Es.append(A @ A.conj().T)
    E = sum(Es)
    W = grouped_lmmse_matrix(Hhat, E, s2)
    D = rescale_matrix(W, Hhat)
    c = gray_constellation(2)
    x = c.points[rng.integers(0, 4, (T, K))]
    H = Hhat + np.stack([crandn(rng, (T, L)) @ np.linalg.cholesky(Ek + 1e-15 * np.eye(L)).T
                         for Ek in Es], axis=-1)
    y = np.einsum("tlk,tk->tl", H, x) + np.sqrt(s2) * crandn(rng, (T, L))
    xhat = equalize_group(y, W, D)
    emp = np.mean(np.abs(xhat - x) ** 2, axis=0)
    assert np.allclose(emp, post_eq_variance(W, Hhat, E, s2), rtol=0.02)


def test_variance_decreases_with_snr(rng):
    Hhat = crandn(rng, (50, 4, 2))
    E = np.zeros((50, 4, 4))
    prev = np.inf
    for snr in range(-10, 31, 5):
        s2 = 10 ** (-snr / 10)
        W = grouped_lmmse_grid(Hhat[:, None], E[:, None], s2, (1, 1))
        m = post_eq_variance(W, Hhat[:, None], E[:, None], s2).mean()
        assert m <= prev + 1e-12
        prev = m


def test_lmmse_beats_zero_forcing_mse(rng):
    T, L, K, s2 = 20_000, 3, 3, 0.3
    H = crandn(rng, (T, L, K))
    x = gray_constellation(2).points[rng.integers(0, 4, (T, K))]
    y = np.einsum("tlk,tk->tl", H, x) + np.sqrt(s2) * crandn(rng, (T, L))
    Wl = grouped_lmmse_grid(H[:, None], np.zeros((T, 1, L, L)), s2, (1, 1))[:, 0]
    el = np.abs(np.einsum("tkl,tl->tk", Wl, y) - x) ** 2
    ez = np.abs(np.einsum("tkl,tl->tk", zero_forcing_matrix(H), y) - x) ** 2
    d = (el - ez).ravel()
    assert d.mean() <= 3 * d.std() / np.sqrt(d.size)
