"""Grouped-LMMSE uplink equalisation.

One ``K x L`` operator is shared by every RE of a rectangular group; per-RE
rescaling then makes each stream's effective gain one so the equaliser
output reads as symbol plus additive noise.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla


class UnobservableStream(ArithmeticError):
    """The equalised gain of one or more streams is zero."""

    def __init__(self, streams):
        self.streams = list(streams)
        super().__init__(f"zero effective gain for stream(s) {self.streams}")


def _her(A: np.ndarray) -> np.ndarray:
    return np.swapaxes(A, -1, -2).conj()


def grouped_lmmse_matrix(Hhat: np.ndarray, E: np.ndarray, sigma2: float) -> np.ndarray:
    """LMMSE operator for one group.

    ``Hhat`` is ``(G, L, K)`` (or a single ``(L, K)`` matrix) and ``E`` the
    matching ``(G, L, L)`` error covariances.
    """
    Hhat = np.asarray(Hhat).reshape((-1,) + np.shape(Hhat)[-2:])
    E = np.asarray(E).reshape((-1,) + np.shape(E)[-2:])
    L = Hhat.shape[-2]
    A = _her(Hhat).sum(axis=0)
    B = (Hhat @ _her(Hhat) + E).sum(axis=0) + len(Hhat) * sigma2 * np.eye(L)
    # W = A B^-1  <=>  B W^H = A^H  (B Hermitian)
    return sla.solve(B, A.conj().T, assume_a="her").conj().T


def _group_sum(X: np.ndarray, group: tuple[int, int], m_axis: int) -> np.ndarray:
    M, N = X.shape[m_axis], X.shape[m_axis + 1]
    X = np.add.reduceat(X, np.arange(0, M, group[0]), axis=m_axis)
    return np.add.reduceat(X, np.arange(0, N, group[1]), axis=m_axis + 1)


def _expand_groups(Xg: np.ndarray, group: tuple[int, int], M: int, N: int, m_axis: int) -> np.ndarray:
    X = np.repeat(Xg, group[0], axis=m_axis)
    X = np.repeat(X, group[1], axis=m_axis + 1)
    return np.take(np.take(X, np.arange(M), axis=m_axis), np.arange(N), axis=m_axis + 1)


def grouped_lmmse_grid(Hhat: np.ndarray, E: np.ndarray, sigma2: float,
                       group: tuple[int, int] = (2, 7)) -> np.ndarray:
    """Per-RE operators ``W[..., m, n, :, :]`` (``K x L``), constant inside each group.

    ``Hhat`` is ``(..., M, N, L, K)`` and ``E`` broadcastable to
    ``(..., M, N, L, L)``. Groups tile the grid from ``(0, 0)``; the last
    row/column of groups may be truncated.
    """
    M, N, L = Hhat.shape[-4], Hhat.shape[-3], Hhat.shape[-2]
    m_axis = Hhat.ndim - 4
    R = Hhat @ _her(Hhat) + E
    A = _group_sum(_her(Hhat), group, m_axis)
    B = _group_sum(np.broadcast_to(R, Hhat.shape[:-1] + (L,)), group, m_axis)
    counts = _group_sum(np.ones((M, N)), group, 0)
    B = B + (sigma2 * counts)[..., None, None] * np.eye(L)
    Wg = _her(np.linalg.solve(B, _her(A)))
    return _expand_groups(Wg, group, M, N, m_axis)


def rescale_matrix(W: np.ndarray, Hhat: np.ndarray) -> np.ndarray:
    """Diagonal of ``((W Hhat) o I)^-1``, shape ``(..., K)``."""
    g = np.einsum("...kl,...lk->...k", W, Hhat)
    zero = g == 0
    if np.any(zero):
        raise UnobservableStream(np.flatnonzero(np.any(zero.reshape(-1, g.shape[-1]), axis=0)))
    return 1.0 / g


def equalize_group(y: np.ndarray, W: np.ndarray, D: np.ndarray) -> np.ndarray:
    """``xhat = D W y`` per RE; ``D`` given as its diagonal."""
    return D * np.einsum("...kl,...l->...k", W, y)


def post_eq_variance(W: np.ndarray, Hhat: np.ndarray, E: np.ndarray, sigma2: float,
                     k: int | None = None) -> np.ndarray:
    """Noise-plus-interference variance after equalisation and rescaling.

    The stream-``k`` output is ``w^H y`` with ``w`` the conjugated ``k``-th
    row of ``W``. Works per RE with leading axes; ``k=None`` returns all
    streams.
    """
    L, K = Hhat.shape[-2], Hhat.shape[-1]
    cross = np.abs(W @ Hhat) ** 2  # [k, j] = |w_k^H h_j|^2
    den = np.einsum("...kk->...k", cross)
    if np.any(den == 0):
        raise UnobservableStream(np.flatnonzero(np.any((den == 0).reshape(-1, K), axis=0)))
    R = E + sigma2 * np.eye(L)
    noise = np.real(np.einsum("...kl,...lp,...kp->...k", W, R, W.conj()))
    interference = (cross * (1 - np.eye(K))).sum(axis=-1)
    rho2 = (interference + noise) / den
    return rho2 if k is None else rho2[..., k]


def zero_forcing_matrix(H: np.ndarray) -> np.ndarray:
    """``(H^H H)^-1 H^H`` per RE."""
    return np.linalg.solve(_her(H) @ H, _her(H))
