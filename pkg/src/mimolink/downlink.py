"""Downlink precoding by uplink-downlink duality and per-user reception.

The precoder is the Hermitian of the grouped-LMMSE uplink operator with
rows normalised to unit energy, ``t = W^H (C s)``. Users see the ``K x K``
equivalent channel ``G = H^H W^H C`` and estimate each coefficient of their
row separately with scalar LMMSE on the pilot lattice.
"""

from __future__ import annotations

import numpy as np

from .chanest import interpolate_grid, lmmse_pilot_estimate, nearest_pilot_map, pilot_error_covariance
from .grid import PilotPattern


class ZeroRowError(ArithmeticError):
    pass


class EqualizationError(ArithmeticError):
    pass


def _her(A):
    return np.swapaxes(A, -1, -2).conj()


def normalization_matrix(W: np.ndarray) -> np.ndarray:
    """Diagonal of ``((W W^H) o I)^-1/2``, shape ``(..., K)``."""
    row_energy = np.sum(np.abs(W) ** 2, axis=-1)
    if np.any(row_energy == 0):
        raise ZeroRowError("precoder has an all-zero row")
    return 1.0 / np.sqrt(row_energy)


def precode(s: np.ndarray, W: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.einsum("...kl,...k->...l", W.conj(), c * s)


def equivalent_channel(H: np.ndarray, W: np.ndarray, c: np.ndarray) -> np.ndarray:
    return _her(H) @ _her(W) * c[..., None, :]


def transmit_energy(W: np.ndarray, c: np.ndarray) -> np.ndarray:
    """``tr(W^H C^2 W)``: expected ``||t||^2`` for unit-energy i.i.d. symbols."""
    return np.real(np.einsum("...k,...kl,...kl->...", c ** 2, W, W.conj()))


def dl_estimate_equalize(u: np.ndarray, Omega: np.ndarray, Psi: np.ndarray, sigma2: float,
                         pattern: PilotPattern, k: int, mode: str = "spectral"):
    """Estimate user ``k``'s equivalent-channel row and equalise its stream.

    ``u`` holds the user's received samples over one downlink slot,
    ``(..., M, N)``; stream ``i`` carries a unit pilot on ``P^(i)`` while all
    other streams are silent there. Returns ``(ghat, v, shat)`` with
    ``ghat`` and ``v`` of shape ``(..., M, N, K)`` and ``shat`` ``(..., M, N)``.
    """
    M, N = pattern.M, pattern.N
    K = pattern.K
    lead = u.shape[:-2]
    ghat = np.zeros(lead + (M, N, K), dtype=complex)
    v = np.zeros((M, N, K))
    for i in range(K):
        ms, ns = pattern.symbols[i], pattern.subcarriers[i]
        cov = Omega if i == k else Psi
        yp = u[..., ms[:, None], ns[None, :]][..., None]
        gp = lmmse_pilot_estimate(yp, cov, sigma2)
        ghat[..., i] = interpolate_grid(gp, ms, ns, M, N, mode)[..., 0]
        var_p = np.real(np.diag(pilot_error_covariance(cov, sigma2))).reshape(len(ms), len(ns))
        a, b = nearest_pilot_map(ms, ns, M, N)
        v[..., i] = np.clip(var_p[a, b], 0.0, None)
    main = ghat[..., k]
    if np.any(main == 0):
        raise EqualizationError(f"user {k + 1}: zero main-channel estimate")
    return ghat, np.broadcast_to(v, ghat.shape), u / main


def dl_post_eq_variance(ghat: np.ndarray, v: np.ndarray, sigma2: float, k: int) -> np.ndarray:
    """``(v_kk + ||ghat_-k||^2 + sum_{i != k} v_i + sigma2) / |ghat_kk|^2``."""
    main = np.abs(ghat[..., k]) ** 2
    if np.any(main == 0):
        raise EqualizationError("zero main-channel estimate")
    interference = np.sum(np.abs(np.delete(ghat, k, axis=-1)) ** 2, axis=-1)
    return (np.sum(v, axis=-1) + interference + sigma2) / main
