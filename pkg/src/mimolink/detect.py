"""Per-RE MIMO detection: LMMSE, exhaustive ML and the QR-reduced MMNet iteration.

All functions accept leading batch axes: ``H`` is ``(..., L, K)``, ``y`` is
``(..., L)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grid import Constellation

TAU_FLOOR = 1e-12
ML_MAX_BITS = 20


class RankError(np.linalg.LinAlgError):
    pass


class SearchSpaceError(ValueError):
    pass


def _her(A):
    return np.swapaxes(A, -1, -2).conj()


@dataclass
class QrReduced:
    Q_A: np.ndarray
    R_A: np.ndarray
    ybar: np.ndarray


def qr_reduce(H: np.ndarray, y: np.ndarray) -> QrReduced:
    """Thin QR with a real non-negative diagonal in ``R_A``; ``ybar = Q_A^H y``."""
    L, K = H.shape[-2:]
    if L < K:
        raise RankError(f"need L >= K, got L={L}, K={K}")
    Q, R = np.linalg.qr(H)
    d = np.einsum("...ii->...i", R)
    phase = np.where(np.abs(d) > 0, d / np.where(d == 0, 1, np.abs(d)), 1.0)
    Q = Q * phase[..., None, :]
    R = R * phase.conj()[..., :, None]
    tol = 1e-10 * np.linalg.norm(H, axis=(-2, -1))
    if np.any(np.abs(np.einsum("...ii->...i", R)) <= tol[..., None]):
        raise RankError("channel matrix is rank deficient")
    ybar = np.einsum("...lk,...l->...k", Q.conj(), y)
    return QrReduced(Q, R, ybar)


def lmmse_matrix(H: np.ndarray, sigma2) -> np.ndarray:
    """``(H^H H + sigma2 I)^-1 H^H``."""
    K = H.shape[-1]
    s2 = np.asarray(sigma2, dtype=float)[..., None, None]
    return np.linalg.solve(_her(H) @ H + s2 * np.eye(K), _her(H))


def lmmse_detect(H: np.ndarray, y: np.ndarray, sigma2) -> np.ndarray:
    return np.einsum("...kl,...l->...k", lmmse_matrix(H, sigma2), y)


def hard_decision(xhat: np.ndarray, c: Constellation) -> np.ndarray:
    """Nearest constellation point per entry; ties go to the lowest label."""
    return c.points[hard_indices(xhat, c)]


def hard_indices(xhat: np.ndarray, c: Constellation) -> np.ndarray:
    d2 = np.abs(np.asarray(xhat)[..., None] - c.points) ** 2
    return np.argmin(d2, axis=-1)


def ml_detect(H: np.ndarray, y: np.ndarray, c: Constellation, chunk: int = 4096) -> np.ndarray:
    """Exhaustive ``argmin ||y - Hx||^2`` over ``C^K``.

    Candidates are enumerated lexicographically by symbol index, so ties
    resolve to the smallest index vector.
    """
    K = H.shape[-1]
    if c.Q * K > ML_MAX_BITS:
        raise SearchSpaceError(f"2^{c.Q * K} candidates exceed the 2^{ML_MAX_BITS} limit")
    idx = np.array(list(itertools.product(range(c.order), repeat=K)))
    cand = c.points[idx]  # (S, K)
    lead = H.shape[:-2]
    Hf = H.reshape((-1,) + H.shape[-2:])
    yf = y.reshape((-1, y.shape[-1]))
    best = np.empty(len(Hf), dtype=int)
    for s in range(0, len(Hf), chunk):
        Hc, yc = Hf[s:s + chunk], yf[s:s + chunk]
        r = yc[:, None, :] - np.einsum("blk,sk->bsl", Hc, cand)
        best[s:s + chunk] = np.argmin(np.sum(np.abs(r) ** 2, axis=-1), axis=1)
    return cand[best].reshape(lead + (K,))


@dataclass
class DetectorParams:
    Theta: np.ndarray  # (K, K) complex, shared across iterations
    theta: np.ndarray  # (I, K) real per-iteration column scalings
    psi: np.ndarray  # (I, K) positive variance scalings

    def __post_init__(self):
        self.Theta = np.asarray(self.Theta, dtype=complex)
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        self.psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        if self.theta.shape != self.psi.shape or self.theta.shape[0] < 1:
            raise ValueError("theta and psi need matching (I, K) shapes with I >= 1")
        if self.Theta.shape[-1] != self.theta.shape[1]:
            raise ValueError("Theta column count differs from K")
        if np.any(self.psi <= 0):
            raise ValueError("psi must be positive")

    @property
    def iterations(self) -> int:
        return self.theta.shape[0]

    @property
    def K(self) -> int:
        return self.theta.shape[1]


def expand_shared_params(Theta: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """``Theta (I + diag(theta))``: column ``j`` scaled by ``1 + theta_j``."""
    return Theta * (1.0 + np.asarray(theta))[..., None, :]


@dataclass
class DetectorState:
    xhat: np.ndarray
    kappa: np.ndarray | None = None
    tau: np.ndarray | None = None


def gaussian_denoiser(kappa, tau, c: Constellation) -> np.ndarray:
    """Posterior mean of a constellation point seen through CN(0, tau) noise.

    ``tau <= 0`` returns the nearest point.
    """
    kappa = np.asarray(kappa, dtype=complex)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), kappa.shape)
    d2 = np.abs(kappa[..., None] - c.points) ** 2
    safe = np.where(tau > 0, tau, 1.0)[..., None]
    logw = -d2 / safe
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    soft = (w @ c.points) / w.sum(axis=-1)
    return np.where(tau > 0, soft, hard_decision(kappa, c))


def estimate_tau(R: np.ndarray, ybar: np.ndarray, xhat: np.ndarray, Theta_i: np.ndarray,
                 psi_i: np.ndarray, sigma2, noise_dim: int) -> np.ndarray:
    """Per-stream denoiser-input variance, clamped at zero before scaling."""
    K = R.shape[-1]
    resid = ybar - np.einsum("...ij,...j->...i", R, xhat)
    s2 = np.asarray(sigma2, dtype=float)
    excess = np.maximum(np.sum(np.abs(resid) ** 2, axis=-1) - noise_dim * s2, 0.0)
    ratio = (np.linalg.norm(np.eye(K) - Theta_i @ R, axis=(-2, -1)) ** 2
             / np.linalg.norm(R, axis=(-2, -1)) ** 2)
    core = ratio * excess + np.linalg.norm(Theta_i, axis=(-2, -1)) ** 2 * s2
    return np.asarray(psi_i) / K * core[..., None]


def mmnet_iterate(state: DetectorState, R: np.ndarray, ybar: np.ndarray, Theta_i: np.ndarray,
                  psi_i: np.ndarray, sigma2, c: Constellation, noise_dim: int) -> DetectorState:
    xhat = state.xhat
    kappa = xhat + np.einsum("...ij,...j->...i", Theta_i,
                             ybar - np.einsum("...ij,...j->...i", R, xhat))
    tau = estimate_tau(R, ybar, xhat, Theta_i, psi_i, sigma2, noise_dim)
    xnext = gaussian_denoiser(kappa, np.maximum(tau, TAU_FLOOR), c)
    return DetectorState(xnext, kappa, tau)


def mmnet_detect(H: np.ndarray, y: np.ndarray, sigma2, params: DetectorParams, c: Constellation,
                 noise_dim: str = "L", Theta: np.ndarray | None = None) -> tuple[np.ndarray, DetectorState]:
    """Run all iterations from ``xhat = 0`` and hard-decide the final soft estimate.

    ``noise_dim`` selects ``L sigma2`` (as in the update rule) or ``K sigma2``
    for the residual noise subtracted in the variance estimate. ``Theta``
    overrides ``params.Theta``, e.g. with a per-channel matrix.
    """
    qr = qr_reduce(H, y)
    L, K = H.shape[-2:]
    nd = {"L": L, "K": K}[noise_dim]
    base = params.Theta if Theta is None else Theta
    state = DetectorState(np.zeros(y.shape[:-1] + (K,), dtype=complex))
    for i in range(params.iterations):
        Th = expand_shared_params(base, params.theta[i])
        state = mmnet_iterate(state, qr.R_A, qr.ybar, Th, params.psi[i], sigma2, c, nd)
    return hard_decision(state.xhat, c), state


def save_params(params: DetectorParams, f) -> None:
    """Plain text: ``K I``, then Theta row-major, then I rows of theta, then I rows of psi."""
    K, I = params.K, params.iterations
    f.write(f"{K} {I}\n")
    for row in params.Theta:
        f.write(" ".join(repr(complex(v)).strip("()") for v in row) + "\n")
    for arr in (params.theta, params.psi):
        for row in arr:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_params(f, K: int | None = None, iterations: int | None = None) -> DetectorParams:
    toks = f.read().split()
    if len(toks) < 2:
        raise ValueError("parameter file too short")
    k, it = int(toks[0]), int(toks[1])
    if (K is not None and k != K) or (iterations is not None and it != iterations):
        raise ValueError(f"parameter file is for K={k}, I={it}; expected K={K}, I={iterations}")
    need = 2 + k * k + 2 * it * k
    if len(toks) != need:
        raise ValueError(f"expected {need} tokens, found {len(toks)}")
    vals = toks[2:]
    Theta = np.array([complex(t) for t in vals[:k * k]]).reshape(k, k)
    rest = np.array([float(t) for t in vals[k * k:]])
    return DetectorParams(Theta, rest[:it * k].reshape(it, k), rest[it * k:].reshape(it, k))
