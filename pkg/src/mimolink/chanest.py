"""Pilot-based LMMSE channel estimation and estimation-error statistics.

Pilot tensors are vectorised symbol-major, then subcarrier, then antenna:
entry ``(i, j, l)`` of a ``|P_M| x |P_N| x L`` tensor sits at
``(i * |P_N| + j) * L + l``. Covariance files must use the same order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .grid import PilotPattern

VEC_ORDER = "symbol,subcarrier,antenna"


def _shrinkage(Sigma: np.ndarray, sigma2: float) -> np.ndarray:
    """``Sigma (Sigma + sigma2 I)^-1`` via a Hermitian solve."""
    n = Sigma.shape[0]
    A = Sigma + sigma2 * np.eye(n)
    # X A = Sigma  <=>  A^H X^H = Sigma^H, A Hermitian
    return sla.solve(A, Sigma.conj().T, assume_a="her").conj().T


def lmmse_pilot_estimate(y_pilots: np.ndarray, Sigma: np.ndarray, sigma2: float) -> np.ndarray:
    """LMMSE estimate of the channel at pilot REs.

    ``y_pilots`` has shape ``(..., |P_M|, |P_N|, L)``; leading axes are
    treated as independent observations sharing ``Sigma``.
    """
    y_pilots = np.asarray(y_pilots)
    n = int(np.prod(y_pilots.shape[-3:]))
    if Sigma.shape != (n, n):
        raise ValueError(f"Sigma is {Sigma.shape}, pilot tensor needs ({n}, {n})")
    G = _shrinkage(Sigma, sigma2)
    flat = y_pilots.reshape(y_pilots.shape[:-3] + (n,))
    return (flat @ G.T).reshape(y_pilots.shape)


def pilot_error_covariance(Sigma: np.ndarray, sigma2: float) -> np.ndarray:
    if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1]:
        raise ValueError("Sigma must be square")
    E = Sigma - _shrinkage(Sigma, sigma2) @ Sigma
    return (E + E.conj().T) / 2


def _interp_axis(x: np.ndarray, xp: np.ndarray, fp: np.ndarray, axis: int) -> np.ndarray:
    """Piecewise-linear interpolation of complex ``fp`` along ``axis``; constant beyond the ends."""
    fp = np.moveaxis(fp, axis, -1)
    if len(xp) == 1:
        out = np.repeat(fp, len(x), axis=-1)
        return np.moveaxis(out, -1, axis)
    j = np.clip(np.searchsorted(xp, x, side="right") - 1, 0, len(xp) - 2)
    t = np.clip((x - xp[j]) / (xp[j + 1] - xp[j]), 0.0, 1.0)
    out = fp[..., j] * (1 - t) + fp[..., j + 1] * t
    return np.moveaxis(out, -1, axis)


def _nearest_index(x: np.ndarray, xp: np.ndarray) -> np.ndarray:
    """Index into ``xp`` nearest to each ``x``; ties go to the lower position."""
    dist = np.abs(x[:, None] - xp[None, :])
    return np.argmin(dist, axis=1)


def interpolate_grid(pilot_estimates: np.ndarray, symbols: np.ndarray, subcarriers: np.ndarray,
                     M: int, N: int, mode: str = "spectral") -> np.ndarray:
    """Spread pilot estimates ``(..., |P_M|, |P_N|, L)`` over an ``M x N`` grid.

    Frequency: linear between pilot subcarriers, nearest interpolated RE
    outside their span. Time: every symbol copies its nearest pilot symbol
    (``spectral``) or, with ``spectral+temporal``, interpolates linearly
    between pilot symbols and copies the nearest one outside their span.
    """
    if pilot_estimates.size == 0 or len(symbols) == 0 or len(subcarriers) == 0:
        raise ValueError("empty pilot set")
    if mode not in ("spectral", "spectral+temporal"):
        raise ValueError(f"unknown interpolation mode {mode!r}")
    symbols = np.asarray(symbols)
    subcarriers = np.asarray(subcarriers)
    nd = pilot_estimates.ndim
    freq = _interp_axis(np.arange(N), subcarriers, pilot_estimates, axis=nd - 2)
    ms = np.arange(M)
    if mode == "spectral" or len(symbols) == 1:
        return np.take(freq, _nearest_index(ms, symbols), axis=nd - 3)
    return _interp_axis(ms, symbols, freq, axis=nd - 3)


def estimate_channel(Y: np.ndarray, pattern: PilotPattern, Sigmas: list[np.ndarray],
                     sigma2: float, M_total: int | None = None,
                     mode: str = "spectral") -> np.ndarray:
    """Full-grid estimate ``Hhat[..., m, n, l, k]`` from received pilots.

    ``Y`` is ``(..., M, N, L)`` over the uplink slot; pilots are all ones so
    the received pilot equals channel plus noise. Symbols beyond the uplink
    slot are left at zero.
    """
    M, N = pattern.M, pattern.N
    M_total = M if M_total is None else M_total
    lead = Y.shape[:-3]
    L = Y.shape[-1]
    Hhat = np.zeros(lead + (M_total, N, L, pattern.K), dtype=complex)
    for k in range(pattern.K):
        ms, ns = pattern.symbols[k], pattern.subcarriers[k]
        yp = Y[..., ms[:, None], ns[None, :], :]
        hp = lmmse_pilot_estimate(yp, Sigmas[k], sigma2)
        Hhat[..., :M, :, :, k] = interpolate_grid(hp, ms, ns, M, N, mode)
    return Hhat


def spatial_blocks(E_P: np.ndarray, n_sym: int, n_sub: int, L: int) -> np.ndarray:
    """Diagonal ``L x L`` blocks of a pilot error covariance, shaped ``(|P_M|, |P_N|, L, L)``."""
    idx = np.arange(n_sym * n_sub)
    E4 = E_P.reshape(n_sym * n_sub, L, n_sym * n_sub, L)
    return E4[idx, :, idx, :].reshape(n_sym, n_sub, L, L)


def nearest_pilot_map(symbols: np.ndarray, subcarriers: np.ndarray, M: int, N: int):
    """For each RE, the (symbol, subcarrier) lattice index of the nearest pilot.

    Euclidean distance in (m, n); ties prefer the lower symbol, then the
    lower subcarrier.
    """
    pm, pn = np.meshgrid(symbols, subcarriers, indexing="ij")
    pm, pn = pm.ravel(), pn.ravel()  # lexicographic: symbol-major
    mm, nn = np.meshgrid(np.arange(M), np.arange(N), indexing="ij")
    d2 = (mm[..., None] - pm) ** 2 + (nn[..., None] - pn) ** 2
    flat = np.argmin(d2, axis=-1)  # first minimum = lowest (symbol, subcarrier)
    return np.unravel_index(flat, (len(symbols), len(subcarriers)))


def assemble_error_covariances(E_Ps: list[np.ndarray], pattern: PilotPattern, L: int,
                               M_total: int | None = None) -> np.ndarray:
    """Nearest-pilot spatial error covariance per RE, summed over users: ``(M_total, N, L, L)``."""
    M, N = pattern.M, pattern.N
    M_total = M if M_total is None else M_total
    E = np.zeros((M_total, N, L, L), dtype=complex)
    for k, E_P in enumerate(E_Ps):
        ms, ns = pattern.symbols[k], pattern.subcarriers[k]
        blocks = spatial_blocks(E_P, len(ms), len(ns), L)
        i, j = nearest_pilot_map(ms, ns, M, N)
        E[:M] += blocks[i, j]
    return E


@dataclass(frozen=True)
class PowerDecayParams:
    alpha: np.ndarray | float
    beta: np.ndarray | float
    gamma: float

    def __post_init__(self):
        if np.any(np.asarray(self.alpha) < 0):
            raise ValueError("alpha must be >= 0")
        b = np.asarray(self.beta)
        if np.any(b < 0) or np.any(b > 1):
            raise ValueError("beta must lie in [0, 1]")


def power_decay_covariance(p: PowerDecayParams, L: int, at: tuple[int, int] | None = None) -> np.ndarray:
    """``alpha beta^|b-a| exp(j gamma (b-a))``; with ``at=None`` and array params, one matrix per RE."""
    alpha, beta = np.asarray(p.alpha, dtype=float), np.asarray(p.beta, dtype=float)
    if at is not None and alpha.ndim:
        alpha = alpha[at]
    if at is not None and beta.ndim:
        beta = beta[at]
    diff = np.arange(L)[None, :] - np.arange(L)[:, None]  # b - a
    mag = beta[..., None, None] ** np.abs(diff)
    return alpha[..., None, None] * mag * np.exp(1j * p.gamma * diff)


def fit_power_decay(blocks: np.ndarray) -> PowerDecayParams:
    """Moment fit of the decay model to ``(..., L, L)`` covariance blocks.

    ``alpha`` is the mean diagonal, ``beta`` the magnitude ratio of the mean
    first super-diagonal to ``alpha``, ``gamma`` the phase of the first
    super-diagonal averaged over all blocks.
    """
    diag = np.real(np.einsum("...ii->...i", blocks)).mean(axis=-1)
    sup = np.diagonal(blocks, offset=1, axis1=-2, axis2=-1).mean(axis=-1)
    alpha = np.clip(diag, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(alpha > 0, np.abs(sup) / alpha, 0.0)
    gamma = float(np.angle(np.sum(sup))) if np.any(sup) else 0.0
    return PowerDecayParams(alpha, np.clip(beta, 0.0, 1.0), gamma)


def empirical_covariance(samples) -> np.ndarray:
    S = np.asarray(samples)
    if S.ndim != 2 or S.shape[0] == 0:
        raise ValueError("need a non-empty (S, n) sample array")
    return S.T @ S.conj() / S.shape[0]


def save_matrix_csv(A: np.ndarray, f, order: str = VEC_ORDER, dims: tuple[int, ...] = ()) -> None:
    """Dense complex matrix as ``row,col,re,im`` lines after a ``#`` header."""
    dims_s = "x".join(str(d) for d in dims) if dims else "-"
    f.write(f"# rows={A.shape[0]} cols={A.shape[1]} order={order} dims={dims_s}\n")
    f.write("row,col,re,im\n")
    for (i, j), v in np.ndenumerate(A):
        f.write(f"{i},{j},{float(v.real)!r},{float(v.imag)!r}\n")


def load_matrix_csv(f) -> tuple[np.ndarray, dict]:
    header = f.readline()
    if not header.startswith("#"):
        raise ValueError("missing matrix header line")
    meta = dict(tok.split("=", 1) for tok in header[1:].split())
    rows, cols = int(meta["rows"]), int(meta["cols"])
    f.readline()
    data = np.loadtxt(f, delimiter=",", ndmin=2)
    if len(data) != rows * cols:
        raise ValueError(f"expected {rows * cols} entries, found {len(data)}")
    A = np.zeros((rows, cols), dtype=complex)
    A[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2] + 1j * data[:, 3]
    return A, meta


def save_matrix_npz(A: np.ndarray, path, order: str = VEC_ORDER) -> None:
    np.savez(path, matrix=A, order=np.array(order))


def load_matrix_npz(path) -> tuple[np.ndarray, dict]:
    with np.load(path) as z:
        return z["matrix"], {"order": str(z["order"]), "rows": z["matrix"].shape[0],
                             "cols": z["matrix"].shape[1]}
