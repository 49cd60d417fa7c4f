"""Correlated channel synthesis over the resource grid.

Spatial correlation follows the local scattering model of a uniform linear
array. Time and frequency correlation are separable: Jakes autocorrelation
``J0(2 pi nu dm)`` across OFDM symbols and the exponential power-delay-profile
correlation ``1 / (1 + 2j pi s dn)`` across subcarriers, with ``nu`` the
Doppler normalised to the symbol duration and ``s`` the rms delay spread
normalised the same way.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import j0

from .grid import GridConfig

PSD_TOL = 1e-9


class ModelError(ValueError):
    pass


def local_scattering_covariance(phi: float, sigma_phi: float, d: float, L: int) -> np.ndarray:
    diff = np.arange(L)[:, None] - np.arange(L)[None, :]
    phase = np.exp(2j * np.pi * d * diff * np.sin(phi))
    decay = np.exp(-(sigma_phi ** 2) / 2 * (2 * np.pi * d * diff * np.cos(phi)) ** 2)
    return phase * decay


def psd_sqrt(C: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Hermitian square root ``V diag(sqrt(w)) V^H``; rejects eigenvalues below -tol."""
    w, V = np.linalg.eigh(C)
    if w.min() < -tol:
        raise ModelError(f"covariance not PSD: min eigenvalue {w.min():.3e}")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T


def crandn(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples, variance 1/2 per real dimension."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@dataclass(frozen=True)
class ScatteringModel:
    phi: float
    sigma_phi: float
    d: float
    L: int
    uncorrelated: bool = False
    C: np.ndarray = field(init=False, repr=False, compare=False)
    sqrtC: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.uncorrelated:
            C = np.eye(self.L, dtype=complex)
        else:
            C = local_scattering_covariance(self.phi, self.sigma_phi, self.d, self.L)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "sqrtC", psd_sqrt(C))

    @classmethod
    def iid(cls, L: int) -> "ScatteringModel":
        return cls(0.0, 0.0, 0.5, L, uncorrelated=True)


def sample_spatial_channel(model: ScatteringModel, rng: np.random.Generator,
                           size: int | None = None) -> np.ndarray:
    """Draw ``h ~ CN(0, C)``; with ``size`` returns a ``(size, L)`` array."""
    shape = (model.L,) if size is None else (size, model.L)
    e = crandn(rng, shape)
    return e @ model.sqrtC.T


@dataclass(frozen=True)
class TemporalSpectralModel:
    doppler: float = 0.0
    delay_spread: float = 0.0

    def time_correlation(self, lags) -> np.ndarray:
        return j0(2 * np.pi * self.doppler * np.asarray(lags, dtype=float))

    def frequency_correlation(self, lags) -> np.ndarray:
        return 1.0 / (1.0 + 2j * np.pi * self.delay_spread * np.asarray(lags, dtype=float))

    def time_matrix(self, M: int) -> np.ndarray:
        return toeplitz(self.time_correlation(np.arange(M))).astype(complex)

    def frequency_matrix(self, N: int) -> np.ndarray:
        r = self.frequency_correlation(np.arange(N))
        # R[a, b] = r(a - b), Hermitian: first column r, first row conj(r)
        return toeplitz(r, r.conj())


@dataclass
class ChannelTensor:
    """Channel coefficients ``H[m, n, l, k]`` (optionally with leading batch axes)."""

    H: np.ndarray

    def slice(self, m: int, n: int) -> np.ndarray:
        return self.H[..., m, n, :, :]

    def user(self, m: int, n: int, k: int) -> np.ndarray:
        return self.H[..., m, n, :, k]


class ChannelFactory:
    """Precomputes the Kronecker square-root factors for repeated synthesis."""

    def __init__(self, cfg: GridConfig, models: list[ScatteringModel] | None,
                 tsm: TemporalSpectralModel, kind: str = "scattering"):
        if kind not in ("scattering", "awgn"):
            raise ModelError(f"unknown channel kind {kind!r}")
        self.cfg, self.models, self.tsm, self.kind = cfg, models, tsm, kind
        if kind == "scattering":
            if models is None or len(models) != cfg.K:
                raise ModelError("need one scattering model per user")
            if any(sm.L != cfg.L for sm in models):
                raise ModelError("scattering model antenna count differs from L")
            self.At = psd_sqrt(tsm.time_matrix(cfg.M_total))
            self.Af = psd_sqrt(tsm.frequency_matrix(cfg.N))
            self.S = np.stack([sm.sqrtC for sm in models])  # K, L, L

    def pilot_covariance(self, k: int, symbols, subcarriers) -> np.ndarray:
        """True covariance of ``vec(h_k)`` on a lattice, symbol-major then subcarrier then antenna."""
        if self.kind == "awgn":
            n = len(symbols) * len(subcarriers) * self.cfg.L
            return np.ones((n, n), dtype=complex)
        Rt = self.tsm.time_matrix(self.cfg.M_total)[np.ix_(symbols, symbols)]
        Rf = self.tsm.frequency_matrix(self.cfg.N)[np.ix_(subcarriers, subcarriers)]
        return np.kron(np.kron(Rt, Rf), self.models[k].C)

    def sample(self, rng: np.random.Generator, batch: int | None = None,
               normalize: bool = True) -> np.ndarray:
        cfg = self.cfg
        lead = () if batch is None else (batch,)
        shape = lead + (cfg.M_total, cfg.N, cfg.L, cfg.K)
        if self.kind == "awgn":
            return np.ones(shape, dtype=complex)
        W = crandn(rng, shape)
        H = np.einsum("ab,...bnlk->...anlk", self.At, W)
        H = np.einsum("ab,...mblk->...malk", self.Af, H)
        H = np.einsum("kab,...mnbk->...mnak", self.S, H)
        if normalize:
            energy = np.sum(np.abs(H) ** 2, axis=(-4, -3, -2), keepdims=True)
            H = H * np.sqrt(cfg.M_total * cfg.N * cfg.L / energy)
        return H


def synthesize_grid_channel(cfg: GridConfig, models: list[ScatteringModel],
                            tsm: TemporalSpectralModel, rng: np.random.Generator,
                            normalize: bool = True) -> ChannelTensor:
    return ChannelTensor(ChannelFactory(cfg, models, tsm).sample(rng, normalize=normalize))


def snr_to_sigma2(snr_db: float) -> float:
    return float(10.0 ** (-snr_db / 10.0))


def save_channel_csv(H: np.ndarray, f) -> None:
    """Write ``m,n,l,k,re,im`` rows (0-based indices)."""
    f.write("m,n,l,k,re,im\n")
    for idx in np.ndindex(H.shape):
        v = H[idx]
        f.write(",".join(str(i) for i in idx) + f",{float(v.real)!r},{float(v.imag)!r}\n")


def load_channel_csv(f) -> np.ndarray:
    data = np.loadtxt(f, delimiter=",", skiprows=1, ndmin=2)
    idx = data[:, :4].astype(int)
    H = np.zeros(tuple(idx.max(axis=0) + 1), dtype=complex)
    H[tuple(idx.T)] = data[:, 4] + 1j * data[:, 5]
    return H


_MAGIC = b"MLCH"


def save_channel_bin(H: np.ndarray, f) -> None:
    """Header ``MLCH`` + four little-endian int64 dims, then complex128 LE in C order."""
    if H.ndim != 4:
        raise ValueError("expected a 4-D channel tensor")
    f.write(_MAGIC + struct.pack("<4q", *H.shape))
    f.write(np.ascontiguousarray(H, dtype="<c16").tobytes())


def load_channel_bin(f) -> np.ndarray:
    head = f.read(4 + 32)
    if head[:4] != _MAGIC:
        raise ValueError("not a channel tensor file")
    shape = struct.unpack("<4q", head[4:])
    buf = f.read()
    return np.frombuffer(buf, dtype="<c16").reshape(shape).astype(complex)


def channel_to_bytes(H: np.ndarray) -> bytes:
    b = io.BytesIO()
    save_channel_bin(H, b)
    return b.getvalue()
