"""OFDM waveform metrics: oversampled time signal, PAPR/CCDF, ACLR and tone reservation.

Subcarriers are indexed ``-(N-1)/2 .. (N-1)/2`` (``N`` odd); vectors of
frequency-domain symbols are stored in that order. Frequencies below are
normalised to the subcarrier spacing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GL_NODES = 16


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class WaveformConfig:
    N: int = 75
    oversampling: int = 5
    T: float = 1.0
    T_cp: float = 0.0

    def __post_init__(self):
        if self.N < 1 or self.N % 2 == 0:
            raise ValueError(f"N must be odd and positive, got {self.N}")
        if self.oversampling < 1:
            raise ValueError("oversampling must be >= 1")
        if self.T <= 0 or self.T_cp < 0:
            raise ValueError("need T > 0 and T_cp >= 0")

    @property
    def subcarrier_spacing(self) -> float:
        return 1.0 / self.T

    @property
    def indices(self) -> np.ndarray:
        h = (self.N - 1) // 2
        return np.arange(-h, h + 1)

    @property
    def cp_ratio(self) -> float:
        """``Delta_f^CP / Delta_f = T / (T + T_cp)``."""
        return self.T / (self.T + self.T_cp)


def _centered(N: int) -> np.ndarray:
    """Centred subcarrier indices; for even N the extra tone sits at -N/2."""
    return np.arange(N) - N // 2


def oversampled_time_signal(x: np.ndarray, oversampling: int) -> np.ndarray:
    """``z[a] = sum_n x_n exp(2j pi a n / (N O_S)) / (sqrt(N) O_S)`` for ``a = 0 .. N O_S - 1``.

    Satisfies ``||z||^2 = ||x||^2 / O_S``.
    """
    x = np.asarray(x)
    N = x.shape[-1]
    P = N * oversampling
    X = np.zeros(x.shape[:-1] + (P,), dtype=complex)
    X[..., _centered(N) % P] = x
    return np.fft.ifft(X, axis=-1) * np.sqrt(N)


def idft_matrix(N: int, oversampling: int) -> np.ndarray:
    """The ``(N O_S) x N`` matrix mapping centred subcarriers to time samples."""
    P = N * oversampling
    return np.exp(2j * np.pi * np.outer(np.arange(P), _centered(N)) / P) / (np.sqrt(N) * oversampling)


def power_ratio(z: np.ndarray) -> np.ndarray:
    """Instantaneous-to-average power, averaged over the whole batch."""
    p = np.abs(z) ** 2
    return p / p.mean()


def symbol_power_ratio(x: np.ndarray, oversampling: int, chunk: int = 8192) -> np.ndarray:
    """Flattened ``power_ratio`` of the oversampled signals of ``x`` (``B x N``), built in chunks."""
    x = np.atleast_2d(x)
    B, N = x.shape
    p = np.empty((B, N * oversampling))
    for s in range(0, B, chunk):
        p[s:s + chunk] = np.abs(oversampled_time_signal(x[s:s + chunk], oversampling)) ** 2
    p = p.ravel()
    p /= p.mean()
    return p


def papr_from_ratio(nu: np.ndarray, eps: float) -> float:
    """Smallest ``e`` with empirical ``P(nu > e) <= eps``, in dB."""
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    nu = np.asarray(nu).ravel()
    if nu.size == 0:
        raise ValueError("empty signal batch")
    k = max(int(np.ceil(nu.size * (1 - eps) - 1e-9)), 1) - 1
    return float(10 * np.log10(np.partition(nu, k)[k]))


def papr_epsilon(z: np.ndarray, eps: float) -> float:
    """Smallest ``e`` with empirical ``P(nu > e) <= eps``, in dB; pools all samples."""
    z = np.asarray(z)
    if z.size == 0:
        raise ValueError("empty signal batch")
    return papr_from_ratio(power_ratio(z), eps)


def ccdf_from_ratio(nu: np.ndarray, levels_db) -> np.ndarray:
    nu = np.sort(np.asarray(nu).ravel())
    e = 10 ** (np.asarray(levels_db) / 10)
    return (nu.size - np.searchsorted(nu, e, side="right")) / nu.size


def ccdf(z: np.ndarray, levels_db: np.ndarray) -> np.ndarray:
    """``P(nu > e)`` for each level ``e`` (dB)."""
    return ccdf_from_ratio(power_ratio(np.asarray(z)), levels_db)


def _gl_panels(a: float, b: float, width: float, nodes: int = GL_NODES):
    n_pan = max(1, int(np.ceil((b - a) / width)))
    edges = np.linspace(a, b, n_pan + 1)
    t, w = np.polynomial.legendre.leggauss(nodes)
    half = (edges[1:] - edges[:-1]) / 2
    mid = (edges[1:] + edges[:-1]) / 2
    f = (mid[:, None] + half[:, None] * t).ravel()
    wt = (half[:, None] * w).ravel()
    return f, wt


def _inband(cfg: WaveformConfig, width: float) -> np.ndarray:
    delta = cfg.cp_ratio
    f, w = _gl_panels(-cfg.N / 2, cfg.N / 2, width)
    S = np.sinc((f[None, :] - cfg.indices[:, None]) / delta)
    return (S * w) @ S.T / delta


def inband_energy_matrix(cfg: WaveformConfig, tol: float = 1e-8) -> np.ndarray:
    """In-band energy quadratic form ``J`` (``E_I = x^H J x``).

    The sinc products are entire, so composite Gauss-Legendre on short
    panels converges fast; the panel width is halved until two successive
    estimates agree to ``tol``.
    """
    width = 0.5 * cfg.cp_ratio
    J = _inband(cfg, width)
    for _ in range(6):
        width /= 2
        J2 = _inband(cfg, width)
        if np.max(np.abs(J2 - J)) < tol:
            return (J2 + J2.T) / 2
        J = J2
    raise QuadratureError("in-band energy quadrature did not converge")


def total_energy_matrix(cfg: WaveformConfig) -> np.ndarray:
    """Total energy quadratic form ``K``.

    ``k_ab`` is the mean of ``exp(2j pi (a-b) t / T)`` over one symbol,
    which is 1 for ``a = b`` and 0 for any other integer lag.
    """
    lag = cfg.indices[:, None] - cfg.indices[None, :]
    return (lag == 0).astype(float)


def aclr(x: np.ndarray, J: np.ndarray, K: np.ndarray) -> tuple[float, float]:
    """``E[x^H K x] / E[x^H J x] - 1`` over the batch; returns (linear, dB)."""
    x = np.atleast_2d(x)
    e_in = np.real(np.einsum("bi,ij,bj->b", x.conj(), J, x)).mean()
    e_all = np.real(np.einsum("bi,ij,bj->b", x.conj(), K, x)).mean()
    if e_in <= 0:
        raise ValueError("zero in-band energy")
    ratio = e_all / e_in - 1
    return float(ratio), float(10 * np.log10(ratio)) if ratio > 0 else float("-inf")


def spectrum(x: np.ndarray, cfg: WaveformConfig, freqs: np.ndarray) -> np.ndarray:
    """Mean ``|S(f)|^2`` over the batch at normalised frequencies ``freqs``."""
    delta = cfg.cp_ratio
    S = np.sinc((np.asarray(freqs)[None, :] - cfg.indices[:, None]) / delta) / np.sqrt(delta)
    x = np.atleast_2d(x)
    total = np.zeros(S.shape[1])
    for s in range(0, len(x), 4096):
        total += np.sum(np.abs(x[s:s + 4096] @ S) ** 2, axis=0)
    return total / len(x)


@dataclass
class ToneReservationPlan:
    """Boolean PRT masks over the centred subcarriers, one row per OFDM symbol."""

    prt: np.ndarray

    def __post_init__(self):
        self.prt = np.atleast_2d(np.asarray(self.prt, dtype=bool))

    @property
    def data(self) -> np.ndarray:
        return ~self.prt

    @property
    def energy_cap(self) -> np.ndarray:
        return self.prt.sum(axis=-1).astype(float)


def random_prt_placement(N: int, R: int, rng: np.random.Generator,
                         pilots: np.ndarray | None = None) -> np.ndarray:
    """Uniformly random PRT subcarriers as a boolean mask of length ``N``.

    With ``pilots`` (a mask of pilot subcarriers) only ``R // 2`` PRTs are
    drawn and pilot subcarriers are excluded.
    """
    if not 0 <= R <= N:
        raise ValueError(f"need 0 <= R <= N, got R={R}")
    allowed = np.arange(N)
    count = R
    if pilots is not None:
        allowed = np.flatnonzero(~np.asarray(pilots, dtype=bool))
        count = R // 2
        if count > len(allowed):
            raise ValueError("not enough non-pilot subcarriers for the PRTs")
    mask = np.zeros(N, dtype=bool)
    mask[rng.choice(allowed, size=count, replace=False)] = True
    return mask


def _ball(r: np.ndarray, cap: np.ndarray) -> np.ndarray:
    e = np.sum(np.abs(r) ** 2, axis=-1)
    scale = np.where(e > cap, np.sqrt(cap / np.where(e > 0, e, 1.0)), 1.0)
    return r * scale[..., None]


def tone_reservation(d: np.ndarray, plan: ToneReservationPlan, budget: int = 100,
                     oversampling: int = 5, step: float = 2.0, shrink: float = 0.95,
                     return_history: bool = False):
    """Peak-reducing signals on the reserved tones by clipping and projection.

    Each iteration clips the time samples of ``d + r`` above a level just
    below the best peak found so far, moves ``r`` towards the clipped signal
    restricted to the reserved tones, and projects onto the energy ball
    ``||r||^2 <= #PRT``. The iterate with the lowest peak is returned, so the
    best peak never increases.
    """
    d = np.atleast_2d(np.asarray(d, dtype=complex))
    mask = np.broadcast_to(plan.prt, d.shape)
    cap = plan.energy_cap if plan.prt.shape[0] == d.shape[0] else np.full(len(d), plan.energy_cap[0])
    N = d.shape[-1]
    r = np.zeros_like(d)
    best_r = r.copy()
    best_peak = np.max(np.abs(oversampled_time_signal(d, oversampling)) ** 2, axis=-1)
    history = [best_peak.copy()]
    if not mask.any() or budget < 1:
        return (best_r, history) if return_history else best_r
    for _ in range(budget):
        z = oversampled_time_signal(d + r, oversampling)
        mag = np.abs(z)
        level = np.sqrt(best_peak * shrink)[:, None]
        clip = np.where(mag > level, z * (level / np.where(mag > 0, mag, 1.0) - 1.0), 0.0)
        # adjoint of the oversampled IDFT, scaled so that a correction on the
        # reserved tones reproduces the clipped part in least squares
        P = N * oversampling
        G = np.fft.fft(clip, axis=-1) / np.sqrt(N)
        corr = G[:, _centered(N) % P] * oversampling
        r = _ball(np.where(mask, r + step * corr, 0.0), cap)
        peak = np.max(np.abs(oversampled_time_signal(d + r, oversampling)) ** 2, axis=-1)
        better = peak < best_peak
        best_peak = np.where(better, peak, best_peak)
        best_r[better] = r[better]
        history.append(best_peak.copy())
    return (best_r, history) if return_history else best_r


def peak_power(x: np.ndarray, oversampling: int) -> np.ndarray:
    return np.max(np.abs(oversampled_time_signal(x, oversampling)) ** 2, axis=-1)
