"""Soft demapping, hard bit decisions and the BCE-based achievable rate.

LLRs are ``ln P(b=1) / P(b=0)``: positive favours a one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .grid import Constellation

LLR_MAX = 40.0


def awgn_llr(xhat, rho2, c: Constellation, llr_max: float = LLR_MAX) -> np.ndarray:
    """Exact (log-sum-exp) bit LLRs for ``xhat = x + CN(0, rho2)``; output ``(..., Q)``."""
    rho2 = np.asarray(rho2, dtype=float)
    if np.any(rho2 <= 0):
        raise ValueError("post-equalisation variance must be positive")
    xhat = np.asarray(xhat, dtype=complex)
    metric = -np.abs(xhat[..., None] - c.points) ** 2 / rho2[..., None]
    out = np.empty(xhat.shape + (c.Q,))
    for q in range(c.Q):
        one = logsumexp(metric[..., c.subset(q, 1)], axis=-1)
        zero = logsumexp(metric[..., c.subset(q, 0)], axis=-1)
        out[..., q] = one - zero
    return np.clip(out, -llr_max, llr_max)


def max_log_llr(xhat, rho2, c: Constellation) -> np.ndarray:
    xhat = np.asarray(xhat, dtype=complex)
    metric = -np.abs(xhat[..., None] - c.points) ** 2 / np.asarray(rho2, dtype=float)[..., None]
    return np.stack([metric[..., c.subset(q, 1)].max(-1) - metric[..., c.subset(q, 0)].max(-1)
                     for q in range(c.Q)], axis=-1)


def llr_to_bits(llr) -> np.ndarray:
    return (np.asarray(llr) > 0).astype(np.int8)


def hard_demap(x, c: Constellation) -> np.ndarray:
    """Bits of the nearest constellation point, ``(..., Q)``."""
    idx = np.argmin(np.abs(np.asarray(x)[..., None] - c.points) ** 2, axis=-1)
    return c.labels[idx]


def bit_cross_entropy(llr, bits) -> np.ndarray:
    """``-log2 P(b | llr)`` per bit with ``P(b=1) = sigmoid(llr)``."""
    llr = np.asarray(llr, dtype=float)
    sign = 2.0 * np.asarray(bits, dtype=float) - 1.0
    return np.logaddexp(0.0, -sign * llr) / np.log(2.0)


@dataclass
class RateReport:
    bce: np.ndarray  # total BCE per user, bits
    rate_per_user: np.ndarray  # C_k, bits per grid
    grid_bits: int  # Card(D) * Q

    @property
    def bce_per_bit(self) -> np.ndarray:
        return self.bce / self.grid_bits


def bce_rate_metric(llr: np.ndarray, bits: np.ndarray, data_mask: np.ndarray | None = None) -> RateReport:
    """Achievable BMD rate per user from LLRs over the data REs.

    ``llr`` and ``bits`` are ``(B, M, N, K, Q)`` (batch axis optional);
    ``data_mask`` is an ``M x N`` boolean selecting the data REs. The BCE
    is averaged over the batch, so ``C_k`` is in bits per resource grid.
    """
    llr = np.asarray(llr, dtype=float)
    bits = np.asarray(bits)
    if llr.shape != bits.shape:
        raise ValueError(f"shape mismatch: llr {llr.shape} vs bits {bits.shape}")
    if llr.ndim == 4:
        llr, bits = llr[None], bits[None]
    M, N, K, Q = llr.shape[1:]
    mask = np.ones((M, N), bool) if data_mask is None else np.asarray(data_mask, bool)
    card = int(mask.sum())
    ce = bit_cross_entropy(llr[:, mask], bits[:, mask])  # (B, card, K, Q)
    per_re = np.minimum(ce.sum(axis=-1), Q)  # (B, card, K)
    loss = per_re.sum(axis=1).mean(axis=0)
    return RateReport(loss, card * Q - loss, card * Q)
