"""Resource-grid configuration, pilot layouts and Gray-labelled QAM."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SUPPORTED_Q = (1, 2, 4, 6, 8)

# 0-based pilot symbols of the default layouts within a slot of >= 14 symbols.
PILOT_SYMBOLS = {"1P": (2, 3), "2P": (2, 3, 9, 10)}
COMBS_PER_SYMBOL = 2


class LayoutError(ValueError):
    """Pilot layout cannot serve the requested users."""


@dataclass(frozen=True)
class GridConfig:
    M: int = 14
    N: int = 12
    K: int = 1
    L: int = 1
    Q: int = 2
    sigma2: float = 1.0
    subcarrier_spacing: float = 30e3
    duplex: str = "uplink"

    def __post_init__(self):
        errors = []
        if self.M < 1:
            errors.append(f"M must be >= 1, got {self.M}")
        if self.N < 1:
            errors.append(f"N must be >= 1, got {self.N}")
        if not 1 <= self.K <= self.L:
            errors.append(f"need 1 <= K <= L, got K={self.K}, L={self.L}")
        if self.Q not in SUPPORTED_Q:
            errors.append(f"Q must be one of {SUPPORTED_Q}, got {self.Q}")
        if not self.sigma2 > 0:
            errors.append(f"sigma2 must be > 0, got {self.sigma2}")
        if self.duplex not in ("uplink", "uplink+downlink"):
            errors.append(f"unknown duplex mode {self.duplex!r}")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def M_total(self) -> int:
        return 2 * self.M if self.duplex == "uplink+downlink" else self.M


@dataclass(frozen=True)
class PilotPattern:
    """Per-user pilot positions as 0-based (symbol, subcarrier) lattices.

    ``symbols[k]`` and ``subcarriers[k]`` are sorted index arrays; user ``k``
    owns every RE of their Cartesian product.
    """

    M: int
    N: int
    symbols: tuple[np.ndarray, ...]
    subcarriers: tuple[np.ndarray, ...]
    _mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.symbols) != len(self.subcarriers) or not self.symbols:
            raise LayoutError("need one symbol and one subcarrier set per user")
        owner = -np.ones((self.M, self.N), dtype=int)
        for k, (ms, ns) in enumerate(zip(self.symbols, self.subcarriers)):
            if len(ms) == 0 or len(ns) == 0:
                raise LayoutError(f"user {k + 1} has no pilots")
            if ms.min() < 0 or ms.max() >= self.M or ns.min() < 0 or ns.max() >= self.N:
                raise LayoutError(f"user {k + 1} has pilots outside the slot")
            block = owner[np.ix_(ms, ns)]
            if np.any(block >= 0):
                raise LayoutError(f"user {k + 1} pilots collide with another user")
            owner[np.ix_(ms, ns)] = k
        object.__setattr__(self, "_mask", owner)

    @property
    def K(self) -> int:
        return len(self.symbols)

    def size(self, k: int) -> tuple[int, int]:
        """(|P_M|, |P_N|) of user ``k``."""
        return len(self.symbols[k]), len(self.subcarriers[k])

    def positions(self, k: int) -> list[tuple[int, int]]:
        return [(int(m), int(n)) for m in self.symbols[k] for n in self.subcarriers[k]]

    @property
    def owner(self) -> np.ndarray:
        """M x N map of the user owning each RE, -1 on REs without pilots."""
        return self._mask

    @property
    def pilot_mask(self) -> np.ndarray:
        return self._mask >= 0

    @property
    def data_mask(self) -> np.ndarray:
        return self._mask < 0

    def to_triples(self) -> list[tuple[int, int, int]]:
        """(user, symbol, subcarrier) triples, 1-based."""
        return [(k + 1, m + 1, n + 1) for k in range(self.K) for m, n in self.positions(k)]


def build_pilot_pattern(cfg: GridConfig, kind: str = "1P",
                        triples: Iterable[Sequence[int]] | None = None) -> PilotPattern:
    """Build the per-user pilot lattices for a slot of ``cfg.M`` symbols.

    ``1P`` puts pilots on symbols 3 and 4 (1-based), ``2P`` on symbols 3, 4,
    10 and 11. Each pilot symbol carries two interleaved combs (odd and even
    subcarriers, 1-based), giving four (symbol, comb) resources per pattern
    period. Users take resources in the order (symbol 3, odd), (symbol 3,
    even), (symbol 4, odd), (symbol 4, even); with fewer users each one
    spreads over several symbols and combs so that every set stays
    rectangular. ``2P`` repeats the assignment on symbols 10 and 11.
    """
    if kind == "custom":
        if triples is None:
            raise LayoutError("custom layout needs (user, symbol, subcarrier) triples")
        return pattern_from_triples(cfg.M, cfg.N, triples)
    if kind not in PILOT_SYMBOLS:
        raise LayoutError(f"unknown pilot layout {kind!r}")
    syms = PILOT_SYMBOLS[kind]
    if max(syms) >= cfg.M:
        raise LayoutError(f"{kind} needs at least {max(syms) + 1} symbols per slot")
    capacity = 2 * COMBS_PER_SYMBOL  # two pilot symbols per pattern period
    if capacity % cfg.K:
        raise LayoutError(f"{kind} gives {capacity} disjoint combs; K={cfg.K} does not divide it")
    if cfg.K > 1 and cfg.N % COMBS_PER_SYMBOL:
        raise LayoutError(f"comb layouts need an even number of subcarriers, got N={cfg.N}")
    n_periods = len(syms) // 2
    per_user = capacity // cfg.K
    symbols, subcarriers = [], []
    for k in range(cfg.K):
        if per_user == 4:
            sym_local, combs = (0, 1), (0, 1)
        elif per_user == 2:
            sym_local, combs = (0, 1), (k,)
        else:
            sym_local, combs = (k // 2,), (k % 2,)
        ms = [syms[2 * p + s] for p in range(n_periods) for s in sym_local]
        ns = sorted(n for c in combs for n in range(c, cfg.N, COMBS_PER_SYMBOL))
        symbols.append(np.array(sorted(ms)))
        subcarriers.append(np.array(ns))
    return PilotPattern(cfg.M, cfg.N, tuple(symbols), tuple(subcarriers))


def pattern_from_triples(M: int, N: int, triples: Iterable[Sequence[int]]) -> PilotPattern:
    per_user: dict[int, set[tuple[int, int]]] = {}
    for t in triples:
        user, m, n = (int(v) for v in t)
        per_user.setdefault(user, set()).add((m - 1, n - 1))
    if not per_user or sorted(per_user) != list(range(1, len(per_user) + 1)):
        raise LayoutError("users must be numbered 1..K without gaps")
    symbols, subcarriers = [], []
    for user in sorted(per_user):
        pos = per_user[user]
        ms = np.array(sorted({m for m, _ in pos}))
        ns = np.array(sorted({n for _, n in pos}))
        if len(pos) != len(ms) * len(ns):
            raise LayoutError(f"user {user} pilots do not form a rectangular lattice")
        symbols.append(ms)
        subcarriers.append(ns)
    return PilotPattern(M, N, tuple(symbols), tuple(subcarriers))


def parse_pilot_layout(text: str) -> list[tuple[int, int, int]]:
    """Parse ``user symbol subcarrier`` lines (1-based, ``#`` comments)."""
    triples = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise LayoutError(f"line {lineno}: expected 3 integers, got {line!r}")
        triples.append(tuple(int(p) for p in parts))
    return triples


@dataclass(frozen=True)
class Constellation:
    """Square QAM with unit average energy.

    ``points[i]`` is the symbol whose Gray label, read MSB first, is the
    integer ``i``; ``labels[i]`` holds those Q bits.
    """

    Q: int
    points: np.ndarray
    labels: np.ndarray

    @property
    def order(self) -> int:
        return 1 << self.Q

    def subset(self, q: int, bit: int) -> np.ndarray:
        """Indices of the points whose bit ``q`` equals ``bit``."""
        return np.flatnonzero(self.labels[:, q] == bit)


def _axis_levels(m: int) -> np.ndarray:
    """Amplitude of each m-bit Gray label on one axis (label 0 -> most positive)."""
    idx = np.arange(1 << m)
    gray = idx ^ (idx >> 1)
    amps = (1 << m) - 1 - 2 * idx
    levels = np.empty(1 << m)
    levels[gray] = amps
    return levels


def gray_constellation(Q: int) -> Constellation:
    if Q not in (2, 4, 6, 8):
        raise ValueError(f"square Gray QAM needs Q in (2, 4, 6, 8), got {Q}")
    m = Q // 2
    levels = _axis_levels(m)
    ints = np.arange(1 << Q)
    re = levels[ints >> m]
    im = levels[ints & ((1 << m) - 1)]
    pts = re + 1j * im
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    labels = ((ints[:, None] >> np.arange(Q - 1, -1, -1)) & 1).astype(np.int8)
    return Constellation(Q, pts, labels)


def bits_to_indices(bits: np.ndarray, Q: int) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape[-1] != Q:
        raise ValueError(f"last axis must hold {Q} bits, got {bits.shape[-1]}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    return bits.astype(np.int64) @ (1 << np.arange(Q - 1, -1, -1))


def map_bits(bits: np.ndarray, c: Constellation) -> np.ndarray:
    """Map ``(..., Q)`` bit arrays to symbols; a single Q-vector gives a scalar."""
    return c.points[bits_to_indices(bits, c.Q)]
