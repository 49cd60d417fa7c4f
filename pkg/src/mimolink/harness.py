"""Seeded Monte Carlo sweeps for the uplink, downlink, detector and waveform scenarios.

Every trial draws from its own generator seeded by ``(seed, point, stream,
trial)``, and per-trial results are reduced in trial order, so outputs do
not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import chanest, detect, downlink, equalize, waveform
from .channel import ChannelFactory, ScatteringModel, TemporalSpectralModel, crandn
from .config import SimConfig
from .demap import awgn_llr, bit_cross_entropy, llr_to_bits
from .grid import GridConfig, PilotPattern, build_pilot_pattern, gray_constellation, map_bits
from .grid import parse_pilot_layout

TRIAL_STREAM, STATS_STREAM = 0, 1


def trial_rng(seed: int, point: int, trial: int, stream: int = TRIAL_STREAM) -> np.random.Generator:
    return np.random.default_rng([seed, point, stream, trial])


def noise_power(cfg: SimConfig, snr_db: float) -> float:
    """Noise variance for an SNR point; ``ebno`` points use Es/N0 = Q Eb/N0 (no pilot overhead)."""
    s2 = 10.0 ** (-float(snr_db) / 10.0)
    return s2 / cfg.grid.Q if cfg.snr_unit == "ebno" else s2


@dataclass
class SimReport:
    scenario: str
    config_hash: str
    config: dict
    rows: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# scenario: {self.scenario}\n")
        buf.write(f"# config_hash: {self.config_hash}\n")
        buf.write("# config: " + json.dumps(self.config, sort_keys=True) + "\n")
        if self.rows:
            cols = list(self.rows[0].keys())
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([_fmt(r[c]) for c in cols])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"scenario": self.scenario, "config_hash": self.config_hash, "rows": self.rows}

    def write(self, out) -> list[Path]:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(self.to_csv())
        paths = [out]
        js = out.with_suffix(".json")
        js.write_text(json.dumps(self.summary(), sort_keys=True, indent=1, default=_fmt) + "\n")
        paths.append(js)
        for name, (header, rows) in self.tables.items():
            p = out.with_name(f"{out.stem}_{name}.csv")
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
            p.write_text(buf.getvalue())
            paths.append(p)
        return paths


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


# -- shared setup ----------------------------------------------------------

def grid_config(cfg: SimConfig, sigma2: float = 1.0) -> GridConfig:
    g = cfg.grid
    return GridConfig(g.M, g.N, g.K, g.L, g.Q, sigma2, g.subcarrier_spacing, g.duplex)


def pilot_pattern(cfg: SimConfig, gcfg: GridConfig) -> PilotPattern:
    p = cfg.pilots
    if p.layout != "custom":
        return build_pilot_pattern(gcfg, p.layout)
    triples = list(p.triples or [])
    if p.file:
        triples += parse_pilot_layout(Path(p.file).read_text())
    return build_pilot_pattern(gcfg, "custom", triples)


def user_angles(cfg: SimConfig) -> np.ndarray:
    """Nominal angles (rad); by default the centres of K equal slices of a 120 degree sector."""
    if cfg.channel.angles_deg is not None:
        return np.deg2rad(np.asarray(cfg.channel.angles_deg, dtype=float))
    K = cfg.grid.K
    return np.deg2rad(np.linspace(-60.0, 60.0, 2 * K + 1)[1::2])


def channel_factory(cfg: SimConfig, gcfg: GridConfig) -> ChannelFactory:
    ch = cfg.channel
    tsm = TemporalSpectralModel(ch.doppler, ch.delay_spread)
    if ch.kind == "awgn":
        return ChannelFactory(gcfg, None, tsm, kind="awgn")
    if ch.iid_spatial:
        models = [ScatteringModel.iid(gcfg.L) for _ in range(gcfg.K)]
    else:
        sp = np.deg2rad(ch.angle_spread_deg)
        models = [ScatteringModel(float(a), sp, ch.antenna_spacing, gcfg.L) for a in user_angles(cfg)]
    return ChannelFactory(gcfg, models, tsm)


def _load_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npz":
        return chanest.load_matrix_npz(path)[0]
    with open(path) as f:
        return chanest.load_matrix_csv(f)[0]


def pilot_covariances(cfg: SimConfig, factory: ChannelFactory, pattern: PilotPattern) -> list[np.ndarray]:
    if cfg.estimation.sigma_files:
        return [_load_matrix(p) for p in cfg.estimation.sigma_files]
    return [factory.pilot_covariance(k, pattern.symbols[k], pattern.subcarriers[k]) for k in range(pattern.K)]


def error_covariances(cfg: SimConfig, pattern: PilotPattern, Sigmas, sigma2: float, L: int) -> np.ndarray:
    """Per-RE spatial error covariance for the configured CSI mode, over the uplink slot."""
    mode = cfg.estimation.csi_mode
    M, N = pattern.M, pattern.N
    if mode == "perfect":
        return np.zeros((M, N, L, L), dtype=complex)
    E_Ps = [chanest.pilot_error_covariance(S, sigma2) for S in Sigmas]
    if mode == "exact":
        return chanest.assemble_error_covariances(E_Ps, pattern, L)
    total = np.zeros((M, N, L, L), dtype=complex)
    for k, E_P in enumerate(E_Ps):
        blocks = chanest.assemble_error_covariances([E_P], _single_user(pattern, k), L)
        p = chanest.fit_power_decay(blocks)
        if cfg.estimation.decay_gamma is not None:
            p = chanest.PowerDecayParams(p.alpha, p.beta, cfg.estimation.decay_gamma)
        decay = chanest.power_decay_covariance(p, L)
        # the exact block is known at the user's own pilot REs; keep it there
        pilots = np.ix_(pattern.symbols[k], pattern.subcarriers[k])
        decay[pilots] = blocks[pilots]
        total += decay
    return total


def _single_user(pattern: PilotPattern, k: int) -> PilotPattern:
    return PilotPattern(pattern.M, pattern.N, (pattern.symbols[k],), (pattern.subcarriers[k],))


def pilot_symbols_grid(pattern: PilotPattern, K: int) -> np.ndarray:
    """``(M, N, K)`` transmit grid holding only the unit pilots."""
    X = np.zeros((pattern.M, pattern.N, K), dtype=complex)
    for k in range(pattern.K):
        X[np.ix_(pattern.symbols[k], pattern.subcarriers[k], [k])] = 1.0
    return X


# -- uplink ----------------------------------------------------------------

@dataclass
class UplinkContext:
    cfg: SimConfig
    gcfg: GridConfig
    pattern: PilotPattern
    factory: ChannelFactory
    sigma2: float
    Sigmas: list
    E: np.ndarray


def uplink_context(cfg: SimConfig, sigma2: float) -> UplinkContext:
    gcfg = grid_config(cfg, sigma2)
    pattern = pilot_pattern(cfg, gcfg)
    factory = channel_factory(cfg, gcfg)
    Sigmas = pilot_covariances(cfg, factory, pattern)
    E = error_covariances(cfg, pattern, Sigmas, sigma2, gcfg.L)
    return UplinkContext(cfg, gcfg, pattern, factory, sigma2, Sigmas, E)


def uplink_receive(ctx: UplinkContext, H: np.ndarray, Y: np.ndarray):
    """Estimate, equalise and compute noise variances for one uplink slot."""
    cfg, g, M = ctx.cfg, ctx.gcfg, ctx.gcfg.M
    if cfg.estimation.csi_mode == "perfect":
        Hhat = H[:M]
    else:
        Hhat = chanest.estimate_channel(Y, ctx.pattern, ctx.Sigmas, ctx.sigma2,
                                        mode=cfg.pilots.interpolation)
    W = equalize.grouped_lmmse_grid(Hhat, ctx.E, ctx.sigma2, tuple(cfg.estimation.group))
    D = equalize.rescale_matrix(W, Hhat)
    xhat = equalize.equalize_group(Y, W, D)
    rho2 = equalize.post_eq_variance(W, Hhat, ctx.E, ctx.sigma2)
    return Hhat, xhat, rho2


def uplink_trial(ctx: UplinkContext, rng: np.random.Generator) -> dict:
    cfg, g = ctx.cfg, ctx.gcfg
    c = gray_constellation(g.Q)
    H = ctx.factory.sample(rng, normalize=cfg.channel.normalize)
    bits = rng.integers(0, 2, (g.M, g.N, g.K, g.Q), dtype=np.int8)
    data = ctx.pattern.data_mask
    X = np.where(data[..., None], map_bits(bits, c), 0) + pilot_symbols_grid(ctx.pattern, g.K)
    Y = np.einsum("mnlk,mnk->mnl", H[:g.M], X) + np.sqrt(ctx.sigma2) * crandn(rng, (g.M, g.N, g.L))
    _, xhat, rho2 = uplink_receive(ctx, H, Y)
    return _score(xhat[data], rho2[data], X[data], bits[data], c, cfg.llr_max)


def _score(xhat, var, x, bits, c, llr_max) -> dict:
    """Error and rate counters for equalised symbols ``(..., K)``."""
    llr = awgn_llr(xhat, var, c, llr_max)
    hard = detect.hard_indices(xhat, c)
    true = detect.hard_indices(x, c)
    ce = np.minimum(bit_cross_entropy(llr, bits).sum(axis=-1), c.Q)
    return {
        "bit_errors": int(np.sum(llr_to_bits(llr) != bits)),
        "bits": int(bits.size),
        "symbol_errors": int(np.sum(hard != true)),
        "symbols": int(true.size),
        "var_sum": float(np.sum(var)),
        "bce": ce.reshape(-1, ce.shape[-1]).sum(axis=0),
    }


# -- downlink --------------------------------------------------------------

@dataclass
class DownlinkContext:
    ul: UplinkContext
    Omega: np.ndarray | None
    Psi: np.ndarray | None


def downlink_precoder(ctx: UplinkContext, H: np.ndarray, rng: np.random.Generator):
    """Uplink pilots -> reciprocity estimate -> grouped-LMMSE precoder for the downlink slot."""
    cfg, g, M = ctx.cfg, ctx.gcfg, ctx.gcfg.M
    group = tuple(cfg.estimation.group)
    # uplink pilots are always received so that every CSI mode consumes the
    # same random draws and runs stay paired
    Xp = pilot_symbols_grid(ctx.pattern, g.K)
    Y = np.einsum("mnlk,mnk->mnl", H[:M], Xp) + np.sqrt(ctx.sigma2) * crandn(rng, (M, g.N, g.L))
    if cfg.estimation.csi_mode == "perfect":
        Hdl, Edl = H[M:], np.zeros((M, g.N, g.L, g.L), dtype=complex)
    else:
        Hhat = chanest.estimate_channel(Y, ctx.pattern, ctx.Sigmas, ctx.sigma2,
                                        mode=cfg.pilots.interpolation)
        # nearest uplink symbol for the whole downlink slot
        Hdl = np.broadcast_to(Hhat[M - 1], (M,) + Hhat.shape[1:])
        Edl = np.broadcast_to(ctx.E[M - 1], (M,) + ctx.E.shape[1:])
    W = equalize.grouped_lmmse_grid(Hdl, Edl, ctx.sigma2, group)
    return W, downlink.normalization_matrix(W)


def downlink_stats(ctx: UplinkContext, point: int) -> tuple[np.ndarray, np.ndarray]:
    """Empirical second moments of main and interfering equivalent-channel coefficients on pilots."""
    cfg, g, M = ctx.cfg, ctx.gcfg, ctx.gcfg.M
    pat = ctx.pattern
    if len({pat.size(k) for k in range(pat.K)}) != 1:
        raise ValueError("downlink statistics need identically shaped pilot lattices")
    main, inter = [], []
    for t in range(cfg.estimation.stats_trials):
        rng = trial_rng(cfg.seed, point, t, STATS_STREAM)
        H = ctx.factory.sample(rng, normalize=cfg.channel.normalize)
        W, c = downlink_precoder(ctx, H, rng)
        G = downlink.equivalent_channel(H[M:], W, c)
        for k in range(g.K):
            for i in range(g.K):
                v = G[np.ix_(pat.symbols[i], pat.subcarriers[i])][..., k, i].ravel()
                (main if i == k else inter).append(v)
    Omega = chanest.empirical_covariance(np.array(main))
    Psi = chanest.empirical_covariance(np.array(inter)) if inter else Omega
    return Omega, Psi


def downlink_context(cfg: SimConfig, sigma2: float, point: int) -> DownlinkContext:
    ul = uplink_context(cfg, sigma2)
    if cfg.estimation.csi_mode == "perfect":
        return DownlinkContext(ul, None, None)
    if cfg.estimation.omega_file and cfg.estimation.psi_file:
        return DownlinkContext(ul, _load_matrix(cfg.estimation.omega_file), _load_matrix(cfg.estimation.psi_file))
    return DownlinkContext(ul, *downlink_stats(ul, point))


def downlink_trial(dctx: DownlinkContext, rng: np.random.Generator) -> dict:
    ctx = dctx.ul
    cfg, g, M = ctx.cfg, ctx.gcfg, ctx.gcfg.M
    c = gray_constellation(g.Q)
    H = ctx.factory.sample(rng, normalize=cfg.channel.normalize)
    W, cn = downlink_precoder(ctx, H, rng)
    data = ctx.pattern.data_mask
    bits = rng.integers(0, 2, (M, g.N, g.K, g.Q), dtype=np.int8)
    S = np.where(data[..., None], map_bits(bits, c), 0) + pilot_symbols_grid(ctx.pattern, g.K)
    T = downlink.precode(S, W, cn)
    U = np.einsum("mnlk,mnl->mnk", H[M:].conj(), T) + np.sqrt(ctx.sigma2) * crandn(rng, (M, g.N, g.K))
    if cfg.estimation.csi_mode == "perfect":
        G = downlink.equivalent_channel(H[M:], W, cn)
    shat = np.empty((M, g.N, g.K), dtype=complex)
    tau2 = np.empty((M, g.N, g.K))
    for k in range(g.K):
        if cfg.estimation.csi_mode == "perfect":
            ghat, v = G[..., k, :], np.zeros((M, g.N, g.K))
            shat[..., k] = U[..., k] / ghat[..., k]
        else:
            ghat, v, shat[..., k] = downlink.dl_estimate_equalize(
                U[..., k], dctx.Omega, dctx.Psi, ctx.sigma2, ctx.pattern, k, cfg.pilots.interpolation)
        tau2[..., k] = downlink.dl_post_eq_variance(ghat, v, ctx.sigma2, k)
    out = _score(shat[data], tau2[data], S[data], bits[data], c, cfg.llr_max)
    out["tx_energy"] = float(np.sum(np.abs(T[data]) ** 2))
    out["tx_res"] = int(data.sum())
    return out


# -- detector benchmark -----------------------------------------------------

@dataclass
class DetectContext:
    cfg: SimConfig
    sigma2: float
    params: detect.DetectorParams | None


def detect_context(cfg: SimConfig, sigma2: float) -> DetectContext:
    d = cfg.detector
    params = None
    if d.theta_source == "file":
        with open(d.params_file) as f:
            params = detect.load_params(f, K=cfg.grid.K, iterations=d.iterations)
    return DetectContext(cfg, sigma2, params)


def random_channels(cfg: SimConfig, rng: np.random.Generator, B: int) -> np.ndarray:
    """``(B, L, K)`` local-scattering channels with users dropped uniformly in a 120 degree sector."""
    g, ch = cfg.grid, cfg.channel
    if ch.kind == "awgn":
        return np.ones((B, g.L, g.K), dtype=complex)
    e = crandn(rng, (B, g.K, g.L))
    if ch.iid_spatial:
        return np.swapaxes(e, 1, 2)
    phi = rng.uniform(-np.pi / 3, np.pi / 3, (B, g.K))
    diff = np.arange(g.L)[:, None] - np.arange(g.L)[None, :]
    sp, dsp = np.deg2rad(ch.angle_spread_deg), ch.antenna_spacing
    s, co = np.sin(phi)[..., None, None], np.cos(phi)[..., None, None]
    C = np.exp(2j * np.pi * dsp * diff * s) * np.exp(-(sp ** 2) / 2 * (2 * np.pi * dsp * diff * co) ** 2)
    w, V = np.linalg.eigh(C)
    root = (V * np.sqrt(np.clip(w, 0, None))[..., None, :]) @ np.swapaxes(V, -1, -2).conj()
    h = np.einsum("bkij,bkj->bki", root, e)
    return np.swapaxes(h, 1, 2)


def detect_trial(ctx: DetectContext, rng: np.random.Generator) -> dict:
    cfg, d, g = ctx.cfg, ctx.cfg.detector, ctx.cfg.grid
    c = gray_constellation(g.Q)
    B = d.symbols_per_trial
    H = random_channels(cfg, rng, B)
    idx = rng.integers(0, c.order, (B, g.K))
    x = c.points[idx]
    y = np.einsum("blk,bk->bl", H, x) + np.sqrt(ctx.sigma2) * crandn(rng, (B, g.L))
    err = {}
    err["lmmse"] = detect.hard_indices(detect.lmmse_detect(H, y, ctx.sigma2), c) != idx
    if d.ml:
        err["ml"] = detect.hard_indices(detect.ml_detect(H, y, c), c) != idx
    if ctx.params is None:
        qr = detect.qr_reduce(H, y)
        Theta = detect.lmmse_matrix(qr.R_A, ctx.sigma2)
        params = detect.DetectorParams(np.eye(g.K), np.zeros((d.iterations, g.K)),
                                       np.full((d.iterations, g.K), d.psi))
        xm, _ = detect.mmnet_detect(H, y, ctx.sigma2, params, c, d.noise_term, Theta=Theta)
    else:
        xm, _ = detect.mmnet_detect(H, y, ctx.sigma2, ctx.params, c, d.noise_term)
    err["mmnet"] = detect.hard_indices(xm, c) != idx
    out = {f"{k}_errors": int(v.sum()) for k, v in err.items()}
    out["symbols"] = int(idx.size)
    if d.ml:
        diff = err["ml"].astype(int) - err["lmmse"].astype(int)
        out["diff_sum"] = int(diff.sum())
        out["diff_sq"] = int((diff ** 2).sum())
    return out


# -- sweep driver ------------------------------------------------------------

def _run_trials(kind: str, ctx, seed: int, point: int, trials: list[int]) -> list[dict]:
    fn = {"uplink": uplink_trial, "downlink": downlink_trial, "detect-bench": detect_trial}[kind]
    return [fn(ctx, trial_rng(seed, point, t)) for t in trials]


def _execute(kind: str, ctx, cfg: SimConfig, point: int) -> list[dict]:
    trials = list(range(cfg.trials))
    if cfg.workers == 1 or cfg.trials == 1:
        return _run_trials(kind, ctx, cfg.seed, point, trials)
    chunks = [trials[i::cfg.workers] for i in range(cfg.workers)]
    results: dict[int, dict] = {}
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(_run_trials, kind, ctx, cfg.seed, point, ch) for ch in chunks if ch]
        for ch, fut in zip([ch for ch in chunks if ch], futures):
            results.update(zip(ch, fut.result()))
    return [results[t] for t in trials]


def _reduce(results: list[dict]) -> dict:
    total: dict = {}
    for r in results:  # fixed trial order
        for k, v in r.items():
            total[k] = total[k] + v if k in total else v
    return total


def _link_row(cfg: SimConfig, snr: float, sigma2: float, tot: dict, pattern: PilotPattern) -> dict:
    ber = tot["bit_errors"] / tot["bits"]
    n_users = cfg.grid.K
    card = tot["symbols"] / n_users / cfg.trials
    bce_user = np.asarray(tot["bce"]) / cfg.trials
    rate = card * cfg.grid.Q - bce_user
    rho = float(pattern.data_mask.mean())
    row = {
        "snr_db": float(snr), "sigma2": sigma2, "trials": cfg.trials,
        "bits": tot["bits"], "bit_errors": tot["bit_errors"], "ber": ber,
        "symbols": tot["symbols"], "symbol_errors": tot["symbol_errors"],
        "ser": tot["symbol_errors"] / tot["symbols"],
        "mean_noise_var": tot["var_sum"] / tot["symbols"],
        "rate_bits_per_grid": float(np.mean(rate)),
        "rate_bits_per_re": float(np.mean(rate)) / card,
        "data_fraction": rho,
        "goodput": rho * cfg.grid.Q * (1 - ber),
    }
    if "tx_energy" in tot:
        row["mean_tx_energy"] = tot["tx_energy"] / tot["tx_res"]
    return row


def _error_row(snr, exc: Exception) -> dict:
    return {"snr_db": float(snr), "status": f"error:{type(exc).__name__}:{exc}"}


def _finish(cfg: SimConfig, rows: list[dict]) -> SimReport:
    cols: list[str] = []
    for r in rows:
        cols += [c for c in r if c not in cols]
    cols = [c for c in cols if c != "status"] + ["status", "config_hash"]
    h = cfg.hash()
    full = [{c: r.get(c, "ok" if c == "status" else (h if c == "config_hash" else "")) for c in cols}
            for r in rows]
    return SimReport(cfg.scenario, h, cfg.provenance(), full)


def run_uplink_sweep(cfg: SimConfig) -> SimReport:
    rows = []
    for point, snr in enumerate(cfg.snr_db):
        sigma2 = noise_power(cfg, snr)
        try:
            ctx = uplink_context(cfg, sigma2)
            tot = _reduce(_execute("uplink", ctx, cfg, point))
            rows.append(_link_row(cfg, snr, sigma2, tot, ctx.pattern))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            rows.append(_error_row(snr, exc))
    return _finish(cfg, rows)


def run_downlink_sweep(cfg: SimConfig) -> SimReport:
    if cfg.grid.duplex != "uplink+downlink":
        raise ValueError("downlink sweep needs duplex 'uplink+downlink'")
    rows = []
    for point, snr in enumerate(cfg.snr_db):
        sigma2 = noise_power(cfg, snr)
        try:
            dctx = downlink_context(cfg, sigma2, point)
            tot = _reduce(_execute("downlink", dctx, cfg, point))
            rows.append(_link_row(cfg, snr, sigma2, tot, dctx.ul.pattern))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            rows.append(_error_row(snr, exc))
    return _finish(cfg, rows)


def run_detector_bench(cfg: SimConfig) -> SimReport:
    rows = []
    for point, snr in enumerate(cfg.snr_db):
        sigma2 = noise_power(cfg, snr)
        try:
            ctx = detect_context(cfg, sigma2)
            tot = _reduce(_execute("detect-bench", ctx, cfg, point))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            rows.append(_error_row(snr, exc))
            continue
        n = tot["symbols"]
        row = {"snr_db": float(snr), "sigma2": sigma2, "symbols": n}
        for name in ("lmmse", "ml", "mmnet"):
            if f"{name}_errors" in tot:
                row[f"ser_{name}"] = tot[f"{name}_errors"] / n
        if "diff_sum" in tot:
            mean = tot["diff_sum"] / n
            var = max(tot["diff_sq"] / n - mean ** 2, 0.0)
            row["ml_minus_lmmse"] = mean
            row["ml_minus_lmmse_se"] = math.sqrt(var / n)
        rows.append(row)
    return _finish(cfg, rows)


def waveform_metrics(x: np.ndarray, wcfg: waveform.WaveformConfig, eps, J, Kmat) -> list[dict]:
    """PAPR at each ``eps`` and ACLR for a batch of frequency-domain symbols ``(B, N)``."""
    nu = waveform.symbol_power_ratio(x, wcfg.oversampling)
    lin, db = waveform.aclr(x, J, Kmat)
    return [{"eps": float(e), "papr_db": waveform.papr_from_ratio(nu, e), "aclr_db": db, "aclr": lin}
            for e in eps]


def run_waveform_report(cfg: SimConfig) -> SimReport:
    w = cfg.waveform
    wcfg = waveform.WaveformConfig(w.N, w.oversampling, 1.0, w.T_cp)
    c = gray_constellation(w.Q)
    J = waveform.inband_energy_matrix(wcfg)
    Kmat = waveform.total_energy_matrix(wcfg)
    # one set of data draws shared by every PRT count
    data_rng = trial_rng(cfg.seed, 0, 0)
    base = c.points[data_rng.integers(0, c.order, (w.symbols, w.N))]
    pilot_rows = np.zeros(w.symbols, dtype=bool)
    if w.pilot_symbol_every:
        pilot_rows[1::w.pilot_symbol_every] = True
    pilot_sc = np.zeros(w.N, dtype=bool)
    pilot_sc[::2] = True
    pilot_vals = np.exp(2j * np.pi * data_rng.random((w.symbols, w.N)))
    levels = np.asarray(w.ccdf_levels_db, dtype=float)
    freqs = np.linspace(-1.5 * w.N, 1.5 * w.N, 6 * w.N + 1)
    rows, tables = [], {}
    for j, R in enumerate(w.prt):
        try:
            prt_rng = trial_rng(cfg.seed, j, 0, STATS_STREAM)
            masks = np.zeros((w.symbols, w.N), dtype=bool)
            if R:
                for s in range(w.symbols):
                    masks[s] = waveform.random_prt_placement(w.N, R, prt_rng, pilot_sc if pilot_rows[s] else None)
            d = np.where(masks, 0, base)
            d[pilot_rows] = np.where(pilot_sc, pilot_vals[pilot_rows], d[pilot_rows])
            r = (waveform.tone_reservation(d, waveform.ToneReservationPlan(masks), w.tr_budget, w.oversampling)
                 if R else np.zeros_like(d))
            x = d + r
            energy = float(np.mean(np.sum(np.abs(r) ** 2, axis=-1)))
            for row in waveform_metrics(x, wcfg, w.eps, J, Kmat):
                rows.append({"prt": R, **row, "mean_prt_energy": energy})
            nu = waveform.symbol_power_ratio(x, w.oversampling)
            tables[f"ccdf_R{R}"] = (["value_db", "probability"], list(zip(levels, waveform.ccdf_from_ratio(nu, levels))))
            tables[f"psd_R{R}"] = (["frequency", "power_density"],
                                   list(zip(freqs, waveform.spectrum(x, wcfg, freqs))))
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            rows.append({"prt": R, "status": f"error:{type(exc).__name__}:{exc}"})
    rep = _finish(cfg, rows)
    rep.tables = tables
    return rep


def estimate_stats(cfg: SimConfig) -> tuple[SimReport, dict]:
    """Empirical pilot covariances from generated channels (Sigma per user; Omega/Psi with downlink)."""
    sigma2 = noise_power(cfg, cfg.snr_db[0])
    gcfg = grid_config(cfg, sigma2)
    pattern = pilot_pattern(cfg, gcfg)
    factory = channel_factory(cfg, gcfg)
    samples = [[] for _ in range(gcfg.K)]
    for t in range(cfg.trials):
        H = factory.sample(trial_rng(cfg.seed, 0, t), normalize=cfg.channel.normalize)
        for k in range(gcfg.K):
            samples[k].append(H[np.ix_(pattern.symbols[k], pattern.subcarriers[k])][..., k].ravel())
    mats = {f"sigma_user{k + 1}": chanest.empirical_covariance(np.array(s)) for k, s in enumerate(samples)}
    if gcfg.duplex == "uplink+downlink" and cfg.estimation.csi_mode != "perfect":
        ctx = uplink_context(cfg, sigma2)
        mats["omega"], mats["psi"] = downlink_stats(ctx, 0)
    rows = [{"matrix": name, "rows": m.shape[0], "trace": float(np.real(np.trace(m)))}
            for name, m in mats.items()]
    return _finish(cfg, rows), mats


RUNNERS = {"uplink": run_uplink_sweep, "downlink": run_downlink_sweep,
           "detect-bench": run_detector_bench, "waveform": run_waveform_report}
