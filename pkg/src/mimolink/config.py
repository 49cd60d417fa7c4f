"""Simulation configuration: nested dataclasses loaded from YAML.

Unknown keys are rejected and every violated constraint is reported at once.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

SCENARIOS = ("uplink", "downlink", "detect-bench", "waveform")
CSI_MODES = ("exact", "power-decay", "perfect")
EXECUTION_KEYS = ("out", "workers")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class GridSection:
    M: int = 14
    N: int = 12
    K: int = 1
    L: int = 1
    Q: int = 2
    subcarrier_spacing: float = 30e3
    duplex: str = "uplink"


@dataclass
class ChannelSection:
    kind: str = "scattering"
    angles_deg: Optional[list] = None
    angle_spread_deg: float = 10.0
    antenna_spacing: float = 0.5
    iid_spatial: bool = False
    doppler: float = 0.0
    delay_spread: float = 0.0
    normalize: bool = True


@dataclass
class PilotSection:
    layout: str = "1P"
    triples: Optional[list] = None
    file: Optional[str] = None
    interpolation: str = "spectral"


@dataclass
class EstimationSection:
    csi_mode: str = "exact"
    group: list = field(default_factory=lambda: [2, 7])
    stats_trials: int = 64
    sigma_files: Optional[list] = None
    omega_file: Optional[str] = None
    psi_file: Optional[str] = None
    decay_gamma: Optional[float] = None


@dataclass
class DetectorSection:
    symbols_per_trial: int = 500
    iterations: int = 1
    noise_term: str = "L"
    theta_source: str = "lmmse"
    params_file: Optional[str] = None
    psi: float = 1.0
    ml: bool = True


@dataclass
class WaveformSection:
    N: int = 75
    oversampling: int = 5
    T_cp: float = 0.0
    Q: int = 4
    symbols: int = 2000
    eps: list = field(default_factory=lambda: [0.0, 1e-2, 1e-3])
    prt: list = field(default_factory=lambda: [0, 4, 16])
    tr_budget: int = 100
    pilot_symbol_every: int = 0
    ccdf_levels_db: list = field(default_factory=lambda: [round(0.25 * i, 2) for i in range(49)])


@dataclass
class SimConfig:
    scenario: str = "uplink"
    snr_db: list = field(default_factory=lambda: [10.0])
    snr_unit: str = "snr"
    trials: int = 10
    seed: int = 0
    workers: int = 1
    llr_max: float = 40.0
    out: Optional[str] = None
    grid: GridSection = field(default_factory=GridSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    pilots: PilotSection = field(default_factory=PilotSection)
    estimation: EstimationSection = field(default_factory=EstimationSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    waveform: WaveformSection = field(default_factory=WaveformSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def provenance(self) -> dict:
        """The config without execution-only settings (output path, worker count)."""
        d = self.to_dict()
        for key in EXECUTION_KEYS:
            d.pop(key, None)
        return d

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def hash(self) -> str:
        """Short digest of the canonical config, excluding execution-only settings."""
        d = self.provenance()
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


_SECTIONS = {f.name: f.type for f in dataclasses.fields(SimConfig)}
_SECTION_CLASSES = {"grid": GridSection, "channel": ChannelSection, "pilots": PilotSection,
                    "estimation": EstimationSection, "detector": DetectorSection,
                    "waveform": WaveformSection}


def _coerce(value: Any, default: Any, key: str, problems: list[str]) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append(f"{key}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{key}: expected a number, got {value!r}")
            return value
        return float(value)
    return value


def from_dict(data: dict) -> SimConfig:
    problems: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a mapping"])
    kwargs = {}
    defaults = SimConfig()
    for key, value in data.items():
        if key not in _SECTIONS:
            problems.append(f"unknown key {key!r}")
            continue
        if key in _SECTION_CLASSES:
            cls = _SECTION_CLASSES[key]
            if not isinstance(value, dict):
                problems.append(f"{key}: expected a mapping")
                continue
            sec_default = cls()
            names = {f.name for f in dataclasses.fields(cls)}
            sub = {}
            for k2, v2 in value.items():
                if k2 not in names:
                    problems.append(f"unknown key {key}.{k2!r}")
                    continue
                sub[k2] = _coerce(v2, getattr(sec_default, k2), f"{key}.{k2}", problems)
            kwargs[key] = cls(**sub)
        else:
            kwargs[key] = _coerce(value, getattr(defaults, key), key, problems)
    cfg = SimConfig(**kwargs)
    problems += validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def validate(cfg: SimConfig) -> list[str]:
    p = []
    if cfg.scenario not in SCENARIOS:
        p.append(f"scenario: must be one of {SCENARIOS}")
    if not isinstance(cfg.snr_db, list) or not cfg.snr_db:
        p.append("snr_db: must be a non-empty list")
    if cfg.snr_unit not in ("snr", "ebno"):
        p.append("snr_unit: must be 'snr' or 'ebno'")
    if isinstance(cfg.trials, int) and cfg.trials < 1:
        p.append("trials: must be >= 1")
    if isinstance(cfg.workers, int) and cfg.workers < 1:
        p.append("workers: must be >= 1")
    if isinstance(cfg.seed, int) and cfg.seed < 0:
        p.append("seed: must be >= 0")
    g = cfg.grid
    if isinstance(g.K, int) and isinstance(g.L, int) and not 1 <= g.K <= g.L:
        p.append("grid.K: need 1 <= K <= L")
    if g.Q not in (2, 4, 6, 8):
        p.append("grid.Q: square QAM needs Q in (2, 4, 6, 8)")
    if g.duplex not in ("uplink", "uplink+downlink"):
        p.append("grid.duplex: must be 'uplink' or 'uplink+downlink'")
    if cfg.scenario == "downlink" and g.duplex != "uplink+downlink":
        p.append("grid.duplex: downlink scenario needs 'uplink+downlink'")
    if cfg.channel.kind not in ("scattering", "awgn"):
        p.append("channel.kind: must be 'scattering' or 'awgn'")
    if cfg.channel.angles_deg is not None and len(cfg.channel.angles_deg) != g.K:
        p.append("channel.angles_deg: need one angle per user")
    if cfg.pilots.layout not in ("1P", "2P", "custom"):
        p.append("pilots.layout: must be '1P', '2P' or 'custom'")
    if cfg.pilots.layout == "custom" and not (cfg.pilots.triples or cfg.pilots.file):
        p.append("pilots: custom layout needs 'triples' or 'file'")
    if cfg.pilots.interpolation not in ("spectral", "spectral+temporal"):
        p.append("pilots.interpolation: must be 'spectral' or 'spectral+temporal'")
    e = cfg.estimation
    if e.csi_mode not in CSI_MODES:
        p.append(f"estimation.csi_mode: must be one of {CSI_MODES}")
    if not (isinstance(e.group, list) and len(e.group) == 2 and all(isinstance(v, int) and v >= 1 for v in e.group)):
        p.append("estimation.group: must be [symbols, subcarriers] with positive integers")
    if isinstance(e.stats_trials, int) and e.stats_trials < 1:
        p.append("estimation.stats_trials: must be >= 1")
    d = cfg.detector
    if d.noise_term not in ("L", "K"):
        p.append("detector.noise_term: must be 'L' or 'K'")
    if d.theta_source not in ("lmmse", "file"):
        p.append("detector.theta_source: must be 'lmmse' or 'file'")
    if d.theta_source == "file" and not d.params_file:
        p.append("detector.params_file: required when theta_source is 'file'")
    if isinstance(d.iterations, int) and d.iterations < 1:
        p.append("detector.iterations: must be >= 1")
    if isinstance(d.psi, (int, float)) and d.psi <= 0:
        p.append("detector.psi: must be > 0")
    if d.ml and g.Q * g.K > 20 and cfg.scenario == "detect-bench":
        p.append("detector.ml: Q*K must be <= 20 for exhaustive ML")
    w = cfg.waveform
    if isinstance(w.N, int) and (w.N < 1 or w.N % 2 == 0):
        p.append("waveform.N: must be odd and positive")
    if isinstance(w.oversampling, int) and w.oversampling < 1:
        p.append("waveform.oversampling: must be >= 1")
    if w.Q not in (2, 4, 6, 8):
        p.append("waveform.Q: square QAM needs Q in (2, 4, 6, 8)")
    if any((not isinstance(r, int)) or r < 0 or (isinstance(w.N, int) and r > w.N) for r in w.prt):
        p.append("waveform.prt: entries must be integers in [0, N]")
    if any(not 0 <= x < 1 for x in w.eps):
        p.append("waveform.eps: entries must lie in [0, 1)")
    return p


def load_config(path) -> SimConfig:
    text = Path(path).read_text()
    return loads(text)


def loads(text: str) -> SimConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError([f"parse error{where}: {getattr(exc, 'problem', exc)}"]) from exc
    return from_dict(data or {})
