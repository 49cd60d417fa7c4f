"""Multi-user MIMO-OFDM link simulation: channel synthesis, pilot-based estimation,
grouped LMMSE equalisation and precoding, detection, demapping and waveform metrics."""

from .config import SimConfig, load_config
from .grid import GridConfig, PilotPattern, build_pilot_pattern, gray_constellation
from .harness import (SimReport, estimate_stats, run_detector_bench, run_downlink_sweep,
                      run_uplink_sweep, run_waveform_report)

__all__ = [
    "GridConfig", "PilotPattern", "SimConfig", "SimReport", "build_pilot_pattern",
    "estimate_stats", "gray_constellation", "load_config", "run_detector_bench",
    "run_downlink_sweep", "run_uplink_sweep", "run_waveform_report",
]
__version__ = "0.1.0"
