"""Discrete-time Hadamard quantum walk with a moving absorbing detector."""

from .detector import (
    DetectionEvent,
    DetectorState,
    Fixed,
    Moving,
    MovingIJ,
    NoDetector,
    Quench,
    epoch_start_times,
    make_policy,
    measure,
)
from .engine import (
    RatioSeries,
    RecordSpec,
    RunResult,
    msd_series,
    oracle_run,
    ratio_series,
    reference_run,
    run,
    snapshot,
)
from .walk import (
    SYMMETRIC_SEED,
    SpinorField,
    coin_step,
    evolve_step,
    initial_state,
    occupation,
    shift_step,
    total_probability,
)

__version__ = "0.1.0"
