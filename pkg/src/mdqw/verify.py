"""Self-checks run by ``mdqw verify``: conservation, oracle agreement,
parity and light cone, hop timing, and the limiting-case equivalences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .detector import (
    DetectorPolicy,
    Fixed,
    Moving,
    MovingIJ,
    NoDetector,
    Quench,
    epoch_start_times,
)
from .engine import RecordSpec, oracle_run, run

REFERENCE_POLICIES: tuple[DetectorPolicy, ...] = (
    NoDetector(),
    Fixed(10),
    Moving(10, 2, 1),
    Moving(10, 30, 1),
    MovingIJ(10, 2),
    Quench(10, 100),
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def max_bookkeeping_error(policy: DetectorPolicy, T: int) -> float:
    """``max_t |sum_x f(x, t) + d(t) - 1|`` over every step of a run."""
    res = run(policy, T, RecordSpec.make(absorbed=True, norm=True))
    return float(np.max(np.abs(res.norm_series + res.absorbed_series - 1.0)))


def max_oracle_difference(policy: DetectorPolicy, T: int) -> tuple[float, bool]:
    """Largest per-amplitude gap between :func:`run` and :func:`oracle_run`
    over all steps, and whether the event logs agree."""
    spec = RecordSpec.make(snapshots=range(T + 1), amplitudes=True)
    fast = run(policy, T, spec)
    slow = oracle_run(policy, T, spec)
    diff = 0.0
    for t in range(T + 1):
        for a, b in zip(fast.amplitudes[t], slow.amplitudes[t]):
            diff = max(diff, float(np.max(np.abs(a - b))))
    same_events = [(e.time, e.position) for e in fast.events] == [
        (e.time, e.position) for e in slow.events
    ]
    return diff, same_events


def epoch_first_times(policy: Moving, T: int, epochs: int) -> list[int | None]:
    """First event time at each of the first ``epochs`` detector positions."""
    res = run(policy, T, RecordSpec.make(events=True))
    first: dict[int, int] = {}
    for e in res.events:
        first.setdefault(e.position, e.time)
    return [first.get(policy.x_D + i * policy.s) for i in range(epochs)]


def timing_horizon(x_D: int, n: int, s: int, epochs: int) -> int:
    return x_D + epochs * (2 * n + s) + 2


def max_snapshot_difference(p: DetectorPolicy, q: DetectorPolicy, T: int) -> float:
    a = run(p, T, RecordSpec.make(snapshots=[T], amplitudes=True, events=False))
    b = run(q, T, RecordSpec.make(snapshots=[T], amplitudes=True, events=False))
    return max(
        float(np.max(np.abs(u - v))) for u, v in zip(a.amplitudes[T], b.amplitudes[T])
    )


def nth_detection_time(x_D: int, n: int, T: int) -> int:
    res = run(MovingIJ(x_D, n), T, RecordSpec.make())
    return res.events[n - 1].time


def _check_conservation() -> CheckResult:
    worst = max(max_bookkeeping_error(p, 2000) for p in REFERENCE_POLICIES)
    return CheckResult("conservation", worst < 1e-10, f"max |sum f + d - 1| = {worst:.3e}")


def _check_oracle() -> CheckResult:
    worst, events_ok = 0.0, True
    for p in REFERENCE_POLICIES:
        d, ok = max_oracle_difference(p, 32)
        worst, events_ok = max(worst, d), events_ok and ok
    return CheckResult(
        "oracle", worst < 1e-12 and events_ok, f"max amplitude diff = {worst:.3e}, events equal = {events_ok}"
    )


def _check_parity() -> CheckResult:
    T = 200
    res = run(NoDetector(), T, RecordSpec.make(snapshots=range(T + 1), events=False))
    x = res.sites
    bad = 0
    for t, f in res.snapshots.items():
        structural = ((x + t) % 2 == 1) | (np.abs(x) > t)
        bad += int(np.count_nonzero(f[structural])) + int(np.count_nonzero(f[~structural] == 0))
    return CheckResult("parity+lightcone", bad == 0, f"{bad} violating sites up to t={T}")


def _check_timing() -> CheckResult:
    failures = []
    for x_D in (4, 10):
        for n in (1, 2, 5, 10):
            for s in (1, 3, 10):
                want = epoch_start_times(x_D, n, s, 4)
                got = epoch_first_times(Moving(x_D, n, s), timing_horizon(x_D, n, s, 5), 5)
                if got != want:
                    failures.append((x_D, n, s))
    return CheckResult("timing", not failures, f"mismatches: {failures}" if failures else "48 epochs match")


def _check_limits() -> CheckResult:
    T = 1000
    diffs = {
        "x_D>T ~ IW": max_snapshot_difference(Moving(T + 1, 2, 1), NoDetector(), T),
        "n=T ~ SIW": max_snapshot_difference(Moving(10, T, 1), Fixed(10), T),
    }
    for n in (2, 15, 30):
        t_off = nth_detection_time(10, n, T)
        diffs[f"{n}DIJ ~ QQW"] = max_snapshot_difference(MovingIJ(10, n), Quench(10, t_off), T)
    worst = max(diffs.values())
    return CheckResult("limits", worst <= 1e-12, ", ".join(f"{k}: {v:.1e}" for k, v in diffs.items()))


CHECKS: tuple[Callable[[], CheckResult], ...] = (
    _check_conservation,
    _check_oracle,
    _check_parity,
    _check_timing,
    _check_limits,
)


def run_checks() -> list[CheckResult]:
    return [check() for check in CHECKS]
