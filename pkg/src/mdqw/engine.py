"""Full runs: walk + detector + recording, plus a dense-matrix oracle.

:func:`run` is the production path (in-place, light-cone windowed stepping).
:func:`oracle_run` rebuilds the same evolution from an explicit
``2(2X+1)``-dimensional step matrix and projector, with its own detector
schedule, so the two can be compared amplitude by amplitude.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Literal

import numpy as np

from .detector import (
    COUNT_THRESHOLD,
    DetectionEvent,
    DetectorPolicy,
    DetectorState,
    Moving,
    MovingIJ,
    NoDetector,
    Quench,
    measure,
)
from .errors import CapacityError, DomainError, MissingRecordError
from .walk import (
    INV_SQRT2,
    SYMMETRIC_SEED,
    SpinorField,
    Stepper,
    initial_state,
)

__all__ = [
    "EPS_RATIO",
    "ORACLE_MAX_T",
    "RatioSeries",
    "RecordSpec",
    "RunResult",
    "clear_reference_cache",
    "field_from_result",
    "msd_series",
    "oracle_run",
    "ratio_series",
    "reference_run",
    "run",
    "snapshot",
]

EPS_RATIO = 1e-300
ORACLE_MAX_T = 64

Sampling = Literal["after", "before"]


@dataclass(frozen=True)
class RecordSpec:
    """What a run keeps.

    ``sampling`` selects whether occupations (and ``d``) are read after the
    detector has absorbed at that step (``"after"``, the default) or just
    before (``"before"``). The two differ only at the detector's current
    site, where ``"before"`` gives the probability the detector sees.
    """

    snapshot_times: frozenset[int] = frozenset()
    tracked_sites: frozenset[int] = frozenset()
    record_events: bool = True
    record_absorbed_series: bool = False
    record_amplitudes: bool = False
    sampling: Sampling = "after"
    record_norm_series: bool = False

    @classmethod
    def make(
        cls,
        snapshots: Iterable[int] = (),
        sites: Iterable[int] = (),
        *,
        events: bool = True,
        absorbed: bool = False,
        amplitudes: bool = False,
        sampling: Sampling = "after",
        norm: bool = False,
    ) -> "RecordSpec":
        return cls(
            frozenset(int(t) for t in snapshots),
            frozenset(int(x) for x in sites),
            events,
            absorbed,
            amplitudes,
            sampling,
            norm,
        )


@dataclass
class RunResult:
    """Recorded output of one simulation.

    ``snapshots[t]`` holds ``f(x, t)`` for ``x`` in ``[-T, T]`` (see
    :attr:`sites`); ``site_series[x][t]`` holds ``f(x, t)`` for ``t = 0..T``;
    ``absorbed_series[t]`` holds ``d(t)`` and ``norm_series[t]`` holds
    ``sum_x f(x, t)``.
    """

    policy: DetectorPolicy
    T: int
    spec: RecordSpec
    snapshots: dict[int, np.ndarray] = dc_field(default_factory=dict)
    site_series: dict[int, np.ndarray] = dc_field(default_factory=dict)
    absorbed_series: np.ndarray | None = None
    norm_series: np.ndarray | None = None
    events: tuple[DetectionEvent, ...] = ()
    amplitudes: dict[int, tuple[np.ndarray, np.ndarray]] = dc_field(default_factory=dict)
    absorbed_total: float = 0.0

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.T, self.T + 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.T + 1)

    def series(self, x: int) -> np.ndarray:
        try:
            return self.site_series[x]
        except KeyError:
            raise MissingRecordError(
                f"site {x} not tracked in {self.policy.label} run"
            ) from None

    def provenance(self) -> dict:
        return {**self.policy.params(), "T": self.T, "sampling": self.spec.sampling}


class _Recorder:
    def __init__(self, policy: DetectorPolicy, T: int, spec: RecordSpec, X: int):
        self.result = RunResult(policy, T, spec)
        self.spec = spec
        self.X = X
        self.T = T
        self._sites = sorted(spec.tracked_sites)
        for x in self._sites:
            self.result.site_series[x] = np.zeros(T + 1)
        if spec.record_absorbed_series:
            self.result.absorbed_series = np.zeros(T + 1)
        if spec.record_norm_series:
            self.result.norm_series = np.zeros(T + 1)

    def record(self, t: int, left: np.ndarray, right: np.ndarray, d: float) -> None:
        spec, X, T = self.spec, self.X, self.T
        want_snap = t in spec.snapshot_times
        if not (
            self._sites or want_snap or spec.record_absorbed_series or spec.record_norm_series
        ):
            return
        r = self.result
        if want_snap:
            sl = slice(X - T, X + T + 1)
            r.snapshots[t] = occupations_of(left[sl], right[sl])
            if spec.record_amplitudes:
                r.amplitudes[t] = (left[sl].copy(), right[sl].copy())
        for x in self._sites:
            if abs(x) <= X:
                a, b = left[x + X], right[x + X]
                r.site_series[x][t] = a.real * a.real + a.imag * a.imag + b.real * b.real + b.imag * b.imag
        if spec.record_absorbed_series:
            r.absorbed_series[t] = d
        if spec.record_norm_series:
            r.norm_series[t] = occupations_of(left, right).sum()


def occupations_of(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    return left.real ** 2 + left.imag ** 2 + right.real ** 2 + right.imag ** 2


def _validate(T: int, spec: RecordSpec) -> None:
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    bad = [t for t in spec.snapshot_times if not 0 <= t <= T]
    if bad:
        raise DomainError(f"snapshot times {sorted(bad)} outside [0, {T}]")
    if spec.sampling not in ("after", "before"):
        raise DomainError(f"sampling must be 'after' or 'before', got {spec.sampling!r}")


def run(
    policy: DetectorPolicy,
    T: int,
    spec: RecordSpec | None = None,
    *,
    seed: tuple[complex, complex] = SYMMETRIC_SEED,
    half_width: int | None = None,
) -> RunResult:
    """Evolve the walker for ``T`` steps under ``policy``.

    Each step is coin, shift, then one detector measurement; there is no
    measurement at ``t = 0``. The lattice half-width defaults to ``T + 1`` so
    the walker can never reach the storage edge.
    """
    if spec is None:
        spec = RecordSpec.make(snapshots=[T])
    _validate(T, spec)
    X = T + 1 if half_width is None else half_width
    if X < T:
        raise CapacityError(f"half_width {X} < T = {T}; snapshots need [-T, T]")
    field = initial_state(seed[0], seed[1], X)
    stepper = Stepper(field)
    det = DetectorState.start(policy)
    rec = _Recorder(policy, T, spec, X)
    before = spec.sampling == "before"

    rec.record(0, field.left, field.right, 0.0)
    for t in range(1, T + 1):
        stepper.step()
        if before:
            rec.record(t, field.left, field.right, det.absorbed_total)
        measure(field, det, policy, inplace=True)
        if not before:
            rec.record(t, field.left, field.right, det.absorbed_total)

    res = rec.result
    res.absorbed_total = det.absorbed_total
    if spec.record_events:
        res.events = tuple(det.events)
    return res


def snapshot(result: RunResult, t: int) -> np.ndarray:
    """Occupation array ``f(x, t)`` over ``x`` in ``[-T, T]``."""
    try:
        return result.snapshots[t]
    except KeyError:
        raise MissingRecordError(
            f"no snapshot at t = {t} in {result.policy.label} run "
            f"(recorded: {sorted(result.snapshots)})"
        ) from None


@dataclass
class RatioSeries:
    """``(t, value)`` pairs of a ratio of two recorded quantities."""

    times: np.ndarray
    values: np.ndarray
    site: int
    label: str = ""

    def __len__(self) -> int:
        return int(self.times.size)

    def at(self, t: int) -> float:
        idx = np.flatnonzero(self.times == t)
        if not idx.size:
            raise MissingRecordError(f"t = {t} not present in ratio series")
        return float(self.values[idx[0]])


def ratio_series(a: RunResult, b: RunResult, x: int, *, eps: float = EPS_RATIO) -> RatioSeries:
    """``f_a(x, t) / f_b(x, t)`` over parity-matched times ``t = x (mod 2)``.

    Times where the denominator is below ``eps`` are skipped.
    """
    if a.T != b.T:
        raise DomainError(f"runs have different T ({a.T} vs {b.T})")
    fa, fb = a.series(x), b.series(x)
    t = np.arange(a.T + 1)
    keep = ((t - x) % 2 == 0) & (fb >= eps)
    return RatioSeries(t[keep], fa[keep] / fb[keep], x, f"{a.policy.label}/{b.policy.label}")


def msd_series(result: RunResult, times: Iterable[int] | None = None) -> np.ndarray:
    """Rows ``(t, <x^2>)`` with ``<x^2> = sum x^2 f / sum f`` over recorded snapshots."""
    ts = sorted(result.snapshots) if times is None else sorted(times)
    x2 = result.sites.astype(float) ** 2
    rows = []
    for t in ts:
        f = snapshot(result, t)
        rows.append((t, float(np.dot(x2, f) / f.sum())))
    return np.array(rows, dtype=float).reshape(-1, 2)


# ---------------------------------------------------------------------------
# reference-run memo

_ref_cache: dict[tuple, RunResult] = {}
_ref_lock = threading.Lock()


def reference_run(policy: DetectorPolicy, T: int, spec: RecordSpec | None = None) -> RunResult:
    """Memoized :func:`run`, used for IW/SIW references shared by many ratios."""
    if spec is None:
        spec = RecordSpec.make(snapshots=[T])
    key = (policy, T, spec)
    with _ref_lock:
        hit = _ref_cache.get(key)
    if hit is not None:
        return hit
    res = run(policy, T, spec)
    with _ref_lock:
        return _ref_cache.setdefault(key, res)


def clear_reference_cache() -> None:
    with _ref_lock:
        _ref_cache.clear()


# ---------------------------------------------------------------------------
# dense oracle


def _dense_step_matrix(X: int) -> np.ndarray:
    """``S @ (I ⊗ H)`` with basis index ``2 * (x + X) + c``, ``c = 0`` left, ``1`` right."""
    m = 2 * X + 1
    H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) * INV_SQRT2
    coin = np.kron(np.eye(m), H)
    shift = np.zeros((2 * m, 2 * m), dtype=np.complex128)
    for i in range(m):
        if i - 1 >= 0:
            shift[2 * (i - 1), 2 * i] = 1.0
        if i + 1 < m:
            shift[2 * (i + 1) + 1, 2 * i + 1] = 1.0
    return shift @ coin


def _dense_projector(X: int, x: int) -> np.ndarray:
    """Projector onto the complement of site ``x`` (both coin states)."""
    m = 2 * X + 1
    P = np.eye(2 * m, dtype=np.complex128)
    if abs(x) <= X:
        i = x + X
        P[2 * i, 2 * i] = 0.0
        P[2 * i + 1, 2 * i + 1] = 0.0
    return P


def oracle_run(
    policy: DetectorPolicy,
    T: int,
    spec: RecordSpec | None = None,
    *,
    seed: tuple[complex, complex] = SYMMETRIC_SEED,
) -> RunResult:
    """Brute-force counterpart of :func:`run` using dense matrix products.

    Limited to ``T <= 64``. By default every time step is snapshotted with
    amplitudes, so the result can be compared against :func:`run` at each
    step.
    """
    if T > ORACLE_MAX_T:
        raise CapacityError(f"oracle limited to T <= {ORACLE_MAX_T}, got {T}")
    if spec is None:
        spec = RecordSpec.make(snapshots=range(T + 1), amplitudes=True, absorbed=True)
    _validate(T, spec)
    X = T + 1
    m = 2 * X + 1
    U = _dense_step_matrix(X)
    psi = np.zeros(2 * m, dtype=np.complex128)
    psi[2 * X] = seed[0]
    psi[2 * X + 1] = seed[1]

    # detector schedule, written out independently of detector.measure
    active = not isinstance(policy, NoDetector)
    pos = getattr(policy, "x_D", 0)
    count = 0
    d = 0.0
    events: list[DetectionEvent] = []
    projectors: dict[int, np.ndarray] = {}

    rec = _Recorder(policy, T, spec, X)
    before = spec.sampling == "before"
    rec.record(0, psi[0::2], psi[1::2], d)
    for t in range(1, T + 1):
        psi = U @ psi
        if before:
            rec.record(t, psi[0::2], psi[1::2], d)
        if active and isinstance(policy, Quench) and t > policy.t_off:
            active = False
        if active:
            if pos not in projectors:
                projectors[pos] = _dense_projector(X, pos)
            kept = projectors[pos] @ psi
            p = float(np.vdot(psi - kept, psi - kept).real)
            psi = kept
            d += p
            if p > COUNT_THRESHOLD:
                events.append(DetectionEvent(t, pos, p))
                count += 1
                if isinstance(policy, (Moving, MovingIJ)) and count == policy.n:
                    count = 0
                    if isinstance(policy, MovingIJ):
                        active = False
                    else:
                        pos += policy.s
        if not before:
            rec.record(t, psi[0::2], psi[1::2], d)

    res = rec.result
    res.absorbed_total = d
    if spec.record_events:
        res.events = tuple(events)
    return res


def field_from_result(result: RunResult, t: int) -> SpinorField:
    """Rebuild a :class:`SpinorField` from recorded amplitudes at time ``t``."""
    if t not in result.amplitudes:
        raise MissingRecordError(f"no amplitudes recorded at t = {t}")
    left, right = result.amplitudes[t]
    return SpinorField(left.copy(), right.copy(), t, result.T)

