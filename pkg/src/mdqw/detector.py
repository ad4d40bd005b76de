"""Absorbing detector regimes and the per-step projective measurement.

A detector at site ``p`` absorbs with unit efficiency: after each walk step
the probability ``f(p, t)`` is added to the absorbed mass and both coin
components at ``p`` are set to zero. Amplitudes are not renormalized.

Regimes
-------
``NoDetector``  free (infinite) walk, IW
``Fixed``       detector never moves, semi-infinite walk, SIW
``Moving``      after ``n`` counted detections the detector hops by ``s`` sites
``MovingIJ``    infinite jump: detector removed after ``n`` counted detections
``Quench``      detector removed after time ``t_off``, QQW

Only measurements that remove more than :data:`COUNT_THRESHOLD` count as
detections. With the walker seeded at the origin and ``x_D > 0`` this gives
the hop timing ``t_i = x_D + i * (2n + s)`` for the first detection of epoch
``i`` (see :func:`epoch_start_times`).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Union

from .errors import DomainError, ScheduleError
from .walk import SpinorField

__all__ = [
    "COUNT_THRESHOLD",
    "DetectionEvent",
    "DetectorPolicy",
    "DetectorState",
    "Fixed",
    "Moving",
    "MovingIJ",
    "NoDetector",
    "Quench",
    "epoch_start_times",
    "make_policy",
    "measure",
]

COUNT_THRESHOLD = 1e-12


def _require_positive(name: str, value: int) -> None:
    if not isinstance(value, int) or isinstance(value, bool):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value <= 0:
        raise DomainError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class NoDetector:
    mode = "iw"

    @property
    def label(self) -> str:
        return "IW"

    def params(self) -> dict:
        return {"mode": self.mode}


@dataclass(frozen=True)
class Fixed:
    x_D: int
    mode = "siw"

    def __post_init__(self) -> None:
        _require_positive("x_D", self.x_D)

    @property
    def label(self) -> str:
        return f"SIW{self.x_D}"

    def params(self) -> dict:
        return {"mode": self.mode, "x_D": self.x_D}


@dataclass(frozen=True)
class Moving:
    x_D: int
    n: int
    s: int
    mode = "moving"

    def __post_init__(self) -> None:
        _require_positive("x_D", self.x_D)
        _require_positive("n", self.n)
        _require_positive("s", self.s)

    @property
    def label(self) -> str:
        return f"{self.n}D{self.s}S"

    def params(self) -> dict:
        return {"mode": self.mode, "x_D": self.x_D, "n": self.n, "s": self.s}


@dataclass(frozen=True)
class MovingIJ:
    x_D: int
    n: int
    mode = "moving"

    def __post_init__(self) -> None:
        _require_positive("x_D", self.x_D)
        _require_positive("n", self.n)

    @property
    def label(self) -> str:
        return f"{self.n}DIJ"

    def params(self) -> dict:
        return {"mode": self.mode, "x_D": self.x_D, "n": self.n, "s": "IJ"}


@dataclass(frozen=True)
class Quench:
    """Detector at ``x_D`` measures at every step ``t <= t_off``, then is withdrawn."""

    x_D: int
    t_off: int
    mode = "quench"

    def __post_init__(self) -> None:
        _require_positive("x_D", self.x_D)
        _require_positive("t_off", self.t_off)

    @property
    def label(self) -> str:
        return f"QQW{self.x_D}@{self.t_off}"

    def params(self) -> dict:
        return {"mode": self.mode, "x_D": self.x_D, "t_off": self.t_off}


DetectorPolicy = Union[NoDetector, Fixed, Moving, MovingIJ, Quench]


def make_policy(
    mode: str,
    x_D: int | None = None,
    n: int | None = None,
    s: int | str | None = None,
    t_off: int | None = None,
) -> DetectorPolicy:
    """Build a policy from loosely typed parameters (CLI and config files).

    ``s`` may be the token ``"IJ"`` (or ``None`` in moving mode) for an
    infinite jump.
    """
    mode = mode.lower()
    if mode == "iw":
        return NoDetector()
    if x_D is None:
        raise DomainError(f"mode {mode!r} requires x_D")
    if mode in ("siw", "fixed"):
        return Fixed(x_D)
    if mode in ("moving", "ij"):
        if n is None:
            raise DomainError("moving mode requires n")
        if mode == "ij" or s is None or (isinstance(s, str) and s.upper() == "IJ"):
            return MovingIJ(x_D, n)
        return Moving(x_D, n, int(s))
    if mode in ("quench", "qqw"):
        if t_off is None:
            raise DomainError("quench mode requires t_off")
        return Quench(x_D, t_off)
    raise DomainError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class DetectionEvent:
    time: int
    position: int
    probability: float


@dataclass
class DetectorState:
    """Live detector bookkeeping for one run.

    ``absorbed_total`` is ``d``, the total probability removed so far. It
    equals the sum of event probabilities plus ``uncounted_total``, the mass
    removed by sub-threshold measurements that do not count as detections.
    """

    active: bool
    position: int
    epoch: int = 0
    count_in_epoch: int = 0
    absorbed_total: float = 0.0
    uncounted_total: float = 0.0
    events: list[DetectionEvent] = dc_field(default_factory=list)
    last_time: int = -1

    @classmethod
    def start(cls, policy: DetectorPolicy) -> "DetectorState":
        if isinstance(policy, NoDetector):
            return cls(active=False, position=0)
        return cls(active=True, position=policy.x_D)


def measure(
    field: SpinorField,
    det: DetectorState,
    policy: DetectorPolicy,
    *,
    inplace: bool = False,
) -> tuple[SpinorField, DetectorState]:
    """Projective absorption at the detector site for the current step.

    ``det`` is updated in place and returned. The field is copied before the
    detector site is zeroed unless ``inplace`` is set.

    Raises
    ------
    ScheduleError
        If called twice for the same ``field.time``.
    """
    t = field.time
    if t <= det.last_time:
        raise ScheduleError(f"detector already measured at t = {t}")
    det.last_time = t
    if not det.active:
        return field, det
    if isinstance(policy, Quench) and t > policy.t_off:
        det.active = False
        return field, det

    x = det.position
    if abs(x) > field.half_width:
        return field, det
    i = x + field.half_width
    pl, pr = field.left[i], field.right[i]
    p = pl.real * pl.real + pl.imag * pl.imag + pr.real * pr.real + pr.imag * pr.imag
    if p == 0.0:
        return field, det
    if not inplace:
        field = field.copy()
    field.left[i] = 0
    field.right[i] = 0
    det.absorbed_total += p
    if p <= COUNT_THRESHOLD:
        det.uncounted_total += p
        return field, det

    det.events.append(DetectionEvent(t, x, float(p)))
    det.count_in_epoch += 1
    if isinstance(policy, (Moving, MovingIJ)) and det.count_in_epoch >= policy.n:
        det.count_in_epoch = 0
        det.epoch += 1
        if isinstance(policy, MovingIJ):
            det.active = False
        else:
            det.position += policy.s
    return field, det


def epoch_start_times(x_D: int, n: int, s: int, i_max: int) -> list[int]:
    """Predicted first-detection time of epochs ``0..i_max``: ``x_D + i(2n + s)``.

    The walker front first reaches ``x_D`` at ``t = x_D``; each epoch spends
    ``2n - 2`` further steps on its ``n`` parity-spaced detections, and the
    released amplitude needs ``s + 2`` more steps to reach the next site.
    """
    if x_D <= 0:
        raise DomainError(f"x_D must be positive, got {x_D}")
    if n < 1 or s < 1:
        raise DomainError(f"n and s must be >= 1, got n={n}, s={s}")
    return [x_D + i * (2 * n + s) for i in range(i_max + 1)]
