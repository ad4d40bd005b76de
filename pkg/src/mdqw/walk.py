"""Two-component walker state on a bounded 1D lattice and the Hadamard step.

The state stores ``psi_L`` and ``psi_R`` as complex128 arrays of length
``2X + 1``; lattice site ``x`` lives at array index ``x + X``.

One walk step is the Hadamard coin on the chirality followed by the
conditional shift (left component to ``x - 1``, right component to ``x + 1``).
The functions here are pure: they return new fields. :class:`Stepper`
is the in-place variant used by the engine for long runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, NormalizationError

__all__ = [
    "INV_SQRT2",
    "SYMMETRIC_SEED",
    "SpinorField",
    "Stepper",
    "coin_step",
    "evolve_step",
    "initial_state",
    "occupation",
    "occupations",
    "shift_step",
    "total_probability",
]

INV_SQRT2 = 1.0 / math.sqrt(2.0)

#: ``(a0, b0) = (1/sqrt2, i/sqrt2)``, the seed that gives a left/right symmetric walk.
SYMMETRIC_SEED = (complex(INV_SQRT2, 0.0), complex(0.0, INV_SQRT2))

_NORM_TOL = 1e-12


@dataclass
class SpinorField:
    """Walker wavefunction ``(psi_L(x, t), psi_R(x, t))`` for ``x`` in ``[-X, X]``."""

    left: np.ndarray
    right: np.ndarray
    time: int
    half_width: int

    def __post_init__(self) -> None:
        n = 2 * self.half_width + 1
        if self.left.shape != (n,) or self.right.shape != (n,):
            raise ValueError(
                f"arrays must have shape ({n},) for half_width={self.half_width}"
            )

    @property
    def sites(self) -> np.ndarray:
        """Integer lattice coordinates matching the array indices."""
        return np.arange(-self.half_width, self.half_width + 1)

    def index(self, x: int) -> int:
        if abs(x) > self.half_width:
            raise IndexError(f"site {x} outside lattice [-{self.half_width}, {self.half_width}]")
        return x + self.half_width

    def copy(self) -> "SpinorField":
        return SpinorField(self.left.copy(), self.right.copy(), self.time, self.half_width)


def initial_state(a0: complex, b0: complex, half_width: int) -> SpinorField:
    """Walker localized at the origin with coin state ``(a0, b0)`` at ``t = 0``.

    Raises
    ------
    NormalizationError
        If ``|a0|^2 + |b0|^2`` differs from 1 by more than 1e-12.
    CapacityError
        If ``half_width < 1``.
    """
    if half_width < 1:
        raise CapacityError(f"half_width must be >= 1, got {half_width}")
    norm = abs(a0) ** 2 + abs(b0) ** 2
    if abs(norm - 1.0) > _NORM_TOL:
        raise NormalizationError(f"|a0|^2 + |b0|^2 = {norm!r}, expected 1")
    n = 2 * half_width + 1
    left = np.zeros(n, dtype=np.complex128)
    right = np.zeros(n, dtype=np.complex128)
    left[half_width] = a0
    right[half_width] = b0
    return SpinorField(left, right, 0, half_width)


def coin_step(field: SpinorField) -> SpinorField:
    """Apply the Hadamard coin at every site; time is unchanged."""
    left = (field.left + field.right) * INV_SQRT2
    right = (field.left - field.right) * INV_SQRT2
    return SpinorField(left, right, field.time, field.half_width)


def _check_edges(field: SpinorField) -> None:
    if (
        field.left[0] != 0
        or field.right[0] != 0
        or field.left[-1] != 0
        or field.right[-1] != 0
    ):
        raise CapacityError(
            f"nonzero amplitude at the lattice edge |x| = {field.half_width} "
            f"at t = {field.time}; increase half_width"
        )


def shift_step(field: SpinorField) -> SpinorField:
    """Move the left component one site down and the right one site up."""
    _check_edges(field)
    left = np.zeros_like(field.left)
    right = np.zeros_like(field.right)
    left[:-1] = field.left[1:]
    right[1:] = field.right[:-1]
    return SpinorField(left, right, field.time + 1, field.half_width)


def evolve_step(field: SpinorField) -> SpinorField:
    """One full walk step: coin, then shift."""
    # the coin keeps an all-zero site all-zero, so shift_step's edge check suffices
    return shift_step(coin_step(field))


def occupations(field: SpinorField) -> np.ndarray:
    """``f(x, t) = |psi_L|^2 + |psi_R|^2`` for every stored site."""
    return (
        field.left.real ** 2
        + field.left.imag ** 2
        + field.right.real ** 2
        + field.right.imag ** 2
    )


def occupation(field: SpinorField, x: int) -> float:
    i = field.index(x)
    return float(abs(field.left[i]) ** 2 + abs(field.right[i]) ** 2)


def total_probability(field: SpinorField) -> float:
    """Remaining norm; equals ``1 - d`` once a detector has absorbed ``d``."""
    return float(math.fsum(occupations(field)))


class Stepper:
    """In-place evolution of a :class:`SpinorField` restricted to its support.

    Only the window of sites that can hold amplitude is touched, so a run of
    ``T`` steps costs ``O(T^2)`` rather than ``O(T * X)``. Results are
    bit-identical to iterating :func:`evolve_step`.
    """

    def __init__(self, field: SpinorField):
        self.field = field
        nz = np.flatnonzero((field.left != 0) | (field.right != 0))
        if nz.size:
            self.lo, self.hi = int(nz[0]), int(nz[-1])
        else:
            self.lo, self.hi = field.half_width, field.half_width

    def step(self) -> None:
        f = self.field
        last = f.left.size - 1
        lo, hi = self.lo, self.hi
        if lo == 0 or hi == last:
            _check_edges(f)
        L = f.left
        R = f.right
        a = (L[lo : hi + 1] + R[lo : hi + 1]) * INV_SQRT2
        b = (L[lo : hi + 1] - R[lo : hi + 1]) * INV_SQRT2
        # window [lo, hi] may be widened only as far as storage allows; the
        # edge check above guarantees the clipped amplitudes are zero.
        if lo > 0:
            L[lo - 1 : hi] = a
        else:
            L[lo:hi] = a[1:]
        L[hi] = 0
        if hi < last:
            R[lo + 1 : hi + 2] = b
        else:
            R[lo + 1 : hi + 1] = b[:-1]
        R[lo] = 0
        self.lo = max(lo - 1, 0)
        self.hi = min(hi + 1, last)
        f.time += 1
