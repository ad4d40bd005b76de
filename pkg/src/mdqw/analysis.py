"""Derived quantities from run outputs.

* late-time saturation of occupation ratios and their sweeps over ``(x_D, n, s)``
* least-squares line and power-law fits, and ``n*`` (largest ``n`` whose
  saturation still reaches 1)
* data collapse of saturation-vs-``s`` curves
* ratio profiles in ``r = x - x_D`` with the ``A + B r^nu sin(r^beta) exp(-r^2/D)``
  model, and the equal-time correlation ratio ``g_ns / g_inf``
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .detector import DetectorPolicy, Moving, MovingIJ, NoDetector
from .engine import (
    EPS_RATIO,
    RatioSeries,
    RecordSpec,
    RunResult,
    ratio_series,
    reference_run,
    run,
    snapshot,
)
from .errors import (
    DegenerateDataError,
    DomainError,
    EmptySeriesError,
    StationarityWarning,
)

__all__ = [
    "R_PROFILE_PARAMS",
    "CollapsePlan",
    "FitResult",
    "RProfile",
    "RProfileModelParams",
    "SatEstimate",
    "SweepRow",
    "collapse",
    "collapse_dispersion",
    "correlation_ratio",
    "estimate_plan",
    "fit_linear",
    "fit_power_law",
    "model_r_profile",
    "moving_policy",
    "nstar",
    "nstar_from_rows",
    "r_profile",
    "r_profile_residual",
    "saturation",
    "site_saturation",
    "sweep_saturation",
]

SPREAD_THRESHOLD = 0.05
DEFAULT_WINDOW = 0.2


# ---------------------------------------------------------------------------
# saturation


@dataclass(frozen=True)
class SatEstimate:
    value: float
    window: tuple[int, int]
    spread: float

    @property
    def stationary(self) -> bool:
        return self.spread <= SPREAD_THRESHOLD


def saturation(series: RatioSeries, window_fraction: float = DEFAULT_WINDOW) -> SatEstimate:
    """Mean of the last ``window_fraction`` of the series' points.

    ``spread`` is ``(max - min) / mean`` over that window; a
    :class:`StationarityWarning` is issued when it exceeds 5%.
    """
    if not 0 < window_fraction < 1:
        raise DomainError(f"window_fraction must lie in (0, 1), got {window_fraction}")
    if len(series) == 0:
        raise EmptySeriesError("cannot take the saturation of an empty series")
    k = max(2, math.ceil(window_fraction * len(series)))
    k = min(k, len(series))
    w = series.values[-k:]
    mean = float(np.mean(w))
    spread = float((w.max() - w.min()) / mean) if mean != 0 else math.inf
    est = SatEstimate(mean, (int(series.times[-k]), int(series.times[-1])), spread)
    if not est.stationary:
        warnings.warn(
            f"ratio {series.label} at x={series.site} not stationary over "
            f"t in {est.window}: spread {spread:.3g}",
            StationarityWarning,
            stacklevel=2,
        )
    return est


def moving_policy(x_D: int, n: int, s: int | None) -> DetectorPolicy:
    """``Moving`` for finite ``s``; ``s=None`` means infinite jump."""
    return MovingIJ(x_D, n) if s is None else Moving(x_D, n, s)


def site_saturation(
    policy: DetectorPolicy,
    T: int,
    x: int | None = None,
    *,
    window_fraction: float = DEFAULT_WINDOW,
) -> SatEstimate:
    """Saturation of ``f_policy(x, t) / f_IW(x, t)``; ``x`` defaults to ``x_D``."""
    x = policy.x_D if x is None else x
    spec = RecordSpec.make(sites=[x], events=False)
    ref = reference_run(NoDetector(), T, spec)
    return saturation(ratio_series(run(policy, T, spec), ref, x), window_fraction)


@dataclass(frozen=True)
class SweepRow:
    x_D: int
    n: int
    s: int | None  # None = infinite jump
    value: float
    spread: float
    t_lo: int
    t_hi: int

    @property
    def s_label(self) -> str:
        return "IJ" if self.s is None else str(self.s)


def _sort_key(p: tuple[int, int, int | None]) -> tuple:
    x_D, n, s = p
    return (x_D, n, math.inf if s is None else s)


def _site_job(args: tuple[DetectorPolicy, int, int]) -> np.ndarray:
    policy, T, x = args
    return run(policy, T, RecordSpec.make(sites=[x], events=False)).series(x)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("MDQW_WORKERS", "1")))
    except ValueError:
        return 1


def sweep_saturation(
    points: Iterable[tuple[int, int, int | None]],
    T: int,
    *,
    window_fraction: float = DEFAULT_WINDOW,
    workers: int | None = None,
) -> list[SweepRow]:
    """Saturation at ``x_D`` for every ``(x_D, n, s)``; rows sorted by ``(x_D, n, s)``.

    Runs are independent and may go to a process pool; the result does not
    depend on the worker count.
    """
    pts = sorted(set(points), key=_sort_key)
    if not pts:
        raise DomainError("empty sweep grid")
    workers = default_workers() if workers is None else workers
    jobs = [(moving_policy(*p), T, p[0]) for p in pts]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            series = list(pool.map(_site_job, jobs, chunksize=1))
    else:
        series = [_site_job(j) for j in jobs]

    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StationarityWarning)
        for (x_D, n, s), f in zip(pts, series):
            ref = reference_run(NoDetector(), T, RecordSpec.make(sites=[x_D], events=False))
            t = np.arange(T + 1)
            g = ref.series(x_D)
            keep = ((t - x_D) % 2 == 0) & (g >= EPS_RATIO)
            est = saturation(RatioSeries(t[keep], f[keep] / g[keep], x_D), window_fraction)
            rows.append(SweepRow(x_D, n, s, est.value, est.spread, *est.window))
    return rows


def nstar_from_rows(rows: Iterable[SweepRow], x_D: int, s: int | None) -> int:
    """Largest ``n`` among the rows for ``(x_D, s)`` with saturation >= 1, else 0."""
    ok = [r.n for r in rows if r.x_D == x_D and r.s == s and r.value >= 1.0]
    return max(ok, default=0)


def nstar(
    x_D: int,
    s: int | None,
    n_max: int,
    T: int,
    *,
    window_fraction: float = DEFAULT_WINDOW,
    workers: int | None = None,
) -> int:
    """Largest ``n <= n_max`` whose saturation at ``x_D`` is at least 1 (0 if none)."""
    if n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    rows = sweep_saturation(
        [(x_D, n, s) for n in range(1, n_max + 1)],
        T,
        window_fraction=window_fraction,
        workers=workers,
    )
    return nstar_from_rows(rows, x_D, s)


# ---------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r2: float
    n_points: int


def fit_linear(points: Sequence[tuple[float, float]]) -> FitResult:
    """Ordinary least squares ``y = slope * x + intercept``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DomainError(f"need at least 3 points for a fit with r2, got {len(pts)}")
    x, y = pts[:, 0], pts[:, 1]
    dx = x - x.mean()
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise DegenerateDataError("all x values are equal")
    slope = float(np.dot(dx, y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    r2 = 1.0 if ss_tot == 0.0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return FitResult(slope, intercept, r2, len(pts))


def fit_power_law(points: Sequence[tuple[float, float]]) -> FitResult:
    """Fit ``sat = C n^slope`` by least squares on ``(log n, log sat)``.

    ``intercept`` is ``log C``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if np.any(pts <= 0):
        raise DomainError("power-law fit needs strictly positive n and values")
    return fit_linear(np.log(pts))


# ---------------------------------------------------------------------------
# data collapse


@dataclass(frozen=True)
class CollapsePlan:
    """``x' = (s - s_max(n)) n^-gamma``, ``y' = (sat - F(n)) n^delta``."""

    gamma: float
    delta: float
    F: Mapping[int, float]
    s_max: Mapping[int, float]


Curve = Sequence[tuple[float, float]]


def estimate_plan(curves: Mapping[int, Curve], gamma: float, delta: float) -> CollapsePlan:
    """Take ``F(n)`` as the value at the largest ``s`` and ``s_max(n)`` as the
    ``s`` where ``|sat - F(n)|`` is largest."""
    F, s_max = {}, {}
    for n, c in curves.items():
        arr = np.asarray(sorted(c), dtype=float)
        F[n] = float(arr[-1, 1])
        s_max[n] = float(arr[np.argmax(np.abs(arr[:, 1] - F[n])), 0])
    return CollapsePlan(gamma, delta, F, s_max)


def collapse_dispersion(
    collapsed: Mapping[int, np.ndarray], grid_points: int = 401
) -> tuple[float, float]:
    """``(dispersion, pooled_std)`` of rescaled curves on a shared ``x'`` grid.

    At each grid point covered by at least two curves, the curves are
    linearly interpolated and their standard deviation taken; ``dispersion``
    is the mean of those. ``pooled_std`` is the standard deviation of all
    interpolated values together and sets the scale of ``y'``.
    """
    curves = list(collapsed.values())
    lo = min(c[0, 0] for c in curves)
    hi = max(c[-1, 0] for c in curves)
    sds, pooled = [], []
    for q in np.linspace(lo, hi, grid_points):
        ys = [np.interp(q, c[:, 0], c[:, 1]) for c in curves if c[0, 0] <= q <= c[-1, 0]]
        if len(ys) >= 2:
            sds.append(np.std(ys))
            pooled.extend(ys)
    if not sds:
        raise DomainError("rescaled curves do not overlap in x'")
    return float(np.mean(sds)), float(np.std(pooled))


def collapse(
    curves: Mapping[int, Curve], plan: CollapsePlan
) -> tuple[dict[int, np.ndarray], float]:
    """Rescale each ``n``'s ``(s, sat)`` curve and score how well they overlap.

    Returns the rescaled curves (arrays of ``(x', y')`` rows, sorted by
    ``x'``) and a quality score, lower is better: the cross-curve dispersion
    divided by the pooled spread of ``y'``. Dividing out the scale keeps the
    score from rewarding a plan just for shrinking ``y'``.
    """
    out: dict[int, np.ndarray] = {}
    for n, c in sorted(curves.items()):
        arr = np.asarray(sorted(c), dtype=float)
        if len(arr) < 3:
            raise DomainError(f"curve for n={n} has fewer than 3 points")
        xs = (arr[:, 0] - plan.s_max.get(n, 0.0)) * float(n) ** (-plan.gamma)
        ys = (arr[:, 1] - plan.F.get(n, 0.0)) * float(n) ** plan.delta
        if xs[-1] - xs[0] <= 0:
            raise DomainError(f"degenerate x' range for n={n}")
        out[n] = np.column_stack([xs, ys])
    dispersion, pooled = collapse_dispersion(out)
    quality = 0.0 if dispersion == 0.0 else dispersion / pooled
    return out, quality


# ---------------------------------------------------------------------------
# r-profiles and correlations


@dataclass
class RProfile:
    r: np.ndarray
    ratio: np.ndarray
    t: int
    x_D: int

    def at(self, r: int) -> float:
        idx = np.flatnonzero(self.r == r)
        if not idx.size:
            raise KeyError(r)
        return float(self.ratio[idx[0]])


def r_profile(
    mdqw: RunResult,
    iw: RunResult,
    t: int,
    r_range: tuple[int, int],
    x_D: int | None = None,
) -> RProfile:
    """``f_ns(x_D + r, t) / f_inf(x_D + r, t)`` for ``r`` in ``r_range`` (inclusive).

    Sites with the wrong parity, or where the IW occupation is a structural
    zero, are skipped.
    """
    x_D = mdqw.policy.x_D if x_D is None else x_D
    fa, fb = snapshot(mdqw, t), snapshot(iw, t)
    sites = mdqw.sites
    r = sites - x_D
    keep = (r >= r_range[0]) & (r <= r_range[1]) & ((sites + t) % 2 == 0) & (fb >= EPS_RATIO)
    return RProfile(r[keep], fa[keep] / fb[keep], t, x_D)


@dataclass(frozen=True)
class RProfileModelParams:
    A: float
    B: float
    nu: float
    beta: float
    D: float


#: Approximate parameters keyed by ``(n, s)``.
R_PROFILE_PARAMS: dict[tuple[int, int], RProfileModelParams] = {
    (2, 1): RProfileModelParams(1.05, 0.5, 0.2, 0.456, 3e8),
    (2, 15): RProfileModelParams(1.05, 0.06, 0.2, 0.4, 3e7),
    (2, 30): RProfileModelParams(1.05, 0.06, 0.2, 0.4, 3e8),
    (15, 1): RProfileModelParams(1.7, 0.6, 0.19, 0.54, 5e5),
    (15, 15): RProfileModelParams(1.7, 0.7, 0.19, 0.54, 7e4),
    (15, 30): RProfileModelParams(1.7, 0.7, 0.19, 0.54, 6e4),
    (30, 1): RProfileModelParams(1.7, 0.75, 0.15, 0.6, 3e5),
    (30, 15): RProfileModelParams(1.7, 0.86, 0.15, 0.598, 2e5),
    (30, 30): RProfileModelParams(1.7, 0.86, 0.15, 0.598, 2e5),
}


def model_r_profile(r, p: RProfileModelParams):
    """``A + B r^nu sin(r^beta) exp(-r^2 / D)`` for ``r >= 0``.

    The powers are undefined for negative ``r``, so those raise instead of
    being continued.
    """
    if p.D <= 0:
        raise DomainError(f"D must be positive, got {p.D}")
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0):
        raise DomainError("model is only defined for r >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        val = p.A + p.B * arr ** p.nu * np.sin(arr ** p.beta) * np.exp(-arr ** 2 / p.D)
    val = np.where(arr == 0, p.A, val)
    return float(val) if val.ndim == 0 else val


def r_profile_residual(profile: RProfile, p: RProfileModelParams) -> tuple[float, int]:
    """Mean squared difference between the model and ``profile`` over ``r >= 0``."""
    keep = profile.r >= 0
    if not keep.any():
        raise EmptySeriesError("profile has no r >= 0 points")
    model = model_r_profile(profile.r[keep], p)
    diff = profile.ratio[keep] - model
    return float(np.mean(diff ** 2)), int(keep.sum())


def correlation_ratio(
    mdqw: RunResult,
    iw: RunResult,
    r: int,
    x_D: int | None = None,
    *,
    eps: float = EPS_RATIO,
) -> RatioSeries:
    """``g_ns(x_D + r, t) / g_inf(x_D + r, t)`` with ``g(y) = f(y, t) f(x_D, t)``.

    Only times at which both IW factors are structurally nonzero are kept;
    for odd ``r`` the two sites never share a parity and the series is empty.
    """
    x_D = mdqw.policy.x_D if x_D is None else x_D
    if mdqw.T != iw.T:
        raise DomainError(f"runs have different T ({mdqw.T} vs {iw.T})")
    y = x_D + r
    a0, ar = mdqw.series(x_D), mdqw.series(y)
    b0, br = iw.series(x_D), iw.series(y)
    t = np.arange(mdqw.T + 1)
    keep = ((t - x_D) % 2 == 0) & ((t - y) % 2 == 0) & (b0 >= eps) & (br >= eps)
    vals = (ar[keep] / br[keep]) * (a0[keep] / b0[keep])
    return RatioSeries(t[keep], vals, y, f"g[{mdqw.policy.label}]/g[{iw.policy.label}] r={r}")
