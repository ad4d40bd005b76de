"""Command-line front end.

Subcommands write plot-ready tables (CSV by default, ``--format json`` for a
JSON mirror) into ``--out``:

``run``        occupation snapshots and the detection log of one run
``ratio``      ``f_ns(x, t) / f_inf(x, t)`` time series for a grid of policies
``sweep``      saturation table over ``(x_D, n, s)`` grids, with ``n*`` and fits
``collapse``   rescaled saturation curves and their collapse quality
``rprofile``   ratio profile against ``r = x - x_D`` with the model column
``correlate``  equal-time correlation ratio ``g_ns / g_inf`` time series
``verify``     built-in consistency checks

Any flag can also be given in a ``key=value`` file passed with ``--config``;
flags on the command line win. ``MDQW_WORKERS`` sets the sweep worker count.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis
from .detector import DetectorPolicy, Fixed, Moving, NoDetector, make_policy
from .engine import RecordSpec, msd_series, ratio_series, reference_run, run, snapshot
from .errors import DomainError, MDQWError, StationarityWarning
from .tables import read_csv, write_table
from .verify import run_checks

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing helpers


def parse_ints(tokens: Sequence[str] | str | None) -> list[int]:
    """``["2", "6:10", "14"]`` -> ``[2, 6, 7, 8, 9, 10, 14]``; commas also split."""
    if tokens is None:
        return []
    if isinstance(tokens, (str, int)):
        tokens = [str(tokens)]
    out: list[int] = []
    for tok in tokens:
        for part in str(tok).replace(",", " ").split():
            try:
                if ":" in part:
                    a, b = part.split(":", 1)
                    lo, hi = int(a), int(b)
                    if hi < lo:
                        raise UsageError(f"empty range {part!r}")
                    out.extend(range(lo, hi + 1))
                else:
                    out.append(int(part))
            except ValueError:
                raise UsageError(f"not an integer or range: {part!r}") from None
    return out


def parse_hops(tokens: Sequence[str] | str | None) -> list[int | None]:
    """Like :func:`parse_ints` but accepts ``IJ`` (returned as ``None``)."""
    if tokens is None:
        return []
    if isinstance(tokens, (str, int)):
        tokens = [str(tokens)]
    out: list[int | None] = []
    for tok in tokens:
        for part in str(tok).replace(",", " ").split():
            out.extend([None] if part.upper() == "IJ" else parse_ints([part]))
    return out


def _policies(args: argparse.Namespace) -> list[DetectorPolicy]:
    """All policies selected by ``--mode/--xd/--n/--s/--t-off`` (grids allowed)."""
    mode = args.mode.lower()
    xds = parse_ints(args.xd) or [None]
    if mode in ("moving", "ij"):
        ns = parse_ints(args.n)
        if not ns:
            raise UsageError("moving mode needs --n")
        hops = [None] if mode == "ij" else parse_hops(args.s)
        if not hops:
            raise UsageError("moving mode needs --s (an integer or IJ)")
        return [
            make_policy("moving", x_D=x, n=n, s="IJ" if s is None else s)
            for x in xds
            for n in ns
            for s in hops
        ]
    return [make_policy(mode, x_D=x, t_off=args.t_off) for x in xds]


def _header(args: argparse.Namespace, **extra) -> dict:
    h = {"command": args.command}
    h.update(extra)
    return h


def _out(args: argparse.Namespace, name: str) -> Path:
    return Path(args.out) / name


# ---------------------------------------------------------------------------
# commands


def cmd_run(args: argparse.Namespace) -> int:
    policies = _policies(args)
    T = args.T
    times = parse_ints(args.snapshot) or [T]
    spec = RecordSpec.make(snapshots=times, sampling=args.sampling)
    for policy in policies:
        res = run(policy, T, spec)
        for t in sorted(times):
            f = snapshot(res, t)
            write_table(
                _out(args, f"snapshot_{policy.label}_t{t}"),
                _header(args, **res.provenance(), t=t),
                ["x", "f"],
                zip(res.sites, f),
                args.format,
            )
        if not isinstance(policy, NoDetector):
            write_table(
                _out(args, f"events_{policy.label}"),
                _header(args, **res.provenance(), absorbed=res.absorbed_total),
                ["time", "position", "probability"],
                ((e.time, e.position, e.probability) for e in res.events),
                args.format,
            )
        write_table(
            _out(args, f"msd_{policy.label}"),
            _header(args, **res.provenance()),
            ["t", "msd"],
            ((int(t), v) for t, v in msd_series(res)),
            args.format,
        )
    return EXIT_OK


def cmd_ratio(args: argparse.Namespace) -> int:
    policies = _policies(args)
    T = args.T
    summary = []
    for policy in policies:
        x = policy.x_D if args.site is None else args.site
        spec = RecordSpec.make(sites=[x], events=False, sampling=args.sampling)
        if args.reference == "siw":
            ref = reference_run(Fixed(policy.x_D), T, spec)
        else:
            ref = reference_run(NoDetector(), T, spec)
        series = ratio_series(run(policy, T, spec), ref, x)
        write_table(
            _out(args, f"ratio_{policy.label}_x{x}"),
            _header(args, **policy.params(), T=T, site=x, reference=args.reference, sampling=args.sampling),
            ["t", "value"],
            zip(series.times, series.values),
            args.format,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StationarityWarning)
            est = analysis.saturation(series, args.window)
        summary.append((policy.label, x, est.value, est.spread, est.window[0], est.window[1]))
    write_table(
        _out(args, "ratio_summary"),
        _header(args, T=T, window=args.window, reference=args.reference, sampling=args.sampling),
        ["policy", "site", "sat", "spread", "t_lo", "t_hi"],
        summary,
        args.format,
    )
    return EXIT_OK


def _sweep_points(args: argparse.Namespace) -> list[tuple[int, int, int | None]]:
    xds, ns, hops = parse_ints(args.xd), parse_ints(args.n), parse_hops(args.s)
    if not (xds and ns and hops):
        raise UsageError("sweep grid is empty: give --xd, --n and --s")
    pts = [(x, n, s) for x in xds for n in ns for s in hops]
    for p in pts:
        analysis.moving_policy(*p)  # validates before any simulation
    return pts


def _sweep_rows(args: argparse.Namespace) -> list[analysis.SweepRow]:
    return analysis.sweep_saturation(
        _sweep_points(args), args.T, window_fraction=args.window, workers=args.workers
    )


def cmd_sweep(args: argparse.Namespace) -> int:
    rows = _sweep_rows(args)
    head = _header(args, T=args.T, window=args.window)
    write_table(
        _out(args, "sweep"),
        head,
        ["x_D", "n", "s", "sat", "spread", "t_lo", "t_hi"],
        ((r.x_D, r.n, r.s_label, r.value, r.spread, r.t_lo, r.t_hi) for r in rows),
        args.format,
    )
    groups = sorted({(r.s is None, r.s or 0, r.x_D) for r in rows})
    nstar_rows, fit_rows = [], []
    for ij, s, x_D in groups:
        s_val = None if ij else s
        label = "IJ" if ij else str(s)
        nstar_rows.append((label, x_D, analysis.nstar_from_rows(rows, x_D, s_val)))
        pts = [(r.n, r.value) for r in rows if r.x_D == x_D and r.s == s_val and r.n >= args.fit_nmin]
        if len(pts) >= 3:
            fit = analysis.fit_power_law(pts)
            fit_rows.append((label, x_D, fit.slope, math.exp(fit.intercept), fit.r2, fit.n_points))
    write_table(_out(args, "nstar"), head, ["s", "x_D", "nstar"], nstar_rows, args.format)
    write_table(
        _out(args, "powerlaw_fits"),
        _header(args, T=args.T, window=args.window, fit_nmin=args.fit_nmin),
        ["s", "x_D", "slope", "prefactor", "r2", "points"],
        fit_rows,
        args.format,
    )
    line_rows = []
    for label in sorted({r[0] for r in nstar_rows}):
        pts = [(x, v) for s, x, v in nstar_rows if s == label]
        if len({x for x, _ in pts}) >= 3:
            fit = analysis.fit_linear(pts)
            line_rows.append((label, fit.slope, fit.intercept, fit.r2, fit.n_points))
    write_table(
        _out(args, "nstar_fit"), head, ["s", "slope", "intercept", "r2", "points"], line_rows, args.format
    )
    return EXIT_OK


def _rows_from_input(path: str) -> tuple[list[analysis.SweepRow], dict]:
    header, cols, cells = read_csv(path)
    need = ["x_D", "n", "s", "sat", "spread", "t_lo", "t_hi"]
    if cols[: len(need)] != need:
        raise UsageError(f"{path} is not a sweep table (columns {cols})")
    rows = [
        analysis.SweepRow(
            int(c[0]), int(c[1]), None if c[2] == "IJ" else int(c[2]),
            float(c[3]), float(c[4]), int(c[5]), int(c[6]),
        )
        for c in cells
    ]
    return rows, header


def cmd_collapse(args: argparse.Namespace) -> int:
    if args.input:
        rows, src = _rows_from_input(args.input)
        head = _header(args, input=Path(args.input).name, **{f"src_{k}": v for k, v in src.items() if k != "command"})
    else:
        rows = _sweep_rows(args)
        head = _header(args, T=args.T, window=args.window)
    if not rows:
        raise UsageError("no saturation rows to collapse")

    if args.kind == "n":
        write_table(
            _out(args, "collapse_n"),
            head,
            ["x_D", "s", "n", "sat", "sat_n2_over_xD2"],
            ((r.x_D, r.s_label, r.n, r.value, r.value * r.n ** 2 / r.x_D ** 2) for r in rows),
            args.format,
        )
        return EXIT_OK

    xds = sorted({r.x_D for r in rows})
    if len(xds) != 1:
        raise UsageError(f"s-collapse needs a single x_D, got {xds}")
    curves: dict[int, list[tuple[float, float]]] = {}
    for r in rows:
        if r.s is not None:  # infinite jump has no position on the s axis
            curves.setdefault(r.n, []).append((float(r.s), r.value))
    plan = analysis.estimate_plan(curves, args.gamma, args.delta)
    collapsed, quality = analysis.collapse(curves, plan)
    dispersion, pooled = analysis.collapse_dispersion(collapsed)
    head = {**head, "x_D": xds[0], "gamma": args.gamma, "delta": args.delta,
            "quality": quality, "dispersion": dispersion, "pooled_std": pooled}
    write_table(
        _out(args, "collapse_s"),
        head,
        ["n", "x_scaled", "y_scaled"],
        ((n, x, y) for n, arr in collapsed.items() for x, y in arr),
        args.format,
    )
    write_table(
        _out(args, "collapse_plan"),
        head,
        ["n", "F", "s_max"],
        ((n, plan.F[n], plan.s_max[n]) for n in sorted(curves)),
        args.format,
    )
    print(f"collapse quality {quality!r} (dispersion {dispersion!r})")
    return EXIT_OK


def _table_row(policy: DetectorPolicy) -> analysis.RProfileModelParams | None:
    if isinstance(policy, Moving):
        return analysis.R_PROFILE_PARAMS.get((policy.n, policy.s))
    return None


def cmd_rprofile(args: argparse.Namespace) -> int:
    policies = _policies(args)
    T = args.T
    t = T if args.time is None else args.time
    iw = reference_run(NoDetector(), T, RecordSpec.make(snapshots=[t], events=False, sampling=args.sampling))
    summary = []
    for policy in policies:
        res = run(policy, T, RecordSpec.make(snapshots=[t], events=False, sampling=args.sampling))
        prof = analysis.r_profile(res, iw, t, (args.r_min, args.r_max))
        params = _table_row(policy)
        model = [None] * len(prof.r)
        mse, npts = None, 0
        if params is not None:
            pos = prof.r >= 0
            vals = analysis.model_r_profile(prof.r[pos], params)
            for i, v in zip(np.flatnonzero(pos), np.atleast_1d(vals)):
                model[i] = float(v)
            if pos.any():
                mse, npts = analysis.r_profile_residual(prof, params)
        write_table(
            _out(args, f"rprofile_{policy.label}_t{t}"),
            _header(args, **policy.params(), T=T, t=t, model_mse=mse, model_points=npts),
            ["r", "ratio", "model"],
            zip(prof.r, prof.ratio, model),
            args.format,
        )
        summary.append((policy.label, mse, npts))
    write_table(
        _out(args, f"rprofile_residuals_t{t}"),
        _header(args, T=T, t=t, r_min=args.r_min, r_max=args.r_max),
        ["policy", "model_mse", "points"],
        summary,
        args.format,
    )
    return EXIT_OK


def cmd_correlate(args: argparse.Namespace) -> int:
    policies = _policies(args)
    rs = parse_ints(args.r)
    if not rs:
        raise UsageError("--r needs at least one offset")
    T = args.T
    summary = []
    for policy in policies:
        sites = [policy.x_D] + [policy.x_D + r for r in rs]
        spec = RecordSpec.make(sites=sites, events=False, sampling=args.sampling)
        res = run(policy, T, spec)
        iw = reference_run(NoDetector(), T, spec)
        for r in rs:
            series = analysis.correlation_ratio(res, iw, r)
            write_table(
                _out(args, f"corr_{policy.label}_r{r}"),
                _header(args, **policy.params(), T=T, r=r, sampling=args.sampling),
                ["t", "value"],
                zip(series.times, series.values),
                args.format,
            )
            if len(series):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", StationarityWarning)
                    est = analysis.saturation(series, args.window)
                summary.append((policy.label, r, est.value, est.spread))
            else:
                summary.append((policy.label, r, None, None))
    write_table(
        _out(args, "correlate_summary"),
        _header(args, T=T, window=args.window),
        ["policy", "r", "sat", "spread"],
        summary,
        args.format,
    )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    results = run_checks()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


# ---------------------------------------------------------------------------
# parser


def _add_policy_args(p: argparse.ArgumentParser, *, T: int) -> None:
    p.add_argument("--mode", default="moving", choices=["iw", "siw", "moving", "ij", "quench"])
    p.add_argument("--xd", nargs="+", default=None, help="initial detector site(s) x_D")
    p.add_argument("--n", nargs="+", default=None, help="detections per position; ranges like 16:40")
    p.add_argument("--s", nargs="+", default=None, help="hop length(s); IJ for infinite jump")
    p.add_argument("--t-off", dest="t_off", type=int, default=None, help="quench withdrawal time")
    p.add_argument("--T", type=int, default=T, help="number of steps")


def _add_output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", default="csv", choices=["csv", "json"])
    p.add_argument("--config", default=None, help="key=value file with defaults for these flags")
    p.add_argument("--sampling", default="after", choices=["after", "before"],
                   help="read occupations after (default) or before each absorption")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdqw", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="snapshots and detection log of one run")
    _add_policy_args(p, T=1000)
    p.add_argument("--snapshot", nargs="+", default=None, help="times to snapshot (default T)")
    _add_output_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ratio", help="occupation ratio vs t at a site")
    _add_policy_args(p, T=5000)
    p.add_argument("--site", type=int, default=None, help="site (default x_D)")
    p.add_argument("--reference", default="iw", choices=["iw", "siw"])
    p.add_argument("--window", type=float, default=analysis.DEFAULT_WINDOW)
    _add_output_args(p)
    p.set_defaults(func=cmd_ratio)

    for name, func, helptext in (
        ("sweep", cmd_sweep, "saturation over (x_D, n, s) grids"),
        ("collapse", cmd_collapse, "rescale saturation curves"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--xd", nargs="+", default=None)
        p.add_argument("--n", nargs="+", default=None)
        p.add_argument("--s", nargs="+", default=None)
        p.add_argument("--T", type=int, default=5000)
        p.add_argument("--window", type=float, default=analysis.DEFAULT_WINDOW)
        p.add_argument("--workers", type=int, default=None, help="process count (default $MDQW_WORKERS or 1)")
        if name == "sweep":
            p.add_argument("--fit-nmin", dest="fit_nmin", type=int, default=16,
                           help="smallest n used in the power-law fits")
        else:
            p.add_argument("--input", default=None, help="sweep table to collapse instead of simulating")
            p.add_argument("--kind", default="s", choices=["s", "n"],
                           help="s: collapse sat vs s across n; n: sat*n^2/x_D^2")
            p.add_argument("--gamma", type=float, default=0.6)
            p.add_argument("--delta", type=float, default=1.2)
        _add_output_args(p)
        p.set_defaults(func=func)

    p = sub.add_parser("rprofile", help="ratio vs r = x - x_D at one time")
    _add_policy_args(p, T=1000)
    p.add_argument("--time", type=int, default=None, help="profile time (default T)")
    p.add_argument("--r-min", dest="r_min", type=int, default=-1000)
    p.add_argument("--r-max", dest="r_max", type=int, default=300)
    _add_output_args(p)
    p.set_defaults(func=cmd_rprofile)

    p = sub.add_parser("correlate", help="correlation ratio g_ns/g_inf vs t")
    _add_policy_args(p, T=5000)
    p.add_argument("--r", nargs="+", default=["-20", "-10", "10", "20", "40"])
    p.add_argument("--window", type=float, default=analysis.DEFAULT_WINDOW)
    _add_output_args(p)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("verify", help="run the built-in consistency checks")
    p.set_defaults(func=cmd_verify)
    return parser


def _read_config(path: str) -> dict[str, str]:
    cfg: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str] | None:
    """Inject ``--config`` values as subparser defaults; unknown keys are errors."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return None
    cfg = _read_config(known.config)
    command = next((a for a in argv if not a.startswith("-")), None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub = subparsers.choices.get(command)
    if sub is None:
        raise UsageError("a subcommand is required before --config")
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config", "func")}
    unknown = sorted(set(cfg) - set(actions))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    defaults = {}
    for key, raw in cfg.items():
        action = actions[key]
        if action.nargs == "+":
            defaults[key] = raw.replace(",", " ").split()
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except ValueError:
                raise UsageError(f"config key {key}: bad value {raw!r}") from None
        else:
            if action.choices and raw not in action.choices:
                raise UsageError(f"config key {key}: {raw!r} not in {list(action.choices)}")
            defaults[key] = raw
    sub.set_defaults(**defaults)
    return argv


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except UsageError as exc:
        print(f"mdqw: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, DomainError) as exc:
        print(f"mdqw: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MDQWError, ValueError, ArithmeticError, MemoryError) as exc:
        print(f"mdqw: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
