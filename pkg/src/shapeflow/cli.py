"""Command line experiment runner.

Every subcommand writes a CSV whose first lines are ``#`` comments holding
the tool version, the resolved configuration and the seed.  Exit codes:
0 success, 1 numerical failure, 2 hypothesis or validation failure, 3 I/O
or configuration failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .curvature import FlowConfig, FlowSample, SupportBody, run_flow
from .errors import HypothesisViolated, NumericalError, ValidationError
from .flows import ScanRow, css_verify, monotonicity_scan
from .functionals import CONSISTENCY_TOL, DEFAULT_H, report
from .geometry import (
    AffineFlow,
    TriangleConfig,
    critical_time,
    random_triangle,
    read_polygon,
    rectangle,
    rhombus,
    unit_square,
)

log = logging.getLogger("shapeflow")

EXIT_OK, EXIT_NUMERICAL, EXIT_VALIDATION, EXIT_CONFIG = 0, 1, 2, 3

REPORT_COLUMNS = (
    "area", "T", "T_pohozaev", "lambda1", "lambda1_pohozaev",
    "T_norm", "lambda1_norm", "T_gap", "lambda1_gap", "consistent", "min_angle",
)
CSS_COLUMNS = ("s", "t", "xi", "s_prime", "T_s", "T_s_prime")

DEFAULT_SCAN_VERTICES = {
    "thm1_1": "-0.4,0;1.2,0;0,0.5",
    "thm1_2": "-0.8,0;0.4,0;0,1.5",
}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# output helpers


def read_config(path) -> dict:
    """Flat ``key = value`` file; keys use flag names with or without dashes."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def format_value(v) -> str:
    """Shortest round-trip text for floats, so equal runs give equal bytes."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows, meta: dict) -> None:
    lines = [f"# shapeflow {__version__}"]
    lines += [f"# {k}: {format_value(v)}" for k, v in meta.items()]
    buf = [line + "\n" for line in lines]
    if path is None or str(path) == "-":
        out = sys.stdout
        out.writelines(buf)
        w = csv.writer(out, lineterminator="\n")
        w.writerow(columns)
        w.writerows([format_value(v) for v in row] for row in rows)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.writelines(buf)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            w.writerows([format_value(v) for v in row] for row in rows)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def line_chart_svg(panels, width: int = 640, panel_height: int = 240) -> str:
    """Stacked line charts; ``panels`` is a list of ``(title, x, y)``."""
    pad = 48
    height = panel_height * len(panels)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i, (title, x, y) in enumerate(panels):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        x, y = x[ok], y[ok]
        top = i * panel_height
        parts.append(f'<text x="{pad}" y="{top + 16}">{title}</text>')
        if len(x) == 0:
            continue
        x0, x1 = x.min(), x.max()
        y0, y1 = y.min(), y.max()
        x1 = x1 if x1 > x0 else x0 + 1.0
        y1 = y1 if y1 > y0 else y0 + 1.0
        sx = lambda v: pad + (v - x0) / (x1 - x0) * (width - 2 * pad)  # noqa: E731
        sy = lambda v: top + panel_height - pad + (y0 - v) / (y1 - y0) * (panel_height - 2 * pad)  # noqa: E731
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        left, right = pad, width - pad
        bottom = top + panel_height - pad
        parts.append(
            f'<polyline points="{left},{top + pad} {left},{bottom} {right},{bottom}" '
            f'fill="none" stroke="black"/>'
        )
        parts.append(f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
        parts.append(f'<text x="{left}" y="{bottom + 14}">{x0:.4g}</text>')
        parts.append(f'<text x="{right}" y="{bottom + 14}" text-anchor="end">{x1:.4g}</text>')
        parts.append(f'<text x="{left - 4}" y="{bottom}" text-anchor="end">{y0:.4g}</text>')
        parts.append(f'<text x="{left - 4}" y="{top + pad}" text-anchor="end">{y1:.4g}</text>')
    parts.append("</svg>\n")
    return "\n".join(parts)


def write_svg(path, panels) -> None:
    """Best effort: a failed plot is logged and never changes the exit code."""
    if not path:
        return
    try:
        Path(path).write_text(line_chart_svg(panels))
    except Exception as exc:  # noqa: BLE001
        log.warning("could not write plot %s: %s", path, exc)


# ---------------------------------------------------------------------------
# subcommands


def _meta(args, **extra) -> dict:
    skip = {"func", "config", "out", "svg", "workers"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}
    meta = {"command": args.command}
    meta["config"] = " ".join(f"{k}={format_value(v)}" for k, v in cfg.items())
    meta.update(extra)
    meta["seed"] = args.seed
    return meta


def _parse_vertices(text: str):
    try:
        pts = [tuple(float(c) for c in p.split(",")) for p in text.split(";")]
    except ValueError:
        raise ConfigError(f"cannot parse vertices {text!r}; use 'x,y;x,y;x,y'") from None
    if any(len(p) != 2 for p in pts):
        raise ConfigError(f"cannot parse vertices {text!r}; use 'x,y;x,y;x,y'")
    return pts


def _grid(lo: float, hi: float, n: int, open_lo: bool, open_hi: bool) -> np.ndarray:
    if n < 1:
        raise ConfigError("t-steps must be at least 1")
    k = np.arange(n, dtype=float)
    if open_lo and open_hi:
        return lo + (hi - lo) * (k + 1) / (n + 1)
    if open_lo:
        return lo + (hi - lo) * (k + 1) / n
    if n == 1:
        return np.array([lo])
    return lo + (hi - lo) * k / (n - 1)


def cmd_report(args) -> int:
    p = read_polygon(args.polygon)
    r = report(p, args.h, args.degree, args.consistency_tol)
    row = [
        r.area, r.T_domain, r.T_pohozaev, r.lambda1, r.lambda1_pohozaev,
        r.T_normalized, r.lambda1_normalized, r.T_gap, r.lambda1_gap, r.consistent, r.min_angle,
    ]
    write_csv(args.out, REPORT_COLUMNS, [row], _meta(args))
    return EXIT_OK


def cmd_sides(args) -> int:
    p = read_polygon(args.polygon)
    r = report(p, args.h, args.degree, args.consistency_tol)
    rows = [[tag, p.side_length(tag), r.side_flux[tag]] for tag in p.tags]
    write_csv(args.out, ("tag", "length", "mean_grad_sq"), rows, _meta(args))
    return EXIT_OK


def scan_setup(args):
    """Polygon, flow, t-grid and extra header fields for a theorem scan."""
    th = args.theorem
    rng = np.random.default_rng(args.seed)
    extra = {}
    if th in ("thm1_1", "thm1_2"):
        if args.random:
            cfg = random_triangle(th, rng)
        else:
            cfg = TriangleConfig.canonical(_parse_vertices(args.vertices or DEFAULT_SCAN_VERTICES[th]), th)
        kind = "stretch" if th == "thm1_1" else "compress"
        t_crit = critical_time(cfg, kind)
        extra["critical_time"] = t_crit
        flow = AffineFlow("height_stretch" if th == "thm1_1" else "height_compress")
        poly, lo, hi, open_lo, open_hi = cfg.polygon(), 0.0, t_crit, True, True
    elif th == "thm1_4":
        if args.random:
            cfg = random_triangle(th, rng)
        elif args.vertices:
            cfg = TriangleConfig.canonical(_parse_vertices(args.vertices), th)
        else:
            a = args.alpha if args.alpha is not None else math.pi / 3
            cfg = TriangleConfig((0.0, 0.0), (1.0, 0.0), (math.cos(a), math.sin(a)), th)
        extra["alpha"] = cfg.alpha
        flow = AffineFlow.leg_stretch(cfg.alpha)
        poly, lo, hi, open_lo, open_hi = cfg.polygon(), 0.0, 2.0, True, False
    elif th == "thm1_3":
        if args.q < 1:
            raise HypothesisViolated("rhombus scans start from a diagonal ratio q >= 1")
        flow = AffineFlow("rhombus_diagonal")
        poly, lo, hi, open_lo, open_hi = rhombus(1.0, args.q), 0.0, 1.0, False, False
    else:  # thm1_7
        flow = AffineFlow("rectangle_side")
        poly, lo, hi, open_lo, open_hi = unit_square(), 0.0, 1.0, False, False
    if args.t_min is not None or args.t_max is not None:
        lo = args.t_min if args.t_min is not None else lo
        hi = args.t_max if args.t_max is not None else hi
        grid = _grid(lo, hi, args.t_steps, False, False)
    else:
        grid = _grid(lo, hi, args.t_steps, open_lo, open_hi)
    return poly, flow, grid, extra


def cmd_scan(args) -> int:
    poly, flow, grid, extra = scan_setup(args)
    rows = monotonicity_scan(
        poly, flow, grid, h=args.h, degree=args.degree, fd=not args.no_fd,
        workers=args.workers, consistency_tol=args.consistency_tol,
    )
    write_csv(args.out, ScanRow.columns(), [r.values() for r in rows], _meta(args, **extra))
    t = [r.t for r in rows]
    write_svg(args.svg, [("T/A^2", t, [r.T_norm for r in rows]), ("lambda1*A", t, [r.lambda1_norm for r in rows])])
    failed = [r for r in rows if r.flag.startswith("error")]
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_flow(args) -> int:
    if args.body == "circle":
        b0 = SupportBody.circle(args.radius, args.grid_n)
    else:
        b0 = SupportBody.ellipse(args.a, args.b, args.grid_n)
    try:
        config = FlowConfig(
            t_end=args.t_end,
            area_stop=args.area_stop,
            dt_safety=args.dt_safety,
            sample_every=args.sample_every,
            record_every=args.record_every,
            max_steps=args.max_steps,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    series = run_flow(args.kind, b0, config)
    extra = {"steps": series.steps, "failure": series.failure or "none"}
    write_csv(args.out, FlowSample.CSV_COLUMNS, [s.values() for s in series.samples], _meta(args, **extra))
    write_svg(
        args.svg,
        [
            ("deficit g", series.column("t", True), series.column("deficit", True)),
            ("P^2/A", series.column("t"), series.column("isoper")),
        ],
    )
    return EXIT_NUMERICAL if series.failure else EXIT_OK


def _parse_range(text: str) -> np.ndarray:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}; use lo:hi:step") from None
    if step <= 0 or hi < lo:
        raise ConfigError(f"empty grid {text!r}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def cmd_css(args) -> int:
    t_lo = 0.0 if args.t_min is None else args.t_min
    t_hi = 1.0 if args.t_max is None else args.t_max
    grid = _grid(t_lo, t_hi, args.t_steps, False, False)
    s_grid = _parse_range(args.s_grid) if args.s_grid else None
    rep = css_verify(args.s, grid, s_grid, args.h, args.degree)
    rows = [[r.s, r.t, r.xi, r.s_prime, r.T_s, r.T_s_prime] for r in rep.rows]
    rows += [[x, 0.0, x, x, T, T] for x, T in rep.profile]
    extra = {"passed": rep.passed}
    if s_grid is not None:
        extra["profile_increasing"] = rep.profile_increasing
    write_csv(args.out, CSS_COLUMNS, rows, _meta(args, **extra))
    if rep.profile:
        write_svg(args.svg, [("T(R(s))", [x for x, _ in rep.profile], [T for _, T in rep.profile])])
    else:
        write_svg(args.svg, [("xi(s;t)", [r.t for r in rep.rows], [r.xi for r in rep.rows])])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--h", type=float, default=DEFAULT_H, help="element size as a fraction of the diameter")
    common.add_argument("--degree", type=int, choices=(1, 2), default=2)
    common.add_argument("--consistency-tol", type=float, default=CONSISTENCY_TOL)
    common.add_argument("--out", default=None, help="CSV path (default stdout)")
    common.add_argument("--svg", default=None, help="optional SVG plot path")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--config", default=None, help="key=value file; flags override it")

    parser = _Parser(prog="shapeflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"shapeflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("report", parents=[common], help="functionals of a polygon")
    p.add_argument("polygon")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sides", parents=[common], help="mean squared boundary gradient per side")
    p.add_argument("polygon")
    p.set_defaults(func=cmd_sides)

    p = sub.add_parser("scan", parents=[common], help="derivative scan along a theorem's flow")
    p.add_argument("theorem", choices=("thm1_1", "thm1_2", "thm1_3", "thm1_4", "thm1_7"))
    p.add_argument("--vertices", default=None, help="triangle as 'x,y;x,y;x,y'")
    p.add_argument("--alpha", type=float, default=None, help="aperture in radians (thm1_4)")
    p.add_argument("--q", type=float, default=1.0, help="initial diagonal ratio (thm1_3)")
    p.add_argument("--random", action="store_true", help="draw the triangle from --seed")
    p.add_argument("--t-min", type=float, default=None)
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--t-steps", type=int, default=9)
    p.add_argument("--no-fd", action="store_true", help="skip the finite-difference column")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("flow", parents=[common], help="curvature flow of a convex body")
    p.add_argument("kind", choices=("csf", "imcf", "torsion"))
    p.add_argument("--body", choices=("circle", "ellipse"), default="ellipse")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--a", type=float, default=2.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--grid-n", type=int, default=256)
    p.add_argument("--dt-safety", type=float, default=0.5)
    p.add_argument("--t-end", type=float, default=0.5)
    p.add_argument("--area-stop", type=float, default=0.0)
    p.add_argument("--sample-every", type=int, default=10)
    p.add_argument("--record-every", type=int, default=10)
    p.add_argument("--max-steps", type=int, default=1_000_000)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("css", parents=[common], help="rectangle symmetrization check")
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--t-min", type=float, default=None)
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--t-steps", type=int, default=5)
    p.add_argument("--s-grid", default=None, help="profile grid lo:hi:step")
    p.set_defaults(func=cmd_css)
    return parser


_BOOL_KEYS = {"random", "no_fd"}


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - dests)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        defaults = {}
        for k, v in cfg.items():
            if k in _BOOL_KEYS:
                defaults[k] = v.lower() in ("1", "true", "yes", "on")
            else:
                defaults[k] = v
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    except (ConfigError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.workers < 1 or args.h <= 0 or args.consistency_tol <= 0:
            raise ConfigError("workers, h and consistency-tol must be positive")
        return args.func(args)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValidationError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
