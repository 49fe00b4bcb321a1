"""Command-line front end: ``list``, ``run`` and ``plot``.

Exit codes: 0 success, 1 configuration or input error, 2 continuation
breakdown, 3 stagnation, 4 divergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import bench
from .errors import (
    ConfigError,
    DivergenceError,
    InvalidInputError,
    ParacontError,
    RankDeficientError,
    StagnationError,
    StepBudgetError,
)
from .trajlog import TrajectoryLog

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BREAKDOWN = 2
EXIT_STAGNATION = 3
EXIT_DIVERGENCE = 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, RankDeficientError):
        return EXIT_BREAKDOWN
    if isinstance(exc, StagnationError):
        return EXIT_STAGNATION
    if isinstance(exc, (DivergenceError, StepBudgetError)):
        return EXIT_DIVERGENCE
    return EXIT_CONFIG


def parse_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


def parse_sets(items: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_seeds(text: str) -> list[int]:
    """``"1-20"``, ``"1,4,9"`` or a mix of both."""
    seeds: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part[1:]:
                lo, hi = part.split("-", 1) if not part.startswith("-") else part[1:].split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            elif part:
                seeds.append(int(part))
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None
    if not seeds:
        raise ConfigError("empty seed list")
    return seeds


def _seed_path(out: Path, seed: int) -> Path:
    return out.with_name(f"{out.stem}_seed{seed}{out.suffix}")


def _run_one(example: str, overrides: dict, seed: Optional[int], out: Optional[str], plot: bool):
    """Worker body; returns ``(exit_code, message)`` so it can cross process boundaries."""
    try:
        report, log = bench.run(example, overrides, seed)
    except ParacontError as exc:
        return exit_code_for(exc), f"error: {exc}"
    msg = report.summary()
    if out is not None:
        log.write_csv(out)
        msg += f"\nwrote {out}"
        if plot:
            svg = str(Path(out).with_suffix(".svg"))
            spec = bench.build(example)
            cols = _default_plot_columns(spec, log)
            write_plot(log, cols, svg, title=example)
            msg += f"\nwrote {svg}"
    return EXIT_OK, msg


def _default_plot_columns(spec: bench.ExampleSpec, log: TrajectoryLog) -> list[str]:
    if spec.engine in ("ident-linear", "ident-nonlinear"):
        return ["lambda"] + [c for c in log.columns if c.startswith("theta")]
    return ["lambda"] + [c for c in log.columns if c.startswith("y") and c[1:].isdigit()]


def write_plot(log: TrajectoryLog, columns: Sequence[str], out: str, x: str = "t", title: str = "") -> None:
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    # fixed hash salt keeps the SVG byte-stable between runs
    matplotlib.rcParams["svg.hashsalt"] = "paracont"
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = log.column(x)
    for c in columns:
        ax.plot(xs, log.column(c), label=c)
    ax.set_xlabel(x)
    ax.set_ylabel(", ".join(columns))
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_list(args) -> int:
    for spec in bench.list_examples():
        print(f"{spec.id:<22}{spec.engine:<17}{spec.description}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        overrides: dict = {}
        example = args.example
        if args.config:
            cfg = parse_config_file(args.config)
            example = cfg.pop("example", None) or example
            overrides.update(cfg)
        if args.example:
            example = args.example
        overrides.update(parse_sets(args.set))
        if not example:
            raise ConfigError("no example given (use --example or an 'example =' line in --config)")
        spec = bench.build(example)
        spec.params(overrides)
        seeds = parse_seeds(args.seeds) if args.seeds else [args.seed]
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
    except ParacontError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if "unknown example" in str(exc):
            cmd_list(args)
        return EXIT_CONFIG

    out = Path(args.out) if args.out else None
    if out is None and args.plot:
        print("error: --plot needs --out", file=sys.stderr)
        return EXIT_CONFIG
    jobs = []
    for s in seeds:
        path = None
        if out is not None:
            path = str(_seed_path(out, s) if len(seeds) > 1 else out)
        jobs.append((example, overrides, s, path, args.plot))

    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(args.jobs, len(jobs))) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*j) for j in jobs]

    worst = EXIT_OK
    for (_, _, s, _, _), (code, msg) in zip(jobs, results):
        prefix = f"[seed {s}] " if len(jobs) > 1 else ""
        print(prefix + msg.replace("\n", "\n" + prefix), file=sys.stderr if code else sys.stdout)
        worst = worst or code
    return worst


def cmd_plot(args) -> int:
    try:
        if not os.path.exists(args.csv):
            raise InvalidInputError(f"no such file: {args.csv}")
        log = TrajectoryLog.read_csv(args.csv)
        if len(log) == 0:
            raise InvalidInputError(f"{args.csv} has no data rows")
        columns = [c.strip() for c in args.columns.split(",") if c.strip()]
        if not columns:
            raise InvalidInputError("no columns requested")
        for c in [args.x, *columns]:
            if c not in log.columns:
                raise InvalidInputError(f"column {c!r} not in {args.csv} (available: {', '.join(log.columns)})")
        write_plot(log, columns, args.out, x=args.x)
    except ParacontError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paracont", description="Continuation-based control and identification examples.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list registered examples").set_defaults(func=cmd_list)

    r = sub.add_parser("run", help="run an example and write its trajectory")
    r.add_argument("--example", help="registered example id")
    r.add_argument("--config", help="flat key = value file with parameter overrides")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one parameter")
    r.add_argument("--out", help="CSV output path")
    r.add_argument("--seed", type=int, default=0, help="noise seed (default 0)")
    r.add_argument("--seeds", help="seed sweep, e.g. 1-20 or 1,3,5; outputs get a _seedN suffix")
    r.add_argument("--jobs", type=int, default=1, help="parallel processes for seed sweeps")
    r.add_argument("--plot", action="store_true", help="also write an SVG next to the CSV")
    r.set_defaults(func=cmd_run)

    pl = sub.add_parser("plot", help="plot CSV columns to an SVG file")
    pl.add_argument("csv")
    pl.add_argument("--columns", required=True, help="comma-separated column names")
    pl.add_argument("--out", required=True, help="SVG output path")
    pl.add_argument("--x", default="t", help="abscissa column (default t)")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; that code means breakdown here
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
