"""Command-line front end: ``simulate``, ``histogram`` and ``bench``.

Config files are YAML mappings whose keys are the :class:`ScenarioConfig`
fields plus an optional ``preset`` naming the base configuration::

    preset: fig3b          # optional; defaults are used otherwise
    K: 8
    L: 3
    bs_array: [8, 8]       # rows, cols of the BS planar array
    ms_array: [1, 1]
    n_rf: 8
    n_rf_ms: 2             # receive RF chains of the *-AMS variants
    snr_db: "-10:5:40"     # start:step:stop (inclusive), a list, or a number
    runs: 1000
    seed: 0
    algorithms: [LISA, H-LISA, capacity]
    bin_width: 0.5         # histogram bin width
    dpc_tol: 1.0e-6
    dpc_max_iters: 1000

Command-line options override both the preset and the file. Exit codes are
0 on success, 2 for configuration errors and 3 when an algorithm failed on
every run at some SNR (or raised an unexpected numerical error).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .config import ALGORITHMS, ConfigError, ScenarioConfig, preset
from .evaluation import benchmark, gain_histogram, run_monte_carlo
from .numerics import NumericalError
from .svgplot import line_plot

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

SIMULATE_COLUMNS = ("snr_db", "algorithm", "mean_sum_rate_bpcu", "std_error", "runs_used", "failures")
BENCH_COLUMNS = ("algorithm", "n_bs", "n_ms", "k", "l", "median_ms")
MIN_BENCH_RUNS = 20

_INT_FIELDS = {"K", "L", "n_rf", "runs", "seed", "dpc_max_iters"}
_FLOAT_FIELDS = {"dpc_tol", "bin_width"}
_CONFIG_KEYS = {f.name for f in fields(ScenarioConfig)} | {"preset"}


def parse_snr(value) -> tuple[float, ...]:
    """SNR grid from ``"a:step:b"`` (inclusive), ``"a,b,c"``, a number or a list."""
    if isinstance(value, bool):
        raise ValueError("expected numbers")
    if isinstance(value, (int, float)):
        return (float(value),)
    if isinstance(value, (list, tuple)):
        return tuple(_as_float(v) for v in value)
    text = str(value).strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3:
            raise ValueError("range must be start:step:stop")
        start, step, stop = parts
        if step <= 0 or stop < start:
            raise ValueError("range needs a positive step and stop >= start")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(start + i * step) for i in range(n))
    return tuple(float(p) for p in text.split(",") if p.strip())


def parse_algorithms(value) -> tuple[str, ...]:
    if isinstance(value, str):
        return tuple(a.strip() for a in value.split(",") if a.strip())
    if isinstance(value, (list, tuple)):
        return tuple(str(a) for a in value)
    raise ValueError("expected a list of names")


def _as_int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"expected an integer, got {v!r}")
    return v


def _as_float(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def _coerce(key: str, value):
    if key in _INT_FIELDS:
        return _as_int(value)
    if key in _FLOAT_FIELDS:
        return _as_float(value)
    if key == "n_rf_ms":
        return None if value is None else _as_int(value)
    if key in ("bs_array", "ms_array"):
        if isinstance(value, int) and not isinstance(value, bool):
            return (value, 1)
        if not isinstance(value, list) or len(value) != 2:
            raise ValueError("expected [rows, cols]")
        return tuple(_as_int(v) for v in value)
    if key == "snr_db":
        return parse_snr(value)
    if key == "algorithms":
        return parse_algorithms(value)
    if key == "preset":
        if not isinstance(value, str):
            raise ValueError("expected a preset name")
        return value
    raise AssertionError(key)


class ConfigSource:
    """Values read from a config file together with their line numbers."""

    def __init__(self, path: Optional[Path] = None):
        self.path = path
        self.values: dict = {}
        self.lines: dict[str, int] = {}

    def error(self, key: Optional[str], message: str) -> ConfigError:
        if key in self.lines:
            return ConfigError(f"{self.path}:{self.lines[key]}: {key}: {message}", key)
        where = f"{self.path}: " if self.path else ""
        return ConfigError(f"{where}{message}", key)

    @classmethod
    def load(cls, path) -> "ConfigSource":
        src = cls(Path(path))
        try:
            text = src.path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = mark.line + 1 if mark is not None else 1
            problem = getattr(exc, "problem", None) or str(exc)
            raise ConfigError(f"{path}:{line}: invalid YAML: {problem}") from None
        if data is None:
            return src
        if not isinstance(node, yaml.MappingNode) or not isinstance(data, dict):
            raise ConfigError(f"{path}:1: top level must be a key: value mapping")
        for key_node, _ in node.value:
            src.lines[str(key_node.value)] = key_node.start_mark.line + 1
        for key, value in data.items():
            key = str(key)
            if key not in _CONFIG_KEYS:
                raise src.error(key, f"unknown key; expected one of {sorted(_CONFIG_KEYS)}")
            try:
                src.values[key] = _coerce(key, value)
            except ValueError as exc:
                raise src.error(key, str(exc)) from None
        return src


def _option_overrides(args) -> dict:
    out = {}
    try:
        if args.snr is not None:
            out["snr_db"] = parse_snr(args.snr)
        if args.algorithms is not None:
            out["algorithms"] = parse_algorithms(args.algorithms)
    except ValueError as exc:
        raise ConfigError(f"command line: {exc}") from None
    if args.seed is not None:
        out["seed"] = args.seed
    if args.runs is not None:
        out["runs"] = args.runs
    return out


def resolve_config(args) -> tuple[ScenarioConfig, str, ConfigSource]:
    """Merge preset, config file and command-line options into one config."""
    src = ConfigSource.load(args.config) if args.config else ConfigSource()
    name = args.preset or src.values.get("preset")
    try:
        base = preset(name) if name else ScenarioConfig()
    except ConfigError as exc:
        raise src.error(None if args.preset else "preset", str(exc)) from None
    file_values = {k: v for k, v in src.values.items() if k != "preset"}
    cli_values = _option_overrides(args)
    try:
        cfg = replace(base, **file_values)
    except ConfigError as exc:
        raise src.error(exc.field, str(exc)) from None
    try:
        cfg = replace(cfg, **cli_values)
    except ConfigError as exc:
        raise ConfigError(f"command line: {exc}", exc.field) from None
    label = args.name or (Path(args.config).stem if args.config else name) or "custom"
    return cfg, label, src


def _write_manifest(path: Path, command: str, cfg: ScenarioConfig, src: ConfigSource,
                    outputs: Sequence[Path], extra: Optional[dict] = None) -> None:
    manifest = {
        "tool": "hlisa",
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config_file": str(src.path) if src.path else None,
        "config": cfg.to_dict(),
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    # str() of a Python float is its shortest round-trip repr
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def cmd_simulate(args) -> int:
    cfg, label, src = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    points = run_monte_carlo(cfg, workers=args.workers)
    csv_path = out / f"{label}.csv"
    _write_csv(csv_path, SIMULATE_COLUMNS, (row for pt in points for row in pt.rows(cfg.algorithms)))
    outputs = [csv_path]
    if args.plot:
        svg_path = out / f"{label}.svg"
        series = {a: ([pt.snr_db for pt in points], [pt.means[a] for pt in points]) for a in cfg.algorithms}
        svg_path.write_text(line_plot(series, "SNR [dB]", "sum rate [bits/channel use]", label))
        outputs.append(svg_path)
    _write_manifest(out / f"{label}.manifest.json", "simulate", cfg, src, outputs)
    dead = [(pt.snr_db, a) for pt in points for a in cfg.algorithms if pt.runs_used[a] == 0]
    if dead:
        print(f"error: no successful run for {dead}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _single_snr(cfg: ScenarioConfig, command: str) -> float:
    if len(cfg.snr_db) != 1:
        raise ConfigError(f"{command} needs a single SNR value; pass --snr", "snr_db")
    return cfg.snr_db[0]


def cmd_histogram(args) -> int:
    cfg, label, src = resolve_config(args)
    snr = _single_snr(cfg, "histogram")
    if "capacity" in cfg.algorithms:
        raise ConfigError("capacity has no per-stream gains to histogram", "algorithms")
    if args.bin_width is not None:
        try:
            cfg = replace(cfg, bin_width=args.bin_width)
        except ConfigError as exc:
            raise ConfigError(f"command line: {exc}", exc.field) from None
    hist = gain_histogram(cfg, snr, cfg.algorithms)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{label}_hist.csv"
    edges = [float(e) for e in hist.edges]
    # one row per bin [bin_lo, bin_hi); counts of stream gains per algorithm
    rows = ([edges[i], edges[i + 1]] + [int(hist.counts[a][i]) for a in cfg.algorithms]
            for i in range(len(edges) - 1))
    _write_csv(csv_path, ("bin_lo", "bin_hi", *cfg.algorithms), rows)
    outputs = [csv_path]
    if args.plot:
        svg_path = out / f"{label}_hist.svg"
        series = {a: (edges, [int(c) for c in hist.counts[a]] + [int(hist.counts[a][-1])])
                  for a in cfg.algorithms}
        svg_path.write_text(line_plot(series, "stream gain", "count", f"{label} at {snr:g} dB", step=True))
        outputs.append(svg_path)
    _write_manifest(out / f"{label}_hist.manifest.json", "histogram", cfg, src, outputs,
                    {"snr_db": snr, "bin_width": cfg.bin_width})
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg, label, src = resolve_config(args)
    runs = MIN_BENCH_RUNS if args.runs is None else args.runs
    if runs < MIN_BENCH_RUNS:
        raise ConfigError(f"command line: bench needs at least {MIN_BENCH_RUNS} runs", "runs")
    snr = 0.0 if args.snr is None else _single_snr(cfg, "bench")
    times = benchmark(cfg, snr, runs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{label}_bench.csv"
    rows = ((a, cfg.n_bs, cfg.n_ms, cfg.K, cfg.L, float(np.median(times[a]) * 1e3)) for a in cfg.algorithms)
    _write_csv(csv_path, BENCH_COLUMNS, rows)
    _write_manifest(out / f"{label}_bench.manifest.json", "bench", cfg, src, [csv_path],
                    {"snr_db": snr, "bench_runs": runs})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hlisa", description="Multi-user hybrid precoding simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (("simulate", cmd_simulate, "Monte-Carlo sum rate versus SNR"),
             ("histogram", cmd_histogram, "histogram of per-stream gains at one SNR"),
             ("bench", cmd_bench, "median wall-clock time per algorithm"))
    for name, func, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--preset", help="base configuration: fig3a, fig3b, fig4, fig6, fig7")
        p.add_argument("--seed", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--snr", help='SNR grid in dB, e.g. "0", "0,10,20" or "--snr=-10:5:40"')
        p.add_argument("--algorithms", help=f"comma-separated subset of {','.join(ALGORITHMS)}")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--name", help="output file stem (default: config file stem, else preset name)")
        if name != "bench":
            p.add_argument("--plot", action="store_true", help="also write an SVG plot")
        if name == "simulate":
            p.add_argument("--workers", type=int, default=1, help="worker processes")
        if name == "histogram":
            p.add_argument("--bin-width", type=float, dest="bin_width")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
