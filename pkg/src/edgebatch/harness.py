"""Experiment harness: config files, canned presets, CSV/JSON outputs, CLI.

Config files are flat ``section.key = value`` lines with ``#`` comments.
Outputs land in --out, the EDGEBATCH_OUT directory, or ./out: metrics.csv
(one row per batch completion and per control tick), summary.json, and four
plot-ready series files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from . import traces
from .engine import (
    ADAPTIVE,
    VANILLA,
    BatchRow,
    ControlRow,
    EngineConfig,
    JobCostModel,
    MetricsLog,
    MicrobatchEngine,
)
from .errors import EdgeBatchError, TraceParseError
from .fuzzy import ControllerConfig, RuleTable
from .tracker import TrackerConfig
from .workload import MonitorConfig

PRESETS = ("exp1", "exp2", "exp3", "day", "day-vanilla")

METRICS_COLUMNS = (
    "time_ms", "batch_id", "interval_ms", "records", "blocks",
    "sched_delay_ms", "proc_delay_ms", "total_delay_ms", "eta",
    "workload_S", "rate_measured", "rate_predicted", "C", "D", "fuzzy_level",
)

STABLE_TICKS = 20  # control ticks the interval must hold within one block


class UsageError(ValueError):
    """Malformed config or trace input (exit code 2)."""


# -- config files -----------------------------------------------------------


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse flat 'section.key = value' lines into a dict."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise UsageError(f"{source}:{lineno}: expected 'section.key = value'")
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if "." not in key or not value:
            raise UsageError(f"{source}:{lineno}: expected 'section.key = value'")
        if key in out:
            raise UsageError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _take_float(cfg: dict, key: str, default=None) -> float:
    raw = cfg.pop(key, None)
    if raw is None:
        if default is None:
            raise UsageError(f"missing required key {key!r}")
        return default
    try:
        if "/" in raw:
            num, den = raw.split("/", 1)
            return float(num) / float(den)
        return float(raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad value for {key!r}: {raw!r}") from exc


def _take_int(cfg: dict, key: str, default=None) -> int:
    raw = cfg.pop(key, None)
    if raw is None:
        if default is None:
            raise UsageError(f"missing required key {key!r}")
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise UsageError(f"bad value for {key!r}: {raw!r}") from exc


def _take_str(cfg: dict, key: str, default=None, choices=None) -> str:
    raw = cfg.pop(key, default)
    if raw is None:
        raise UsageError(f"missing required key {key!r}")
    if choices and raw not in choices:
        raise UsageError(f"bad value for {key!r}: {raw!r} (expected one of {choices})")
    return raw


def _take_bool(cfg: dict, key: str, default: bool) -> bool:
    raw = cfg.pop(key, None)
    if raw is None:
        return default
    if raw in ("on", "true", "1", "yes"):
        return True
    if raw in ("off", "false", "0", "no"):
        return False
    raise UsageError(f"bad value for {key!r}: {raw!r} (expected on/off)")


def _build_trace(cfg: dict, base_dir: Path) -> traces.RateFunction:
    kind = _take_str(cfg, "trace.kind",
                     choices=("constant", "step", "sinusoid", "csv"))
    if kind == "constant":
        return traces.constant(_take_float(cfg, "trace.rate"))
    if kind == "step":
        return traces.step(
            _take_float(cfg, "trace.before"),
            _take_float(cfg, "trace.after"),
            _take_float(cfg, "trace.switch"),
        )
    if kind == "sinusoid":
        return traces.sinusoid(
            _take_float(cfg, "trace.base"),
            _take_float(cfg, "trace.amplitude"),
            _take_float(cfg, "trace.period"),
        )
    name = _take_str(cfg, "trace.file")
    if name == "builtin:day":
        path = traces.day_trace_path()
    else:
        path = Path(name)
        if not path.is_absolute():
            path = base_dir / path
    mode = _take_str(cfg, "trace.mode", default="rate", choices=("rate", "count"))
    return traces.from_csv(
        path,
        count_mode=(mode == "count"),
        time_scale=_take_float(cfg, "trace.time_scale", 1.0),
        rate_scale=_take_float(cfg, "trace.rate_scale", 1.0),
    )


@dataclass(frozen=True)
class RunSpec:
    """Everything one simulation run needs."""

    label: str
    engine: EngineConfig
    trace: traces.RateFunction
    rule_table: Optional[RuleTable]


def build_run_spec(cfg: dict[str, str], base_dir: Path | None = None) -> RunSpec:
    """Turn a parsed config dict into engine config, trace, and rule table."""
    cfg = dict(cfg)
    base_dir = base_dir or Path.cwd()
    label = _take_str(cfg, "run.label", default="run")
    block = _take_int(cfg, "engine.block_interval", 200)

    controller = ControllerConfig(
        block_interval=block,
        min_interval=_take_int(cfg, "controller.min_interval"),
        max_interval=_take_int(cfg, "controller.max_interval"),
        control_period=_take_int(cfg, "controller.control_period", 10_000),
        prediction_enabled=_take_bool(cfg, "controller.prediction", True),
        step_blocks=_take_int(cfg, "controller.step_blocks", 1),
    )
    monitor = MonitorConfig(
        smoothing_coefficient=_take_float(cfg, "monitor.smoothing", 0.3),
        initial_estimate=_take_float(cfg, "monitor.initial", 1.0),
    )
    tracker = TrackerConfig(
        resample_interval=_take_int(cfg, "tracker.resample_interval", 30_000),
        train_num=_take_int(cfg, "tracker.train_num", 5),
        retain_windows=_take_int(cfg, "tracker.retain_windows", 240),
        retrain_every=_take_int(cfg, "tracker.retrain_every", 1),
    )
    cost = JobCostModel(
        fixed_overhead=_take_float(cfg, "cost.fixed_overhead"),
        per_record_cost=_take_float(cfg, "cost.per_record"),
        per_block_cost=_take_float(cfg, "cost.per_block"),
    )
    trace = _build_trace(cfg, base_dir)

    rule_table = None
    rules_path = cfg.pop("controller.rules", None)
    if rules_path is not None:
        path = Path(rules_path)
        if not path.is_absolute():
            path = base_dir / path
        rule_table = RuleTable.load(path)

    engine = EngineConfig(
        controller=controller,
        cost_model=cost,
        duration=_take_int(cfg, "engine.duration"),
        initial_interval=_take_int(cfg, "engine.initial_interval"),
        block_interval=block,
        mode=_take_str(cfg, "engine.mode", default=ADAPTIVE,
                       choices=(ADAPTIVE, VANILLA)),
        control_start=_take_int(cfg, "engine.control_start", 30_000),
        monitor=monitor,
        tracker=tracker,
        seed=_take_int(cfg, "engine.seed", 0),
        jitter=_take_float(cfg, "engine.jitter", 0.0),
    )
    if cfg:
        raise UsageError(f"unknown config keys: {sorted(cfg)}")
    return RunSpec(label=label, engine=engine, trace=trace, rule_table=rule_table)


def load_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def load_preset(name: str, *, disable_prediction: bool = False,
                seed: int | None = None) -> RunSpec:
    """Load a packaged preset config, with optional CLI overrides."""
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r} (choose from {', '.join(PRESETS)})")
    res = resources.files("edgebatch").joinpath(f"presets/{name}.conf")
    cfg = parse_config_text(res.read_text(), source=f"preset {name}")
    if disable_prediction:
        cfg["controller.prediction"] = "off"
    if seed is not None:
        cfg["engine.seed"] = str(seed)
    return build_run_spec(cfg)


# -- summary ----------------------------------------------------------------


@dataclass(frozen=True)
class SummaryReport:
    prediction_error_mean: Optional[float]
    prediction_error_max: Optional[float]
    convergence_time_ms: Optional[float]
    steady_workload_mean: Optional[float]
    steady_workload_max: Optional[float]
    total_delay_mean_ms: Optional[float]
    total_delay_max_ms: Optional[float]
    overload_recovery_ms: Optional[float]
    records_processed: int


def prediction_error_pairs(windows) -> list[float]:
    """Relative one-step errors: forecast made at window k vs window k+1."""
    errs = []
    for prev, cur in zip(windows, windows[1:]):
        pred = prev.rate_predicted_next
        if pred is None or cur.rate_measured <= 0:
            continue
        errs.append(abs(pred - cur.rate_measured) / cur.rate_measured)
    return errs


def convergence_time(ticks, block_interval: int) -> Optional[float]:
    """First tick from which the interval holds within one block for
    STABLE_TICKS consecutive ticks."""
    for i in range(len(ticks) - STABLE_TICKS + 1):
        base = ticks[i].interval_ms
        window = ticks[i:i + STABLE_TICKS]
        if all(abs(t.interval_ms - base) <= block_interval for t in window):
            return ticks[i].time_ms
    return None


def overload_recovery(ticks) -> Optional[float]:
    """Longest time S spent above 1 before dropping back below, or None."""
    worst = None
    start = None
    for t in ticks:
        if start is None:
            if t.workload_s > 1.0:
                start = t.time_ms
        elif t.workload_s < 1.0:
            span = t.time_ms - start
            worst = span if worst is None else max(worst, span)
            start = None
    return worst


def summarize(log: MetricsLog) -> SummaryReport:
    batches = log.batches
    ticks = log.ticks

    errs = prediction_error_pairs(log.windows)
    conv = convergence_time(ticks, log.block_interval)

    if conv is not None:
        steady = [t.workload_s for t in ticks if t.time_ms >= conv]
    else:
        steady = [t.workload_s for t in ticks[len(ticks) // 2:]]
    delays = [b.total_delay_ms for b in batches]

    return SummaryReport(
        prediction_error_mean=sum(errs) / len(errs) if errs else None,
        prediction_error_max=max(errs) if errs else None,
        convergence_time_ms=conv,
        steady_workload_mean=sum(steady) / len(steady) if steady else None,
        steady_workload_max=max(steady) if steady else None,
        total_delay_mean_ms=sum(delays) / len(delays) if delays else None,
        total_delay_max_ms=max(delays) if delays else None,
        overload_recovery_ms=overload_recovery(ticks),
        records_processed=sum(b.records for b in batches),
    )


# -- serialization ----------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return repr(value)
    return str(value)


def _metrics_row(row) -> list[str]:
    if isinstance(row, BatchRow):
        values = (row.time_ms, row.batch_id, row.interval_ms, row.records,
                  row.blocks, row.sched_delay_ms, row.proc_delay_ms,
                  row.total_delay_ms, row.eta,
                  None, None, None, None, None, None)
    else:
        values = (row.time_ms, None, row.interval_ms, None, None,
                  None, None, None, None,
                  row.workload_s, row.rate_measured, row.rate_predicted,
                  row.traffic_change, row.workload_deviation, row.fuzzy_level)
    return [_fmt(v) for v in values]


def write_metrics(log: MetricsLog, out_dir: str | Path) -> Path:
    """Write metrics.csv, summary.json, and the series files; returns out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = [",".join(METRICS_COLUMNS)]
    lines += [",".join(_metrics_row(r)) for r in log.rows]
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")

    report = summarize(log)
    (out / "summary.json").write_text(
        json.dumps(dataclasses.asdict(report), indent=2) + "\n")

    ticks = log.ticks
    batches = log.batches
    series = {
        "series_interval.csv": ["time_ms,interval_ms"] + [
            f"{_fmt(t.time_ms)},{t.interval_ms}" for t in ticks],
        "series_workload.csv": ["time_ms,workload_S"] + [
            f"{_fmt(t.time_ms)},{_fmt(t.workload_s)}" for t in ticks],
        "series_rate.csv": ["window_start_ms,rate_measured,rate_predicted_next"] + [
            f"{w.window_start_ms},{_fmt(w.rate_measured)},{_fmt(w.rate_predicted_next)}"
            for w in log.windows],
        "series_delay.csv": ["time_ms,total_delay_ms,proc_delay_ms,sched_delay_ms"] + [
            f"{_fmt(b.time_ms)},{_fmt(b.total_delay_ms)},{_fmt(b.proc_delay_ms)},"
            f"{_fmt(b.sched_delay_ms)}" for b in batches],
    }
    for name, content in series.items():
        (out / name).write_text("\n".join(content) + "\n")
    return out


# -- CLI --------------------------------------------------------------------


def default_out_dir() -> Path:
    return Path(os.environ.get("EDGEBATCH_OUT", "out"))


def execute(spec: RunSpec, out_dir: str | Path | None) -> SummaryReport:
    engine = MicrobatchEngine(spec.engine, spec.trace, spec.rule_table)
    log = engine.run()
    out = Path(out_dir) if out_dir is not None else default_out_dir()
    write_metrics(log, out)
    report = summarize(log)
    print(f"{spec.label}: {len(log.batches)} batches, "
          f"{report.records_processed} records -> {out}")
    if report.convergence_time_ms is not None:
        print(f"  interval converged at t={_fmt(report.convergence_time_ms)} ms")
    if report.steady_workload_mean is not None:
        print(f"  steady workload mean {report.steady_workload_mean:.3f} "
              f"max {report.steady_workload_max:.3f}")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgebatch",
        description="Micro-batch streaming simulator with adaptive interval control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)

    p_preset = sub.add_parser("preset", help="run a packaged experiment preset")
    p_preset.add_argument("name", choices=PRESETS)
    p_preset.add_argument("--disable-prediction", action="store_true")
    p_preset.add_argument("--seed", type=int, default=None)
    p_preset.add_argument("--out", default=None)

    p_val = sub.add_parser("validate", help="check a config file and exit")
    p_val.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config_file(args.config)
            spec = build_run_spec(cfg, base_dir=Path(args.config).resolve().parent)
            execute(spec, args.out)
        elif args.command == "preset":
            spec = load_preset(args.name, disable_prediction=args.disable_prediction,
                               seed=args.seed)
            execute(spec, args.out)
        else:
            cfg = load_config_file(args.config)
            spec = build_run_spec(cfg, base_dir=Path(args.config).resolve().parent)
            print(f"{args.config}: ok ({spec.label}, {spec.engine.mode}, "
                  f"duration {spec.engine.duration} ms)")
    except (UsageError, TraceParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EdgeBatchError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
