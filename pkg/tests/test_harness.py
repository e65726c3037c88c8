import json

import pytest

from edgebatch import engine, harness
from edgebatch.harness import (
    METRICS_COLUMNS,
    PRESETS,
    UsageError,
    build_run_spec,
    load_preset,
    main,
    parse_config_text,
    summarize,
    write_metrics,
)

MINI = """\
run.label = mini
engine.mode = adaptive
engine.duration = 120000
engine.initial_interval = 2000
controller.min_interval = 400
controller.max_interval = 6000
cost.fixed_overhead = 1000
cost.per_record = 0.25
cost.per_block = 8
trace.kind = constant
trace.rate = 1000
"""


def mini_cfg(**extra):
    cfg = parse_config_text(MINI)
    cfg.update({k: str(v) for k, v in extra.items()})
    return cfg


def run_mini(**extra):
    spec = build_run_spec(mini_cfg(**extra))
    return engine.run(spec.engine, spec.trace, spec.rule_table)


# -- config parsing -----------------------------------------------------------


def test_parse_skips_comments_and_blanks():
    text = "\n# full line comment\nengine.duration = 5  # trailing\n\n"
    assert parse_config_text(text) == {"engine.duration": "5"}


def test_parse_rejects_malformed_lines():
    with pytest.raises(UsageError, match=r"conf\.txt:2"):
        parse_config_text("a.b = 1\nnot a setting\n", source="conf.txt")
    with pytest.raises(UsageError, match="section.key"):
        parse_config_text("plainkey = 1\n")
    with pytest.raises(UsageError, match="section.key"):
        parse_config_text("a.b =\n")


def test_parse_rejects_duplicate_keys():
    with pytest.raises(UsageError, match="duplicate"):
        parse_config_text("a.b = 1\na.b = 2\n")


def test_fraction_values_accepted():
    spec = build_run_spec(mini_cfg(**{"monitor.smoothing": "3/10"}))
    assert spec.engine.monitor.smoothing_coefficient == pytest.approx(0.3)


# -- spec building ------------------------------------------------------------


def test_defaults_applied():
    spec = build_run_spec(mini_cfg())
    assert spec.label == "mini"
    assert spec.engine.block_interval == 200
    assert spec.engine.control_start == 30_000
    assert spec.engine.controller.control_period == 10_000
    assert spec.engine.controller.prediction_enabled
    assert spec.engine.controller.step_blocks == 1
    assert spec.engine.monitor.smoothing_coefficient == pytest.approx(0.3)
    assert spec.engine.tracker.resample_interval == 30_000
    assert spec.engine.tracker.train_num == 5
    assert spec.engine.seed == 0
    assert spec.rule_table is None


def test_unknown_keys_rejected():
    with pytest.raises(UsageError, match="engine.bogus"):
        build_run_spec(mini_cfg(**{"engine.bogus": "1"}))


def test_missing_required_key_rejected():
    cfg = mini_cfg()
    del cfg["cost.fixed_overhead"]
    with pytest.raises(UsageError, match="cost.fixed_overhead"):
        build_run_spec(cfg)


def test_bad_choice_rejected():
    with pytest.raises(UsageError, match="engine.mode"):
        build_run_spec(mini_cfg(**{"engine.mode": "turbo"}))


def test_bool_values():
    spec = build_run_spec(mini_cfg(**{"controller.prediction": "off"}))
    assert not spec.engine.controller.prediction_enabled
    with pytest.raises(UsageError, match="controller.prediction"):
        build_run_spec(mini_cfg(**{"controller.prediction": "maybe"}))


def test_bad_numeric_value_rejected():
    with pytest.raises(UsageError, match="engine.duration"):
        build_run_spec(mini_cfg(**{"engine.duration": "soon"}))


# -- presets ------------------------------------------------------------------


def test_all_presets_load():
    for name in PRESETS:
        spec = load_preset(name)
        assert spec.engine.duration > 0
        assert spec.label


def test_preset_overrides():
    spec = load_preset("exp1", disable_prediction=True, seed=7)
    assert not spec.engine.controller.prediction_enabled
    assert spec.engine.seed == 7


def test_unknown_preset_rejected():
    with pytest.raises(UsageError, match="nope"):
        load_preset("nope")


# -- serialization ------------------------------------------------------------


def test_metrics_csv_shape(tmp_path):
    log = run_mini()
    write_metrics(log, tmp_path)
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header == list(METRICS_COLUMNS)
    assert len(lines) == 1 + len(log.rows)
    batch_rows = tick_rows = 0
    for line in lines[1:]:
        fields = dict(zip(header, line.split(",")))
        assert len(fields) == len(METRICS_COLUMNS)
        if fields["batch_id"]:
            batch_rows += 1
            assert fields["records"] and fields["eta"]
            assert fields["workload_S"] == ""
        else:
            tick_rows += 1
            assert fields["workload_S"]
            assert fields["records"] == ""
    assert batch_rows == len(log.batches)
    assert tick_rows == len(log.ticks)


def test_series_files_row_counts(tmp_path):
    log = run_mini()
    write_metrics(log, tmp_path)
    counts = {
        "series_interval.csv": len(log.ticks),
        "series_workload.csv": len(log.ticks),
        "series_rate.csv": len(log.windows),
        "series_delay.csv": len(log.batches),
    }
    for name, expected in counts.items():
        lines = (tmp_path / name).read_text().splitlines()
        assert len(lines) == 1 + expected, name


def test_rerun_outputs_byte_identical(tmp_path):
    spec = build_run_spec(mini_cfg())
    names = ("metrics.csv", "summary.json", "series_interval.csv",
             "series_workload.csv", "series_rate.csv", "series_delay.csv")
    for sub in ("a", "b"):
        log = engine.run(spec.engine, spec.trace, spec.rule_table)
        write_metrics(log, tmp_path / sub)
    for name in names:
        assert ((tmp_path / "a" / name).read_bytes()
                == (tmp_path / "b" / name).read_bytes()), name


def test_summary_json_matches_recomputation(tmp_path):
    log = run_mini()
    write_metrics(log, tmp_path)
    stored = json.loads((tmp_path / "summary.json").read_text())
    import dataclasses
    assert stored == dataclasses.asdict(summarize(log))

    header, *rows = (tmp_path / "metrics.csv").read_text().splitlines()
    cols = header.split(",")
    records = sum(int(dict(zip(cols, r.split(",")))["records"] or 0)
                  for r in rows)
    assert records == stored["records_processed"]


def test_summary_conservation_against_log():
    log = run_mini()
    report = summarize(log)
    assert report.records_processed == sum(b.records for b in log.batches)
    assert log.total_batch_records == log.total_block_records


# -- CLI ----------------------------------------------------------------------


def write_conf(tmp_path, text=MINI, name="run.conf"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_cli_run_writes_outputs(tmp_path, capsys):
    conf = write_conf(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(conf), "--out", str(out)]) == 0
    assert (out / "metrics.csv").exists()
    assert (out / "summary.json").exists()
    assert "mini" in capsys.readouterr().out


def test_cli_validate_ok(tmp_path, capsys):
    conf = write_conf(tmp_path)
    assert main(["validate", "--config", str(conf)]) == 0
    assert "ok" in capsys.readouterr().out


def test_cli_usage_errors_exit_2(tmp_path, capsys):
    conf = write_conf(tmp_path, MINI + "engine.bogus = 1\n")
    assert main(["validate", "--config", str(conf)]) == 2
    assert "engine.bogus" in capsys.readouterr().err
    assert main(["validate", "--config", str(tmp_path / "absent.conf")]) == 2


def test_cli_bad_trace_file_exits_2(tmp_path, capsys):
    (tmp_path / "trace.csv").write_text("0,not_a_number\n")
    text = MINI.replace(
        "trace.kind = constant\ntrace.rate = 1000\n",
        "trace.kind = csv\ntrace.file = trace.csv\n")
    conf = write_conf(tmp_path, text)
    assert main(["validate", "--config", str(conf)]) == 2
    assert capsys.readouterr().err


def test_cli_relative_trace_paths_resolve_against_config(tmp_path, capsys):
    sub = tmp_path / "nested"
    sub.mkdir()
    (sub / "trace.csv").write_text(
        "timestamp_s,value\n0,1000\n60,1000\n120,1000\n")
    text = MINI.replace(
        "trace.kind = constant\ntrace.rate = 1000\n",
        "trace.kind = csv\ntrace.file = trace.csv\n")
    conf = write_conf(sub, text)
    assert main(["validate", "--config", str(conf)]) == 0
    capsys.readouterr()


def test_cli_out_dir_env_default(tmp_path, monkeypatch, capsys):
    conf = write_conf(tmp_path)
    target = tmp_path / "envout"
    monkeypatch.setenv("EDGEBATCH_OUT", str(target))
    assert main(["run", "--config", str(conf)]) == 0
    assert (target / "metrics.csv").exists()
    capsys.readouterr()
