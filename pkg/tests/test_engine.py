import pytest

from edgebatch import traces
from edgebatch.engine import (
    ADAPTIVE,
    VANILLA,
    BatchRow,
    ControlRow,
    EngineConfig,
    JobCostModel,
    MicrobatchEngine,
    run,
)
from edgebatch.errors import ConfigError, DomainError, ModeError
from edgebatch.fuzzy import ControllerConfig
from edgebatch.tracker import TrackerConfig
from edgebatch.workload import MonitorConfig


def make_config(**kw):
    base = dict(
        controller=ControllerConfig(block_interval=200, min_interval=400,
                                    max_interval=6000),
        cost_model=JobCostModel(100.0, 0.4, 10.0),
        duration=120_000,
        initial_interval=2000,
        mode=VANILLA,
    )
    base.update(kw)
    return EngineConfig(**base)


def test_cost_model_example():
    model = JobCostModel(100.0, 0.4, 10.0)
    assert model.cost(3200, 8) == pytest.approx(1460.0)


def test_cost_model_validation():
    with pytest.raises(ConfigError):
        JobCostModel(-1.0, 0.0, 0.0)


def test_blocks_per_batch_and_quantization():
    log = run(make_config(initial_interval=1600), traces.constant(1000.0))
    batches = log.batches
    assert batches
    for row in batches:
        assert row.blocks == 8
        assert row.records == 1600  # 8 blocks of 200 records at 1000 rec/s
        assert row.interval_ms == 1600


def test_steady_state_delays():
    log = run(make_config(), traces.constant(1000.0))
    # cost = 100 + 0.4*2000 + 10*10 = 1000 ms against a 2000 ms interval
    tail = log.batches[3:]
    for row in tail:
        assert row.sched_delay_ms == pytest.approx(0.0)
        assert row.proc_delay_ms == pytest.approx(1000.0)
        assert row.eta == pytest.approx(0.5)


def test_zero_rate_batches_cost_fixed_overhead():
    log = run(make_config(), traces.constant(0.0))
    assert log.batches
    for row in log.batches:
        assert row.records == 0
        assert row.blocks == 0
        assert row.total_delay_ms == pytest.approx(100.0)
    assert log.total_generated == 0
    assert log.total_batch_records == 0


def test_record_conservation_exact():
    trace = traces.sinusoid(900.0, 400.0, 60_000)
    log = run(make_config(duration=300_000), trace)
    assert log.total_generated == log.total_block_records == log.total_batch_records


def test_conservation_includes_unbatched_tail():
    # Duration not aligned with the interval leaves blocks in the queue.
    log = run(make_config(duration=119_000), traces.constant(500.0))
    assert log.total_generated == log.total_block_records == log.total_batch_records


def test_rerun_is_identical():
    cfg = make_config(mode=ADAPTIVE, duration=200_000)
    trace = traces.sinusoid(1000.0, 250.0, 120_000)
    first = run(cfg, trace)
    second = run(cfg, trace)
    assert first.rows == second.rows
    assert first.windows == second.windows


def test_jitter_changes_with_seed_but_not_rerun():
    trace = traces.constant(1000.0)
    a = run(make_config(jitter=0.05, seed=7), trace)
    b = run(make_config(jitter=0.05, seed=7), trace)
    c = run(make_config(jitter=0.05, seed=8), trace)
    assert a.rows == b.rows
    assert a.rows != c.rows


def test_control_rows_present_and_gated():
    log = run(make_config(mode=ADAPTIVE, duration=100_000, control_start=30_000),
              traces.constant(1000.0))
    ticks = log.ticks
    assert [t.time_ms for t in ticks] == [10_000 * k for k in range(1, 11)]
    for t in ticks:
        if t.time_ms < 30_000:
            assert t.fuzzy_level is None
        else:
            assert t.fuzzy_level is not None
            assert t.workload_deviation is not None


def test_vanilla_mode_never_adjusts():
    log = run(make_config(duration=240_000), traces.step(500.0, 4000.0, 60_000))
    for t in log.ticks:
        assert t.interval_ms == 2000
        assert t.fuzzy_level is None


def test_vanilla_overload_grows_monotonically():
    log = run(make_config(duration=240_000), traces.step(500.0, 4000.0, 60_000))
    # cost at 4000 rec/s: 100 + 0.4*8000 + 100 = 3400 ms > 2000 ms interval
    late = [t.workload_s for t in log.ticks if t.time_ms >= 90_000]
    assert all(b > a for a, b in zip(late, late[1:]))
    assert late[-1] > 1.5


def test_set_interval_takes_effect_next_fire():
    cfg = make_config(mode=ADAPTIVE, duration=10_000, control_start=1_000_000)
    engine = MicrobatchEngine(cfg, traces.constant(1000.0))
    fired = []

    original = engine._on_batch_timer_fire

    def spy(now, payload):
        fired.append((now, engine.current_interval))
        original(now, payload)
        if now == 2000:
            engine.set_interval(1600)

    engine._on_batch_timer_fire = spy
    handlers_patch = engine.run  # run wires handlers from bound methods at call time
    handlers_patch()
    times = [t for t, _ in fired]
    assert times[:4] == [2000, 4000, 5600, 7200]


def test_set_interval_validation():
    cfg = make_config(mode=ADAPTIVE)
    engine = MicrobatchEngine(cfg, traces.constant(1000.0))
    with pytest.raises(DomainError):
        engine.set_interval(2100)
    with pytest.raises(DomainError):
        engine.set_interval(8000)
    vanilla = MicrobatchEngine(make_config(), traces.constant(1000.0))
    with pytest.raises(ModeError):
        vanilla.set_interval(1800)


def test_engine_is_single_run():
    engine = MicrobatchEngine(make_config(duration=5_000), traces.constant(10.0))
    engine.run()
    with pytest.raises(ModeError):
        engine.run()


def test_adaptive_constant_rate_interval_settles():
    cfg = make_config(
        mode=ADAPTIVE,
        duration=300_000,
        cost_model=JobCostModel(896.0, 0.33, 8.0),
    )
    log = run(cfg, traces.constant(1000.0))
    late = [t.interval_ms for t in log.ticks if t.time_ms >= 150_000]
    assert len(set(late)) <= 2  # settles instead of hunting
    final_s = [t.workload_s for t in log.ticks][-1]
    assert 0.7 <= final_s <= 1.05


def test_window_rows_measured_rates():
    log = run(make_config(duration=180_000), traces.constant(1000.0))
    assert [w.window_start_ms for w in log.windows] == \
        [0, 30_000, 60_000, 90_000, 120_000, 150_000]
    for w in log.windows:
        assert w.rate_measured == pytest.approx(1000.0)
    # Forecasts appear once the fifth window has trained the model.
    assert [w.rate_predicted_next is not None for w in log.windows] == \
        [False, False, False, False, True, True]


def test_config_validation():
    with pytest.raises(ConfigError):
        make_config(mode="turbo")
    with pytest.raises(ConfigError):
        make_config(initial_interval=2100)
    with pytest.raises(ConfigError):
        make_config(mode=ADAPTIVE, initial_interval=8000)
    with pytest.raises(ConfigError):
        make_config(block_interval=300)  # mismatched with controller's 200
    with pytest.raises(ConfigError):
        make_config(jitter=1.5)
