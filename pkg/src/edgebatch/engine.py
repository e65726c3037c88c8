"""Deterministic micro-batch engine simulation.

Simulated time only: a receiver quantizes the input trace into blocks, a
dynamic timer groups blocks into batches, and a single FIFO worker runs each
batch under an affine cost model. In adaptive mode a fuzzy control loop
retimes the batch interval; in vanilla mode the interval stays fixed and the
monitor just watches.
"""

from __future__ import annotations

import heapq
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import ConfigError, DomainError, ModeError
from .fuzzy import ControllerConfig, FuzzyController, RuleTable
from .tracker import TrafficTracker, TrackerConfig, TrafficReport
from .traces import RateFunction
from .workload import BatchStats, MonitorConfig, WorkloadMonitor

log = logging.getLogger(__name__)

ADAPTIVE = "adaptive"
VANILLA = "vanilla"


class EventKind(Enum):
    """Event kinds; definition order is the tie-break at equal timestamps.

    Blocks seal before windows close, windows close before the controller
    reads them, and the controller runs before the timer fires, so every
    consumer sees the freshest state a coinciding producer left behind.
    """

    BLOCK_BOUNDARY = "block_boundary"
    JOB_COMPLETE = "job_complete"
    RATE_WINDOW_CLOSE = "rate_window_close"
    CONTROL_TICK = "control_tick"
    BATCH_TIMER_FIRE = "batch_timer_fire"
    JOB_START = "job_start"
    TRACE_END = "trace_end"


_RANK = {kind: rank for rank, kind in enumerate(EventKind)}


@dataclass(frozen=True)
class EngineEvent:
    fire_at: float
    sequence: int
    kind: EventKind


@dataclass(frozen=True)
class Block:
    block_id: int
    record_count: int
    created_at: int

    def __post_init__(self):
        if self.record_count < 0:
            raise DomainError("record_count must be >= 0")


@dataclass(frozen=True)
class Batch:
    batch_id: int
    blocks: tuple[Block, ...]
    generated_at: int
    interval_used: int

    @property
    def record_count(self) -> int:
        return sum(b.record_count for b in self.blocks)

    @property
    def block_count(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class JobCostModel:
    """Affine batch cost in ms: fixed + per-record + per-block terms."""

    fixed_overhead: float
    per_record_cost: float
    per_block_cost: float

    def __post_init__(self):
        for name in ("fixed_overhead", "per_record_cost", "per_block_cost"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v!r}")

    def cost(self, records: int, blocks: int) -> float:
        return self.fixed_overhead + self.per_record_cost * records + self.per_block_cost * blocks


@dataclass(frozen=True)
class EngineConfig:
    controller: ControllerConfig
    cost_model: JobCostModel
    duration: int
    initial_interval: int
    block_interval: int = 200
    mode: str = ADAPTIVE
    control_start: int = 30_000
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    seed: int = 0
    jitter: float = 0.0

    def __post_init__(self):
        if self.mode not in (ADAPTIVE, VANILLA):
            raise ConfigError(f"mode must be '{ADAPTIVE}' or '{VANILLA}', got {self.mode!r}")
        if self.block_interval <= 0:
            raise ConfigError("block_interval must be positive")
        if self.controller.block_interval != self.block_interval:
            raise ConfigError("controller block_interval must match the engine's")
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.initial_interval <= 0 or self.initial_interval % self.block_interval != 0:
            raise ConfigError("initial_interval must be a positive multiple of block_interval")
        if self.mode == ADAPTIVE:
            if not (self.controller.min_interval <= self.initial_interval
                    <= self.controller.max_interval):
                raise ConfigError("initial_interval must lie within the controller's range")
        if self.control_start < 0:
            raise ConfigError("control_start must be >= 0")
        if not (0.0 <= self.jitter < 1.0):
            raise ConfigError("jitter must be in [0, 1)")


@dataclass(frozen=True)
class BatchRow:
    """Metrics row emitted when a batch completes."""

    time_ms: float
    batch_id: int
    interval_ms: int
    records: int
    blocks: int
    sched_delay_ms: float
    proc_delay_ms: float
    total_delay_ms: float
    eta: float


@dataclass(frozen=True)
class ControlRow:
    """Metrics row emitted at every control tick (adaptive or monitoring)."""

    time_ms: float
    interval_ms: int
    workload_s: float
    rate_measured: Optional[float]
    rate_predicted: Optional[float]
    traffic_change: Optional[float]
    workload_deviation: Optional[float]
    fuzzy_level: Optional[int]


@dataclass(frozen=True)
class WindowRow:
    """Per-window tracker row: measured rate plus the forecast made for the
    window after it (None until the model has trained)."""

    window_start_ms: int
    window_len_ms: int
    rate_measured: float
    rate_predicted_next: Optional[float]


@dataclass
class MetricsLog:
    mode: str
    block_interval: int
    initial_interval: int
    control_period: int
    control_start: int
    resample_interval: int
    duration: int
    rows: list = field(default_factory=list)
    windows: list = field(default_factory=list)
    total_generated: int = 0
    total_block_records: int = 0
    total_batch_records: int = 0

    @property
    def batches(self) -> list[BatchRow]:
        return [r for r in self.rows if isinstance(r, BatchRow)]

    @property
    def ticks(self) -> list[ControlRow]:
        return [r for r in self.rows if isinstance(r, ControlRow)]


class MicrobatchEngine:
    """Single-run engine; construct, call run() once, read the metrics log."""

    def __init__(self, config: EngineConfig, trace: RateFunction,
                 rule_table: RuleTable | None = None):
        self.config = config
        self.trace = trace
        self.tracker = TrafficTracker(config.tracker)
        self.monitor = WorkloadMonitor(config.monitor)
        self.controller: Optional[FuzzyController] = None
        if config.mode == ADAPTIVE:
            self.controller = FuzzyController(
                config.controller, self.tracker, self.monitor,
                rule_table=rule_table, set_interval=self.set_interval)
        self._heap: list = []
        self._sequence = 0
        self._now: float = 0.0
        self._ran = False
        self._ended = False
        self._current_interval = config.initial_interval
        self._pending_interval: Optional[int] = None
        self._last_fire_at = 0
        self._block_queue: list[Block] = []
        self._batch_queue: deque[Batch] = deque()
        self._worker_busy = False
        self._job_start_pending = False
        self._next_block_id = 0
        self._next_batch_id = 0
        self._rng = random.Random(config.seed)
        self.log = MetricsLog(
            mode=config.mode,
            block_interval=config.block_interval,
            initial_interval=config.initial_interval,
            control_period=config.controller.control_period,
            control_start=config.control_start,
            resample_interval=config.tracker.resample_interval,
            duration=config.duration,
        )

    @property
    def current_interval(self) -> int:
        return self._current_interval

    def set_interval(self, new_interval: int) -> None:
        """Stage a new batch interval; it takes effect at the next timer fire."""
        if self.config.mode != ADAPTIVE:
            raise ModeError("interval is fixed in vanilla mode")
        ctl = self.config.controller
        if new_interval % self.config.block_interval != 0:
            raise DomainError(f"interval {new_interval} is not a block multiple")
        if not ctl.min_interval <= new_interval <= ctl.max_interval:
            raise DomainError(f"interval {new_interval} outside [{ctl.min_interval}, "
                              f"{ctl.max_interval}]")
        self._pending_interval = new_interval

    def run(self) -> MetricsLog:
        if self._ran:
            raise ModeError("engine instances are single-run")
        self._ran = True
        cfg = self.config
        self.tracker.start()
        self._schedule(cfg.block_interval, EventKind.BLOCK_BOUNDARY)
        self._schedule(cfg.tracker.resample_interval, EventKind.RATE_WINDOW_CLOSE)
        self._schedule(cfg.controller.control_period, EventKind.CONTROL_TICK)
        self._schedule(cfg.initial_interval, EventKind.BATCH_TIMER_FIRE)
        self._schedule(cfg.duration, EventKind.TRACE_END)
        handlers = {
            EventKind.BLOCK_BOUNDARY: self._on_block_boundary,
            EventKind.JOB_COMPLETE: self._on_job_complete,
            EventKind.RATE_WINDOW_CLOSE: self._on_rate_window_close,
            EventKind.CONTROL_TICK: self._on_control_tick,
            EventKind.BATCH_TIMER_FIRE: self._on_batch_timer_fire,
            EventKind.JOB_START: self._on_job_start,
            EventKind.TRACE_END: self._on_trace_end,
        }
        while self._heap and not self._ended:
            _, _, _, event, payload = heapq.heappop(self._heap)
            self._now = event.fire_at
            handlers[event.kind](event.fire_at, payload)
        self.tracker.stop()
        return self.log

    def _schedule(self, fire_at: float, kind: EventKind, payload=None) -> None:
        event = EngineEvent(fire_at=fire_at, sequence=self._sequence, kind=kind)
        heapq.heappush(self._heap, (fire_at, _RANK[kind], self._sequence, event, payload))
        self._sequence += 1

    # -- event handlers -----------------------------------------------------

    def _on_block_boundary(self, now: float, _payload) -> None:
        start = int(now) - self.config.block_interval
        expected = self.trace.integral(start, now)
        if self.config.jitter > 0.0:
            expected *= 1.0 + self.config.jitter * self._rng.uniform(-1.0, 1.0)
        count = int(math.floor(expected + 0.5))
        self.log.total_generated += count
        if count > 0:
            block = Block(block_id=self._next_block_id, record_count=count,
                          created_at=int(now))
            self._next_block_id += 1
            self._block_queue.append(block)
            self.log.total_block_records += count
            self.tracker.report_info(TrafficReport(timestamp=start, record_count=count))
        nxt = now + self.config.block_interval
        if nxt <= self.config.duration:
            self._schedule(nxt, EventKind.BLOCK_BOUNDARY)

    def _on_batch_timer_fire(self, now: float, _payload) -> None:
        batch = Batch(
            batch_id=self._next_batch_id,
            blocks=tuple(self._block_queue),
            generated_at=int(now),
            interval_used=int(now) - self._last_fire_at,
        )
        self._next_batch_id += 1
        self._block_queue.clear()
        self._last_fire_at = int(now)
        self.log.total_batch_records += batch.record_count
        self._batch_queue.append(batch)
        if self._pending_interval is not None:
            self._current_interval = self._pending_interval
            self._pending_interval = None
        nxt = now + self._current_interval
        if nxt <= self.config.duration:
            self._schedule(nxt, EventKind.BATCH_TIMER_FIRE)
        self._maybe_start_job(now)

    def _maybe_start_job(self, now: float) -> None:
        if self._worker_busy or self._job_start_pending or not self._batch_queue:
            return
        self._job_start_pending = True
        self._schedule(now, EventKind.JOB_START)

    def _on_job_start(self, now: float, _payload) -> None:
        self._job_start_pending = False
        batch = self._batch_queue.popleft()
        self._worker_busy = True
        cost = self.config.cost_model.cost(batch.record_count, batch.block_count)
        self._schedule(now + cost, EventKind.JOB_COMPLETE, payload=(batch, now))

    def _on_job_complete(self, now: float, payload) -> None:
        batch, started_at = payload
        self._worker_busy = False
        stats = BatchStats.from_times(
            batch_id=batch.batch_id,
            submitted_at=float(batch.generated_at),
            started_at=started_at,
            completed_at=now,
            interval_used=float(batch.interval_used),
            record_count=batch.record_count,
        )
        self.log.rows.append(BatchRow(
            time_ms=now,
            batch_id=batch.batch_id,
            interval_ms=batch.interval_used,
            records=batch.record_count,
            blocks=batch.block_count,
            sched_delay_ms=stats.scheduling_delay,
            proc_delay_ms=stats.processing_delay,
            total_delay_ms=stats.total_delay,
            eta=stats.eta,
        ))
        if stats.total_delay > 0:
            self.monitor.on_batch_completed(stats)
        else:
            log.warning("batch %d completed with zero delay, no workload sample",
                        batch.batch_id)
        self._maybe_start_job(now)

    def _on_rate_window_close(self, now: float, _payload) -> None:
        closed = self.tracker.close_windows_upto(int(now))
        for rec in closed:
            self.tracker.maybe_train()
            predicted: Optional[float] = None
            if self.tracker.model is not None:
                if self.config.controller.prediction_enabled:
                    predicted = self.tracker.predict_rate(1)
                else:
                    predicted = rec.rate
            self.log.windows.append(WindowRow(
                window_start_ms=rec.window_start,
                window_len_ms=rec.window_len,
                rate_measured=rec.rate,
                rate_predicted_next=predicted,
            ))
        nxt = now + self.config.tracker.resample_interval
        if nxt <= self.config.duration:
            self._schedule(nxt, EventKind.RATE_WINDOW_CLOSE)

    def _on_control_tick(self, now: float, _payload) -> None:
        if self.controller is not None and now >= self.config.control_start:
            decision = self.controller.control_step(now, self._current_interval)
            self.log.rows.append(ControlRow(
                time_ms=now,
                interval_ms=decision.interval,
                workload_s=decision.s,
                rate_measured=decision.q_now,
                rate_predicted=decision.q_next,
                traffic_change=decision.c,
                workload_deviation=decision.d,
                fuzzy_level=decision.level,
            ))
        else:
            estimate = self.monitor.update_estimate(now)
            q_now = q_next = None
            if self.tracker.get_records():
                q_now = self.tracker.get_latest_record().rate
                if not self.config.controller.prediction_enabled:
                    q_next = q_now
                elif self.tracker.model is not None:
                    q_next = self.tracker.predict_rate(1)
            self.log.rows.append(ControlRow(
                time_ms=now,
                interval_ms=self._current_interval,
                workload_s=estimate.value,
                rate_measured=q_now,
                rate_predicted=q_next,
                traffic_change=None,
                workload_deviation=None,
                fuzzy_level=None,
            ))
        nxt = now + self.config.controller.control_period
        if nxt <= self.config.duration:
            self._schedule(nxt, EventKind.CONTROL_TICK)

    def _on_trace_end(self, now: float, _payload) -> None:
        # Seal whatever the receiver still holds so the record ledger balances;
        # the sealed batch is never executed because simulated time stops here.
        if self._block_queue:
            batch = Batch(
                batch_id=self._next_batch_id,
                blocks=tuple(self._block_queue),
                generated_at=int(now),
                interval_used=max(int(now) - self._last_fire_at, self.config.block_interval),
            )
            self._next_batch_id += 1
            self._block_queue.clear()
            self.log.total_batch_records += batch.record_count
        self._ended = True


def run(config: EngineConfig, trace: RateFunction,
        rule_table: RuleTable | None = None) -> MetricsLog:
    """Build an engine, run the trace to completion, return the metrics log."""
    return MicrobatchEngine(config, trace, rule_table).run()
