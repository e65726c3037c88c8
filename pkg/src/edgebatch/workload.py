"""Batch delay accounting and the exponentially smoothed workload estimate.

Each completed batch yields a workload sample eta = total delay / interval
used. The monitor buffers samples between control ticks and folds their mean
into a single smoothed estimate S; S < 1 means the system keeps up, S > 1
means batches take longer than the interval that produced them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class MonitorConfig:
    smoothing_coefficient: float = 0.3
    initial_estimate: float = 1.0

    def __post_init__(self):
        a = self.smoothing_coefficient
        if not (isinstance(a, float) and 0.0 < a < 1.0):
            raise ConfigError(f"smoothing_coefficient must be in (0, 1), got {a!r}")
        if not (math.isfinite(self.initial_estimate) and self.initial_estimate > 0):
            raise ConfigError(f"initial_estimate must be positive, got {self.initial_estimate!r}")


@dataclass(frozen=True)
class BatchStats:
    """Delay breakdown of one completed batch."""

    batch_id: int
    submitted_at: float
    started_at: float
    completed_at: float
    processing_delay: float
    scheduling_delay: float
    total_delay: float
    interval_used: float
    record_count: int

    def __post_init__(self):
        if self.interval_used <= 0:
            raise DomainError(f"interval_used must be positive, got {self.interval_used!r}")
        if self.processing_delay < 0 or self.scheduling_delay < 0:
            raise DomainError("delays must be non-negative")
        if self.record_count < 0:
            raise DomainError("record_count must be non-negative")
        expected = self.processing_delay + self.scheduling_delay
        if not math.isclose(self.total_delay, expected, rel_tol=1e-9, abs_tol=1e-6):
            raise DomainError(
                f"total_delay {self.total_delay!r} != scheduling + processing {expected!r}"
            )

    @classmethod
    def from_times(cls, batch_id, submitted_at, started_at, completed_at,
                   interval_used, record_count):
        sched = started_at - submitted_at
        proc = completed_at - started_at
        return cls(
            batch_id=batch_id,
            submitted_at=submitted_at,
            started_at=started_at,
            completed_at=completed_at,
            processing_delay=proc,
            scheduling_delay=sched,
            total_delay=sched + proc,
            interval_used=interval_used,
            record_count=record_count,
        )

    @property
    def eta(self) -> float:
        return self.total_delay / self.interval_used


@dataclass(frozen=True)
class WorkloadEstimate:
    value: float
    as_of: float
    samples_absorbed: int


class WorkloadMonitor:
    """Buffers per-batch workload samples and smooths them on demand."""

    def __init__(self, config: MonitorConfig | None = None):
        self.config = config or MonitorConfig()
        self._pending: list[float] = []
        self._estimate = WorkloadEstimate(self.config.initial_estimate, 0.0, 0)

    def on_batch_completed(self, stats: BatchStats) -> None:
        if stats.interval_used <= 0:
            raise DomainError("interval_used must be positive")
        if stats.total_delay <= 0:
            raise DomainError("total_delay must be positive to form a workload sample")
        self._pending.append(stats.eta)

    def update_estimate(self, now: float) -> WorkloadEstimate:
        """Fold pending samples into S; a no-op on the value if none arrived."""
        prev = self._estimate
        if not self._pending:
            self._estimate = WorkloadEstimate(prev.value, now, prev.samples_absorbed)
            return self._estimate
        a = self.config.smoothing_coefficient
        mean_eta = sum(self._pending) / len(self._pending)
        value = a * mean_eta + (1.0 - a) * prev.value
        absorbed = prev.samples_absorbed + len(self._pending)
        self._pending.clear()
        self._estimate = WorkloadEstimate(value, now, absorbed)
        return self._estimate

    def current(self) -> WorkloadEstimate:
        return self._estimate

    @property
    def pending_count(self) -> int:
        return len(self._pending)
