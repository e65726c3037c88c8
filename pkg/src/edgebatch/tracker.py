"""Traffic tracker: resamples receiver reports into fixed windows and keeps a
grey model trained on the trailing windows for short-term rate prediction."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from . import grey
from .errors import ConfigError, DomainError, NotReadyError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrafficReport:
    """One receiver report: record_count arrived at (from) timestamp ms."""

    timestamp: int
    record_count: int

    def __post_init__(self):
        if self.timestamp < 0:
            raise DomainError(f"timestamp must be >= 0, got {self.timestamp}")
        if self.record_count < 0:
            raise DomainError(f"record_count must be >= 0, got {self.record_count}")


@dataclass(frozen=True)
class ResampledRecord:
    """Average data rate (records/s) over one closed window."""

    window_start: int
    window_len: int
    rate: float


@dataclass(frozen=True)
class TrackerConfig:
    resample_interval: int = 30_000
    train_num: int = 5
    retain_windows: int = 240
    retrain_every: int = 1

    def __post_init__(self):
        if self.resample_interval <= 0:
            raise ConfigError("resample_interval must be positive")
        if self.train_num < grey.MIN_TRAIN_LEN:
            raise ConfigError(f"train_num must be >= {grey.MIN_TRAIN_LEN}")
        if self.retain_windows < self.train_num:
            raise ConfigError("retain_windows must be >= train_num")
        if self.retrain_every < 1:
            raise ConfigError("retrain_every must be >= 1")


class TrafficTracker:
    """Accumulates reports per window, closes windows as time advances."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.model: Optional[grey.GreyModel] = None
        self.last_train_time: Optional[int] = None
        self._started = False
        self._open_counts: dict[int, int] = {}
        self._closed: list[ResampledRecord] = []
        self._next_close_index = 0
        self._closed_total = 0
        self._closes_since_train = 0

    def start(self) -> None:
        self._started = True

    def stop(self) -> None:
        self._started = False

    @property
    def started(self) -> bool:
        return self._started

    def report_info(self, report: TrafficReport) -> None:
        """Attribute a report to the window containing its timestamp."""
        if not self._started:
            raise NotReadyError("tracker is not started")
        index = report.timestamp // self.config.resample_interval
        if index < self._next_close_index:
            log.warning("dropping report at t=%d for already closed window %d",
                        report.timestamp, index)
            return
        self._open_counts[index] = self._open_counts.get(index, 0) + report.record_count

    def close_windows_upto(self, now: int) -> list[ResampledRecord]:
        """Close every window whose end is <= now; returns them oldest first.

        Windows with no reports close with rate 0 so the resampled history
        stays contiguous.
        """
        w = self.config.resample_interval
        closed: list[ResampledRecord] = []
        while (self._next_close_index + 1) * w <= now:
            index = self._next_close_index
            count = self._open_counts.pop(index, 0)
            rec = ResampledRecord(window_start=index * w, window_len=w,
                                  rate=count * 1000.0 / w)
            self._closed.append(rec)
            closed.append(rec)
            self._next_close_index += 1
            self._closed_total += 1
            self._closes_since_train += 1
        if closed:
            self.cleanup()
        return closed

    def resample(self) -> list[ResampledRecord]:
        """All retained closed windows, oldest first; never the open one."""
        if not self._closed:
            raise NotReadyError("no closed windows yet")
        return list(self._closed)

    def get_latest_record(self) -> ResampledRecord:
        if not self._closed:
            raise NotReadyError("no closed windows yet")
        return self._closed[-1]

    def get_records(self) -> list[ResampledRecord]:
        return list(self._closed)

    def cleanup(self) -> None:
        """Drop the oldest closed windows beyond the retention cap."""
        excess = len(self._closed) - self.config.retain_windows
        if excess > 0:
            del self._closed[:excess]

    def train(self) -> grey.GreyModel:
        """Fit the grey model on the trailing train_num window rates."""
        if len(self._closed) < self.config.train_num:
            raise NotReadyError(
                f"need {self.config.train_num} closed windows, have {len(self._closed)}"
            )
        tail = self._closed[-self.config.train_num:]
        self.model = grey.fit([rec.rate for rec in tail])
        self.last_train_time = tail[-1].window_start + tail[-1].window_len
        self._closes_since_train = 0
        return self.model

    def maybe_train(self) -> Optional[grey.GreyModel]:
        """Retrain when enough new windows closed since the last fit."""
        if len(self._closed) < self.config.train_num:
            return None
        if self.model is not None and self._closes_since_train < self.config.retrain_every:
            return None
        return self.train()

    def predict_rate(self, windows_ahead: int = 1) -> float:
        """Forecast the mean rate windows_ahead windows past the training tail."""
        if windows_ahead < 1:
            raise DomainError(f"windows_ahead must be >= 1, got {windows_ahead}")
        if self.model is None:
            raise NotReadyError("no trained model")
        value = grey.predict(self.model, self.model.train_len + windows_ahead)
        return max(0.0, value)
