"""Fuzzy batch-interval controller.

Two inputs drive it: the predicted relative traffic change C and the
workload deviation D = S - 1. Both are clamped to [-0.2, +0.2], fuzzified
over five triangular labels, run through a 5x5 rule table, and defuzzified
to an integer adjustment level in {-2..+2}. Level k moves the batch
interval by k block intervals.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Callable, Optional

from .errors import ConfigError, DomainError, NotReadyError, TraceParseError

log = logging.getLogger(__name__)


class FuzzyLabel(IntEnum):
    NB = 0
    NS = 1
    ZO = 2
    PS = 3
    PB = 4

    def mirror(self) -> "FuzzyLabel":
        return FuzzyLabel(4 - self.value)


@dataclass(frozen=True)
class MembershipPartition:
    """Triangular memberships centred every half_width, shoulders saturated.

    With centres spaced exactly one half_width apart the degrees of any
    clamped input sum to 1 and at most two labels are active.
    """

    centers: tuple[float, ...] = (-0.2, -0.1, 0.0, 0.1, 0.2)
    half_width: float = 0.1

    def __post_init__(self):
        if len(self.centers) != len(FuzzyLabel):
            raise ConfigError(f"need {len(FuzzyLabel)} centers, got {len(self.centers)}")
        if self.half_width <= 0:
            raise ConfigError("half_width must be positive")
        for a, b in zip(self.centers, self.centers[1:]):
            if not math.isclose(b - a, self.half_width, rel_tol=1e-9):
                raise ConfigError("centers must be spaced exactly one half_width apart")

    @property
    def lo(self) -> float:
        return self.centers[0]

    @property
    def hi(self) -> float:
        return self.centers[-1]

    def clamp(self, x: float) -> float:
        return min(self.hi, max(self.lo, x))

    def fuzzify(self, x: float) -> dict[FuzzyLabel, float]:
        """Nonzero membership degrees of x after clamping to the domain."""
        x = self.clamp(x)
        out: dict[FuzzyLabel, float] = {}
        for label in FuzzyLabel:
            degree = 1.0 - abs(x - self.centers[label.value]) / self.half_width
            # Snap representation noise so boundary inputs (e.g. exactly half
            # way between centres) fire with their exact intended degrees.
            degree = round(degree, 12)
            if degree > 0.0:
                out[label] = degree
        return out


DEFAULT_PARTITION = MembershipPartition()

# Rows indexed by the workload label D (NB..PB top to bottom), columns by the
# traffic-change label C (NB..PB left to right).
DEFAULT_RULES: tuple[tuple[int, ...], ...] = (
    (-2, -1, -1, 0, 0),
    (-1, -1, 0, 0, 0),
    (-1, 0, 0, 0, 1),
    (0, 0, 0, 1, 1),
    (0, 0, 1, 1, 2),
)

MIN_LEVEL = -2
MAX_LEVEL = 2


@dataclass(frozen=True)
class RuleTable:
    levels: tuple[tuple[int, ...], ...] = DEFAULT_RULES

    def __post_init__(self):
        n = len(FuzzyLabel)
        if len(self.levels) != n or any(len(row) != n for row in self.levels):
            raise ConfigError(f"rule table must be {n}x{n}")
        for row in self.levels:
            for v in row:
                if not isinstance(v, int) or not MIN_LEVEL <= v <= MAX_LEVEL:
                    raise ConfigError(f"rule levels must be integers in [-2, 2], got {v!r}")
        for i in range(n):
            for j in range(n - 1):
                if self.levels[i][j] > self.levels[i][j + 1]:
                    raise ConfigError("rule rows must be non-decreasing left to right")
                if self.levels[j][i] > self.levels[j + 1][i]:
                    raise ConfigError("rule columns must be non-decreasing top to bottom")
        for d in FuzzyLabel:
            for c in FuzzyLabel:
                if self.levels[d][c] != -self.levels[d.mirror()][c.mirror()]:
                    raise ConfigError("rule table must be antisymmetric under label mirroring")

    def level(self, c_label: FuzzyLabel, d_label: FuzzyLabel) -> int:
        return self.levels[d_label.value][c_label.value]

    @classmethod
    def load(cls, path: str | Path) -> "RuleTable":
        """Read a 5x5 table, one comma-separated row per line, D rows NB..PB."""
        rows: list[tuple[int, ...]] = []
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            try:
                rows.append(tuple(int(cell.strip()) for cell in body.split(",")))
            except ValueError as exc:
                raise TraceParseError(f"bad rule entry: {exc}", row=lineno) from exc
        if len(rows) != len(FuzzyLabel):
            raise TraceParseError(f"expected {len(FuzzyLabel)} rule rows, got {len(rows)}")
        try:
            return cls(tuple(rows))
        except ConfigError as exc:
            raise TraceParseError(str(exc)) from exc


@dataclass(frozen=True)
class ControllerConfig:
    block_interval: int
    min_interval: int
    max_interval: int
    control_period: int = 10_000
    prediction_enabled: bool = True
    step_blocks: int = 1

    def __post_init__(self):
        if self.block_interval <= 0:
            raise ConfigError("block_interval must be positive")
        for name in ("min_interval", "max_interval"):
            v = getattr(self, name)
            if v <= 0 or v % self.block_interval != 0:
                raise ConfigError(
                    f"{name} must be a positive multiple of block_interval, got {v}"
                )
        if self.min_interval > self.max_interval:
            raise ConfigError("min_interval must not exceed max_interval")
        if self.control_period <= 0:
            raise ConfigError("control_period must be positive")
        if self.step_blocks < 1:
            raise ConfigError("step_blocks must be >= 1")


def compute_traffic_change(q_next: float, q_now: float,
                           partition: MembershipPartition = DEFAULT_PARTITION) -> float:
    """Relative predicted rate change, clamped to the fuzzy domain.

    A non-positive current rate gives no usable denominator; treat the
    traffic as flat rather than failing the control step.
    """
    if q_now <= 0:
        log.debug("traffic change undefined at q_now=%r, using 0", q_now)
        return 0.0
    return partition.clamp((q_next - q_now) / q_now)


def compute_workload_deviation(s: float,
                               partition: MembershipPartition = DEFAULT_PARTITION) -> float:
    return partition.clamp(s - 1.0)


def _round_half_away(x: float) -> int:
    if x >= 0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


def infer(c: float, d: float, table: RuleTable | None = None,
          partition: MembershipPartition = DEFAULT_PARTITION) -> int:
    """Min-conjunction inference over the rule table, defuzzified by weighted mean."""
    table = table or RuleTable()
    c_degrees = partition.fuzzify(c)
    d_degrees = partition.fuzzify(d)
    num = 0.0
    den = 0.0
    for c_label, wc in c_degrees.items():
        for d_label, wd in d_degrees.items():
            strength = min(wc, wd)
            num += strength * table.level(c_label, d_label)
            den += strength
    return _round_half_away(num / den)


def adjust_interval(current: int, level: int, config: ControllerConfig) -> int:
    """Move the interval by level block steps, clamped to the configured range."""
    if current % config.block_interval != 0:
        raise DomainError(f"current interval {current} is not a block multiple")
    if not MIN_LEVEL <= level <= MAX_LEVEL:
        raise DomainError(f"level must be in [-2, 2], got {level}")
    proposed = current + level * config.step_blocks * config.block_interval
    return min(config.max_interval, max(config.min_interval, proposed))


@dataclass(frozen=True)
class ControlDecision:
    """What one control step saw and decided."""

    now: float
    interval: int
    level: int
    s: float
    c: float
    d: float
    q_now: Optional[float]
    q_next: Optional[float]


class FuzzyController:
    """Periodic control step tying tracker, monitor, and batch timer together."""

    def __init__(self, config: ControllerConfig, tracker, monitor,
                 rule_table: RuleTable | None = None,
                 partition: MembershipPartition = DEFAULT_PARTITION,
                 set_interval: Callable[[int], None] | None = None):
        self.config = config
        self.tracker = tracker
        self.monitor = monitor
        self.table = rule_table or RuleTable()
        self.partition = partition
        self._set_interval = set_interval

    def control_step(self, now: float, current_interval: int) -> ControlDecision:
        s = self.monitor.update_estimate(now).value
        q_now: Optional[float] = None
        q_next: Optional[float] = None
        try:
            q_now = self.tracker.get_latest_record().rate
            if self.config.prediction_enabled:
                q_next = self.tracker.predict_rate(1)
            else:
                q_next = q_now
        except NotReadyError:
            pass

        if q_now is None or q_next is None:
            log.debug("tracker not ready at t=%s, workload-only control", now)
            c = 0.0
        else:
            c = compute_traffic_change(q_next, q_now, self.partition)
        d = compute_workload_deviation(s, self.partition)
        level = infer(c, d, self.table, self.partition)
        interval = adjust_interval(current_interval, level, self.config)
        if interval != current_interval and self._set_interval is not None:
            self._set_interval(interval)
        return ControlDecision(now=now, interval=interval, level=level,
                               s=s, c=c, d=d, q_now=q_now, q_next=q_next)
