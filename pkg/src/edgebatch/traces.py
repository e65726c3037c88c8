"""Input-rate functions for the engine: constant, step, sinusoid, CSV replay.

Every rate function reports records/second at a millisecond timestamp and
can integrate itself exactly over an arbitrary window, so the engine can
quantize arrivals per block without numerical drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import DomainError, TraceParseError

HEADER = "timestamp_s,value"


class RateFunction:
    """Records/second over simulated time, with an exact window integral."""

    kind = "abstract"

    def rate(self, t_ms: float) -> float:
        raise NotImplementedError

    def integral(self, t0_ms: float, t1_ms: float) -> float:
        """Expected record count arriving in [t0_ms, t1_ms)."""
        raise NotImplementedError

    def _check_window(self, t0_ms: float, t1_ms: float) -> None:
        if t1_ms < t0_ms:
            raise DomainError(f"window end {t1_ms} before start {t0_ms}")


@dataclass(frozen=True)
class ConstantRate(RateFunction):
    value: float
    kind = "constant"

    def __post_init__(self):
        if self.value < 0:
            raise DomainError(f"rate must be >= 0, got {self.value}")

    def rate(self, t_ms: float) -> float:
        return self.value

    def integral(self, t0_ms: float, t1_ms: float) -> float:
        self._check_window(t0_ms, t1_ms)
        return self.value * (t1_ms - t0_ms) / 1000.0


@dataclass(frozen=True)
class StepRate(RateFunction):
    before: float
    after: float
    switch_ms: float
    kind = "step"

    def __post_init__(self):
        if self.before < 0 or self.after < 0:
            raise DomainError("rates must be >= 0")
        if self.switch_ms < 0:
            raise DomainError("switch time must be >= 0")

    def rate(self, t_ms: float) -> float:
        return self.before if t_ms < self.switch_ms else self.after

    def integral(self, t0_ms: float, t1_ms: float) -> float:
        self._check_window(t0_ms, t1_ms)
        lo = min(max(self.switch_ms, t0_ms), t1_ms)
        return (self.before * (lo - t0_ms) + self.after * (t1_ms - lo)) / 1000.0


@dataclass(frozen=True)
class SinusoidRate(RateFunction):
    base: float
    amplitude: float
    period_ms: float
    kind = "sinusoid"

    def __post_init__(self):
        if self.amplitude < 0:
            raise DomainError("amplitude must be >= 0")
        if self.base < self.amplitude:
            raise DomainError("base must be >= amplitude or the rate would go negative")
        if self.period_ms <= 0:
            raise DomainError("period must be positive")

    def rate(self, t_ms: float) -> float:
        return self.base + self.amplitude * math.sin(2.0 * math.pi * t_ms / self.period_ms)

    def integral(self, t0_ms: float, t1_ms: float) -> float:
        self._check_window(t0_ms, t1_ms)
        w = 2.0 * math.pi / self.period_ms
        swing = (self.amplitude / w) * (math.cos(w * t0_ms) - math.cos(w * t1_ms))
        return (self.base * (t1_ms - t0_ms) + swing) / 1000.0


@dataclass(frozen=True)
class PiecewiseConstantTrace(RateFunction):
    """Counts-per-row trace: each row's count spreads evenly over its interval."""

    breakpoints: tuple[float, ...]  # segment edges in ms, one more than rates
    rates: tuple[float, ...]
    kind = "trace_counts"

    def __post_init__(self):
        if len(self.breakpoints) != len(self.rates) + 1:
            raise DomainError("breakpoints must be one longer than rates")

    def rate(self, t_ms: float) -> float:
        bp = self.breakpoints
        if t_ms < bp[0] or t_ms >= bp[-1]:
            return 0.0
        for i in range(len(self.rates)):
            if t_ms < bp[i + 1]:
                return self.rates[i]
        return 0.0

    def integral(self, t0_ms: float, t1_ms: float) -> float:
        self._check_window(t0_ms, t1_ms)
        bp = self.breakpoints
        total = 0.0
        for i, r in enumerate(self.rates):
            lo = max(t0_ms, bp[i])
            hi = min(t1_ms, bp[i + 1])
            if hi > lo:
                total += r * (hi - lo)
        return total / 1000.0


@dataclass(frozen=True)
class PiecewiseLinearTrace(RateFunction):
    """Rate-sample trace: linear between samples, flat beyond the ends."""

    points: tuple[tuple[float, float], ...]  # (t_ms, rate)
    kind = "trace_rates"

    def rate(self, t_ms: float) -> float:
        pts = self.points
        if t_ms <= pts[0][0]:
            return pts[0][1]
        if t_ms >= pts[-1][0]:
            return pts[-1][1]
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if t_ms < x1:
                frac = (t_ms - x0) / (x1 - x0)
                return y0 + frac * (y1 - y0)
        return pts[-1][1]

    def integral(self, t0_ms: float, t1_ms: float) -> float:
        self._check_window(t0_ms, t1_ms)
        if t1_ms == t0_ms:
            return 0.0
        pts = self.points
        edges = [t0_ms, t1_ms]
        edges += [x for (x, _) in pts if t0_ms < x < t1_ms]
        edges.sort()
        total = 0.0
        for a, b in zip(edges, edges[1:]):
            total += 0.5 * (self.rate(a) + self.rate(b)) * (b - a)
        return total / 1000.0


def constant(rate: float) -> ConstantRate:
    return ConstantRate(rate)


def step(before: float, after: float, switch_ms: float) -> StepRate:
    return StepRate(before, after, switch_ms)


def sinusoid(base: float, amplitude: float, period_ms: float) -> SinusoidRate:
    return SinusoidRate(base, amplitude, period_ms)


def load_trace_rows(path: str | Path) -> list[tuple[float, float]]:
    """Parse a trace CSV: a 'timestamp_s,value' header, then numeric rows.

    Blank lines and '#' comments are skipped. Timestamps must be strictly
    increasing and values non-negative.
    """
    rows: list[tuple[float, float]] = []
    seen_header = False
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if not seen_header:
            if body.replace(" ", "") != HEADER:
                raise TraceParseError(f"expected header {HEADER!r}, got {body!r}", row=lineno)
            seen_header = True
            continue
        parts = body.split(",")
        if len(parts) != 2:
            raise TraceParseError(f"expected two fields, got {len(parts)}", row=lineno)
        try:
            ts, value = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise TraceParseError(f"bad number: {exc}", row=lineno) from exc
        if not (math.isfinite(ts) and math.isfinite(value)):
            raise TraceParseError("values must be finite", row=lineno)
        if value < 0:
            raise TraceParseError(f"negative value {value}", row=lineno)
        if rows and ts <= rows[-1][0]:
            raise TraceParseError(f"timestamp {ts} not increasing", row=lineno)
        rows.append((ts, value))
    if not seen_header:
        raise TraceParseError("empty trace file")
    if len(rows) < 2:
        raise TraceParseError("need at least two data rows")
    return rows


def from_csv(path: str | Path, count_mode: bool = False,
             time_scale: float = 1.0, rate_scale: float = 1.0) -> RateFunction:
    """Build a rate function from a trace file.

    In count mode each row's value is the record count for the span up to the
    next row (the final row reuses the previous spacing). Otherwise values
    are rate samples in records/s, interpolated linearly. ``time_scale``
    multiplies timestamps, ``rate_scale`` multiplies rates; the trace
    integral is preserved when rate_scale == 1 / time_scale.
    """
    if time_scale <= 0 or rate_scale <= 0:
        raise DomainError("scales must be positive")
    rows = load_trace_rows(path)
    to_ms = 1000.0 * time_scale
    if count_mode:
        edges = [ts * to_ms for ts, _ in rows]
        edges.append(rows[-1][0] * to_ms + (edges[-1] - edges[-2]))
        rates = []
        for i, (_, count) in enumerate(rows):
            span_s = (rows[i + 1][0] - rows[i][0]) if i + 1 < len(rows) \
                else (rows[-1][0] - rows[-2][0])
            rates.append(rate_scale * count / span_s)
        return PiecewiseConstantTrace(tuple(edges), tuple(rates))
    points = tuple((ts * to_ms, value * rate_scale) for ts, value in rows)
    return PiecewiseLinearTrace(points)


def day_trace_path() -> Path:
    """Path of the bundled synthetic day-shape trace (counts per 10 minutes)."""
    return Path(str(resources.files("edgebatch").joinpath("data/day_trace.csv")))
