"""GM(1,1) grey forecaster.

Fits the grey difference equation x0(t) + alpha * z(t) = mu on the
accumulated series and extrapolates it a few steps ahead. Designed for
very short training windows (five points is the usual case here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DomainError, FitError, LengthError

MIN_TRAIN_LEN = 4

# Below this magnitude the exponential response is numerically flat, so the
# model degrades to the linear limit of the time-response function.
EPS_ALPHA = 1e-9


@dataclass(frozen=True)
class GreyModel:
    """Fitted GM(1,1) parameters.

    ``alpha`` is the development coefficient and ``mu`` the grey input.
    ``shift`` records the offset added to make a window with zeros or
    negatives all-positive before fitting; predictions subtract it again.
    """

    alpha: float
    mu: float
    first_accumulated: float
    train_len: int
    shift: float = 0.0

    def __post_init__(self):
        if self.train_len < MIN_TRAIN_LEN:
            raise LengthError(f"train_len must be >= {MIN_TRAIN_LEN}, got {self.train_len}")
        for name in ("alpha", "mu", "first_accumulated", "shift"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    @property
    def degenerate(self) -> bool:
        return abs(self.alpha) < EPS_ALPHA


def _as_floats(series: Sequence[float]) -> list[float]:
    vals = [float(v) for v in series]
    if len(vals) < MIN_TRAIN_LEN:
        raise LengthError(f"need at least {MIN_TRAIN_LEN} observations, got {len(vals)}")
    for i, v in enumerate(vals):
        if not math.isfinite(v):
            raise DomainError(f"observation {i} is not finite: {v!r}")
    return vals


def accumulate(series: Sequence[float]) -> list[float]:
    """First-order accumulation (running sums) of a positive series."""
    vals = _as_floats(series)
    for i, v in enumerate(vals):
        if v <= 0:
            raise DomainError(f"observation {i} must be positive, got {v!r}")
    out = []
    total = 0.0
    for v in vals:
        total += v
        out.append(total)
    return out


def difference(series: Sequence[float]) -> list[float]:
    """Inverse of :func:`accumulate`: first element kept, then adjacent diffs."""
    vals = [float(v) for v in series]
    if not vals:
        return []
    return [vals[0]] + [vals[i] - vals[i - 1] for i in range(1, len(vals))]


def fit(series: Sequence[float]) -> GreyModel:
    """Fit GM(1,1) to a series of at least four observations.

    Windows containing zeros or negative values are shifted up by
    (1 - min) first, so the accumulated series is strictly increasing;
    the shift is stored on the model and undone by :func:`predict`.
    """
    vals = _as_floats(series)
    shift = 0.0
    lowest = min(vals)
    if lowest <= 0:
        shift = 1.0 - lowest
        vals = [v + shift for v in vals]

    acc = accumulate(vals)
    n = len(vals)
    z = [(acc[i] + acc[i - 1]) / 2.0 for i in range(1, n)]
    y = vals[1:]
    m = n - 1

    sz = sum(z)
    sy = sum(y)
    szz = sum(v * v for v in z)
    szy = sum(a * b for a, b in zip(z, y))

    den = m * szz - sz * sz
    scale = m * szz + sz * sz
    if den <= scale * 1e-15:
        # All background values equal. Consistent only if the tail is flat.
        spread = max(y) - min(y)
        if spread <= 1e-12 * max(abs(y[0]), 1.0):
            return GreyModel(0.0, sy / m, acc[0], n, shift)
        raise FitError("normal equations are singular and the data is inconsistent")

    alpha = (sz * sy - m * szy) / den
    mu = (sy + alpha * sz) / m
    return GreyModel(alpha, mu, acc[0], n, shift)


def response(model: GreyModel, t: int) -> float:
    """Accumulated-series value at step t (1-based) from the time response."""
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    if model.degenerate:
        return model.first_accumulated + model.mu * (t - 1)
    ratio = model.mu / model.alpha
    return (model.first_accumulated - ratio) * math.exp(-model.alpha * (t - 1)) + ratio


def predict(model: GreyModel, t: int) -> float:
    """Original-series value at step t, restored by differencing the response."""
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    if t == 1:
        raw = response(model, 1)
    else:
        raw = response(model, t) - response(model, t - 1)
    return raw - model.shift


def fit_predict(series: Sequence[float], horizon: int) -> list[float]:
    """Fit on ``series`` and return forecasts for the next ``horizon`` steps."""
    if horizon < 1:
        raise DomainError(f"horizon must be >= 1, got {horizon}")
    model = fit(series)
    return [predict(model, model.train_len + k) for k in range(1, horizon + 1)]
