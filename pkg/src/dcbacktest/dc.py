"""Directional-change decomposition under asymmetric thresholds.

A price stream is split into alternating up/down trends. An upturn is
confirmed at the first tick rising ``theta`` above the running low of the
preceding downtrend; a downturn at the first tick falling ``alpha * theta``
below the running high of the preceding uptrend. Confirmations fix the
preceding extreme retroactively. Event index ranges tile the series:
``[trough, up_conf] [up_conf+1, peak-1] [peak, down_conf] ...`` with the
overshoot interval absent whenever it would be empty.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import PriceSeries

__all__ = [
    "DcConfig",
    "Extreme",
    "DcEventRecord",
    "RdcPoint",
    "DcStepper",
    "summarize",
    "rdc_series",
    "write_events",
    "write_rdc",
    "PEAK",
    "TROUGH",
    "UPTURN_DC",
    "DOWNTURN_DC",
    "UP_OS",
    "DOWN_OS",
    "STEP_NONE",
    "STEP_NEW_HIGH",
    "STEP_NEW_LOW",
    "STEP_UP_CONFIRM",
    "STEP_DOWN_CONFIRM",
]

PEAK = "peak"
TROUGH = "trough"

UPTURN_DC = "UpturnDC"
DOWNTURN_DC = "DownturnDC"
UP_OS = "UpOS"
DOWN_OS = "DownOS"

# Step outcome codes.
STEP_NONE = 0
STEP_NEW_HIGH = 1
STEP_NEW_LOW = 2
STEP_UP_CONFIRM = 3
STEP_DOWN_CONFIRM = 4

_INIT, _UP, _DOWN = 0, 1, 2


@dataclass(frozen=True)
class DcConfig:
    """Uptrend threshold ``theta`` and downtrend decay coefficient ``alpha``.

    The effective downtrend threshold is ``alpha * theta``; ``alpha == 1``
    reduces to the classic symmetric detector.
    """

    theta: float
    alpha: float = 1.0

    def __post_init__(self) -> None:
        if not self.theta > 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if not self.theta < self.alpha <= 1:
            raise ValueError(f"require theta < alpha <= 1, got theta={self.theta} alpha={self.alpha}")

    @property
    def down_threshold(self) -> float:
        return self.alpha * self.theta


@dataclass(frozen=True)
class Extreme:
    index: int
    price: float
    kind: str  # PEAK or TROUGH


@dataclass(frozen=True)
class DcEventRecord:
    kind: str  # UPTURN_DC, DOWNTURN_DC, UP_OS or DOWN_OS
    start_index: int
    end_index: int
    start_price: float
    end_price: float


@dataclass(frozen=True)
class RdcPoint:
    """Return per unit time between two adjacent extremes.

    ``value = |P_to - P_from| / (P_from * interval_seconds)``; the indices
    are series positions of the extremes.
    """

    value: float
    from_extreme: int
    to_extreme: int
    interval_seconds: float


class DcStepper:
    """Incremental single-pass detector.

    Starts neutral: both running extremes track from the first tick, and
    whichever confirmation threshold is crossed first establishes the first
    trend (the downturn test takes precedence on a tick satisfying both).
    After a confirmation only the trend-side extreme updates, on strict
    improvement, so extreme indices mark first occurrences.
    """

    __slots__ = (
        "up_mult",
        "down_mult",
        "trend",
        "p_h",
        "p_h_idx",
        "p_l",
        "p_l_idx",
        "confirmed_idx",
        "confirmed_price",
    )

    def __init__(self, config: DcConfig, first_price: float) -> None:
        self.up_mult = 1.0 + config.theta
        self.down_mult = 1.0 - config.alpha * config.theta
        self.trend = _INIT
        self.p_h = first_price
        self.p_h_idx = 0
        self.p_l = first_price
        self.p_l_idx = 0
        # Extreme fixed by the most recent confirmation.
        self.confirmed_idx = -1
        self.confirmed_price = 0.0

    def step(self, i: int, p: float) -> int:
        trend = self.trend
        if trend == _UP:
            if p <= self.p_h * self.down_mult:
                self.confirmed_idx = self.p_h_idx
                self.confirmed_price = self.p_h
                self.trend = _DOWN
                self.p_l = p
                self.p_l_idx = i
                return STEP_DOWN_CONFIRM
            if p > self.p_h:
                self.p_h = p
                self.p_h_idx = i
                return STEP_NEW_HIGH
            return STEP_NONE
        if trend == _DOWN:
            if p >= self.p_l * self.up_mult:
                self.confirmed_idx = self.p_l_idx
                self.confirmed_price = self.p_l
                self.trend = _UP
                self.p_h = p
                self.p_h_idx = i
                return STEP_UP_CONFIRM
            if p < self.p_l:
                self.p_l = p
                self.p_l_idx = i
                return STEP_NEW_LOW
            return STEP_NONE
        # Neutral start: either side may confirm, downturn checked first.
        if p <= self.p_h * self.down_mult:
            self.confirmed_idx = self.p_h_idx
            self.confirmed_price = self.p_h
            self.trend = _DOWN
            self.p_l = p
            self.p_l_idx = i
            return STEP_DOWN_CONFIRM
        if p >= self.p_l * self.up_mult:
            self.confirmed_idx = self.p_l_idx
            self.confirmed_price = self.p_l
            self.trend = _UP
            self.p_h = p
            self.p_h_idx = i
            return STEP_UP_CONFIRM
        if p > self.p_h:
            self.p_h = p
            self.p_h_idx = i
            return STEP_NEW_HIGH
        if p < self.p_l:
            self.p_l = p
            self.p_l_idx = i
            return STEP_NEW_LOW
        return STEP_NONE


def summarize(
    series: PriceSeries | np.ndarray | Sequence[float], config: DcConfig
) -> tuple[list[DcEventRecord], list[Extreme]]:
    """Decompose a series into DC/OS event records and confirmed extremes.

    The trailing trend in progress at series end is never force-closed.
    """
    prices = series.prices if isinstance(series, PriceSeries) else np.asarray(series, dtype=np.float64)
    n = prices.shape[0]
    if n == 0:
        raise ValueError("cannot summarize an empty series")

    stepper = DcStepper(config, float(prices[0]))
    events: list[DcEventRecord] = []
    extremes: list[Extreme] = []
    prev_conf_idx = -1  # confirmation index of the previous DC event

    for i in range(1, n):
        code = stepper.step(i, float(prices[i]))
        if code == STEP_UP_CONFIRM or code == STEP_DOWN_CONFIRM:
            ext_idx = stepper.confirmed_idx
            ext_price = stepper.confirmed_price
            if code == STEP_UP_CONFIRM:
                ext_kind, os_kind, dc_kind = TROUGH, DOWN_OS, UPTURN_DC
            else:
                ext_kind, os_kind, dc_kind = PEAK, UP_OS, DOWNTURN_DC
            if prev_conf_idx >= 0 and prev_conf_idx + 1 <= ext_idx - 1:
                events.append(
                    DcEventRecord(
                        os_kind,
                        prev_conf_idx + 1,
                        ext_idx - 1,
                        float(prices[prev_conf_idx + 1]),
                        float(prices[ext_idx - 1]),
                    )
                )
            events.append(DcEventRecord(dc_kind, ext_idx, i, ext_price, float(prices[i])))
            extremes.append(Extreme(ext_idx, ext_price, ext_kind))
            prev_conf_idx = i
    return events, extremes


def rdc_series(
    extremes: Sequence[Extreme], timestamps_ms: np.ndarray | Sequence[int]
) -> tuple[list[RdcPoint], int]:
    """Per-leg return rates between adjacent extremes.

    ``timestamps_ms`` indexes the original series. Degenerate pairs with
    zero elapsed time are skipped; the skip count is returned alongside.
    """
    if len(extremes) < 2:
        raise ValueError("need at least two extremes")
    ts = np.asarray(timestamps_ms, dtype=np.int64)
    points: list[RdcPoint] = []
    skipped = 0
    for a, b in zip(extremes, extremes[1:]):
        if a.kind == b.kind:
            raise ValueError("extremes must alternate peak/trough")
        interval = (int(ts[b.index]) - int(ts[a.index])) / 1000.0
        if interval <= 0.0:
            skipped += 1
            continue
        value = abs(b.price - a.price) / (a.price * interval)
        points.append(RdcPoint(value, a.index, b.index, interval))
    return points, skipped


def write_events(path: str | os.PathLike, events: Sequence[DcEventRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("kind,start_index,end_index,start_price,end_price\n")
        for e in events:
            fh.write(f"{e.kind},{e.start_index},{e.end_index},{e.start_price:.10g},{e.end_price:.10g}\n")


def write_rdc(path: str | os.PathLike, points: Sequence[RdcPoint]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("from_index,to_index,interval_seconds,value\n")
        for r in points:
            fh.write(f"{r.from_extreme},{r.to_extreme},{r.interval_seconds:.10g},{r.value:.10g}\n")
