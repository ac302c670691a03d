"""Event-driven trading over a directional-change stream.

One long-only state machine serves all four strategy flavors: buy all-in at
an upturn confirmation (regime permitting), take profit once the running
high clears twice the uptrend threshold above the prior trough, and bail
out at the downturn confirmation otherwise. Regime gating is consulted only
before a buy; it never forces an exit.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .dc import (
    STEP_DOWN_CONFIRM,
    STEP_NEW_HIGH,
    STEP_UP_CONFIRM,
    DcConfig,
    DcStepper,
)
from .hmm import GaussianHmm, RegimeLabel, predict_regime
from .ingest import PriceSeries, format_timestamp

__all__ = [
    "StrategyKind",
    "TradeEntry",
    "EquityCurve",
    "DEFAULT_FIXED_THRESHOLDS",
    "INITIAL_CAPITAL",
    "run_strategy",
    "run_ft_suite",
    "write_trades",
    "write_equity",
]

DEFAULT_FIXED_THRESHOLDS = (0.0003, 0.0005, 0.0008, 0.001, 0.0015, 0.002, 0.0025, 0.003)
INITIAL_CAPITAL = 10_000.0

RULE_LIQUIDATE = 0
RULE_BUY = 1
RULE_TAKE_PROFIT = 2
RULE_DOWNTURN_EXIT = 3


class StrategyKind(str, Enum):
    FT = "FT"          # fixed symmetric threshold, no gating
    OPT_T = "OPT_T"    # optimized symmetric threshold, no gating
    IDC = "IDC"        # optimized asymmetric thresholds, no gating
    ITA = "ITA"        # optimized asymmetric thresholds, regime-gated buys


@dataclass(frozen=True)
class TradeEntry:
    timestamp_ms: int
    side: str  # "BUY" or "SELL"
    price: float
    capital_after: float
    rule: int


@dataclass
class EquityCurve:
    """Capital over time; points recorded where capital can change."""

    timestamps: np.ndarray
    capital: np.ndarray

    def __len__(self) -> int:
        return int(self.timestamps.size)


def run_strategy(
    series: PriceSeries,
    config: DcConfig,
    kind: StrategyKind,
    regime_model: GaussianHmm | None = None,
    rdc_history: Sequence[float] | None = None,
    initial_capital: float = INITIAL_CAPITAL,
    force_regime: RegimeLabel | None = None,
    record_equity: bool = True,
) -> tuple[list[TradeEntry], EquityCurve]:
    """Run one strategy over a series, returning the trade log and equity.

    ITA consults the regime model at every upturn confirmation, after the
    newly formed per-leg return rate has been appended to (a copy of) the
    supplied history; the other kinds treat the regime as always normal.
    Any position still open at series end is liquidated at the final price
    and flagged with rule 0.
    """
    n = len(series)
    if n == 0:
        return [], EquityCurve(np.empty(0, dtype=np.int64), np.empty(0))

    gating = kind is StrategyKind.ITA
    if gating and force_regime is None:
        if regime_model is None:
            raise ValueError("ITA requires a fitted regime model")
        if rdc_history is None or len(rdc_history) == 0:
            raise ValueError("ITA requires a nonempty rdc history")
    history: list[float] = list(rdc_history) if (gating and rdc_history is not None) else []

    prices = series.prices
    ts = series.timestamps
    stepper = DcStepper(config, float(prices[0]))
    target_mult = 1.0 + 2.0 * config.theta

    capital = float(initial_capital)
    units = 0.0
    trades: list[TradeEntry] = []
    eq_ts: list[int] = [int(ts[0])]
    eq_cap: list[float] = [capital]
    prev_ext_idx = -1
    prev_ext_price = 0.0

    for i in range(1, n):
        p = float(prices[i])
        code = stepper.step(i, p)
        traded = False
        if code == STEP_DOWN_CONFIRM:
            if gating:
                _append_rdc(history, prev_ext_idx, prev_ext_price, stepper, ts)
            prev_ext_idx, prev_ext_price = stepper.confirmed_idx, stepper.confirmed_price
            if units > 0.0:
                capital = units * p
                units = 0.0
                trades.append(TradeEntry(int(ts[i]), "SELL", p, capital, RULE_DOWNTURN_EXIT))
                traded = True
        elif code == STEP_NEW_HIGH:
            if units > 0.0 and stepper.p_h >= target_mult * stepper.p_l:
                capital = units * p
                units = 0.0
                trades.append(TradeEntry(int(ts[i]), "SELL", p, capital, RULE_TAKE_PROFIT))
                traded = True
        elif code == STEP_UP_CONFIRM:
            if gating:
                _append_rdc(history, prev_ext_idx, prev_ext_price, stepper, ts)
            prev_ext_idx, prev_ext_price = stepper.confirmed_idx, stepper.confirmed_price
            if units == 0.0:
                if force_regime is not None:
                    label = force_regime
                elif gating:
                    label = predict_regime(regime_model, np.asarray(history))
                else:
                    label = RegimeLabel.NORMAL
                if label is RegimeLabel.NORMAL:
                    units = capital / p
                    trades.append(TradeEntry(int(ts[i]), "BUY", p, capital, RULE_BUY))
                    traded = True
        if record_equity and (units > 0.0 or traded):
            eq_ts.append(int(ts[i]))
            eq_cap.append(units * p if units > 0.0 else capital)

    if units > 0.0:
        p_last = float(prices[-1])
        capital = units * p_last
        units = 0.0
        trades.append(TradeEntry(int(ts[-1]), "SELL", p_last, capital, RULE_LIQUIDATE))
    if not record_equity or eq_ts[-1] != int(ts[-1]) or eq_cap[-1] != capital:
        eq_ts.append(int(ts[-1]))
        eq_cap.append(capital)
    return trades, EquityCurve(np.array(eq_ts, dtype=np.int64), np.array(eq_cap))


def _append_rdc(
    history: list[float], prev_idx: int, prev_price: float, stepper: DcStepper, ts: np.ndarray
) -> None:
    # The confirmation just fixed a new extreme; pair it with the previous
    # one. Zero-elapsed pairs are degenerate feed artifacts and are skipped.
    if prev_idx < 0:
        return
    interval = (int(ts[stepper.confirmed_idx]) - int(ts[prev_idx])) / 1000.0
    if interval <= 0.0:
        return
    history.append(abs(stepper.confirmed_price - prev_price) / (prev_price * interval))


def run_ft_suite(
    series: PriceSeries,
    thresholds: Sequence[float] = DEFAULT_FIXED_THRESHOLDS,
    initial_capital: float = INITIAL_CAPITAL,
    record_equity: bool = True,
) -> list[tuple[float, list[TradeEntry], EquityCurve]]:
    """Fixed-threshold benchmark: one symmetric, ungated run per threshold,
    ordered by threshold."""
    if len(series) == 0:
        raise ValueError("series must be nonempty")
    results = []
    for theta in sorted(thresholds):
        log, curve = run_strategy(
            series,
            DcConfig(theta=theta, alpha=1.0),
            StrategyKind.FT,
            initial_capital=initial_capital,
            record_equity=record_equity,
        )
        results.append((theta, log, curve))
    return results


def write_trades(path: str | os.PathLike, trades: Sequence[TradeEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,side,price,capital_after,rule\n")
        for t in trades:
            fh.write(
                f"{format_timestamp(t.timestamp_ms)},{t.side},{t.price:.10g},{t.capital_after:.10g},{t.rule}\n"
            )


def write_equity(path: str | os.PathLike, curve: EquityCurve) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,capital\n")
        for ts, cap in zip(curve.timestamps, curve.capital):
            fh.write(f"{format_timestamp(int(ts))},{cap:.10g}\n")
