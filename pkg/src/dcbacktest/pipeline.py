"""Sliding-window backtest orchestration.

Each window optimizes thresholds on its training half, fits the regime
model there (ITA only), runs the selected strategies on the test half and
hands per-window artifacts to a single collector. Per-window seeds derive
from the root seed, so whole runs replay exactly regardless of worker
count.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bayesopt import SearchSpace, Trial, optimize, optimize_theta_only
from .dc import DcConfig, rdc_series, summarize
from .hmm import GaussianHmm, RegimeLabel, fit_baum_welch
from .ingest import PriceSeries, WindowSplit, sliding_windows
from .metrics import BacktestReport, WindowStrategyResult, build_report, crr, mdd
from .strategy import (
    DEFAULT_FIXED_THRESHOLDS,
    INITIAL_CAPITAL,
    EquityCurve,
    StrategyKind,
    TradeEntry,
    run_ft_suite,
    run_strategy,
)

__all__ = ["BacktestSettings", "WindowArtifacts", "BacktestOutputs", "run_window", "run_backtest"]

ALL_STRATEGIES = ("FT", "OPT_T", "IDC", "ITA")


@dataclass(frozen=True)
class BacktestSettings:
    seed: int
    window_months: int = 2
    stride_months: int = 1
    theta_bounds: tuple[float, float] = (0.0003, 0.003)
    alpha_bounds: tuple[float, float] = (0.1, 1.0)
    iters: int = 100
    n_init: int = 10
    strategies: tuple[str, ...] = ALL_STRATEGIES
    fixed_thresholds: tuple[float, ...] = DEFAULT_FIXED_THRESHOLDS
    hmm_max_iters: int = 200
    hmm_tol: float = 1e-6
    hmm_restarts: int = 5
    force_regime: RegimeLabel | None = None
    initial_capital: float = INITIAL_CAPITAL
    jobs: int = 1

    def __post_init__(self) -> None:
        unknown = set(self.strategies) - set(ALL_STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies: {sorted(unknown)}")
        if not self.strategies:
            raise ValueError("at least one strategy must be selected")


@dataclass
class WindowArtifacts:
    window_id: int
    rows: list[WindowStrategyResult] = field(default_factory=list)
    detail_rows: list[WindowStrategyResult] = field(default_factory=list)
    trades: dict[str, list[TradeEntry]] = field(default_factory=dict)
    curves: dict[str, EquityCurve] = field(default_factory=dict)
    trials: dict[str, list[Trial]] = field(default_factory=dict)
    params: dict[str, tuple[float, float]] = field(default_factory=dict)
    regime_model: GaussianHmm | None = None
    train_rdc_count: int = 0


@dataclass
class BacktestOutputs:
    windows: list[WindowSplit]
    artifacts: list[WindowArtifacts]
    report: BacktestReport
    # Whole-period equity per strategy, chained across the consecutive test halves.
    chained_equity: dict[str, EquityCurve]


def _child_seed(root_seed: int, window_id: int, purpose: int) -> int:
    base = root_seed ^ window_id
    return int(np.random.SeedSequence((base, purpose)).generate_state(1)[0])


def _result_row(window_id: int, name: str, log: list[TradeEntry], curve: EquityCurve) -> WindowStrategyResult:
    if len(curve) == 0:
        return WindowStrategyResult(window_id, name, 0.0, 0.0, 0.0)
    return WindowStrategyResult(window_id, name, crr(curve), mdd(curve), float(len(log)))


def run_window(
    window_id: int, train: PriceSeries, test: PriceSeries, settings: BacktestSettings
) -> WindowArtifacts:
    """Optimize on the training half and evaluate on the test half."""
    try:
        return _run_window_inner(window_id, train, test, settings)
    except Exception as exc:
        raise RuntimeError(f"window {window_id}: {exc}") from exc


def _run_window_inner(
    window_id: int, train: PriceSeries, test: PriceSeries, settings: BacktestSettings
) -> WindowArtifacts:
    out = WindowArtifacts(window_id)
    wants = set(settings.strategies)
    needs_opt = bool(wants & {"OPT_T", "IDC", "ITA"})
    if needs_opt and len(train) == 0:
        raise ValueError("empty training half")
    if len(test) == 0 and len(train) == 0:
        raise ValueError("window contains no ticks")

    def objective(theta: float, alpha: float) -> float:
        _, curve = run_strategy(
            train,
            DcConfig(theta, alpha),
            StrategyKind.IDC,
            initial_capital=settings.initial_capital,
            record_equity=False,
        )
        return float(curve.capital[-1] / curve.capital[0] - 1.0)

    space = SearchSpace(theta_bounds=settings.theta_bounds, alpha_bounds=settings.alpha_bounds)

    if "OPT_T" in wants:
        best_t, hist_t = optimize_theta_only(
            objective,
            space,
            n_iters=settings.iters,
            n_init=settings.n_init,
            seed=_child_seed(settings.seed, window_id, 1),
        )
        out.trials["OPT_T"] = hist_t
        out.params["OPT_T"] = (best_t.theta, 1.0)
        cfg_opt_t = DcConfig(best_t.theta, 1.0)

    cfg_pair: DcConfig | None = None
    if wants & {"IDC", "ITA"}:
        best_pair, hist_pair = optimize(
            objective,
            space,
            n_iters=settings.iters,
            n_init=settings.n_init,
            seed=_child_seed(settings.seed, window_id, 2),
        )
        out.trials["IDC"] = hist_pair
        cfg_pair = DcConfig(best_pair.theta, best_pair.alpha)
        for name in wants & {"IDC", "ITA"}:
            out.params[name] = (best_pair.theta, best_pair.alpha)

    train_rdc: list[float] = []
    if "ITA" in wants and settings.force_regime is None:
        assert cfg_pair is not None
        _, extremes = summarize(train, cfg_pair)
        if len(extremes) < 2:
            raise ValueError("training half produced fewer than two extremes; cannot fit regime model")
        points, _ = rdc_series(extremes, train.timestamps)
        train_rdc = [p.value for p in points]
        fit = fit_baum_welch(
            np.asarray(train_rdc),
            n_states=2,
            max_iters=settings.hmm_max_iters,
            tol=settings.hmm_tol,
            seed=_child_seed(settings.seed, window_id, 3),
            n_restarts=settings.hmm_restarts,
        )
        out.regime_model = fit.model
        out.train_rdc_count = len(train_rdc)

    if "FT" in wants:
        suite = run_ft_suite(test, settings.fixed_thresholds, settings.initial_capital) if len(test) else []
        sub_rows = []
        for theta, log, curve in suite:
            name = f"FT_{theta:g}"
            out.trades[name] = log
            out.curves[name] = curve
            sub_rows.append(_result_row(window_id, name, log, curve))
        if not sub_rows:
            sub_rows = [
                WindowStrategyResult(window_id, f"FT_{t:g}", 0.0, 0.0, 0.0) for t in settings.fixed_thresholds
            ]
        out.detail_rows.extend(sub_rows)
        out.rows.append(
            WindowStrategyResult(
                window_id,
                "FT",
                float(np.mean([r.crr_pct for r in sub_rows])),
                float(np.mean([r.mdd_pct for r in sub_rows])),
                float(np.mean([r.trades for r in sub_rows])),
            )
        )

    if "OPT_T" in wants:
        log, curve = run_strategy(
            test, cfg_opt_t, StrategyKind.OPT_T, initial_capital=settings.initial_capital
        )
        out.trades["OPT_T"] = log
        out.curves["OPT_T"] = curve
        out.rows.append(_result_row(window_id, "OPT_T", log, curve))

    if "IDC" in wants:
        assert cfg_pair is not None
        log, curve = run_strategy(test, cfg_pair, StrategyKind.IDC, initial_capital=settings.initial_capital)
        out.trades["IDC"] = log
        out.curves["IDC"] = curve
        out.rows.append(_result_row(window_id, "IDC", log, curve))

    if "ITA" in wants:
        assert cfg_pair is not None
        log, curve = run_strategy(
            test,
            cfg_pair,
            StrategyKind.ITA,
            regime_model=out.regime_model,
            rdc_history=train_rdc,
            initial_capital=settings.initial_capital,
            force_regime=settings.force_regime,
        )
        out.trades["ITA"] = log
        out.curves["ITA"] = curve
        out.rows.append(_result_row(window_id, "ITA", log, curve))
    return out


def _chain_equity(
    ordered: list[WindowArtifacts], initial_capital: float
) -> dict[str, EquityCurve]:
    names = sorted({name for art in ordered for name in art.curves})
    chained: dict[str, EquityCurve] = {}
    for name in names:
        ts_parts: list[np.ndarray] = []
        cap_parts: list[np.ndarray] = []
        capital = initial_capital
        for art in ordered:
            curve = art.curves.get(name)
            if curve is None or len(curve) == 0:
                continue
            scale = capital / float(curve.capital[0])
            scaled = curve.capital * scale
            ts_parts.append(curve.timestamps)
            cap_parts.append(scaled)
            capital = float(scaled[-1])
        if ts_parts:
            chained[name] = EquityCurve(np.concatenate(ts_parts), np.concatenate(cap_parts))
    return chained


def run_backtest(series: PriceSeries, settings: BacktestSettings) -> BacktestOutputs:
    """Full sliding-window protocol over one price series."""
    windows = sliding_windows(series, settings.window_months, settings.stride_months)
    if not windows:
        raise ValueError("series does not cover a single full window")

    payloads = []
    for wid, w in enumerate(windows):
        train = series.slice(*w.train_range)
        test = series.slice(*w.test_range)
        payloads.append((wid, train, test, settings))

    jobs = min(settings.jobs, len(payloads))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_window, *p) for p in payloads]
            by_id = {art.window_id: art for art in (f.result() for f in futures)}
    else:
        by_id = {}
        for p in payloads:
            art = run_window(*p)
            by_id[art.window_id] = art

    ordered = [by_id[wid] for wid in sorted(by_id)]
    rows = [r for art in ordered for r in art.rows]
    detail = [r for art in ordered for r in art.detail_rows]
    report = build_report(rows, detail)
    chained = _chain_equity(ordered, settings.initial_capital)
    return BacktestOutputs(windows, ordered, report, chained)
