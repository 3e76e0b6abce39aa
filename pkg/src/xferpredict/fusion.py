"""Multivariate predictors: align the three streams, fill gaps, regress.

The probe stream is the alignment grid. Each probe tick is paired with the
nearest disk observation, and each transfer is attached to the tick nearest
its start time. Ticks left without a transfer are gaps; they are either
dropped (NoFill) or given a synthetic throughput (LV, Avg) before a
least-squares fit of throughput on probe and/or disk values.
"""

from __future__ import annotations

import enum
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    AlignmentError,
    ConfigurationError,
    DegenerateFitError,
    InputError,
    InsufficientDataError,
)
from .traces import DiskRecord, ProbeRecord, TransferRecord

logger = logging.getLogger(__name__)

DEFAULT_MAX_GAP = 600.0
DEFAULT_AVG_HORIZON = 86400.0
DEFAULT_TRAINING_COUNT = 15

# relative pivot size below which the design matrix counts as rank deficient
RANK_TOL = 1e-10

VARIABLES = ("N", "D")


class FillStrategy(enum.Enum):
    NOFILL = "nofill"
    LV = "lv"
    AVG = "avg"

    @property
    def label(self) -> str:
        return {"nofill": "NoFill", "lv": "LV", "avg": "Avg"}[self.value]

    @classmethod
    def parse(cls, text: str) -> "FillStrategy":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ConfigurationError(f"unknown fill strategy {text!r} (nofill, lv, avg)") from None


def parse_variables(text) -> Tuple[str, ...]:
    """``"N"``, ``"D"``, ``"ND"``, ``"G+N+D"`` or an iterable of names -> ordered tuple."""
    if isinstance(text, str):
        letters = text.upper().replace("G", "").replace("+", "").replace(",", "").replace(" ", "")
        names = tuple(letters)
    else:
        names = tuple(str(v).upper() for v in text)
    if not names or any(v not in VARIABLES for v in names) or len(set(names)) != len(names):
        raise ConfigurationError(f"variables must be a non-empty subset of N, D; got {text!r}")
    return tuple(v for v in VARIABLES if v in names)


# --------------------------------------------------------------------------- matching


@dataclass(frozen=True)
class AlignedTuple:
    tick_time: float
    n: Optional[ProbeRecord]
    d: Optional[DiskRecord]
    g: Optional[float] = None
    g_time: Optional[float] = None


@dataclass
class Alignment:
    """Aligned tuples in tick order plus the number of transfers left unmatched."""

    tuples: List[AlignedTuple]
    unmatched: int = 0

    def __len__(self):
        return len(self.tuples)

    def __iter__(self):
        return iter(self.tuples)

    def __getitem__(self, i):
        return self.tuples[i]


def _nearest_index(grid: np.ndarray, times: np.ndarray, max_gap: float) -> np.ndarray:
    """Index of the nearest grid point for each time (ties go earlier); -1 beyond max_gap."""
    if grid.size == 0:
        return np.full(times.shape, -1, dtype=np.int64)
    right = np.searchsorted(grid, times, side="left")
    left = right - 1
    right_c = np.minimum(right, grid.size - 1)
    left_c = np.maximum(left, 0)
    dl = np.where(left >= 0, times - grid[left_c], np.inf)
    dr = np.where(right < grid.size, grid[right_c] - times, np.inf)
    idx = np.where(dl <= dr, left_c, right_c)
    best = np.minimum(dl, dr)
    return np.where(best <= max_gap, idx, -1)


def _assign_transfers(ticks: np.ndarray, g_times: np.ndarray, max_gap: float) -> np.ndarray:
    """Tick index per transfer, -1 when unmatched.

    Transfers are served in order; each takes its nearest free tick within
    ``max_gap`` (equidistant ticks: the earlier one).
    """
    n_ticks = ticks.size
    taken = bytearray(n_ticks)
    out = np.full(g_times.size, -1, dtype=np.int64)
    starts = np.searchsorted(ticks, g_times, side="left")
    tick_list = ticks.tolist()
    for i, t in enumerate(g_times.tolist()):
        right = int(starts[i])
        left = right - 1
        while True:
            dl = t - tick_list[left] if left >= 0 else np.inf
            dr = tick_list[right] - t if right < n_ticks else np.inf
            if dl <= dr:
                if dl > max_gap:
                    break
                if not taken[left]:
                    taken[left] = 1
                    out[i] = left
                    break
                left -= 1
            else:
                if dr > max_gap:
                    break
                if not taken[right]:
                    taken[right] = 1
                    out[i] = right
                    break
                right += 1
    return out


@dataclass
class _Grid:
    """Array form of an alignment; NaN marks an absent value."""

    tick_time: np.ndarray
    n: np.ndarray
    d: np.ndarray
    g: np.ndarray
    g_time: np.ndarray
    probe_index: np.ndarray
    disk_index: np.ndarray
    unmatched: int


def _align_arrays(pt, pv, dt, dv, gt, gv, max_gap) -> _Grid:
    if pt.size == 0:
        raise AlignmentError("probe stream is empty; no alignment grid")
    di = _nearest_index(dt, pt, max_gap)
    d = np.full(pt.size, np.nan)
    ok = di >= 0
    d[ok] = dv[di[ok]]
    g = np.full(pt.size, np.nan)
    g_time = np.full(pt.size, np.nan)
    assigned = _assign_transfers(pt, gt, max_gap)
    hit = assigned >= 0
    g[assigned[hit]] = gv[hit]
    g_time[assigned[hit]] = gt[hit]
    return _Grid(pt, pv, d, g, g_time, np.arange(pt.size), di, int((~hit).sum()))


def _stream_arrays(g, n, d):
    gt = np.array([r.start_time for r in g], dtype=float)
    gv = np.array([r.bandwidth for r in g], dtype=float)
    pt = np.array([r.timestamp for r in n], dtype=float)
    pv = np.array([r.bandwidth for r in n], dtype=float)
    dt = np.array([r.timestamp for r in d], dtype=float)
    dv = np.array([r.transfer_rate for r in d], dtype=float)
    for name, arr in (("transfer", gt), ("probe", pt), ("disk", dt)):
        if arr.size > 1 and np.any(np.diff(arr) < 0):
            raise InputError(f"{name} stream is not sorted by timestamp")
    return gt, gv, pt, pv, dt, dv


def match_streams(
    g: Sequence[TransferRecord],
    n: Sequence[ProbeRecord],
    d: Sequence[DiskRecord],
    max_gap: float = DEFAULT_MAX_GAP,
) -> Alignment:
    """Build one tuple per probe tick.

    Each tick carries the nearest disk record (within ``max_gap``) and, when a
    transfer was attached to it, that transfer's throughput. Transfers with no
    free tick within ``max_gap`` are counted in ``Alignment.unmatched``.

    Raises:
        AlignmentError: the probe stream is empty.
    """
    gt, gv, pt, pv, dt, dv = _stream_arrays(g, n, d)
    grid = _align_arrays(pt, pv, dt, dv, gt, gv, max_gap)
    if grid.unmatched:
        logger.warning("%d transfer(s) had no probe tick within %gs", grid.unmatched, max_gap)
    tuples = []
    for i in range(pt.size):
        di = grid.disk_index[i]
        gi = grid.g[i]
        tuples.append(
            AlignedTuple(
                tick_time=float(pt[i]),
                n=n[i],
                d=d[di] if di >= 0 else None,
                g=None if np.isnan(gi) else float(gi),
                g_time=None if np.isnan(gi) else float(grid.g_time[i]),
            )
        )
    return Alignment(tuples, grid.unmatched)


# --------------------------------------------------------------------------- filling


@dataclass
class FilledSeries:
    """Complete (n, d, g) rows ready for regression, in tick order.

    ``is_real`` is False on rows whose throughput was synthesized by filling.
    ``d`` (or ``n``) may hold NaN only for a variable that was not requested.
    """

    tick_time: np.ndarray
    n: np.ndarray
    d: np.ndarray
    g: np.ndarray
    is_real: np.ndarray
    strategy: FillStrategy

    def __len__(self):
        return int(self.g.size)

    def triples(self) -> List[Tuple[float, float, float]]:
        return list(zip(self.n.tolist(), self.d.tolist(), self.g.tolist()))


def _fill_values(tick_time, g, strategy: FillStrategy, horizon: float):
    """Return (g_filled, keep_mask)."""
    real = ~np.isnan(g)
    if strategy is FillStrategy.NOFILL:
        return g, real
    rt = tick_time[real]
    rv = g[real]
    gaps = np.flatnonzero(~real)
    out = g.copy()
    keep = real.copy()
    if rt.size == 0 or gaps.size == 0:
        return out, keep
    gap_t = tick_time[gaps]
    hi = np.searchsorted(rt, gap_t, side="left")
    if strategy is FillStrategy.LV:
        ok = hi > 0
        out[gaps[ok]] = rv[hi[ok] - 1]
    else:
        lo = np.searchsorted(rt, gap_t - horizon, side="left")
        count = hi - lo
        ok = count > 0
        csum = np.concatenate(([0.0], np.cumsum(rv)))
        out[gaps[ok]] = (csum[hi[ok]] - csum[lo[ok]]) / count[ok]
    keep[gaps[ok]] = True
    return out, keep


def _fill_grid(grid: _Grid, strategy: FillStrategy, horizon: float, variables=VARIABLES) -> FilledSeries:
    g, keep = _fill_values(grid.tick_time, grid.g, strategy, horizon)
    if "N" in variables:
        keep &= ~np.isnan(grid.n)
    if "D" in variables:
        keep &= ~np.isnan(grid.d)
    return FilledSeries(
        grid.tick_time[keep],
        grid.n[keep],
        grid.d[keep],
        g[keep],
        ~np.isnan(grid.g[keep]),
        strategy,
    )


def _recent(series: FilledSeries, now: float, window: Optional[float]) -> FilledSeries:
    if window is None:
        return series
    keep = series.tick_time >= now - window
    return FilledSeries(
        series.tick_time[keep], series.n[keep], series.d[keep], series.g[keep], series.is_real[keep], series.strategy
    )


def fill(
    tuples,
    strategy,
    avg_horizon: float = DEFAULT_AVG_HORIZON,
    variables: Sequence[str] = (),
) -> FilledSeries:
    """Resolve gap tuples.

    NoFill drops them. LV gives each gap the most recent real throughput. Avg
    gives it the mean of real throughputs in ``[tick - avg_horizon, tick)``.
    Gaps with nothing to fill from are dropped. Rows lacking a value for any
    of ``variables`` are dropped as well.
    """
    strategy = strategy if isinstance(strategy, FillStrategy) else FillStrategy.parse(strategy)
    tuples = list(tuples)
    nan = float("nan")
    grid = _Grid(
        tick_time=np.array([t.tick_time for t in tuples], dtype=float),
        n=np.array([t.n.bandwidth if t.n is not None else nan for t in tuples], dtype=float),
        d=np.array([t.d.transfer_rate if t.d is not None else nan for t in tuples], dtype=float),
        g=np.array([t.g if t.g is not None else nan for t in tuples], dtype=float),
        g_time=np.array([t.g_time if t.g_time is not None else nan for t in tuples], dtype=float),
        probe_index=np.arange(len(tuples)),
        disk_index=np.zeros(len(tuples), dtype=np.int64),
        unmatched=0,
    )
    if grid.tick_time.size > 1 and np.any(np.diff(grid.tick_time) <= 0):
        raise InputError("tuples must be in strictly increasing tick order")
    variables = parse_variables(variables) if variables else ()
    out = _fill_grid(grid, strategy, avg_horizon, variables)
    if strategy is not FillStrategy.NOFILL and not np.any(~np.isnan(grid.g)) and len(tuples):
        logger.warning("no real throughput values to fill from; series is empty")
    return out


# --------------------------------------------------------------------------- regression


@dataclass(frozen=True)
class RegressionModel:
    """``G' = a + sum_j b_j * term_j``.

    Terms run over ``variables`` in order, each expanded to powers 1..degree:
    for variables (N, D) and degree 2 the terms are N, N^2, D, D^2.
    """

    variables: Tuple[str, ...]
    degree: int
    intercept: float
    coefficients: Tuple[float, ...]
    fit_size: int = 0

    def __post_init__(self):
        if len(self.coefficients) != self.degree * len(self.variables):
            raise InputError(
                f"expected {self.degree * len(self.variables)} coefficients, got {len(self.coefficients)}"
            )


def design_matrix(columns: Dict[str, np.ndarray], variables: Sequence[str], degree: int) -> np.ndarray:
    length = len(next(iter(columns.values())))
    cols = [np.ones(length)]
    for var in variables:
        x = np.asarray(columns[var], dtype=float)
        for p in range(1, degree + 1):
            cols.append(x**p)
    return np.column_stack(cols)


def _check_degree(degree):
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= 4:
        raise ConfigurationError(f"degree must be an integer in 1..4, got {degree!r}")


def least_squares(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve ``min ||X beta - y||`` by Householder QR on column-scaled X.

    Raises:
        DegenerateFitError: X is numerically rank deficient.
    """
    scale = np.abs(X).max(axis=0)
    if np.any(scale == 0):
        raise DegenerateFitError("design matrix has an all-zero column")
    Xs = X / scale
    q, r = np.linalg.qr(Xs, mode="reduced")
    diag = np.abs(np.diag(r))
    if diag.min() <= RANK_TOL * diag.max():
        raise DegenerateFitError("design matrix is rank deficient")
    beta = solve_triangular(r, q.T @ y, lower=False)
    beta = beta / scale
    if not np.all(np.isfinite(beta)):
        raise DegenerateFitError("least squares produced non-finite coefficients")
    return beta


def fit_regression(series: FilledSeries, variables, degree: int = 1) -> RegressionModel:
    """Least-squares fit of throughput on polynomial terms of the chosen variables.

    Raises:
        InsufficientDataError: fewer rows than model parameters.
        DegenerateFitError: rank-deficient design (e.g. constant probe values).
    """
    variables = parse_variables(variables)
    _check_degree(degree)
    columns = {"N": series.n, "D": series.d}
    for var in variables:
        if np.any(np.isnan(columns[var])):
            raise InputError(f"series has missing {var} values")
    n_params = 1 + degree * len(variables)
    if len(series) < n_params:
        raise InsufficientDataError(
            f"{len(series)} rows cannot determine {n_params} regression parameters"
        )
    X = design_matrix(columns, variables, degree)
    beta = least_squares(X, np.asarray(series.g, dtype=float))
    return RegressionModel(
        variables=variables,
        degree=int(degree),
        intercept=float(beta[0]),
        coefficients=tuple(float(b) for b in beta[1:]),
        fit_size=len(series),
    )


def predict_regression(model: RegressionModel, n: Optional[float] = None, d: Optional[float] = None) -> float:
    values = {"N": n, "D": d}
    total = model.intercept
    j = 0
    for var in model.variables:
        x = values[var]
        if x is None:
            raise InputError(f"model needs a value for {var}")
        x = float(x)
        for p in range(1, model.degree + 1):
            total += model.coefficients[j] * x**p
            j += 1
    return max(0.0, total)


# --------------------------------------------------------------------------- walk-forward


@dataclass(frozen=True)
class FusionConfig:
    variables: Tuple[str, ...] = ("N",)
    fill: FillStrategy = FillStrategy.AVG
    degree: int = 1
    max_gap: float = DEFAULT_MAX_GAP
    avg_horizon: float = DEFAULT_AVG_HORIZON
    refit_every: int = 1
    fit_window: Optional[float] = None  # seconds of ticks before the prediction; None = all

    def __post_init__(self):
        object.__setattr__(self, "variables", parse_variables(self.variables))
        if not isinstance(self.fill, FillStrategy):
            object.__setattr__(self, "fill", FillStrategy.parse(self.fill))
        _check_degree(self.degree)
        if not self.max_gap > 0:
            raise ConfigurationError("max_gap must be positive")
        if not self.avg_horizon > 0:
            raise ConfigurationError("avg_horizon must be positive")
        if self.refit_every < 1:
            raise ConfigurationError("refit_every must be >= 1")
        if self.fit_window is not None and not self.fit_window > 0:
            raise ConfigurationError("fit_window must be positive")

    @property
    def name(self) -> str:
        base = "G+" + "+".join(self.variables) + " " + self.fill.label
        return base if self.degree == 1 else f"{base} deg{self.degree}"

    @classmethod
    def parse(cls, text: str, **kwargs) -> "FusionConfig":
        """``"N:avg"``, ``"ND:lv:2"`` or a display name such as ``"G+N+D Avg"``."""
        text = text.strip()
        if ":" in text:
            parts = text.split(":")
        else:
            parts = text.split()
        if len(parts) < 2 or len(parts) > 3:
            raise ConfigurationError(f"cannot parse fusion config {text!r}")
        degree = 1
        if len(parts) == 3:
            raw = parts[2].lower().removeprefix("deg")
            try:
                degree = int(raw)
            except ValueError:
                raise ConfigurationError(f"bad degree in fusion config {text!r}") from None
        return cls(parse_variables(parts[0]), FillStrategy.parse(parts[1]), degree, **kwargs)

    def __str__(self):
        return self.name


STANDARD_FUSION_CONFIGS = tuple(
    FusionConfig(v, f) for v in (("N",), ("D",), ("N", "D")) for f in FillStrategy
)


def forecast_fused(
    g: Sequence[TransferRecord],
    n: Sequence[ProbeRecord],
    d: Sequence[DiskRecord],
    config: FusionConfig,
    now: float,
) -> float:
    """Fit on every record timestamped before ``now`` and forecast at the latest observations."""
    gt, gv, pt, pv, dt, dv = _stream_arrays(g, n, d)
    gk = int(np.searchsorted(gt, now, side="left"))
    pk = int(np.searchsorted(pt, now, side="left"))
    dk = int(np.searchsorted(dt, now, side="left"))
    last_n = float(pv[pk - 1]) if pk else None
    last_d = float(dv[dk - 1]) if dk else None
    if ("N" in config.variables and last_n is None) or ("D" in config.variables and last_d is None):
        raise InsufficientDataError("no observation precedes the forecast time")
    grid = _align_arrays(pt[:pk], pv[:pk], dt[:dk], dv[:dk], gt[:gk], gv[:gk], config.max_gap)
    series = _recent(_fill_grid(grid, config.fill, config.avg_horizon, config.variables), now, config.fit_window)
    model = fit_regression(series, config.variables, config.degree)
    return predict_regression(model, last_n, last_d)


class FusedPrediction(NamedTuple):
    transfer: TransferRecord
    predicted: float
    measured: float


@dataclass
class WalkForwardResult:
    config: FusionConfig
    predictions: List[FusedPrediction] = field(default_factory=list)
    skipped: Counter = field(default_factory=Counter)

    @property
    def skip_count(self) -> int:
        return sum(self.skipped.values())


def walk_forward_fuse(
    g: Sequence[TransferRecord],
    n: Sequence[ProbeRecord],
    d: Sequence[DiskRecord],
    variables=("N",),
    strategy=FillStrategy.AVG,
    degree: int = 1,
    refit_every: int = 1,
    training_count: int = DEFAULT_TRAINING_COUNT,
    max_gap: float = DEFAULT_MAX_GAP,
    avg_horizon: float = DEFAULT_AVG_HORIZON,
    fit_window: Optional[float] = None,
) -> WalkForwardResult:
    """Predict every transfer after the first ``training_count`` from strictly earlier data.

    For transfer ``k`` only records with timestamps before its start are used:
    they are aligned, filled and fitted, and the model is evaluated at the
    latest preceding probe (and disk) observation. Transfers whose model
    cannot be built are skipped and counted by reason.
    """
    config = FusionConfig(variables, strategy, degree, max_gap, avg_horizon, refit_every, fit_window)
    return walk_forward_many(g, n, d, [config], training_count)[config]


def walk_forward_many(
    g: Sequence[TransferRecord],
    n: Sequence[ProbeRecord],
    d: Sequence[DiskRecord],
    configs: Sequence[FusionConfig],
    training_count: int = DEFAULT_TRAINING_COUNT,
    query_indices: Optional[Sequence[int]] = None,
) -> Dict[FusionConfig, WalkForwardResult]:
    """Run several fusion configs over one trace, sharing the per-transfer alignment.

    ``query_indices`` restricts which transfers (by index into ``g``) are
    predicted; by default every transfer from ``training_count`` on.
    """
    if training_count < 0:
        raise ConfigurationError("training_count must be >= 0")
    gt, gv, pt, pv, dt, dv = _stream_arrays(g, n, d)
    results = {c: WalkForwardResult(c) for c in configs}
    models: Dict[FusionConfig, Tuple[int, RegressionModel]] = {}
    if query_indices is None:
        query_indices = range(training_count, len(g))
    by_gap: Dict[float, List[FusionConfig]] = {}
    for c in configs:
        by_gap.setdefault(c.max_gap, []).append(c)

    for k in query_indices:
        t_start = gt[k]
        gk = int(np.searchsorted(gt[:k], t_start, side="left"))
        pk = int(np.searchsorted(pt, t_start, side="left"))
        dk = int(np.searchsorted(dt, t_start, side="left"))
        last_n = float(pv[pk - 1]) if pk else None
        last_d = float(dv[dk - 1]) if dk else None
        for max_gap, group in by_gap.items():
            grid = None
            for cfg in group:
                res = results[cfg]
                if ("N" in cfg.variables and last_n is None) or ("D" in cfg.variables and last_d is None):
                    res.skipped["no_preceding_observation"] += 1
                    continue
                cached = models.get(cfg)
                if cached is not None and k - cached[0] < cfg.refit_every:
                    model = cached[1]
                else:
                    try:
                        if grid is None:
                            grid = _align_arrays(pt[:pk], pv[:pk], dt[:dk], dv[:dk], gt[:gk], gv[:gk], max_gap)
                        series = _fill_grid(grid, cfg.fill, cfg.avg_horizon, cfg.variables)
                        series = _recent(series, t_start, cfg.fit_window)
                        model = fit_regression(series, cfg.variables, cfg.degree)
                    except AlignmentError:
                        res.skipped["no_probe_grid"] += 1
                        continue
                    except InsufficientDataError:
                        res.skipped["insufficient_data"] += 1
                        continue
                    except DegenerateFitError:
                        res.skipped["degenerate_fit"] += 1
                        continue
                    models[cfg] = (k, model)
                pred = predict_regression(model, last_n, last_d)
                res.predictions.append(FusedPrediction(g[k], pred, float(gv[k])))
    for res in results.values():
        if res.skip_count:
            logger.info("%s: skipped %d transfer(s): %s", res.config.name, res.skip_count, dict(res.skipped))
    return results


__all__ = [
    "AlignedTuple",
    "Alignment",
    "FillStrategy",
    "FilledSeries",
    "FusionConfig",
    "FusedPrediction",
    "RegressionModel",
    "STANDARD_FUSION_CONFIGS",
    "WalkForwardResult",
    "design_matrix",
    "fill",
    "forecast_fused",
    "fit_regression",
    "least_squares",
    "match_streams",
    "parse_variables",
    "predict_regression",
    "walk_forward_fuse",
    "walk_forward_many",
]
