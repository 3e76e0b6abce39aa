"""Accuracy metrics and the walk-forward comparison of predictors.

Metrics
    correlation / rank_correlation with Fisher-z confidence limits, normalized
    percentage error, its normal-approximation confidence half-width, the
    (prediction, error, confidence) accuracy triplet, and best/worst rankings.

Driver
    :func:`evaluate_suite` walks forward over a trace after a training prefix,
    predicts each transfer with every univariate spec and fusion config, and
    collects an :class:`EvaluationReport`.
"""

from __future__ import annotations

import io
import math
from collections import Counter
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateFitError,
    InputError,
    InsufficientDataError,
    XferPredictError,
)
from .fusion import DEFAULT_TRAINING_COUNT, FusionConfig, forecast_fused, walk_forward_many
from .traces import SizeClass, TraceSet, TransferRecord, classify_size
from .univariate import History, PredictorSpec, run_predictor

DEFAULT_LEVEL = 0.95


def z_value(level: float) -> float:
    """Two-sided standard-normal quantile for a confidence level in [0, 1)."""
    if not 0 <= level < 1:
        raise InputError(f"confidence level must be in [0, 1), got {level}")
    if level == 0:
        return 0.0
    return NormalDist().inv_cdf(0.5 + level / 2)


def _pair(x, y) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise InputError(f"series lengths differ ({x.size} vs {y.size})")
    return x, y


# --------------------------------------------------------------------------- correlation


def correlation(x, y) -> float:
    """Pearson product-moment correlation.

    Computed from centered sums, which is algebraically the raw-sum form
    ``(Sxy - Sx Sy / n) / sqrt(Sxx - Sx^2 / n) / sqrt(Syy - Sy^2 / n)`` but
    without its cancellation.
    """
    x, y = _pair(x, y)
    if x.size < 2:
        raise InputError("correlation needs at least two points")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(np.dot(xc, xc))
    syy = float(np.dot(yc, yc))
    if sxx == 0 or syy == 0:
        raise DegenerateFitError("correlation undefined for a constant series")
    # one rounding in the denominator keeps identical or mirrored series at exactly +-1
    denom = math.sqrt(sxx * syy)
    if not math.isfinite(denom) or denom == 0:
        denom = math.sqrt(sxx) * math.sqrt(syy)
    r = float(np.dot(xc, yc)) / denom
    return min(1.0, max(-1.0, r))


def rank_transform(values) -> np.ndarray:
    """1-based ascending ranks; tied values share the mean of their positions."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InputError("cannot rank an empty series")
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(v.size, dtype=float)
    sorted_v = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def rank_correlation(x, y) -> float:
    x, y = _pair(x, y)
    if x.size < 2:
        raise InputError("correlation needs at least two points")
    return correlation(rank_transform(x), rank_transform(y))


def correlation_confidence(coefficient: float, n: int, level: float = DEFAULT_LEVEL) -> Tuple[float, float]:
    """Fisher z interval ``tanh(atanh(r) -/+ z / sqrt(n - 3))``."""
    if n < 4:
        raise InsufficientDataError(f"confidence limits need n >= 4, got {n}")
    if not -1 <= coefficient <= 1:
        raise InputError(f"correlation must lie in [-1, 1], got {coefficient}")
    if abs(coefficient) == 1:
        return (coefficient, coefficient)
    z = z_value(level)
    if z == 0:
        return (coefficient, coefficient)
    center = math.atanh(coefficient)
    half = z / math.sqrt(n - 3)
    return (max(-1.0, math.tanh(center - half)), min(1.0, math.tanh(center + half)))


@dataclass(frozen=True)
class CorrelationResult:
    coefficient: float
    n: int
    ci_lower: float
    ci_upper: float
    level: float


def correlate(x, y, level: float = DEFAULT_LEVEL, rank: bool = True) -> CorrelationResult:
    r = rank_correlation(x, y) if rank else correlation(x, y)
    lo, hi = correlation_confidence(r, len(x), level)
    return CorrelationResult(r, len(x), lo, hi, level)


# --------------------------------------------------------------------------- prediction error


def _checked_errors(measured, predicted) -> Tuple[np.ndarray, float]:
    m, p = _pair(measured, predicted)
    if m.size == 0:
        raise InsufficientDataError("no predictions to score")
    mean = float(m.mean())
    if not mean > 0:
        raise DegenerateFitError("mean measured throughput must be positive")
    return np.abs(m - p), mean


def normalized_error(measured, predicted) -> float:
    """``sum |measured - predicted| / (size * mean measured) * 100``."""
    abs_err, mean = _checked_errors(measured, predicted)
    return float(math.fsum(abs_err) / (abs_err.size * mean) * 100)


def per_prediction_errors(measured, predicted) -> np.ndarray:
    abs_err, mean = _checked_errors(measured, predicted)
    return abs_err / mean * 100


def error_confidence(measured, predicted, level: float = DEFAULT_LEVEL) -> float:
    """Half-width (percentage points) of the normal-approximation interval on the error."""
    e = per_prediction_errors(measured, predicted)
    if e.size < 2:
        raise InsufficientDataError("confidence limits need at least two predictions")
    return float(z_value(level) * np.std(e, ddof=1) / math.sqrt(e.size))


@dataclass(frozen=True)
class ErrorSummary:
    normalized_error_pct: float
    mean_measured: float
    prediction_count: int
    ci_half_width_pct: Optional[float]  # None with a single prediction
    level: float = DEFAULT_LEVEL


def error_summary(measured, predicted, level: float = DEFAULT_LEVEL) -> ErrorSummary:
    err = normalized_error(measured, predicted)
    try:
        ci = error_confidence(measured, predicted, level)
    except InsufficientDataError:
        ci = None
    return ErrorSummary(err, float(np.mean(measured)), len(measured), ci, level)


@dataclass(frozen=True)
class AccuracyTriplet:
    """(predicted KB/s, average past % error, confidence limit %).

    ``confidence_limit_pct`` is None when the history holds a single prediction.
    """

    predicted_throughput: float
    error_pct: float
    confidence_limit_pct: Optional[float]


def accuracy_triplet(next_prediction: float, measured_history, predicted_history, level: float = DEFAULT_LEVEL) -> AccuracyTriplet:
    summary = error_summary(measured_history, predicted_history, level)
    return AccuracyTriplet(float(next_prediction), summary.normalized_error_pct, summary.ci_half_width_pct)


# --------------------------------------------------------------------------- ranking


@dataclass
class RankingSummary:
    names: List[str]
    best: np.ndarray  # fractional counts; ties share credit
    worst: np.ndarray
    transfers: int

    @property
    def best_pct(self) -> np.ndarray:
        return self.best / self.transfers * 100 if self.transfers else np.zeros_like(self.best)

    @property
    def worst_pct(self) -> np.ndarray:
        return self.worst / self.transfers * 100 if self.transfers else np.zeros_like(self.worst)

    def as_dict(self) -> Dict[str, Tuple[float, float]]:
        return {n: (float(b), float(w)) for n, b, w in zip(self.names, self.best_pct, self.worst_pct)}


def rank_predictors(errors, names: Optional[Sequence[str]] = None) -> RankingSummary:
    """Credit the smallest and largest absolute error of each transfer (row).

    NaN entries (predictor produced nothing for that transfer) are ignored;
    rows with fewer than two finite entries are skipped. Ties split one unit
    of credit evenly.
    """
    e = np.asarray(errors, dtype=float)
    if e.ndim != 2:
        raise InputError("errors must be a transfers x predictors matrix")
    names = list(names) if names is not None else [str(i) for i in range(e.shape[1])]
    if len(names) != e.shape[1]:
        raise InputError("one name per predictor column is required")
    best = np.zeros(e.shape[1])
    worst = np.zeros(e.shape[1])
    rows = 0
    for row in e:
        ok = np.isfinite(row)
        if ok.sum() < 2:
            continue
        rows += 1
        vals = np.where(ok, row, np.nan)
        lo = np.nanmin(vals)
        hi = np.nanmax(vals)
        is_lo = ok & (row == lo)
        is_hi = ok & (row == hi)
        best[is_lo] += 1 / is_lo.sum()
        worst[is_hi] += 1 / is_hi.sum()
    return RankingSummary(names, best, worst, rows)


# --------------------------------------------------------------------------- suite


@dataclass
class PredictionLog:
    """Walk-forward output of one predictor: (transfer index, predicted, measured) rows."""

    name: str
    kind: str
    indices: List[int] = field(default_factory=list)
    predicted: List[float] = field(default_factory=list)
    measured: List[float] = field(default_factory=list)
    classes: List[SizeClass] = field(default_factory=list)
    skipped: Counter = field(default_factory=Counter)

    def add(self, index, predicted, measured, size_class):
        self.indices.append(index)
        self.predicted.append(float(predicted))
        self.measured.append(float(measured))
        self.classes.append(size_class)


@dataclass
class PredictorResult:
    name: str
    kind: str  # "univariate" or "fusion"
    headline_error_pct: Optional[float]
    overall: Optional[ErrorSummary]
    per_class: Dict[SizeClass, ErrorSummary]
    skipped: Dict[str, int]
    triplet: Optional[AccuracyTriplet]
    error: Optional[str] = None

    @property
    def prediction_count(self) -> int:
        return self.overall.prediction_count if self.overall else 0


@dataclass
class EvaluationReport:
    rows: List[PredictorResult]
    ranking: Optional[RankingSummary]
    level: float
    training_count: int
    by_class: bool
    transfers: int
    query_size: Optional[int]
    logs: Dict[str, PredictionLog] = field(default_factory=dict, repr=False)

    def row(self, name: str) -> PredictorResult:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def error(self, name: str) -> Optional[float]:
        return self.row(name).headline_error_pct

    def to_text(self) -> str:
        return format_report(self)


def _univariate_log(spec: PredictorSpec, transfers: Sequence[TransferRecord], indices, training_count) -> PredictionLog:
    log = PredictionLog(spec.name, "univariate")
    history = History.from_records(transfers)
    times = history.times
    for k in range(training_count, len(transfers)):
        rec = transfers[k]
        gk = int(np.searchsorted(times[:k], rec.start_time, side="left"))
        try:
            pred = run_predictor(spec, history.prefix(gk), rec.start_time, rec.file_size)
        except XferPredictError as exc:
            log.skipped[type(exc).__name__] += 1
            continue
        log.add(indices[k], pred, rec.bandwidth, classify_size(rec.file_size))
    return log


def _fusion_logs(configs, transfers, probes, disks, indices, training_count) -> Dict[FusionConfig, PredictionLog]:
    out = {c: PredictionLog(c.name, "fusion") for c in configs}
    if not configs or len(transfers) <= training_count:
        return out
    results = walk_forward_many(transfers, probes, disks, configs, training_count)
    pos = {id(r): i for i, r in enumerate(transfers)}
    for cfg, res in results.items():
        log = out[cfg]
        for p in res.predictions:
            log.add(indices[pos[id(p.transfer)]], p.predicted, p.measured, classify_size(p.transfer.file_size))
        log.skipped.update(res.skipped)
    return out


def _merge(into: PredictionLog, other: PredictionLog):
    for i, p, m, c in zip(other.indices, other.predicted, other.measured, other.classes):
        into.add(i, p, m, c)
    into.skipped.update(other.skipped)


def evaluate_suite(
    traces: TraceSet,
    predictor_specs: Sequence[PredictorSpec] = (),
    fusion_configs: Sequence[FusionConfig] = (),
    training_count: int = DEFAULT_TRAINING_COUNT,
    by_class: bool = False,
    level: float = DEFAULT_LEVEL,
    query_size: Optional[int] = None,
) -> EvaluationReport:
    """Walk-forward comparison of univariate specs and fusion configs.

    Each transfer after the first ``training_count`` is predicted from strictly
    earlier data. With ``by_class`` the walk runs separately inside each size
    class (own training prefix) and a predictor's headline error is the
    unweighted mean of its per-class errors; otherwise it is the error over
    all predictions.

    Failures of a single predictor are recorded on its row and never abort
    the suite.
    """
    transfers = list(traces.transfers)
    specs = list(predictor_specs)
    configs = list(fusion_configs)
    names = [s.name for s in specs] + [c.name for c in configs]
    if len(set(names)) != len(names):
        raise InputError("predictor names must be unique")

    if by_class:
        groups = []
        for cls in SizeClass:
            idx = [i for i, r in enumerate(transfers) if cls.contains(r.file_size)]
            if idx:
                groups.append(idx)
    else:
        groups = [list(range(len(transfers)))]

    logs: Dict[str, PredictionLog] = {}
    for s in specs:
        logs[s.name] = PredictionLog(s.name, "univariate")
    for c in configs:
        logs[c.name] = PredictionLog(c.name, "fusion")

    for idx in groups:
        sub = [transfers[i] for i in idx]
        for s in specs:
            _merge(logs[s.name], _univariate_log(s, sub, idx, training_count))
        for cfg, log in _fusion_logs(configs, sub, traces.probes, traces.disks, idx, training_count).items():
            _merge(logs[cfg.name], log)

    if query_size is None and transfers:
        query_size = transfers[-1].file_size
    now = traces.end_time() + 1 if (transfers or traces.probes or traces.disks) else None

    rows = []
    for name in names:
        log = logs[name]
        spec = next((s for s in specs if s.name == name), None)
        cfg = next((c for c in configs if c.name == name), None)
        rows.append(_summarize(log, spec, cfg, traces, now, query_size, by_class, level))

    ranking = _ranking(names, logs)
    return EvaluationReport(rows, ranking, level, training_count, by_class, len(transfers), query_size, logs)


def _summarize(log, spec, cfg, traces, now, query_size, by_class, level) -> PredictorResult:
    per_class = {}
    for cls in SizeClass:
        sel = [i for i, c in enumerate(log.classes) if c is cls]
        if sel:
            try:
                per_class[cls] = error_summary(
                    [log.measured[i] for i in sel], [log.predicted[i] for i in sel], level
                )
            except XferPredictError:
                pass
    overall = None
    problem = None
    if log.predicted:
        try:
            overall = error_summary(log.measured, log.predicted, level)
        except XferPredictError as exc:
            problem = str(exc)
    else:
        problem = "no predictions issued"
    if by_class:
        headline = float(np.mean([s.normalized_error_pct for s in per_class.values()])) if per_class else None
    else:
        headline = overall.normalized_error_pct if overall else None

    triplet = None
    if overall is not None and now is not None:
        try:
            nxt = _next_forecast(spec, cfg, traces, now, query_size, by_class)
            triplet = AccuracyTriplet(nxt, overall.normalized_error_pct, overall.ci_half_width_pct)
        except XferPredictError:
            triplet = None
    return PredictorResult(log.name, log.kind, headline, overall, per_class, dict(log.skipped), triplet, problem)


def _next_forecast(spec, cfg, traces: TraceSet, now, query_size, by_class) -> float:
    transfers = traces.transfers
    if by_class and query_size is not None:
        cls = classify_size(query_size)
        transfers = [r for r in transfers if cls.contains(r.file_size)]
    if spec is not None:
        return run_predictor(spec, History.from_records(transfers), now, query_size)
    return forecast_fused(transfers, traces.probes, traces.disks, cfg, now)


def _ranking(names, logs) -> Optional[RankingSummary]:
    if len(names) < 2:
        return None
    all_idx = sorted({i for log in logs.values() for i in log.indices})
    if not all_idx:
        return None
    row_of = {i: r for r, i in enumerate(all_idx)}
    matrix = np.full((len(all_idx), len(names)), np.nan)
    for j, name in enumerate(names):
        log = logs[name]
        for i, p, m in zip(log.indices, log.predicted, log.measured):
            matrix[row_of[i], j] = abs(m - p)
    return rank_predictors(matrix, names)


# --------------------------------------------------------------------------- report text


def _f(x, digits=4) -> str:
    return "NA" if x is None else f"{x:.{digits}f}"


def format_report(report: EvaluationReport) -> str:
    """Tab-delimited report: an error table, a ranking table, then key=value lines."""
    out = io.StringIO()
    out.write("# throughput predictor evaluation\n")
    out.write(
        f"# transfers={report.transfers} training_count={report.training_count} "
        f"by_class={str(report.by_class).lower()} level={report.level:g}\n"
    )
    out.write("# error_ci=normal approximation over per-prediction normalized errors\n")
    out.write("# headline=" + ("mean of per-class errors" if report.by_class else "error over all predictions") + "\n")
    out.write("\n[errors]\n")
    classes = list(SizeClass)
    out.write("\t".join(["predictor", "kind", "error_pct", "ci_half_width_pct", "predictions", "skipped"] + [c.label for c in classes]) + "\n")
    for r in report.rows:
        ci = r.overall.ci_half_width_pct if r.overall else None
        cols = [
            r.name,
            r.kind,
            _f(r.headline_error_pct),
            _f(ci),
            str(r.prediction_count),
            str(sum(r.skipped.values())),
        ]
        cols += [_f(r.per_class[c].normalized_error_pct) if c in r.per_class else "NA" for c in classes]
        out.write("\t".join(cols) + "\n")
    if report.ranking is not None:
        out.write("\n[ranking]\n")
        out.write("predictor\tbest_pct\tworst_pct\n")
        for name, b, w in zip(report.ranking.names, report.ranking.best_pct, report.ranking.worst_pct):
            out.write(f"{name}\t{b:.4f}\t{w:.4f}\n")
    out.write("\n[details]\n")
    out.write(f"query_size={report.query_size if report.query_size is not None else 'NA'}\n")
    for r in report.rows:
        key = r.name.replace(" ", "_")
        if r.triplet is not None:
            t = r.triplet
            out.write(f"triplet.{key}={_f(t.predicted_throughput)},{_f(t.error_pct)},{_f(t.confidence_limit_pct)}\n")
        else:
            out.write(f"triplet.{key}=NA\n")
        for reason, count in sorted(r.skipped.items()):
            out.write(f"skipped.{key}.{reason}={count}\n")
        if r.error:
            out.write(f"error.{key}={r.error}\n")
    return out.getvalue()
