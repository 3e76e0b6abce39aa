"""Log-only throughput predictors: means, medians, last value and lag-1 AR.

Every predictor works on a :class:`History` of past transfers (timestamp,
throughput in KB/s, optionally file size) and a prediction time ``now``.
:data:`CATALOG` holds the fifteen predictors of the classic catalog, addressable
by their short names (``AVG25``, ``MED5``, ``AR10d`` ...); a ``:classed``
suffix restricts the history to transfers in the query's size class.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, DegenerateFitError, InputError, InsufficientHistoryError
from .traces import SizeClass, TransferRecord, classify_size

HOUR = 3600
DAY = 86400


class Family(enum.Enum):
    MEAN = "Mean"
    MEDIAN = "Median"
    LAST_VALUE = "LastValue"
    AUTOREGRESSIVE = "AutoRegressive"


@dataclass(frozen=True)
class All:
    pass


@dataclass(frozen=True)
class LastK:
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ConfigurationError(f"LastK window needs count >= 1, got {self.count}")


@dataclass(frozen=True)
class LastDuration:
    seconds: float

    def __post_init__(self):
        if not self.seconds > 0:
            raise ConfigurationError(f"LastDuration window needs seconds > 0, got {self.seconds}")


Window = Union[All, LastK, LastDuration]


class History:
    """Past transfers ordered by timestamp.

    Stored as parallel numpy arrays; ``sizes`` is needed only for class filtering.
    """

    __slots__ = ("times", "values", "sizes")

    def __init__(self, times, values, sizes=None):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.sizes = None if sizes is None else np.asarray(sizes, dtype=np.int64)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise InputError("history times and values must be 1-d and equally long")
        if self.sizes is not None and self.sizes.shape != self.times.shape:
            raise InputError("history sizes must match times")
        if self.times.size > 1 and np.any(np.diff(self.times) < 0):
            raise InputError("history timestamps must be nondecreasing")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise InputError("history throughputs must be finite and nonnegative")

    @classmethod
    def from_pairs(cls, pairs: Sequence[Tuple[float, float]]) -> "History":
        if not pairs:
            return cls([], [])
        t, v = zip(*pairs)
        return cls(t, v)

    @classmethod
    def from_values(cls, values: Sequence[float], spacing: float = 1.0) -> "History":
        """Equally spaced history ending at ``(len-1) * spacing``; handy for tests."""
        return cls(np.arange(len(values), dtype=float) * spacing, values)

    @classmethod
    def from_records(cls, records: Sequence[TransferRecord]) -> "History":
        return cls(
            [r.start_time for r in records],
            [r.bandwidth for r in records],
            [r.file_size for r in records],
        )

    def __len__(self) -> int:
        return int(self.values.size)

    def prefix(self, k: int) -> "History":
        sizes = None if self.sizes is None else self.sizes[:k]
        return History._raw(self.times[:k], self.values[:k], sizes)

    def select(self, mask) -> "History":
        sizes = None if self.sizes is None else self.sizes[mask]
        return History._raw(self.times[mask], self.values[mask], sizes)

    def in_class(self, size_class: SizeClass) -> "History":
        if self.sizes is None:
            raise InputError("class filtering needs file sizes in the history")
        lo, hi = size_class.lower, size_class.upper
        mask = self.sizes >= lo
        if hi is not None:
            mask &= self.sizes < hi
        return self.select(mask)

    @classmethod
    def _raw(cls, times, values, sizes):
        h = cls.__new__(cls)
        h.times, h.values, h.sizes = times, values, sizes
        return h


def window_values(history: History, window: Window, now: Optional[float] = None) -> np.ndarray:
    """Throughputs inside ``window``; a LastK larger than the history takes it all."""
    if isinstance(window, All):
        return history.values
    if isinstance(window, LastK):
        return history.values[-window.count :]
    if isinstance(window, LastDuration):
        if now is None:
            raise InputError("temporal windows need a prediction time")
        lo = np.searchsorted(history.times, now - window.seconds, side="left")
        hi = np.searchsorted(history.times, now, side="right")
        return history.values[lo:hi]
    raise ConfigurationError(f"unknown window {window!r}")


def _nonempty(values: np.ndarray, what: str) -> np.ndarray:
    if values.size == 0:
        raise InsufficientHistoryError(f"no history inside the {what} window")
    return values


def predict_mean(history: History, window: Window = All(), now: Optional[float] = None) -> float:
    values = _nonempty(window_values(history, window, now), "mean")
    return float(math.fsum(values) / values.size)


def median_of(values) -> float:
    """Median by the order-statistic rule: middle element, or half of each of the two middles."""
    ordered = np.sort(np.asarray(values, dtype=float))
    t = ordered.size
    if t % 2:
        return float(ordered[(t + 1) // 2 - 1])
    return float(ordered[t // 2 - 1] / 2 + ordered[t // 2] / 2)


def predict_median(history: History, window: Window = All(), now: Optional[float] = None) -> float:
    if isinstance(window, LastDuration):
        raise ConfigurationError("median predictors take only All or LastK windows")
    return median_of(_nonempty(window_values(history, window, now), "median"))


def predict_last_value(history: History) -> float:
    if len(history) == 0:
        raise InsufficientHistoryError("empty history")
    return float(history.values[-1])


@dataclass(frozen=True)
class ARCoefficients:
    """Lag-1 model ``next = a + b * last``."""

    a: float
    b: float


def fit_ar(history: History, window: Window = All(), now: Optional[float] = None) -> ARCoefficients:
    """Least-squares fit of ``G_i = a + b G_{i-1}`` over consecutive in-window pairs.

    Raises:
        InsufficientHistoryError: fewer than two lag pairs in the window.
        DegenerateFitError: predecessor values have zero variance.
    """
    if isinstance(window, LastK):
        raise ConfigurationError("autoregressive predictors take only All or LastDuration windows")
    values = window_values(history, window, now)
    if values.size < 3:
        raise InsufficientHistoryError(f"AR fit needs at least 3 values, window holds {values.size}")
    x = values[:-1]
    y = values[1:]
    if np.ptp(x) == 0:
        raise DegenerateFitError("AR predecessor values are constant")
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    b = float(np.dot(xc, y - y.mean())) / sxx
    a = float(y.mean() - b * x.mean())
    if not (math.isfinite(a) and math.isfinite(b)):
        raise DegenerateFitError("AR fit produced non-finite coefficients")
    return ARCoefficients(a, b)


def predict_ar(coeffs: ARCoefficients, last: float) -> float:
    return max(0.0, coeffs.a + coeffs.b * last)


# --------------------------------------------------------------------------- catalog


@dataclass(frozen=True)
class PredictorSpec:
    family: Family
    window: Window = All()
    class_filter: bool = False

    def __post_init__(self):
        legal = _LEGAL_WINDOWS[self.family]
        if not isinstance(self.window, legal):
            raise ConfigurationError(
                f"{self.family.value} does not accept window {self.window!r}"
            )
        if self.family is Family.LAST_VALUE and self.window != LastK(1):
            raise ConfigurationError("LastValue requires window LastK(1)")

    @property
    def name(self) -> str:
        base = _spec_name(self.family, self.window)
        return base + (":classed" if self.class_filter else "")

    def classed(self) -> "PredictorSpec":
        return PredictorSpec(self.family, self.window, True)

    @classmethod
    def parse(cls, text: str) -> "PredictorSpec":
        name, _, suffix = text.strip().partition(":")
        if suffix and suffix != "classed":
            raise ConfigurationError(f"unknown predictor suffix {suffix!r} in {text!r}")
        try:
            spec = CATALOG[name]
        except KeyError:
            raise ConfigurationError(f"unknown predictor {name!r}") from None
        return spec.classed() if suffix else spec

    def __str__(self) -> str:
        return self.name


_LEGAL_WINDOWS = {
    Family.MEAN: (All, LastK, LastDuration),
    Family.MEDIAN: (All, LastK),
    Family.LAST_VALUE: (LastK,),
    Family.AUTOREGRESSIVE: (All, LastDuration),
}

_PREFIX = {Family.MEAN: "AVG", Family.MEDIAN: "MED", Family.AUTOREGRESSIVE: "AR"}


def _spec_name(family: Family, window: Window) -> str:
    if family is Family.LAST_VALUE:
        return "LV"
    prefix = _PREFIX[family]
    if isinstance(window, All):
        return prefix
    if isinstance(window, LastK):
        return f"{prefix}{window.count}"
    secs = window.seconds
    if secs % DAY == 0 and family is Family.AUTOREGRESSIVE:
        return f"{prefix}{int(secs // DAY)}d"
    if secs % HOUR == 0:
        return f"{prefix}{int(secs // HOUR)}hr"
    return f"{prefix}{secs:g}s"


def _build_catalog():
    specs = [
        PredictorSpec(Family.MEAN),
        PredictorSpec(Family.MEDIAN),
        PredictorSpec(Family.AUTOREGRESSIVE),
        PredictorSpec(Family.LAST_VALUE, LastK(1)),
    ]
    for k in (5, 15, 25):
        specs.append(PredictorSpec(Family.MEAN, LastK(k)))
        specs.append(PredictorSpec(Family.MEDIAN, LastK(k)))
    for h in (5, 15, 25):
        specs.append(PredictorSpec(Family.MEAN, LastDuration(h * HOUR)))
    for d in (5, 10):
        specs.append(PredictorSpec(Family.AUTOREGRESSIVE, LastDuration(d * DAY)))
    return {s.name: s for s in specs}


CATALOG = _build_catalog()
CATALOG_NAMES = tuple(CATALOG)

def run_predictor(
    spec: PredictorSpec,
    history: History,
    now: Optional[float] = None,
    query_size: Optional[int] = None,
) -> float:
    """Forecast the next transfer's throughput with one catalog predictor.

    With ``spec.class_filter`` the history is first reduced to transfers in the
    size class of ``query_size``.
    """
    if not isinstance(spec, PredictorSpec):
        raise ConfigurationError(f"not a predictor spec: {spec!r}")
    if spec.class_filter:
        if query_size is None:
            raise InputError(f"{spec.name} needs the query file size")
        history = history.in_class(classify_size(query_size))
    if now is None and len(history):
        now = float(history.times[-1])
    family = spec.family
    if family is Family.MEAN:
        return predict_mean(history, spec.window, now)
    if family is Family.MEDIAN:
        return predict_median(history, spec.window, now)
    if family is Family.LAST_VALUE:
        return predict_last_value(history)
    coeffs = fit_ar(history, spec.window, now)
    return predict_ar(coeffs, predict_last_value(history))
