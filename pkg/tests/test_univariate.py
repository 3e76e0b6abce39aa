import numpy as np
import pytest

import oracles
from xferpredict.errors import ConfigurationError, DegenerateFitError, InputError, InsufficientHistoryError
from xferpredict.traces import MB
from xferpredict.univariate import (
    CATALOG,
    CATALOG_NAMES,
    All,
    ARCoefficients,
    Family,
    History,
    LastDuration,
    LastK,
    PredictorSpec,
    fit_ar,
    median_of,
    predict_ar,
    predict_last_value,
    predict_mean,
    predict_median,
    run_predictor,
)

HOUR = 3600


def hist(values, spacing=1.0):
    return History.from_values(values, spacing)


class TestMean:
    def test_all(self):
        assert predict_mean(hist([4, 8])) == 6

    def test_last_k(self):
        assert predict_mean(hist([2, 4, 6, 8, 10]), LastK(2)) == 9

    def test_last_k_larger_than_history(self):
        assert predict_mean(hist([2, 4]), LastK(25)) == 3

    def test_temporal_window(self):
        t = 100 * HOUR
        h = History([t - 6 * HOUR, t - HOUR], [10, 20])
        assert predict_mean(h, LastDuration(5 * HOUR), now=t) == 20

    def test_temporal_window_lower_bound_inclusive(self):
        h = History([0, 10], [1, 3])
        assert predict_mean(h, LastDuration(10), now=10) == 2

    def test_empty_window(self):
        with pytest.raises(InsufficientHistoryError):
            predict_mean(History([0], [1]), LastDuration(5), now=100)
        with pytest.raises(InsufficientHistoryError):
            predict_mean(hist([]))

    def test_temporal_needs_now(self):
        with pytest.raises(InputError):
            predict_mean(hist([1]), LastDuration(5))


class TestMedian:
    @pytest.mark.parametrize("values,expected", [([1, 100, 3], 3), ([1, 3, 5, 100], 4), ([7], 7), ([2, 1], 1.5)])
    def test_examples(self, values, expected):
        assert predict_median(hist(values)) == expected

    def test_last_k(self):
        assert predict_median(hist([100, 1, 2, 3]), LastK(3)) == 2

    def test_rejects_temporal_window(self):
        with pytest.raises(ConfigurationError):
            predict_median(hist([1]), LastDuration(10), now=0)

    def test_matches_numpy_median(self):
        rng = np.random.default_rng(0)
        for n in range(1, 40):
            v = rng.uniform(0, 100, n)
            assert median_of(v) == pytest.approx(np.median(v), abs=1e-12)

    def test_robust_to_one_outlier(self):
        # inflating a value ranked above the middle order statistic(s) leaves the median alone
        rng = np.random.default_rng(1)
        for _ in range(100):
            v = rng.uniform(1, 1000, int(rng.integers(3, 30)))
            med = median_of(v)
            upper_middle = np.sort(v)[len(v) // 2]
            candidates = np.flatnonzero(v > upper_middle)
            w = v.copy()
            w[rng.choice(candidates)] *= 1e6
            assert median_of(w) == med

    def test_even_window_upper_middle_is_not_protected(self):
        # the even-count rule averages the two middle values, so the upper one moves the median
        assert median_of([1, 3, 5, 100]) == 4
        assert median_of([1, 3, 5e6, 100]) == 51.5


class TestLastValue:
    def test_examples(self):
        assert predict_last_value(hist([2, 4, 9])) == 9
        assert predict_last_value(hist([5])) == 5

    def test_empty(self):
        with pytest.raises(InsufficientHistoryError):
            predict_last_value(hist([]))


class TestAR:
    def test_doubling(self):
        c = fit_ar(hist([2, 4, 8, 16]))
        assert c.a == pytest.approx(0, abs=1e-9)
        assert c.b == pytest.approx(2, abs=1e-9)

    def test_constant_degenerate(self):
        with pytest.raises(DegenerateFitError):
            fit_ar(hist([5, 5, 5, 5]))

    def test_too_few(self):
        with pytest.raises(InsufficientHistoryError):
            fit_ar(hist([1, 2]))

    def test_against_normal_equations(self):
        series = [1, 2, 2, 3, 4]
        a, b = oracles.ar_lag_fit(series)
        c = fit_ar(hist(series))
        assert c.a == pytest.approx(a, abs=1e-9)
        assert c.b == pytest.approx(b, abs=1e-9)
        # frozen from the exact rational oracle
        assert (a, b) == (0.75, 1.0)

    def test_random_against_normal_equations(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            v = rng.uniform(100, 5000, int(rng.integers(3, 25))).round(2).tolist()
            a, b = oracles.ar_lag_fit(v)
            c = fit_ar(hist(v))
            assert c.a == pytest.approx(a, rel=1e-9, abs=1e-6)
            assert c.b == pytest.approx(b, rel=1e-9, abs=1e-9)

    def test_exact_recurrence_recovery(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            a, b = rng.uniform(0, 5), rng.uniform(0.1, 0.9)
            g = [rng.uniform(1, 10)]
            for _ in range(12):
                g.append(a + b * g[-1])
            c = fit_ar(hist(g))
            assert c.a == pytest.approx(a, abs=1e-9)
            assert c.b == pytest.approx(b, abs=1e-9)

    def test_temporal_window_uses_recent_pairs(self):
        h = History([0, 1, 2, 100, 101, 102, 103], [9, 1, 7, 2, 4, 8, 16])
        c = fit_ar(h, LastDuration(3), now=103)
        assert (c.a, c.b) == pytest.approx((0, 2), abs=1e-9)

    def test_rejects_last_k(self):
        with pytest.raises(ConfigurationError):
            fit_ar(hist([1, 2, 3]), LastK(5))

    @pytest.mark.parametrize("coeffs,last,expected", [((0, 2), 8, 16), ((3, 0), 99, 3), ((-10, 0.1), 5, 0)])
    def test_predict(self, coeffs, last, expected):
        assert predict_ar(ARCoefficients(*coeffs), last) == expected


class TestSpecs:
    def test_catalog_names(self):
        assert CATALOG_NAMES == (
            "AVG", "MED", "AR", "LV",
            "AVG5", "MED5", "AVG15", "MED15", "AVG25", "MED25",
            "AVG5hr", "AVG15hr", "AVG25hr", "AR5d", "AR10d",
        )

    def test_legal_combinations(self):
        windows = [All(), LastK(1), LastK(5), LastDuration(3600)]
        legal = set()
        for fam in Family:
            for w in windows:
                try:
                    PredictorSpec(fam, w)
                    legal.add((fam, type(w).__name__))
                except ConfigurationError:
                    pass
        assert legal == {
            (Family.MEAN, "All"), (Family.MEAN, "LastK"), (Family.MEAN, "LastDuration"),
            (Family.MEDIAN, "All"), (Family.MEDIAN, "LastK"),
            (Family.LAST_VALUE, "LastK"),
            (Family.AUTOREGRESSIVE, "All"), (Family.AUTOREGRESSIVE, "LastDuration"),
        }

    def test_last_value_needs_k1(self):
        with pytest.raises(ConfigurationError):
            PredictorSpec(Family.LAST_VALUE, LastK(2))

    def test_parse(self):
        assert PredictorSpec.parse("AVG25") is CATALOG["AVG25"]
        s = PredictorSpec.parse("MED:classed")
        assert s.class_filter and s.name == "MED:classed"
        for bad in ("AVG7", "AR5", "MED:class"):
            with pytest.raises(ConfigurationError):
                PredictorSpec.parse(bad)


class TestRunPredictor:
    def test_avg25_on_30(self):
        v = list(range(1, 31))
        assert run_predictor(CATALOG["AVG25"], hist(v)) == np.mean(v[-25:])

    def test_classed_median(self):
        sizes = [10 * MB, 100 * MB, 120 * MB, 600 * MB, 200 * MB]
        vals = [1, 50, 70, 999, 60]
        h = History(range(5), vals, sizes)
        spec = PredictorSpec.parse("MED:classed")
        assert run_predictor(spec, h, query_size=100 * MB) == 60
        assert run_predictor(CATALOG["MED"], h) == 60
        with pytest.raises(InputError):
            run_predictor(spec, h)

    def test_illegal_spec(self):
        with pytest.raises(ConfigurationError):
            run_predictor(PredictorSpec(Family.AUTOREGRESSIVE, LastK(5)), hist([1, 2, 3]))

    def test_last_k1_agree(self):
        h = hist([3, 1, 4, 1, 5])
        m = predict_mean(h, LastK(1))
        assert m == predict_median(h, LastK(1)) == predict_last_value(h) == 5


class TestProperties:
    def test_scale_equivariance(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            n = int(rng.integers(4, 40))
            times = np.sort(rng.uniform(0, 20 * 86400, n))
            vals = rng.uniform(100, 9000, n)
            c = float(rng.uniform(0.1, 50))
            now = float(times[-1])
            for spec in CATALOG.values():
                try:
                    p = run_predictor(spec, History(times, vals), now)
                except (InsufficientHistoryError, DegenerateFitError):
                    continue
                q = run_predictor(spec, History(times, vals * c), now)
                assert q == pytest.approx(c * p, rel=1e-9, abs=1e-9), spec.name

    def test_bounded_by_window(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            n = int(rng.integers(1, 40))
            times = np.sort(rng.uniform(0, 30 * HOUR, n))
            vals = rng.uniform(0, 1000, n)
            h = History(times, vals)
            for name in ("AVG", "MED", "LV", "AVG5", "MED15", "AVG5hr", "AVG25"):
                try:
                    p = run_predictor(CATALOG[name], h, float(times[-1]))
                except InsufficientHistoryError:
                    continue
                assert vals.min() - 1e-9 <= p <= vals.max() + 1e-9

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        h = History(np.arange(50.0) * 600, rng.uniform(1, 10, 50))
        for spec in CATALOG.values():
            assert run_predictor(spec, h) == run_predictor(spec, h)
