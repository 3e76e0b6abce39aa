import math

import numpy as np
import pytest

import oracles
from xferpredict.errors import (
    AlignmentError,
    ConfigurationError,
    DegenerateFitError,
    InputError,
    InsufficientDataError,
)
from xferpredict.fusion import (
    STANDARD_FUSION_CONFIGS,
    AlignedTuple,
    FillStrategy,
    FilledSeries,
    FusionConfig,
    RegressionModel,
    fill,
    fit_regression,
    forecast_fused,
    match_streams,
    parse_variables,
    predict_regression,
    walk_forward_fuse,
    walk_forward_many,
)
from xferpredict.traces import Direction, DiskRecord, ProbeRecord, TransferRecord


def transfer(t, bw=1000, size=20_000_000):
    return TransferRecord("h", "/f", size, "/v", int(t), int(t) + 10, 10, int(bw), Direction.READ, 1, 0)


def probes(times, values=None):
    values = values if values is not None else [1.0] * len(times)
    return [ProbeRecord(t, v) for t, v in zip(times, values)]


def disks(times, values=None):
    values = values if values is not None else [1.0] * len(times)
    return [DiskRecord(t, v) for t, v in zip(times, values)]


def gap_tuples(gs, spacing=300.0):
    return [
        AlignedTuple(i * spacing, ProbeRecord(i * spacing, float(i)), DiskRecord(i * spacing, 2.0 * i), g)
        for i, g in enumerate(gs)
    ]


def series(n, d, g):
    n = np.asarray(n, dtype=float)
    return FilledSeries(np.arange(n.size, dtype=float), n, np.asarray(d, dtype=float), np.asarray(g, dtype=float),
                        np.ones(n.size, bool), FillStrategy.NOFILL)


class TestMatchStreams:
    def test_basic(self):
        al = match_streams([transfer(305)], probes([0, 300, 600]), disks([1, 301, 601]))
        assert len(al) == 3
        assert [t.g for t in al] == [None, 1000, None]
        assert [t.d.timestamp for t in al] == [1, 301, 601]
        assert al.unmatched == 0

    def test_single_coincident(self):
        (t,) = match_streams([transfer(100)], probes([100]), disks([100]))
        assert t.n.timestamp == 100 and t.d.timestamp == 100 and t.g == 1000 and t.g_time == 100

    def test_contended_tick(self):
        al = match_streams([transfer(290, 1), transfer(310, 2)], probes([0, 300, 600]), disks([0, 300, 600]))
        assert [t.g for t in al] == [None, 1, 2]

    def test_equidistant_tie_goes_earlier(self):
        al = match_streams([transfer(150)], probes([0, 300]), [])
        assert [t.g for t in al] == [1000, None]

    def test_unmatched_beyond_gap(self):
        al = match_streams([transfer(5000)], probes([0, 300]), [], max_gap=600)
        assert al.unmatched == 1
        assert all(t.g is None for t in al)

    def test_disk_beyond_gap_absent(self):
        al = match_streams([], probes([0, 3000]), disks([10]))
        assert al[0].d is not None and al[1].d is None

    def test_empty_probe_stream(self):
        with pytest.raises(AlignmentError):
            match_streams([transfer(1)], [], disks([1]))

    def test_unsorted_rejected(self):
        with pytest.raises(InputError):
            match_streams([], probes([300, 0]), [])

    def test_against_brute_force(self):
        rng = np.random.default_rng(21)
        for _ in range(60):
            ticks = np.sort(rng.choice(np.arange(0, 30000, 100), size=int(rng.integers(1, 60)), replace=False))
            ticks = ticks.astype(float).tolist()
            dts = np.sort(rng.uniform(0, 30000, int(rng.integers(0, 40)))).tolist()
            gts = np.sort(rng.integers(0, 30000, int(rng.integers(0, 50)))).tolist()
            gap = float(rng.choice([150, 300, 600]))
            al = match_streams([transfer(t, i + 1) for i, t in enumerate(gts)], probes(ticks), disks(dts), gap)
            expect = oracles.greedy_assignment(ticks, gts, gap)
            got = [-1] * len(gts)
            for i, tup in enumerate(al):
                if tup.g is not None:
                    got[int(tup.g) - 1] = i
            assert got == expect
            assert al.unmatched == expect.count(-1)
            for tup in al:
                j = oracles.nearest_within(dts, tup.tick_time, gap)
                assert (tup.d is None) == (j == -1)
                if tup.d is not None:
                    assert tup.d.timestamp == dts[j]
                    assert abs(tup.d.timestamp - tup.tick_time) <= gap


class TestFill:
    def test_lv(self):
        out = fill(gap_tuples([5, None, None, 9]), FillStrategy.LV)
        assert out.g.tolist() == [5, 5, 5, 9]
        assert out.is_real.tolist() == [True, False, False, True]

    def test_avg(self):
        out = fill(gap_tuples([4, 8, None]), "avg")
        assert out.g.tolist() == [4, 8, 6]

    def test_nofill(self):
        out = fill(gap_tuples([4, None, 8, None]), "nofill")
        assert out.g.tolist() == [4, 8]
        assert out.tick_time.tolist() == [0, 600]

    def test_no_gaps_identical(self):
        tuples = gap_tuples([1, 2, 3])
        outs = [fill(tuples, s).triples() for s in FillStrategy]
        assert outs[0] == outs[1] == outs[2]

    def test_leading_gaps_dropped(self):
        out = fill(gap_tuples([None, None, 3, None]), "lv")
        assert out.g.tolist() == [3, 3]

    def test_avg_horizon_excludes_old(self):
        out = fill(gap_tuples([10, 20, None, None]), "avg", avg_horizon=600)
        # tick 600 sees [0, 600) -> both; tick 900 sees [300, 900) -> only 20
        assert out.g.tolist() == [10, 20, 15, 20]

    def test_avg_empty_window_dropped(self):
        out = fill(gap_tuples([10, None, None, None]), "avg", avg_horizon=500)
        assert out.g.tolist() == [10, 10]

    def test_all_gaps_empty(self, caplog):
        out = fill(gap_tuples([None, None]), "avg")
        assert len(out) == 0
        assert "no real throughput" in caplog.text

    def test_missing_variable_dropped(self):
        tuples = gap_tuples([1, 2, 3])
        tuples[1] = AlignedTuple(300.0, tuples[1].n, None, 2)
        assert len(fill(tuples, "lv", variables="N")) == 3
        assert len(fill(tuples, "lv", variables="ND")) == 2

    def test_against_loop_oracle(self):
        rng = np.random.default_rng(22)
        for _ in range(40):
            size = int(rng.integers(1, 120))
            gs = [float(rng.uniform(1, 100)) if rng.random() < 0.3 else None for _ in range(size)]
            tuples = gap_tuples(gs)
            horizon = float(rng.choice([600, 3000, 86400]))
            for strat in FillStrategy:
                out = fill(tuples, strat, horizon)
                expect = []
                for i, g in enumerate(gs):
                    if g is not None:
                        expect.append(g)
                        continue
                    if strat is FillStrategy.NOFILL:
                        continue
                    prior = [(j * 300.0, v) for j, v in enumerate(gs[:i]) if v is not None]
                    if strat is FillStrategy.LV:
                        if prior:
                            expect.append(prior[-1][1])
                    else:
                        win = [v for t, v in prior if t >= i * 300.0 - horizon]
                        if win:
                            expect.append(math.fsum(win) / len(win))
                assert out.g.tolist() == pytest.approx(expect, rel=1e-12)

    def test_nofill_subsequence_and_equal_lengths(self):
        rng = np.random.default_rng(23)
        for _ in range(30):
            gs = [float(rng.uniform(1, 9)) if rng.random() < 0.2 else None for _ in range(80)]
            tuples = gap_tuples(gs)
            nf = set(fill(tuples, "nofill").tick_time.tolist())
            lv = fill(tuples, "lv").tick_time.tolist()
            av = fill(tuples, "avg", avg_horizon=10**9).tick_time.tolist()
            assert nf <= set(lv)
            assert len(lv) == len(av)


class TestRegression:
    def test_exact_linear(self):
        n = np.arange(1.0, 8.0)
        m = fit_regression(series(n, n * 0, 3 + 2 * n), "N")
        assert m.intercept == pytest.approx(3, abs=1e-9)
        assert m.coefficients == pytest.approx((2,), abs=1e-9)

    def test_exact_planar(self):
        rng = np.random.default_rng(1)
        n, d = rng.uniform(0, 5, 20), rng.uniform(0, 100, 20)
        m = fit_regression(series(n, d, 1 + 2 * n + 3 * d), "ND")
        assert (m.intercept, *m.coefficients) == pytest.approx((1, 2, 3), abs=1e-9)
        assert m.fit_size == 20

    def test_quadratic_against_normal_equations(self):
        rng = np.random.default_rng(2)
        n = rng.uniform(0, 4, 10).round(3)
        g = (5 + 3 * n - 0.5 * n**2 + rng.normal(0, 0.3, 10)).round(3)
        m = fit_regression(series(n, n * 0, g), "N", degree=2)
        expect = oracles.normal_equations(oracles.poly_rows([n.tolist()], 2), g.tolist())
        assert (m.intercept, *m.coefficients) == pytest.approx(expect, abs=1e-6)

    def test_random_against_normal_equations(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            size = int(rng.integers(12, 40))
            n = rng.uniform(0.5, 3, size).round(4)
            d = rng.uniform(10, 200, size).round(2)
            g = rng.uniform(500, 9000, size).round(0)
            for deg in (1, 2):
                m = fit_regression(series(n, d, g), "ND", deg)
                expect = oracles.normal_equations(oracles.poly_rows([n.tolist(), d.tolist()], deg), g.tolist())
                got = (m.intercept, *m.coefficients)
                scale = max(abs(v) for v in expect)
                assert np.max(np.abs(np.subtract(got, expect))) <= 1e-8 * scale

    def test_local_optimality(self):
        rng = np.random.default_rng(4)
        n, d = rng.uniform(0, 5, 30), rng.uniform(0, 50, 30)
        g = 100 + 40 * n + 2 * d + rng.normal(0, 10, 30)
        s = series(n, d, g)
        m = fit_regression(s, "ND")

        def sse(a, coeffs):
            pred = a + coeffs[0] * n + coeffs[1] * d
            return float(np.sum((g - pred) ** 2))

        base = sse(m.intercept, m.coefficients)
        for j in range(3):
            for step in (1e-3, -1e-3):
                params = [m.intercept, *m.coefficients]
                params[j] += step
                assert sse(params[0], params[1:]) > base

    def test_adding_variable_never_hurts(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n, d = rng.uniform(0, 5, 25), rng.uniform(0, 50, 25)
            g = rng.uniform(0, 100, 25)
            s = series(n, d, g)
            m1, m2 = fit_regression(s, "N"), fit_regression(s, "ND")
            r1 = np.sum((g - (m1.intercept + m1.coefficients[0] * n)) ** 2)
            r2 = np.sum((g - (m2.intercept + m2.coefficients[0] * n + m2.coefficients[1] * d)) ** 2)
            assert r2 <= r1 * (1 + 1e-12)

    def test_constant_probe_degenerate(self):
        with pytest.raises(DegenerateFitError):
            fit_regression(series([2, 2, 2, 2], [0] * 4, [1, 2, 3, 4]), "N")

    def test_collinear_degenerate(self):
        n = np.arange(6.0)
        with pytest.raises(DegenerateFitError):
            fit_regression(series(n, 2 * n + 1, n), "ND")

    def test_too_few_points(self):
        with pytest.raises(InsufficientDataError):
            fit_regression(series([1, 2], [0, 0], [1, 2]), "N", degree=2)

    def test_bad_degree(self):
        with pytest.raises(ConfigurationError):
            fit_regression(series(range(9), [0] * 9, range(9)), "N", degree=5)

    @pytest.mark.parametrize(
        "model,kw,expected",
        [
            (RegressionModel(("N",), 1, 3, (2,)), dict(n=4), 11),
            (RegressionModel(("N", "D"), 1, 1, (2, 3)), dict(n=1, d=1), 6),
            (RegressionModel(("N",), 2, 0, (0, 1)), dict(n=3), 9),
            (RegressionModel(("N",), 1, -5, (1,)), dict(n=1), 0),
        ],
    )
    def test_predict(self, model, kw, expected):
        assert predict_regression(model, **kw) == expected

    def test_predict_missing_variable(self):
        with pytest.raises(InputError):
            predict_regression(RegressionModel(("N", "D"), 1, 0, (1, 1)), n=1)

    def test_coefficient_count_checked(self):
        with pytest.raises(InputError):
            RegressionModel(("N", "D"), 2, 0, (1, 1, 1))


def linear_trace(count=40, a=500.0, b=2000.0, spacing=3600, offset=10):
    """Transfers shortly after probe ticks with g = a + b * n exactly."""
    ticks = np.arange(0, count * spacing + 1, 300, dtype=float)
    rng = np.random.default_rng(0)
    nv = np.round(rng.uniform(0.5, 3.0, ticks.size), 3)
    ps = probes(ticks.tolist(), nv.tolist())
    ds = disks((ticks + 1).tolist(), np.round(rng.uniform(10, 90, ticks.size), 2).tolist())
    gs = []
    for k in range(count):
        i = (k * spacing) // 300 + 1
        gs.append(transfer(ticks[i] + offset, a + b * nv[i]))
    return gs, ps, ds


class TestWalkForward:
    def test_noiseless_recovery(self):
        g, n, d = linear_trace()
        res = walk_forward_fuse(g, n, d, "N", FillStrategy.NOFILL)
        assert len(res.predictions) == len(g) - 15
        for p in res.predictions:
            assert p.predicted == pytest.approx(p.measured, abs=1e-6)

    def test_sixteen_transfers_one_prediction(self):
        g, n, d = linear_trace(16)
        res = walk_forward_fuse(g, n, d, "N", "nofill")
        assert len(res.predictions) == 1
        assert res.predictions[0].transfer is g[15]

    def test_no_coincident_probes_all_skipped(self):
        g = [transfer(100_000 + 10_000 * k) for k in range(20)]
        n = probes([0, 300, 600])
        res = walk_forward_fuse(g, n, [], "N", "nofill")
        assert res.predictions == []
        assert res.skip_count == 5
        assert res.skipped["insufficient_data"] == 5

    def test_no_probe_before_transfer(self):
        g = [transfer(k) for k in range(20)]
        res = walk_forward_fuse(g, probes([1000, 1300]), [], "N", "avg")
        assert res.skipped["no_preceding_observation"] == 5

    def test_causality(self):
        g, n, d = linear_trace(30)
        base = walk_forward_fuse(g, n, d, "ND", "avg")
        # an outlier transfer and outlier probes placed just before the last query
        t_last = g[-1].start_time
        g2 = g[:-1] + [transfer(t_last - 50, 10**7)] + g[-1:]
        n2 = sorted(n + probes([t_last + 1], [500.0]), key=lambda r: r.timestamp)
        res = walk_forward_fuse(g2, n2, d, "ND", "avg")
        before = {p.transfer.start_time: p.predicted for p in base.predictions}
        after = {p.transfer.start_time: p.predicted for p in res.predictions}
        for t, v in before.items():
            if t < t_last - 50:
                assert after[t] == v

    def test_refit_every(self):
        g, n, d = linear_trace(30)
        every = walk_forward_fuse(g, n, d, "N", "nofill", refit_every=1)
        lazy = walk_forward_fuse(g, n, d, "N", "nofill", refit_every=5)
        assert len(every.predictions) == len(lazy.predictions)
        for a, b in zip(every.predictions, lazy.predictions):
            assert a.predicted == pytest.approx(b.predicted, abs=1e-6)

    def test_many_matches_single(self):
        g, n, d = linear_trace(30)
        rng = np.random.default_rng(3)
        g = [transfer(r.start_time, r.bandwidth + rng.normal(0, 50)) for r in g]
        out = walk_forward_many(g, n, d, STANDARD_FUSION_CONFIGS)
        for cfg, res in out.items():
            single = walk_forward_fuse(g, n, d, cfg.variables, cfg.fill)
            assert [p.predicted for p in res.predictions] == [p.predicted for p in single.predictions]

    def test_deterministic(self):
        g, n, d = linear_trace(25)
        a = walk_forward_fuse(g, n, d, "ND", "lv", degree=2)
        b = walk_forward_fuse(g, n, d, "ND", "lv", degree=2)
        assert [p.predicted for p in a.predictions] == [p.predicted for p in b.predictions]

    def test_forecast_uses_prior_data_only(self):
        g, n, d = linear_trace(30)
        cfg = FusionConfig(("N",), "nofill")
        now = g[-1].start_time
        v = forecast_fused(g, n, d, cfg, now)
        res = walk_forward_fuse(g, n, d, "N", "nofill")
        assert v == res.predictions[-1].predicted


class TestConfig:
    def test_standard_configs(self):
        assert [c.name for c in STANDARD_FUSION_CONFIGS] == [
            "G+N NoFill", "G+N LV", "G+N Avg",
            "G+D NoFill", "G+D LV", "G+D Avg",
            "G+N+D NoFill", "G+N+D LV", "G+N+D Avg",
        ]

    @pytest.mark.parametrize("text,name", [("N:avg", "G+N Avg"), ("ND:lv:2", "G+N+D LV deg2"), ("G+D NoFill", "G+D NoFill")])
    def test_parse(self, text, name):
        assert FusionConfig.parse(text).name == name

    @pytest.mark.parametrize("text", ["N", "X:avg", "N:median", "N:avg:9", "N:avg:x"])
    def test_parse_errors(self, text):
        with pytest.raises(ConfigurationError):
            FusionConfig.parse(text)

    def test_variables(self):
        assert parse_variables("G+N+D") == ("N", "D")
        assert parse_variables(["D"]) == ("D",)
