import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gossipqcd.config import load_config
from gossipqcd.detector import DetectorMode
from gossipqcd.errors import DegenerateFit
from gossipqcd.experiments import (
    RatePoint,
    estimate_pfa_cadd,
    fit_decay_rate,
    kl_convergence_sweep,
    run_trial,
    second_layer_curve,
    simulate_block,
    target_rate,
)
from gossipqcd.obsmodel import gaussian_mean_shift_model
from gossipqcd.topology import complete_graph, enumerate_matchings, uniform_distribution

REF = load_config("reference.cfg")
CEN = DetectorMode("centralized")
ISO0 = DetectorMode("isolated", 0)
DIS0 = DetectorMode("distributed", 0)


def k2_config(**kw):
    g = complete_graph(2)
    return replace(REF, graph=g, distribution=uniform_distribution(enumerate_matchings(g), g),
                   model=gaussian_mean_shift_model([0.2, 0.4]), modes=(), **kw)


class TestTrial:
    def test_zero_threshold_stops_at_once(self):
        out = run_trial(REF, CEN, 0.0, np.random.default_rng(0), forced_change_time=1)
        assert out.stop_time == 1 and out.delay == 0 and not out.false_alarm

    def test_censoring(self):
        out = run_trial(REF, CEN, 1e300, np.random.default_rng(0), forced_change_time=1, horizon=5)
        assert out.censored and out.delay is None

    def test_change_time_mean(self):
        change, _, _ = simulate_block(REF, CEN, 10.0, 100_000, np.random.default_rng(1), horizon=1)
        assert abs(change.mean() - 10) < 0.3
        assert change.min() >= 1

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([CEN, ISO0, DIS0, DetectorMode("distributed", 3)]))
    def test_block_of_one_matches_scalar(self, seed, mode):
        a = run_trial(REF, mode, 30.0, np.random.default_rng(seed))
        change, stop, censored = simulate_block(REF, mode, 30.0, 1, np.random.default_rng(seed))
        assert change[0] == a.change_time
        assert (None if censored[0] else stop[0]) == a.stop_time


class TestEstimation:
    def test_needs_seed(self):
        with pytest.raises(ValueError):
            estimate_pfa_cadd(replace(REF, trials_per_threshold=10), CEN)

    def test_reproducible_and_worker_independent(self):
        cfg = replace(REF, trials_per_threshold=3000, block_size=512, thresholds=(99.0,), master_seed=5)
        a = estimate_pfa_cadd(cfg, DIS0)
        b = estimate_pfa_cadd(cfg, DIS0)
        with ProcessPoolExecutor(2) as ex:
            c = estimate_pfa_cadd(cfg, DIS0, ex)
        assert a == b == c
        assert math.isfinite(a[0].cadd1)

    def test_cadd_grows_with_threshold(self):
        cfg = replace(REF, trials_per_threshold=4000, thresholds=(10.0, 100.0, 1000.0), master_seed=3)
        pts = estimate_pfa_cadd(cfg, CEN, keep_empty=True)
        for p, q in zip(pts, pts[1:]):
            assert q.cadd1 >= p.cadd1 - 2 * math.hypot(p.cadd1_se, q.cadd1_se)

    def test_pfa_guarantee_small(self):
        cfg = replace(REF, trials_per_threshold=20_000, thresholds=(9.0,), master_seed=11)
        p = estimate_pfa_cadd(cfg, ISO0)[0]
        assert p.pfa <= 0.1 + 3 * p.pfa_se

    def test_zero_false_alarms_dropped(self, caplog):
        cfg = replace(REF, trials_per_threshold=50, thresholds=(1e12,), master_seed=1, max_horizon=50, horizon_limit=50)
        assert estimate_pfa_cadd(cfg, CEN) == []
        assert "E_ZERO_FALSE_ALARMS" in caplog.text


def _pt(x, y, n=10_000):
    return RatePoint(threshold=1.0, cadd1=x, cadd1_se=0.1, pfa=math.exp(y), pfa_se=0.0, pfa_trials=n, cadd_trials=n, false_alarms=1)


class TestFit:
    def test_exact_line(self):
        pts = [_pt(x, -0.5 * x - 1.0) for x in (2.0, 5.0, 9.0, 14.0)]
        fit = fit_decay_rate(pts)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.intercept == pytest.approx(-1.0, abs=1e-11)

    def test_too_few(self):
        with pytest.raises(DegenerateFit):
            fit_decay_rate([_pt(1, -1), _pt(2, -2)])

    def test_narrow_spread(self):
        with pytest.raises(DegenerateFit):
            fit_decay_rate([_pt(1.0, -1), _pt(1.3, -2), _pt(1.6, -3)])


class TestTargets:
    def test_targets(self):
        assert target_rate(REF, CEN) == pytest.approx(-(0.275 - math.log(0.9)))
        assert target_rate(REF, DetectorMode("isolated", 4)) == pytest.approx(-0.23036, abs=1e-5)
        iso, dis, cen = (target_rate(REF, m) for m in (ISO0, DIS0, CEN))
        assert cen < dis < iso


class TestSweeps:
    def test_k2_second_layer(self):
        rows = second_layer_curve(k2_config(), [1.0, 5.0, 20.0, 60.0])
        for r in rows:
            assert r["rate"] == pytest.approx(-0.5, abs=1e-7)
            assert r["upper_rate"] == r["lower_rate"] == pytest.approx(math.log(0.5))

    def test_bounds_columns_constant(self):
        rows = second_layer_curve(REF, [20.0, 40.0])
        assert rows[0]["upper_rate"] == rows[1]["upper_rate"]

    def test_kl_sweep_gamma_zero(self):
        row = kl_convergence_sweep(REF, [0.0], owner=2)[0]
        assert row["exact_dkl"] == pytest.approx(0.045, abs=1e-15)

    def test_kl_sweep_k2(self):
        for r in kl_convergence_sweep(k2_config(), [0.0, 3.0, 10.0]):
            assert r["exact_dkl"] == pytest.approx(0.02 + (1 - math.exp(-r["gamma"] / 2)) * 0.08, rel=1e-9)

    def test_gap_decreasing(self):
        rows = kl_convergence_sweep(REF, [float(g) for g in range(0, 61, 5)])
        gaps = [r["centralized_kl"] - r["exact_dkl"] for r in rows]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
