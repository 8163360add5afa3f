import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from mtmerlin.core import RngHandle
from mtmerlin.errors import DegeneratePeak, NonPositiveInput, OutOfBounds, ShapeMismatch
from mtmerlin.evaluation import (PSNR_MAX, EvalReport, bias_variance, box_stats, config_hash, line_profile,
                                 nested_sets, psnr_from_logs, psnr_log)
from mtmerlin.experiments import ExperimentConfig, coherence_grid, run_psnr_vs_T, run_psnr_vs_coherence
from mtmerlin.scene import ExponentialCoherence, average_coherence, coherence_matrix, offdiagonal_coherence

log_images = hnp.arrays(np.float64, (6, 7), elements=st.floats(-5, 5, allow_nan=False))


# ------------------------------------------------------------------ PSNR

def test_psnr_perfect_estimate_is_sentinel():
    r = np.linspace(1, 10, 20).reshape(4, 5)
    assert psnr_log(r, r) == PSNR_MAX


def test_psnr_offset_one_peak_ten(frozen):
    r = np.exp(np.random.default_rng(0).standard_normal((8, 8)))
    assert psnr_log(r * math.e, r, peak=10.0) == pytest.approx(frozen["psnr_offset1_peak10"], abs=1e-12)


def test_psnr_doubling_offset(frozen):
    r = np.exp(np.random.default_rng(1).standard_normal((8, 8)))
    p1 = psnr_log(r * np.exp(0.3), r, peak=4.0)
    p2 = psnr_log(r * np.exp(0.6), r, peak=4.0)
    assert p1 - p2 == pytest.approx(frozen["psnr_doubling_drop"], abs=1e-10)


def test_psnr_auto_peak_and_errors():
    r = np.array([[1.0, math.e ** 2]])
    est = r * math.e
    assert psnr_log(est, r) == pytest.approx(10 * math.log10(4.0), abs=1e-12)
    with pytest.raises(DegeneratePeak):
        psnr_log(np.ones((2, 2)) * 2, np.ones((2, 2)))
    with pytest.raises(NonPositiveInput):
        psnr_log(np.zeros((2, 2)), np.ones((2, 2)), peak=1.0)
    with pytest.raises(ShapeMismatch):
        psnr_log(np.ones((2, 2)), np.ones((2, 3)), peak=1.0)


@settings(max_examples=50, deadline=None)
@given(log_images, log_images, st.floats(-20, 20))
def test_psnr_translation_invariance(a, b, c):
    if np.array_equal(a, b):
        return
    p = psnr_from_logs(a, b, peak=3.0)
    assert psnr_from_logs(a + c, b + c, peak=3.0) == pytest.approx(p, abs=1e-9)


# ------------------------------------------------------------------ bias / variance

def test_bias_variance_exact_estimates():
    truth = np.exp(np.random.default_rng(2).standard_normal((5, 5)))
    b2, var = bias_variance([truth, truth, truth], truth)
    assert np.all(b2 == 0) and np.all(var == 0)


def test_bias_variance_constant_offset():
    truth = np.exp(np.random.default_rng(3).standard_normal((5, 5)))
    b2, var = bias_variance([truth * np.exp(0.4)] * 4, truth)
    np.testing.assert_allclose(b2, 0.16, atol=1e-12)
    np.testing.assert_allclose(var, 0.0, atol=1e-24)


def test_bias_variance_monte_carlo():
    g = np.random.default_rng(4)
    truth = np.ones((16, 16))
    est = [np.exp(0.1 * g.standard_normal((16, 16))) for _ in range(1000)]
    _, var = bias_variance(est, truth)
    assert 0.009 <= var.mean() <= 0.011


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, (5, 3, 4), elements=st.floats(-3, 3, allow_nan=False)),
       hnp.arrays(np.float64, (3, 4), elements=st.floats(-3, 3, allow_nan=False)))
def test_bias_variance_decomposition(logs, truth):
    b2, var = bias_variance(list(np.exp(logs)), np.exp(truth))
    m = logs.shape[0]
    mse = np.mean((np.log(np.exp(logs)) - np.log(np.exp(truth))) ** 2, axis=0)
    np.testing.assert_allclose(b2 + var * (m - 1) / m, mse, atol=1e-12)


def test_bias_variance_errors():
    with pytest.raises(ValueError):
        bias_variance([np.ones((2, 2))], np.ones((2, 2)))
    with pytest.raises(ShapeMismatch):
        bias_variance([np.ones((2, 2))] * 2, np.ones((3, 2)))


# ------------------------------------------------------------------ nested sets

def test_nested_sets_basics():
    assert nested_sets(range(5), 2, 0, RngHandle(0)).prefix(3) == ()
    ns = nested_sets(range(8), 0, 7, RngHandle(1))
    assert sorted(ns.order) == list(range(1, 8)) and len(ns) == 7
    assert ns == nested_sets(range(8), 0, 7, RngHandle(1))
    with pytest.raises(ValueError):
        nested_sets(range(3), 0, 3, RngHandle(0))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 100), st.data())
def test_nested_sets_prefix_property(T, seed, data):
    ref = data.draw(st.integers(0, T - 1))
    k = data.draw(st.integers(0, T - 1))
    ns = nested_sets(range(T), ref, k, RngHandle(seed))
    assert ref not in ns.order and len(set(ns.order)) == k
    for i in range(k + 1):
        for j in range(i, k + 1):
            assert ns.prefix(j)[:i] == ns.prefix(i)


# ------------------------------------------------------------------ line profile

def test_profile_constant_and_axis_aligned():
    img = np.full((6, 9), 2.5)
    np.testing.assert_array_equal(line_profile(img, (3, 1), (3, 7)), np.full(7, 2.5))
    img = np.random.default_rng(5).standard_normal((6, 9))
    np.testing.assert_array_equal(line_profile(img, (2, 0), (2, 8)), img[2])
    np.testing.assert_array_equal(line_profile(img, (0, 4), (5, 4)), img[:, 4])


def test_profile_affine_diagonal(frozen):
    r, c = np.mgrid[0:8, 0:8]
    img = 2 + 0.5 * r - 0.25 * c
    np.testing.assert_allclose(line_profile(img, (1, 1), (5, 4)), frozen["profile_affine"], atol=1e-12)


def test_profile_out_of_bounds():
    with pytest.raises(OutOfBounds):
        line_profile(np.zeros((4, 4)), (0, 0), (4, 1))


# ------------------------------------------------------------------ report

def test_report_csv_and_summary():
    rep = EvalReport(config_hash="abc")
    for i, v in enumerate([1.0, 2.0, 3.0, 4.0]):
        rep.rows.append(dict(label="T=1", location=i, draw=0, realization=0, psnr=v))
    rep.gamma_bar["T=1"] = 1.0
    assert rep.labels() == ["T=1"] and rep.median("T=1") == 2.5
    assert box_stats([1, 2, 3, 4]) == dict(n=4, min=1.0, q1=1.75, median=2.5, q3=3.25, max=4.0)
    lines = rep.summary_csv().splitlines()
    assert lines[0] == "# config_hash=abc"
    assert lines[1] == "label,n,min,q1,median,q3,max,gamma_bar,gamma_offdiag"
    assert lines[2] == "T=1,4,1.000000,1.750000,2.500000,3.250000,4.000000,1.000000,"
    assert len(rep.rows_csv().splitlines()) == 6


def test_config_hash_stable():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(config_hash("x")) == 16


# ------------------------------------------------------------------ experiments

def _tiny(**kw):
    base = dict(size=32, dates=4, n_train=2, n_locations=2, steps=3, patch_size=16, batch_size=2,
                base_width=4, draws=2, realizations=2, t_values=(1, 2))
    base.update(kw)
    return ExperimentConfig(**base)


def test_psnr_vs_T_rows_and_determinism():
    cfg = _tiny()
    r1 = run_psnr_vs_T(cfg)
    assert r1.labels() == ["T=1", "T=2"]
    for lab in r1.labels():
        assert len(r1.psnr(lab)) == cfg.n_locations * cfg.draws * cfg.realizations
        assert r1.bias2[lab].shape == (32, 32) and len(r1.loss_curves[lab]) == cfg.steps
    r2 = run_psnr_vs_T(cfg)
    assert r1.rows == r2.rows and r1.summary_csv() == r2.summary_csv()


def test_psnr_vs_coherence_labels():
    cfg = _tiny(dates=3, coherence_targets=(0.05, 0.6), whiten_targets=(0.6,))
    rep = run_psnr_vs_coherence(cfg, T=3)
    assert rep.labels() == ["T=1", "gbar=0.050", "gbar=0.600", "gbar=0.600+whiten"]
    assert rep.gamma_offdiag["gbar=0.600"] == pytest.approx(0.6, abs=1e-9)


def test_coherence_grid_matches_direct_sums():
    for g, tau, gbar, goff in coherence_grid(_tiny(dates=3, coherence_targets=(0.05, 0.2, 0.6)), T=3):
        m = [[math.exp(-abs(i - j) / tau) for j in range(3)] for i in range(3)]
        assert gbar == pytest.approx(sum(map(sum, m)) / 9, abs=1e-12)
        assert goff == pytest.approx((sum(map(sum, m)) - 3) / 6, abs=1e-12)
        assert goff == pytest.approx(g, abs=1e-9)


def test_coherence_grid_frozen(frozen):
    for tau, (gbar, goff) in frozen["gamma_bar_T3_grid"].items():
        gamma = coherence_matrix(ExponentialCoherence.regular(3, float(tau)))
        assert average_coherence(gamma) == pytest.approx(gbar, abs=1e-12)
        assert offdiagonal_coherence(gamma) == pytest.approx(goff, abs=1e-12)


def test_short_tau_limit():
    for T in (2, 3, 8):
        assert average_coherence(coherence_matrix(ExponentialCoherence.regular(T, 0.0))) == 1 / T


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(dates=4, t_values=(1, 8))
    with pytest.raises(ValueError):
        ExperimentConfig(coherence_measure="median")
    assert ExperimentConfig().peak == pytest.approx(math.log(10))
