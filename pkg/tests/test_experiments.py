import math

import numpy as np
import pytest

from conftest import lattice_pair
from hopquant import experiments as ex
from hopquant.experiments import (
    CSV_HEADER,
    ExperimentConfig,
    SeriesRow,
    estimate_P_minimum,
    estimate_P_random,
    run_fig1,
    run_fig2,
    run_fig3,
    run_fig4,
    sample_hybrid,
    table_passed,
    table_to_csv,
)


def small(**kw):
    base = dict(N=60, m_list=(1, 4), A0_grid=(0.0, 1.0), beta_list=(0.0, 2.0), trials=4, samples_per_trial=300)
    base.update(kw)
    return ExperimentConfig(**base)


def lattice_instance(cfg, trial, A0=0.0, beta=0.0):
    return lattice_pair(cfg.N, trial, beta=beta)[0]


def lattice_quantizer(inst, m, scheme="zero-segment"):
    # rebuild the exact level copy of a lattice instance
    step = 0.25
    K = np.rint(inst.A / step).astype(np.int64)
    return ex.QuantizedProblem(K, step, 0.0, inst.B, int(np.abs(K).max()))


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(N=1)
    with pytest.raises(ValueError):
        ExperimentConfig(trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(m_list=())
    assert isinstance(ExperimentConfig(m_list=[1, 2]).m_list, tuple)


def test_series_row_passed():
    assert SeriesRow(1, 0.10, 0.001, 0.105, 10, tol=0.012).passed
    assert not SeriesRow(1, 0.10, 0.001, 0.13, 10, tol=0.012).passed
    assert SeriesRow(1, 0.10, 0.02, 0.15, 10).passed
    assert SeriesRow(1, 0.3, 0.0, float("nan"), 1).passed


def test_exact_copy_estimators_vanish():
    cfg = small()
    row = estimate_P_random(cfg, 4, instance_factory=lattice_instance, quantizer_factory=lattice_quantizer)
    assert row.mc_mean == 0.0
    row = estimate_P_minimum(cfg, 4, instance_factory=lattice_instance, quantizer_factory=lattice_quantizer)
    assert row.mc_mean == 0.0
    data = sample_hybrid(cfg, 4, instance_factory=lattice_instance, quantizer_factory=lattice_quantizer)
    assert np.all(data[:, 0] == 0.0) and np.all(data[:, 1] == 0.0)


def test_random_point_estimate_near_theory():
    cfg = small(N=1000, trials=6, samples_per_trial=2000)
    row = estimate_P_random(cfg, 1)
    assert row.theory == pytest.approx(0.108, abs=0.002)
    assert row.passed
    assert row.n_samples == 12000


def test_strong_field_suppresses_error():
    cfg = small(N=200, trials=4, samples_per_trial=1000)
    assert estimate_P_random(cfg, 1, beta=4.0).mc_mean < 0.2 * estimate_P_random(cfg, 1).mc_mean


def test_instances_shared_across_m():
    cfg = small()
    a = ex.default_instance(cfg, 3)
    b = ex.default_instance(cfg, 3)
    assert np.array_equal(a.A, b.A)
    assert not np.array_equal(a.A, ex.default_instance(cfg, 4).A)
    # the mean shift is common-random-number: only the offset differs
    shifted = ex.default_instance(cfg, 3, A0=1.0)
    assert np.allclose(shifted.centered, a.centered)


def test_make_quantized_schemes():
    inst = ex.default_instance(small(N=200), 0)
    bq = ex.make_quantized(inst, 1, "binarized")
    assert 0 not in set(np.unique(bq.K[~np.eye(200, dtype=bool)]))
    assert bq.C == pytest.approx(np.abs(inst.centered[np.triu_indices(200, 1)]).mean())
    with pytest.raises(ValueError):
        ex.make_quantized(inst, 1, "other")


def test_fig1_shape():
    cfg = small(N=200, A0_grid=(0.0, 0.5, 1.0), trials=3, samples_per_trial=1500, baseline_binarized=True)
    table = run_fig1(cfg)
    assert list(table) == ["beta=0", "beta=2", "binarized"]
    zero = [r.theory for r in table["beta=0"]]
    assert np.all(np.diff(zero) < 0)
    assert all(a.theory > b.theory for a, b in zip(table["beta=0"], table["beta=2"]))
    assert table["binarized"][0].mc_mean > table["beta=0"][0].mc_mean


def test_fig2_series():
    table = run_fig2(small(N=150, m_list=(1, 2, 8), trials=4, samples_per_trial=1000))
    for name in ("random", "minimum"):
        assert [r.x for r in table[name]] == [1.0, 2.0, 8.0]
        assert np.all(np.diff([r.theory for r in table[name]]) < 0)
    assert 1.1 < table["minimum"][0].extra["r_mean"] < 1.6


def test_fig3_fig4_structure():
    cfg = small(N=120, m_list=(1, 8), trials=4, baseline_binarized=True)
    t3, t4 = run_fig3(cfg), run_fig4(cfg)
    assert [r.x for r in t3["delta_E"]] == [1.0, 8.0]
    assert all(r.mc_mean >= 0 for r in t3["delta_E"])
    assert t4["d_over_N"][0].mc_mean > t4["d_over_N"][1].mc_mean
    assert set(t4) == {"d_over_N", "binarized"}
    assert "delta_E" in t4["binarized"][0].extra


def test_csv_format_and_reproducibility():
    cfg = small(m_list=(1,), trials=2)
    a = table_to_csv(run_fig2(cfg))
    b = table_to_csv(run_fig2(cfg))
    assert a == b
    lines = a.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 3
    assert a != table_to_csv(run_fig2(small(m_list=(1,), trials=2, seed=1)))


def test_parallel_matches_serial(monkeypatch):
    cfg = small(m_list=(1,), trials=3)
    serial = table_to_csv(run_fig2(cfg))
    monkeypatch.setenv(ex.WORKERS_ENV, "2")
    assert table_to_csv(run_fig2(cfg)) == serial


def test_table_passed():
    good = SeriesRow(1, 0.1, 0.0, 0.1, 1)
    bad = SeriesRow(1, 0.5, 0.0, 0.1, 1)
    assert table_passed({"a": [good]})
    assert not table_passed({"a": [good], "b": [bad]})


def test_summary_stderr():
    mean, se = ex._summary([1.0, 2.0, 3.0])
    assert mean == 2.0 and se == pytest.approx(1 / math.sqrt(3))
    assert ex._summary([4.0]) == (4.0, 0.0)
