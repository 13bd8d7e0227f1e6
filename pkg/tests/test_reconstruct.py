import math

import numpy as np
import pytest

from csbsd import bp, model, sensing
from csbsd.reconstruct import CsBsdConfig, ReconResult, cs_bsd, oracle_mmse, stopping_epsilon_default


def instance(seed, n=256, ratio=0.5, q=0.05, snr=30.0, l=4):
    prior = model.PriorParams(q, 10.0)
    g = sensing.generate(n, int(n * ratio), l, seed=seed)
    sig = model.generate_signal(n, prior, seed=seed)
    sn = model.sigma_for_target_snr(g, sig, snr)
    meas = model.sense(sig, g, sn, seed=seed + 1)
    return g, sig, meas, prior.with_sigma_n(sn)


def test_config_validation():
    for kw in ({"epsilon": -1.0}, {"max_iters": 0}, {"conv_mode": "x"}, {"damping": 1.0},
               {"noise_model": "x"}):
        with pytest.raises(ValueError):
            CsBsdConfig(**kw)


def test_stopping_epsilon_default():
    assert stopping_epsilon_default(512, 1.0) == pytest.approx(24.89, abs=0.01)
    assert stopping_epsilon_default(512, 0.0) == 0.0


def test_high_snr_exact_recovery():
    # support recovery is judged on the full iteration budget; the residual
    # guard may stop on an iterate that still carries a near-zero false positive
    good = 0
    for seed in range(20):
        g, sig, meas, prior = instance(seed, snr=60.0)
        res = cs_bsd(meas.z, g, prior, CsBsdConfig(stop_on_residual=False))
        ok = np.array_equal(res.states, sig.states) and model.mse(res.estimate, sig.values) < 1e-6
        good += ok
        if np.array_equal(res.states, sig.states):
            orc = oracle_mmse(meas.z, g, prior, sig.states)
            assert np.array_equal(orc.estimate, res.estimate)
    assert good >= 19


def test_high_snr_default_stopping_meets_mse():
    for seed in range(20):
        g, sig, meas, prior = instance(seed, snr=60.0)
        res = cs_bsd(meas.z, g, prior)
        assert model.mse(res.estimate, sig.values) < 1e-6
        eps = stopping_epsilon_default(g.m, prior.sigma_n)
        assert res.residual_trace[-1] <= eps or res.iterations_run == 10


def test_all_zero_signal():
    g = sensing.generate(64, 32, 4, seed=0)
    zero = model.SparseSignal(np.zeros(64), np.zeros(64, dtype=np.int8))
    meas = model.sense(zero, g, 1.0, seed=0)
    prior = model.PriorParams(1e-6, 10.0, 1.0)
    res = cs_bsd(meas.z, g, prior)
    assert res.states.sum() == 0 and np.all(res.estimate == 0)
    assert res.residual_trace[0] == pytest.approx(np.linalg.norm(meas.noise_realization))
    assert np.linalg.norm(meas.z) <= stopping_epsilon_default(32, 1.0)
    assert res.iterations_run == 1
    assert res.warnings["empty_support"] == 1


def test_trace_is_finite_and_sized():
    g, sig, meas, prior = instance(3, ratio=0.2, snr=15.0)
    res = cs_bsd(meas.z, g, prior, CsBsdConfig(stop_on_residual=False))
    assert isinstance(res, ReconResult)
    assert res.iterations_run == len(res.residual_trace) == 10
    assert np.all(np.isfinite(res.residual_trace))
    assert np.all(res.estimate[res.states == 0] == 0)


def test_determinism_linear_mode():
    g, sig, meas, prior = instance(5, n=128)
    cfg = CsBsdConfig(conv_mode=bp.LINEAR, max_iters=4)
    a = cs_bsd(meas.z, g, prior, cfg)
    b = cs_bsd(meas.z, g, prior, cfg)
    assert a.estimate.tobytes() == b.estimate.tobytes()
    assert a.residual_trace == b.residual_trace


def test_options():
    g, sig, meas, prior = instance(7, snr=25.0)
    plain = cs_bsd(meas.z, g, prior, CsBsdConfig(stop_on_residual=False, max_iters=5))
    deferred = cs_bsd(meas.z, g, prior, CsBsdConfig(defer_mmse=True, max_iters=5))
    assert deferred.iterations_run == 5
    assert all(math.isnan(r) for r in deferred.residual_trace[:-1])
    assert np.array_equal(deferred.estimate, plain.estimate)
    best = cs_bsd(meas.z, g, prior, CsBsdConfig(keep_best=True, stop_on_residual=False, max_iters=5))
    res = sensing.residual_norm(g, best.estimate, meas.z)
    assert res == pytest.approx(min(plain.residual_trace))
    hist = cs_bsd(meas.z, g, prior, CsBsdConfig(record_history=True, stop_on_residual=False, max_iters=3))
    assert len(hist.history) == 3


def test_noiseless_path():
    g, sig, meas, prior = instance(9, snr=40.0)
    z = sensing.matvec(g, sig.values)
    res = cs_bsd(z, g, prior.with_sigma_n(0.0))
    assert res.warnings["noiseless"] == 1
    assert np.all(np.isfinite(res.estimate))


def test_debug_dump(tmp_path):
    g, sig, meas, prior = instance(2, n=64)
    cs_bsd(meas.z, g, prior, CsBsdConfig(debug_dump=str(tmp_path), max_iters=2, stop_on_residual=False))
    assert sorted(p.name for p in tmp_path.iterdir()) == ["posteriors_iter01.csv", "posteriors_iter02.csv"]


def test_dimension_mismatch():
    g, sig, meas, prior = instance(2, n=64)
    with pytest.raises(ValueError):
        cs_bsd(meas.z[:-1], g, prior)


def test_oracle_error_matches_trace_formula():
    errs, stars = [], []
    for seed in range(50):
        g, sig, meas, prior = instance(seed, n=1024, snr=35.0)
        res = oracle_mmse(meas.z, g, prior, sig.states)
        errs.append(model.mse(res.estimate, sig.values))
        supp = sensing.submatrix_on_support(g, sig.states)
        stars.append(model.mse_star(supp, prior, sig.values[sig.states == 1]))
    assert np.mean(errs) == pytest.approx(np.mean(stars), rel=0.2)


def test_oracle_noiseless_is_exact():
    g, sig, meas, prior = instance(4, n=256)
    res = oracle_mmse(sensing.matvec(g, sig.values), g, prior.with_sigma_n(0.0), sig.states)
    assert np.allclose(res.estimate, sig.values)


@pytest.mark.slow
def test_default_epsilon_terminates_early_at_35db():
    early = total = 0
    for seed in range(50):
        g, sig, meas, prior = instance(seed, n=1024, snr=35.0)
        res = cs_bsd(meas.z, g, prior)
        if np.array_equal(res.states, sig.states):
            total += 1
            early += res.iterations_run < 10
    assert total > 0 and early / total >= 0.9
