import numpy as np
import pytest

from hsdetect import experiments as ex
from hsdetect.checks import desk_config
from hsdetect.data import ExperimentConfig
from hsdetect.distributions import Hypothesis, ModelKind, Scenario
from hsdetect.errors import EmptyInput, InsufficientTrials


def _setup(cfg, detectors=("kelly", "acute", "spade")):
    bundle = cfg.bundle()
    return ex.Setup(cfg.background(bundle), bundle.t, cfg.n, cfg.seed, tuple(detectors),
                    cfg.chunk), bundle


def small_config(**kw):
    base = dict(p=8, n=24, nu=5.0, mu_level=1.0, sigma_scale=0.1, trials_h0=1000,
                trials_h1=1000, seed=5, chunk=256)
    base.update(kw)
    return ExperimentConfig(**base).validate()


# -- trial engine -----------------------------------------------------------------------

def test_single_trial_replay():
    setup, bundle = _setup(small_config())
    h0 = Scenario(bundle.t, hypothesis=Hypothesis.H0)
    a = ex.run_trials(setup, h0, "H0", 1)
    b = ex.run_trials(setup, h0, "H0", 1)
    for name in setup.detectors:
        assert a[name].tobytes() == b[name].tobytes()


def test_independent_of_workers_and_chunking():
    cfg = small_config()
    setup, bundle = _setup(cfg)
    scen = Scenario(bundle.t, 0.2, 0.9, ModelKind.MIXED)
    one = ex.run_trials(setup, scen, "H1", 700, workers=1)
    two = ex.run_trials(setup, scen, "H1", 700, workers=2)
    other = ex.Setup(setup.background, setup.t, setup.n, setup.seed, setup.detectors, 97)
    rechunked = ex.run_trials(other, scen, "H1", 700)
    for name in setup.detectors:
        assert one[name].tobytes() == two[name].tobytes() == rechunked[name].tobytes()


def test_tags_give_distinct_streams():
    setup, bundle = _setup(small_config())
    h0 = Scenario(bundle.t, hypothesis=Hypothesis.H0)
    a = ex.run_trials(setup, h0, "H0", 50)["kelly"]
    b = ex.run_trials(setup, h0, "other", 50)["kelly"]
    assert not np.array_equal(a, b)


def test_h0_statistics_nonnegative():
    setup, bundle = _setup(small_config())
    h0 = ex.run_trials(setup, Scenario(bundle.t, hypothesis=Hypothesis.H0), "H0", 1000)
    for name, s in h0.items():
        assert s.min() >= -1e-9, name


def test_h1_separation():
    setup, bundle = _setup(small_config())
    at0 = ex.run_trials(setup, Scenario(bundle.t, 0.0, 1.0, ModelKind.ADDITIVE), "a0", 1000)
    at5 = ex.run_trials(setup, Scenario(bundle.t, 0.5, 1.0, ModelKind.ADDITIVE), "a5", 1000)
    for name in setup.detectors:
        assert at5[name].mean() > at0[name].mean()


def test_trial_error_carries_index():
    cfg = small_config()
    bundle = cfg.bundle()
    setup = ex.Setup(cfg.background(bundle), np.zeros(cfg.p), cfg.n, cfg.seed, ("kelly",), 64)
    with pytest.raises(ex.TrialError) as info:
        ex.run_trials(setup, Scenario(bundle.t, hypothesis=Hypothesis.H0), "H0", 10)
    assert info.value.index == 0


# -- thresholds and intervals --------------------------------------------------------------

def test_threshold_examples(rng):
    assert ex.empirical_quantile_threshold([1, 2, 3, 4], 0.25) == 3.5
    assert ex.empirical_quantile_threshold([2.0] * 10, 0.3) == 2.0
    assert abs(ex.empirical_quantile_threshold(rng.standard_normal(10_000), 0.5)) < 0.05
    with pytest.raises(EmptyInput):
        ex.empirical_quantile_threshold([], 0.5)
    with pytest.raises(ValueError):
        ex.empirical_quantile_threshold([1.0], 1.0)


def test_threshold_exceedance_count(rng):
    s = rng.normal(size=1000)
    for level in (0.001, 0.01, 0.37, 0.5, 0.9):
        thr = ex.empirical_quantile_threshold(s, level)
        assert np.sum(s > thr) == round(level * 1000)


def test_wilson_interval():
    lo, hi = ex.wilson_interval(5, 10)
    assert lo == pytest.approx(0.2365931, abs=1e-6)
    assert hi == pytest.approx(0.7634069, abs=1e-6)
    lo, hi = ex.wilson_interval(0, 100)
    assert lo == 0.0 and 0 < hi < 0.04


# -- ROC ------------------------------------------------------------------------------------

def test_roc_validity(rng):
    c = ex.roc_curve(rng.normal(size=500), rng.normal(1, 1, 400), "x")
    assert (c.pfa[0], c.pd[0]) == (0.0, 0.0)
    assert (c.pfa[-1], c.pd[-1]) == (1.0, 1.0)
    assert np.all(np.diff(c.pfa) >= 0) and np.all(np.diff(c.pd) >= 0)
    assert np.all((c.ci_half_width >= 0) & (c.ci_half_width <= 0.5))
    thin = ex.roc_curve(rng.normal(size=5000), rng.normal(1, 1, 5000), "x", max_points=50)
    assert thin.pfa.size <= 50
    assert np.all(np.diff(thin.pfa) >= 0) and np.all(np.diff(thin.pd) >= 0)


def test_roc_no_information_is_diagonal(rng):
    N = 20_000
    c = ex.roc_curve(rng.normal(size=N), rng.normal(size=N))
    # two-sample Kolmogorov-Smirnov band at the 1% level
    assert np.max(np.abs(c.pd - c.pfa)) < 1.63 * np.sqrt(2 / N)


@pytest.mark.parametrize("name,truth,beta", [("kelly", "additive", 1.0),
                                              ("acute", "replacement", 0.5),
                                              ("spade", "mixed", 0.8)])
def test_roc_high_snr_saturates(name, truth, beta):
    # each detector under its own model, amplitude five times the per-band noise scale
    cfg = small_config(truth=truth, beta=beta, trials_h0=10_000, trials_h1=10_000,
                       chunk=2048, detectors=[name])
    cfg.alpha = 5 * cfg.sigma_scale
    _, s = ex.roc(cfg, cfg.bundle())
    pd, _, _, _ = ex.pd_at_pfa(s["H0"][name], s["H1"][name], 0.1)
    assert pd >= 0.99


def test_acute_dominates_kelly_under_replacement():
    cfg = desk_config(alpha=0.05, trials_h0=20_000, trials_h1=20_000, seed=77,
                      detectors=["kelly", "acute"])
    _, s = ex.roc(cfg, cfg.bundle())
    for pfa in np.logspace(-2, -1, 5):
        _, a_lo, _, _ = ex.pd_at_pfa(s["H0"]["acute"], s["H1"]["acute"], pfa)
        _, _, k_hi, _ = ex.pd_at_pfa(s["H0"]["kelly"], s["H1"]["kelly"], pfa)
        assert a_lo > k_hi, pfa


# -- P_fa gain ---------------------------------------------------------------------------------

def test_monotone_calibration():
    cfg = small_config(trials_h0=4000, trials_h1=4000)
    setup, bundle = _setup(cfg)
    s0 = np.sort(ex.run_trials(setup, Scenario(bundle.t, hypothesis=Hypothesis.H0), "H0",
                               4000)["acute"])
    h1 = ex.run_trials(setup, Scenario(bundle.t, 0.2, 0.9, ModelKind.MIXED), "H1", 4000)["acute"]
    pfas = [ex._pfa_with_ci(s0, h1, pd)[1] for pd in np.linspace(0.05, 0.95, 19)]
    assert np.all(np.diff(pfas) >= 0)


def test_self_gain_zero_and_flags():
    cfg = small_config(trials_h0=300, trials_h1=300, alpha=0.3, beta_grid=[0.5, 1.0])
    points = ex.pfa_gain_sweep(cfg, cfg.bundle(), include_self=True)
    for pt in points:
        assert pt.gain_db["kelly"] == 0.0 and pt.ci_db["kelly"] == 0.0
        for name in pt.flags:
            assert pt.events[name] == 0
        for name in ("acute", "spade"):
            if name in pt.flags or "kelly" in pt.flags:
                assert pt.gain_db[name] is None
            else:
                assert np.isfinite(pt.gain_db[name])
    assert any(pt.flags for pt in points)
    with pytest.raises(InsufficientTrials):
        ex.pfa_gain_sweep(cfg, cfg.bundle(), strict=True)


def test_gain_sign_matches_pfa_ratio():
    cfg = small_config(trials_h0=20_000, trials_h1=2000, alpha=0.2, beta_grid=[0.8])
    (pt,) = ex.pfa_gain_sweep(cfg, cfg.bundle())
    for name in ("acute", "spade"):
        expect = 10 * np.log10(pt.pfa["kelly"] / pt.pfa[name])
        assert pt.gain_db[name] == pytest.approx(expect)
        assert pt.ci_db[name] > 0


def test_calibrate_alpha_hits_target():
    cfg = small_config(truth="replacement")
    bundle = cfg.bundle()
    alpha = ex.calibrate_alpha(cfg, bundle, 0.5, 0.05, "kelly", trials=2000)
    setup = ex.Setup(cfg.background(bundle), bundle.t, cfg.n, 1234, ("kelly",), 512)
    h0 = ex.run_trials(setup, Scenario(bundle.t, hypothesis=Hypothesis.H0), "H0", 4000)["kelly"]
    h1 = ex.run_trials(setup, Scenario(bundle.t, alpha, 0, ModelKind.REPLACEMENT), "H1",
                       4000)["kelly"]
    pd, _, _, _ = ex.pd_at_pfa(h0, h1, 0.05)
    assert abs(pd - 0.5) < 0.06
