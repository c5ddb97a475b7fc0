import math

import numpy as np
import pytest
from scipy import integrate, optimize, special, stats

from hsdetect.distributions import (
    BackgroundModel,
    Family,
    Hypothesis,
    JointSample,
    ModelKind,
    Scenario,
    assemble,
    draw_raw,
    log_pdf,
    multivariate_gamma_log,
    profile_log_likelihood,
    sample_joint,
)
from hsdetect.errors import DimensionMismatch, DomainError
from hsdetect.experiments import trial_stream
from hsdetect.oracles import random_spd


def _draw(model, scen, n, count, tag):
    raw = np.stack([draw_raw(trial_stream(99, tag, i), model.p, n, model.family, model.nu)
                    for i in range(count)])
    return assemble(raw, model, scen, n)


# -- multivariate gamma -------------------------------------------------------------

def test_multigamma_examples():
    assert multivariate_gamma_log(1, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert multivariate_gamma_log(1, 0.5) == pytest.approx(0.5723649429247001)
    assert multivariate_gamma_log(2, 2.0) == pytest.approx(math.log(math.pi / 2))


@pytest.mark.parametrize("p,a", [(3, 2.5), (5, 7.1), (16, 30.0), (32, 48.0)])
def test_multigamma_matches_scipy(p, a):
    assert multivariate_gamma_log(p, a) == pytest.approx(special.multigammaln(a, p), rel=1e-13)


def test_multigamma_domain():
    with pytest.raises(DomainError):
        multivariate_gamma_log(3, 1.0)


# -- model and scenario invariants ------------------------------------------------------

def test_scenario_forces_beta():
    t = np.ones(3)
    assert Scenario(t, 0.3, 7.0, ModelKind.ADDITIVE).beta == 1.0
    assert Scenario(t, 0.3, 7.0, ModelKind.REPLACEMENT).beta == pytest.approx(0.7)
    assert Scenario(t, 0.3, 7.0, ModelKind.MIXED).beta == 7.0
    assert Scenario(t, 0.3, 7.0, ModelKind.MIXED, Hypothesis.H0).effective == (0.0, 1.0)
    with pytest.raises(DomainError):
        Scenario(t, 1.0, 1.0, ModelKind.REPLACEMENT)
    with pytest.raises(DomainError):
        Scenario(t, 0.0, -1.0, ModelKind.MIXED)


def test_background_requires_nu_above_two():
    with pytest.raises(DomainError):
        BackgroundModel(np.zeros(2), np.eye(2), 2.0, Family.STUDENT)
    BackgroundModel(np.zeros(2), np.eye(2), 2.0, Family.GAUSSIAN)
    with pytest.raises(DimensionMismatch):
        BackgroundModel(np.zeros(2), np.eye(3))


def test_sample_joint_checks(rng):
    model = BackgroundModel(np.zeros(3), np.eye(3))
    with pytest.raises(DomainError):
        sample_joint(model, Scenario(np.ones(3)), 3, rng)
    with pytest.raises(DimensionMismatch):
        sample_joint(model, Scenario(np.ones(2)), 8, rng)


# -- sampler ------------------------------------------------------------------------

def test_gaussian_column_covariance_identity():
    model = BackgroundModel(np.zeros(3), np.eye(3), family=Family.GAUSSIAN)
    y, _ = _draw(model, Scenario(np.ones(3), hypothesis=Hypothesis.H0), 4, 100_000, "gcov")
    C = y.T @ y / y.shape[0]
    assert np.max(np.abs(C - np.eye(3))) < 0.02


def test_student_marginal_ks_small():
    model = BackgroundModel([0.0], [[1.0]], 5.0)
    y, Z = _draw(model, Scenario([1.0], hypothesis=Hypothesis.H0), 2, 20_000, "ks")
    res = stats.kstest(Z[:, 0, 1], "t", args=(5, 0.0, math.sqrt(3 / 5)))
    assert res.pvalue > 0.01


def test_h1_mean_shift():
    t = np.array([1.0, 0.0, 0.0])
    model = BackgroundModel(np.zeros(3), np.eye(3), 5.0)
    y, Z = _draw(model, Scenario(t, 1.0, 1.0, ModelKind.MIXED), 4, 100_000, "shift")
    diff = y.mean(axis=0) - Z[:, :, 0].mean(axis=0)
    se = np.sqrt(2 / y.shape[0])
    assert np.all(np.abs(diff - t) < 4 * se)


def test_sampler_reproducible():
    model = BackgroundModel(np.zeros(4), random_spd(np.random.default_rng(1), 4), 5.0)
    scen = Scenario(np.ones(4), 0.2, 0.9, ModelKind.MIXED)
    a = sample_joint(model, scen, 9, trial_stream(3, "x", 5))
    b = sample_joint(model, scen, 9, trial_stream(3, "x", 5))
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.Z, b.Z)


# -- densities ----------------------------------------------------------------------

def _random_setup(rng, p=3, n=6, nu=5.0):
    model = BackgroundModel(rng.normal(size=p), random_spd(rng, p), nu)
    sample = sample_joint(model, Scenario(rng.normal(size=p), 0.4, 0.8, ModelKind.MIXED),
                          n, rng)
    return model, sample


def test_log_pdf_h0_equals_h1_at_null_point(rng):
    model, sample = _random_setup(rng)
    t = rng.normal(size=3)
    h0 = log_pdf(sample, model, Scenario(t, hypothesis=Hypothesis.H0))
    h1 = log_pdf(sample, model, Scenario(t, 0.0, 1.0, ModelKind.MIXED))
    assert h0 == h1


def test_log_pdf_scalar_hand_value():
    nu = 3.0
    model = BackgroundModel([0.0], [[1.0]], nu)
    sample = JointSample([0.0], [[0.0]])
    # p=1, n=1: C = Gamma((nu+2)/2) / (pi Gamma(nu/2)) (nu-2)^{-1}, kernel (1+0)^{-(nu+2)/2}
    C = math.gamma((nu + 2) / 2) / (math.pi * math.gamma(nu / 2) * (nu - 2))
    value = log_pdf(sample, model, Scenario([1.0], hypothesis=Hypothesis.H0))
    assert value == pytest.approx(math.log(C * 1.0), abs=1e-12)


@pytest.mark.parametrize("family", [Family.STUDENT, Family.GAUSSIAN])
def test_log_pdf_scaling_rule(rng, family):
    p, n, c = 3, 6, 2.7
    sigma = random_spd(rng, p)
    mu = rng.normal(size=p)
    t = rng.normal(size=p)
    scen = Scenario(t, 0.3, 0.8, ModelKind.MIXED)
    sample = sample_joint(BackgroundModel(mu, sigma, 5.0, family), scen, n, rng)
    base = log_pdf(sample, BackgroundModel(mu, sigma, 5.0, family), scen)
    scaled = log_pdf(JointSample(c * sample.y, c * sample.Z),
                     BackgroundModel(c * mu, c * c * sigma, 5.0, family),
                     Scenario(c * t, 0.3, 0.8, ModelKind.MIXED))
    assert scaled - base == pytest.approx(-p * (n + 1) * math.log(c), rel=1e-10)


@pytest.mark.parametrize("nu", [2.5, 5.0])
def test_log_pdf_normalized_p1_n1(nu):
    model = BackgroundModel([0.0], [[1.0]], nu)
    h0 = Scenario([1.0], hypothesis=Hypothesis.H0)

    def f(y, z):
        return math.exp(log_pdf(JointSample([y], [[z]]), model, h0))

    mass, _ = integrate.dblquad(f, -np.inf, np.inf, -np.inf, np.inf, epsabs=1e-7)
    assert mass == pytest.approx(1.0, abs=1e-3)


def test_log_pdf_gaussian_matches_scipy(rng):
    p, n = 3, 5
    mu = rng.normal(size=p)
    sigma = random_spd(rng, p)
    model = BackgroundModel(mu, sigma, family=Family.GAUSSIAN)
    sample = sample_joint(model, Scenario(np.ones(p), hypothesis=Hypothesis.H0), n, rng)
    X = np.column_stack([sample.y, sample.Z])
    ref = stats.multivariate_normal(mu, sigma).logpdf(X.T).sum()
    assert log_pdf(sample, model, Scenario(np.ones(p), hypothesis=Hypothesis.H0)) == \
        pytest.approx(ref, rel=1e-12)


# -- profile likelihood --------------------------------------------------------------

def _unpack(theta, p):
    mu = theta[:p]
    L = np.zeros((p, p))
    L[np.tril_indices(p)] = theta[p:]
    return mu, L @ L.T + 1e-12 * np.eye(p)


@pytest.mark.parametrize("family", [Family.STUDENT, Family.GAUSSIAN])
def test_profile_bounds_direct_maximization(rng, family):
    p, n, nu = 2, 8, 5.0
    model = BackgroundModel(rng.normal(size=p), random_spd(rng, p), nu, family)
    t = rng.normal(size=p)
    scen = Scenario(t, 0.3, 0.9, ModelKind.MIXED)
    sample = sample_joint(model, scen, n, rng)
    prof = profile_log_likelihood(sample, t, 0.3, 0.9, nu, family)

    def neg(theta):
        mu, sigma = _unpack(theta, p)
        return -log_pdf(sample, BackgroundModel(mu, sigma, nu, family), scen)

    best = -np.inf
    for k in range(5):
        L0 = np.linalg.cholesky(random_spd(rng, p))
        x0 = np.concatenate([rng.normal(size=p), L0[np.tril_indices(p)]])
        res = optimize.minimize(neg, x0, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
        assert -res.fun <= prof + 1e-6
        best = max(best, -res.fun)
    assert best == pytest.approx(prof, abs=1e-4)


def test_profile_maximizer_is_gamma_scatter(rng):
    p, n, nu = 3, 10, 5.0
    model, sample = _random_setup(rng, p, n, nu)
    t = rng.normal(size=p)
    scen = Scenario(t, hypothesis=Hypothesis.H0)
    X = np.column_stack([sample.y, sample.Z])
    mu_star = X.mean(axis=1)
    Xc = X - mu_star[:, None]
    gamma = (nu + p - 1) / ((nu - 2) * (n + 1))
    sigma_star = gamma * Xc @ Xc.T
    top = log_pdf(sample, BackgroundModel(mu_star, sigma_star, nu), scen)
    assert top == pytest.approx(profile_log_likelihood(sample, t, 0.0, 1.0, nu), rel=1e-12)
    for _ in range(100):
        D = rng.normal(size=(p, p))
        D = 0.05 * (D + D.T) / 2
        sigma = sigma_star + D @ sigma_star + sigma_star @ D.T
        if np.min(np.linalg.eigvalsh(sigma)) <= 0:
            continue
        assert log_pdf(sample, BackgroundModel(mu_star, sigma, nu), scen) < top


def test_profile_null_point_difference_zero(rng):
    _, sample = _random_setup(rng)
    t = rng.normal(size=3)
    a = profile_log_likelihood(sample, t, 0.0, 1.0, 5.0)
    assert a - profile_log_likelihood(sample, np.zeros(3), 0.0, 1.0, 5.0) == 0.0
    assert profile_log_likelihood(sample, t, 0.1, 0.0, 5.0) == -np.inf


def test_profile_nu_cancellation(rng):
    for _ in range(20):
        _, sample = _random_setup(rng, 4, 9)
        t = rng.normal(size=4)
        a, b = rng.uniform(-1, 1), rng.uniform(0.3, 2)
        diffs = [profile_log_likelihood(sample, t, a, b, nu) -
                 profile_log_likelihood(sample, t, 0.0, 1.0, nu)
                 for nu in (2.5, 3.0, 5.0, 10.0, 100.0)]
        diffs.append(profile_log_likelihood(sample, t, a, b, family=Family.GAUSSIAN) -
                     profile_log_likelihood(sample, t, 0.0, 1.0, family=Family.GAUSSIAN))
        assert max(diffs) - min(diffs) <= 1e-10
