"""Verification suites shared by the ``selfcheck`` command and the tests.

Each check returns a :class:`CheckResult`; sizes are parameters so the
command line can run quick versions while the test-suite runs the full ones.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import detectors as det
from . import experiments as ex
from . import oracles
from .data import ExperimentConfig
from .distributions import (
    BackgroundModel,
    Family,
    Hypothesis,
    JointSample,
    ModelKind,
    Scenario,
    assemble,
    draw_raw,
)
from .linalg import centering_projector, logdet

KIND_OF = {"kelly": ModelKind.ADDITIVE, "acute": ModelKind.REPLACEMENT, "spade": ModelKind.MIXED}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items())
        return f"[{status}] {self.name} ({self.seconds:.1f}s) {info}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        head = res[0] if isinstance(res, tuple) else res
        head.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def rel_err(a, b, floor=1e-12):
    """``|a - b|`` over ``max(|a|, |b|)``, with an absolute floor for tiny values."""
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 1 else abs(a - b) / max(scale, floor / 1e-8) * 1.0


def random_instance(rng, p, n, kind):
    """Random background, training set and pixel drawn under ``kind``."""
    mu = rng.normal(0, 2, p)
    sigma = oracles.random_spd(rng, p)
    t = rng.normal(0, 1, p) + 1.0
    bg = BackgroundModel(mu, sigma, 5.0, Family.STUDENT)
    alpha = rng.uniform(0.0, 0.8)
    beta = rng.uniform(0.5, 1.5)
    scen = Scenario(t, alpha, beta, ModelKind(kind), Hypothesis.H1)
    raw = draw_raw(rng, p, n, bg.family, bg.nu)
    y, Z = assemble(raw[None], bg, scen, n)
    return JointSample(y[0], Z[0]), t


def _close(a, b, rtol):
    return abs(a - b) <= rtol * max(abs(a), abs(b)) + 1e-12


@_timed
def nu_invariance(instances=200, p=6, n=24, nus=(3.0, 5.0, 50.0), seed=11):
    """Profile-likelihood GLRs (student at several nu, Gaussian) against the
    closed-form detectors."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(instances):
        for name, kind in KIND_OF.items():
            sample, t = random_instance(rng, p, n, kind)
            ts = det.summarize(sample.Z)
            closed = det.detect(ts, sample.y, t, name).log_glr
            routes = [det.profile_log_glr(sample, t, kind, nu, Family.STUDENT)[0] for nu in nus]
            routes.append(det.profile_log_glr(sample, t, kind, family=Family.GAUSSIAN)[0])
            for r in routes:
                worst = max(worst, abs(r - closed) / max(abs(r), abs(closed), 1.0))
    return CheckResult("nu-invariance", worst <= 1e-8,
                       {"instances": instances, "max_rel_err": worst, "tol": 1e-8})


@_timed
def oracle_equivalence(instances=1000, seed=12, max_p=8, max_n=32):
    """Closed-form ACUTE/SPADE objective values against grid + golden-section oracles."""
    rng = np.random.default_rng(seed)
    worst = {"acute": 0.0, "spade": 0.0}
    for i in range(instances):
        p = int(rng.integers(2, max_p + 1))
        n = int(rng.integers(p + 2, max_n + 1))
        kind = rng.choice(["replacement", "mixed", "additive"])
        sample, t = random_instance(rng, p, n, kind)
        ts = det.summarize(sample.Z)
        a = det.acute(ts, sample.y, t).log_glr
        s = det.spade(ts, sample.y, t).log_glr
        worst["acute"] = max(worst["acute"], abs(a - oracles.acute_oracle(ts, sample.y, t)[0]))
        worst["spade"] = max(worst["spade"], abs(s - oracles.spade_oracle(ts, sample.y, t)[0]))
    ok = max(worst.values()) <= 1e-8
    return CheckResult("oracle-equivalence", ok,
                       {"instances": instances, "acute_gap": worst["acute"],
                        "spade_gap": worst["spade"], "tol": 1e-8})


def m_mu_residual(x, Z, mu):
    """Relative residual of the expanded form of ``M(mu)``."""
    n = Z.shape[1]
    X = np.column_stack([x, Z])
    m = (x + Z.sum(axis=1)) / (n + 1)
    expanded = (n + 1) * np.outer(mu - m, mu - m) + X @ centering_projector(n + 1) @ X.T
    D = X - mu[:, None]
    direct = D @ D.T
    return np.max(np.abs(expanded - direct)) / max(np.max(np.abs(direct)), 1.0)


def partitioned_det_residual(x, Z):
    """Relative residual of the rank-one determinant factorization with ``Q = P_{n+1}``."""
    n = Z.shape[1]
    X = np.column_stack([x, Z])
    lhs = logdet(X @ centering_projector(n + 1) @ X.T)
    zbar = Z.mean(axis=1)
    S = Z @ centering_projector(n) @ Z.T
    d = x - zbar
    rhs = logdet(S) + np.log1p(n / (n + 1) * d @ np.linalg.solve(S, d))
    # compare determinants: relative error of det = |exp(lhs - rhs) - 1|
    return abs(np.expm1(lhs - rhs))


def general_q_det_residual(x, Z, Q):
    """Determinant factorization for a general symmetric ``Q`` (``Q11 != 0``)."""
    X = np.column_stack([x, Z])
    q11 = Q[0, 0]
    q21 = Q[1:, 0]
    q22 = Q[1:, 1:]
    q2_1 = q22 - np.outer(q21, q21) / q11
    A = Z @ q2_1 @ Z.T
    v = x + Z @ q21 / q11
    lhs = np.linalg.det(X @ Q @ X.T)
    rhs = np.linalg.det(A) * (1 + q11 * v @ np.linalg.solve(A, v))
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs))


@_timed
def derivation_identities(instances=500, seed=13, max_p=8, max_n=24):
    rng = np.random.default_rng(seed)
    worst_m = worst_d = worst_q = 0.0
    for _ in range(instances):
        p = int(rng.integers(1, max_p + 1))
        n = int(rng.integers(p + 1, max_n + 1))
        Z = rng.normal(size=(p, n)) * rng.uniform(0.2, 3) + rng.normal(0, 2, (p, 1))
        x = rng.normal(0, 2, p)
        mu = rng.normal(0, 2, p)
        worst_m = max(worst_m, m_mu_residual(x, Z, mu))
        worst_d = max(worst_d, partitioned_det_residual(x, Z))
        G = rng.normal(size=(n + 1, n + 1))
        Q = G @ G.T / (n + 1) + np.eye(n + 1)
        worst_q = max(worst_q, general_q_det_residual(x, Z, Q))
    ok = max(worst_m, worst_d, worst_q) <= 1e-8
    return CheckResult("derivation-identities", ok,
                       {"instances": instances, "M_mu": worst_m, "det_P": worst_d,
                        "det_Q": worst_q, "tol": 1e-8})


def _draw_many(model, n, draws, seed, tag):
    setup_raw = np.stack([draw_raw(ex.trial_stream(seed, tag, i), model.p, n, model.family,
                                   model.nu) for i in range(draws)])
    scen = Scenario(np.ones(model.p), hypothesis=Hypothesis.H0)
    out_y, out_Z = [], []
    for start in range(0, draws, 4096):
        y, Z = assemble(setup_raw[start:start + 4096], model, scen, n)
        out_y.append(y)
        out_Z.append(Z)
    return np.concatenate(out_y), np.concatenate(out_Z)


@_timed
def sampler_validity(draws=100_000, seed=14, nu=5.0):
    """KS test of the p=1 marginal, column covariance at p=4, and the
    shared-mixing dependence between columns."""
    detail = {}
    # p = 1 marginal against the scaled Student t
    m1 = BackgroundModel([0.0], [[1.0]], nu, Family.STUDENT)
    y, Z = _draw_many(m1, 2, draws, seed, "ks")
    scale = np.sqrt((nu - 2) / nu)
    ks = stats.kstest(Z[:, 0, 0], "t", args=(nu, 0.0, scale))
    detail["ks_pvalue"] = float(ks.pvalue)
    ok_ks = ks.pvalue > 0.01

    # column covariance at p = 4
    p, n = 4, 6
    rng = np.random.default_rng(seed)
    sigma = oracles.random_spd(rng, p)
    mu = rng.normal(size=p)
    worst_z = {}
    corr = {}
    for family in (Family.STUDENT, Family.GAUSSIAN):
        model = BackgroundModel(mu, sigma, nu, family)
        y, Z = _draw_many(model, n, draws, seed, f"cov/{family.value}")
        D = Z - mu[None, :, None]
        per_draw = np.einsum("kin,kjn->kij", D, D) / n
        mean = per_draw.mean(axis=0)
        se = per_draw.std(axis=0, ddof=1) / np.sqrt(draws)
        iu = np.triu_indices(p)
        zscores = np.abs(mean - sigma)[iu] / se[iu]
        worst_z[family.value] = float(zscores.max())
        a = D[:, 0, 0] ** 2
        b = D[:, 0, 1] ** 2
        r = float(np.corrcoef(a, b)[0, 1])
        half = 1.959963984540054 / np.sqrt(draws - 3)
        lo, hi = np.tanh(np.arctanh(r) - half), np.tanh(np.arctanh(r) + half)
        corr[family.value] = (r, float(lo), float(hi))
    detail["cov_max_z_student"] = worst_z["student"]
    detail["cov_max_z_gaussian"] = worst_z["gaussian"]
    detail["sq_corr_student"] = corr["student"][0]
    detail["sq_corr_gaussian"] = corr["gaussian"][0]
    ok_cov = max(worst_z.values()) <= 3.0
    ok_dep = corr["student"][1] > 0 and corr["gaussian"][1] <= 0 <= corr["gaussian"][2]
    detail["ks_ok"], detail["cov_ok"], detail["dependence_ok"] = ok_ks, ok_cov, ok_dep
    return CheckResult("sampler-validity", ok_ks and ok_cov and ok_dep, detail)


def desk_config(**overrides):
    """Synthetic scene used for the figure reproductions.

    AR(1) covariance (rho = 0.9) scaled to a 0.05 per-band standard
    deviation, a unit-norm smooth signature and a background mean of the
    same magnitude, so that the background mean and the target are both
    many noise standard deviations from zero.
    """
    base = dict(p=16, n=40, family="student", nu=5.0, rho=0.9, mu_level=1.0,
                sigma_scale=0.05, truth="replacement", alpha=0.05, seed=2020,
                trials_h0=100_000, trials_h1=100_000, chunk=2048)
    base.update(overrides)
    return ExperimentConfig(**base).validate()


@_timed
def roc_ordering(trials=100_000, pfas=(1e-2, 3e-2), seed=2020, workers=1,
                 pilot_trials=4000):
    """ACUTE >= SPADE >= Kelly in P_d under replacement truth, beyond joint CIs."""
    cfg = desk_config(trials_h0=trials, trials_h1=trials, seed=seed)
    bundle = cfg.bundle()
    cfg.alpha = ex.calibrate_alpha(cfg, bundle, 0.3, 1e-2, "kelly", trials=pilot_trials,
                                   workers=workers)
    _, samples = ex.roc(cfg, bundle, workers)
    detail = {"alpha": cfg.alpha}
    ok = True
    for pfa in pfas:
        res = {d: ex.pd_at_pfa(samples["H0"][d], samples["H1"][d], pfa) for d in det.DETECTORS}
        for d in det.DETECTORS:
            detail[f"pd_{d}@{pfa:g}"] = res[d][0]
        ok &= res["acute"][1] >= res["spade"][2]
        ok &= res["spade"][1] >= res["kelly"][2]
    detail["kelly_pd_target"] = 0.3
    return CheckResult("fig1-roc-ordering", bool(ok), detail)


def gain_criteria(points, alpha):
    """Evaluate the three gain orderings on a sweep; returns (ok, detail)."""
    ln10 = np.log(10)
    by_beta = {round(pt.beta, 12): pt for pt in points}
    b_rm = round(1 - alpha, 12)

    def joint(pt):
        return 10 / ln10 * np.hypot(pt.log_half_width["acute"], pt.log_half_width["spade"])

    detail = {}
    pt = by_beta[b_rm]
    ga, gs = pt.gain_db["acute"], pt.gain_db["spade"]
    ok_a = ga is not None and gs is not None and ga >= gs - joint(pt)
    detail["a_acute_vs_spade_at_1-alpha"] = (ga, gs, float(joint(pt)))

    pt = by_beta[1.0]
    gs, cs = pt.gain_db["spade"], pt.ci_db["spade"]
    ga, ca = pt.gain_db["acute"], pt.ci_db["acute"]
    ok_b_spade = gs is not None and abs(gs) <= cs
    ok_b_acute = ga is not None and ga + ca < 0
    detail["b_spade_at_1"] = (gs, cs)
    detail["b_acute_at_1"] = (ga, ca)

    betas = sorted(by_beta)
    ends = [betas[0], betas[-1]]
    ok_c = True
    for b in ends:
        pt = by_beta[b]
        ga, gs = pt.gain_db["acute"], pt.gain_db["spade"]
        this = ga is not None and gs is not None and gs >= ga - joint(pt)
        detail[f"c_spade_vs_acute_at_{b:g}"] = (gs, ga, float(joint(pt)))
        ok_c &= this
    ok = {"a": ok_a, "b_spade": ok_b_spade, "b_acute": ok_b_acute, "c": ok_c}
    detail["ok"] = {k: bool(v) for k, v in ok.items()}
    return all(ok.values()), detail


@_timed
def pfa_gain_ordering(trials_h0=1_000_000, trials_h1=100_000, alpha=0.05, seed=2021,
                      workers=1):
    cfg = desk_config(alpha=alpha, trials_h0=trials_h0, trials_h1=trials_h1, seed=seed,
                      beta_grid=[0.8, 0.9, 1 - alpha, 1.0, 1.1], operating_point="fixed_pd",
                      operating_value=0.5)
    points = ex.pfa_gain_sweep(cfg, cfg.bundle(), workers)
    ok, detail = gain_criteria(points, alpha)
    detail["min_events"] = min(min(pt.events.values()) for pt in points)
    return CheckResult("fig2-pfa-gain-ordering", bool(ok), detail), points


def affine_residuals(rng, p=6, n=24):
    """Largest relative change of each detector under its invariance group."""
    sample, t = random_instance(rng, p, n, "mixed")
    y, Z = sample.y, sample.Z
    A = rng.normal(size=(p, p)) + 3 * np.eye(p)
    b = rng.normal(0, 2, p)
    k = rng.normal()

    def stats_of(y_, Z_, t_):
        ts = det.summarize(Z_)
        return {d: det.detect(ts, y_, t_, d).log_glr for d in det.DETECTORS}

    base = stats_of(y, Z, t)
    linear = stats_of(A @ y, A @ Z, A @ t)
    shift_k = stats_of(A @ y + b, A @ Z + b[:, None], A @ t)
    shift_a = stats_of(A @ y + b, A @ Z + b[:, None], A @ t + b)
    bt = k * (A @ t)
    shift_s = stats_of(A @ y + bt, A @ Z + bt[:, None], A @ t)

    def r(u, v):
        return abs(u - v) / max(abs(u), abs(v), 1.0)

    return {
        "linear": max(r(base[d], linear[d]) for d in det.DETECTORS),
        "kelly_translation": r(base["kelly"], shift_k["kelly"]),
        "acute_translation": r(base["acute"], shift_a["acute"]),
        "spade_translation_along_t": r(base["spade"], shift_s["spade"]),
    }


@_timed
def invariance_suite(instances=200, h0_trials=100_000, seed=15, workers=1):
    """Affine invariance and non-negativity of the statistics under H0."""
    rng = np.random.default_rng(seed)
    worst = {}
    for _ in range(instances):
        for key, val in affine_residuals(rng).items():
            worst[key] = max(worst.get(key, 0.0), val)
    ok_aff = max(worst.values()) <= 1e-8
    cfg = desk_config(trials_h0=h0_trials, seed=seed)
    bundle = cfg.bundle()
    setup = ex.Setup(cfg.background(bundle), bundle.t, cfg.n, cfg.seed, det.DETECTORS, 2048)
    h0 = ex.run_trials(setup, Scenario(bundle.t, hypothesis=Hypothesis.H0), "H0", h0_trials,
                       workers)
    mins = {d: float(h0[d].min()) for d in det.DETECTORS}
    ok_nn = min(mins.values()) >= -1e-9 and float(h0["kelly"].max()) < 1
    detail = {f"affine_{k}": v for k, v in worst.items()}
    detail.update({f"min_{d}": v for d, v in mins.items()})
    return CheckResult("invariance", ok_aff and ok_nn, detail)
