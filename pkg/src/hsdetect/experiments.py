"""Monte-Carlo harness: trial engine, threshold calibration, ROC and P_fa gain.

Every trial owns a random stream derived from ``(seed, tag, trial index)``
so results do not depend on how trials are split between workers.  Trials
are processed in fixed-size blocks: raw variates are drawn per trial, then
sampling and detection run vectorized over the block.
"""

import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import detectors as det
from .distributions import Hypothesis, ModelKind, Scenario, assemble, draw_raw
from .errors import EmptyInput, HSDetectError, InsufficientTrials

__all__ = [
    "TrialError",
    "Setup",
    "RocCurve",
    "PfaGainPoint",
    "CI_METHOD",
    "trial_stream",
    "run_trials",
    "empirical_quantile_threshold",
    "wilson_interval",
    "roc_curve",
    "roc",
    "pd_at_pfa",
    "pfa_gain_sweep",
    "calibrate_alpha",
]

Z_95 = 1.959963984540054

CI_METHOD = ("95% Wilson score intervals on empirical probabilities; P_fa gain "
             "intervals combine, to first order on the log scale, the Wilson interval "
             "of each P_fa with the shift of the calibrated threshold over the Wilson "
             "interval of the target P_d.  Chosen by this tool, not taken from the source study.")


class TrialError(HSDetectError):
    """A detector or sampler failure inside the Monte-Carlo loop."""

    def __init__(self, index, cause):
        super().__init__(f"trial {index}: {type(cause).__name__}: {cause}")
        self.index = index
        self.cause = cause


def _tag_code(tag):
    return zlib.crc32(tag.encode("utf-8"))


def trial_stream(seed, tag, index):
    """Independent generator for one trial, keyed on ``(seed, tag, index)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_tag_code(tag), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class Setup:
    """Immutable description of what a block of trials draws and evaluates."""

    background: object
    t: np.ndarray
    n: int
    seed: int
    detectors: tuple = det.DETECTORS
    chunk: int = 1024


def _run_block(setup, scenario, tag, start, stop):
    model = setup.background
    p, n = model.p, setup.n
    raw = np.stack([draw_raw(trial_stream(setup.seed, tag, i), p, n, model.family, model.nu)
                    for i in range(start, stop)])
    try:
        y, Z = assemble(raw, model, scenario, n)
        zbar, _, _, W = det.summarize_batch(Z)
        res = det.detect_batch(y, zbar, W, setup.t, n, setup.detectors)
    except HSDetectError:
        # locate the failing trial
        for k, i in enumerate(range(start, stop)):
            try:
                y, Z = assemble(raw[k:k + 1], model, scenario, n)
                zbar, _, _, W = det.summarize_batch(Z)
                det.detect_batch(y, zbar, W, setup.t, n, setup.detectors)
            except HSDetectError as exc:
                raise TrialError(i, exc) from exc
        raise
    return {name: np.asarray(res[name][0], dtype=float) for name in setup.detectors}


def _run_block_args(args):
    return _run_block(*args)


def run_trials(setup, scenario, tag, trials, workers=1):
    """Statistics of ``trials`` independent draws under ``scenario``.

    Returns a dict ``detector -> ndarray`` ordered by trial index.  The
    output is identical for any ``workers``.
    """
    trials = int(trials)
    bounds = [(s, min(s + setup.chunk, trials)) for s in range(0, trials, setup.chunk)]
    jobs = [(setup, scenario, tag, a, b) for a, b in bounds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block_args, jobs))
    else:
        parts = [_run_block_args(j) for j in jobs]
    if not parts:
        return {name: np.empty(0) for name in setup.detectors}
    return {name: np.concatenate([part[name] for part in parts]) for name in setup.detectors}


# -- calibration ----------------------------------------------------------------

def empirical_quantile_threshold(stats, level):
    """Threshold whose exceedance fraction (``stat > thr``) is ``level``.

    The number of exceedances is ``round(level * N)``; the threshold sits
    midway between the two order statistics that bracket it.  Use
    ``level = P_fa`` on H0 samples or ``level = P_d`` on H1 samples.
    """
    s = np.sort(np.asarray(stats, dtype=float).ravel())
    N = s.size
    if N == 0:
        raise EmptyInput("no statistics")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    k = int(np.floor(level * N + 0.5))
    if k <= 0:
        return float(s[-1])
    if k >= N:
        return float(np.nextafter(s[0], -np.inf))
    return float(0.5 * (s[N - k - 1] + s[N - k]))


def wilson_interval(k, N, z=Z_95):
    """Wilson score interval for ``k`` successes out of ``N``; works on arrays."""
    k = np.asarray(k, dtype=float)
    N = np.asarray(N, dtype=float)
    phat = k / N
    denom = 1 + z * z / N
    center = (phat + z * z / (2 * N)) / denom
    half = z * np.sqrt(phat * (1 - phat) / N + z * z / (4 * N * N)) / denom
    lo = np.where(k == 0, 0.0, np.clip(center - half, 0, 1))
    hi = np.where(k == N, 1.0, np.clip(center + half, 0, 1))
    return lo, hi


def _exceed(sorted_stats, thr):
    return sorted_stats.size - np.searchsorted(sorted_stats, thr, side="right")


@dataclass
class RocCurve:
    """Empirical ROC: P_fa and P_d for thresholds swept high to low."""

    detector: str
    pfa: np.ndarray
    pd: np.ndarray
    ci_half_width: np.ndarray
    trials_h0: int
    trials_h1: int


def roc_curve(h0, h1, detector="", max_points=0):
    """Sweep thresholds over the pooled support of both samples.

    Thresholds decrease from above the pooled maximum (``(0, 0)``) to below
    the minimum (``(1, 1)``), so both coordinates are non-decreasing.  With
    ``max_points > 0`` the curve is thinned to that many thresholds, spaced
    evenly in log P_fa.
    """
    s0 = np.sort(np.asarray(h0, dtype=float))
    s1 = np.sort(np.asarray(h1, dtype=float))
    if s0.size == 0 or s1.size == 0:
        raise EmptyInput("ROC needs samples under both hypotheses")
    pooled = np.unique(np.concatenate([s0, s1]))[::-1]
    thr = np.concatenate([[np.inf], pooled, [-np.inf]])
    if max_points and thr.size > max_points:
        pfa_full = _exceed(s0, thr) / s0.size
        targets = np.logspace(np.log10(1.0 / s0.size), 0, max_points - 2)
        idx = np.searchsorted(pfa_full, targets, side="left")
        idx = np.unique(np.concatenate([[0], np.clip(idx, 0, thr.size - 1), [thr.size - 1]]))
        thr = thr[idx]
    k1 = _exceed(s1, thr)
    pfa = _exceed(s0, thr) / s0.size
    pd = k1 / s1.size
    lo, hi = wilson_interval(k1, s1.size)
    return RocCurve(detector, pfa, pd, (hi - lo) / 2, s0.size, s1.size)


def pd_at_pfa(h0, h1, pfa):
    """P_d, its Wilson interval and the threshold achieving ``pfa`` on ``h0``."""
    thr = empirical_quantile_threshold(h0, pfa)
    h1 = np.asarray(h1, dtype=float)
    k = int(np.sum(h1 > thr))
    lo, hi = wilson_interval(k, h1.size)
    return k / h1.size, float(lo), float(hi), thr


def _truth(config, t):
    kind = ModelKind(config.truth)
    return Scenario(t, config.alpha, config.beta, kind, Hypothesis.H1)


def _setup(config, bundle):
    return Setup(config.background(bundle), np.asarray(bundle.t, dtype=float), config.n,
                 config.seed, tuple(config.detectors), config.chunk)


def roc(config, bundle, workers=1):
    """ROC curves of every configured detector under the configured truth.

    Returns ``(curves, samples)`` where ``samples`` maps ``"H0"``/``"H1"`` to
    the per-detector statistic arrays.
    """
    setup = _setup(config, bundle)
    h0 = run_trials(setup, Scenario(bundle.t, hypothesis=Hypothesis.H0), "H0",
                    config.trials_h0, workers)
    h1 = run_trials(setup, _truth(config, bundle.t), "H1", config.trials_h1, workers)
    curves = {name: roc_curve(h0[name], h1[name], name, config.roc_points)
              for name in setup.detectors}
    return curves, {"H0": h0, "H1": h1}


# -- P_fa gain -----------------------------------------------------------------

@dataclass
class PfaGainPoint:
    """Kelly-relative P_fa gains (dB) at one background scaling ``beta``.

    ``log_half_width`` holds each detector's own half-width on ``ln P_fa``;
    ``ci_db`` the half-width of each gain.  A gain is ``None`` and listed in
    ``flags`` when a P_fa estimate has zero events.
    """

    beta: float
    gain_db: dict
    ci_db: dict
    pfa: dict
    events: dict
    thresholds: dict
    log_half_width: dict
    flags: list = field(default_factory=list)


def _pfa_with_ci(s0_sorted, h1, pd_target, z=Z_95):
    N0 = s0_sorted.size
    thr = empirical_quantile_threshold(h1, pd_target)
    k = int(_exceed(s0_sorted, thr))
    if k == 0:
        return thr, 0.0, 0, np.nan
    lo, hi = wilson_interval(k, N0)
    hw_bin = 0.5 * (np.log(hi) - np.log(lo))
    # threshold calibration error from the finite H1 sample
    dpd = z * np.sqrt(pd_target * (1 - pd_target) / np.size(h1))
    hw_cal = 0.0
    if 0 < pd_target - dpd and pd_target + dpd < 1:
        k_hi = _exceed(s0_sorted, empirical_quantile_threshold(h1, pd_target + dpd))
        k_lo = _exceed(s0_sorted, empirical_quantile_threshold(h1, pd_target - dpd))
        hw_cal = 0.5 * (np.log(max(k_hi, 0.5)) - np.log(max(k_lo, 0.5)))
    return thr, k / N0, k, float(np.hypot(hw_bin, hw_cal))


def pfa_gain_sweep(config, bundle, workers=1, strict=False, pd_target=None,
                   include_self=False):
    """P_fa gain of every detector relative to Kelly over ``config.beta_grid``.

    For each ``beta`` the threshold of each detector is set on H1 samples
    (``y = alpha t + beta z``) to reach ``pd_target``; P_fa is then measured
    on a single set of H0 trials shared across the grid.

    Raises InsufficientTrials when ``strict`` and a P_fa estimate is zero.
    """
    if pd_target is None:
        if config.operating_point != "fixed_pd":
            raise ValueError("pfa_gain_sweep needs operating_point = 'fixed_pd'")
        pd_target = config.operating_value
    names = list(dict.fromkeys(["kelly", *config.detectors]))
    setup = _setup(config, bundle)
    setup = Setup(setup.background, setup.t, setup.n, setup.seed, tuple(names), setup.chunk)
    h0 = run_trials(setup, Scenario(bundle.t, hypothesis=Hypothesis.H0), "H0",
                    config.trials_h0, workers)
    s0 = {name: np.sort(h0[name]) for name in names}
    points = []
    for j, beta in enumerate(config.beta_grid):
        scen = Scenario(bundle.t, config.alpha, beta, ModelKind.MIXED, Hypothesis.H1)
        h1 = run_trials(setup, scen, f"H1/beta[{j}]={beta!r}", config.trials_h1, workers)
        thr, pfa, ev, lhw = {}, {}, {}, {}
        for name in names:
            thr[name], pfa[name], ev[name], lhw[name] = _pfa_with_ci(s0[name], h1[name], pd_target)
        flags = [name for name in names if ev[name] == 0]
        if flags and strict:
            raise InsufficientTrials(
                f"beta={beta}: zero false alarms for {', '.join(flags)} "
                f"in {config.trials_h0} H0 trials")
        gain, ci = {}, {}
        others = [nm for nm in names if nm != "kelly" or include_self]
        for name in others:
            if name == "kelly":
                gain[name], ci[name] = 0.0, 0.0
            elif ev[name] == 0 or ev["kelly"] == 0:
                gain[name], ci[name] = None, None
            else:
                gain[name] = float(10 * np.log10(pfa["kelly"] / pfa[name]))
                ci[name] = float(10 / np.log(10) * np.hypot(lhw["kelly"], lhw[name]))
        points.append(PfaGainPoint(float(beta), gain, ci, pfa, ev, thr, lhw, flags))
    return points


def calibrate_alpha(config, bundle, target_pd, pfa, detector="kelly", trials=4000,
                    lo=0.0, hi=None, iters=18, workers=1):
    """Bisect ``alpha`` so ``detector`` reaches ``target_pd`` at ``pfa``.

    Uses pilot runs with their own seed tags, independent of the main run.
    """
    setup = Setup(config.background(bundle), np.asarray(bundle.t, dtype=float), config.n,
                  config.seed, (detector,), config.chunk)
    h0 = run_trials(setup, Scenario(bundle.t, hypothesis=Hypothesis.H0), "pilot/H0",
                    max(trials, int(50 / pfa)), workers)[detector]
    thr = empirical_quantile_threshold(h0, pfa)
    kind = ModelKind(config.truth)
    if hi is None:
        hi = 0.99 if kind is ModelKind.REPLACEMENT else 10.0

    def pd_of(alpha):
        scen = Scenario(bundle.t, alpha, config.beta, kind, Hypothesis.H1)
        h1 = run_trials(setup, scen, "pilot/H1", trials, workers)[detector]
        return float(np.mean(h1 > thr))

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if pd_of(mid) < target_pd:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
