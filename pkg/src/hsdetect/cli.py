"""Command-line front end.

Subcommands: detect, roc, pfa-gain, sample, selfcheck.  Global flags may
appear before or after the subcommand.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, checks
from . import detectors as det
from . import experiments as ex
from .data import ExperimentConfig, load_config, read_matrix, read_vector
from .distributions import Hypothesis, ModelKind, Scenario, assemble, draw_raw
from .errors import AsymmetryError, ConfigError, DimensionMismatch, HSDetectError, ParseError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def fmt(x):
    """Round-trip decimal form of a float (``repr``); empty for ``None``."""
    if x is None:
        return ""
    return repr(float(x))


# -- configuration ---------------------------------------------------------------

def resolve_config(args):
    if args.config:
        cfg = load_config(args.config)
        base = Path(args.config).resolve().parent
    else:
        cfg = ExperimentConfig(nu=5.0).validate()
        base = Path.cwd()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "paper_scale", False):
        cfg.p, cfg.n, cfg.family, cfg.nu = 32, 60, "student", 5.0
        if args.command == "pfa-gain":
            cfg.alpha = 0.01
    cfg.validate()
    return cfg, base


def _u64(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


# -- output ------------------------------------------------------------------------

class Writer:
    """Collects output files so the manifest can list them with digests."""

    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = {}

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return self._bytes(name, buf.getvalue().encode())

    def _bytes(self, name, data):
        path = self.out / name
        path.write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()
        return path

    def figure(self, name, render, *args):
        path = render(*args, self.out / name)
        self.files[name] = hashlib.sha256(path.read_bytes()).hexdigest()
        return path

    def manifest(self, command, cfg, started, summaries):
        doc = {
            "command": command,
            "version": __version__,
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "runtime_seconds": round(time.perf_counter() - started, 3),
            "outputs": self.files,
            "summaries": summaries,
            "ci_method": ex.CI_METHOD,
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
        return path


def _json_num(x):
    return None if x is None or not math.isfinite(x) else float(x)


# -- subcommands ---------------------------------------------------------------------

def cmd_detect(args):
    cfg, base = resolve_config(args)
    bundle = cfg.bundle(base)
    t = read_vector(args.t) if args.t else bundle.t
    p = t.size
    Y = read_matrix(args.y, ncols=p)
    if args.z:
        Z = read_matrix(args.z, ncols=p).T
    else:
        if bundle.p != p:
            raise DimensionMismatch(f"signature has p={p} but the synthetic background has "
                                    f"p={bundle.p}")
        model = cfg.background(bundle)
        raw = draw_raw(ex.trial_stream(cfg.seed, "detect", 0), p, cfg.n, model.family, model.nu)
        _, Zs = assemble(raw[None], model, Scenario(t, hypothesis=Hypothesis.H0), cfg.n)
        Z = Zs[0]
    if Z.shape[1] <= p:
        raise DimensionMismatch(f"need more than p={p} training samples, got {Z.shape[1]}")
    names = list(det.DETECTORS) if args.detector == "all" else [args.detector]
    ts = det.summarize(Z)
    m = Y.shape[0]
    res = det.detect_batch(Y, np.broadcast_to(ts.zbar, Y.shape),
                           np.broadcast_to(ts.S_inv_sqrt, (m, p, p)), t, ts.n, names)
    header = ["pixel"]
    for name in names:
        header += [f"{name}_statistic", f"{name}_alpha_hat", f"{name}_beta_hat"]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    for i in range(m):
        row = [i]
        for name in names:
            stat, a, b, _ = res[name]
            row += [fmt(stat[i]), fmt(a[i]), fmt(b[i])]
        w.writerow(row)
    return EXIT_OK


def cmd_roc(args):
    started = time.perf_counter()
    cfg, base = resolve_config(args)
    bundle = cfg.bundle(base)
    curves, samples = ex.roc(cfg, bundle, args.threads)
    out = Writer(args.out)
    summaries = {}
    for name, c in curves.items():
        out.csv(f"roc_{name}.csv", ["pfa", "pd", "ci_half_width"],
                ([fmt(a), fmt(b), fmt(h)] for a, b, h in zip(c.pfa, c.pd, c.ci_half_width)))
        s = {}
        for pfa in (1e-3, 1e-2, 1e-1):
            if pfa * cfg.trials_h0 >= 1:
                pd, lo, hi, thr = ex.pd_at_pfa(samples["H0"][name], samples["H1"][name], pfa)
                s[f"pd_at_pfa_{pfa:g}"] = {"pd": pd, "lo": lo, "hi": hi, "threshold": thr}
        summaries[name] = s
    if not args.no_plot:
        from .plotting import render_roc
        title = f"ROC, {cfg.truth} truth, p={cfg.p}, n={cfg.n}"
        out.figure("roc.png", lambda c, path: render_roc(c, path, title), curves)
    out.manifest("roc", cfg, started, summaries)
    return EXIT_OK


def cmd_pfa_gain(args):
    started = time.perf_counter()
    cfg, base = resolve_config(args)
    cfg.detectors = list(det.DETECTORS)
    bundle = cfg.bundle(base)
    points = ex.pfa_gain_sweep(cfg, bundle, args.threads, strict=args.strict,
                               include_self=args.self_gain)
    header = ["beta", "gain_acute_db", "gain_spade_db", "ci_acute", "ci_spade", "flags"]
    if args.self_gain:
        header.insert(5, "gain_kelly_db")
    rows, summaries = [], []
    for pt in points:
        row = [fmt(pt.beta), fmt(pt.gain_db["acute"]), fmt(pt.gain_db["spade"]),
               fmt(pt.ci_db["acute"]), fmt(pt.ci_db["spade"])]
        if args.self_gain:
            row.append(fmt(pt.gain_db["kelly"]))
        row.append(";".join(f"zero_pfa:{name}" for name in pt.flags))
        rows.append(row)
        summaries.append({
            "beta": pt.beta,
            "pfa": {k: _json_num(v) for k, v in pt.pfa.items()},
            "events": pt.events,
            "thresholds": {k: _json_num(v) for k, v in pt.thresholds.items()},
            "flags": pt.flags,
        })
    out = Writer(args.out)
    out.csv("pfa_gain.csv", header, rows)
    if not args.no_plot:
        from .plotting import render_pfa_gain
        out.figure("pfa_gain.png", render_pfa_gain, points)
    out.manifest("pfa-gain", cfg, started, {"points": summaries,
                                            "pd_target": cfg.operating_value})
    return EXIT_OK


def cmd_sample(args):
    started = time.perf_counter()
    cfg, base = resolve_config(args)
    bundle = cfg.bundle(base)
    model = cfg.background(bundle)
    if args.hypothesis == "H0":
        scen = Scenario(bundle.t, hypothesis=Hypothesis.H0)
    else:
        scen = Scenario(bundle.t, cfg.alpha, cfg.beta, ModelKind(cfg.truth), Hypothesis.H1)
    tag = f"sample/{args.hypothesis}"
    raw = np.stack([draw_raw(ex.trial_stream(cfg.seed, tag, i), model.p, cfg.n, model.family,
                             model.nu) for i in range(args.count)])
    y, Z = assemble(raw, model, scen, cfg.n)
    rows = []
    for k in range(args.count):
        rows.append([k, "y", 0, *map(fmt, y[k])])
        rows.extend([k, "z", j, *map(fmt, Z[k][:, j])] for j in range(cfg.n))
    out = Writer(args.out)
    header = ["trial", "role", "index", *(f"band{b}" for b in range(model.p))]
    out.csv("samples.csv", header, rows)
    out.manifest("sample", cfg, started, {"count": args.count, "hypothesis": args.hypothesis})
    return EXIT_OK


def cmd_selfcheck(args):
    if args.full:
        suite = [checks.nu_invariance, checks.oracle_equivalence, checks.derivation_identities,
                 checks.sampler_validity, checks.invariance_suite]
        runs = [fn() for fn in suite]
    else:
        runs = [
            checks.nu_invariance(instances=10),
            checks.oracle_equivalence(instances=40),
            checks.derivation_identities(instances=100),
            checks.sampler_validity(draws=20_000),
            checks.invariance_suite(instances=20, h0_trials=5_000),
        ]
    for r in runs:
        print(r.line())
    return EXIT_OK if all(r.passed for r in runs) else EXIT_NUMERIC


# -- parser ------------------------------------------------------------------------

def _global_flags(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = parser.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", default=default(None),
                   help="flat TOML key/value experiment file")
    g.add_argument("--seed", type=_u64, metavar="U64", default=default(None),
                   help="master seed (overrides the config)")
    g.add_argument("--threads", type=_positive, metavar="N", default=default(1),
                   help="worker processes for Monte-Carlo runs")
    g.add_argument("--out", metavar="DIR", default=default("."),
                   help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hsdetect",
        description="GLR target detectors for hyperspectral pixels and Monte-Carlo studies.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="score test spectra against a training set")
    p.add_argument("--y", required=True, help="CSV of test spectra, one per line")
    p.add_argument("--z", help="CSV of training spectra, one per line (default: synthetic draw)")
    p.add_argument("--t", help="single-column CSV target signature (default: from config)")
    p.add_argument("--detector", choices=[*det.DETECTORS, "all"], default="all")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("roc", help="Monte-Carlo ROC curves")
    p.add_argument("--paper-scale", action="store_true",
                   help="original dimensions (p=32, n=60, nu=5; alpha=0.01 for pfa-gain); "
                        "needs very large trial counts")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("pfa-gain", help="false-alarm gain over Kelly versus beta")
    p.add_argument("--paper-scale", action="store_true",
                   help="original dimensions (p=32, n=60, nu=5; alpha=0.01 for pfa-gain); "
                        "needs very large trial counts")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    p.add_argument("--strict", action="store_true",
                   help="fail instead of flagging when a P_fa estimate has no events")
    p.add_argument("--self-gain", action="store_true",
                   help="add a Kelly-versus-Kelly column (always 0; sanity check)")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_pfa_gain)

    p = sub.add_parser("sample", help="dump synthetic joint samples")
    p.add_argument("--count", type=_positive, default=1)
    p.add_argument("--hypothesis", choices=["H0", "H1"], default="H0")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("selfcheck", help="run the oracle and identity suites")
    p.add_argument("--full", action="store_true", help="full-size suites (several minutes)")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, DimensionMismatch, AsymmetryError, OSError) as exc:
        print(f"hsdetect: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HSDetectError as exc:
        print(f"hsdetect: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
