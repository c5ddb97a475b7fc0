"""Figures written next to the CSV reports."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "kelly": dict(color="tab:blue", ls="-", label="Kelly"),
    "acute": dict(color="tab:red", ls="--", label="ACUTE"),
    "spade": dict(color="tab:green", ls="-.", label="SPADE"),
}

# fixed metadata keeps repeated renders byte-stable
_PNG_META = {"Software": None}


def _finish(fig, ax, path, title):
    ax.set_title(title, fontsize=11)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def render_roc(curves, path, title="ROC"):
    """P_d against P_fa (log axis) for each detector, with a Wilson band."""
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    floor = 1.0
    for name, curve in curves.items():
        keep = curve.pfa > 0
        x = curve.pfa[keep]
        y = curve.pd[keep]
        hw = curve.ci_half_width[keep]
        style = STYLE.get(name, dict(label=name))
        ax.step(x, y, where="post", **style)
        ax.fill_between(x, np.clip(y - hw, 0, 1), np.clip(y + hw, 0, 1), step="post",
                        color=style.get("color"), alpha=0.15, lw=0)
        if x.size:
            floor = min(floor, x.min())
    ax.set_xscale("log")
    ax.set_xlim(floor, 1.0)
    ax.set_ylim(0, 1.01)
    ax.set_xlabel("$P_{fa}$")
    ax.set_ylabel("$P_d$")
    return _finish(fig, ax, path, title)


def render_pfa_gain(points, path, title="$P_{fa}$ gain versus $\\beta$"):
    """Gain in dB relative to Kelly with error bars; flagged points omitted."""
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    names = sorted({k for pt in points for k in pt.gain_db}, key=list(STYLE).index)
    for name in names:
        xs, ys, es = [], [], []
        for pt in points:
            g = pt.gain_db.get(name)
            if g is not None:
                xs.append(pt.beta)
                ys.append(g)
                es.append(pt.ci_db[name])
        style = STYLE.get(name, dict(label=name))
        ax.errorbar(xs, ys, yerr=es, marker="o", ms=4, capsize=3, **style)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("$\\beta$")
    ax.set_ylabel("gain over Kelly (dB)")
    return _finish(fig, ax, path, title)
