"""Report figures written next to the CSV/JSON outputs.

Figures are saved as SVG with a fixed hash salt and no date stamp, so the
same inputs give byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .estimators import UNITS

RC_PARAMS = {
    "svg.hashsalt": "loadid",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.0,
}

LABELS = {
    "R": "R",
    "L": "L",
    "S": "S",
    "C": "C",
    "G": "G",
    "Gamma": r"$\Gamma$",
    "G_p": r"$G_p$",
    "R_ser": r"$R_{ser}$",
    "L_ser": r"$L_{ser}$",
}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_identification(result, path, nominal=None):
    """Parameter traces over time, then voltage and current strips.

    ``result`` is a :class:`loadid.pipeline.IdentifyResult`. Raw valid
    estimates are drawn faintly behind the smoothed trace.
    """
    nominal = nominal or {}
    raw, smooth = result.raw, result.smoothed
    names = raw.names
    t = raw.times
    frame = result.conditioned
    with plt.rc_context(RC_PARAMS):
        fig, axes = plt.subplots(
            len(names) + 2, 1, sharex=True, figsize=(7.0, 1.6 * (len(names) + 2))
        )
        for ax, name in zip(axes, names):
            ax.plot(t[raw.valid], raw.valid_values(name), ".", ms=1, color="0.75", rasterized=False)
            ax.plot(t, smooth.column(name), color="C0", label="smoothed")
            if name in nominal:
                ax.axhline(nominal[name], color="C3", ls="--", lw=0.8, label="nominal")
            sel = smooth.valid_values(name)
            if sel.size:
                lo, hi = np.percentile(sel, [1, 99])
                pad = 0.25 * (hi - lo) + 1e-3 * max(abs(hi), abs(lo), 1e-12)
                ax.set_ylim(lo - pad, hi + pad)
            ax.set_ylabel(f"{LABELS[name]} [{UNITS[name]}]")
        axes[0].legend(loc="upper right", fontsize=7)
        axes[-2].plot(t, frame.voltage.samples, color="C1")
        axes[-2].set_ylabel("v [V]")
        axes[-1].plot(t, frame.current.samples, color="C2")
        axes[-1].set_ylabel("i [A]")
        axes[-1].set_xlabel("time [s]")
        fig.align_ylabels(axes)
        fig.tight_layout()
        _save(fig, path)


def plot_histograms(trace, summary, path, title=None, bins=60):
    """One histogram per parameter with a mean/median/std/nominal box."""
    names = trace.names
    with plt.rc_context(RC_PARAMS):
        fig, axes = plt.subplots(1, len(names), figsize=(3.2 * len(names), 2.8))
        for ax, name in zip(np.atleast_1d(axes), names):
            x = trace.valid_values(name)
            st = summary.stats[name]
            if x.size:
                ax.hist(x, bins=bins, color="C0", alpha=0.8)
            if st.nominal is not None:
                ax.axvline(st.nominal, color="C3", ls="--", lw=0.8)
            lines = [
                f"mean {st.mean:.4g}" if st.mean is not None else "mean -",
                f"median {st.median:.4g}" if st.median is not None else "median -",
                f"std {st.std:.3g}" if st.std is not None else "std -",
            ]
            if st.nominal is not None:
                lines.append(f"nominal {st.nominal:.4g}")
            ax.text(
                0.97, 0.95, "\n".join(lines), transform=ax.transAxes, ha="right", va="top",
                fontsize=7, bbox={"boxstyle": "round", "fc": "white", "alpha": 0.8},
            )
            ax.set_xlabel(f"{LABELS[name]} [{UNITS[name]}]")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path)
