"""Figures for the stats report: sampling interval over time and its histogram.

Figures only display what :mod:`marskit.diagnostics` computed; nothing here
feeds back into the numbers.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .diagnostics import SessionReport, StreamReport  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def plot_stream(rep: StreamReport, title: str = ""):
    """Two panels: interval (ms) against elapsed time (s), and the binned intervals."""
    with plt.rc_context(STYLE):
        fig, (ax_t, ax_h) = plt.subplots(1, 2, figsize=(8, 3), gridspec_kw={"width_ratios": [2, 1]})
        t = (rep.times_ns[1:] - rep.times_ns[0]) * 1e-9
        ax_t.plot(t, rep.intervals_ns * 1e-6, ".", ms=1.5, color="tab:blue")
        if rep.stats.nominal_interval_ns:
            ax_t.axhline(rep.stats.nominal_interval_ns * 1e-6, color="0.4", lw=0.8, ls="--")
        ax_t.set_xlabel("time since first sample (s)")
        ax_t.set_ylabel("sampling interval (ms)")

        starts = [b.start_ns * 1e-6 for b in rep.histogram]
        widths = [(b.end_ns - b.start_ns) * 1e-6 for b in rep.histogram]
        counts = [b.count for b in rep.histogram]
        ax_h.bar(starts, counts, width=widths, align="edge", color="tab:blue", edgecolor="none")
        ax_h.set_yscale("symlog", linthresh=1)
        ax_h.set_xlabel("interval (ms)")
        ax_h.set_ylabel("count")

        s = rep.stats
        fig.suptitle(f"{title or s.stream}: {s.achieved_rate_hz:.2f} Hz, mean {s.mean_ns * 1e-6:.3f} ms, std {s.std_ns * 1e-6:.3f} ms")
        fig.tight_layout()
    return fig


def render_report_figures(report: SessionReport, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, rep in report.streams.items():
        if rep is None:
            continue
        fig = plot_stream(rep, f"{report.device} {name}")
        path = outdir / f"intervals_{name}.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written
