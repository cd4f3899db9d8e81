"""Render experiment reports as figures next to their CSV files.

Plots mirror the layout of the reports: bound-vs-error curves use a
solid line for the theoretical bound and a dashed line for the
simulated error; diagnostic sweeps show the statistics against the
sample size on a log axis.  PNG output only; the CSV stays the
authoritative, byte-deterministic artifact.
"""

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _log_x(ax):
    ax.set_xscale("log")
    ax.set_xlabel("sample size n")


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _plot_mad_vs_bound(report, path):
    n = report.column("n")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(n, report.column("thm1_bound"), "-", color="black", label="theoretical upper bound")
    ax.plot(n, report.column("mad"), "--", color="tab:red", label="simulated mean abs. error")
    _log_x(ax)
    ax.set_yscale("log")
    ax.set_ylabel("mean absolute error")
    ax.legend()
    return _finish(fig, path)


def _plot_fig3(report, path):
    n = report.column("n")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(n, report.column("sqrt_v_n"), "-", color="black", label="estimated sd sqrt(v_n)")
    ax.plot(n, report.column("abs_err"), "--", color="tab:red", label="actual error |I_n - I|")
    _log_x(ax)
    ax.set_ylabel("value")
    ax.legend()
    return _finish(fig, path)


def _plot_fig4(report, path):
    n = report.column("n")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(n, report.column("sqrt_v_n"), "-", color="black", label="estimated sd sqrt(v_n)")
    q = report.column("q_n_mean")
    se = report.column("q_n_se")
    ax.errorbar(n, q, yerr=[2 * s for s in se], fmt="o-", color="tab:blue",
                markersize=3, label="q_n (mean of 500 sims, 2 s.e.)")
    _log_x(ax)
    ax.set_ylabel("value")
    ax.legend()
    return _finish(fig, path)


def _plot_fig5(report, path):
    n = report.column("n")
    reps = report.meta.get("replicates", len(report.header) - 2)
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in range(reps):
        ax.plot(n, report.column(f"Q{r + 1}"), "-", color="gray", alpha=0.3, linewidth=0.7)
    ax.plot(n, report.column("q_n_mean"), "o", color="black", markersize=5,
            label="estimated q_n")
    _log_x(ax)
    ax.set_yscale("log")
    ax.set_ylabel("Q_n")
    ax.legend()
    return _finish(fig, path)


def _plot_diagnose(report, path):
    n = report.column("n")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(n, report.column("sqrt_v_n"), "-", color="black", label="sqrt(v_n)")
    ax.plot(n, report.column("q_n_mean"), "o-", color="tab:blue", markersize=3,
            label="q_n")
    ax.plot(n, report.column("Q_n"), "^", color="tab:green", markersize=3,
            label="single-run Q_n")
    _log_x(ax)
    ax.set_yscale("log")
    ax.set_ylabel("diagnostic value")
    ax.legend()
    return _finish(fig, path)


def _plot_bars(report, path):
    labels = [str(v) for v in report.column(report.header[0])]
    fig, ax = plt.subplots(figsize=(7, 4))
    values = []
    for row in report.rows:
        v = row[1] if len(report.header) == 2 else row[-1]
        values.append(float(v) if not isinstance(v, str) else math.nan)
    ax.barh(range(len(labels)), values, color="tab:blue")
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=7)
    ax.set_xlabel("value")
    return _finish(fig, path)


_PLOTTERS = {
    "fig1": _plot_mad_vs_bound,
    "fig2": _plot_mad_vs_bound,
    "fig3": _plot_fig3,
    "fig4": _plot_fig4,
    "fig5": _plot_fig5,
    "diagnose": _plot_diagnose,
}


def render_report(report, path):
    """Write a PNG for a report; returns the path (None if nothing drawn)."""
    kind = report.meta.get("experiment")
    plotter = _PLOTTERS.get(kind, _plot_bars)
    return plotter(report, path)
