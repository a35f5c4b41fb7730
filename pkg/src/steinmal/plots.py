"""Deterministic matplotlib figure rendering.

Figures are written as SVG with a fixed hash salt and no date metadata, so
identical runs produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["save_line_plot", "save_loglog_plot", "save_measure_profile"]

_RC = {
    "svg.hashsalt": "steinmal",
    "figure.figsize": (6.4, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}
_META = {"Date": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def save_line_plot(path, x, series, xlabel, ylabel, title):
    """series: mapping label -> (values, optional yerr)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for label, payload in series.items():
            values, yerr = payload if isinstance(payload, tuple) else (payload, None)
            if yerr is not None:
                ax.errorbar(x, values, yerr=yerr, marker="o", capsize=3,
                            label=label)
            else:
                ax.plot(x, values, marker="o", label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend()
        _save(fig, path)


def save_loglog_plot(path, x, series, xlabel, ylabel, title):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for label, values in series.items():
            ax.loglog(x, values, marker="o", label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend()
        _save(fig, path)


def save_measure_profile(path, xs, a_vals, s_vals, name):
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 4.0))
        ax1.plot(xs, a_vals)
        ax1.set_xlabel("x")
        ax1.set_ylabel("diffusion coefficient a(x)")
        ax2.plot(xs, s_vals)
        ax2.set_xlabel("x")
        ax2.set_ylabel("Stein factor S(x)")
        fig.suptitle(name)
        fig.tight_layout()
        _save(fig, path)
