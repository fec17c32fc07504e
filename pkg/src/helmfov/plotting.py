"""Static figures for experiment output (matplotlib, Agg backend, SVG files)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({
    "svg.hashsalt": "helmfov",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (5.0, 3.6),
})


def save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    return path


def _closed(poly):
    poly = np.asarray(poly, dtype=complex)
    return np.append(poly, poly[:1]) if len(poly) else poly


def fov_sets(path, sets, title="", xlabel="Re z / h^d", ylabel="Im z / h^d",
             strip_slope=None, strip_intercepts=None, rectangle=None):
    """Overlay of polygons: ``sets`` is a list of (label, polygon, witnesses)."""
    fig, ax = plt.subplots()
    for label, poly, wit in sets:
        closed = _closed(poly)
        line, = ax.plot(closed.real, closed.imag, lw=1.0, label=label)
        if wit is not None and len(wit):
            ax.plot(np.real(wit), np.imag(wit), ".", ms=2, color=line.get_color())
    if strip_slope is not None and strip_intercepts is not None:
        y = np.array(ax.get_ylim())
        for x0 in strip_intercepts:
            ax.plot(x0 - strip_slope * y, y, "k--", lw=0.7)
        ax.set_ylim(*y)
    if rectangle is not None:
        x0, x1, y0, y1 = rectangle
        ax.plot([x0, x1, x1, x0, x0], [y0, y0, y1, y1, y0], "k:", lw=0.7)
    ax.axhline(0, color="0.5", lw=0.5)
    ax.axvline(0, color="0.5", lw=0.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    return save(fig, path)


def lines(path, series, xlabel, ylabel, title="", logy=False, marker="o"):
    """``series`` maps a label to (x, y) sequences."""
    fig, ax = plt.subplots()
    for label, (x, y) in series.items():
        ax.plot(x, y, marker=marker, ms=3, lw=1.0, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if series:
        ax.legend(fontsize=7)
    return save(fig, path)
