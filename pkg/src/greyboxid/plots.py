"""Figure rendering for the CLI report paths.

matplotlib is imported lazily with the Agg backend so headless runs and
library users that never plot stay free of any GUI dependency.  Every
function writes a PNG next to the corresponding CSV and returns the
path it wrote.
"""
from __future__ import annotations

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def _db(x, floor=1e-300):
    return 20.0 * np.log10(np.maximum(np.abs(x), floor))


def save_error_spectra(path, cols):
    """Measured spectrum, model error spectra and noise level, in dB."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(8, 4.5))
    f = cols["frequency_hz"]
    styles = iter([("+", "C1"), ("o", "C0"), ("s", "0.6")])
    ax.plot(f, _db(cols["measured"]), "kx", ms=3, label="measured")
    for name, values in cols.items():
        if name in ("frequency_hz", "measured"):
            continue
        marker, color = next(styles, (".", "C2"))
        ax.plot(f, _db(values), linestyle="", marker=marker, color=color,
                ms=3, label=name.replace("_", " "))
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("output spectrum (dB)")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_time_errors(path, cols):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(8, 4))
    t = cols["time_s"]
    ax.plot(t, cols["measured"], "k", lw=0.7, label="measured")
    for i, (name, values) in enumerate(cols.items()):
        if name in ("time_s", "measured"):
            continue
        ax.plot(t, values, f"C{i}", lw=0.7, label=name.replace("_", " "))
    ax.set_xlabel("time (s)")
    ax.set_ylabel("output")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_frf(path, cols):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(8, 4))
    f = cols["frequency_hz"]
    names = sorted({k[:-3] for k in cols if k.endswith("_re")})
    for i, name in enumerate(names):
        mag = np.hypot(cols[f"{name}_re"], cols[f"{name}_im"])
        style = "k" if name == "measured" else f"C{i}"
        ax.plot(f, _db(mag), style, lw=0.9, label=name)
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("|FRF| (dB)")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_coefficients(path, estimates, labels=None):
    """Real and imaginary parts of each coefficient series vs frequency."""
    plt = _plt()
    n = len(estimates)
    fig, axes = plt.subplots(n, 2, figsize=(9, 2.6 * n), squeeze=False)
    for a, est in enumerate(estimates):
        keep = est.included
        f = est.frequencies[keep]
        label = labels[a] if labels else f"coefficient {a}"
        axes[a, 0].plot(f, est.series.real[keep], "C0", lw=0.9)
        axes[a, 0].set_ylabel(f"Re {label}")
        axes[a, 1].plot(f, est.series.imag[keep], "C1", lw=0.9)
        axes[a, 1].set_ylabel(f"Im {label}")
        for ax in axes[a]:
            ax.grid(alpha=0.3)
            ax.set_xlabel("frequency (Hz)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_stabilization(path, diagram):
    """Pole frequencies vs candidate order with stability markers."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(8, 4.5))
    seen = set()
    for order, f, z, f_stable, z_stable in diagram.rows():
        if z_stable:
            key, style = "stable (freq+damp)", dict(marker="o", color="C2")
        elif f_stable:
            key, style = "stable (freq)", dict(marker="s", color="C0")
        else:
            key, style = "new", dict(marker="x", color="0.5")
        ax.scatter(f, order, s=24, label=None if key in seen else key, **style)
        seen.add(key)
    ax.set_xlabel("pole frequency (Hz)")
    ax.set_ylabel("model order")
    if seen:
        ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_trace(path, trace):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 4))
    its = [row["iteration"] for row in trace.iterations]
    costs = [row["cost"] for row in trace.iterations]
    acc = [row["accepted"] for row in trace.iterations]
    ax.semilogy([i for i, a in zip(its, acc) if a],
                [c for c, a in zip(costs, acc) if a], "C0o-", label="accepted")
    rej = [(i, c) for i, c, a in zip(its, costs, acc) if not a and np.isfinite(c)]
    if rej:
        ax.semilogy(*zip(*rej), linestyle="", marker="x", color="0.6", label="rejected")
    ax.set_xlabel("trial")
    ax.set_ylabel("weighted cost")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
