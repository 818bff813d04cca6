"""Figure rendering for the CLI report paths.

Each writer takes the in-memory result of a CLI subcommand and renders a
matplotlib figure next to the delimited output.  Figures are saved in
whatever format the output suffix requests (SVG by default).
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.figsize": (6.4, 4.2),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
})


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_modes(rows, path, region_names=()):
    """Frequency vs decay-rate scatter, one marker per mode."""
    fig, ax = plt.subplots()
    freqs = [r["frequency_hz"] / 1e9 for r in rows]
    decays = [max(r["decay_rate_hz"], 1e-3) for r in rows]
    ax.scatter(freqs, decays, s=18)
    for r in rows:
        ax.annotate(r["mode_label"], (r["frequency_hz"] / 1e9, max(r["decay_rate_hz"], 1e-3)),
                    textcoords="offset points", xytext=(4, 4), fontsize=7)
    ax.set_yscale("log")
    ax.set_xlabel("frequency (GHz)")
    ax.set_ylabel("decay rate (Hz)")
    return _finish(fig, path)


def plot_transfer(freqs_hz, columns, path, kind="s"):
    """Magnitude of each port-pair response vs frequency."""
    fig, ax = plt.subplots()
    x = np.asarray(freqs_hz) / 1e9
    for name, series in columns.items():
        mags = np.abs(np.asarray(series))
        ax.plot(x, np.where(np.isfinite(mags), mags, np.nan), label=name)
    ax.set_yscale("log")
    ax.set_xlabel("frequency (GHz)")
    ax.set_ylabel({"s": "|S|", "z": "|Z| (ohm)", "y": "|Y| (S)"}.get(kind, "magnitude"))
    ax.legend(fontsize=7)
    return _finish(fig, path)


def plot_sweep(result, path, param_label="parameter"):
    """Tracked frequencies (top) and decay rates (bottom) vs the sweep."""
    fig, (ax_f, ax_g) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 6.0))
    for label in result.labels():
        xs, fs = result.series(label, "frequency_hz")
        _, gs = result.series(label, "decay_rate_hz")
        ax_f.plot(xs, np.asarray(fs) / 1e9, label=label)
        ax_g.plot(xs, np.maximum(gs, 1e-3), label=label)
    overlay = [(p.value, p.extras["t1_admittance_s"]) for p in result.points
               if "t1_admittance_s" in p.extras]
    if overlay:
        ax_t = ax_g.twinx()
        ax_t.plot(*zip(*overlay), "k--", label="admittance T1", alpha=0.7)
        ax_t.set_yscale("log")
        ax_t.set_ylabel("admittance T1 (s)")
    ax_g.set_yscale("log")
    ax_f.set_ylabel("frequency (GHz)")
    ax_g.set_ylabel("decay rate (Hz)")
    ax_g.set_xlabel(param_label)
    ax_f.legend(fontsize=7)
    return _finish(fig, path)


def plot_support(rsvs, labels, path):
    """Regional support vectors on the plane through the standard basis."""
    fig, ax = plt.subplots(figsize=(5.2, 5.0))
    if rsvs:
        names = rsvs[0].region_names
        k = len(names)
        angles = np.pi / 2 + 2 * np.pi * np.arange(k) / k
        verts = np.column_stack([np.cos(angles), np.sin(angles)])
        loop = np.vstack([verts, verts[:1]])
        ax.plot(loop[:, 0], loop[:, 1], "k-", lw=0.8)
        for name, (vx, vy) in zip(names, verts):
            ax.annotate(name, (vx, vy), textcoords="offset points", xytext=(5, 5))
        for rsv, label in zip(rsvs, labels):
            ax.scatter(*rsv.barycentric_xy, s=22)
            ax.annotate(label, rsv.barycentric_xy, textcoords="offset points",
                        xytext=(4, -8), fontsize=7)
    ax.set_aspect("equal")
    ax.set_xlabel("basis-plane x")
    ax.set_ylabel("basis-plane y")
    return _finish(fig, path)


def plot_convergence(rows, path, param_label="parameter"):
    """Relative differences to the reference delta, log scale."""
    fig, (ax_f, ax_t) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 6.0))
    deltas = sorted({r.delta for r in rows})
    labels = sorted({r.label for r in rows})
    for d in deltas:
        for label in labels:
            pts = [(r.value, r.freq_rel_diff, r.t1_rel_diff)
                   for r in rows if r.delta == d and r.label == label]
            if not pts:
                continue
            xs, dfs, dts = zip(*pts)
            tag = f"{label} @ {d * 1e6:.0f}um"
            ax_f.plot(xs, np.maximum(dfs, 1e-12), label=tag)
            finite = [t if math.isfinite(t) else np.nan for t in dts]
            ax_t.plot(xs, np.maximum(finite, 1e-12), label=tag)
    ax_f.set_yscale("log")
    ax_t.set_yscale("log")
    ax_f.set_ylabel("relative frequency difference")
    ax_t.set_ylabel("relative T1 difference")
    ax_t.set_xlabel(param_label)
    ax_f.legend(fontsize=6)
    return _finish(fig, path)


def plot_admittance(freqs_hz, ye, path, fit=None):
    """Re and Im of the environment admittance vs frequency."""
    fig, (ax_r, ax_i) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 6.0))
    x = np.asarray(freqs_hz) / 1e9
    ye = np.asarray(ye)
    ax_r.plot(x, np.abs(ye.real))
    ax_i.plot(x, np.abs(ye.imag), label="|Im Y_e|")
    if fit is not None:
        w = 2 * np.pi * np.asarray(freqs_hz)
        model = np.abs(-fit.l_e_inv / w + fit.c_e * w)
        ax_i.plot(x, model, "k--", label=f"fit C_e={fit.c_e * 1e15:.2f} fF")
        ax_i.legend(fontsize=7)
    ax_r.set_yscale("log")
    ax_i.set_yscale("log")
    ax_r.set_ylabel("|Re Y_e| (S)")
    ax_i.set_ylabel("|Im Y_e| (S)")
    ax_i.set_xlabel("frequency (GHz)")
    return _finish(fig, path)
