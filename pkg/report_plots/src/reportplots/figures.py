"""The four figure kinds, one function each."""

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import data_path, envelope_reference, load_envelope_table, read_csv


def norm_decay(csv_path=None, outdir="."):
    rows = read_csv(csv_path or data_path("norms.csv"))
    t = [r["t"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for p in ("L1", "L2", "L4", "Linf"):
        ax.plot(t, [r[p] for r in rows], label=p)
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    ax.set_title("Lp norms along the flow")
    ax.legend(frameon=False)
    return _save(fig, outdir, "norm_decay.png")


def envelopes(csv_path=None, constants_path=None, outdir="."):
    rows, constants = load_envelope_table(csv_path, constants_path)
    ref = envelope_reference(rows, constants)
    s = [r["s_total"] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2), sharex=True)
    for ax, name in zip(axes, ("concentration", "height", "mass")):
        ax.semilogy(s, [r[name] for r in rows], "o", ms=3, label="measured")
        ax.semilogy(s, ref[name], "-", label="envelope")
        ax.set_title(name)
        ax.set_xlabel("elapsed s")
    axes[0].legend(frameon=False)
    fig.suptitle(f"r={constants['r']}, K={constants['K']:.3f}")
    return _save(fig, outdir, "envelopes.png")


def corona_slope(csv_path=None, outdir="."):
    rows = read_csv(csv_path or data_path("corona.csv"))
    r = np.array([row["r"] for row in rows])
    i2 = np.array([row["I2"] for row in rows])
    slope, intercept = np.polyfit(np.log(r), np.log(i2), 1)
    fig, ax = plt.subplots(figsize=(4.2, 3.5))
    ax.loglog(r, i2, "o", label="I2")
    ax.loglog(r, np.exp(intercept) * r ** slope, "--",
              label=f"fit slope {slope:.2f}")
    ax.set_xlabel("molecule radius r")
    ax.set_ylabel("I2")
    ax.legend(frameon=False)
    return _save(fig, outdir, "corona_slope.png")


def viscosity_sweep(csv_path=None, outdir="."):
    rows = read_csv(csv_path or data_path("sweep.csv"))
    labels = [f"{row['eps_hi']:g}-{row['eps_lo']:g}" for row in rows]
    fig, ax = plt.subplots(figsize=(4.2, 3.5))
    ax.bar(labels, [row["distance"] for row in rows])
    ax.set_xlabel("viscosity pair")
    ax.set_ylabel("sup-t L2 distance")
    ax.set_title("Cauchy behaviour as eps decreases")
    return _save(fig, outdir, "viscosity_sweep.png")


def _save(fig, outdir, name):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def make_all(outdir="."):
    return [norm_decay(outdir=outdir), envelopes(outdir=outdir),
            corona_slope(outdir=outdir), viscosity_sweep(outdir=outdir)]
