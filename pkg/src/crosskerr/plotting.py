"""Reference figures rendered from the CSV files written by the CLI."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "savefig.bbox": "tight",
}


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns of a CLI CSV; numeric columns as float arrays, others as str arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for key in rows[0] if rows else []:
        vals = [r[key] for r in rows]
        try:
            out[key] = np.array([float(v) for v in vals])
        except ValueError:
            out[key] = np.array(vals)
    return out


def _grid(data, x, y, z):
    xs, ys = np.unique(data[x]), np.unique(data[y])
    zz = np.full((xs.size, ys.size), np.nan)
    ix, iy = np.searchsorted(xs, data[x]), np.searchsorted(ys, data[y])
    zz[ix, iy] = data[z]
    return xs, ys, zz


def plot_chevron(data):
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.4), sharey=True)
    for a, (col, title) in zip(axes, [("p_alice_vac", "Alice vacuum"), ("p_bob_vac", "Bob vacuum"), ("p_coupler_e", "coupler excited")]):
        d, t, z = _grid(data, "delta_MHz", "t_us", col)
        if d.size > 1:
            mesh = a.pcolormesh(t, d, z, shading="auto", vmin=0, vmax=1, cmap="viridis")
        else:
            a.plot(t, z[0])
            mesh = None
        a.set_xlabel(r"$t$ ($\mu$s)")
        a.set_title(title)
    axes[0].set_ylabel(r"$\Delta/2\pi$ (MHz)" if mesh is not None else "population")
    if mesh is not None:
        fig.colorbar(mesh, ax=axes, shrink=0.9)
    return fig


def plot_sweep(data):
    fig, ax = plt.subplots()
    ax.plot(data["delta_MHz"], np.abs(data["g_ab_kHz"]), "o", label="Floquet")
    ax.plot(data["delta_MHz"], np.abs(data["g_swt_kHz"]), "-", label="second order")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\Delta/2\pi$ (MHz)")
    ax.set_ylabel(r"$|g_{ab}|/2\pi$ (kHz)")
    ax.legend()
    return fig


def plot_ramsey(data):
    fig, ax = plt.subplots()
    ax.plot(data["t_us"], data["phase_b0_rad"], label="Bob |0>")
    ax.plot(data["t_us"], data["phase_b1_rad"], label="Bob |1>")
    ax.set_xlabel(r"$t$ ($\mu$s)")
    ax.set_ylabel("Alice phase (rad)")
    ax.legend()
    return fig


def plot_density(data):
    n = int(round(np.sqrt(data["row"].size)))
    rho = np.zeros((n, n), dtype=complex)
    rho[data["row"].astype(int), data["col"].astype(int)] = data["rho_re"] + 1j * data["rho_im"]
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.6))
    for a, part, title in zip(axes, (rho.real, rho.imag), ("Re", "Im")):
        im = a.imshow(part, vmin=-0.5, vmax=0.5, cmap="RdBu_r")
        a.set_title(f"{title} rho")
    fig.colorbar(im, ax=axes, shrink=0.9)
    return fig


def plot_bars(data):
    fig, ax = plt.subplots(figsize=(7, 3.2))
    keep = data["pauli"] != "leakage"
    ax.bar(data["pauli"][keep], data["value"][keep])
    ax.axhline(0, color="k", lw=0.6)
    ax.set_ylim(-1.05, 1.05)
    ax.set_ylabel("expectation")
    return fig


def plot_repeated(data):
    fig, ax = plt.subplots()
    ax.plot(data["n_gates"], data["fidelity"], "o-", label="gates")
    ax.plot(data["n_gates"], data["fidelity_idle"], "s--", label="idle")
    ax.set_xlabel("number of gates")
    ax.set_ylabel("fidelity")
    ax.legend()
    return fig


def plot_tomography(data):
    fig, ax = plt.subplots()
    key = "fidelity_bme" if "fidelity_bme" in data else "fidelity_ls"
    ax.plot(data["state"], data[key], "o")
    ax.set_xlabel("state index")
    ax.set_ylabel(key.replace("_", " "))
    return fig


def plot_parity(data):
    fig, ax = plt.subplots()
    ax.plot(data["delay_us"], data["p_e"], "o", label="P(e)")
    ax.plot(data["delay_us"], data["p2"], "-", label="P(2)")
    ax.plot(data["delay_us"], data["p2_post"], "--", label="P(2 | g)")
    ax.set_xlabel(r"delay ($\mu$s)")
    ax.set_ylabel("probability")
    ax.legend()
    return fig


def plot_budget(data):
    fig, ax = plt.subplots()
    states = list(dict.fromkeys(data["state"]))
    sources = [s for s in dict.fromkeys(data["source"]) if s != "ideal"]
    bottom = np.zeros(len(states))
    for src in sources:
        vals = np.array([data["infidelity"][(data["state"] == st) & (data["source"] == src)].sum() for st in states]) * 100
        ax.bar(states, vals, bottom=bottom, label=src)
        bottom += vals
    ax.set_ylabel("infidelity (%)")
    ax.legend()
    return fig


PLOTTERS = {
    "chevron": plot_chevron,
    "crosskerr-sweep": plot_sweep,
    "ramsey": plot_ramsey,
    "cz-gate": plot_density,
    "repeated-gates": plot_repeated,
    "bell-state": plot_bars,
    "tomography": plot_tomography,
    "parity-check": plot_parity,
    "error-budget": plot_budget,
}


def plot_experiment(experiment: str, csv_path, out_path) -> Path:
    """Render the reference figure of ``experiment`` from its CSV."""
    with plt.rc_context(STYLE):
        fig = PLOTTERS[experiment](read_csv(csv_path))
        fig.savefig(out_path)
        plt.close(fig)
    return Path(out_path)
