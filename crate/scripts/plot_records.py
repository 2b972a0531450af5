#!/usr/bin/env python3
"""Plot the output directory of `sphrec experiment run`.

usage: plot_records.py RESULTS_DIR [--out figure.png]
"""
import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def plot_exact(records, ax):
    g = records.groupby("k")["error"]
    ax.semilogy(g.median().index, g.median().clip(lower=1e-17), "o-", label="median")
    ax.semilogy(g.mean().index, g.mean().clip(lower=1e-17), "x--", label="mean")
    ax.set_xlabel("k")
    ax.set_ylabel("||c - c*||_2")
    ax.legend()


def plot_approx(records, ax):
    for trial, rows in records.groupby("trial"):
        ax.plot(rows["theta"], rows["error"], color="0.8", lw=0.8)
    med = records.groupby("theta")["error"].median()
    ax.plot(med.index, med.values, "o-", color="C0", label="median")
    ax.set_xlabel("theta")
    ax.set_ylabel("||c_C - c*||_2")
    ax.legend()


def plot_sweeps(summary, ax):
    for s in summary.get("tau_sweeps") or []:
        ax.step(s["taus"], s["k_of_tau"], where="post", alpha=0.6)
    ax.set_xlabel("tau")
    ax.set_ylabel("k(tau)")


def plot_consistency(path, ax):
    rows = pd.read_csv(path)
    ax.semilogy(rows["level"], rows["w_projection"], "s--", label="W(mu, mu_C)")
    ax.semilogy(rows["level"], rows["w"], "o-", label="W(mu, mu*_C)")
    ax.set_xlabel("level")
    ax.legend()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("results", type=Path)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    summary = json.loads((args.results / "summary.json").read_text())
    kind = summary["config"]["kind"]
    records = pd.read_csv(args.results / "records.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    if kind == "exact":
        plot_exact(records, ax)
    elif kind == "approx":
        plot_approx(records, ax)
    elif kind == "tau-sweep":
        plot_sweeps(summary, ax)
    else:
        plot_consistency(args.results / "consistency.csv", ax)
    ax.set_title(kind)
    fig.tight_layout()
    fig.savefig(args.out or args.results / "figure.png", dpi=150)


if __name__ == "__main__":
    main()
