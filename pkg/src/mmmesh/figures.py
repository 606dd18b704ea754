"""Figure rendering for run reports. All functions write a PNG and return
its path; data stays in the CSVs, the figures are just the readable view."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

plt.rcParams.update({
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
})


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_compare(rows, path, title="Goodput vs interference level"):
    """rows: (level, greedy_goodput, policy_goodput, normalized)."""
    rows = sorted(rows)
    levels = [r[0] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4.0))
    ax1.plot(levels, [r[1] for r in rows], "o-", label="greedy")
    ax1.plot(levels, [r[2] for r in rows], "s-", label="policy")
    ax1.set_xlabel("interference level")
    ax1.set_ylabel("goodput [%]")
    ax1.set_ylim(0, 105)
    ax1.legend()
    ax2.plot(levels, [r[3] for r in rows], "d-", color="tab:green")
    ax2.axhline(100.0, color="gray", lw=0.8, ls="--")
    ax2.set_xlabel("interference level")
    ax2.set_ylabel("policy goodput, % of greedy")
    fig.suptitle(title)
    return _save(fig, path)


def plot_goodput_levels(rows, path, title="Goodput vs interference level"):
    """rows: (level, mean_goodput, std_goodput)."""
    rows = sorted(rows)
    levels = [r[0] for r in rows]
    means = [r[1] for r in rows]
    stds = [r[2] for r in rows]
    fig, ax = plt.subplots()
    ax.errorbar(levels, means, yerr=stds, fmt="o-", capsize=3)
    ax.set_xlabel("interference level")
    ax.set_ylabel("goodput [%]")
    ax.set_ylim(0, 105)
    ax.set_title(title)
    return _save(fig, path)


def plot_timing(rows, path, title="Decision latency"):
    """rows: (topology, workload, scheduler, mean_ms). Log scale, grouped by
    topology with one bar per (scheduler, workload)."""
    topos = sorted({r[0] for r in rows})
    combos = sorted({(r[2], r[1]) for r in rows})
    fig, ax = plt.subplots()
    width = 0.8 / max(len(combos), 1)
    for j, (sched, wl) in enumerate(combos):
        xs, ys = [], []
        for i, t in enumerate(topos):
            for r in rows:
                if r[0] == t and r[1] == wl and r[2] == sched:
                    xs.append(i + j * width)
                    ys.append(r[3])
        ax.bar(xs, ys, width=width, label=f"{sched} / {wl}")
    ax.set_yscale("log")
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(topos))])
    ax.set_xticklabels(topos)
    ax.set_ylabel("mean decision time [ms]")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_reward_curve(rows, path, title="Training reward"):
    """rows: (step, mean_reward, mean_episode_len, drop_rate)."""
    steps = [r[0] for r in rows]
    fig, ax = plt.subplots()
    ax.plot(steps, [r[1] for r in rows], "o-", color="tab:blue")
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean episode reward", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(steps, [r[3] for r in rows], "s--", color="tab:red", alpha=0.7)
    ax2.set_ylabel("drop rate", color="tab:red")
    ax2.grid(False)
    ax.set_title(title)
    return _save(fig, path)
