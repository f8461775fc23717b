"""SVG plot emission, rendered purely from the run directory's CSV files:
skill-trajectory fans, learning curves with bootstrap bands, and maze paths.
"""
from __future__ import annotations

import glob
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .envs import HAZARD_BOXES, load_maze_layout  # noqa: E402
from .game import reset_state_dispersion  # noqa: E402
from .harness import bootstrap_ci, read_metrics  # noqa: E402

TRAJ_COLUMNS = {"step", "phase", "skill", "x", "y", "reward", "terminated"}


def _require_columns(path, rows, required):
    if not rows:
        raise ValueError(f"{path}: no data rows")
    missing = required - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")


def plot_skill_fan(traj_csv, out_svg):
    """One polyline per reset rollout, colored by skill; the dispersion of
    the rollouts' final states is annotated."""
    rows = read_metrics(traj_csv)
    _require_columns(traj_csv, rows, TRAJ_COLUMNS)
    skills = sorted({int(r["skill"]) for r in rows})
    cmap = plt.get_cmap("tab10")
    fig, ax = plt.subplots(figsize=(6, 6))
    finals = []
    seen = set()
    segment = []
    prev_step = None

    def flush(seg):
        if seg:
            z = seg[0][2]
            label = f"skill {z}" if z not in seen else None
            seen.add(z)
            xs, ys = [p[0] for p in seg], [p[1] for p in seg]
            ax.plot(xs, ys, color=cmap(skills.index(z) % 10), lw=1.0,
                    alpha=0.8, label=label)
            finals.append((xs[-1], ys[-1]))

    for r in rows:
        step = int(r["step"])
        if prev_step is not None and step <= prev_step:
            flush(segment)
            segment = []
        segment.append((float(r["x"]), float(r["y"]), int(r["skill"])))
        prev_step = step
    flush(segment)

    for x0, x1, y0, y1 in HAZARD_BOXES:
        ax.add_patch(plt.Rectangle((x0, y0), x1 - x0, y1 - y0,
                                   color="red", alpha=0.3))
    if len(finals) >= 2:
        ax.set_title(
            f"reset skill rollouts "
            f"(dispersion {reset_state_dispersion(finals):.2f})")
    ax.set_xlim(-10, 10)
    ax.set_ylim(-10, 10)
    ax.legend(loc="upper left", fontsize=8)
    fig.savefig(out_svg)
    plt.close(fig)


def plot_learning_curves(run_dir, out_svg, column="eval_success",
                         csv_name="metrics.csv", x_column="iteration"):
    """Cross-seed mean with a 95% bootstrap band, re-derived from the raw
    per-seed CSVs."""
    seed_dirs = sorted(glob.glob(os.path.join(run_dir, "seed_*")))
    if not seed_dirs:
        raise ValueError(f"{run_dir}: no seed directories")
    series = []
    for sd in seed_dirs:
        path = os.path.join(sd, csv_name)
        rows = read_metrics(path)
        _require_columns(path, rows, {column, x_column})
        pts = [(float(r[x_column]), float(r[column])) for r in rows
               if r[column] not in ("", "nan")]
        series.append(pts)
    n = min(len(s) for s in series)
    xs = [series[0][i][0] for i in range(n)]
    rng = np.random.default_rng(1234)
    means, los, his = [], [], []
    for i in range(n):
        vals = [s[i][1] for s in series]
        means.append(float(np.mean(vals)))
        lo, hi = bootstrap_ci(vals, rng)
        los.append(lo)
        his.append(hi)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(xs, means, lw=1.5)
    ax.fill_between(xs, los, his, alpha=0.25)
    ax.set_xlabel(x_column)
    ax.set_ylabel(column)
    fig.savefig(out_svg)
    plt.close(fig)


def plot_maze_path(path_csv, out_svg):
    rows = read_metrics(path_csv)
    _require_columns(path_csv, rows, TRAJ_COLUMNS)
    layout = load_maze_layout()
    n = len(layout)
    cell = 20.0 / n
    fig, ax = plt.subplots(figsize=(6, 6))
    for r, row in enumerate(layout):
        for c, ch in enumerate(row):
            x = -10 + c * cell
            y = 10 - (r + 1) * cell
            if ch == "#":
                ax.add_patch(plt.Rectangle((x, y), cell, cell, color="gray"))
            elif ch == "G":
                ax.add_patch(plt.Rectangle((x, y), cell, cell, color="gold",
                                           alpha=0.5))
            elif ch == "S":
                ax.add_patch(plt.Rectangle((x, y), cell, cell, color="green",
                                           alpha=0.3))
    xs = [float(r["x"]) for r in rows]
    ys = [float(r["y"]) for r in rows]
    ax.plot(xs, ys, "o-", color="tab:blue", ms=3)
    ax.set_xlim(-10, 10)
    ax.set_ylim(-10, 10)
    fig.savefig(out_svg)
    plt.close(fig)


def emit_plots(run_dir):
    """Render every plot the run directory supports; returns the SVG paths."""
    out = []
    seed_dirs = sorted(glob.glob(os.path.join(run_dir, "seed_*")))
    if seed_dirs:
        fans = sorted(glob.glob(os.path.join(seed_dirs[0],
                                             "trajectories_iter*.csv")),
                      key=lambda p: int(p.rsplit("iter", 1)[1][:-4]))
        if fans:
            dest = os.path.join(run_dir, "skill_fan.svg")
            plot_skill_fan(fans[-1], dest)
            out.append(dest)
        if os.path.exists(os.path.join(seed_dirs[0], "metrics.csv")):
            dest = os.path.join(run_dir, "learning_curve.svg")
            plot_learning_curves(run_dir, dest)
            out.append(dest)
        if os.path.exists(os.path.join(seed_dirs[0], "curve.csv")):
            dest = os.path.join(run_dir, "hrl_curve.svg")
            plot_learning_curves(run_dir, dest,
                                 column="normalized_return",
                                 csv_name="curve.csv", x_column="epoch")
            out.append(dest)
        path_csv = os.path.join(seed_dirs[0], "best_path.csv")
        if os.path.exists(path_csv):
            dest = os.path.join(run_dir, "maze_path.svg")
            plot_maze_path(path_csv, dest)
            out.append(dest)
    if not out:
        raise ValueError(f"{run_dir}: nothing to plot")
    return out
