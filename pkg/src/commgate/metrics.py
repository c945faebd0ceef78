"""Metrics CSVs, summaries, message heatmaps and comparison reports."""

import csv
import math

import numpy as np

METRIC_FIELDS = ("episode", "reward", "length", "collisions",
                 "messages_sent", "messages_possible", "pruned_fraction")
_INT_FIELDS = {"episode", "length", "collisions", "messages_sent",
               "messages_possible"}

GRID_SIZE = 21


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_FIELDS)
        for row in rows:
            out = []
            for f in METRIC_FIELDS:
                v = row.get(f, 0)
                out.append(int(v) if f in _INT_FIELDS else repr(float(v)))
            w.writerow(out)


def read_metrics_csv(path):
    rows = []
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames) != METRIC_FIELDS:
            raise ValueError(f"{path}: unexpected CSV schema {r.fieldnames}")
        for raw in r:
            row = {}
            for f in METRIC_FIELDS:
                row[f] = int(raw[f]) if f in _INT_FIELDS else float(raw[f])
            rows.append(row)
    return rows


def check_message_accounting(rows, n_agents):
    """Invariants recomputed by an independent counter."""
    for row in rows:
        possible = n_agents * row["length"]
        if row["messages_possible"] != possible:
            raise AssertionError("messages_possible mismatch")
        if not 0 <= row["messages_sent"] <= possible:
            raise AssertionError("messages_sent out of range")
        frac = 1.0 - row["messages_sent"] / possible
        if abs(frac - row["pruned_fraction"]) > 1e-12:
            raise AssertionError("pruned_fraction mismatch")


def summarize(rows, last=100):
    tail = rows[-last:] if last else rows
    sent = sum(r["messages_sent"] for r in tail)
    possible = sum(r["messages_possible"] for r in tail)
    return {
        "episodes": len(rows),
        "reward": float(np.mean([r["reward"] for r in tail])),
        "delay": float(np.mean([r["length"] for r in tail])),
        "collisions": float(np.mean([r["collisions"] for r in tail])),
        "message_pct": 100.0 * sent / possible if possible else 0.0,
        "pruned_fraction": 1.0 - sent / possible if possible else 0.0,
    }


def aggregate_summaries(summaries):
    """mean +/- std over seeds, computed from the per-seed summaries."""
    keys = ("reward", "delay", "collisions", "message_pct", "pruned_fraction")
    agg = {}
    for k in keys:
        vals = [s[k] for s in summaries]
        agg[k] = (float(np.mean(vals)), float(np.std(vals)))
    return agg


def message_heatmap(events, grid_size=GRID_SIZE):
    """Normalized 2D histogram of sent-message locations.

    events: iterable of (x, y, gate); only gate == 1 entries are counted.
    Returns (grid, empty_flag); an empty log yields an all-zero grid with the
    flag set.
    """
    grid = np.zeros((grid_size, grid_size))
    for x, y, g in events:
        if g != 1:
            continue
        ix = min(int(x * grid_size), grid_size - 1)
        iy = min(int(y * grid_size), grid_size - 1)
        grid[iy, ix] += 1.0
    total = grid.sum()
    if total == 0:
        return grid, True
    return grid / total, False


def heatmap_locality(grid, radius=3):
    """Mass within a Chebyshev radius of the junction cell vs outside."""
    n = grid.shape[0]
    c = n // 2
    inside = 0.0
    for iy in range(n):
        for ix in range(n):
            if max(abs(iy - c), abs(ix - c)) <= radius:
                inside += grid[iy, ix]
    outside = grid.sum() - inside
    ratio = inside / outside if outside > 0 else math.inf
    return inside, outside, ratio


def write_heatmap_csv(path, grid):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in grid:
            w.writerow([repr(float(v)) for v in row])


def compare_report(variants, baseline=None):
    """Tabulate per-variant results; variants maps a name to a dict with
    keys 'env' and 'summaries' (one summary per seed).

    When a baseline variant is named, each row also carries the reward
    decrease relative to it (negative = improvement) and the pruned
    percentage, mirroring fixed-threshold sweeps.
    """
    envs = {v["env"] for v in variants.values()}
    if len(envs) > 1:
        raise ValueError(f"cannot compare runs across environments: {sorted(envs)}")
    base_reward = None
    if baseline is not None:
        if baseline not in variants:
            raise ValueError(f"baseline {baseline!r} not among variants")
        base_reward = aggregate_summaries(variants[baseline]["summaries"])["reward"][0]

    header = ["variant", "reward", "delay", "collisions", "message_pct"]
    if base_reward is not None:
        header += ["pruned_pct", "reward_decrease_pct"]
    rows = []
    for name, v in variants.items():
        agg = aggregate_summaries(v["summaries"])
        row = {
            "variant": name,
            "reward": agg["reward"][0],
            "delay": agg["delay"][0],
            "collisions": agg["collisions"][0],
            "message_pct": agg["message_pct"][0],
        }
        if base_reward is not None:
            row["pruned_pct"] = 100.0 * agg["pruned_fraction"][0]
            denom = abs(base_reward) if base_reward != 0 else 1.0
            row["reward_decrease_pct"] = \
                100.0 * (base_reward - agg["reward"][0]) / denom
        rows.append(row)

    widths = {h: max(len(h), 12) for h in header}
    lines = ["  ".join(h.ljust(widths[h]) for h in header)]
    for row in rows:
        cells = []
        for h in header:
            v = row[h]
            cells.append((v if isinstance(v, str) else f"{v:.3f}").ljust(widths[h]))
        lines.append("  ".join(cells))
    return "\n".join(lines), rows
