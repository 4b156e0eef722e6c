"""Figure rendering for evaluation reports and training logs.

Every renderer writes a PNG next to the delimited outputs and returns the
path. The Agg backend keeps rendering headless and reproducible.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricsReport
from .simulator import ConversationLog


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_turns_histogram(logs: list[ConversationLog], path: str | Path) -> Path:
    counts = [log.turn_count for log in logs]
    top = max(counts)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(counts, bins=[b - 0.5 for b in range(1, top + 2)],
            color="#4878cf", edgecolor="white")
    ax.set_xlabel("turns per conversation")
    ax.set_ylabel("conversations")
    ax.set_title("Simulated conversation length")
    fig.tight_layout()
    return _save(fig, Path(path))


def render_distinct_bars(report: MetricsReport, path: str | Path) -> Path:
    ns = [1, 2, 3]
    width = 0.35
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar([n - width / 2 for n in ns], report.dist_intra, width,
           label="intra-session", color="#4878cf")
    ax.bar([n + width / 2 for n in ns], report.dist_inter, width,
           label="inter-session", color="#ee854a")
    ax.set_xticks(ns)
    ax.set_xticklabels([f"Dist-{n}" for n in ns])
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("distinct / total n-grams")
    ax.set_title("Diversity of simulated replies")
    ax.legend()
    fig.tight_layout()
    return _save(fig, Path(path))


def render_reward_by_turn(logs: list[ConversationLog], path: str | Path) -> Path:
    longest = max(log.turn_count for log in logs)
    means = {"r1": [], "r2": [], "r": []}
    positions = list(range(1, longest + 1))
    for pos in positions:
        rows = [log.turns[pos - 1] for log in logs if log.turn_count >= pos]
        means["r1"].append(sum(t.reward.r1 for t in rows) / len(rows))
        means["r2"].append(sum(t.reward.r2 for t in rows) / len(rows))
        means["r"].append(sum(t.reward.r for t in rows) / len(rows))
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(positions, means["r1"], marker="o", label="effectiveness r1")
    ax.plot(positions, means["r2"], marker="s", label="relevance r2")
    ax.plot(positions, means["r"], marker="^", label="combined r")
    ax.set_xlabel("turn")
    ax.set_ylabel("mean reward")
    ax.set_title("Reward by turn position")
    ax.legend()
    fig.tight_layout()
    return _save(fig, Path(path))


def render_report_figures(report: MetricsReport, logs: list[ConversationLog],
                          out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    return [
        render_turns_histogram(logs, out_dir / "turns_histogram.png"),
        render_distinct_bars(report, out_dir / "distinct_ngrams.png"),
        render_reward_by_turn(logs, out_dir / "reward_by_turn.png"),
    ]


def render_training_curve(rows: list[dict], path: str | Path) -> Path:
    iters = [r["iter"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(5, 4.4), sharex=True)
    ax1.plot(iters, [r["mean_return"] for r in rows], color="#4878cf")
    ax1.set_ylabel("mean return")
    ax1.set_title("Policy training")
    ax2.plot(iters, [r["policy_entropy"] for r in rows], color="#ee854a")
    ax2.set_ylabel("policy entropy")
    ax2.set_xlabel("iteration")
    fig.tight_layout()
    return _save(fig, Path(path))
