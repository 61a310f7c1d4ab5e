"""Figure rendering for the CLI report paths (bench, stats, eval).

Figures are written straight to files next to the delimited output;
the Agg backend keeps everything headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def moving_average(values: Sequence[float], window: int) -> List[float]:
    out: List[float] = []
    acc = 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out


def save_bench_figure(
    unconstrained: Sequence[float],
    constrained: Sequence[float],
    path: str | Path,
    window: int = 10,
) -> None:
    """Per-token generation time for the two decoding modes, smoothed with
    a moving average so the curves are readable over timer noise."""
    fig, ax = plt.subplots(figsize=(9, 4.5))
    x = range(1, len(unconstrained) + 1)
    ax.plot(x, unconstrained, color="tab:blue", alpha=0.15, linewidth=0.6)
    ax.plot(x, constrained, color="tab:orange", alpha=0.15, linewidth=0.6)
    ax.plot(
        x,
        moving_average(unconstrained, window),
        color="tab:blue",
        label=f"unconstrained (ma{window})",
    )
    ax.plot(
        x,
        moving_average(constrained, window),
        color="tab:orange",
        label=f"constrained (ma{window})",
    )
    ax.set_xlabel("token")
    ax.set_ylabel("seconds per token")
    ax.set_title("Token generation time")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_stats_figure(stats_dict: dict, path: str | Path) -> None:
    """Duplicate-prefix histogram and blob-size percentiles, side by side."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    hist: Dict[str, int] = stats_dict.get("duplicate_key_histogram", {})
    keys = sorted(hist, key=int)
    ax1.bar(keys, [hist[k] for k in keys], color="tab:blue")
    ax1.set_xlabel("rows per prefix")
    ax1.set_ylabel("prefixes")
    ax1.set_title("Duplicate-prefix histogram")
    ax1.set_yscale("log")

    pct = stats_dict.get("blob_size_percentiles", {})
    names = [k for k in ("p50", "p90", "p99", "max") if k in pct]
    ax2.bar(names, [pct[k] for k in names], color="tab:orange")
    ax2.set_ylabel("bytes")
    ax2.set_title("Subtree blob sizes")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_eval_figure(result_dict: dict, path: str | Path) -> None:
    """Accuracy and precision, overall and per answer/question type."""
    groups: List[tuple] = [("overall", result_dict["overall"])]
    groups += sorted(result_dict.get("by_answer_type", {}).items())
    groups += sorted(result_dict.get("by_question_type", {}).items())
    names = [g[0] for g in groups]
    acc = [g[1]["accuracy"] for g in groups]
    prec = [g[1]["precision"] if g[1]["precision"] is not None else 0.0 for g in groups]

    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(names)), 4))
    xs = range(len(names))
    width = 0.38
    ax.bar([x - width / 2 for x in xs], acc, width, label="accuracy", color="tab:blue")
    ax.bar(
        [x + width / 2 for x in xs], prec, width, label="precision", color="tab:orange"
    )
    ax.set_xticks(list(xs))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_title("Exact-match results")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
