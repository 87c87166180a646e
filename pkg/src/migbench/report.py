"""Human-facing report rendering: aligned tables, TSV files, and figures.

The feedback and evaluation commands write three artifact kinds side by
side: canonical JSON (machine state), a TSV table (delimited, greppable),
and PNG charts rendered with matplotlib's Agg backend.
"""

from __future__ import annotations

from pathlib import Path

from .evaluate import EvalReport
from .suite import KbFeedback


def _fmt_ratio(value: float | None) -> str:
    return f"{value:.3f}" if value is not None else "-"


def _align(rows: list[list[str]]) -> str:
    widths = [max(len(row[col]) for row in rows) for col in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Feedback
# ---------------------------------------------------------------------------


def render_feedback_table(feedback: KbFeedback) -> str:
    rows = [["kb_id", "matched_hunks", "flags"]]
    for kb_id, count in sorted(feedback.kb_hit_counts.items()):
        flags = []
        if kb_id in feedback.silent_kbs:
            flags.append("silent")
        if kb_id in feedback.noisy_kbs:
            flags.append("noisy")
        rows.append([kb_id, str(count), ",".join(flags) or "-"])
    table = _align(rows)
    extra = ["", "unmatched hunks per service:"]
    for service_id, count in sorted(feedback.unmatched_hunk_count.items()):
        extra.append(f"  {service_id}: {count}")
    return table + "\n" + "\n".join(extra) + "\n"


def feedback_tsv(feedback: KbFeedback) -> str:
    lines = ["kb_id\tmatched_hunks\tsilent\tnoisy"]
    for kb_id, count in sorted(feedback.kb_hit_counts.items()):
        silent = "yes" if kb_id in feedback.silent_kbs else "no"
        noisy = "yes" if kb_id in feedback.noisy_kbs else "no"
        lines.append(f"{kb_id}\t{count}\t{silent}\t{noisy}")
    return "\n".join(lines) + "\n"


def save_feedback_figures(feedback: KbFeedback, out_dir) -> list[Path]:
    """Bar charts of per-KB hit counts and per-service unmatched hunks."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    kb_ids = sorted(feedback.kb_hit_counts)
    counts = [feedback.kb_hit_counts[k] for k in kb_ids]
    colors = ["#b0b0b0" if k in feedback.silent_kbs else "#4878d0" for k in kb_ids]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(kb_ids)), 3.5))
    ax.bar(range(len(kb_ids)), counts, color=colors)
    ax.set_xticks(range(len(kb_ids)))
    ax.set_xticklabels(kb_ids, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("matched hunks")
    ax.set_title("KB hit counts (grey = silent)")
    fig.tight_layout()
    path = out_dir / "kb_hit_counts.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    services = sorted(feedback.unmatched_hunk_count)
    if services:
        values = [feedback.unmatched_hunk_count[s] for s in services]
        fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(services)), 3.0))
        ax.bar(range(len(services)), values, color="#d65f5f")
        ax.set_xticks(range(len(services)))
        ax.set_xticklabels(services, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("unmatched hunks")
        ax.set_title("Idiosyncratic (unmatched) hunks per service")
        fig.tight_layout()
        path = out_dir / "unmatched_hunks.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def render_eval_table(report: EvalReport) -> str:
    rows = [["kb_id", "attempted", "validated"]]
    for kb_id, outcome in sorted(report.per_kb.items()):
        rows.append([kb_id, "yes" if outcome.attempted else "no", "yes" if outcome.validated else "no"])
    table = _align(rows)
    summary = [
        "",
        f"line precision: {_fmt_ratio(report.line_precision)}",
        f"line recall:    {_fmt_ratio(report.line_recall)}",
        f"line f1:        {_fmt_ratio(report.line_f1)}",
        f"kb precision:   {_fmt_ratio(report.kb_precision)}",
        f"kb recall:      {_fmt_ratio(report.kb_recall)}",
        f"edit pairs: {report.matched_pairs}  unmatched predicted: {report.unmatched_predicted}  unmatched truth: {report.unmatched_truth}",
    ]
    return table + "\n" + "\n".join(summary) + "\n"


def eval_tsv(report: EvalReport) -> str:
    lines = ["kb_id\tattempted\tvalidated"]
    for kb_id, outcome in sorted(report.per_kb.items()):
        lines.append(f"{kb_id}\t{'yes' if outcome.attempted else 'no'}\t{'yes' if outcome.validated else 'no'}")
    return "\n".join(lines) + "\n"


def eval_report_json(report: EvalReport) -> str:
    import json

    document = {
        "service_id": report.service_id,
        "tau": report.tau,
        "line_precision": report.line_precision,
        "line_recall": report.line_recall,
        "line_f1": report.line_f1,
        "kb_precision": report.kb_precision,
        "kb_recall": report.kb_recall,
        "per_kb": {
            kb_id: {"attempted": outcome.attempted, "validated": outcome.validated}
            for kb_id, outcome in sorted(report.per_kb.items())
        },
        "matched_pairs": report.matched_pairs,
        "unmatched_predicted": report.unmatched_predicted,
        "unmatched_truth": report.unmatched_truth,
    }
    return json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def save_eval_figures(report: EvalReport, out_dir) -> list[Path]:
    """Line-metric bars plus a per-KB attempted/validated grid."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    labels = ["line P", "line R", "line F1", "kb P", "kb R"]
    values = [
        report.line_precision,
        report.line_recall,
        report.line_f1,
        report.kb_precision,
        report.kb_recall,
    ]
    fig, (left, right) = plt.subplots(
        1, 2, figsize=(max(7.0, 1.0 * len(report.per_kb) + 4.5), 3.5), width_ratios=[2, 3]
    )
    shown = [(label, value) for label, value in zip(labels, values) if value is not None]
    left.bar(range(len(shown)), [v for _, v in shown], color="#4878d0")
    left.set_xticks(range(len(shown)))
    left.set_xticklabels([l for l, _ in shown], rotation=30, ha="right", fontsize=8)
    left.set_ylim(0, 1.05)
    left.set_title(f"metrics ({report.service_id})")

    kb_ids = sorted(report.per_kb)
    attempted = [1 if report.per_kb[k].attempted else 0 for k in kb_ids]
    validated = [1 if report.per_kb[k].validated else 0 for k in kb_ids]
    xs = range(len(kb_ids))
    right.bar([x - 0.2 for x in xs], attempted, width=0.4, label="attempted", color="#ee854a")
    right.bar([x + 0.2 for x in xs], validated, width=0.4, label="validated", color="#6acc64")
    right.set_xticks(list(xs))
    right.set_xticklabels(kb_ids, rotation=30, ha="right", fontsize=8)
    right.set_yticks([0, 1])
    right.set_ylim(0, 1.3)
    right.legend(fontsize=8)
    right.set_title("per-KB coverage")
    fig.tight_layout()
    path = out_dir / "eval_metrics.png"
    fig.savefig(path)
    plt.close(fig)
    return [path]
