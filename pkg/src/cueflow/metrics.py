"""Automatic metrics over simulated conversation logs: average turns,
distinct n-gram ratios and counts, and cue-word analyses.

n-grams never cross utterance boundaries. Intra-session ratios average the
per-session distinct/total quotients; inter-session ratios pool distinct
and total counts over all sessions before dividing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .reward import cosine, greedy_match
from .simulator import ConversationLog
from .vectors import EmbeddingTable


def ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def _session_ngrams(log: ConversationLog, n: int) -> list[tuple[str, ...]]:
    out = []
    for turn in log.turns:
        out.extend(ngrams(turn.tokens, n))
    return out


def avg_turns(logs: list[ConversationLog]) -> float:
    if not logs:
        raise ValueError("avg_turns requires at least one log")
    return sum(log.turn_count for log in logs) / len(logs)


def dist_n(logs: list[ConversationLog], n: int, scope: str = "intra") -> float:
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3")
    if scope == "intra":
        ratios = []
        for log in logs:
            grams = _session_ngrams(log, n)
            ratios.append(len(set(grams)) / len(grams) if grams else 0.0)
        return sum(ratios) / len(ratios) if ratios else 0.0
    if scope == "inter":
        pooled: list[tuple[str, ...]] = []
        for log in logs:
            pooled.extend(_session_ngrams(log, n))
        return len(set(pooled)) / len(pooled) if pooled else 0.0
    raise ValueError(f"unknown scope {scope!r}")


def distinct_counts(logs: list[ConversationLog]) -> dict:
    """Per-session averages of distinct 1/2/3-gram counts plus the number
    of distinct words pooled over all logs."""
    if not logs:
        raise ValueError("distinct_counts requires at least one log")
    per_n = {}
    for n in (1, 2, 3):
        per_n[n] = sum(len(set(_session_ngrams(log, n))) for log in logs) / len(logs)
    pooled_words = set()
    for log in logs:
        for turn in log.turns:
            pooled_words.update(turn.tokens)
    return {
        "unigrams": per_n[1],
        "bigrams": per_n[2],
        "trigrams": per_n[3],
        "total_distinct_words": len(pooled_words),
    }


def cue_compactness(logs: list[ConversationLog], table: EmbeddingTable) -> tuple[float, int]:
    """Mean cosine over all unordered cue-word pairs within a log, averaged
    over logs. Logs with fewer than two cues are skipped; their count is
    returned alongside the value."""
    values = []
    skipped = 0
    for log in logs:
        cues = [t.cue for t in log.turns]
        if len(cues) < 2:
            skipped += 1
            continue
        total = 0.0
        pairs = 0
        for i in range(len(cues)):
            for j in range(i + 1, len(cues)):
                total += cosine(table.get(cues[i]), table.get(cues[j]))
                pairs += 1
        values.append(total / pairs)
    value = sum(values) / len(values) if values else 0.0
    return value, skipped


def cue_reply_correlation(logs: list[ConversationLog], table: EmbeddingTable) -> float:
    """Mean over all turns of the cue word's greedy match against its own
    generated utterance."""
    total = 0.0
    count = 0
    for log in logs:
        for turn in log.turns:
            total += greedy_match(turn.cue, turn.tokens, table)
            count += 1
    return total / count if count else 0.0


def cue_appearance_rate(logs: list[ConversationLog]) -> float:
    """Fraction of turns whose cue word occurs verbatim in the utterance."""
    total = 0
    hits = 0
    for log in logs:
        for turn in log.turns:
            total += 1
            if turn.cue in turn.tokens:
                hits += 1
    return hits / total if total else 0.0


@dataclass
class MetricsReport:
    method: str
    avg_turns: float
    dist_intra: list[float]
    dist_inter: list[float]
    distinct: dict
    cue_compactness: float
    compactness_skipped: int
    cue_reply_correlation: float
    cue_appearance_rate: float
    sessions: int

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "sessions": self.sessions,
            "avg_turns": self.avg_turns,
            "dist": {"intra": self.dist_intra, "inter": self.dist_inter},
            "distinct_counts": self.distinct,
            "cue_compactness": self.cue_compactness,
            "cue_compactness_skipped_logs": self.compactness_skipped,
            "cue_reply_correlation": self.cue_reply_correlation,
            "cue_appearance_rate": self.cue_appearance_rate,
        }


def build_report(logs: list[ConversationLog], table: EmbeddingTable,
                 method: str = "rlcw") -> MetricsReport:
    compact, skipped = cue_compactness(logs, table)
    return MetricsReport(
        method=method,
        avg_turns=avg_turns(logs),
        dist_intra=[dist_n(logs, n, "intra") for n in (1, 2, 3)],
        dist_inter=[dist_n(logs, n, "inter") for n in (1, 2, 3)],
        distinct=distinct_counts(logs),
        cue_compactness=compact,
        compactness_skipped=skipped,
        cue_reply_correlation=cue_reply_correlation(logs, table),
        cue_appearance_rate=cue_appearance_rate(logs),
        sessions=len(logs),
    )


def report_json(report: MetricsReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)


def report_markdown(report: MetricsReport) -> str:
    d = report.distinct
    lines = [
        "# Simulation metrics",
        "",
        f"Sessions: {report.sessions}. Intra-session Dist-n averages per-session",
        "ratios; inter-session Dist-n pools distinct and total n-gram counts over",
        "all sessions before dividing.",
        "",
        "| Method | Turns | Dist-1 | Dist-2 | Dist-3 | Dist-1 | Dist-2 | Dist-3 "
        "| # U. | # B. | # T. | # Words |",
        "|---|---|---|---|---|---|---|---|---|---|---|---|",
        "| {m} | {turns:.2f} | {i1:.2f} | {i2:.2f} | {i3:.2f} | {e1:.2f} | {e2:.2f} "
        "| {e3:.2f} | {u:.2f} | {b:.2f} | {t:.2f} | {w} |".format(
            m=report.method,
            turns=report.avg_turns,
            i1=report.dist_intra[0], i2=report.dist_intra[1], i3=report.dist_intra[2],
            e1=report.dist_inter[0], e2=report.dist_inter[1], e3=report.dist_inter[2],
            u=d["unigrams"], b=d["bigrams"], t=d["trigrams"],
            w=d["total_distinct_words"],
        ),
        "",
        "Columns 3-5 are intra-session, columns 6-8 inter-session.",
        "",
        "## Cue word analysis",
        "",
        f"- cue compactness (mean pairwise cosine): {report.cue_compactness:.4f}"
        f" ({report.compactness_skipped} logs skipped with < 2 cues)",
        f"- cue / reply correlation (greedy match): {report.cue_reply_correlation:.4f}",
        f"- cue appearance rate: {report.cue_appearance_rate:.4f}",
        "",
    ]
    return "\n".join(lines)


def write_reports(report: MetricsReport, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    md_path = out_dir / "report.md"
    json_path.write_text(report_json(report) + "\n", encoding="utf-8")
    md_path.write_text(report_markdown(report), encoding="utf-8")
    return json_path, md_path
