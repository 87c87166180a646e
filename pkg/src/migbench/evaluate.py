"""Score an agent-produced patch against a benchmark suite.

Two metric families: line-edit precision/recall/F1 from a
maximum-cardinality matching of predicted to ground-truth line edits
under a normalized edit-distance threshold, and per-KB precision/recall
from which KBs the agent attempted (its hunks map to them) versus
validated (a ground-truth edit of that KB was reproduced).

Ratios with a zero denominator are reported as None, never coerced to 0
or 1.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bipartite import min_cost_max_matching
from .diffs import CTX, CommitDiff, FileDiff, LineEdit, extract_line_edits, parse_unified_diff
from .kb import KbSet
from .mapping import map_hunks
from .suite import BenchmarkSuite


class EvalError(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


class MetricDomainError(ValueError):
    """f1 is undefined when precision + recall is zero."""


@dataclass(frozen=True)
class AgentPatch:
    """An agent's unified diff against a service's pre-migration state."""

    service_id: str
    files: tuple[FileDiff, ...]

    @classmethod
    def parse(cls, text: str, service_id: str) -> "AgentPatch":
        return cls(service_id=service_id, files=tuple(parse_unified_diff(text)))

    def line_edits(self) -> list[LineEdit]:
        edits: list[LineEdit] = []
        for fd in self.files:
            for hunk in fd.hunks:
                edits.extend(extract_line_edits(hunk))
        return edits


@dataclass(frozen=True)
class MatchedPair:
    predicted: LineEdit
    truth: LineEdit
    distance: float


@dataclass(frozen=True)
class EditMatching:
    pairs: tuple[MatchedPair, ...]
    unmatched_predicted: tuple[LineEdit, ...]
    unmatched_truth: tuple[LineEdit, ...]


@dataclass(frozen=True)
class KbOutcome:
    attempted: bool
    validated: bool


@dataclass(frozen=True)
class EvalReport:
    service_id: str
    line_precision: float | None
    line_recall: float | None
    line_f1: float | None
    kb_precision: float | None
    kb_recall: float | None
    per_kb: dict  # kb_id -> KbOutcome
    matched_pairs: int
    unmatched_predicted: int
    unmatched_truth: int
    tau: float


def levenshtein(a: str, b: str) -> int:
    """Classic two-row dynamic-programming edit distance."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[len(b)]


def normalized_distance(a: str, b: str) -> float:
    """Levenshtein distance divided by the longer length; 0 for two empties."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


def _edit_sort_key(edit: LineEdit):
    return (edit.file, edit.anchor, edit.op, edit.content)


def match_edits(predicted, truth, tau: float = 0.2) -> EditMatching:
    """Maximum-cardinality matching of predicted to truth edits.

    Two edits are compatible when they share file and op and their
    contents are within normalized Levenshtein distance `tau`. Among
    maximum matchings the total distance is minimized; remaining ties are
    fixed by processing edits in (file, anchor) order.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be within [0, 1], got {tau}")
    predicted = sorted(predicted, key=_edit_sort_key)
    truth = sorted(truth, key=_edit_sort_key)

    # Edits can only pair within the same (file, op) bucket, so match each
    # bucket independently.
    buckets: dict[tuple[str, str], tuple[list[int], list[int]]] = {}
    for idx, edit in enumerate(predicted):
        buckets.setdefault((edit.file, edit.op), ([], []))[0].append(idx)
    for idx, edit in enumerate(truth):
        buckets.setdefault((edit.file, edit.op), ([], []))[1].append(idx)

    pairs: list[MatchedPair] = []
    matched_pred: set[int] = set()
    matched_truth: set[int] = set()
    for key in sorted(buckets):
        pred_idx, truth_idx = buckets[key]
        if not pred_idx or not truth_idx:
            continue
        edges: dict[tuple[int, int], float] = {}
        for i, pi in enumerate(pred_idx):
            for j, tj in enumerate(truth_idx):
                distance = normalized_distance(predicted[pi].content, truth[tj].content)
                if distance <= tau:
                    edges[(i, j)] = distance
        for i, j in min_cost_max_matching(len(pred_idx), len(truth_idx), edges):
            pi, tj = pred_idx[i], truth_idx[j]
            matched_pred.add(pi)
            matched_truth.add(tj)
            pairs.append(MatchedPair(predicted[pi], truth[tj], edges[(i, j)]))

    return EditMatching(
        pairs=tuple(pairs),
        unmatched_predicted=tuple(e for i, e in enumerate(predicted) if i not in matched_pred),
        unmatched_truth=tuple(e for i, e in enumerate(truth) if i not in matched_truth),
    )


def line_metrics(matching: EditMatching):
    """(precision, recall, f1); each None when its denominator is zero."""
    n_pairs = len(matching.pairs)
    n_predicted = n_pairs + len(matching.unmatched_predicted)
    n_truth = n_pairs + len(matching.unmatched_truth)
    precision = n_pairs / n_predicted if n_predicted else None
    recall = n_pairs / n_truth if n_truth else None
    if precision is None or recall is None or precision + recall == 0:
        score = None
    else:
        score = f1(precision, recall)
    return precision, recall, score


def f1(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall."""
    if precision + recall == 0:
        raise MetricDomainError("f1 undefined when precision + recall is zero")
    return 2 * precision * recall / (precision + recall)


def evaluate(patch: AgentPatch, suite: BenchmarkSuite, kbs: KbSet, synth, tau: float = 0.2) -> EvalReport:
    """Full evaluation of one agent patch against one service's instances."""
    instances = suite.for_service(patch.service_id)
    if not instances:
        raise EvalError("UNKNOWN_SERVICE", f"suite has no instances for service {patch.service_id!r}")

    # Union of all truth edits, de-duplicated across multi-KB instances by
    # (hunk_id, edit index); remember which edits belong to which KB.
    truth_edits: list[LineEdit] = []
    edit_ids: list[tuple[str, int]] = []
    kb_edit_ids: dict[str, set[tuple[str, int]]] = {}
    seen_hunks: set[str] = set()
    for inst in instances:
        kb_edit_ids.setdefault(inst.kb_id, set())
        for hunk in inst.hunks:
            ids = [(hunk.hunk_id, i) for i in range(sum(1 for k, _ in hunk.lines if k != CTX))]
            kb_edit_ids[inst.kb_id].update(ids)
            if hunk.hunk_id in seen_hunks:
                continue
            seen_hunks.add(hunk.hunk_id)
            for i, edit in enumerate(extract_line_edits(hunk)):
                truth_edits.append(edit)
                edit_ids.append((hunk.hunk_id, i))

    predicted = patch.line_edits()
    matching = match_edits(predicted, truth_edits, tau)

    # Identify matched truth edits back by identity (content-equal edits
    # may repeat, so map each truth LineEdit object to its id by position).
    id_by_index: dict[int, tuple[str, int]] = {idx: eid for idx, eid in enumerate(edit_ids)}
    ordered_truth = sorted(range(len(truth_edits)), key=lambda i: _edit_sort_key(truth_edits[i]))
    matched_truth_ids: set[tuple[str, int]] = set()
    consumed: set[int] = set()
    for pair in matching.pairs:
        for pos in ordered_truth:
            if pos in consumed or truth_edits[pos] != pair.truth:
                continue
            consumed.add(pos)
            matched_truth_ids.add(id_by_index[pos])
            break

    required = sorted(kb_edit_ids)
    validated = {kb_id for kb_id in required if kb_edit_ids[kb_id] & matched_truth_ids}

    agent_commit = CommitDiff.create("agent-patch", "", "", patch.files)
    agent_mapping = map_hunks([agent_commit], kbs, synth, service_id=patch.service_id)
    attempted = {kb_id for fired in agent_mapping.assignments.values() for kb_id in fired}

    precision, recall, score = line_metrics(matching)
    kb_precision = len(validated) / len(attempted) if attempted else None
    kb_recall = len(validated) / len(required) if required else None
    per_kb = {
        kb_id: KbOutcome(attempted=kb_id in attempted, validated=kb_id in validated)
        for kb_id in sorted(set(required) | attempted)
    }
    return EvalReport(
        service_id=patch.service_id,
        line_precision=precision,
        line_recall=recall,
        line_f1=score,
        kb_precision=kb_precision,
        kb_recall=kb_recall,
        per_kb=per_kb,
        matched_pairs=len(matching.pairs),
        unmatched_predicted=len(matching.unmatched_predicted),
        unmatched_truth=len(matching.unmatched_truth),
        tau=tau,
    )
