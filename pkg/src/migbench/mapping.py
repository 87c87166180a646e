"""Map diff hunks to the KB documents whose matchers fire on them.

This is the step that isolates migration-related changes from
idiosyncratic ones: a hunk enters the benchmark only when some KB's
keyword or pattern fires on one of its added or deleted lines (context
lines never count), subject to the KB's file-glob gate. A hunk may map to
several KBs; hunks matching none are reported as unmatched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .diffs import ADD, DEL, CommitDiff, Hunk
from .kb import KbDoc, KbSet
from .pathglob import match_any
from .synth import nonempty_search

KEYWORD = "KEYWORD"
PATTERN = "PATTERN"

EVIDENCE_FIRST = "first"
EVIDENCE_ALL = "all"


@dataclass(frozen=True)
class MatchEvidence:
    kb_id: str
    matcher_kind: str
    matcher_value: str
    line_index: int

    def summary(self) -> str:
        return f"{self.matcher_kind.lower()}:{self.matcher_value}"


@dataclass(frozen=True)
class MappingResult:
    """Hunk-to-KB assignment for one service.

    `assignments` and `unmatched` partition the service's text hunks by
    hunk_id; `kb_hit_counts` carries a count for every KB in the set,
    zeros included.
    """

    service_id: str
    assignments: dict = field(default_factory=dict)  # hunk_id -> {kb_id: (MatchEvidence, ...)}
    unmatched: tuple[str, ...] = ()
    kb_hit_counts: dict = field(default_factory=dict)


def _changed_lines(hunk: Hunk):
    for index, (kind, content) in enumerate(hunk.lines):
        if kind in (ADD, DEL):
            yield index, content


def _glob_gate(hunk: Hunk, globs) -> bool:
    return match_any(globs, hunk.effective_file)


def keyword_match(hunk: Hunk, keyword: str, globs=()) -> bool:
    """Case-sensitive substring search over the hunk's ADD/DEL lines."""
    if not _glob_gate(hunk, globs):
        return False
    return any(keyword in content for _, content in _changed_lines(hunk))


def pattern_match(hunk: Hunk, pattern: re.Pattern, globs=()) -> bool:
    """Nonempty regex match over the hunk's ADD/DEL lines."""
    if not _glob_gate(hunk, globs):
        return False
    return any(nonempty_search(pattern, content) for _, content in _changed_lines(hunk))


def _first_hit(hunk: Hunk, hit) -> int | None:
    for index, content in _changed_lines(hunk):
        if hit(content):
            return index
    return None


def evaluate_doc(hunk: Hunk, doc: KbDoc, synthesized, evidence_detail: str = EVIDENCE_ALL) -> list[MatchEvidence]:
    """All evidence `doc` produces for `hunk`: keywords, then explicit
    patterns, then synthesized patterns. Empty list means no match."""
    if not _glob_gate(hunk, doc.file_globs):
        return []
    evidence: list[MatchEvidence] = []

    def note(kind: str, value: str, line_index: int) -> bool:
        evidence.append(MatchEvidence(doc.id, kind, value, line_index))
        return evidence_detail == EVIDENCE_FIRST

    for keyword in doc.keywords:
        index = _first_hit(hunk, lambda content: keyword in content)
        if index is not None and note(KEYWORD, keyword, index):
            return evidence
    explicit_sources = set()
    for source in doc.patterns:
        explicit_sources.add(source)
        rx = re.compile(source)
        index = _first_hit(hunk, lambda content: nonempty_search(rx, content))
        if index is not None and note(PATTERN, source, index):
            return evidence
    for source, rx in synthesized:
        if source in explicit_sources:
            continue
        index = _first_hit(hunk, lambda content: nonempty_search(rx, content))
        if index is not None and note(PATTERN, source, index):
            return evidence
    return evidence


def map_hunks(
    commits: list[CommitDiff],
    kbs: KbSet,
    synth,
    *,
    evidence_detail: str = EVIDENCE_ALL,
    service_id: str = "",
) -> MappingResult:
    """Assign every text hunk across `commits` to the KBs that fire on it.

    `synth` must provide ``patterns_for_doc(doc)``; it may raise
    SynthFailure (or skip with a warning, per its configuration).
    """
    synthesized = {doc.id: synth.patterns_for_doc(doc) for doc in kbs.docs}
    assignments: dict[str, dict] = {}
    unmatched: list[str] = []
    hit_counts = {doc.id: 0 for doc in kbs.docs}
    seen: set[str] = set()

    for commit in commits:
        for _, hunk in commit.text_hunks():
            if hunk.hunk_id in seen:
                continue
            seen.add(hunk.hunk_id)
            fired: dict[str, tuple[MatchEvidence, ...]] = {}
            for doc in kbs.docs:
                evidence = evaluate_doc(hunk, doc, synthesized[doc.id], evidence_detail)
                if evidence:
                    fired[doc.id] = tuple(evidence)
                    hit_counts[doc.id] += 1
            if fired:
                assignments[hunk.hunk_id] = fired
            else:
                unmatched.append(hunk.hunk_id)

    return MappingResult(
        service_id=service_id,
        assignments=assignments,
        unmatched=tuple(unmatched),
        kb_hit_counts=hit_counts,
    )
