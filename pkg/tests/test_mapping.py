from __future__ import annotations

import re

import pytest

from migbench.diffs import ADD, CTX, DEL, MODIFIED, CommitDiff, FileDiff, Hunk
from migbench.kb import KbSet, parse_kb_document
from migbench.mapping import (
    EVIDENCE_FIRST,
    KEYWORD,
    PATTERN,
    evaluate_doc,
    keyword_match,
    map_hunks,
    pattern_match,
)
from migbench.synth import PatternSynthesizer, SynthFailure
from oracles import scan_hunk_for_pattern


def make_hunk(lines, file_new="src/App.cs", file_old=None):
    old_len = sum(1 for k, _ in lines if k in (CTX, DEL))
    new_len = sum(1 for k, _ in lines if k in (CTX, ADD))
    return Hunk.create(file_old or file_new, file_new, 1, old_len, 1, new_len, lines)


DRAWING_HUNK = make_hunk(
    [
        (CTX, "using System;"),
        (DEL, "using System.Drawing.Common;"),
        (ADD, "using SixLabors.ImageSharp;"),
    ]
)


def test_keyword_match_on_del_line():
    assert keyword_match(DRAWING_HUNK, "System.Drawing.Common")


def test_keyword_match_is_case_sensitive():
    hunk = make_hunk([(ADD, "COPY Dockerfile /srv/")], file_new="build/copy.sh")
    assert not keyword_match(hunk, "dockerfile")
    assert keyword_match(hunk, "Dockerfile")


def test_keyword_in_ctx_only_does_not_match():
    hunk = make_hunk(
        [
            (CTX, "using System.Drawing.Common;"),
            (DEL, "var x = 1;"),
            (ADD, "var x = 2;"),
        ]
    )
    assert not keyword_match(hunk, "System.Drawing.Common")


def test_keyword_glob_gate():
    assert not keyword_match(DRAWING_HUNK, "System.Drawing.Common", ["**/*.csproj"])
    assert keyword_match(DRAWING_HUNK, "System.Drawing.Common", ["**/*.cs"])
    assert keyword_match(DRAWING_HUNK, "System.Drawing.Common", [])


def test_pattern_match_drive_names():
    rx = re.compile(r"[A-Za-z]:\\")
    hit = make_hunk([(DEL, "cd C:\\build\\scripts"), (ADD, "cd /srv/build/scripts")], file_new="b.ps1")
    miss = make_hunk([(DEL, "cd /home/build"), (ADD, "cd /srv/build")], file_new="b.ps1")
    assert pattern_match(hit, rx)
    assert not pattern_match(miss, rx)


def test_pattern_match_requires_nonempty_match():
    rx = re.compile(r"x*")
    hunk = make_hunk([(ADD, "abc")])
    assert not pattern_match(hunk, rx)
    assert pattern_match(make_hunk([(ADD, "abxxc")]), rx)


def test_pattern_match_agrees_with_full_scan_over_fixture(fixture_commits, fixture_kbs):
    patterns = [re.compile(p) for doc in fixture_kbs.docs for p in doc.patterns]
    patterns.append(re.compile(r"[A-Za-z]:\\"))
    patterns.append(re.compile(r"^FROM[ \t]+\S+"))
    for commits in fixture_commits.values():
        for commit in commits:
            for _, hunk in commit.text_hunks():
                for rx in patterns:
                    assert pattern_match(hunk, rx) == scan_hunk_for_pattern(hunk, rx)


def test_pure_deletion_gates_on_old_path():
    hunk = Hunk.create("legacy/setup.ps1", None, 1, 1, 0, 0, [(DEL, "Set-Location C:\\legacy")])
    assert keyword_match(hunk, "C:\\", ["**/*.ps1"])
    assert not keyword_match(hunk, "C:\\", ["**/*.sh"])


def _kb(text):
    return parse_kb_document(text)


MULTI_KB_SET = KbSet.from_docs(
    [
        _kb(
            "---\nid: win-path-separators\ntitle: Paths\nkeywords:\n  - 'C:\\'\n---\n"
            "Move windows paths to posix form across all build scripts now.\n"
        ),
        _kb(
            "---\nid: logging-deps\ntitle: Logging\nkeywords:\n  - log4net\n---\n"
            "Swap log4net file appenders for console sinks on the platform.\n"
        ),
    ]
)


def _synth(kbs, **kwargs):
    return PatternSynthesizer.for_kb_set(kbs, "rulebook", **kwargs)


def test_map_hunks_multi_label():
    hunk = make_hunk(
        [
            (DEL, '<appender type="log4net.Appender.RollingFileAppender">'),
            (DEL, '<file value="C:\\logs\\app.log" />'),
            (ADD, '<appender type="log4net.Appender.ConsoleAppender">'),
        ],
        file_new="App.config",
    )
    commit = CommitDiff.create(
        "c1", "", "", [FileDiff.create("App.config", "App.config", MODIFIED, [hunk])]
    )
    result = map_hunks([commit], MULTI_KB_SET, _synth(MULTI_KB_SET))
    assert set(result.assignments[hunk.hunk_id]) == {"win-path-separators", "logging-deps"}
    assert result.unmatched == ()


def test_map_hunks_empty_commit_list(fixture_kbs, fixture_config):
    from migbench.config import build_synthesizer

    result = map_hunks([], fixture_kbs, build_synthesizer(fixture_config, fixture_kbs))
    assert result.assignments == {}
    assert result.unmatched == ()


def test_fixture_mapping_matches_hand_labels(fixture_pipeline, fixture_commits, fixture_labels):
    for service_id, commits in fixture_commits.items():
        mapping = fixture_pipeline.mappings[service_id]
        expected = {
            (e["commit"], e["file"], e["old_start"], e["new_start"]): set(e["kbs"])
            for e in fixture_labels["services"][service_id]["hunks"]
        }
        seen = 0
        for commit in commits:
            for _, hunk in commit.text_hunks():
                key = (commit.commit_id, hunk.effective_file, hunk.old_start, hunk.new_start)
                assert key in expected
                assert set(mapping.assignments.get(hunk.hunk_id, {})) == expected[key], key
                seen += 1
        assert seen == len(expected)


def test_noise_commit_fully_unmatched(fixture_pipeline, fixture_commits):
    # billing 5b110005 is the feature-flag rename.
    commit = next(c for c in fixture_commits["billing-api"] if c.commit_id == "5b110005")
    mapping = fixture_pipeline.mappings["billing-api"]
    for _, hunk in commit.text_hunks():
        assert hunk.hunk_id in mapping.unmatched


def test_partition_property(fixture_pipeline, fixture_commits):
    for service_id, commits in fixture_commits.items():
        mapping = fixture_pipeline.mappings[service_id]
        all_ids = {hunk.hunk_id for commit in commits for _, hunk in commit.text_hunks()}
        assigned = set(mapping.assignments)
        unmatched = set(mapping.unmatched)
        assert assigned | unmatched == all_ids
        assert assigned & unmatched == set()


def test_monotonicity_adding_a_kb(fixture_commits, fixture_kbs, fixture_config):
    from migbench.config import build_synthesizer

    commits = fixture_commits["billing-api"]
    base = map_hunks(commits, fixture_kbs, build_synthesizer(fixture_config, fixture_kbs))
    extra_doc = _kb(
        "---\nid: zz-extra-task\ntitle: Extra\nkeywords:\n  - dotnet\n---\n"
        "An extra document that matches restore and build invocation lines.\n"
    )
    bigger = KbSet.from_docs(list(fixture_kbs.docs) + [extra_doc])
    after = map_hunks(commits, bigger, PatternSynthesizer.for_kb_set(bigger, "rulebook"))
    for hunk_id, fired in base.assignments.items():
        assert hunk_id in after.assignments
        for kb_id in fired:
            assert kb_id in after.assignments[hunk_id]
    assert set(after.unmatched) <= set(base.unmatched)


def test_glob_gating_excludes_file_entirely(fixture_commits, fixture_kbs, fixture_config):
    from migbench.config import build_synthesizer

    mapping = map_hunks(
        fixture_commits["billing-api"], fixture_kbs, build_synthesizer(fixture_config, fixture_kbs)
    )
    monitoring = fixture_kbs.get("monitoring-agent-deploy")
    for commit in fixture_commits["billing-api"]:
        for fd, hunk in commit.text_hunks():
            if "monitoring-agent-deploy" in mapping.assignments.get(hunk.hunk_id, {}):
                from migbench.pathglob import match_any

                assert match_any(monitoring.file_globs, hunk.effective_file)


def test_evidence_soundness_replay(fixture_pipeline, fixture_commits, fixture_kbs):
    hunks = {}
    for commits in fixture_commits.values():
        for commit in commits:
            for _, hunk in commit.text_hunks():
                hunks[hunk.hunk_id] = hunk
    for service_id, mapping in fixture_pipeline.mappings.items():
        for hunk_id, fired in mapping.assignments.items():
            hunk = hunks[hunk_id]
            for kb_id, evidence in fired.items():
                doc = fixture_kbs.get(kb_id)
                for ev in evidence:
                    if ev.matcher_kind == KEYWORD:
                        assert keyword_match(hunk, ev.matcher_value, doc.file_globs)
                    else:
                        assert pattern_match(hunk, re.compile(ev.matcher_value), doc.file_globs)
                    kind, content = hunk.lines[ev.line_index]
                    assert kind in (ADD, DEL)


def test_evidence_detail_first_short_circuits():
    doc = _kb(
        "---\nid: duo\ntitle: Two keywords\nkeywords:\n  - alpha\n  - beta\n---\n"
        "A knowledge base document with two keywords that both fire here.\n"
    )
    hunk = make_hunk([(ADD, "alpha beta soup")])
    full = evaluate_doc(hunk, doc, [], "all")
    first = evaluate_doc(hunk, doc, [], EVIDENCE_FIRST)
    assert len(full) == 2
    assert len(first) == 1
    assert first[0].matcher_value == "alpha"


def test_synth_failure_propagates():
    doc = _kb(
        "---\nid: mystery\ntitle: Unknown description\n---\n"
        "This document only offers a description that no rulebook knows.\n\n"
        "## Pattern Descriptions\n- an unheard of code shape\n"
    )
    kbs = KbSet.from_docs([doc])
    fd = FileDiff.create(
        "App.config", "App.config", MODIFIED, [make_hunk([(DEL, "x"), (ADD, "y")], file_new="App.config")]
    )
    commit = CommitDiff.create("c1", "", "", [fd])
    with pytest.raises(SynthFailure):
        map_hunks([commit], kbs, PatternSynthesizer.for_kb_set(kbs, "rulebook"))
    skipping = PatternSynthesizer.for_kb_set(kbs, "rulebook", skip_missing=True)
    result = map_hunks([commit], kbs, skipping)
    assert list(result.assignments) == []
