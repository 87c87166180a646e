from __future__ import annotations

import random

import pytest

from migbench.config import build_synthesizer
from migbench.diffs import ADD, DEL, FileDiff, LineEdit, MODIFIED, render_unified_diff
from migbench.evaluate import (
    AgentPatch,
    EvalError,
    MetricDomainError,
    evaluate,
    f1,
    levenshtein,
    line_metrics,
    match_edits,
    normalized_distance,
)
from oracles import brute_force_max_pairs, exact_intersection_pairs


def test_levenshtein_basics():
    assert levenshtein("", "") == 0
    assert levenshtein("abc", "abc") == 0
    assert levenshtein("abc", "abd") == 1
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("", "abc") == 3


def test_normalized_distance():
    assert normalized_distance("", "") == 0.0
    assert normalized_distance("abcd", "abce") == 0.25
    # "cd C:\x" vs "cd D:\x": 7 characters, one substitution.
    assert normalized_distance("cd C:\\x", "cd D:\\x") == pytest.approx(1 / 7)


def test_match_identity():
    edits = [
        LineEdit("a.txt", ADD, "new line", 3),
        LineEdit("a.txt", DEL, "old line", 3),
        LineEdit("b.txt", ADD, "other", 1),
    ]
    matching = match_edits(edits, list(edits), tau=0.2)
    assert len(matching.pairs) == 3
    assert matching.unmatched_predicted == ()
    assert matching.unmatched_truth == ()
    assert all(pair.distance == 0.0 for pair in matching.pairs)


def test_match_within_tau():
    predicted = [LineEdit("f.ps1", ADD, "cd C:\\x", 1)]
    truth = [LineEdit("f.ps1", ADD, "cd D:\\x", 1)]
    matching = match_edits(predicted, truth, tau=0.2)
    assert len(matching.pairs) == 1
    assert matching.pairs[0].distance == pytest.approx(1 / 7)
    assert match_edits(predicted, truth, tau=0.1).pairs == ()


def test_match_requires_same_file_and_op():
    predicted = [LineEdit("a.txt", ADD, "same", 1)]
    assert match_edits(predicted, [LineEdit("b.txt", ADD, "same", 1)], 0.2).pairs == ()
    assert match_edits(predicted, [LineEdit("a.txt", DEL, "same", 1)], 0.2).pairs == ()


def test_match_prefers_lower_total_distance():
    # Both predictions can pair with both truths; the optimal pairing is
    # the zero-distance one.
    predicted = [
        LineEdit("f", ADD, "aaaa", 1),
        LineEdit("f", ADD, "aaab", 2),
    ]
    truth = [
        LineEdit("f", ADD, "aaab", 7),
        LineEdit("f", ADD, "aaaa", 9),
    ]
    matching = match_edits(predicted, truth, tau=0.5)
    assert len(matching.pairs) == 2
    assert sum(p.distance for p in matching.pairs) == 0.0


def _random_edits(rng, n):
    contents = ["alpha", "alphb", "beta", "betb", "gamma one", "gamma two"]
    return [
        LineEdit(
            rng.choice(["x.cs", "y.cs"]),
            rng.choice([ADD, DEL]),
            rng.choice(contents),
            rng.randint(1, 9),
        )
        for _ in range(n)
    ]


def test_match_count_equals_brute_force_random():
    rng = random.Random(11)
    for _ in range(200):
        predicted = _random_edits(rng, rng.randint(0, 8))
        truth = _random_edits(rng, rng.randint(0, 8))
        tau = rng.choice([0.0, 0.2, 0.4])
        got = len(match_edits(predicted, truth, tau).pairs)
        assert got == brute_force_max_pairs(predicted, truth, tau)


def test_tau_zero_equals_exact_intersection():
    rng = random.Random(12)
    for _ in range(100):
        predicted = _random_edits(rng, rng.randint(0, 8))
        truth = _random_edits(rng, rng.randint(0, 8))
        got = len(match_edits(predicted, truth, 0.0).pairs)
        assert got == exact_intersection_pairs(predicted, truth)


def test_line_metrics_arithmetic():
    # 3 pairs, 4 predicted, 6 truth.
    predicted = [LineEdit("f", ADD, c, i + 1) for i, c in enumerate(["a1", "a2", "a3", "zzz"])]
    truth = [LineEdit("f", ADD, c, i + 1) for i, c in enumerate(["a1", "a2", "a3", "t4", "t5", "t6"])]
    matching = match_edits(predicted, truth, 0.0)
    precision, recall, score = line_metrics(matching)
    assert precision == 0.75
    assert recall == 0.5
    assert score == pytest.approx(0.6)


def test_line_metrics_empty_predictions():
    matching = match_edits([], [LineEdit("f", ADD, "t", 1)], 0.2)
    precision, recall, score = line_metrics(matching)
    assert precision is None
    assert recall == 0.0
    assert score is None


def test_line_metrics_empty_truth():
    matching = match_edits([LineEdit("f", ADD, "p", 1)], [], 0.2)
    precision, recall, score = line_metrics(matching)
    assert precision == 0.0
    assert recall is None
    assert score is None


def test_f1_paper_rows():
    assert f1(1, 0.5) == pytest.approx(2 / 3)
    assert f1(1, 0.667) == pytest.approx(0.8, abs=1e-3)
    assert f1(1, 0.25) == pytest.approx(0.4)
    assert f1(1, 0.4) == pytest.approx(4 / 7)


def test_f1_domain_error():
    with pytest.raises(MetricDomainError):
        f1(0.0, 0.0)


def _oracle_patch_text(suite, service_id):
    hunks = {}
    for inst in suite.for_service(service_id):
        for hunk in inst.hunks:
            hunks.setdefault(hunk.hunk_id, hunk)
    by_file = {}
    for hunk in hunks.values():
        by_file.setdefault((hunk.file_old, hunk.file_new), []).append(hunk)
    files = []
    for (old, new), file_hunks in sorted(by_file.items(), key=lambda kv: (kv[0][0] or "", kv[0][1] or "")):
        status = "ADDED" if old is None else MODIFIED
        files.append(FileDiff.create(old, new, status, sorted(file_hunks, key=lambda h: h.old_start)))
    return render_unified_diff(files)


@pytest.fixture(scope="module")
def eval_env(fixture_config, fixture_kbs):
    synth = build_synthesizer(fixture_config, fixture_kbs)
    return fixture_kbs, synth


def test_oracle_patch_scores_perfectly(fixture_suite, eval_env):
    kbs, synth = eval_env
    for service_id in fixture_suite.service_ids():
        patch = AgentPatch.parse(_oracle_patch_text(fixture_suite, service_id), service_id)
        report = evaluate(patch, fixture_suite, kbs, synth)
        assert report.line_precision == 1.0
        assert report.line_recall == 1.0
        assert report.line_f1 == 1.0
        assert report.kb_recall == 1.0
        required = {i.kb_id for i in fixture_suite.for_service(service_id)}
        assert all(report.per_kb[kb].validated for kb in required)


def test_empty_patch_scores_absent_precision(fixture_suite, eval_env):
    kbs, synth = eval_env
    patch = AgentPatch.parse("", "billing-api")
    report = evaluate(patch, fixture_suite, kbs, synth)
    assert report.line_precision is None
    assert report.line_recall == 0.0
    assert report.line_f1 is None
    assert report.kb_precision is None
    assert report.kb_recall == 0.0


def test_partial_agent_patch_hand_computed(fixture_suite, eval_env, fixtures_dir):
    kbs, synth = eval_env
    text = (fixtures_dir / "agent" / "partial.patch").read_text(encoding="utf-8")
    patch = AgentPatch.parse(text, "billing-api")
    report = evaluate(patch, fixture_suite, kbs, synth)
    # Hand-computed: the agent reproduces the 4 build-path edits exactly and
    # adds 1 unrelated README line. billing-api's truth has 33 deduplicated
    # edits across 5 required KBs.
    assert report.matched_pairs == 4
    assert report.line_precision == pytest.approx(4 / 5)
    assert report.line_recall == pytest.approx(4 / 33)
    assert report.kb_recall == pytest.approx(1 / 5)
    assert report.kb_precision == 1.0
    assert report.per_kb["win-path-separators"].attempted
    assert report.per_kb["win-path-separators"].validated
    assert not report.per_kb["logging-deps"].attempted
    assert not report.per_kb["logging-deps"].validated


def test_unrelated_edit_only_hits_precision(fixture_suite, eval_env):
    kbs, synth = eval_env
    unrelated = (
        "--- a/README.md\n"
        "+++ b/README.md\n"
        "@@ -1,3 +1,4 @@\n"
        " # billing-api\n"
        " Billing and invoicing service.\n"
        " Deploys via the platform pipeline.\n"
        "+An unrelated note that matches no knowledge base.\n"
    )
    patch = AgentPatch.parse(unrelated, "billing-api")
    report = evaluate(patch, fixture_suite, kbs, synth)
    assert report.line_precision == 0.0
    assert report.line_recall == 0.0
    assert report.kb_precision is None  # nothing attempted
    assert not any(outcome.attempted for outcome in report.per_kb.values())


def test_recall_monotonic_under_correct_additions(fixture_suite, eval_env):
    from migbench.diffs import extract_line_edits

    rng = random.Random(21)
    truth_edits = []
    seen = set()
    for inst in fixture_suite.for_service("billing-api"):
        for hunk in inst.hunks:
            if hunk.hunk_id in seen:
                continue
            seen.add(hunk.hunk_id)
            truth_edits.extend(extract_line_edits(hunk))
    for _ in range(100):
        base = rng.sample(truth_edits, rng.randint(0, len(truth_edits) - 1))
        matching = match_edits(base, truth_edits, 0.2)
        _, recall_before, _ = line_metrics(matching)
        # Predicting one currently-missed truth edit must not hurt recall.
        addition = rng.choice(matching.unmatched_truth)
        matching_after = match_edits(base + [addition], truth_edits, 0.2)
        _, recall_after, _ = line_metrics(matching_after)
        assert recall_after >= recall_before


def test_unknown_service(fixture_suite, eval_env):
    kbs, synth = eval_env
    with pytest.raises(EvalError) as err:
        evaluate(AgentPatch.parse("", "no-such-service"), fixture_suite, kbs, synth)
    assert err.value.code == "UNKNOWN_SERVICE"


def test_tau_bounds():
    with pytest.raises(ValueError):
        match_edits([], [], tau=1.5)
