"""Command-line entry point.

Commands: ``kb lint``, ``generate``, ``evaluate``, ``suite diff``, and
``feedback``. Logs go to stderr; data goes to stdout or the configured
output paths. Exit codes: 0 success, 1 hard error, 2 findings (lint
warnings, nonempty suite delta).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, apply_overrides, build_synthesizer, load_config
from .diffs import DiffParseError, ServiceLoadError
from .evaluate import AgentPatch, EvalError, evaluate
from .kb import KbError, lint_kb, load_kb_set
from .report import (
    eval_report_json,
    eval_tsv,
    feedback_tsv,
    render_eval_table,
    render_feedback_table,
    save_eval_figures,
    save_feedback_figures,
)
from .suite import (
    GenerateSettings,
    SuiteFormatError,
    build_feedback,
    diff_suites,
    read_mappings,
    read_suite,
    run_pipeline,
    write_feedback,
    write_mappings,
    write_suite,
)
from .synth import SynthError

log = logging.getLogger("migbench")


def _load_run_config(args) -> RunConfig:
    if args.config:
        config = load_config(args.config)
    elif getattr(args, "kb_root", None):
        config = RunConfig(kb_root=Path(args.kb_root))
    else:
        raise ConfigError("either --config or --kb-root is required")
    config = apply_overrides(
        config,
        kb_root=Path(args.kb_root) if getattr(args, "kb_root", None) else None,
        backend=getattr(args, "backend", None),
        tau=getattr(args, "tau", None),
        jobs=getattr(args, "jobs", None),
        cache_dir=Path(args.cache_dir) if getattr(args, "cache_dir", None) else None,
        reproducible=True if getattr(args, "reproducible", False) else None,
    )
    return config


def _settings(config: RunConfig) -> GenerateSettings:
    return GenerateSettings(
        backend=config.backend,
        tau=config.tau,
        context=config.context,
        evidence_detail=config.evidence_detail,
        noisy_multiplier=config.noisy_multiplier,
        jobs=config.jobs or (os.cpu_count() or 1),
        reproducible=config.reproducible,
        vcs_diff_args=config.vcs_diff_args,
    )


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def cmd_kb_lint(args) -> int:
    try:
        config = _load_run_config(args)
        kbs = load_kb_set(config.kb_root)
    except (KbError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    findings = []
    for doc in kbs.docs:
        findings.extend(lint_kb(doc))
    for finding in findings:
        print(finding.format())
    return 2 if findings else 0


def cmd_generate(args) -> int:
    try:
        config = _load_run_config(args)
        config.validate()
        kbs = load_kb_set(config.kb_root)
        synth = build_synthesizer(config, kbs)
        result = run_pipeline(config.services, kbs, synth, _settings(config))
    except (ConfigError, KbError, DiffParseError, ServiceLoadError, SynthError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out_dir = Path(args.out) if args.out else config.base_dir / "out"
    suite_path = config.out_suite if config.out_suite and not args.out else out_dir / "suite.json"
    feedback_path = config.out_feedback if config.out_feedback and not args.out else out_dir / "feedback.json"
    mapping_path = config.out_mapping if config.out_mapping and not args.out else out_dir / "mapping.json"
    _write(suite_path, write_suite(result.suite))
    _write(feedback_path, write_feedback(result.feedback))
    _write(mapping_path, write_mappings(result.mappings))
    if synth.cache_hits:
        log.info("synthesizer cache hits: %d", synth.cache_hits)

    unmatched_total = sum(result.feedback.unmatched_hunk_count.values())
    print(
        f"suite: {len(result.suite.instances)} instances across {len(result.suite.service_ids())} services; "
        f"silent KBs: {len(result.feedback.silent_kbs)}; unmatched hunks: {unmatched_total}"
    )
    return 0


def cmd_evaluate(args) -> int:
    try:
        config = _load_run_config(args)
        kbs = load_kb_set(config.kb_root)
        suite = read_suite(Path(args.suite).read_text(encoding="utf-8"))
        service_id = args.service
        if service_id is None:
            candidates = suite.service_ids()
            if len(candidates) != 1:
                print(
                    f"error: suite covers {len(candidates)} services; pass --service",
                    file=sys.stderr,
                )
                return 1
            service_id = candidates[0]
        patch = AgentPatch.parse(Path(args.patch).read_text(encoding="utf-8"), service_id)
        synth = build_synthesizer(config, kbs)
        report = evaluate(patch, suite, kbs, synth, tau=config.tau)
    except (ConfigError, KbError, DiffParseError, SuiteFormatError, EvalError, SynthError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    print(render_eval_table(report), end="")
    if args.out:
        out_dir = Path(args.out)
        _write(out_dir / "report.json", eval_report_json(report))
        _write(out_dir / "report.tsv", eval_tsv(report))
        if not args.no_figures:
            for path in save_eval_figures(report, out_dir):
                log.info("wrote %s", path)
    return 0


def cmd_suite_diff(args) -> int:
    try:
        old = read_suite(Path(args.old).read_text(encoding="utf-8"))
        new = read_suite(Path(args.new).read_text(encoding="utf-8"))
    except (SuiteFormatError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    delta = diff_suites(old, new)
    if delta.is_empty():
        print("no changes")
        return 0
    for key in delta.added:
        print(f"added {key[0]}/{key[1]}")
    for key in delta.removed:
        print(f"removed {key[0]}/{key[1]}")
    for entry in delta.changed:
        print(
            f"changed {entry.key[0]}/{entry.key[1]} "
            f"(+{len(entry.hunks_added)} hunks, -{len(entry.hunks_removed)} hunks)"
        )
    return 2


def cmd_feedback(args) -> int:
    try:
        mappings = read_mappings(Path(args.mapping).read_text(encoding="utf-8"))
        config = _load_run_config(args)
        kbs = load_kb_set(config.kb_root)
        feedback = build_feedback(mappings, kbs, config.noisy_multiplier)
    except (ConfigError, KbError, FileNotFoundError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(render_feedback_table(feedback), end="")
    if args.out:
        out_dir = Path(args.out)
        _write(out_dir / "feedback.json", write_feedback(feedback))
        _write(out_dir / "feedback.tsv", feedback_tsv(feedback))
        if not args.no_figures:
            for path in save_feedback_figures(feedback, out_dir):
                log.info("wrote %s", path)
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to the YAML run config")
    parser.add_argument("--kb-root", help="override the KB document root")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="migbench", description=__doc__)
    parser.add_argument("--version", action="version", version=f"migbench {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    kb = sub.add_parser("kb", help="knowledge-base utilities")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)
    lint = kb_sub.add_parser("lint", help="parse and lint every KB document")
    _add_common(lint)
    lint.set_defaults(func=cmd_kb_lint)

    gen = sub.add_parser("generate", help="generate a benchmark suite from services + KBs")
    _add_common(gen)
    gen.add_argument("--out", "-o", help="output directory (suite.json, feedback.json, mapping.json)")
    gen.add_argument("--backend", choices=["static", "rulebook", "remote"], help="pattern synthesis backend")
    gen.add_argument("--tau", type=float, help="edit-distance threshold for evaluation configs")
    gen.add_argument("--jobs", type=int, help="parallel service workers (default: CPU count)")
    gen.add_argument("--cache-dir", help="synthesizer cache directory")
    gen.add_argument("--reproducible", action="store_true", help="pin manifest timestamp/tool version")
    gen.set_defaults(func=cmd_generate)

    ev = sub.add_parser("evaluate", help="score an agent patch against a suite")
    ev.add_argument("suite", help="path to suite.json")
    ev.add_argument("patch", help="path to the agent's unified diff")
    _add_common(ev)
    ev.add_argument("--service", help="service id (required when the suite covers several)")
    ev.add_argument("--tau", type=float, help="normalized edit-distance threshold (default 0.2)")
    ev.add_argument("--backend", choices=["static", "rulebook", "remote"], help="pattern synthesis backend")
    ev.add_argument("--cache-dir", help="synthesizer cache directory")
    ev.add_argument("--out", "-o", help="directory for report.json/report.tsv/figures")
    ev.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    ev.set_defaults(func=cmd_evaluate)

    suite = sub.add_parser("suite", help="suite utilities")
    suite_sub = suite.add_subparsers(dest="suite_command", required=True)
    sdiff = suite_sub.add_parser("diff", help="compare two suite documents")
    sdiff.add_argument("old")
    sdiff.add_argument("new")
    sdiff.set_defaults(func=cmd_suite_diff)

    fb = sub.add_parser("feedback", help="re-emit the KB feedback report from a mapping artifact")
    fb.add_argument("mapping", help="path to mapping.json from a generate run")
    _add_common(fb)
    fb.add_argument("--out", "-o", help="directory for feedback.json/feedback.tsv/figures")
    fb.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    fb.set_defaults(func=cmd_feedback)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return int(args.func(args))


if __name__ == "__main__":
    raise SystemExit(main())
