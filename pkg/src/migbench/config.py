"""Run configuration: one YAML file plus command-line overrides.

Relative paths in the file resolve against the file's own directory so a
config can live next to its KB root and service sources.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .diffs import ServiceRecord
from .kb import KbSet
from .synth import BACKENDS, PatternSynthesizer, load_rulebook


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    kb_root: Path
    services: tuple[ServiceRecord, ...] = ()
    backend: str = "rulebook"
    rulebook_path: Path | None = None
    cache_dir: Path | None = None
    endpoint: str | None = None
    token_env: str | None = None
    tau: float = 0.2
    context: int = 3
    evidence_detail: str = "all"
    jobs: int = 0
    noisy_multiplier: float = 5.0
    skip_missing_rules: bool = False
    reproducible: bool = False
    vcs_diff_args: tuple[str, ...] | None = None
    vcs_snapshot_args: tuple[str, ...] | None = None
    out_suite: Path | None = None
    out_feedback: Path | None = None
    out_mapping: Path | None = None
    out_figures: Path | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    def validate(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must be within [0, 1], got {self.tau}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r} (choose from {', '.join(BACKENDS)})")
        if self.evidence_detail not in ("first", "all"):
            raise ConfigError(f"evidence detail must be 'first' or 'all', got {self.evidence_detail!r}")
        if self.context < 0:
            raise ConfigError("context width must be >= 0")
        if not Path(self.kb_root).is_dir():
            raise ConfigError(f"kb_root {self.kb_root} is not a directory")
        for record in self.services:
            if not Path(record.source).exists():
                raise ConfigError(f"service {record.service_id!r} source {record.source} does not exist")

    def synth_token(self) -> str | None:
        if self.token_env:
            return os.environ.get(self.token_env)
        return None


def _resolve(base: Path, value) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_config(path) -> RunConfig:
    """Parse a YAML config file into a RunConfig (not yet validated)."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    base = path.parent.resolve()

    if "kb_root" not in raw:
        raise ConfigError(f"{path}: missing required key 'kb_root'")

    services = []
    for i, entry in enumerate(raw.get("services", []) or []):
        try:
            services.append(
                ServiceRecord(
                    service_id=entry["service_id"],
                    source=str(_resolve(base, entry["source"])),
                    pre_ref=entry["pre_ref"],
                    migration_commits=tuple(entry["migration_commits"]),
                    mode=entry.get("mode", "patch-dir"),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"{path}: services[{i}] is missing key {exc}") from exc

    remote = raw.get("remote") or {}
    vcs = raw.get("vcs") or {}
    outputs = raw.get("outputs") or {}

    def out_path(key):
        return _resolve(base, outputs[key]) if key in outputs else None

    return RunConfig(
        kb_root=_resolve(base, raw["kb_root"]),
        services=tuple(services),
        backend=raw.get("backend", "rulebook"),
        rulebook_path=_resolve(base, raw["rulebook"]) if "rulebook" in raw else None,
        cache_dir=_resolve(base, raw["cache_dir"]) if "cache_dir" in raw else None,
        endpoint=remote.get("endpoint"),
        token_env=remote.get("token_env"),
        tau=float(raw.get("tau", 0.2)),
        context=int(raw.get("context", 3)),
        evidence_detail=raw.get("evidence", "all"),
        jobs=int(raw.get("jobs", 0)),
        noisy_multiplier=float(raw.get("noisy_multiplier", 5.0)),
        skip_missing_rules=bool(raw.get("skip_missing_rules", False)),
        vcs_diff_args=tuple(vcs["diff_args"]) if "diff_args" in vcs else None,
        vcs_snapshot_args=tuple(vcs["snapshot_args"]) if "snapshot_args" in vcs else None,
        out_suite=out_path("suite"),
        out_feedback=out_path("feedback"),
        out_mapping=out_path("mapping"),
        out_figures=out_path("figures"),
        base_dir=base,
    )


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Flags win over file values; None overrides are ignored."""
    updates = {key: value for key, value in overrides.items() if value is not None}
    return replace(config, **updates) if updates else config


def build_synthesizer(config: RunConfig, kbs: KbSet) -> PatternSynthesizer:
    rulebook = load_rulebook(config.rulebook_path) if config.rulebook_path else None
    return PatternSynthesizer.for_kb_set(
        kbs,
        config.backend,
        rulebook=rulebook,
        cache_dir=config.cache_dir,
        endpoint=config.endpoint,
        token=config.synth_token(),
        skip_missing=config.skip_missing_rules,
    )
