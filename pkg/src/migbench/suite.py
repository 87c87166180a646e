"""Assemble, serialize, and compare benchmark suites.

A suite is the pipeline's output: one instance per (service, KB) pair
holding the pre-migration reference, the KB version, and the matched
hunks with their provenance. Serialization is canonical JSON (sorted
keys, two-space indent, LF) so identical inputs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from statistics import median

from . import __version__
from .diffs import CommitDiff, Hunk, ServiceRecord, load_service_commits, snapshot_manifest
from .kb import KbSet
from .mapping import MappingResult, map_hunks

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

PINNED_TIMESTAMP = "1970-01-01T00:00:00Z"
PINNED_TOOL_VERSION = "migbench (pinned)"


class SuiteFormatError(Exception):
    """A serialized suite document violates the schema."""

    def __init__(self, code: str, message: str, *, path: str = "$"):
        self.code = code
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Provenance:
    commit_id: str
    hunk_id: str
    evidence: tuple[str, ...]
    shared_with: tuple[str, ...] = ()


@dataclass(frozen=True)
class BenchmarkInstance:
    service_id: str
    kb_id: str
    pre_migration_ref: str
    kb_version: str
    hunks: tuple[Hunk, ...]
    provenance: tuple[Provenance, ...]

    @property
    def key(self) -> tuple[str, str]:
        return (self.service_id, self.kb_id)


@dataclass(frozen=True)
class SuiteManifest:
    tool_version: str
    kb_set_hash: str
    services: tuple[str, ...]
    generated_at: str
    config_digest: str
    snapshots: dict = field(default_factory=dict)  # service_id -> {path: digest}


@dataclass(frozen=True)
class BenchmarkSuite:
    manifest: SuiteManifest
    instances: tuple[BenchmarkInstance, ...]

    def for_service(self, service_id: str) -> list[BenchmarkInstance]:
        return [inst for inst in self.instances if inst.service_id == service_id]

    def service_ids(self) -> tuple[str, ...]:
        return tuple(sorted({inst.service_id for inst in self.instances}))


@dataclass(frozen=True)
class KbFeedback:
    """KB-quality signals from a generation run."""

    silent_kbs: tuple[str, ...]
    unmatched_hunk_count: dict  # service_id -> count
    noisy_kbs: tuple[str, ...]
    kb_hit_counts: dict  # kb_id -> total matched hunks across services


@dataclass(frozen=True)
class ChangedInstance:
    key: tuple[str, str]
    hunks_added: tuple[str, ...]
    hunks_removed: tuple[str, ...]


@dataclass(frozen=True)
class SuiteDelta:
    added: tuple[tuple[str, str], ...]
    removed: tuple[tuple[str, str], ...]
    changed: tuple[ChangedInstance, ...]

    def is_empty(self) -> bool:
        return not (self.added or self.removed or self.changed)


@dataclass
class GenerateSettings:
    """Knobs that affect suite content (hashed into the manifest)."""

    backend: str = "rulebook"
    tau: float = 0.2
    context: int = 3
    evidence_detail: str = "all"
    noisy_multiplier: float = 5.0
    jobs: int = 1
    reproducible: bool = False
    vcs_diff_args: tuple[str, ...] | None = None

    def digest(self) -> str:
        payload = json.dumps(
            {
                "backend": self.backend,
                "tau": self.tau,
                "context": self.context,
                "evidence_detail": self.evidence_detail,
                "noisy_multiplier": self.noisy_multiplier,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class PipelineResult:
    suite: BenchmarkSuite
    feedback: KbFeedback
    mappings: dict  # service_id -> MappingResult


def _process_service(record: ServiceRecord, kbs: KbSet, synth, settings: GenerateSettings):
    kwargs = {"context": settings.context}
    if settings.vcs_diff_args:
        kwargs["vcs_diff_args"] = settings.vcs_diff_args
    commits = load_service_commits(record, **kwargs)
    mapping = map_hunks(commits, kbs, synth, evidence_detail=settings.evidence_detail, service_id=record.service_id)
    snapshot = snapshot_manifest(record) if record.mode == "vcs" else None
    return commits, mapping, snapshot


def _assemble_instances(record: ServiceRecord, commits: list[CommitDiff], mapping: MappingResult, kbs: KbSet):
    per_kb: dict[str, list[tuple[Hunk, Provenance]]] = {}
    seen: dict[str, set[str]] = {}
    for commit in commits:
        for _, hunk in commit.text_hunks():
            fired = mapping.assignments.get(hunk.hunk_id)
            if not fired:
                continue
            for kb_id, evidence in fired.items():
                if hunk.hunk_id in seen.setdefault(kb_id, set()):
                    continue
                seen[kb_id].add(hunk.hunk_id)
                provenance = Provenance(
                    commit_id=commit.commit_id,
                    hunk_id=hunk.hunk_id,
                    evidence=tuple(ev.summary() for ev in evidence),
                    shared_with=tuple(sorted(k for k in fired if k != kb_id)),
                )
                per_kb.setdefault(kb_id, []).append((hunk, provenance))

    instances = []
    for kb_id in sorted(per_kb):
        pairs = per_kb[kb_id]
        doc = kbs.get(kb_id)
        instances.append(
            BenchmarkInstance(
                service_id=record.service_id,
                kb_id=kb_id,
                pre_migration_ref=record.pre_ref,
                kb_version=doc.version if doc else "",
                hunks=tuple(hunk for hunk, _ in pairs),
                provenance=tuple(prov for _, prov in pairs),
            )
        )
    return instances


def build_feedback(mappings: dict, kbs: KbSet, noisy_multiplier: float = 5.0) -> KbFeedback:
    totals = {kb_id: 0 for kb_id in kbs.ids()}
    unmatched: dict[str, int] = {}
    for service_id, mapping in mappings.items():
        unmatched[service_id] = len(mapping.unmatched)
        for kb_id, count in mapping.kb_hit_counts.items():
            totals[kb_id] = totals.get(kb_id, 0) + count
    silent = tuple(sorted(kb_id for kb_id, count in totals.items() if count == 0))
    nonzero = [count for count in totals.values() if count > 0]
    noisy: tuple[str, ...] = ()
    if nonzero:
        threshold = noisy_multiplier * median(nonzero)
        noisy = tuple(sorted(kb_id for kb_id, count in totals.items() if count > threshold))
    return KbFeedback(
        silent_kbs=silent,
        unmatched_hunk_count=dict(sorted(unmatched.items())),
        noisy_kbs=noisy,
        kb_hit_counts=dict(sorted(totals.items())),
    )


def run_pipeline(services, kbs: KbSet, synth, settings: GenerateSettings | None = None) -> PipelineResult:
    """Generate a suite plus feedback from service records and a KB set."""
    settings = settings or GenerateSettings()
    services = list(services)
    seen_ids = set()
    for record in services:
        if record.service_id in seen_ids:
            raise ValueError(f"duplicate service_id {record.service_id!r}")
        seen_ids.add(record.service_id)

    jobs = max(1, settings.jobs)
    if jobs > 1 and len(services) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda r: _process_service(r, kbs, synth, settings), services))
    else:
        results = [_process_service(record, kbs, synth, settings) for record in services]

    instances: list[BenchmarkInstance] = []
    mappings: dict[str, MappingResult] = {}
    snapshots: dict[str, dict] = {}
    for record, (commits, mapping, snapshot) in zip(services, results):
        mappings[record.service_id] = mapping
        if snapshot is not None:
            snapshots[record.service_id] = snapshot
        instances.extend(_assemble_instances(record, commits, mapping, kbs))

    instances.sort(key=lambda inst: inst.key)
    manifest = SuiteManifest(
        tool_version=PINNED_TOOL_VERSION if settings.reproducible else f"migbench {__version__}",
        kb_set_hash=kbs.set_hash,
        services=tuple(sorted(record.service_id for record in services)),
        generated_at=PINNED_TIMESTAMP
        if settings.reproducible
        else datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        config_digest=settings.digest(),
        snapshots=snapshots,
    )
    suite = BenchmarkSuite(manifest=manifest, instances=tuple(instances))
    feedback = build_feedback(mappings, kbs, settings.noisy_multiplier)
    return PipelineResult(suite=suite, feedback=feedback, mappings=mappings)


def generate(services, kbs: KbSet, synth, settings: GenerateSettings | None = None):
    """Suite + feedback, per the pipeline contract."""
    result = run_pipeline(services, kbs, synth, settings)
    return result.suite, result.feedback


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _canonical_json(document) -> str:
    return json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _hunk_to_doc(hunk: Hunk) -> dict:
    return {
        "file_old": hunk.file_old,
        "file_new": hunk.file_new,
        "old_start": hunk.old_start,
        "old_len": hunk.old_len,
        "new_start": hunk.new_start,
        "new_len": hunk.new_len,
        "lines": [[kind, content] for kind, content in hunk.lines],
        "hunk_id": hunk.hunk_id,
    }


def write_suite(suite: BenchmarkSuite) -> str:
    document = {
        "format_version": FORMAT_VERSION,
        "manifest": {
            "tool_version": suite.manifest.tool_version,
            "kb_set_hash": suite.manifest.kb_set_hash,
            "services": list(suite.manifest.services),
            "generated_at": suite.manifest.generated_at,
            "config_digest": suite.manifest.config_digest,
            "snapshots": suite.manifest.snapshots,
        },
        "instances": [
            {
                "service_id": inst.service_id,
                "kb_id": inst.kb_id,
                "pre_migration_ref": inst.pre_migration_ref,
                "kb_version": inst.kb_version,
                "hunks": [_hunk_to_doc(h) for h in inst.hunks],
                "provenance": [
                    {
                        "commit_id": prov.commit_id,
                        "hunk_id": prov.hunk_id,
                        "evidence": list(prov.evidence),
                        "shared_with": list(prov.shared_with),
                    }
                    for prov in inst.provenance
                ],
            }
            for inst in suite.instances
        ],
    }
    return _canonical_json(document)


def _expect(document: dict, key: str, kind, path: str):
    if not isinstance(document, dict) or key not in document:
        raise SuiteFormatError("SCHEMA_VIOLATION", f"missing required field {key!r}", path=path)
    value = document[key]
    if kind is not None and not isinstance(value, kind):
        raise SuiteFormatError(
            "SCHEMA_VIOLATION",
            f"field {key!r} must be {getattr(kind, '__name__', kind)}, got {type(value).__name__}",
            path=f"{path}.{key}",
        )
    return value


def _hunk_from_doc(doc: dict, path: str) -> Hunk:
    lines_doc = _expect(doc, "lines", list, path)
    lines = []
    for i, entry in enumerate(lines_doc):
        if not isinstance(entry, list) or len(entry) != 2 or entry[0] not in ("CTX", "ADD", "DEL"):
            raise SuiteFormatError("SCHEMA_VIOLATION", "line entries must be [kind, content] pairs", path=f"{path}.lines[{i}]")
        lines.append((entry[0], entry[1]))
    for key in ("old_start", "old_len", "new_start", "new_len"):
        _expect(doc, key, int, path)
    for key in ("file_old", "file_new"):
        if key not in doc:
            raise SuiteFormatError("SCHEMA_VIOLATION", f"missing required field {key!r}", path=path)
    try:
        hunk = Hunk.create(
            doc["file_old"],
            doc["file_new"],
            doc["old_start"],
            doc["old_len"],
            doc["new_start"],
            doc["new_len"],
            lines,
        )
    except Exception as exc:
        raise SuiteFormatError("SCHEMA_VIOLATION", str(exc), path=path) from exc
    declared = _expect(doc, "hunk_id", str, path)
    if declared != hunk.hunk_id:
        raise SuiteFormatError(
            "SCHEMA_VIOLATION",
            f"hunk_id {declared!r} does not match content digest {hunk.hunk_id!r}",
            path=f"{path}.hunk_id",
        )
    return hunk


def read_suite(text: str) -> BenchmarkSuite:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SuiteFormatError("SCHEMA_VIOLATION", f"not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise SuiteFormatError("SCHEMA_VIOLATION", "top-level document must be an object")
    version = _expect(document, "format_version", int, "$")
    if version != FORMAT_VERSION:
        raise SuiteFormatError(
            "VERSION_MISMATCH", f"format_version {version} unsupported (supported: {FORMAT_VERSION})"
        )
    manifest_doc = _expect(document, "manifest", dict, "$")
    manifest = SuiteManifest(
        tool_version=_expect(manifest_doc, "tool_version", str, "$.manifest"),
        kb_set_hash=_expect(manifest_doc, "kb_set_hash", str, "$.manifest"),
        services=tuple(_expect(manifest_doc, "services", list, "$.manifest")),
        generated_at=_expect(manifest_doc, "generated_at", str, "$.manifest"),
        config_digest=_expect(manifest_doc, "config_digest", str, "$.manifest"),
        snapshots=manifest_doc.get("snapshots", {}),
    )
    instances = []
    seen_keys = set()
    for i, inst_doc in enumerate(_expect(document, "instances", list, "$")):
        path = f"$.instances[{i}]"
        hunks = tuple(_hunk_from_doc(h, f"{path}.hunks[{j}]") for j, h in enumerate(_expect(inst_doc, "hunks", list, path)))
        if not hunks:
            raise SuiteFormatError("SCHEMA_VIOLATION", "instance has no hunks", path=path)
        provenance = []
        for j, prov_doc in enumerate(_expect(inst_doc, "provenance", list, path)):
            prov_path = f"{path}.provenance[{j}]"
            provenance.append(
                Provenance(
                    commit_id=_expect(prov_doc, "commit_id", str, prov_path),
                    hunk_id=_expect(prov_doc, "hunk_id", str, prov_path),
                    evidence=tuple(_expect(prov_doc, "evidence", list, prov_path)),
                    shared_with=tuple(prov_doc.get("shared_with", [])),
                )
            )
        instance = BenchmarkInstance(
            service_id=_expect(inst_doc, "service_id", str, path),
            kb_id=_expect(inst_doc, "kb_id", str, path),
            pre_migration_ref=_expect(inst_doc, "pre_migration_ref", str, path),
            kb_version=_expect(inst_doc, "kb_version", str, path),
            hunks=hunks,
            provenance=tuple(provenance),
        )
        if len(instance.provenance) != len(hunks):
            raise SuiteFormatError("SCHEMA_VIOLATION", "provenance entries must map 1:1 to hunks", path=path)
        if instance.key in seen_keys:
            raise SuiteFormatError("SCHEMA_VIOLATION", f"duplicate instance key {instance.key}", path=path)
        seen_keys.add(instance.key)
        instances.append(instance)
    ordered = sorted(instances, key=lambda inst: inst.key)
    if [i.key for i in instances] != [i.key for i in ordered]:
        raise SuiteFormatError("SCHEMA_VIOLATION", "instances must be sorted by (service_id, kb_id)")
    return BenchmarkSuite(manifest=manifest, instances=tuple(instances))


def write_feedback(feedback: KbFeedback) -> str:
    return _canonical_json(
        {
            "format_version": FORMAT_VERSION,
            "silent_kbs": list(feedback.silent_kbs),
            "unmatched_hunk_count": feedback.unmatched_hunk_count,
            "noisy_kbs": list(feedback.noisy_kbs),
            "kb_hit_counts": feedback.kb_hit_counts,
        }
    )


def read_feedback(text: str) -> KbFeedback:
    document = json.loads(text)
    return KbFeedback(
        silent_kbs=tuple(document["silent_kbs"]),
        unmatched_hunk_count=document["unmatched_hunk_count"],
        noisy_kbs=tuple(document["noisy_kbs"]),
        kb_hit_counts=document["kb_hit_counts"],
    )


def write_mappings(mappings: dict) -> str:
    document = {
        "format_version": FORMAT_VERSION,
        "services": {
            service_id: {
                "assignments": {
                    hunk_id: {
                        kb_id: [
                            {
                                "matcher_kind": ev.matcher_kind,
                                "matcher_value": ev.matcher_value,
                                "line_index": ev.line_index,
                            }
                            for ev in evidence
                        ]
                        for kb_id, evidence in sorted(fired.items())
                    }
                    for hunk_id, fired in mapping.assignments.items()
                },
                "unmatched": list(mapping.unmatched),
                "kb_hit_counts": dict(sorted(mapping.kb_hit_counts.items())),
            }
            for service_id, mapping in sorted(mappings.items())
        },
    }
    return _canonical_json(document)


def read_mappings(text: str) -> dict:
    from .mapping import MatchEvidence

    document = json.loads(text)
    mappings = {}
    for service_id, doc in document["services"].items():
        assignments = {
            hunk_id: {
                kb_id: tuple(
                    MatchEvidence(kb_id, ev["matcher_kind"], ev["matcher_value"], ev["line_index"])
                    for ev in evidence
                )
                for kb_id, evidence in fired.items()
            }
            for hunk_id, fired in doc["assignments"].items()
        }
        mappings[service_id] = MappingResult(
            service_id=service_id,
            assignments=assignments,
            unmatched=tuple(doc["unmatched"]),
            kb_hit_counts=doc["kb_hit_counts"],
        )
    return mappings


# ---------------------------------------------------------------------------
# Suite evolution
# ---------------------------------------------------------------------------


def diff_suites(old: BenchmarkSuite, new: BenchmarkSuite) -> SuiteDelta:
    """Set-difference on (service_id, kb_id) keys; `changed` compares hunk ids."""
    old_by_key = {inst.key: inst for inst in old.instances}
    new_by_key = {inst.key: inst for inst in new.instances}
    added = tuple(sorted(key for key in new_by_key if key not in old_by_key))
    removed = tuple(sorted(key for key in old_by_key if key not in new_by_key))
    changed = []
    for key in sorted(set(old_by_key) & set(new_by_key)):
        old_ids = {h.hunk_id for h in old_by_key[key].hunks}
        new_ids = {h.hunk_id for h in new_by_key[key].hunks}
        if old_ids != new_ids:
            changed.append(
                ChangedInstance(
                    key=key,
                    hunks_added=tuple(sorted(new_ids - old_ids)),
                    hunks_removed=tuple(sorted(old_ids - new_ids)),
                )
            )
    return SuiteDelta(added=added, removed=removed, changed=tuple(changed))
