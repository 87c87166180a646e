"""Knowledge-base documents: parsing, validation, and lint checks.

A KB document is a ``.kb.md`` file describing one narrow migration
sub-task. It opens with a front-matter block fenced by ``---`` lines
holding ``key: value`` entries (``id``, ``title``, ``file_globs``,
``keywords``, ``patterns``; list values either inline ``[a, b]`` or as
``- item`` bullets), followed by a free-text description. Optional
sections supply extra machine-readable material:

    ## Pattern Descriptions   - natural-language line descriptions
    ## Match Examples         - lines a synthesized pattern must match
    ## Non-match Examples     - lines it must not match
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

from .pathglob import GlobError, translate as glob_translate

_SLUG_RE = re.compile(r"^[a-z0-9-]+$")
_BULLET_RE = re.compile(r"^\s*-\s+(.*)$")
_HEADING_RE = re.compile(r"^##\s+(.+?)\s*$")

_SCALAR_KEYS = {"id", "title"}
_LIST_KEYS = {"file_globs", "keywords", "patterns"}

MIN_KEYWORD_LENGTH = 3

#: Keywords too common in prose or code to anchor a mapping.
GENERIC_KEYWORDS = frozenset(
    {
        "the", "and", "for", "all", "any", "this", "that", "with",
        "file", "files", "code", "line", "lines", "text", "name",
        "data", "value", "values", "item", "items", "info", "new",
        "old", "add", "remove", "update", "change", "set", "get",
    }
)

_SOURCE_EXTENSIONS = frozenset(
    {
        "c", "cc", "cpp", "h", "hpp", "cs", "csproj", "sln", "props",
        "targets", "fs", "fsproj", "vb", "py", "rb", "go", "rs", "java",
        "kt", "js", "jsx", "ts", "tsx", "sh", "bash", "ps1", "psm1",
        "bat", "cmd", "sql", "yaml", "yml", "json", "jsonc", "xml",
        "config", "toml", "ini", "cfg", "conf", "md", "txt", "html",
        "css", "scss", "tf", "proto", "gradle", "sbt", "cmake",
        "editorconfig",
    }
)
_SOURCE_BARE_NAMES = frozenset({"dockerfile", "makefile", "jenkinsfile", "vagrantfile"})


class KbError(Exception):
    """A KB document or KB set failed to parse or validate."""

    def __init__(self, code: str, message: str, *, path: str | None = None, line: int | None = None):
        self.code = code
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    code: str
    message: str
    path: str
    line: int

    def format(self) -> str:
        return f"{self.severity} {self.code} {self.path}:{self.line} {self.message}"


@dataclass(frozen=True)
class KbDoc:
    """One parsed KB document (immutable)."""

    id: str
    title: str
    description: str
    file_globs: tuple[str, ...]
    keywords: tuple[str, ...]
    pattern_descriptions: tuple[str, ...]
    patterns: tuple[str, ...]
    version: str
    positive_examples: tuple[str, ...] = ()
    negative_examples: tuple[str, ...] = ()
    path: str | None = field(default=None, compare=False)
    positions: dict = field(default_factory=dict, compare=False, repr=False)

    def has_matchers(self) -> bool:
        return bool(self.keywords or self.patterns or self.pattern_descriptions)


@dataclass(frozen=True)
class KbSet:
    """An id-ordered collection of KB documents with a content hash."""

    docs: tuple[KbDoc, ...]
    set_hash: str

    @classmethod
    def from_docs(cls, docs) -> "KbSet":
        ordered = tuple(sorted(docs, key=lambda d: d.id))
        digest = hashlib.sha256()
        for doc in ordered:
            digest.update(f"{doc.id}:{doc.version}\n".encode("utf-8"))
        return cls(docs=ordered, set_hash=digest.hexdigest())

    def get(self, kb_id: str) -> KbDoc | None:
        for doc in self.docs:
            if doc.id == kb_id:
                return doc
        return None

    def ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.docs)


def canonicalize(text: str) -> str:
    """Normalize a document body for hashing.

    Line endings become LF, trailing whitespace is stripped per line, and
    runs of blank lines collapse to a single blank line, so cosmetic edits
    do not churn document versions.
    """
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    lines = [ln.rstrip(" \t") for ln in text.split("\n")]
    out: list[str] = []
    blank_run = 0
    for ln in lines:
        if ln == "":
            blank_run += 1
            if blank_run > 1:
                continue
        else:
            blank_run = 0
        out.append(ln)
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out) + "\n"


def _unquote(value: str) -> str:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
        return value[1:-1]
    return value


def _split_inline_list(value: str) -> list[str]:
    inner = value[1:-1].strip()
    if not inner:
        return []
    return [_unquote(part.strip()) for part in inner.split(",") if part.strip()]


def parse_kb_document(text: str, path: str | None = None) -> KbDoc:
    """Parse one KB document; raises KbError when it violates the schema."""
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")

    idx = 0
    while idx < len(lines) and not lines[idx].strip():
        idx += 1
    if idx >= len(lines) or lines[idx].strip() != "---":
        raise KbError("MISSING_FIELD", "document has no front-matter block (expected leading '---')", path=path)
    fm_start = idx + 1
    fm_end = None
    for j in range(fm_start, len(lines)):
        if lines[j].strip() == "---":
            fm_end = j
            break
    if fm_end is None:
        raise KbError("MISSING_FIELD", "front-matter block is never closed", path=path)

    scalars: dict[str, str] = {}
    lists: dict[str, list[tuple[str, int]]] = {k: [] for k in _LIST_KEYS}
    current_list: str | None = None
    for j in range(fm_start, fm_end):
        raw = lines[j]
        lineno = j + 1
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        bullet = _BULLET_RE.match(raw)
        if bullet and current_list is not None:
            lists[current_list].append((_unquote(bullet.group(1).strip()), lineno))
            continue
        if ":" not in stripped:
            raise KbError("MALFORMED_FRONT_MATTER", f"expected 'key: value', got {stripped!r}", path=path, line=lineno)
        key, _, value = stripped.partition(":")
        key = key.strip()
        value = value.strip()
        if key in _SCALAR_KEYS:
            current_list = None
            scalars[key] = _unquote(value)
        elif key in _LIST_KEYS:
            if value.startswith("[") and value.endswith("]"):
                current_list = None
                lists[key] = [(item, lineno) for item in _split_inline_list(value)]
            elif value:
                current_list = None
                lists[key] = [(_unquote(value), lineno)]
            else:
                current_list = key
        else:
            # Unknown keys are ignored; they still affect the version hash.
            current_list = None

    for required in ("id", "title"):
        if not scalars.get(required):
            raise KbError("MISSING_FIELD", f"front matter is missing {required!r}", path=path)
    doc_id = scalars["id"]
    if not _SLUG_RE.match(doc_id):
        raise KbError("BAD_ID", f"id {doc_id!r} is not a lowercase slug ([a-z0-9-]+)", path=path)

    body = lines[fm_end + 1 :]
    description_lines: list[str] = []
    sections = {"pattern descriptions": [], "match examples": [], "non-match examples": []}
    section: str | None = None
    positions: dict = {}
    for j, raw in enumerate(body):
        lineno = fm_end + 2 + j
        heading = _HEADING_RE.match(raw)
        if heading:
            name = heading.group(1).strip().lower()
            section = name if name in sections else None
            continue
        if section is not None:
            bullet = _BULLET_RE.match(raw)
            if bullet:
                sections[section].append((bullet.group(1).strip(), lineno))
        elif not sections["pattern descriptions"] and not sections["match examples"] and not sections["non-match examples"]:
            description_lines.append(raw)
            if raw.strip() and ("description", 0) not in positions:
                positions[("description", 0)] = lineno

    description = "\n".join(description_lines).strip()

    keywords: list[str] = []
    for i, (kw, lineno) in enumerate(lists["keywords"]):
        trimmed = kw.strip()
        if len(trimmed) < MIN_KEYWORD_LENGTH:
            raise KbError(
                "SHORT_KEYWORD",
                f"keyword {kw!r} is shorter than {MIN_KEYWORD_LENGTH} characters after trimming",
                path=path,
                line=lineno,
            )
        positions[("keyword", i)] = lineno
        keywords.append(kw)

    patterns: list[str] = []
    for i, (pat, lineno) in enumerate(lists["patterns"]):
        try:
            re.compile(pat)
        except re.error as exc:
            raise KbError(
                "BAD_REGEX",
                f"pattern {pat!r} does not compile at position {exc.pos}: {exc.msg}",
                path=path,
                line=lineno,
            ) from exc
        positions[("pattern", i)] = lineno
        patterns.append(pat)

    globs: list[str] = []
    for i, (pat, lineno) in enumerate(lists["file_globs"]):
        try:
            glob_translate(pat)
        except GlobError as exc:
            raise KbError("BAD_GLOB", str(exc), path=path, line=lineno) from exc
        positions[("glob", i)] = lineno
        globs.append(pat)

    pattern_descriptions = []
    for i, (desc, lineno) in enumerate(sections["pattern descriptions"]):
        positions[("pattern_description", i)] = lineno
        pattern_descriptions.append(desc)

    if not (keywords or patterns or pattern_descriptions):
        raise KbError("NO_MATCHERS", "document declares no keywords, patterns, or pattern descriptions", path=path)

    version = hashlib.sha256(canonicalize(text).encode("utf-8")).hexdigest()
    return KbDoc(
        id=doc_id,
        title=scalars["title"],
        description=description,
        file_globs=tuple(globs),
        keywords=tuple(keywords),
        pattern_descriptions=tuple(pattern_descriptions),
        patterns=tuple(patterns),
        version=version,
        positive_examples=tuple(item for item, _ in sections["match examples"]),
        negative_examples=tuple(item for item, _ in sections["non-match examples"]),
        path=path,
        positions=positions,
    )


def load_kb_set(root) -> KbSet:
    """Load every ``*.kb.md`` under `root` (recursive) into a KbSet."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"KB root {root} is not a readable directory")
    docs: dict[str, KbDoc] = {}
    for file in sorted(root.rglob("*.kb.md")):
        doc = parse_kb_document(file.read_text(encoding="utf-8", errors="replace"), path=str(file))
        if doc.id in docs:
            raise KbError(
                "DUPLICATE_ID",
                f"id {doc.id!r} declared by both {docs[doc.id].path} and {file}",
                path=str(file),
            )
        docs[doc.id] = doc
    return KbSet.from_docs(docs.values())


def _glob_names_source_files(pattern: str) -> bool:
    last = pattern.rsplit("/", 1)[-1]
    if not last or any(c in last for c in "*?[") and last.rstrip("*?") == "":
        return True  # pure wildcard segment matches source files too
    if "." in last:
        ext = last.rsplit(".", 1)[-1].lower()
        if any(c in ext for c in "*?["):
            return True  # wildcard extension: give it the benefit of the doubt
        return ext in _SOURCE_EXTENSIONS
    bare = last.rstrip("*?").lower()
    return bare in _SOURCE_BARE_NAMES


def lint_kb(doc: KbDoc) -> list[Diagnostic]:
    """Static quality checks for one parsed document. Never raises."""
    findings: list[Diagnostic] = []
    path = doc.path or "<memory>"

    def line_of(kind: str, index: int) -> int:
        return doc.positions.get((kind, index), 1)

    for i, kw in enumerate(doc.keywords):
        if kw.strip().lower() in GENERIC_KEYWORDS:
            findings.append(
                Diagnostic("warning", "GENERIC_KEYWORD", f"keyword {kw!r} is in the generic stop-list", path, line_of("keyword", i))
            )
    for i, pattern in enumerate(doc.file_globs):
        if not _glob_names_source_files(pattern):
            findings.append(
                Diagnostic(
                    "warning",
                    "NONSOURCE_GLOB",
                    f"glob {pattern!r} matches no conventional source file extension",
                    path,
                    line_of("glob", i),
                )
            )
    if len(doc.description.split()) < 10:
        findings.append(
            Diagnostic("warning", "SHORT_DESCRIPTION", "description is shorter than 10 words", path, line_of("description", 0))
        )
    for i, pattern in enumerate(doc.patterns):
        if re.compile(pattern).search("") is not None:
            findings.append(
                Diagnostic(
                    "warning",
                    "EMPTY_MATCH_PATTERN",
                    f"pattern {pattern!r} matches the empty string",
                    path,
                    line_of("pattern", i),
                )
            )
    return findings
