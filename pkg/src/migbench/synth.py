"""Turn natural-language pattern descriptions into regular expressions.

Three interchangeable backends:

* ``static``   - reuse the KB document's explicitly authored patterns.
* ``rulebook`` - look the normalized description up in a shipped table,
                 fully offline and deterministic.
* ``remote``   - POST the request to a configured HTTP endpoint that
                 returns ``{"patterns": [...]}``.

Every backend's output passes the same validation (compile, length cap,
no empty-string match, and the request's positive/negative example lines)
and is cached on disk by (backend, request digest) so regeneration never
re-asks for unchanged descriptions.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import string
from dataclasses import dataclass
from pathlib import Path

from .kb import KbDoc

log = logging.getLogger(__name__)

STATIC = "static"
RULEBOOK = "rulebook"
REMOTE = "remote"
BACKENDS = (STATIC, RULEBOOK, REMOTE)

MAX_PATTERN_LENGTH = 512

_RULEBOOK_RESOURCE = Path(__file__).parent / "data" / "rulebook.tsv"
_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


class SynthError(Exception):
    """Pattern synthesis failed; `code` names the failure kind."""

    def __init__(self, code: str, message: str, *, pattern: str | None = None, example: str | None = None):
        self.code = code
        self.pattern = pattern
        self.example = example
        super().__init__(message)


class SynthFailure(SynthError):
    """Raised by mapping when a KB's descriptions cannot be resolved."""

    def __init__(self, kb_id: str, description: str, cause: SynthError):
        self.kb_id = kb_id
        self.description = description
        super().__init__(cause.code, f"kb {kb_id!r}: {cause}", pattern=cause.pattern, example=cause.example)


@dataclass(frozen=True)
class SynthRequest:
    kb_id: str
    description: str
    positive_examples: tuple[str, ...] = ()
    negative_examples: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.description:
            raise ValueError("SynthRequest.description must be nonempty")

    def digest(self) -> str:
        payload = json.dumps(
            {
                "kb_id": self.kb_id,
                "description": self.description,
                "positive_examples": list(self.positive_examples),
                "negative_examples": list(self.negative_examples),
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SynthResult:
    patterns: tuple[str, ...]
    backend: str
    cached: bool


def normalize_description(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return " ".join(text.lower().translate(_PUNCT_TABLE).split())


def nonempty_search(pattern: re.Pattern, text: str) -> bool:
    """True when `pattern` finds a nonempty match anywhere in `text`."""
    return any(m.group(0) for m in pattern.finditer(text))


def load_rulebook(path=None) -> dict[str, tuple[str, ...]]:
    """Read a rulebook table: TAB-separated `description<TAB>pattern` rows."""
    path = Path(path) if path is not None else _RULEBOOK_RESOURCE
    table: dict[str, list[str]] = {}
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, pattern = line.partition("\t")
        if not pattern:
            raise SynthError("BAD_RULEBOOK", f"rulebook row without a pattern: {raw!r}")
        table.setdefault(normalize_description(key), []).append(pattern)
    return {key: tuple(patterns) for key, patterns in table.items()}


def validate_patterns(patterns, pos=(), neg=()) -> None:
    """Reject oversized, empty-matching, or example-violating patterns."""
    compiled: list[tuple[str, re.Pattern]] = []
    for source in patterns:
        if len(source) > MAX_PATTERN_LENGTH:
            raise SynthError(
                "VALIDATION_FAILURE",
                f"pattern exceeds {MAX_PATTERN_LENGTH} characters",
                pattern=source[:80] + "...",
            )
        rx = re.compile(source)
        if rx.search("") is not None:
            raise SynthError("VALIDATION_FAILURE", f"pattern {source!r} matches the empty string", pattern=source)
        compiled.append((source, rx))
    for line in pos:
        if not any(nonempty_search(rx, line) for _, rx in compiled):
            raise SynthError(
                "VALIDATION_FAILURE",
                f"no pattern matches required example {line!r}",
                example=line,
            )
    for line in neg:
        for source, rx in compiled:
            if nonempty_search(rx, line):
                raise SynthError(
                    "VALIDATION_FAILURE",
                    f"pattern {source!r} matches forbidden example {line!r}",
                    pattern=source,
                    example=line,
                )


class PatternSynthesizer:
    """Pluggable description-to-regex engine with a content-addressed cache."""

    def __init__(
        self,
        backend: str = RULEBOOK,
        *,
        rulebook: dict[str, tuple[str, ...]] | None = None,
        cache_dir=None,
        endpoint: str | None = None,
        token: str | None = None,
        kb_patterns: dict[str, tuple[str, ...]] | None = None,
        skip_missing: bool = False,
        timeout: float = 10.0,
    ):
        if backend not in BACKENDS:
            raise ValueError(f"unknown synthesis backend {backend!r}")
        self.backend = backend
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.endpoint = endpoint
        self.token = token
        self.kb_patterns = kb_patterns or {}
        self.skip_missing = skip_missing
        self.timeout = timeout
        self.cache_hits = 0
        self._rulebook = rulebook
        self._doc_cache: dict[str, list[tuple[str, re.Pattern]]] = {}

    @classmethod
    def for_kb_set(cls, kbs, backend: str = RULEBOOK, **kwargs) -> "PatternSynthesizer":
        patterns = {doc.id: doc.patterns for doc in kbs.docs}
        return cls(backend, kb_patterns=patterns, **kwargs)

    @property
    def rulebook(self) -> dict[str, tuple[str, ...]]:
        if self._rulebook is None:
            self._rulebook = load_rulebook()
        return self._rulebook

    # -- cache ------------------------------------------------------------

    def _cache_path(self, req: SynthRequest) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / self.backend / f"{req.digest()}.json"

    def _cache_read(self, req: SynthRequest) -> tuple[str, ...] | None:
        path = self._cache_path(req)
        if path is None or not path.exists():
            return None
        record = json.loads(path.read_text(encoding="utf-8"))
        return tuple(record["patterns"])

    def _cache_write(self, req: SynthRequest, patterns: tuple[str, ...]) -> None:
        path = self._cache_path(req)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"patterns": list(patterns)}, ensure_ascii=False) + "\n", encoding="utf-8")
        os.replace(tmp, path)

    # -- backends ---------------------------------------------------------

    def _run_backend(self, req: SynthRequest) -> tuple[str, ...]:
        if self.backend == STATIC:
            return tuple(self.kb_patterns.get(req.kb_id, ()))
        if self.backend == RULEBOOK:
            key = normalize_description(req.description)
            patterns = self.rulebook.get(key)
            if patterns is None:
                raise SynthError("NO_RULE", f"rulebook has no entry for description {req.description!r}")
            return patterns
        return self._run_remote(req)

    def _run_remote(self, req: SynthRequest) -> tuple[str, ...]:
        import requests

        if not self.endpoint:
            raise SynthError("REMOTE_ERROR", "remote backend selected but no endpoint configured")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            response = requests.post(
                self.endpoint,
                json={
                    "kb_id": req.kb_id,
                    "description": req.description,
                    "positive_examples": list(req.positive_examples),
                    "negative_examples": list(req.negative_examples),
                },
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise SynthError("REMOTE_ERROR", f"request to {self.endpoint} failed: {exc}") from exc
        if response.status_code != 200:
            raise SynthError("REMOTE_ERROR", f"endpoint returned {response.status_code}: {response.text[:200]}")
        try:
            payload = response.json()
            patterns = payload["patterns"]
        except (ValueError, KeyError, TypeError) as exc:
            raise SynthError("REMOTE_ERROR", f"malformed response body: {response.text[:200]}") from exc
        if not isinstance(patterns, list) or not all(isinstance(p, str) for p in patterns):
            raise SynthError("REMOTE_ERROR", f"'patterns' must be a list of strings, got {patterns!r}")
        for source in patterns:
            try:
                re.compile(source)
            except re.error as exc:
                raise SynthError("BAD_REMOTE_PATTERN", f"remote pattern {source!r} does not compile: {exc}") from exc
        return tuple(patterns)

    # -- public API --------------------------------------------------------

    def synthesize(self, req: SynthRequest) -> SynthResult:
        """Resolve one request through the configured backend."""
        cached = self._cache_read(req)
        if cached is not None:
            self.cache_hits += 1
            validate_patterns(cached, req.positive_examples, req.negative_examples)
            return SynthResult(patterns=cached, backend=self.backend, cached=True)
        patterns = self._run_backend(req)
        validate_patterns(patterns, req.positive_examples, req.negative_examples)
        self._cache_write(req, patterns)
        return SynthResult(patterns=patterns, backend=self.backend, cached=False)

    def patterns_for_doc(self, doc: KbDoc) -> list[tuple[str, re.Pattern]]:
        """Compiled patterns synthesized from the doc's pattern descriptions.

        With ``skip_missing`` set, unresolvable descriptions are logged and
        dropped instead of failing the whole mapping run.
        """
        if doc.id in self._doc_cache:
            return self._doc_cache[doc.id]
        resolved: list[tuple[str, re.Pattern]] = []
        for description in doc.pattern_descriptions:
            req = SynthRequest(
                kb_id=doc.id,
                description=description,
                positive_examples=doc.positive_examples,
                negative_examples=doc.negative_examples,
            )
            try:
                result = self.synthesize(req)
            except SynthError as exc:
                if self.skip_missing:
                    log.warning("skipping description %r of kb %s: %s", description, doc.id, exc)
                    continue
                raise SynthFailure(doc.id, description, exc) from exc
            for source in result.patterns:
                resolved.append((source, re.compile(source)))
        self._doc_cache[doc.id] = resolved
        return resolved
