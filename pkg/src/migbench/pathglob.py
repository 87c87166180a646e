"""Minimal glob dialect for scoping KB documents to repository files.

Supported syntax: ``*`` matches within one path segment, ``**`` crosses
segments, ``?`` matches a single non-separator character, and ``[...]``
character classes (``[!...]`` negates). Paths are matched as complete
repo-relative POSIX strings; a leading ``**/`` also matches zero segments,
so ``**/Dockerfile*`` covers both ``Dockerfile`` and ``svc/Dockerfile.web``.
"""

from __future__ import annotations

import re


class GlobError(ValueError):
    """Raised for glob patterns that cannot be translated."""


def translate(pattern: str) -> str:
    """Translate a glob pattern into an anchored regular expression."""
    if not pattern:
        raise GlobError("empty glob pattern")
    out: list[str] = []
    i, n = 0, len(pattern)
    while i < n:
        ch = pattern[i]
        if ch == "*":
            if pattern.startswith("**", i):
                i += 2
                if i < n and pattern[i] == "/":
                    # "**/" matches zero or more whole segments
                    i += 1
                    out.append(r"(?:[^/]+/)*")
                else:
                    out.append(r".*")
            else:
                i += 1
                out.append(r"[^/]*")
        elif ch == "?":
            i += 1
            out.append(r"[^/]")
        elif ch == "[":
            j = i + 1
            if j < n and pattern[j] in "!^":
                j += 1
            if j < n and pattern[j] == "]":
                j += 1
            while j < n and pattern[j] != "]":
                j += 1
            if j >= n:
                raise GlobError(f"unterminated character class in {pattern!r}")
            inner = pattern[i + 1 : j]
            if inner.startswith("!"):
                inner = "^" + inner[1:]
            out.append("[" + inner.replace("\\", "\\\\") + "]")
            i = j + 1
        else:
            out.append(re.escape(ch))
            i += 1
    return "(?s:" + "".join(out) + r")\Z"


def compile_glob(pattern: str) -> re.Pattern[str]:
    return re.compile(translate(pattern))


def match(pattern: str, path: str) -> bool:
    return compile_glob(pattern).match(path) is not None


def match_any(patterns, path: str) -> bool:
    """True when `path` matches at least one pattern, or `patterns` is empty."""
    patterns = list(patterns)
    if not patterns:
        return True
    return any(match(p, path) for p in patterns)
