"""Change units: line edits, hunks, file diffs, commits, and services.

Covers parsing and rendering unified diffs (git-style and bare GNU-style
headers), computing minimal diffs between line sequences, applying hunks,
extracting per-line edits, and loading a migrated service's commits either
from a directory of patch files or by shelling out to a version-control
tool.
"""

from __future__ import annotations

import hashlib
import re
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

CTX = "CTX"
ADD = "ADD"
DEL = "DEL"

ADDED = "ADDED"
DELETED = "DELETED"
MODIFIED = "MODIFIED"
RENAMED = "RENAMED"

#: Default argument template for exporting one commit's diff from a VCS
#: working copy. Placeholders: {source}, {commit}, {context}.
DEFAULT_VCS_DIFF_ARGS = (
    "git", "-C", "{source}", "show", "--format=", "--unified={context}", "{commit}",
)

#: Default template for listing (digest, path) pairs of a tree snapshot.
DEFAULT_VCS_SNAPSHOT_ARGS = (
    "git", "-C", "{source}", "ls-tree", "-r", "--format=%(objectname) %(path)", "{ref}",
)

_HUNK_HEADER_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")
_PATCH_NAME_RE = re.compile(r"^(\d+)-(.+)\.patch$")


class DiffError(Exception):
    """A structural invariant of a diff value was violated."""


class DiffParseError(Exception):
    """Unified-diff text could not be parsed."""

    def __init__(self, code: str, message: str, *, line_no: int | None = None, path: str | None = None):
        self.code = code
        self.message = message
        self.line_no = line_no
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line_no is not None:
            where += f"{line_no}:"
        super().__init__(f"{where} {message}" if where else message)


class ServiceLoadError(Exception):
    """A service's commit sources could not be loaded."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


class PatchApplyError(Exception):
    """A hunk did not apply cleanly to the given lines."""


@dataclass(frozen=True)
class LineEdit:
    """A single added or deleted line; the unit of line-level metrics.

    `anchor` is 1-based: the post-image line number for ADD, the pre-image
    line number for DEL.
    """

    file: str
    op: str
    content: str
    anchor: int

    def __post_init__(self):
        if not self.file:
            raise DiffError("LineEdit.file must be nonempty")
        if self.op not in (ADD, DEL):
            raise DiffError(f"LineEdit.op must be ADD or DEL, got {self.op!r}")
        if self.anchor < 1:
            raise DiffError(f"LineEdit.anchor must be >= 1, got {self.anchor}")


@dataclass(frozen=True)
class Hunk:
    """One contiguous block of a unified diff."""

    file_old: str | None
    file_new: str | None
    old_start: int
    old_len: int
    new_start: int
    new_len: int
    lines: tuple[tuple[str, str], ...]
    hunk_id: str

    @classmethod
    def create(cls, file_old, file_new, old_start, old_len, new_start, new_len, lines) -> "Hunk":
        lines = tuple((kind, content) for kind, content in lines)
        old_count = sum(1 for kind, _ in lines if kind in (CTX, DEL))
        new_count = sum(1 for kind, _ in lines if kind in (CTX, ADD))
        if old_count != old_len or new_count != new_len:
            raise DiffError(
                f"hunk line counts ({old_count},{new_count}) disagree with header ({old_len},{new_len})"
            )
        digest = hashlib.sha256()
        digest.update(f"{file_old or ''}\x00{file_new or ''}\x00{old_start}\x00{new_start}\x00".encode("utf-8"))
        for kind, content in lines:
            digest.update(f"{kind}\x01{content}\x02".encode("utf-8"))
        return cls(file_old, file_new, old_start, old_len, new_start, new_len, lines, digest.hexdigest()[:16])

    @property
    def effective_file(self) -> str:
        """Post-image path, falling back to the pre-image for deletions."""
        path = self.file_new or self.file_old
        if path is None:
            raise DiffError("hunk has neither an old nor a new path")
        return path


@dataclass(frozen=True)
class FileDiff:
    old_path: str | None
    new_path: str | None
    status: str
    hunks: tuple[Hunk, ...]

    @classmethod
    def create(cls, old_path, new_path, status, hunks) -> "FileDiff":
        hunks = tuple(hunks)
        if status == ADDED and any(kind != ADD for h in hunks for kind, _ in h.lines):
            raise DiffError(f"ADDED file {new_path!r} contains non-ADD lines")
        if status == DELETED and any(kind != DEL for h in hunks for kind, _ in h.lines):
            raise DiffError(f"DELETED file {old_path!r} contains non-DEL lines")
        if status == RENAMED and old_path == new_path:
            raise DiffError(f"RENAMED file must change path, got {old_path!r} on both sides")
        return cls(old_path, new_path, status, hunks)


@dataclass(frozen=True)
class CommitDiff:
    commit_id: str
    parent_id: str
    message: str
    files: tuple[FileDiff, ...]

    @classmethod
    def create(cls, commit_id, parent_id, message, files) -> "CommitDiff":
        if not commit_id:
            raise DiffError("commit_id must be nonempty")
        files = tuple(files)
        seen = set()
        for fd in files:
            key = (fd.old_path, fd.new_path)
            if key in seen:
                raise DiffError(f"duplicate file entry {key} in commit {commit_id}")
            seen.add(key)
        return cls(commit_id, parent_id, message, files)

    def text_hunks(self):
        for fd in self.files:
            for hunk in fd.hunks:
                yield fd, hunk


@dataclass(frozen=True)
class ServiceRecord:
    """Where a migrated service's commits come from.

    `mode` is ``patch-dir`` (a directory of ``NNNN-<commitid>.patch``
    files) or ``vcs`` (shell out to a version-control tool per commit).
    """

    service_id: str
    source: str
    pre_ref: str
    migration_commits: tuple[str, ...]
    mode: str = "patch-dir"

    def __post_init__(self):
        if not self.migration_commits:
            raise DiffError(f"service {self.service_id!r} lists no migration commits")
        if self.mode not in ("patch-dir", "vcs"):
            raise DiffError(f"unknown service mode {self.mode!r}")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _clean_header_path(raw: str) -> str | None:
    path = raw.split("\t", 1)[0].strip()
    if path == "/dev/null":
        return None
    if path.startswith("a/") or path.startswith("b/"):
        path = path[2:]
    return path


def _split_git_header(line: str) -> tuple[str, str]:
    body = line[len("diff --git ") :]
    marker = body.find(" b/")
    if marker < 0:
        raise DiffParseError("MALFORMED_HEADER", f"cannot split paths in {line!r}")
    old = body[:marker]
    new = body[marker + 1 :]
    return _clean_header_path(old) or old, _clean_header_path(new) or new


def _parse_hunk(lines: list[str], idx: int, file_old, file_new) -> tuple[Hunk, int]:
    header = _HUNK_HEADER_RE.match(lines[idx])
    if header is None:
        raise DiffParseError("MALFORMED_HUNK_HEADER", f"bad hunk header {lines[idx]!r}", line_no=idx + 1)
    old_start = int(header.group(1))
    old_len = int(header.group(2)) if header.group(2) is not None else 1
    new_start = int(header.group(3))
    new_len = int(header.group(4)) if header.group(4) is not None else 1
    idx += 1

    body: list[tuple[str, str]] = []
    old_count = new_count = 0
    while old_count < old_len or new_count < new_len:
        if idx >= len(lines):
            raise DiffParseError(
                "COUNT_MISMATCH",
                f"hunk ended with {old_count}/{old_len} old and {new_count}/{new_len} new lines",
                line_no=idx,
            )
        raw = lines[idx]
        if raw.startswith("\\"):
            # "\ No newline at end of file": accounted to neither side.
            if not body:
                raise DiffParseError("MALFORMED_HUNK_HEADER", "no-newline marker before any hunk line", line_no=idx + 1)
            idx += 1
            continue
        if raw.startswith(" ") or raw == "":
            kind, content = CTX, raw[1:]
        elif raw.startswith("-"):
            kind, content = DEL, raw[1:]
        elif raw.startswith("+"):
            kind, content = ADD, raw[1:]
        else:
            raise DiffParseError(
                "COUNT_MISMATCH",
                f"hunk interrupted by {raw!r} with {old_count}/{old_len} old and {new_count}/{new_len} new lines",
                line_no=idx + 1,
            )
        if kind in (CTX, DEL):
            old_count += 1
            if old_count > old_len:
                raise DiffParseError("COUNT_MISMATCH", f"old side overruns header count {old_len}", line_no=idx + 1)
        if kind in (CTX, ADD):
            new_count += 1
            if new_count > new_len:
                raise DiffParseError("COUNT_MISMATCH", f"new side overruns header count {new_len}", line_no=idx + 1)
        body.append((kind, content))
        idx += 1
    if idx < len(lines) and lines[idx].startswith("\\"):
        idx += 1
    return Hunk.create(file_old, file_new, old_start, old_len, new_start, new_len, body), idx


def parse_unified_diff(text: str) -> list[FileDiff]:
    """Parse a unified-diff document into FileDiff values.

    Accepts git-style blocks (``diff --git`` with extended headers,
    including renames) and bare ``---``/``+++`` pairs. Lines before the
    first file header are ignored. Binary markers yield a FileDiff with
    empty hunks.
    """
    lines = text.replace("\r\n", "\n").split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    diffs: list[FileDiff] = []
    idx = 0
    n = len(lines)

    while idx < n:
        line = lines[idx]
        if line.startswith("diff --git "):
            git_old, git_new = _split_git_header(line)
            idx += 1
            old_path: str | None = git_old
            new_path: str | None = git_new
            renamed = False
            added = False
            deleted = False
            binary = False
            while idx < n:
                header = lines[idx]
                if header.startswith("rename from "):
                    old_path = header[len("rename from ") :]
                    renamed = True
                elif header.startswith("rename to "):
                    new_path = header[len("rename to ") :]
                    renamed = True
                elif header.startswith("new file mode"):
                    added = True
                elif header.startswith("deleted file mode"):
                    deleted = True
                elif header.startswith("Binary files ") or header == "GIT binary patch":
                    binary = True
                elif header.startswith("--- "):
                    old_path = _clean_header_path(header[4:])
                    if idx + 1 >= n or not lines[idx + 1].startswith("+++ "):
                        raise DiffParseError("TRUNCATED_PATCH", "'---' header without matching '+++'", line_no=idx + 1)
                    new_path = _clean_header_path(lines[idx + 1][4:])
                    idx += 2
                    break
                elif header.startswith(("old mode", "new mode", "similarity index", "dissimilarity index", "index ", "copy from", "copy to")):
                    pass
                else:
                    break
                idx += 1
            hunks: list[Hunk] = []
            while idx < n and lines[idx].startswith("@@"):
                hunk, idx = _parse_hunk(lines, idx, old_path, new_path)
                hunks.append(hunk)
            if binary:
                hunks = []
            if added or old_path is None:
                status, old_path = ADDED, None
            elif deleted or new_path is None:
                status, new_path = DELETED, None
            elif renamed or old_path != new_path:
                status = RENAMED
            else:
                status = MODIFIED
            diffs.append(FileDiff.create(old_path, new_path, status, hunks))
        elif line.startswith("--- "):
            old_path = _clean_header_path(line[4:])
            if idx + 1 >= n or not lines[idx + 1].startswith("+++ "):
                raise DiffParseError("TRUNCATED_PATCH", "'---' header without matching '+++'", line_no=idx + 1)
            new_path = _clean_header_path(lines[idx + 1][4:])
            idx += 2
            hunks = []
            while idx < n and lines[idx].startswith("@@"):
                hunk, idx = _parse_hunk(lines, idx, old_path, new_path)
                hunks.append(hunk)
            if old_path is None:
                status = ADDED
            elif new_path is None:
                status = DELETED
            elif old_path != new_path:
                status = RENAMED
            else:
                status = MODIFIED
            diffs.append(FileDiff.create(old_path, new_path, status, hunks))
        else:
            idx += 1
    return diffs


def parse_patch_file(text: str, commit_id: str, parent_id: str = "") -> CommitDiff:
    """Parse one patch file; leading non-diff lines become the message."""
    lines = text.replace("\r\n", "\n").split("\n")
    message_lines: list[str] = []
    for line in lines:
        if line.startswith("diff --git ") or line.startswith("--- "):
            break
        message_lines.append(line)
    message = "\n".join(message_lines).strip()
    return CommitDiff.create(commit_id, parent_id, message, parse_unified_diff(text))


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_PREFIX = {CTX: " ", ADD: "+", DEL: "-"}


def render_unified_diff(files: Sequence[FileDiff]) -> str:
    """Render FileDiff values as canonical unified-diff bytes.

    Output is LF-terminated, files in input order, hunks in ascending
    old_start, headers always carrying explicit lengths; `parse_unified_diff`
    inverts it exactly.
    """
    out: list[str] = []
    for fd in files:
        a_path = fd.old_path or fd.new_path
        b_path = fd.new_path or fd.old_path
        out.append(f"diff --git a/{a_path} b/{b_path}")
        if fd.status == RENAMED:
            out.append(f"rename from {fd.old_path}")
            out.append(f"rename to {fd.new_path}")
        if fd.hunks or fd.status != RENAMED:
            out.append("--- " + (f"a/{fd.old_path}" if fd.old_path is not None else "/dev/null"))
            out.append("+++ " + (f"b/{fd.new_path}" if fd.new_path is not None else "/dev/null"))
        for hunk in sorted(fd.hunks, key=lambda h: (h.old_start, h.new_start)):
            out.append(f"@@ -{hunk.old_start},{hunk.old_len} +{hunk.new_start},{hunk.new_len} @@")
            for kind, content in hunk.lines:
                out.append(_PREFIX[kind] + content)
    if not out:
        return ""
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Diff computation (minimal edit script) and application
# ---------------------------------------------------------------------------


def _myers_ops(old: Sequence[str], new: Sequence[str]) -> list[tuple[str, int, int]]:
    """Shortest edit script as ('eq'|'del'|'ins', old_idx, new_idx) steps."""
    n, m = len(old), len(new)
    max_d = n + m
    v: dict[int, int] = {1: 0}
    trace: list[dict[int, int]] = []
    for d in range(max_d + 1):
        trace.append(dict(v))
        for k in range(-d, d + 1, 2):
            if k == -d or (k != d and v.get(k - 1, 0) < v.get(k + 1, 0)):
                x = v.get(k + 1, 0)
            else:
                x = v.get(k - 1, 0) + 1
            y = x - k
            while x < n and y < m and old[x] == new[y]:
                x += 1
                y += 1
            v[k] = x
            if x >= n and y >= m:
                return _myers_backtrack(trace[: d + 1], old, new)
    return _myers_backtrack(trace, old, new)  # pragma: no cover - loop always returns


def _myers_backtrack(trace, old, new) -> list[tuple[str, int, int]]:
    ops: list[tuple[str, int, int]] = []
    x, y = len(old), len(new)
    for d in range(len(trace) - 1, -1, -1):
        v = trace[d]
        k = x - y
        if k == -d or (k != d and v.get(k - 1, 0) < v.get(k + 1, 0)):
            prev_k = k + 1
        else:
            prev_k = k - 1
        prev_x = v.get(prev_k, 0)
        prev_y = prev_x - prev_k
        while x > prev_x and y > prev_y:
            ops.append(("eq", x - 1, y - 1))
            x -= 1
            y -= 1
        if d > 0:
            if x == prev_x:
                ops.append(("ins", x, prev_y))
                y = prev_y
            else:
                ops.append(("del", prev_x, y))
                x = prev_x
    ops.reverse()
    return ops


def compute_file_diff(
    old_lines: Sequence[str],
    new_lines: Sequence[str],
    context: int = 3,
    *,
    file_old: str | None = None,
    file_new: str | None = None,
) -> list[Hunk]:
    """Diff two line sequences into hunks with `context` lines of CTX.

    The edit script is minimal (fewest ADD+DEL lines); change blocks whose
    context windows overlap or touch are merged into one hunk.
    """
    ops = _myers_ops(list(old_lines), list(new_lines))
    change_idx = [i for i, (tag, _, _) in enumerate(ops) if tag != "eq"]
    if not change_idx:
        return []

    groups: list[tuple[int, int]] = []
    start = prev = change_idx[0]
    for i in change_idx[1:]:
        if i - prev - 1 > 2 * context:
            groups.append((start, prev))
            start = i
        prev = i
    groups.append((start, prev))

    # Old/new indices consumed before each op.
    old_before = []
    new_before = []
    oi = ni = 0
    for tag, _, _ in ops:
        old_before.append(oi)
        new_before.append(ni)
        if tag in ("eq", "del"):
            oi += 1
        if tag in ("eq", "ins"):
            ni += 1
    old_before.append(oi)
    new_before.append(ni)

    hunks: list[Hunk] = []
    for first, last in groups:
        lo = max(0, first - context)
        hi = min(len(ops) - 1, last + context)
        lines: list[tuple[str, str]] = []
        for tag, oidx, nidx in ops[lo : hi + 1]:
            if tag == "eq":
                lines.append((CTX, old_lines[oidx]))
            elif tag == "del":
                lines.append((DEL, old_lines[oidx]))
            else:
                lines.append((ADD, new_lines[nidx]))
        old_lo, old_hi = old_before[lo], old_before[hi + 1]
        new_lo, new_hi = new_before[lo], new_before[hi + 1]
        old_len = old_hi - old_lo
        new_len = new_hi - new_lo
        hunks.append(
            Hunk.create(
                file_old,
                file_new,
                old_lo + 1 if old_len > 0 else old_lo,
                old_len,
                new_lo + 1 if new_len > 0 else new_lo,
                new_len,
                lines,
            )
        )
    return hunks


def apply_hunks(old_lines: Sequence[str], hunks: Sequence[Hunk]) -> list[str]:
    """Apply hunks to `old_lines`, verifying CTX/DEL content as it goes."""
    result: list[str] = []
    cursor = 0
    ordered = sorted(hunks, key=lambda h: (h.old_start - 1 if h.old_len else h.old_start, h.new_start))
    for hunk in ordered:
        block_start = hunk.old_start - 1 if hunk.old_len else hunk.old_start
        if block_start < cursor:
            raise PatchApplyError(f"hunk at old line {hunk.old_start} overlaps a previous hunk")
        result.extend(old_lines[cursor:block_start])
        cursor = block_start
        for kind, content in hunk.lines:
            if kind in (CTX, DEL):
                if cursor >= len(old_lines) or old_lines[cursor] != content:
                    found = old_lines[cursor] if cursor < len(old_lines) else "<eof>"
                    raise PatchApplyError(f"hunk expects {content!r} at old line {cursor + 1}, found {found!r}")
                if kind == CTX:
                    result.append(content)
                cursor += 1
            else:
                result.append(content)
    result.extend(old_lines[cursor:])
    return result


def extract_line_edits(hunk: Hunk) -> list[LineEdit]:
    """One LineEdit per ADD/DEL line; CTX lines produce nothing."""
    path = hunk.effective_file
    edits: list[LineEdit] = []
    old_no = hunk.old_start
    new_no = hunk.new_start
    for kind, content in hunk.lines:
        if kind == CTX:
            old_no += 1
            new_no += 1
        elif kind == DEL:
            edits.append(LineEdit(path, DEL, content, old_no))
            old_no += 1
        else:
            edits.append(LineEdit(path, ADD, content, new_no))
            new_no += 1
    return edits


# ---------------------------------------------------------------------------
# Service loading
# ---------------------------------------------------------------------------


def load_service_commits(
    record: ServiceRecord,
    *,
    vcs_diff_args: Sequence[str] = DEFAULT_VCS_DIFF_ARGS,
    context: int = 3,
) -> list[CommitDiff]:
    """Load the commits of one migrated service.

    patch-dir mode reads every ``NNNN-<commitid>.patch`` under the source
    directory in lexical order; every id in `migration_commits` must be
    present. vcs mode invokes the configured tool once per listed commit
    and parses its stdout as a unified diff.
    """
    source = Path(record.source)
    if record.mode == "patch-dir":
        if not source.is_dir():
            raise ServiceLoadError("UNREADABLE_SOURCE", f"patch directory {source} is not readable")
        commits: list[CommitDiff] = []
        seen: set[str] = set()
        for patch_path in sorted(source.glob("*.patch")):
            name_match = _PATCH_NAME_RE.match(patch_path.name)
            if not name_match:
                continue
            commit_id = name_match.group(2)
            try:
                text = patch_path.read_text(encoding="utf-8", errors="replace")
            except OSError as exc:
                raise ServiceLoadError("UNREADABLE_SOURCE", f"cannot read {patch_path}: {exc}") from exc
            try:
                commits.append(parse_patch_file(text, commit_id))
            except DiffParseError as exc:
                raise DiffParseError(exc.code, exc.message, line_no=exc.line_no, path=str(patch_path)) from exc
            seen.add(commit_id)
        for commit_id in record.migration_commits:
            if commit_id not in seen:
                raise ServiceLoadError("MISSING_COMMIT", f"no patch file for commit {commit_id!r} under {source}")
        return commits

    if not source.exists():
        raise ServiceLoadError("UNREADABLE_SOURCE", f"working copy {source} does not exist")
    commits = []
    for commit_id in record.migration_commits:
        argv = [arg.format(source=str(source), commit=commit_id, context=context) for arg in vcs_diff_args]
        proc = subprocess.run(argv, capture_output=True, text=True)
        if proc.returncode != 0:
            detail = proc.stderr.strip().splitlines()[:1]
            raise ServiceLoadError(
                "MISSING_COMMIT",
                f"{argv[0]} exited {proc.returncode} for commit {commit_id!r}: {detail[0] if detail else ''}",
            )
        commits.append(CommitDiff.create(commit_id, "", "", parse_unified_diff(proc.stdout)))
    return commits


def snapshot_manifest(
    record: ServiceRecord,
    *,
    vcs_snapshot_args: Sequence[str] = DEFAULT_VCS_SNAPSHOT_ARGS,
) -> dict[str, str] | None:
    """File -> content digest at the pre-migration ref (vcs mode only)."""
    if record.mode != "vcs":
        return None
    argv = [arg.format(source=record.source, ref=record.pre_ref) for arg in vcs_snapshot_args]
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        raise ServiceLoadError("UNREADABLE_SOURCE", f"snapshot listing failed for ref {record.pre_ref!r}")
    manifest: dict[str, str] = {}
    for line in proc.stdout.splitlines():
        line = line.strip()
        if not line:
            continue
        digest, _, path = line.partition(" ")
        manifest[path] = digest
    return manifest
