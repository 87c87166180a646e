from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from migbench.synth import (
    MAX_PATTERN_LENGTH,
    PatternSynthesizer,
    SynthError,
    SynthRequest,
    load_rulebook,
    normalize_description,
    validate_patterns,
)


def test_normalize_description():
    assert normalize_description("Windows  drive names!") == "windows drive names"
    assert normalize_description("System.Drawing usage lines") == "system drawing usage lines"


def test_rulebook_drive_names_behavior():
    # The concrete regex is validated against example lines, not asserted
    # byte-for-byte.
    synth = PatternSynthesizer("rulebook")
    result = synth.synthesize(
        SynthRequest(
            kb_id="win-path-separators",
            description="Windows drive names",
            positive_examples=("cd C:\\build",),
            negative_examples=("cd /home/build",),
        )
    )
    assert result.backend == "rulebook"
    assert result.cached is False
    compiled = [re.compile(p) for p in result.patterns]
    assert any(rx.search("cd C:\\build") for rx in compiled)
    assert not any(rx.search("cd /home/build") for rx in compiled)


def test_rulebook_miss_raises_no_rule():
    synth = PatternSynthesizer("rulebook")
    with pytest.raises(SynthError) as err:
        synth.synthesize(SynthRequest(kb_id="x", description="a shape nobody described"))
    assert err.value.code == "NO_RULE"


def test_custom_rulebook_file(tmp_path):
    table = tmp_path / "rules.tsv"
    table.write_text("# comment\nhexadecimal literals\t0x[0-9a-fA-F]+\n", encoding="utf-8")
    rulebook = load_rulebook(table)
    synth = PatternSynthesizer("rulebook", rulebook=rulebook)
    result = synth.synthesize(SynthRequest(kb_id="x", description="Hexadecimal literals."))
    assert result.patterns == ("0x[0-9a-fA-F]+",)


def test_static_backend_returns_doc_patterns():
    synth = PatternSynthesizer("static", kb_patterns={"some-task": (r"foo\d+",)})
    result = synth.synthesize(SynthRequest(kb_id="some-task", description="whatever"))
    assert result.patterns == (r"foo\d+",)
    assert result.backend == "static"
    assert result.cached is False


def test_validate_patterns_accepts_drive_prefixes():
    validate_patterns([r"[A-Za-z]:\\"], pos=["cd C:\\x"], neg=["cd /x"])


def test_validate_rejects_match_all():
    with pytest.raises(SynthError) as err:
        validate_patterns([r".*"], neg=["anything"])
    assert err.value.code == "VALIDATION_FAILURE"


def test_validate_rejects_empty_pattern_list_with_positives():
    with pytest.raises(SynthError) as err:
        validate_patterns([], pos=["needs a match"])
    assert err.value.code == "VALIDATION_FAILURE"


def test_validate_rejects_unmatched_positive():
    with pytest.raises(SynthError) as err:
        validate_patterns([r"foo"], pos=["bar"])
    assert err.value.example == "bar"


def test_validate_rejects_oversized_pattern():
    with pytest.raises(SynthError):
        validate_patterns(["a" * (MAX_PATTERN_LENGTH + 1)])


def test_cache_round_trip(tmp_path):
    req = SynthRequest(kb_id="win-path-separators", description="Windows drive names")
    cold = PatternSynthesizer("rulebook", cache_dir=tmp_path)
    first = cold.synthesize(req)
    assert first.cached is False
    warm = PatternSynthesizer("rulebook", cache_dir=tmp_path)
    second = warm.synthesize(req)
    assert second.cached is True
    assert second.patterns == first.patterns
    assert warm.cache_hits == 1


def test_cache_key_tracks_request_content(tmp_path):
    base = SynthRequest(kb_id="a", description="Windows drive names")
    tweaked = SynthRequest(kb_id="a", description="Windows drive names", positive_examples=("C:\\x",))
    assert base.digest() != tweaked.digest()
    assert base.digest() == SynthRequest(kb_id="a", description="Windows drive names").digest()


class _RecordingHandler(BaseHTTPRequestHandler):
    requests: list = []
    response_patterns = [r"[A-Za-z]:\\"]
    status = 200

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).requests.append((self.path, dict(self.headers), body))
        payload = json.dumps({"patterns": type(self).response_patterns}).encode()
        self.send_response(type(self).status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def mock_server():
    _RecordingHandler.requests = []
    _RecordingHandler.response_patterns = [r"[A-Za-z]:\\"]
    _RecordingHandler.status = 200
    server = HTTPServer(("127.0.0.1", 0), _RecordingHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/synthesize"
    server.shutdown()
    thread.join()


def test_remote_backend_round_trip(tmp_path, mock_server):
    synth = PatternSynthesizer("remote", endpoint=mock_server, token="sekrit", cache_dir=tmp_path)
    req = SynthRequest(
        kb_id="win-path-separators",
        description="Windows drive names",
        positive_examples=("cd C:\\x",),
        negative_examples=("cd /x",),
    )
    first = synth.synthesize(req)
    assert first.patterns == (r"[A-Za-z]:\\",)
    assert first.cached is False
    path, headers, body = _RecordingHandler.requests[0]
    assert body == {
        "kb_id": "win-path-separators",
        "description": "Windows drive names",
        "positive_examples": ["cd C:\\x"],
        "negative_examples": ["cd /x"],
    }
    assert headers.get("Authorization") == "Bearer sekrit"

    second = synth.synthesize(req)
    assert second.cached is True
    assert second.patterns == first.patterns
    assert len(_RecordingHandler.requests) == 1  # served from cache, no new call


def test_remote_error_status(mock_server):
    _RecordingHandler.status = 503
    synth = PatternSynthesizer("remote", endpoint=mock_server)
    with pytest.raises(SynthError) as err:
        synth.synthesize(SynthRequest(kb_id="x", description="y"))
    assert err.value.code == "REMOTE_ERROR"


def test_remote_bad_pattern(mock_server):
    _RecordingHandler.response_patterns = ["([A-Z"]
    synth = PatternSynthesizer("remote", endpoint=mock_server)
    with pytest.raises(SynthError) as err:
        synth.synthesize(SynthRequest(kb_id="x", description="y"))
    assert err.value.code == "BAD_REMOTE_PATTERN"


def test_remote_validation_failure(mock_server):
    synth = PatternSynthesizer("remote", endpoint=mock_server)
    with pytest.raises(SynthError) as err:
        synth.synthesize(
            SynthRequest(kb_id="x", description="y", negative_examples=("cd C:\\oops",))
        )
    assert err.value.code == "VALIDATION_FAILURE"


def test_rulebook_and_static_are_pure(tmp_path):
    req = SynthRequest(kb_id="k", description="container base image lines")
    a = PatternSynthesizer("rulebook").synthesize(req)
    b = PatternSynthesizer("rulebook").synthesize(req)
    assert a == b
