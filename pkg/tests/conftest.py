from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from migbench.config import build_synthesizer, load_config
from migbench.diffs import load_service_commits
from migbench.kb import load_kb_set
from migbench.suite import GenerateSettings, run_pipeline

FIXTURES = Path(__file__).parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def fixture_config():
    config = load_config(FIXTURES / "config.yaml")
    config.validate()
    return config


@pytest.fixture(scope="session")
def fixture_kbs(fixture_config):
    return load_kb_set(fixture_config.kb_root)


@pytest.fixture(scope="session")
def fixture_commits(fixture_config):
    return {record.service_id: load_service_commits(record) for record in fixture_config.services}


@pytest.fixture(scope="session")
def fixture_labels():
    return json.loads((FIXTURES / "labels.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def fixture_pipeline(fixture_config, fixture_kbs):
    synth = build_synthesizer(fixture_config, fixture_kbs)
    return run_pipeline(
        fixture_config.services, fixture_kbs, synth, GenerateSettings(reproducible=True)
    )


@pytest.fixture(scope="session")
def fixture_suite(fixture_pipeline):
    return fixture_pipeline.suite
