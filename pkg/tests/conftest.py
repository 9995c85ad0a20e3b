from __future__ import annotations

import pytest

from criteria import RESULTS
from rnode.pipeline import PipelineConfig, run
from rnode.suite import generate_suite

SALT = b"test-salt-0123456789abcdef"

# every message line produced by a pipeline run in this session, for the privacy scan
MESSAGE_ARCHIVE: list[str] = []


def archived_run(*args, **kwargs):
    res = run(*args, **kwargs)
    MESSAGE_ARCHIVE.extend(res.message_lines)
    if res.transport is not None and hasattr(res.transport, "endpoints"):
        import json

        for ep in res.transport.endpoints:
            MESSAGE_ARCHIVE.extend(json.dumps(env) for env in ep.received.values())
    return res


@pytest.fixture(scope="session")
def salt() -> bytes:
    return SALT


@pytest.fixture(scope="session")
def base_config() -> PipelineConfig:
    return PipelineConfig(salt=SALT, seed=0)


@pytest.fixture(scope="session")
def suite_clean():
    return generate_suite(seed=0, occluded=False)


@pytest.fixture(scope="session")
def suite_occluded():
    return generate_suite(seed=0, occluded=True)


@pytest.fixture(scope="session")
def suite_runs_clean(suite_clean, base_config):
    return [archived_run(s, base_config) for s in suite_clean]


@pytest.fixture(scope="session")
def suite_runs_occluded(suite_occluded, base_config):
    return [archived_run(s, base_config) for s in suite_occluded]


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
