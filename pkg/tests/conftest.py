"""Shared fixtures: the default configuration and its lazily built objects."""
import numpy as np
import pytest

from fnx.config import load_config
from fnx.suites import Context


@pytest.fixture(scope="session")
def default_config():
    return load_config()


@pytest.fixture(scope="session")
def context(default_config):
    return Context(default_config)


@pytest.fixture(scope="session")
def system(context):
    return context.system


@pytest.fixture(scope="session")
def domain(context):
    return context.domain


@pytest.fixture(scope="session")
def family(context):
    return context.family()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
