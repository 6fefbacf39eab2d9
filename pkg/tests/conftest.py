import numpy as np
import pytest

from mmreach.embedding import make_embedding
from mmreach.fixtures import get_fixture


@pytest.fixture(scope="session")
def fx():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = get_fixture(name)
        return cache[name]

    return get


@pytest.fixture(scope="session")
def emb(fx):
    def get(name, backward=False, which=None):
        f = fx(name)
        sys = f.system.backward() if backward else f.system
        return make_embedding(sys, f.decomposition(backward, which))

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
