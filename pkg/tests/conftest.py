import os

import numpy as np
import pytest

from ginet.config import load_config
from ginet.embeddings import build_semantic_inputs

# filled by test_acceptance.py; printed at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_config():
    return load_config().validate()


@pytest.fixture(scope="session")
def toy_l_mat(toy_config):
    cfg = toy_config
    return build_semantic_inputs(cfg.data.classes, None, cfg.model.embed_dim).matrix.astype(np.float32)


@pytest.fixture(scope="session")
def toy_run(toy_config, toy_l_mat):
    """The full default overfit run, shared by the tests that need trained weights."""
    from ginet.training import train_loop
    import time
    cfg = toy_config
    t0 = time.perf_counter()
    res = train_loop(cfg.model, cfg.data, cfg.train, cfg.loss, toy_l_mat)
    return res, time.perf_counter() - t0


@pytest.fixture
def chdir_tmp(tmp_path):
    old = os.getcwd()
    os.chdir(tmp_path)
    yield tmp_path
    os.chdir(old)
