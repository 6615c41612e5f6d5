import shutil

import numpy as np
import pytest

from EmoFuse import Pipeline, load_config
from EmoFuse.tensor import default_dtype
from config import *


@pytest.fixture
def small_config():
    return load_config(None, 'desk', **TEST_OVERRIDES)


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture
def float64():
    with default_dtype(np.float64):
        yield


@pytest.fixture(scope='session')
def finished_run(tmp_path_factory):
    """Output directory of one complete small-scale run, shared read-only."""
    out = str(tmp_path_factory.mktemp('run'))
    with Pipeline(load_config(None, 'desk', **TEST_OVERRIDES), out) as pipeline:
        report = pipeline.cmd_run()
    return out, report


@pytest.fixture
def run_copy(finished_run, tmp_path):
    """Private copy of the finished run for tests that write into it."""
    out = str(tmp_path / 'run')
    shutil.copytree(finished_run[0], out)
    return out
