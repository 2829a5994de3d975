"""
Shared fixtures for the test suite
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add repo root to path for `src.` and `mocks` imports
ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(ROOT))

from mocks import SMOKE_OVERRIDES  # noqa: E402
from src.utils.validation import load_config  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def smoke_config():
    """Tiny experiment that trains two seeds in a few seconds"""
    return load_config(ROOT / 'configs' / 'smoke.yaml')


@pytest.fixture
def smoke_overrides():
    return list(SMOKE_OVERRIDES)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / 'runs'
    path.mkdir()
    return path


@pytest.fixture(autouse=True)
def _isolate_env(monkeypatch):
    """Keep developer .env settings out of CLI tests"""
    monkeypatch.delenv('HYBRID_TD3_OUTPUT_DIR', raising=False)
    monkeypatch.delenv('HYBRID_TD3_LOG_LEVEL', raising=False)
