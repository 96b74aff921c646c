"""
Common test fixtures and configuration for all tests
"""
import os
import sys
import shutil
import tempfile

import pytest

# Add parent directory to Python path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from regsens.core.oracle import demo_dgp, sample_dataset  # noqa: E402


@pytest.fixture
def demo():
    return demo_dgp()


@pytest.fixture
def demo_summary(demo):
    return demo.summary()


@pytest.fixture
def demo_moments(demo):
    return demo.observed()


@pytest.fixture
def temp_dir():
    """Temporary directory removed after the test"""
    path = tempfile.mkdtemp()
    yield path
    shutil.rmtree(path, ignore_errors=True)


@pytest.fixture
def demo_csv(demo, temp_dir):
    """A sampled demo dataset written to CSV (columns Y, X, W1)."""
    dataset = sample_dataset(demo, 20_000, seed=7)
    path = os.path.join(temp_dir, "demo.csv")
    dataset.frame.to_csv(path, index=False)
    return path
