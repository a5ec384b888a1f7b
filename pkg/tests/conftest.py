"""
Pytest configuration and shared fixtures.

This module provides shared fixtures and configuration for all tests.
"""
import sys
import tempfile
from pathlib import Path

import pytest

# Add the project root to the path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))


@pytest.fixture
def temp_dir():
    """Create a temporary directory for result files."""
    with tempfile.TemporaryDirectory() as tmp:
        yield Path(tmp)
