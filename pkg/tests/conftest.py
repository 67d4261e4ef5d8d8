# Pytest configuration & path setup
# Puts the repository root (with the 'backend' package) on sys.path and keeps
# the caller's LOSSE_* environment out of config resolution.

import os
import sys

import pytest

ROOT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if ROOT_DIR not in sys.path:
    sys.path.insert(0, ROOT_DIR)

LOSSE_ENV_VARS = ("LOSSE_DATASET_PATH", "LOSSE_OUTPUT_DIR", "LOSSE_WORKERS")


@pytest.fixture(autouse=True)
def _isolate_losse_env(monkeypatch):
    for name in LOSSE_ENV_VARS:
        monkeypatch.delenv(name, raising=False)
