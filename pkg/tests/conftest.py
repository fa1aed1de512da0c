from pathlib import Path

import pytest

from hpcm.cli import testdata_root
from hpcm.context import ContextConfig

# narrow networks keep the neural backend fast enough for many sessions
SMALL_NET = ContextConfig(ctx_dim=16, width=16, key_dim=8, hyper_dim=8)


@pytest.fixture(scope="session")
def testdata() -> Path:
    root = testdata_root()
    if not root.is_dir():
        pytest.skip(f"golden data directory {root} missing")
    return root


@pytest.fixture
def small_net() -> ContextConfig:
    return SMALL_NET
