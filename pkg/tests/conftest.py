import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from neradapt import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # timed tests must never pay JIT latency
    kernels.warmup()
