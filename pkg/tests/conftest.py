import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corpus import corpus  # noqa: E402


@pytest.fixture(scope="session")
def spd_corpus():
    return corpus()
