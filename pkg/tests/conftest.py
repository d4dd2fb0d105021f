import sys
from pathlib import Path

import pytest

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
sys.path.insert(0, str(HERE))


@pytest.fixture
def listing_bytes() -> bytes:
    return (FIXTURES / "listing1_suite.idsl.json").read_bytes()


@pytest.fixture
def listing(listing_bytes):
    from idslkit import parse_idsl

    return parse_idsl(listing_bytes)
