from pathlib import Path

import pytest

from cbcforge.schemas import ProverConfig

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def cfg():
    return ProverConfig()


@pytest.fixture
def small_cfg():
    return ProverConfig(int_bound=2, max_seq_len=2, seq_elem_bound=1)


@pytest.fixture
def fixtures_dir():
    return FIXTURES
