# tests/conftest.py
import json
import os

import pytest

from tfqkd.core import PARAMETER_SETS
from tfqkd.schemas import TallyRecord
from tfqkd.utils.tally_io import read_tally_file

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
DISTANCES = [202, 303, 404, 505, 1002]


def tally_path(distance: int) -> str:
    return os.path.join(DATA_DIR, f"tally_{distance}km.json")


@pytest.fixture(scope="session")
def published():
    with open(os.path.join(DATA_DIR, "published.json")) as f:
        return {int(k): v for k, v in json.load(f).items()}


@pytest.fixture(scope="session")
def tallies():
    """Tally record and metadata for every published distance."""
    return {d: read_tally_file(tally_path(d)) for d in DISTANCES}


@pytest.fixture
def long_haul_tally(tallies) -> TallyRecord:
    return tallies[1002][0]


@pytest.fixture
def param_set_1():
    return PARAMETER_SETS["1"]


@pytest.fixture
def param_set_2():
    return PARAMETER_SETS["2"]


def make_tally(sent, detected, ds_total=0, ds_correct=0) -> TallyRecord:
    """TallyRecord with the per-detector split put on detector 1."""
    total = sum(sum(row) for row in detected)
    return TallyRecord(
        sent=tuple(tuple(r) for r in sent),
        detected=tuple(tuple(r) for r in detected),
        valid_det1=total,
        valid_det2=0,
        ds_total=ds_total,
        ds_correct=ds_correct,
        n_total=sum(sum(row) for row in sent),
    )
