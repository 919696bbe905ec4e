import json
from pathlib import Path

import pytest

from fecim.array import default_row_config
from fecim.params import default_design

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def design():
    return default_design()


@pytest.fixture(scope="session")
def row_cfg(design):
    # Thresholds calibrated once on the design's default grid.
    return default_row_config(design)


@pytest.fixture(scope="session")
def golden():
    with open(FIXTURES / "golden.json") as fh:
        return json.load(fh)
