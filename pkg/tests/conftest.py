import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ldf_opf.netcase import load_case, validate_radial  # noqa: E402
from ldf_opf.ldf import build_ldf  # noqa: E402
from ldf_opf.opf_model import reduce_case  # noqa: E402


@pytest.fixture(scope="session")
def case4():
    return load_case("case4")


@pytest.fixture(scope="session")
def case4_model(case4):
    topo = validate_radial(case4)
    return topo, build_ldf(case4, topo)


@pytest.fixture(scope="session")
def case4_reduced(case4):
    return reduce_case(case4)[2]
