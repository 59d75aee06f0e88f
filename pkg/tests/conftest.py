import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vsminsight.catalog import ContextHandle
from vsminsight.model import parse_vsm
from vsminsight.sim import SimulationConfig, simulate

FIXTURES = Path(__file__).parent.parent / "fixtures"

SUPERMARKET_CONFIG = SimulationConfig(horizon_s=248400, seed=42, sample_interval_s=3600,
                                      start_time="2025-12-01T00:00:00Z")
LINE_CONFIG = SimulationConfig(horizon_s=3600, seed=7, sample_interval_s=60,
                               start_time="2025-01-06T08:00:00Z")


@pytest.fixture(scope="session")
def supermarket_graph():
    return parse_vsm((FIXTURES / "supermarket.json").read_bytes())


@pytest.fixture(scope="session")
def supermarket_output(supermarket_graph):
    return simulate(supermarket_graph, SUPERMARKET_CONFIG)


@pytest.fixture(scope="session")
def supermarket_context(supermarket_graph, supermarket_output):
    return ContextHandle("supermarket", supermarket_graph, supermarket_output)


@pytest.fixture(scope="session")
def line_context():
    graph = parse_vsm((FIXTURES / "three_node_line.json").read_bytes())
    return ContextHandle("line", graph, simulate(graph, LINE_CONFIG))


@pytest.fixture
def fig2_script_path():
    return FIXTURES / "fig2_script.json"
