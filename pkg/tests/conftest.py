import numpy as np
import pytest

from uavdc.scenario import (GridSpec, IoTNodeCfg, JammerCfg, PhysicsParams,
                            ScenarioConfig, ZoneMask, builtin, validate)


@pytest.fixture(scope="session")
def scenario1():
    return builtin("scenario1")


def make_mini_scenario(with_jammer=True) -> ScenarioConfig:
    """Small 6x6 world with one of each zone kind, two nodes, one jammer."""

    cfg = ScenarioConfig(
        name="mini",
        grid=GridSpec(y_cells=6, cell_len_m=20.0),
        physics=PhysicsParams(),
        zones=[
            ZoneMask("start_land", [(0, 0), (0, 1)]),
            ZoneMask("no_fly", [(3, 3)]),
            ZoneMask("comm_obstacle", [(2, 4)]),
            ZoneMask("combined", [(5, 0)]),
        ],
        nodes=[
            IoTNodeCfg(cell=(1, 3), init_data_mb=50.0, capacity_mb=65.0,
                       growth_mb=0.2, tx_power_w=0.1),
            IoTNodeCfg(cell=(4, 1), init_data_mb=10.0, capacity_mb=65.0,
                       growth_mb=0.2, tx_power_w=0.1),
        ],
        jammers=[JammerCfg(cell=(4, 4))] if with_jammer else [],
    )
    validate(cfg)
    return cfg


def make_two_node_scenario() -> ScenarioConfig:
    """Tiny world where one node vastly out-rates the other.

    The strong node sits next to the start cell; the weak node transmits so
    faintly that its decodable volume stays under the collection threshold at
    any bandwidth split, so every unit of bandwidth granted to it is wasted.
    Capacities are large enough that nothing overflows within an episode,
    which makes the slot reward a pure, smooth function of the split.
    """

    cfg = ScenarioConfig(
        name="two_node",
        grid=GridSpec(y_cells=5, cell_len_m=20.0),
        physics=PhysicsParams(),
        zones=[ZoneMask("start_land", [(0, 0)])],
        nodes=[
            IoTNodeCfg(cell=(1, 0), init_data_mb=50.0, capacity_mb=5000.0,
                       growth_mb=5.0, tx_power_w=0.1),
            IoTNodeCfg(cell=(4, 4), init_data_mb=50.0, capacity_mb=5000.0,
                       growth_mb=5.0, tx_power_w=1e-14),
        ],
        jammers=[],
    )
    validate(cfg)
    return cfg


@pytest.fixture
def mini():
    return make_mini_scenario()


@pytest.fixture
def two_node():
    return make_two_node_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
