# -*- coding: utf-8 -*-
"""共享夹具：示例路网与流、示例 trie、小规模合成数据"""
import os
from pathlib import Path
from typing import Dict

import numpy as np
import pytest

from ontrac.roadnet import RoadNetwork, read_network
from ontrac.spatial import SpatialModel, spatial_training
from ontrac.synth import SynthConfig, SynthMode, generate, make_grid_network
from ontrac.trajmodel import Trajectory, TrajectoryStream, group_by_object, read_stream
from ontrac.ttqp import TravelTimeModel

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def running_net() -> RoadNetwork:
    return read_network(DATA / "running_example.net")


@pytest.fixture(scope="session")
def running_stream(running_net) -> TrajectoryStream:
    return read_stream(DATA / "running_example.csv", running_net)


@pytest.fixture(scope="session")
def running_trajs(running_stream) -> Dict[str, Trajectory]:
    return {t.object: t for t in group_by_object(running_stream)}


@pytest.fixture(scope="session")
def example_trie(running_net, running_trajs) -> SpatialModel:
    """在 o1、o2、o3 上训练的 2 阶 trie"""
    return spatial_training(running_net, [running_trajs[o] for o in ("o1", "o2", "o3")], 2)


@pytest.fixture
def ids(running_net):
    """路段名到 id 的简写：ids("s_2,1")"""
    return running_net.id_of


def constant_model(net: RoadNetwork, phi: float, omega: float, delta: float = 1.0, sigma_star: float = 1.0):
    n = len(net)
    return TravelTimeModel(np.full(n, phi), np.full(n, omega), delta, sigma_star)


@pytest.fixture(scope="session")
def grid() -> RoadNetwork:
    return make_grid_network(5, 5, 100.0)


@pytest.fixture(scope="session")
def walk_data(grid):
    config = SynthConfig(
        mode=SynthMode.RANDOM_WALK,
        n_trajectories=80,
        walk_length=15,
        gps_interval=20.0,
        time_jitter=0.1,
        seed=7,
    )
    stream, truth = generate(grid, config)
    return stream, truth, group_by_object(stream)


def pytest_collection_modifyitems(config, items):
    if os.environ.get("ONTRAC_BENCH") == "1":
        return
    skip = pytest.mark.skip(reason="吞吐量基准：设置 ONTRAC_BENCH=1 运行")
    for item in items:
        if "bench" in item.keywords:
            item.add_marker(skip)
