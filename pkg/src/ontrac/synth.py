#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
合成数据：网格路网、随机游走轨迹、最短路轨迹

每个路段在一次生成中抽取一个基准速度（截断正态，下限 1 m/s），
每次通行时间 ~ N(L/v, (jitter·L/v)²)，截断在均值的 10%。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import SynthError, ValidationError
from .roadnet import RoadNetwork, SegmentRecord
from .trajmodel import EventKind, Trajectory, TrajectoryStream, Update

logger = logging.getLogger(__name__)

MIN_SPEED = 1.0
MIN_TIME_FRACTION = 0.1


class SynthMode(str, Enum):
    RANDOM_WALK = "walk"
    SHORTEST_PATH = "sp"


@dataclass(frozen=True)
class SynthConfig:
    mode: SynthMode = SynthMode.RANDOM_WALK
    n_trajectories: int = 100
    walk_length: int = 20
    speed_mean: float = 15.0
    speed_std: float = 10.0
    alpha: float = 1.0
    gps_interval: float = 0.0
    seed: int = 0
    time_jitter: float = 0.0
    start_spread: float = 3600.0
    max_retries: int = 1000

    def __post_init__(self) -> None:
        if not self.speed_mean > 0:
            raise ValidationError(f"speed_mean 必须为正: {self.speed_mean}", module="synth")
        if self.speed_std < 0 or self.time_jitter < 0:
            raise ValidationError("speed_std 与 time_jitter 不能为负", module="synth")
        if not self.alpha > 0:
            raise ValidationError(f"alpha 必须为正: {self.alpha}", module="synth")
        if self.gps_interval < 0:
            raise ValidationError(f"gps_interval 不能为负: {self.gps_interval}", module="synth")
        if self.n_trajectories < 0 or self.walk_length < 1:
            raise ValidationError("n_trajectories >= 0 且 walk_length >= 1", module="synth")


@dataclass
class GroundTruth:
    trajectories: List[Trajectory] = field(default_factory=list)
    durations: List[np.ndarray] = field(default_factory=list)
    segment_means: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def by_object(self) -> Dict[str, Trajectory]:
        return {t.object: t for t in self.trajectories}


# ---------- 网格 ----------

def _road_name(mx: int, my: int) -> str:
    return f"s_{mx},{my}"


def make_grid_network(rows: int, cols: int, segment_length: float, directed: bool = True) -> RoadNetwork:
    """
    rows × cols 个街区的网格

    directed=True：每条道路两个方向各一个路段，在终点继续行驶（不掉头）；
    directed=False：每条道路一个路段，按中点（半单位坐标）命名，共享端点即相邻。
    """
    if rows < 1 or cols < 1:
        raise ValidationError(f"rows/cols 必须 >= 1: {rows}x{cols}", module="synth")
    if not segment_length > 0:
        raise ValidationError(f"segment_length 必须为正: {segment_length}", module="synth")

    # 道路：(端点 a, 端点 b)，节点是 (x, y)
    roads: List[Tuple[Tuple[int, int], Tuple[int, int]]] = []
    for y in range(rows + 1):
        for x in range(cols):
            roads.append(((x, y), (x + 1, y)))
    for x in range(cols + 1):
        for y in range(rows):
            roads.append(((x, y), (x, y + 1)))

    if not directed:
        names = [_road_name(a[0] + b[0], a[1] + b[1]) for a, b in roads]
        at_node: Dict[Tuple[int, int], List[int]] = {}
        for i, (a, b) in enumerate(roads):
            at_node.setdefault(a, []).append(i)
            at_node.setdefault(b, []).append(i)
        segments = [SegmentRecord(i, float(segment_length), name) for i, name in enumerate(names)]
        adjacency = []
        for i, (a, b) in enumerate(roads):
            succ = {j for node in (a, b) for j in at_node[node] if j != i}
            adjacency.append(sorted(succ, key=lambda j: names[j]))
        return RoadNetwork(segments, adjacency)

    arcs: List[Tuple[Tuple[int, int], Tuple[int, int]]] = []
    for a, b in roads:
        arcs.append((a, b))
        arcs.append((b, a))
    heading = {(1, 0): "E", (-1, 0): "W", (0, 1): "N", (0, -1): "S"}
    names = [
        f"{_road_name(a[0] + b[0], a[1] + b[1])}:{heading[(b[0] - a[0], b[1] - a[1])]}" for a, b in arcs
    ]
    leaving: Dict[Tuple[int, int], List[int]] = {}
    for i, (a, _) in enumerate(arcs):
        leaving.setdefault(a, []).append(i)
    segments = [SegmentRecord(i, float(segment_length), name) for i, name in enumerate(names)]
    adjacency = [[j for j in leaving[b] if arcs[j][1] != a] for a, b in arcs]
    return RoadNetwork(segments, adjacency)


def make_cycle_network(n: int, segment_length: float = 100.0) -> RoadNetwork:
    """有向环：每个路段出度为 1"""
    if n < 1:
        raise ValidationError("环至少需要 1 个路段", module="synth")
    segments = [SegmentRecord(i, float(segment_length), f"c{i}") for i in range(n)]
    return RoadNetwork(segments, [[(i + 1) % n] for i in range(n)])


def make_complete_network(n: int, segment_length: float = 100.0) -> RoadNetwork:
    """完全有向图（含自环）：每个路段出度为 n"""
    if n < 1:
        raise ValidationError("完全图至少需要 1 个路段", module="synth")
    segments = [SegmentRecord(i, float(segment_length), f"k{i}") for i in range(n)]
    return RoadNetwork(segments, [list(range(n)) for _ in range(n)])


# ---------- 时间 ----------

def _segment_speeds(rng: np.random.Generator, n: int, mean: float, std: float) -> np.ndarray:
    """截断正态速度（拒绝采样，下限 MIN_SPEED）"""
    if std == 0:
        return np.full(n, max(mean, MIN_SPEED))
    speeds = rng.normal(mean, std, size=n)
    bad = speeds < MIN_SPEED
    while bad.any():
        speeds[bad] = rng.normal(mean, std, size=int(bad.sum()))
        bad = speeds < MIN_SPEED
    return speeds


def _traversal_times(rng: np.random.Generator, means: np.ndarray, jitter: float) -> np.ndarray:
    if jitter == 0:
        return means.copy()
    times = rng.normal(means, jitter * means)
    return np.maximum(times, MIN_TIME_FRACTION * means)


def _sparsify(exits: np.ndarray, interval: float) -> List[Optional[float]]:
    """保留首尾，以及距上一个保留观测至少 interval 秒的更新"""
    n = len(exits)
    if interval <= 0:
        return [float(t) for t in exits]
    out: List[Optional[float]] = [None] * n
    last = exits[0]
    out[0] = float(exits[0])
    for i in range(1, n):
        if i == n - 1 or exits[i] - last >= interval:
            out[i] = float(exits[i])
            last = exits[i]
    return out


class _Builder:
    """把轨迹路段序列变成带时间的流与真值"""

    def __init__(self, net: RoadNetwork, config: SynthConfig, rng: np.random.Generator) -> None:
        self.net = net
        self.config = config
        self.rng = rng
        speeds = _segment_speeds(rng, len(net), config.speed_mean, config.speed_std)
        self.means = net.lengths / speeds
        self.truth: List[Trajectory] = []
        self.durations: List[np.ndarray] = []
        self.emitted: List[Trajectory] = []

    def add(self, segments: Sequence[int]) -> None:
        i = len(self.truth)
        obj = f"o{i + 1}"
        start = float(self.rng.uniform(0.0, self.config.start_spread)) if self.config.start_spread > 0 else 0.0
        times = _traversal_times(self.rng, self.means[list(segments)], self.config.time_jitter)
        exits = start + np.cumsum(times)
        segs = tuple(int(s) for s in segments)
        self.truth.append(Trajectory(obj, segs, tuple(float(t) for t in exits), start))
        self.durations.append(times)
        self.emitted.append(Trajectory(obj, segs, tuple(_sparsify(exits, self.config.gps_interval)), start))

    def finish(self) -> Tuple[TrajectoryStream, GroundTruth]:
        events: List[Tuple[float, int, int, Update]] = []
        for ti, (emit, true) in enumerate(zip(self.emitted, self.truth)):
            events.append((emit.start_time, ti, 0, Update(emit.object, -1, emit.start_time, EventKind.START)))
            for j, (seg, t) in enumerate(zip(emit.segments, emit.timestamps)):
                events.append((true.timestamps[j], ti, j + 1, Update(emit.object, seg, t)))
            last = true.timestamps[-1]
            events.append((last, ti, len(emit) + 1, Update(emit.object, -1, None, EventKind.END)))
        events.sort(key=lambda e: (e[0], e[1], e[2]))
        stream = TrajectoryStream(updates=[e[3] for e in events], names=self.net.names)
        means = self.means.copy()
        means.setflags(write=False)
        return stream, GroundTruth(self.truth, self.durations, means)


def gen_random_walk(net: RoadNetwork, config: SynthConfig) -> Tuple[TrajectoryStream, GroundTruth]:
    """均匀随机起点、均匀后继；死胡同处均匀跳转"""
    if config.mode is not SynthMode.RANDOM_WALK:
        raise SynthError(f"gen_random_walk 需要 mode=walk，实际 {config.mode.value}")
    n = len(net)
    if n == 0:
        raise SynthError("空路网无法生成轨迹")
    rng = np.random.default_rng(config.seed)
    builder = _Builder(net, config, rng)
    adjacency = net.adjacency
    for _ in range(config.n_trajectories):
        cur = int(rng.integers(n))
        segs = [cur]
        for _ in range(config.walk_length - 1):
            succ = adjacency[cur]
            cur = int(succ[rng.integers(len(succ))]) if succ else int(rng.integers(n))
            segs.append(cur)
        builder.add(segs)
    logger.debug("随机游走: %d 条轨迹", config.n_trajectories)
    return builder.finish()


def destination_probabilities(n: int, alpha: float) -> np.ndarray:
    """排名 r 的目的地概率 ∝ α·e^{−α r}"""
    ranks = np.arange(n, dtype=np.float64)
    w = alpha * np.exp(-alpha * ranks)
    return w / w.sum()


def segment_graph(net: RoadNetwork) -> nx.DiGraph:
    """路段图，边权为进入的路段长度"""
    g = nx.DiGraph()
    g.add_nodes_from(range(len(net)))
    lengths = net.lengths
    for i, succs in enumerate(net.adjacency):
        for j in succs:
            g.add_edge(i, j, weight=float(lengths[j]))
    return g


def gen_shortest_path(net: RoadNetwork, config: SynthConfig) -> Tuple[TrajectoryStream, GroundTruth]:
    """
    起点均匀，目的地按指数流行度抽取，路径取长度加权最短路

    目的地排名由一次随机排列确定；同一目的地的最短路树只计算一次。
    """
    if config.mode is not SynthMode.SHORTEST_PATH:
        raise SynthError(f"gen_shortest_path 需要 mode=sp，实际 {config.mode.value}")
    n = len(net)
    if n < 2:
        raise SynthError("最短路模式至少需要 2 个路段")
    rng = np.random.default_rng(config.seed)
    ranking = rng.permutation(n)
    probs = destination_probabilities(n, config.alpha)
    builder = _Builder(net, config, rng)
    reverse = segment_graph(net).reverse(copy=False)
    trees: Dict[int, Dict[int, List[int]]] = {}

    for _ in range(config.n_trajectories):
        for _attempt in range(config.max_retries):
            dest = int(ranking[rng.choice(n, p=probs)])
            start = int(rng.integers(n))
            if start == dest:
                continue
            tree = trees.get(dest)
            if tree is None:
                tree = trees[dest] = nx.single_source_dijkstra_path(reverse, dest, weight="weight")
            path = tree.get(start)
            if path is None:
                continue
            builder.add(path[::-1])
            break
        else:
            raise SynthError(f"{config.max_retries} 次重采样后仍找不到可达的起点/终点")
    logger.debug("最短路: %d 条轨迹，%d 个不同目的地", config.n_trajectories, len(trees))
    return builder.finish()


def generate(net: RoadNetwork, config: SynthConfig) -> Tuple[TrajectoryStream, GroundTruth]:
    if config.mode is SynthMode.RANDOM_WALK:
        return gen_random_walk(net, config)
    return gen_shortest_path(net, config)
