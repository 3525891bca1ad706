#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
where(o, t) 查询与局部解压

区间约定：第 i 个路段占据 (b_i, b_{i+1}]，b_0 为轨迹起点，t == b_0 时落在第一个路段。
"""
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .codec import CompressedTrajectory, RecoveredTrajectory, decompress_trajectory
from .errors import CorruptionError, NotFoundError, OutOfRangeError
from .roadnet import RoadNetwork
from .spatial import SpatialModel, candidate_predictions, predict_next
from .trajmodel import Trajectory
from .ttcomp import RecoveryClock
from .ttqp import TravelTimeModel

logger = logging.getLogger(__name__)


class Decompression(str, Enum):
    FULL_RECONSTRUCT = "full"
    PARTIAL = "partial"


@dataclass(frozen=True)
class WhereResult:
    segment: int
    recovered_time: float
    exit_time: float
    position: int
    context_length: int


@dataclass(frozen=True)
class PartialTrajectory:
    """完整解压结果中 [start_position, start_position + len(segments)) 这一段"""
    object: str
    start_position: int
    segments: Tuple[int, ...]
    exit_times: np.ndarray
    spatial_start: int
    context_length: int

    @property
    def end_position(self) -> int:
        return self.start_position + len(self.segments)


class _Replay:
    """从保留位置 p 开始向前还原路段序列"""

    def __init__(self, model: SpatialModel, stored: Dict[int, int], length: int, p: int) -> None:
        self.model = model
        self.stored = stored
        self.length = length
        self.start = p
        self.seq: List[int] = []

    def resolve_prefix(self) -> bool:
        """还原 p 之后的前 k 个位置；任何位置有多种可能时返回 False"""
        k = self.model.order
        unknown = self.start > 0
        for pos in range(self.start, min(self.start + k, self.length)):
            seg = self.stored.get(pos)
            if seg is None:
                cands = candidate_predictions(self.model, self.seq, unknown)
                if len(cands) > 1:
                    return False
                seg = next(iter(cands))
                if seg is None:
                    raise CorruptionError(f"位置 {pos} 被省略但模型无法预测", module="query")
            self.seq.append(seg)
        return True

    def segment_at(self, pos: int) -> int:
        while self.start + len(self.seq) <= pos:
            cur = self.start + len(self.seq)
            seg = self.stored.get(cur)
            if seg is None:
                seg = predict_next(self.model, self.seq[-self.model.order:])
                if seg is None:
                    raise CorruptionError(f"位置 {cur} 被省略但模型无法预测", module="query")
            self.seq.append(seg)
        return self.seq[pos - self.start]


def partial_decompress(
    comp: CompressedTrajectory,
    spatial_model: SpatialModel,
    tt_model: TravelTimeModel,
    net: RoadNetwork,
    t: float,
    k: Optional[int] = None,
) -> PartialTrajectory:
    """
    只还原回答 t 时刻所需的窗口

    选取 t 之前最近的时间锚点，从它之前最近的空间保留位置开始重放；
    若 trie 对前 k 个被省略位置给出多种可能，就退回上一个保留位置，最坏退到位置 0。
    """
    if k is not None and k != spatial_model.order:
        logger.debug("partial_decompress: 忽略 k=%d，使用模型阶数 %d", k, spatial_model.order)
    anchors = comp.temporal.kept
    if not anchors or not comp.spatial.kept:
        raise CorruptionError(f"{comp.object}: 压缩轨迹为空", module="query")
    origin = anchors[0].time
    if t < origin:
        raise OutOfRangeError(f"{comp.object}: t={t} 早于轨迹起点 {origin}")

    times = [a.time for a in anchors]
    ai = max(bisect.bisect_left(times, t) - 1, 0)
    anchor = anchors[ai]
    ws = max(anchor.position - 1, 0)

    kept_positions = [p for p, _ in comp.spatial.kept]
    stored = dict(comp.spatial.kept)
    ki = bisect.bisect_right(kept_positions, ws) - 1
    if ki < 0:
        raise CorruptionError(f"{comp.object}: 位置 0 未保留", module="query")
    while True:
        replay = _Replay(spatial_model, stored, comp.length, kept_positions[ki])
        if replay.resolve_prefix() or ki == 0:
            break
        ki -= 1

    segments: List[int] = []
    exits: List[float] = []
    clock = RecoveryClock(tt_model.phi, net.lengths, anchors, ai)
    if anchor.position >= 1:
        segments.append(replay.segment_at(ws))
        exits.append(anchor.time)
    pos = anchor.position
    while not exits or exits[-1] < t:
        if pos >= comp.length:
            raise OutOfRangeError(f"{comp.object}: t={t} 晚于轨迹终点 {exits[-1] if exits else origin}")
        seg = replay.segment_at(pos)
        segments.append(seg)
        exits.append(clock.step(seg))
        pos += 1

    end = ws + len(segments)
    consulted = bisect.bisect_left(kept_positions, end) - ki + (clock.next_index - ai)
    return PartialTrajectory(
        comp.object,
        ws,
        tuple(segments),
        np.array(exits),
        kept_positions[ki],
        consulted,
    )


def _locate(exits: Sequence[float], origin: float, t: float, offset: int = 0) -> Tuple[int, float, float]:
    """返回 (窗口内下标, 进入时刻, 离开时刻)"""
    i = bisect.bisect_left(exits, t)
    if i >= len(exits):
        raise OutOfRangeError(f"t={t} 晚于轨迹终点 {exits[-1] if len(exits) else origin}")
    entry = exits[i - 1] if i > 0 else origin
    return i, float(entry), float(exits[i])


def where_in_partial(part: PartialTrajectory, origin: float, t: float) -> WhereResult:
    i, entry, exit_time = _locate(part.exit_times, origin, t)
    return WhereResult(part.segments[i], entry, exit_time, part.start_position + i, part.context_length)


def where_in_recovered(rec: RecoveredTrajectory, t: float, context_length: int = 0) -> WhereResult:
    if t < rec.start_time:
        raise OutOfRangeError(f"{rec.object}: t={t} 早于轨迹起点 {rec.start_time}")
    i, entry, exit_time = _locate(rec.exit_times, rec.start_time, t)
    return WhereResult(rec.segments[i], entry, exit_time, i, context_length)


def where_in_compressed(
    comp: CompressedTrajectory,
    spatial_model: SpatialModel,
    tt_model: TravelTimeModel,
    net: RoadNetwork,
    t: float,
    decompression: Decompression = Decompression.PARTIAL,
) -> WhereResult:
    if decompression is Decompression.PARTIAL:
        part = partial_decompress(comp, spatial_model, tt_model, net, t)
        return where_in_partial(part, comp.temporal.kept[0].time, t)
    rec = decompress_trajectory(comp, spatial_model, tt_model, net)
    return where_in_recovered(rec, t, comp.kept_count)


def fill_missing_times(
    traj: Trajectory,
    net: RoadNetwork,
    tt_model: Optional[TravelTimeModel] = None,
) -> Tuple[float, np.ndarray]:
    """
    未压缩轨迹的缺失时间戳补全

    两个观测之间按 φ（无模型时按路段长度）比例分配；
    最后一个观测之后按 φ 外推，无模型时保持最后观测时刻。
    """
    weights = tt_model.phi if tt_model is not None else net.lengths
    n = len(traj)
    exits = np.array([np.nan if t is None else t for t in traj.timestamps], dtype=np.float64)
    observed = traj.observed
    if not observed:
        raise OutOfRangeError(f"{traj.object}: 轨迹没有任何时间戳")
    origin = traj.start_time
    if origin is None:
        origin = exits[observed[0]]
        exits[:observed[0]] = origin
        prev = observed[0]
    else:
        prev = -1
    prev_time = origin if prev < 0 else exits[prev]
    for cur in observed:
        if cur <= prev:
            continue
        span = np.array([weights[traj.segments[i]] for i in range(prev + 1, cur + 1)], dtype=np.float64)
        frac = np.cumsum(span)[:-1] / span.sum()
        exits[prev + 1:cur] = prev_time + frac * (exits[cur] - prev_time)
        prev, prev_time = cur, exits[cur]
    if prev < n - 1:
        if tt_model is not None:
            tail = np.cumsum([tt_model.phi[traj.segments[i]] for i in range(prev + 1, n)])
            exits[prev + 1:] = prev_time + tail
        else:
            exits[prev + 1:] = prev_time
    return float(origin), exits


def where_in_trajectory(
    traj: Trajectory,
    net: RoadNetwork,
    t: float,
    tt_model: Optional[TravelTimeModel] = None,
) -> WhereResult:
    origin, exits = fill_missing_times(traj, net, tt_model)
    if t < origin:
        raise OutOfRangeError(f"{traj.object}: t={t} 早于轨迹起点 {origin}")
    i, entry, exit_time = _locate(exits, origin, t)
    return WhereResult(traj.segments[i], entry, exit_time, i, len(traj))


class TrajectorySource(Protocol):
    """where_query 需要的存储接口"""

    network: RoadNetwork
    spatial_model: Optional[SpatialModel]
    tt_model: Optional[TravelTimeModel]

    @property
    def compressed(self) -> bool: ...

    def compressed_trajectories(self, object_id: str) -> List[CompressedTrajectory]: ...

    def raw_trajectories(self, object_id: str) -> List[Trajectory]: ...


def _pick(origins: Sequence[float], t: float) -> int:
    """同一对象有多条轨迹时，选起点不晚于 t 的最后一条"""
    return max(bisect.bisect_right(origins, t) - 1, 0)


def where_query(
    store: TrajectorySource,
    object_id: str,
    t: float,
    decompression: Decompression = Decompression.PARTIAL,
) -> WhereResult:
    if store.compressed:
        comps = store.compressed_trajectories(object_id)
        if not comps:
            raise NotFoundError(f"存储中没有对象 {object_id}")
        comp = comps[_pick([c.temporal.kept[0].time for c in comps], t)]
        return where_in_compressed(comp, store.spatial_model, store.tt_model, store.network, t, decompression)

    trajs = store.raw_trajectories(object_id)
    if not trajs:
        raise NotFoundError(f"存储中没有对象 {object_id}")
    origins = [fill_missing_times(tr, store.network, store.tt_model)[0] for tr in trajs]
    return where_in_trajectory(trajs[_pick(origins, t)], store.network, t, store.tt_model)
