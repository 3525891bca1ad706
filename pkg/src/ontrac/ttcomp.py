#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
在线时间压缩与还原

位置约定：边界 j 表示离开第 j−1 个路段的时刻（边界 0 是轨迹起点）。
第 i 个更新的时间戳落在边界 i+1 上。锚点记录 (累计距离, 融合时刻, 边界)。
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import CorruptionError, ValidationError
from .roadnet import RoadNetwork
from .trajmodel import Trajectory
from .ttqp import TravelTimeModel, gps_temporal_error

DISTANCE_TOL = 1e-6


class Anchor(NamedTuple):
    distance: float
    time: float
    position: int


@dataclass(frozen=True)
class CompressedTemporal:
    object: str
    kept: Tuple[Anchor, ...]

    def __post_init__(self) -> None:
        for a, b in zip(self.kept, self.kept[1:]):
            if not (b.distance > a.distance and b.time > a.time and b.position > a.position):
                raise CorruptionError(f"{self.object}: 锚点必须严格递增", module="ttcomp")


@dataclass
class FusionState:
    t_hat: float = 0.0
    w_hat: float = 0.0
    d: float = 0.0
    t_star: float = 0.0
    tau: float = 0.0
    path: float = 0.0


def fuse(t_hat: float, w_hat: float, t_bar: float, sigma_sq: float) -> float:
    """两个已知方差高斯均值的精度加权融合"""
    if w_hat < 0 or sigma_sq < 0:
        raise ValidationError(f"方差不能为负: w_hat={w_hat}, sigma_sq={sigma_sq}", module="ttcomp")
    total = w_hat + sigma_sq
    if total == 0:
        raise ValidationError("模型方差与 GPS 方差不能同时为 0", module="ttcomp")
    return (t_hat * sigma_sq + t_bar * w_hat) / total


class TemporalCompressor:
    """
    逐个更新推进的时间压缩器

    fused 记录每个观测位置（边界）上的融合时刻，供误差检查使用。
    """

    def __init__(
        self,
        model: TravelTimeModel,
        lengths: np.ndarray,
        lam: float,
        object_id: str = "",
        start_time: Optional[float] = None,
    ) -> None:
        if not lam > 0:
            raise ValidationError(f"lambda 必须为正: {lam}", module="ttcomp")
        self.model = model
        self.lengths = lengths
        self.lam = lam
        self.object = object_id
        self.state = FusionState()
        self.kept: List[Anchor] = []
        self.fused: List[Tuple[int, float]] = []
        self.position = 0
        self._last_obs: Optional[float] = None
        # τ = 上一个锚点时刻 + 之后逐段累加的 φ，累加顺序与 RecoveryClock 一致
        self._base = 0.0
        self._acc = 0.0
        if start_time is not None:
            self._anchor_first(start_time)

    def _anchor_first(self, t: float) -> Anchor:
        st = self.state
        st.t_star = st.tau = self._base = t
        self._acc = 0.0
        self._last_obs = t
        anchor = Anchor(st.d, t, self.position)
        self.kept.append(anchor)
        self.fused.append((self.position, t))
        return anchor

    def push(self, seg: int, timestamp: Optional[float]) -> Optional[Anchor]:
        """推入一个更新，返回新保留的锚点（如有）"""
        n = len(self.lengths)
        if not 0 <= seg < n:
            raise ValidationError(f"{self.object}: 未知路段 id {seg}", module="ttcomp")
        st = self.state
        length = float(self.lengths[seg])
        st.d += length
        self.position += 1

        if self._last_obs is None:
            if timestamp is None:
                raise ValidationError(f"{self.object}: 第一个时间戳缺失且没有 START", module="ttcomp")
            return self._anchor_first(timestamp)

        phi = float(self.model.phi[seg])
        st.t_hat += phi
        self._acc += phi
        st.w_hat += float(self.model.omega[seg]) ** 2
        st.path += length
        if timestamp is None:
            return None

        t_bar = timestamp - self._last_obs
        sigma = gps_temporal_error(self.model.sigma_star, t_bar, st.path)
        st.t_star += fuse(st.t_hat, st.w_hat, t_bar, sigma * sigma)
        st.tau = self._base + self._acc
        self.fused.append((self.position, st.t_star))

        anchor: Optional[Anchor] = None
        if abs(st.tau - st.t_star) > self.lam:
            anchor = Anchor(st.d, st.t_star, self.position)
            self.kept.append(anchor)
            st.tau = self._base = st.t_star
            self._acc = 0.0
        st.t_hat = st.w_hat = st.path = 0.0
        self._last_obs = timestamp
        return anchor

    def result(self) -> "CompressedTemporal":
        return CompressedTemporal(self.object, tuple(self.kept))


def temporal_compress(
    model: TravelTimeModel,
    traj: Trajectory,
    net: RoadNetwork,
    lam: float,
) -> CompressedTemporal:
    comp = TemporalCompressor(model, net.lengths, lam, traj.object, traj.start_time)
    for seg, t in zip(traj.segments, traj.timestamps):
        comp.push(seg, t)
    return comp.result()


def fused_timeline(model: TravelTimeModel, traj: Trajectory, net: RoadNetwork) -> np.ndarray:
    """
    每个边界上的融合时刻

    观测边界直接取融合值；缺失边界按 φ 的比例分配所在块的融合耗时。
    最后一个观测之后的边界按模型均值外推。
    """
    comp = TemporalCompressor(model, net.lengths, math.inf, traj.object, traj.start_time)
    for seg, t in zip(traj.segments, traj.timestamps):
        comp.push(seg, t)
    fused = dict(comp.fused)
    out = np.full(len(traj) + 1, np.nan)
    known = sorted(fused)
    for b in known:
        out[b] = fused[b]
    if traj.start_time is None:
        out[0] = out[1]
    phi = model.phi
    segs = traj.segments
    for a, b in zip(known, known[1:]):
        weights = np.array([phi[segs[i]] for i in range(a, b)])
        cum = np.cumsum(weights)[:-1] / weights.sum()
        out[a + 1:b] = out[a] + cum * (out[b] - out[a])
    last = known[-1]
    if last < len(traj):
        out[last + 1:] = out[last] + np.cumsum([phi[segs[i]] for i in range(last, len(traj))])
    return out


class RecoveryClock:
    """
    从某个锚点开始逐段推进的还原时钟

    两个锚点之间按模型均值从前一个锚点累加，并截断在下一个锚点时刻；
    到达锚点边界时取锚点时刻并校验累计距离。完整还原和局部还原共用它。
    """

    def __init__(self, phi: np.ndarray, lengths: np.ndarray, anchors: Sequence[Anchor], index: int = 0) -> None:
        if not anchors:
            raise CorruptionError("没有时间锚点", module="ttcomp")
        a = anchors[index]
        self.phi = phi
        self.lengths = lengths
        self.anchors = anchors
        self.next_index = index + 1
        self.position = a.position
        self.distance = a.distance
        self.time = a.time
        self._base = a.time
        self._acc = 0.0

    def step(self, seg: int) -> float:
        """推进一个路段（位置 = 当前边界），返回它的离开时刻"""
        self.position += 1
        self.distance += float(self.lengths[seg])
        self._acc += float(self.phi[seg])
        nxt = self.anchors[self.next_index] if self.next_index < len(self.anchors) else None
        if nxt is not None and nxt.position == self.position:
            if abs(nxt.distance - self.distance) > DISTANCE_TOL:
                raise CorruptionError(
                    f"边界 {self.position} 处距离不一致: 锚点 {nxt.distance}，还原 {self.distance}",
                    module="ttcomp",
                )
            self.distance = nxt.distance
            self.time = self._base = nxt.time
            self._acc = 0.0
            self.next_index += 1
        else:
            t = self._base + self._acc
            self.time = min(t, nxt.time) if nxt is not None else t
        return self.time


def recover_exit_times(
    model: TravelTimeModel,
    comp: CompressedTemporal,
    spatial: Sequence[int],
    net: RoadNetwork,
) -> Tuple[float, np.ndarray]:
    """返回 (起点时刻, 每个路段的离开时刻)"""
    anchors = comp.kept
    if not anchors:
        raise CorruptionError(f"{comp.object}: 没有时间锚点", module="ttcomp")
    first = anchors[0]
    if first.position not in (0, 1) or first.position > len(spatial):
        raise CorruptionError(f"{comp.object}: 第一个锚点位置非法 {first.position}", module="ttcomp")
    if anchors[-1].position > len(spatial):
        raise CorruptionError(f"{comp.object}: 锚点超出轨迹长度", module="ttcomp")
    expected = float(net.lengths[spatial[0]]) if first.position == 1 else 0.0
    if abs(first.distance - expected) > DISTANCE_TOL:
        raise CorruptionError(f"{comp.object}: 第一个锚点距离不一致", module="ttcomp")

    exits = np.empty(len(spatial))
    if first.position == 1:
        exits[0] = first.time
    clock = RecoveryClock(model.phi, net.lengths, anchors)
    for pos in range(first.position, len(spatial)):
        exits[pos] = clock.step(spatial[pos])
    if clock.next_index != len(anchors):
        raise CorruptionError(f"{comp.object}: 有锚点未被还原对齐", module="ttcomp")
    return first.time, exits


def temporal_recover(
    model: TravelTimeModel,
    comp: CompressedTemporal,
    spatial: Sequence[int],
    net: RoadNetwork,
) -> List[Tuple[int, float]]:
    """每个路段及其还原的离开时刻；起点时刻由第一个锚点给出"""
    _, exits = recover_exit_times(model, comp, spatial, net)
    return [(int(s), float(t)) for s, t in zip(spatial, exits)]


def observed_errors(
    model: TravelTimeModel,
    traj: Trajectory,
    comp: CompressedTemporal,
    net: RoadNetwork,
) -> np.ndarray:
    """每个观测位置上 |还原时刻 − 融合时刻|"""
    tc = TemporalCompressor(model, net.lengths, math.inf, traj.object, traj.start_time)
    for seg, t in zip(traj.segments, traj.timestamps):
        tc.push(seg, t)
    origin, exits = recover_exit_times(model, comp, traj.segments, net)
    boundary = np.concatenate(([origin], exits))
    return np.array([abs(boundary[b] - t) for b, t in tc.fused])
