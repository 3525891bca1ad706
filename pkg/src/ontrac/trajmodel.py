#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
轨迹数据模型与轨迹流的解析/序列化

流文件每行一条记录：

    object_id,segment_name,timestamp_seconds   # 时间戳为空表示缺失
    object_id,START,t_seconds                  # 可选：轨迹进入第一个路段的时刻
    object_id,END,                             # 轨迹结束

时间戳是离开路段的时刻（秒）。
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParseError, ValidationError
from .roadnet import RoadNetwork

MISSING = None
START_MARK = "START"
END_MARK = "END"


class EventKind(Enum):
    UPDATE = "update"
    START = START_MARK
    END = END_MARK


@dataclass(frozen=True, slots=True)
class Update:
    """流中的一条记录；START/END 标记的 segment 为 -1"""
    object: str
    segment: int
    timestamp: Optional[float]
    kind: EventKind = EventKind.UPDATE


@dataclass(frozen=True)
class Trajectory:
    object: str
    segments: Tuple[int, ...]
    timestamps: Tuple[Optional[float], ...]
    start_time: Optional[float] = None

    def __post_init__(self) -> None:
        if len(self.segments) != len(self.timestamps):
            raise ValidationError(f"轨迹 {self.object} 的路段与时间戳数量不一致", module="trajmodel")

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def observed(self) -> List[int]:
        """有时间戳的位置"""
        return [i for i, t in enumerate(self.timestamps) if t is not None]

    @property
    def origin(self) -> Optional[float]:
        """轨迹起点时刻：START 标记，否则第一个时间戳"""
        if self.start_time is not None:
            return self.start_time
        return self.timestamps[0] if self.timestamps else None


@dataclass
class TrajectoryStream:
    """按到达顺序排列的记录；names 把路段 id 映射回名称"""
    updates: List[Update] = field(default_factory=list)
    names: Tuple[str, ...] = ()

    @property
    def update_count(self) -> int:
        return sum(1 for u in self.updates if u.kind is EventKind.UPDATE)

    def __len__(self) -> int:
        return len(self.updates)


class _Interner:
    """没有路网时按首次出现顺序给路段名编号"""

    def __init__(self, net: Optional[RoadNetwork]) -> None:
        self.net = net
        self.ids: Dict[str, int] = {}
        self.names: List[str] = []

    def __call__(self, name: str, lineno: int) -> int:
        if self.net is not None:
            if not self.net.has_segment(name):
                raise ValidationError(f"第 {lineno} 行: 未知路段 {name}", module="trajmodel")
            return self.net.id_of(name)
        seg = self.ids.get(name)
        if seg is None:
            seg = self.ids[name] = len(self.names)
            self.names.append(name)
        return seg

    def table(self) -> Tuple[str, ...]:
        return self.net.names if self.net is not None else tuple(self.names)


@dataclass
class _OpenState:
    last_time: Optional[float] = None
    start: Optional[float] = None
    updates: int = 0


def parse_stream(source: str, net: Optional[RoadNetwork] = None) -> TrajectoryStream:
    """解析流文件；提供路网时校验路段名"""
    intern = _Interner(net)
    updates: List[Update] = []
    open_objects: Dict[str, _OpenState] = {}

    for lineno, line in enumerate(source.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            row = next(csv.reader([line]))
        except csv.Error as e:
            raise ParseError(str(e), lineno, module="trajmodel") from e
        if len(row) != 3:
            raise ParseError(f"应有 3 个字段，实际 {len(row)} 个", lineno, module="trajmodel")
        obj, seg_name, ts_text = row
        if not obj:
            raise ParseError("对象 id 为空", lineno, module="trajmodel")

        timestamp: Optional[float] = MISSING
        if ts_text.strip():
            try:
                timestamp = float(ts_text)
            except ValueError:
                raise ParseError(f"时间戳不是数字: {ts_text!r}", lineno, module="trajmodel") from None
            if not math.isfinite(timestamp) or timestamp < 0:
                raise ValidationError(
                    f"第 {lineno} 行: 对象 {obj} 的时间戳必须是非负有限数: {ts_text}", module="trajmodel"
                )

        state = open_objects.setdefault(obj, _OpenState())

        if seg_name == END_MARK:
            if timestamp is not None:
                raise ParseError("END 记录不能带时间戳", lineno, module="trajmodel")
            updates.append(Update(obj, -1, None, EventKind.END))
            del open_objects[obj]
            continue

        if seg_name == START_MARK:
            if timestamp is None:
                raise ParseError("START 记录必须带时间戳", lineno, module="trajmodel")
            if state.updates or state.start is not None:
                raise ValidationError(
                    f"第 {lineno} 行: 对象 {obj} 的 START 必须出现在轨迹的第一条更新之前", module="trajmodel"
                )
            state.start = timestamp
            state.last_time = timestamp
            updates.append(Update(obj, -1, timestamp, EventKind.START))
            continue

        seg = intern(seg_name, lineno)
        if timestamp is not None:
            if state.last_time is not None and timestamp <= state.last_time:
                raise ValidationError(
                    f"第 {lineno} 行: 对象 {obj} 的时间戳不是严格递增 ({timestamp} <= {state.last_time})",
                    module="trajmodel",
                )
            state.last_time = timestamp
        state.updates += 1
        updates.append(Update(obj, seg, timestamp))

    return TrajectoryStream(updates=updates, names=intern.table())


def read_stream(path: Path, net: Optional[RoadNetwork] = None) -> TrajectoryStream:
    return parse_stream(Path(path).read_text(encoding="utf-8"), net)


def _format_time(t: Optional[float]) -> str:
    return "" if t is None else repr(float(t))


def serialize_stream(stream: TrajectoryStream) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for u in stream.updates:
        if u.kind is EventKind.UPDATE:
            writer.writerow([u.object, stream.names[u.segment], _format_time(u.timestamp)])
        else:
            writer.writerow([u.object, u.kind.value, _format_time(u.timestamp)])
    return buf.getvalue()


def write_stream(stream: TrajectoryStream, path: Path) -> None:
    Path(path).write_text(serialize_stream(stream), encoding="utf-8")


def group_by_object(stream: TrajectoryStream) -> List[Trajectory]:
    """
    按对象聚合

    END 之后同一对象的新更新开启新的轨迹；输出按每条轨迹首次出现的顺序排列。
    """
    order: List[Tuple[str, int]] = []
    segs: Dict[Tuple[str, int], List[int]] = {}
    times: Dict[Tuple[str, int], List[Optional[float]]] = {}
    starts: Dict[Tuple[str, int], Optional[float]] = {}
    generation: Dict[str, int] = {}

    def key_for(obj: str) -> Tuple[str, int]:
        key = (obj, generation.setdefault(obj, 0))
        if key not in segs:
            order.append(key)
            segs[key] = []
            times[key] = []
            starts[key] = None
        return key

    for u in stream.updates:
        if u.kind is EventKind.END:
            if (u.object, generation.get(u.object, 0)) in segs:
                generation[u.object] = generation.get(u.object, 0) + 1
            continue
        key = key_for(u.object)
        if u.kind is EventKind.START:
            starts[key] = u.timestamp
        else:
            segs[key].append(u.segment)
            times[key].append(u.timestamp)

    return [
        Trajectory(key[0], tuple(segs[key]), tuple(times[key]), starts[key])
        for key in order
        if segs[key]
    ]


def stream_from_trajectories(trajectories: Sequence[Trajectory], names: Sequence[str]) -> TrajectoryStream:
    """按轨迹顺序拼成流（每条轨迹以 END 结束）"""
    updates: List[Update] = []
    for traj in trajectories:
        if traj.start_time is not None:
            updates.append(Update(traj.object, -1, traj.start_time, EventKind.START))
        updates.extend(Update(traj.object, s, t) for s, t in zip(traj.segments, traj.timestamps))
        updates.append(Update(traj.object, -1, None, EventKind.END))
    return TrajectoryStream(updates=updates, names=tuple(names))


def split_train_test(
    trajectories: Sequence[Trajectory],
    train_fraction: float,
    seed: int,
) -> Tuple[List[Trajectory], List[Trajectory]]:
    """按轨迹（不在轨迹内部）随机划分训练/测试集"""
    if not 0 < train_fraction < 1:
        raise ValidationError(f"train_fraction 必须在 (0, 1) 内: {train_fraction}", module="trajmodel")
    n = len(trajectories)
    if n < 2:
        raise ValidationError("至少需要 2 条轨迹才能划分", module="trajmodel")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = min(max(int(round(n * train_fraction)), 1), n - 1)
    train = [trajectories[i] for i in perm[:n_train]]
    test = [trajectories[i] for i in perm[n_train:]]
    return train, test
