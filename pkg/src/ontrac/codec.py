#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
空间 + 时间压缩后的轨迹，以及 .tc 文本格式

    object_id,S,position,segment_name
    object_id,T,d_meters,t_seconds,position
    object_id,END,length
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CorruptionError, ParseError
from .roadnet import RoadNetwork
from .spatial import CompressedSpatial, SpatialCompressor, SpatialModel, spatial_decompress
from .ttcomp import Anchor, CompressedTemporal, TemporalCompressor, recover_exit_times
from .trajmodel import Trajectory
from .ttqp import TravelTimeModel


@dataclass(frozen=True)
class CompressedTrajectory:
    object: str
    length: int
    spatial: CompressedSpatial
    temporal: CompressedTemporal

    @property
    def kept_count(self) -> int:
        return len(self.spatial.kept) + len(self.temporal.kept)


@dataclass(frozen=True)
class RecoveredTrajectory:
    object: str
    segments: Tuple[int, ...]
    start_time: float
    exit_times: np.ndarray


class TrajectoryCompressor:
    """单个对象的在线压缩器：每推入一个更新，立即返回需要写入的记录"""

    def __init__(
        self,
        object_id: str,
        spatial_model: SpatialModel,
        tt_model: TravelTimeModel,
        net: RoadNetwork,
        lam: float,
        start_time: Optional[float] = None,
    ) -> None:
        self.object = object_id
        self.spatial = SpatialCompressor(spatial_model)
        self.temporal = TemporalCompressor(tt_model, net.lengths, lam, object_id, start_time)
        self.kept_spatial: List[Tuple[int, int]] = []
        self.length = 0

    @property
    def initial_anchor(self) -> Optional[Anchor]:
        """START 给出的锚点（构造时即已保留）"""
        return self.temporal.kept[0] if self.temporal.kept else None

    def push(self, seg: int, timestamp: Optional[float]) -> Tuple[Optional[Tuple[int, int]], Optional[Anchor]]:
        kept = self.spatial.push(seg)
        anchor = self.temporal.push(seg, timestamp)
        if kept is not None:
            self.kept_spatial.append(kept)
        self.length += 1
        return kept, anchor

    def result(self) -> CompressedTrajectory:
        return CompressedTrajectory(
            self.object,
            self.length,
            CompressedSpatial(self.object, tuple(self.kept_spatial)),
            self.temporal.result(),
        )


def compress_trajectory(
    traj: Trajectory,
    spatial_model: SpatialModel,
    tt_model: TravelTimeModel,
    net: RoadNetwork,
    lam: float,
) -> CompressedTrajectory:
    comp = TrajectoryCompressor(traj.object, spatial_model, tt_model, net, lam, traj.start_time)
    for seg, t in zip(traj.segments, traj.timestamps):
        comp.push(seg, t)
    return comp.result()


def decompress_trajectory(
    comp: CompressedTrajectory,
    spatial_model: SpatialModel,
    tt_model: TravelTimeModel,
    net: RoadNetwork,
) -> RecoveredTrajectory:
    """完整还原路段序列和每个路段的离开时刻"""
    segments = spatial_decompress(spatial_model, comp.spatial, comp.length)
    start, exits = recover_exit_times(tt_model, comp.temporal, segments, net)
    return RecoveredTrajectory(comp.object, tuple(segments), start, exits)


# ---------- .tc 文件 ----------

def dump_compressed(comps: Sequence[CompressedTrajectory], net: RoadNetwork) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for comp in comps:
        spatial = iter(comp.spatial.kept)
        nxt = next(spatial, None)
        # 按位置交错写出 S 与 T 记录，与在线写入顺序一致
        for a in comp.temporal.kept:
            while nxt is not None and nxt[0] < a.position:
                writer.writerow([comp.object, "S", nxt[0], net.name_of(nxt[1])])
                nxt = next(spatial, None)
            writer.writerow([comp.object, "T", repr(a.distance), repr(a.time), a.position])
        while nxt is not None:
            writer.writerow([comp.object, "S", nxt[0], net.name_of(nxt[1])])
            nxt = next(spatial, None)
        writer.writerow([comp.object, "END", comp.length])
    return buf.getvalue()


def load_compressed(source: str, net: RoadNetwork) -> List[CompressedTrajectory]:
    out: List[CompressedTrajectory] = []
    spatial: Dict[str, List[Tuple[int, int]]] = {}
    temporal: Dict[str, List[Anchor]] = {}
    reader = csv.reader(io.StringIO(source))
    for lineno, row in enumerate(reader, start=1):
        if not row:
            continue
        obj, kind = row[0], row[1] if len(row) > 1 else ""
        try:
            if kind == "S" and len(row) == 4:
                spatial.setdefault(obj, []).append((int(row[2]), net.id_of(row[3])))
            elif kind == "T" and len(row) == 5:
                temporal.setdefault(obj, []).append(Anchor(float(row[2]), float(row[3]), int(row[4])))
            elif kind == "END" and len(row) == 3:
                out.append(
                    CompressedTrajectory(
                        obj,
                        int(row[2]),
                        CompressedSpatial(obj, tuple(sorted(spatial.pop(obj, [])))),
                        CompressedTemporal(obj, tuple(temporal.pop(obj, []))),
                    )
                )
            else:
                raise ParseError(f"无法识别的记录: {row}", lineno, module="codec")
        except ValueError:
            raise ParseError(f"数值字段格式错误: {row}", lineno, module="codec") from None
    dangling = set(spatial) | set(temporal)
    if dangling:
        raise CorruptionError(f"以下对象缺少 END 记录: {', '.join(sorted(dangling))}", module="codec")
    return out


def read_compressed(path: Path, net: RoadNetwork) -> List[CompressedTrajectory]:
    return load_compressed(Path(path).read_text(encoding="utf-8"), net)


def write_compressed(comps: Sequence[CompressedTrajectory], net: RoadNetwork, path: Path) -> None:
    Path(path).write_text(dump_compressed(comps, net), encoding="utf-8")
