#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
路网表示、PageRank 平稳分布与随机游走熵界

路网文件每行一个路段：``路段名,长度(米),后继1;后继2;...``，
``#`` 开头的行是注释。路段名可以包含逗号（按 CSV 规则加引号）。
"""
from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .errors import ConvergenceError, ParseError, ValidationError

logger = logging.getLogger(__name__)

SUCCESSOR_SEP = ";"


@dataclass(frozen=True, slots=True)
class SegmentRecord:
    id: int
    length: float
    name: str


class RoadNetwork:
    """
    有向路段图

    路段 id 是 0..|V|-1 的稠密整数；构造后不可变，可在多个进程间共享只读。
    """

    def __init__(self, segments: Sequence[SegmentRecord], adjacency: Sequence[Sequence[int]]) -> None:
        if len(segments) != len(adjacency):
            raise ValidationError("路段数与邻接表长度不一致", module="roadnet")
        n = len(segments)
        names: Dict[str, int] = {}
        for i, seg in enumerate(segments):
            if seg.id != i:
                raise ValidationError(f"路段 id 必须稠密连续: 期望 {i}，实际 {seg.id}", module="roadnet")
            if not (math.isfinite(seg.length) and seg.length > 0):
                raise ValidationError(f"路段 {seg.name} 长度必须为正: {seg.length}", module="roadnet")
            if SUCCESSOR_SEP in seg.name or not seg.name.strip():
                raise ValidationError(f"非法路段名: {seg.name!r}", module="roadnet")
            if seg.name in names:
                raise ValidationError(f"路段名重复: {seg.name}", module="roadnet")
            names[seg.name] = i

        adj: List[Tuple[int, ...]] = []
        reverse: List[List[int]] = [[] for _ in range(n)]
        for i, succs in enumerate(adjacency):
            row = tuple(int(j) for j in succs)
            if len(set(row)) != len(row):
                raise ValidationError(f"路段 {segments[i].name} 的后继重复", module="roadnet")
            for j in row:
                if not 0 <= j < n:
                    raise ValidationError(f"路段 {segments[i].name} 引用了不存在的后继 id {j}", module="roadnet")
                reverse[j].append(i)
            adj.append(row)

        self._segments = tuple(segments)
        self._adjacency = tuple(adj)
        self._reverse = tuple(tuple(r) for r in reverse)
        self._ids = names
        lengths = np.array([s.length for s in segments], dtype=np.float64)
        lengths.setflags(write=False)
        self._lengths = lengths

    # ---------- 访问 ----------
    def __len__(self) -> int:
        return len(self._segments)

    @property
    def segments(self) -> Tuple[SegmentRecord, ...]:
        return self._segments

    @property
    def adjacency(self) -> Tuple[Tuple[int, ...], ...]:
        return self._adjacency

    @property
    def reverse_adjacency(self) -> Tuple[Tuple[int, ...], ...]:
        return self._reverse

    @property
    def lengths(self) -> np.ndarray:
        """按 id 排列的路段长度（只读）"""
        return self._lengths

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(s.name for s in self._segments)

    def out_degree(self, seg: int) -> int:
        return len(self._adjacency[seg])

    def has_segment(self, name: str) -> bool:
        return name in self._ids

    def id_of(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise ValidationError(f"未知路段: {name}", module="roadnet") from None

    def name_of(self, seg: int) -> str:
        return self._segments[seg].name

    # ---------- 构造 ----------
    @classmethod
    def from_records(cls, records: Iterable[Tuple[str, float, Sequence[str]]]) -> "RoadNetwork":
        """从 (名称, 长度, 后继名称列表) 构造，后继可以引用后面才声明的路段"""
        records = list(records)
        ids = {}
        for i, (name, _, _) in enumerate(records):
            if name in ids:
                raise ValidationError(f"路段名重复: {name}", module="roadnet")
            ids[name] = i
        segments = [SegmentRecord(i, float(length), name) for i, (name, length, _) in enumerate(records)]
        adjacency = []
        for name, _, succs in records:
            row = []
            for s in succs:
                if s not in ids:
                    raise ValidationError(f"路段 {name} 的后继 {s} 未声明", module="roadnet")
                row.append(ids[s])
            adjacency.append(row)
        return cls(segments, adjacency)

    # ---------- 序列化 ----------
    def to_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for seg, succs in zip(self._segments, self._adjacency):
            writer.writerow([seg.name, repr(seg.length), SUCCESSOR_SEP.join(self.name_of(j) for j in succs)])
        return buf.getvalue()

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def load_network(source: str) -> RoadNetwork:
    """解析路网文件内容"""
    records: List[Tuple[str, float, List[str]]] = []
    lines: List[int] = []
    for lineno, line in enumerate(source.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            row = next(csv.reader([line]))
        except csv.Error as e:
            raise ParseError(str(e), lineno, module="roadnet") from e
        if len(row) != 3:
            raise ParseError(f"应有 3 个字段，实际 {len(row)} 个", lineno, module="roadnet")
        name, length_text, succ_text = row
        try:
            length = float(length_text)
        except ValueError:
            raise ParseError(f"长度不是数字: {length_text!r}", lineno, module="roadnet") from None
        if not (math.isfinite(length) and length > 0):
            raise ValidationError(f"第 {lineno} 行: 路段 {name} 长度必须为正", module="roadnet")
        succs = [s for s in succ_text.split(SUCCESSOR_SEP) if s] if succ_text else []
        records.append((name, length, succs))
        lines.append(lineno)

    declared = {name for name, _, _ in records}
    for (name, _, succs), lineno in zip(records, lines):
        for s in succs:
            if s not in declared:
                raise ValidationError(f"第 {lineno} 行: 路段 {name} 引用了未声明的路段 {s}", module="roadnet")

    net = RoadNetwork.from_records(records)
    logger.debug("载入路网: %d 个路段", len(net))
    return net


def read_network(path: Path) -> RoadNetwork:
    return load_network(Path(path).read_text(encoding="utf-8"))


def write_network(net: RoadNetwork, path: Path) -> None:
    Path(path).write_text(net.to_text(), encoding="utf-8")


# ---------- PageRank ----------

@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    damping: float
    iterations: int
    residual: float


def transition_matrix(net: RoadNetwork) -> sparse.csr_matrix:
    """列随机矩阵 M，M[j, i] = 1/deg(i)；悬挂路段对应的列为 0"""
    n = len(net)
    rows, cols, vals = [], [], []
    for i, succs in enumerate(net.adjacency):
        if succs:
            w = 1.0 / len(succs)
            for j in succs:
                rows.append(j)
                cols.append(i)
                vals.append(w)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=np.float64)


def pagerank(
    net: RoadNetwork,
    damping: float = 0.85,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> StationaryDistribution:
    """
    幂迭代求平稳分布

    悬挂路段的质量均匀分给所有路段，跳转也是均匀的。
    """
    n = len(net)
    if n == 0:
        raise ValidationError("空路网没有平稳分布", module="roadnet")
    if not 0 < damping <= 1:
        raise ValidationError(f"damping 必须在 (0, 1] 内: {damping}", module="roadnet")
    if tol <= 0:
        raise ValidationError(f"tol 必须为正: {tol}", module="roadnet")

    m = transition_matrix(net)
    dangling = np.array([net.out_degree(i) == 0 for i in range(n)])
    pi = np.full(n, 1.0 / n)
    residual = math.inf
    for iteration in range(1, max_iter + 1):
        spread = pi[dangling].sum() / n
        nxt = damping * (m @ pi + spread) + (1.0 - damping) / n
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt
        if residual < tol:
            break
    else:
        raise ConvergenceError(
            f"PageRank 在 {max_iter} 次迭代后残差仍为 {residual:.3e}", module="roadnet"
        )

    pi = pi / pi.sum()
    pi.setflags(write=False)
    logger.debug("PageRank 收敛: %d 次迭代，残差 %.3e", iteration, residual)
    return StationaryDistribution(pi=pi, damping=damping, iterations=iteration, residual=residual)


def effective_out_degree(net: RoadNetwork) -> np.ndarray:
    n = len(net)
    deg = np.array([net.out_degree(i) for i in range(n)], dtype=np.float64)
    deg[deg == 0] = n
    return deg


def network_entropy(net: RoadNetwork, pi: StationaryDistribution) -> float:
    """h = 1 − Σ π(s)/deg(s)；悬挂路段的有效出度取 |V|"""
    if len(pi.pi) != len(net):
        raise ValidationError("平稳分布与路网大小不一致", module="roadnet")
    deg = effective_out_degree(net)
    # Σπ(1 − 1/deg) / Σπ，出度为 1 的项恰好为 0
    miss = math.fsum(pi.pi * (1.0 - 1.0 / deg))
    return miss / math.fsum(pi.pi)


def summarize(pi: StationaryDistribution, net: RoadNetwork, top: Optional[int] = 5) -> List[Tuple[str, float]]:
    """按概率降序返回前 top 个路段"""
    order = np.argsort(-pi.pi, kind="stable")
    if top:
        order = order[:top]
    return [(net.name_of(int(i)), float(pi.pi[i])) for i in order]
