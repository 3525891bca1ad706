#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
k 阶 Markov trie 空间预测器

训练时对每个位置 i，把上下文 s_{i-1}, s_{i-2}, ..., s_{i-k}（逆序）作为 trie 路径，
路径上每个节点都对实际的下一个路段 s_i 计数；预测时沿最长匹配后缀走到最深的节点，
返回该节点计数最多的路段（并列取 id 最小者）。
"""
from __future__ import annotations

import csv
import io
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Deque, Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

from .errors import CorruptionError, ParseError, ValidationError
from .roadnet import RoadNetwork
from .trajmodel import Trajectory

logger = logging.getLogger(__name__)

NONE: Optional[int] = None


class TrieNode:
    __slots__ = ("children", "count", "pred")

    def __init__(self) -> None:
        self.children: Dict[int, TrieNode] = {}
        self.count: Dict[int, int] = {}
        self.pred: Optional[int] = NONE

    def observe(self, nxt: int) -> None:
        c = self.count.get(nxt, 0) + 1
        self.count[nxt] = c
        pred = self.pred
        if pred is None or c > self.count[pred] or (c == self.count[pred] and nxt < pred):
            self.pred = nxt


@dataclass
class SpatialModel:
    order: int
    root: TrieNode = field(default_factory=TrieNode)
    trained_update_count: int = 0

    def predict(self, context: Sequence[int]) -> Optional[int]:
        return predict_next(self, context)

    def nodes(self) -> Iterator[Tuple[Tuple[int, ...], TrieNode]]:
        """深度优先遍历（子节点按 id 排序），产出 (逆序路径, 节点)"""
        stack: List[Tuple[Tuple[int, ...], TrieNode]] = [((), self.root)]
        while stack:
            path, node = stack.pop()
            yield path, node
            for seg in sorted(node.children, reverse=True):
                stack.append((path + (seg,), node.children[seg]))


@dataclass(frozen=True)
class CompressedSpatial:
    object: str
    kept: Tuple[Tuple[int, int], ...]

    @property
    def positions(self) -> List[int]:
        return [p for p, _ in self.kept]


def spatial_training(net: RoadNetwork, train: Sequence[Trajectory], k: int) -> SpatialModel:
    """对每个训练窗口更新后缀计数和 pred"""
    if k < 1:
        raise ValidationError(f"阶数 k 必须 >= 1: {k}", module="spatial")
    if not train:
        raise ValidationError("训练集为空", module="spatial")
    n = len(net)
    model = SpatialModel(order=k)
    root = model.root
    for traj in train:
        segs = traj.segments
        for s in segs:
            if not 0 <= s < n:
                raise ValidationError(f"轨迹 {traj.object} 引用了未知路段 id {s}", module="spatial")
        for i in range(1, len(segs)):
            nxt = segs[i]
            node = root
            for d in range(1, min(k, i) + 1):
                ctx = segs[i - d]
                child = node.children.get(ctx)
                if child is None:
                    child = node.children[ctx] = TrieNode()
                child.observe(nxt)
                node = child
            model.trained_update_count += 1
    logger.debug("空间模型训练完成: k=%d, %d 个 (上下文, 下一路段) 对", k, model.trained_update_count)
    return model


def _deepest(model: SpatialModel, context: Sequence[int]) -> Tuple[Optional[TrieNode], int]:
    """沿逆序上下文走到最深的已存在节点，返回 (节点, 匹配深度)"""
    node = model.root
    found: Optional[TrieNode] = None
    depth = 0
    limit = min(model.order, len(context))
    for d in range(1, limit + 1):
        child = node.children.get(context[-d])
        if child is None:
            break
        node = found = child
        depth = d
    return found, depth


def predict_next(model: SpatialModel, context: Sequence[int]) -> Optional[int]:
    node, _ = _deepest(model, context)
    return node.pred if node is not None else NONE


def candidate_predictions(model: SpatialModel, known: Sequence[int], history_unknown: bool) -> Set[Optional[int]]:
    """
    已知上下文之前的路段未知时，所有可能的预测值

    只有当已知部分全部匹配、长度不足 k 且确实还有未知历史时才会出现多个候选；
    候选数达到 2 即停止。
    """
    node, depth = _deepest(model, known)
    base = node.pred if node is not None else NONE
    if not history_unknown or depth < len(known) or depth >= model.order:
        return {base}
    if node is None:
        # 已知上下文为空
        node = model.root
    candidates: Set[Optional[int]] = {base} if node is not model.root else set()
    stack = [(child, depth + 1) for child in node.children.values()]
    while stack:
        cur, d = stack.pop()
        candidates.add(cur.pred)
        if len(candidates) > 1:
            return candidates
        if d < model.order:
            stack.extend((child, d + 1) for child in cur.children.values())
    if node is model.root:
        # 未知路段也可能不在 trie 中
        candidates.add(NONE)
    return candidates


class SpatialCompressor:
    """在线空间压缩：逐个推入路段，返回需要保留的 (位置, 路段) 或 None"""

    def __init__(self, model: SpatialModel) -> None:
        self.model = model
        self.context: Deque[int] = deque(maxlen=model.order)
        self.position = 0

    def push(self, seg: int) -> Optional[Tuple[int, int]]:
        pos = self.position
        self.position += 1
        kept: Optional[Tuple[int, int]] = None
        if pos == 0 or predict_next(self.model, self.context) != seg:
            kept = (pos, seg)
        self.context.append(seg)
        return kept


def spatial_compress(model: SpatialModel, traj: Trajectory) -> CompressedSpatial:
    if not traj.segments:
        raise ValidationError(f"轨迹 {traj.object} 为空", module="spatial")
    comp = SpatialCompressor(model)
    kept = [entry for entry in map(comp.push, traj.segments) if entry is not None]
    return CompressedSpatial(traj.object, tuple(kept))


def spatial_decompress(model: SpatialModel, comp: CompressedSpatial, original_length: int) -> List[int]:
    if original_length < len(comp.kept):
        raise CorruptionError(
            f"{comp.object}: 原始长度 {original_length} 小于保留条目数 {len(comp.kept)}", module="spatial"
        )
    stored = dict(comp.kept)
    if len(stored) != len(comp.kept) or (comp.kept and max(stored) >= original_length):
        raise CorruptionError(f"{comp.object}: 保留位置非法", module="spatial")
    out: List[int] = []
    k = model.order
    for pos in range(original_length):
        seg = stored.get(pos)
        if seg is None:
            seg = predict_next(model, out[-k:] if k < len(out) else out)
            if seg is None:
                raise CorruptionError(f"{comp.object}: 位置 {pos} 被省略但模型无法预测", module="spatial")
        out.append(seg)
    return out


def empirical_block_entropy(model: SpatialModel, test: Sequence[Trajectory], k: Optional[int] = None) -> float:
    """(位置 >= 1 中预测失败的更新数) / (位置 >= 1 的更新数)"""
    if not test:
        raise ValidationError("测试集为空", module="spatial")
    if k is not None and k != model.order:
        logger.warning("empirical_block_entropy: k=%d 与模型阶数 %d 不同，按模型阶数计算", k, model.order)
    total = 0
    missed = 0
    for traj in test:
        comp = spatial_compress(model, traj)
        total += len(traj) - 1
        missed += len(comp.kept) - 1
    if total == 0:
        raise ValidationError("测试轨迹长度都为 1，没有可预测的位置", module="spatial")
    return missed / total


def compression_ratio(total_updates: int, kept_updates: int) -> float:
    return total_updates / kept_updates if kept_updates else float("inf")


# ---------- 序列化 ----------

def _join_path(net: RoadNetwork, path: Iterable[int]) -> str:
    return ";".join(net.name_of(s) for s in path)


def dump_spatial_model(model: SpatialModel, net: RoadNetwork) -> str:
    """
    平铺记录：首行 ``order,k,trained_update_count``，
    之后每个节点一行 ``逆序路径, 计数表, pred``，按排序后的深度优先顺序输出。
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["order", model.order, model.trained_update_count])
    for path, node in model.nodes():
        if not path:
            continue
        counts = ";".join(f"{net.name_of(s)}={c}" for s, c in sorted(node.count.items()))
        pred = net.name_of(node.pred) if node.pred is not None else ""
        writer.writerow([_join_path(net, path), counts, pred])
    return buf.getvalue()


def load_spatial_model(source: str, net: RoadNetwork) -> SpatialModel:
    reader = csv.reader(io.StringIO(source))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("空间模型文件为空", 1, module="spatial") from None
    if len(header) != 3 or header[0] != "order":
        raise ParseError("缺少 order 头", 1, module="spatial")
    try:
        model = SpatialModel(order=int(header[1]), trained_update_count=int(header[2]))
    except ValueError:
        raise ParseError("order 头不是整数", 1, module="spatial") from None

    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"应有 3 个字段，实际 {len(row)} 个", lineno, module="spatial")
        path_text, counts_text, pred_text = row
        node = model.root
        path = [net.id_of(name) for name in path_text.split(";")]
        if len(path) > model.order:
            raise ParseError(f"路径深度 {len(path)} 超过阶数", lineno, module="spatial")
        for seg in path:
            node = node.children.setdefault(seg, TrieNode())
        for item in counts_text.split(";") if counts_text else []:
            name, _, cnt = item.rpartition("=")
            try:
                node.count[net.id_of(name)] = int(cnt)
            except ValueError:
                raise ParseError(f"计数不是整数: {item!r}", lineno, module="spatial") from None
        node.pred = net.id_of(pred_text) if pred_text else NONE
        # pred 必须是计数最大的后继，并列取最小 id
        best = min(node.count, key=lambda s: (-node.count[s], s)) if node.count else NONE
        if node.pred != best:
            raise ParseError(f"pred {pred_text!r} 与计数表不一致", lineno, module="spatial")
    return model


def read_spatial_model(path: Path, net: RoadNetwork) -> SpatialModel:
    return load_spatial_model(Path(path).read_text(encoding="utf-8"), net)


def write_spatial_model(model: SpatialModel, net: RoadNetwork, path: Path) -> None:
    Path(path).write_text(dump_spatial_model(model, net), encoding="utf-8")
