#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
追加式轨迹存储与吞吐量基准

存储目录结构：
    data.log       长度前缀记录  u32 length | u8 kind | payload（小端）
    manifest.toml  格式版本、模式、λ、模型与路网的 SHA-256
    network.net / model.sp / model.tt  写入时使用的路网与模型副本

记录类型：S 空间保留、T 时间锚点、U 原始更新（FULL 模式）、B 起点、E 轨迹结束。
"""
from __future__ import annotations

import csv
import datetime
import hashlib
import io
import logging
import mmap
import os
import shutil
import struct
import sys
import time
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from send2trash import send2trash

from .codec import CompressedTrajectory, TrajectoryCompressor, decompress_trajectory
from .errors import (
    CorruptionError,
    ManifestError,
    NotFoundError,
    OntracError,
    OutOfRangeError,
    StoreWriteError,
    ValidationError,
)
from .query import Decompression, fill_missing_times, where_query
from .roadnet import RoadNetwork, load_network
from .spatial import CompressedSpatial, SpatialModel, dump_spatial_model, load_spatial_model
from .trajmodel import EventKind, Trajectory, TrajectoryStream, Update
from .ttcomp import Anchor, CompressedTemporal
from .ttqp import TravelTimeModel, dump_travel_time_model, load_travel_time_model

# 根据 Python 版本导入 tomllib 或 tomli
if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DATA_FILE = "data.log"
MANIFEST_FILE = "manifest.toml"
NETWORK_FILE = "network.net"
SPATIAL_FILE = "model.sp"
TEMPORAL_FILE = "model.tt"

HEADER = struct.Struct("<IB")
OBJECT_LEN = struct.Struct("<H")
BODIES = {
    ord("S"): struct.Struct("<II"),   # position, segment
    ord("T"): struct.Struct("<ddI"),  # distance, time, position
    ord("U"): struct.Struct("<Id"),   # segment, timestamp（NaN 表示缺失）
    ord("B"): struct.Struct("<d"),    # start time
    ord("E"): struct.Struct("<I"),    # original length
}
KIND_S, KIND_T, KIND_U, KIND_B, KIND_E = (ord(c) for c in "STUBE")


class StoreMode(str, Enum):
    FULL = "full"
    COMPRESSED = "compressed"


class SyncMode(str, Enum):
    NONE = "none"
    FLUSH = "flush"
    FSYNC = "fsync"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------- 记录编解码 ----------

def encode_record(kind: int, obj: str, *values) -> bytes:
    name = obj.encode("utf-8")
    payload = OBJECT_LEN.pack(len(name)) + name + BODIES[kind].pack(*values)
    return HEADER.pack(len(payload), kind) + payload


def decode_payload(kind: int, payload: bytes) -> Tuple[str, tuple]:
    (n,) = OBJECT_LEN.unpack_from(payload, 0)
    obj = payload[OBJECT_LEN.size:OBJECT_LEN.size + n].decode("utf-8")
    body = BODIES.get(kind)
    if body is None:
        raise CorruptionError(f"未知记录类型 {kind}", module="store")
    return obj, body.unpack_from(payload, OBJECT_LEN.size + n)


def scan_log(buf) -> Tuple[List[Tuple[int, str]], int]:
    """
    扫描整个日志，返回 ([(偏移, 对象)], 有效长度)

    末尾不完整的记录被跳过；有效长度之后的字节属于被截断的记录。
    """
    entries: List[Tuple[int, str]] = []
    offset = 0
    size = len(buf)
    while offset + HEADER.size <= size:
        length, kind = HEADER.unpack_from(buf, offset)
        end = offset + HEADER.size + length
        if end > size:
            break
        obj, _ = decode_payload(kind, bytes(buf[offset + HEADER.size:end]))
        entries.append((offset, obj))
        offset = end
    return entries, offset


# ---------- 清单 ----------

@dataclass(frozen=True)
class StoreManifest:
    mode: StoreMode
    lam: float
    network_sha256: str
    spatial_sha256: str = ""
    temporal_sha256: str = ""
    format_version: int = FORMAT_VERSION
    created_at: str = ""

    def same_content(self, other: "StoreManifest") -> bool:
        return (
            self.mode == other.mode
            and self.lam == other.lam
            and self.network_sha256 == other.network_sha256
            and self.spatial_sha256 == other.spatial_sha256
            and self.temporal_sha256 == other.temporal_sha256
            and self.format_version == other.format_version
        )

    def dump(self) -> str:
        lines = [
            "# ontrac 存储清单（自动生成）",
            f"format_version = {self.format_version}",
            f'mode = "{self.mode.value}"',
            f"lambda = {self.lam!r}",
            f'network_sha256 = "{self.network_sha256}"',
            f'spatial_sha256 = "{self.spatial_sha256}"',
            f'temporal_sha256 = "{self.temporal_sha256}"',
            f'created_at = "{self.created_at}"',
        ]
        return "\n".join(lines) + "\n"

    def save(self, path: Path) -> None:
        tmp = path.with_suffix(".toml.tmp")
        tmp.write_text(self.dump(), encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, path: Path) -> "StoreManifest":
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
            manifest = cls(
                mode=StoreMode(data["mode"]),
                lam=float(data["lambda"]),
                network_sha256=data["network_sha256"],
                spatial_sha256=data.get("spatial_sha256", ""),
                temporal_sha256=data.get("temporal_sha256", ""),
                format_version=int(data["format_version"]),
                created_at=data.get("created_at", ""),
            )
        except (OSError, KeyError, ValueError, tomllib.TOMLDecodeError) as e:
            raise ManifestError(f"无法读取清单 {path}: {e}") from e
        if manifest.format_version != FORMAT_VERSION:
            raise ManifestError(f"不支持的存储格式版本 {manifest.format_version}")
        return manifest


# ---------- 存储 ----------

def _load_store_dir(
    root: Path,
) -> Tuple[StoreManifest, RoadNetwork, Optional[SpatialModel], Optional[TravelTimeModel]]:
    manifest_path = root / MANIFEST_FILE
    if not manifest_path.exists():
        raise ManifestError(f"{root} 不是 ontrac 存储（缺少 {MANIFEST_FILE}）")
    manifest = StoreManifest.load(manifest_path)

    def checked(name: str, expected: str) -> Optional[str]:
        path = root / name
        if not expected:
            return None
        if not path.exists():
            raise ManifestError(f"缺少模型文件 {path}")
        text = path.read_text(encoding="utf-8")
        if sha256_text(text) != expected:
            raise ManifestError(f"{path} 的哈希与清单不一致")
        return text

    network = load_network(checked(NETWORK_FILE, manifest.network_sha256) or "")
    sp_text = checked(SPATIAL_FILE, manifest.spatial_sha256)
    tt_text = checked(TEMPORAL_FILE, manifest.temporal_sha256)
    spatial_model = load_spatial_model(sp_text, network) if sp_text else None
    tt_model = load_travel_time_model(tt_text, network) if tt_text else None
    return manifest, network, spatial_model, tt_model


class TrajectoryStore:
    """
    单写者存储

    COMPRESSED 模式对每个对象维护一个在线压缩器，只写保留的记录；
    FULL 模式写下每个更新。close() 会为仍未结束的轨迹写 END。
    """

    def __init__(
        self,
        root: Path,
        manifest: StoreManifest,
        network: RoadNetwork,
        spatial_model: Optional[SpatialModel],
        tt_model: Optional[TravelTimeModel],
        sync: SyncMode = SyncMode.FSYNC,
    ) -> None:
        self.root = Path(root)
        self.manifest = manifest
        self.network = network
        self.spatial_model = spatial_model
        self.tt_model = tt_model
        self.sync = SyncMode(sync)
        self._index: Dict[str, List[int]] = {}
        self._compressors: Dict[str, TrajectoryCompressor] = {}
        self._starts: Dict[str, float] = {}
        self._lengths: Dict[str, int] = {}
        self.updates_written = 0
        self.records_written = 0

        path = self.root / DATA_FILE
        path.touch(exist_ok=True)
        with open(path, "rb") as f:
            data = f.read()
        entries, valid = scan_log(data)
        if valid < len(data):
            logger.warning("%s: 末尾有 %d 字节的截断记录，已跳过", path, len(data) - valid)
        for offset, obj in entries:
            self._index.setdefault(obj, []).append(offset)
        self._fh = open(path, "r+b")
        self._fh.truncate(valid)
        self._fh.seek(valid)
        self._offset = valid

    @property
    def mode(self) -> StoreMode:
        return self.manifest.mode

    @property
    def lam(self) -> float:
        return self.manifest.lam

    # ---------- 创建 / 打开 ----------
    @classmethod
    def create(
        cls,
        root: Path,
        network: RoadNetwork,
        mode: StoreMode,
        lam: float = 0.0,
        spatial_model: Optional[SpatialModel] = None,
        tt_model: Optional[TravelTimeModel] = None,
        sync: SyncMode = SyncMode.FSYNC,
        fresh: bool = False,
        use_recycle_bin: bool = False,
    ) -> "TrajectoryStore":
        """创建存储；目录已有同一清单时继续追加，清单不同则报错"""
        root = Path(root)
        mode = StoreMode(mode)
        if mode is StoreMode.COMPRESSED and (spatial_model is None or tt_model is None):
            raise ManifestError("COMPRESSED 模式需要空间模型和时间模型")
        if fresh and root.exists():
            reset_store(root, use_recycle_bin)

        net_text = network.to_text()
        sp_text = dump_spatial_model(spatial_model, network) if spatial_model is not None else ""
        tt_text = dump_travel_time_model(tt_model, network) if tt_model is not None else ""
        manifest = StoreManifest(
            mode=mode,
            lam=float(lam) if mode is StoreMode.COMPRESSED else 0.0,
            network_sha256=sha256_text(net_text),
            spatial_sha256=sha256_text(sp_text) if sp_text else "",
            temporal_sha256=sha256_text(tt_text) if tt_text else "",
            created_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        )

        manifest_path = root / MANIFEST_FILE
        if manifest_path.exists():
            existing = StoreManifest.load(manifest_path)
            if not existing.same_content(manifest):
                raise ManifestError(f"{root} 中已有不同配置的存储（模式/λ/模型不一致）")
            return cls(root, existing, network, spatial_model, tt_model, sync)

        root.mkdir(parents=True, exist_ok=True)
        (root / NETWORK_FILE).write_text(net_text, encoding="utf-8")
        if sp_text:
            (root / SPATIAL_FILE).write_text(sp_text, encoding="utf-8")
        if tt_text:
            (root / TEMPORAL_FILE).write_text(tt_text, encoding="utf-8")
        manifest.save(manifest_path)
        return cls(root, manifest, network, spatial_model, tt_model, sync)

    @classmethod
    def open(cls, root: Path, sync: SyncMode = SyncMode.FSYNC) -> "TrajectoryStore":
        """打开已有存储继续追加，校验模型文件哈希"""
        root = Path(root)
        manifest, network, spatial_model, tt_model = _load_store_dir(root)
        return cls(root, manifest, network, spatial_model, tt_model, sync)

    # ---------- 写入 ----------
    def _write(self, kind: int, obj: str, *values) -> None:
        record = encode_record(kind, obj, *values)
        try:
            self._fh.write(record)
            if self.sync is not SyncMode.NONE:
                self._fh.flush()
            if self.sync is SyncMode.FSYNC:
                os.fsync(self._fh.fileno())
        except OSError as e:
            raise StoreWriteError(
                f"写入 {self.root / DATA_FILE} 失败（已写入 {self.records_written} 条记录，"
                f"日志末尾可能有截断记录，重新打开时会被跳过）: {e}"
            ) from e
        self._index.setdefault(obj, []).append(self._offset)
        self._offset += len(record)
        self.records_written += 1

    def insert(self, update: Update) -> int:
        """插入一条流记录，返回写入的更新数（S/T 或 U）"""
        before = self.updates_written
        if self.mode is StoreMode.COMPRESSED:
            self._insert_compressed(update)
        else:
            self._insert_full(update)
        return self.updates_written - before

    def _insert_compressed(self, update: Update) -> None:
        obj = update.object
        if update.kind is EventKind.START:
            if obj in self._compressors:
                raise ValidationError(f"对象 {obj} 的 START 出现在轨迹中途", module="store")
            comp = self._compressors[obj] = TrajectoryCompressor(
                obj, self.spatial_model, self.tt_model, self.network, self.lam, update.timestamp
            )
            a = comp.initial_anchor
            self._write(KIND_T, obj, a.distance, a.time, a.position)
            self.updates_written += 1
        elif update.kind is EventKind.END:
            comp = self._compressors.pop(obj, None)
            if comp is not None:
                self._write(KIND_E, obj, comp.length)
        else:
            comp = self._compressors.get(obj)
            if comp is None:
                comp = self._compressors[obj] = TrajectoryCompressor(
                    obj, self.spatial_model, self.tt_model, self.network, self.lam
                )
            kept, anchor = comp.push(update.segment, update.timestamp)
            if kept is not None:
                self._write(KIND_S, obj, kept[0], kept[1])
                self.updates_written += 1
            if anchor is not None:
                self._write(KIND_T, obj, anchor.distance, anchor.time, anchor.position)
                self.updates_written += 1

    def _insert_full(self, update: Update) -> None:
        obj = update.object
        if update.kind is EventKind.START:
            self._write(KIND_B, obj, update.timestamp)
            self._lengths[obj] = 0
        elif update.kind is EventKind.END:
            n = self._lengths.pop(obj, None)
            if n is not None:
                self._write(KIND_E, obj, n)
        else:
            ts = float("nan") if update.timestamp is None else update.timestamp
            self._write(KIND_U, obj, update.segment, ts)
            self._lengths[obj] = self._lengths.get(obj, 0) + 1
            self.updates_written += 1

    def close_open_trajectories(self) -> None:
        for obj in list(self._compressors) + list(self._lengths):
            self.insert(Update(obj, -1, None, EventKind.END))

    def close(self) -> None:
        if self._fh.closed:
            return
        self.close_open_trajectories()
        self._fh.flush()
        if self.sync is SyncMode.FSYNC:
            os.fsync(self._fh.fileno())
        self._fh.close()

    def __enter__(self) -> "TrajectoryStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def bytes_on_disk(self) -> int:
        return self._offset

    # ---------- 读取 ----------
    def snapshot(self) -> "StoreSnapshot":
        if not self._fh.closed:
            self._fh.flush()
        index = {obj: list(offsets) for obj, offsets in self._index.items()}
        return StoreSnapshot(self.root / DATA_FILE, self._offset, index, self.mode, self.network,
                             self.spatial_model, self.tt_model, self.lam)


class StoreSnapshot:
    """只读视图：索引在创建时复制，之后的写入不可见"""

    def __init__(
        self,
        path: Path,
        size: int,
        index: Dict[str, List[int]],
        mode: StoreMode,
        network: RoadNetwork,
        spatial_model: Optional[SpatialModel],
        tt_model: Optional[TravelTimeModel],
        lam: float,
    ) -> None:
        self.path = path
        self.size = size
        self.index = index
        self.mode = mode
        self.network = network
        self.spatial_model = spatial_model
        self.tt_model = tt_model
        self.lam = lam
        self._fh = open(path, "rb")
        self._buf = mmap.mmap(self._fh.fileno(), size, access=mmap.ACCESS_READ) if size else b""

    def close(self) -> None:
        if isinstance(self._buf, mmap.mmap):
            self._buf.close()
        self._fh.close()

    def __enter__(self) -> "StoreSnapshot":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def compressed(self) -> bool:
        return self.mode is StoreMode.COMPRESSED

    def objects(self) -> List[str]:
        return list(self.index)

    def _records(self, object_id: str) -> Iterator[Tuple[int, tuple]]:
        buf = self._buf
        for offset in self.index.get(object_id, ()):
            length, kind = HEADER.unpack_from(buf, offset)
            start = offset + HEADER.size
            obj, values = decode_payload(kind, bytes(buf[start:start + length]))
            if obj != object_id:
                raise CorruptionError(f"索引偏移 {offset} 指向对象 {obj} 而不是 {object_id}", module="store")
            yield kind, values

    def compressed_trajectories(self, object_id: str) -> List[CompressedTrajectory]:
        out: List[CompressedTrajectory] = []
        kept: List[Tuple[int, int]] = []
        anchors: List[Anchor] = []
        for kind, values in self._records(object_id):
            if kind == KIND_S:
                kept.append((values[0], values[1]))
            elif kind == KIND_T:
                anchors.append(Anchor(*values))
            elif kind == KIND_E:
                out.append(CompressedTrajectory(
                    object_id,
                    values[0],
                    CompressedSpatial(object_id, tuple(kept)),
                    CompressedTemporal(object_id, tuple(anchors)),
                ))
                kept, anchors = [], []
            else:
                raise CorruptionError(f"COMPRESSED 存储中出现记录类型 {chr(kind)}", module="store")
        return out

    def raw_trajectories(self, object_id: str) -> List[Trajectory]:
        out: List[Trajectory] = []
        segs: List[int] = []
        times: List[Optional[float]] = []
        start: Optional[float] = None
        for kind, values in self._records(object_id):
            if kind == KIND_B:
                start = values[0]
            elif kind == KIND_U:
                segs.append(values[0])
                times.append(None if np.isnan(values[1]) else values[1])
            elif kind == KIND_E:
                out.append(Trajectory(object_id, tuple(segs), tuple(times), start))
                segs, times, start = [], [], None
            else:
                raise CorruptionError(f"FULL 存储中出现记录类型 {chr(kind)}", module="store")
        return out

    def spans(self) -> List[Tuple[str, float, float]]:
        """每条已结束轨迹的 (对象, 起点, 终点)，用于生成查询探针"""
        out = []
        for obj in self.index:
            if self.compressed:
                for comp in self.compressed_trajectories(obj):
                    rec = decompress_trajectory(comp, self.spatial_model, self.tt_model, self.network)
                    out.append((obj, rec.start_time, float(rec.exit_times[-1])))
            else:
                for traj in self.raw_trajectories(obj):
                    origin, exits = fill_missing_times(traj, self.network, self.tt_model)
                    out.append((obj, origin, float(exits[-1])))
        return out


def open_snapshot(root: Path) -> StoreSnapshot:
    """只读打开存储目录（不截断、不加锁），索引由扫描日志重建"""
    root = Path(root)
    manifest, network, spatial_model, tt_model = _load_store_dir(root)
    path = root / DATA_FILE
    if not path.exists():
        path.touch()
    with open(path, "rb") as f:
        data = f.read()
    entries, valid = scan_log(data)
    if valid < len(data):
        logger.warning("%s: 末尾有 %d 字节的截断记录，已跳过", path, len(data) - valid)
    index: Dict[str, List[int]] = {}
    for offset, obj in entries:
        index.setdefault(obj, []).append(offset)
    return StoreSnapshot(path, valid, index, manifest.mode, network, spatial_model, tt_model, manifest.lam)


def reset_store(root: Path, use_recycle_bin: bool) -> None:
    """清空存储目录；use_recycle_bin 时移到回收站"""
    root = Path(root)
    if not root.exists():
        return
    if root.is_dir() and any(root.iterdir()) and not (root / MANIFEST_FILE).exists():
        raise ManifestError(f"{root} 不是 ontrac 存储，拒绝清空")
    if use_recycle_bin:
        send2trash(str(root))
    else:
        shutil.rmtree(root)
    logger.info("已重置存储 %s", root)


# ---------- 基准 ----------

@dataclass
class BenchReport:
    mode: str
    inserts_per_sec: float = 0.0
    queries_per_sec: float = 0.0
    bytes_on_disk: int = 0
    updates_written: int = 0
    updates_in: int = 0
    queries: int = 0
    unknown_probes: int = 0
    out_of_range: int = 0
    mismatches: int = 0
    seconds: float = 0.0
    runs: int = 1

    @property
    def compression_ratio(self) -> float:
        return self.updates_in / self.updates_written if self.updates_written else float("inf")

    def as_dict(self) -> dict:
        return asdict(self)


def ingest(
    root: Path,
    stream: TrajectoryStream,
    network: RoadNetwork,
    mode: StoreMode,
    spatial_model: Optional[SpatialModel] = None,
    tt_model: Optional[TravelTimeModel] = None,
    lam: float = 0.0,
    sync: SyncMode = SyncMode.FSYNC,
) -> BenchReport:
    """按流顺序在线写入，返回写入速率"""
    mode = StoreMode(mode)
    store = TrajectoryStore.create(root, network, mode, lam, spatial_model, tt_model, sync)
    started = time.perf_counter()
    with store:
        for update in stream.updates:
            store.insert(update)
    elapsed = time.perf_counter() - started
    n = stream.update_count
    return BenchReport(
        mode=mode.value,
        inserts_per_sec=n / elapsed if elapsed > 0 and n else 0.0,
        bytes_on_disk=store.bytes_on_disk,
        updates_written=store.updates_written,
        updates_in=n,
        seconds=elapsed,
    )


def _median_report(reports: Sequence[BenchReport], rate: Callable[[BenchReport], float]) -> BenchReport:
    ordered = sorted(reports, key=rate)
    chosen = ordered[len(ordered) // 2]
    chosen.runs = len(reports)
    return chosen


def bench_ingest(
    root: Path,
    stream: TrajectoryStream,
    network: RoadNetwork,
    mode: StoreMode,
    spatial_model: Optional[SpatialModel] = None,
    tt_model: Optional[TravelTimeModel] = None,
    lam: float = 0.0,
    sync: SyncMode = SyncMode.FSYNC,
    runs: int = 3,
    warmup: bool = True,
) -> BenchReport:
    """每轮写入全新的存储，预热轮不计入，报告中位数；最后一轮的存储保留在 root"""
    root = Path(root)
    reports = []
    total = runs + (1 if warmup else 0)
    for i in range(total):
        reset_store(root, use_recycle_bin=False)
        report = ingest(root, stream, network, mode, spatial_model, tt_model, lam, sync)
        if warmup and i == 0:
            continue
        reports.append(report)
    return _median_report(reports, lambda r: r.inserts_per_sec)


def query_bench(
    store: StoreSnapshot,
    probes: Sequence[Tuple[str, float]],
    decompression: Decompression = Decompression.PARTIAL,
    oracle: Optional[Sequence[Optional[int]]] = None,
) -> BenchReport:
    """逐个回答探针；未知对象只计数"""
    unknown = out_of_range = mismatches = 0
    started = time.perf_counter()
    answers: List[Optional[int]] = []
    for obj, t in probes:
        try:
            answers.append(where_query(store, obj, t, decompression).segment)
        except NotFoundError:
            unknown += 1
            answers.append(None)
        except OutOfRangeError:
            out_of_range += 1
            answers.append(None)
    elapsed = time.perf_counter() - started
    if unknown:
        logger.warning("%d 个探针的对象不在存储中", unknown)
    if oracle is not None:
        mismatches = sum(1 for a, b in zip(answers, oracle) if b is not None and a != b)
    return BenchReport(
        mode=f"{store.mode.value}/{decompression.value}",
        queries_per_sec=len(probes) / elapsed if elapsed > 0 and probes else 0.0,
        bytes_on_disk=store.size,
        queries=len(probes),
        unknown_probes=unknown,
        out_of_range=out_of_range,
        mismatches=mismatches,
        seconds=elapsed,
    )


def bench_query(
    store: StoreSnapshot,
    probes: Sequence[Tuple[str, float]],
    decompression: Decompression = Decompression.PARTIAL,
    oracle: Optional[Sequence[Optional[int]]] = None,
    runs: int = 3,
    warmup: bool = True,
) -> BenchReport:
    reports = []
    for i in range(runs + (1 if warmup else 0)):
        report = query_bench(store, probes, decompression, oracle)
        if warmup and i == 0:
            continue
        reports.append(report)
    return _median_report(reports, lambda r: r.queries_per_sec)


def sample_probes(store: StoreSnapshot, n: int, rng: np.random.Generator) -> List[Tuple[str, float]]:
    """在已结束轨迹的时间范围内均匀取探针"""
    spans = store.spans()
    if not spans:
        return []
    picks = rng.integers(len(spans), size=n)
    out = []
    for i in picks:
        obj, lo, hi = spans[int(i)]
        out.append((obj, float(rng.uniform(lo, hi))))
    return out


def read_probes(path: Path) -> List[Tuple[str, float]]:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or row[0].startswith("#"):
                continue
            try:
                out.append((row[0], float(row[1])))
            except (IndexError, ValueError):
                raise OntracError(f"探针文件第 {lineno} 行格式错误: {row}", module="store") from None
    return out


def write_probes(probes: Sequence[Tuple[str, float]], path: Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for obj, t in probes:
        writer.writerow([obj, repr(t)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
