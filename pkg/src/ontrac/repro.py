#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
端到端复现流水线（repro 子命令的计算部分）

每个函数返回 dict 行列表，由 CLI 写成 CSV；这里不做任何输出。
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .codec import compress_trajectory, decompress_trajectory
from .config import OntracConfig
from .query import Decompression, partial_decompress, where_in_partial, where_in_recovered, where_query
from .roadnet import RoadNetwork, network_entropy, pagerank
from .spatial import SpatialModel, empirical_block_entropy, spatial_compress, spatial_training
from .store import StoreMode, SyncMode, bench_ingest, bench_query, open_snapshot, sample_probes
from .synth import (
    GroundTruth,
    SynthConfig,
    SynthMode,
    generate,
    make_complete_network,
    make_cycle_network,
    make_grid_network,
)
from .trajmodel import Trajectory, TrajectoryStream, group_by_object, split_train_test
from .ttcomp import observed_errors
from .ttlearn import TrainingConfig, TrainingReport, temporal_training
from .ttqp import TravelTimeModel

logger = logging.getLogger(__name__)

SEED_NAMES = ("walk", "sp", "ordering", "long", "probes", "split")
# repro 的默认种子
REPRO_SEED = 2
MIN_TRAVERSALS = 20


@dataclass(frozen=True)
class ReproSettings:
    rows: int = 10
    cols: int = 10
    n_trajectories: int = 2500
    walk_length: int = 20
    train_fraction: float = 0.8
    lambdas: Sequence[float] = (30.0, 60.0, 240.0)
    ordering_grid: int = 20
    ordering_trajectories: int = 1000
    query_trajectories: int = 500
    probes_per_trajectory: int = 10
    long_trajectories: int = 20
    long_length: int = 600
    bench_probes: int = 1000
    bench_runs: int = 3
    bench_warmup: bool = True

    @classmethod
    def from_config(cls, config: OntracConfig, quick: bool) -> "ReproSettings":
        base = cls(
            rows=config.synth.rows,
            cols=config.synth.cols,
            walk_length=config.synth.walk_length,
            bench_probes=config.bench.probes,
            bench_runs=config.bench.runs,
            bench_warmup=config.bench.warmup,
        )
        if not quick:
            return base
        return cls(
            rows=base.rows,
            cols=base.cols,
            n_trajectories=300,
            walk_length=base.walk_length,
            query_trajectories=50,
            long_trajectories=5,
            long_length=500,
            bench_probes=min(base.bench_probes, 200),
            bench_runs=1,
            bench_warmup=False,
        )


def derive_seeds(seed: int, names: Sequence[str] = SEED_NAMES) -> Dict[str, int]:
    """从一个 --seed 派生各组件的独立种子"""
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: int(child.generate_state(1)[0]) for name, child in zip(names, children)}


@dataclass
class Dataset:
    mode: SynthMode
    network: RoadNetwork
    stream: TrajectoryStream
    truth: GroundTruth
    train: List[Trajectory]
    test: List[Trajectory]
    spatial_model: SpatialModel
    tt_model: TravelTimeModel
    report: TrainingReport
    extra: Dict[str, float] = field(default_factory=dict)


def synth_config(config: OntracConfig, mode: SynthMode, n: int, walk_length: int, seed: int, alpha: Optional[float] = None) -> SynthConfig:
    s = config.synth
    return SynthConfig(
        mode=mode,
        n_trajectories=n,
        walk_length=walk_length,
        speed_mean=s.speed_mean,
        speed_std=s.speed_std,
        alpha=s.alpha if alpha is None else alpha,
        gps_interval=s.gps_interval,
        seed=seed,
        time_jitter=s.time_jitter,
        start_spread=s.start_spread,
    )


def training_config(config: OntracConfig, workers: int) -> TrainingConfig:
    t = config.temporal
    return TrainingConfig(
        iterations=t.iterations,
        initial_speed=t.initial_speed,
        initial_omega_fraction=t.initial_omega_fraction,
        omega_floor=t.omega_floor,
        parallelism=workers,
        rel_tol=t.rel_tol,
        qp_tol=t.qp_tol,
        qp_max_iter=t.qp_max_iter,
    )


def prepare(
    mode: SynthMode,
    settings: ReproSettings,
    config: OntracConfig,
    seeds: Dict[str, int],
    workers: int,
    progress: Optional[Callable[[int, float], None]] = None,
) -> Dataset:
    """生成网格数据、划分训练/测试集并训练两个模型"""
    net = make_grid_network(settings.rows, settings.cols, config.synth.segment_length, directed=True)
    sc = synth_config(config, mode, settings.n_trajectories, settings.walk_length, seeds[mode.value])
    stream, truth = generate(net, sc)
    trajs = group_by_object(stream)
    train, test = split_train_test(trajs, settings.train_fraction, seeds["split"])
    spatial_model = spatial_training(net, train, config.spatial.order)
    tt_model, report = temporal_training(
        net, train, training_config(config, workers), config.temporal.sigma_star, progress=progress
    )
    return Dataset(mode, net, stream, truth, train, test, spatial_model, tt_model, report)


# ---------- 各项结果 ----------

def compression_rows(ds: Dataset, lambdas: Sequence[float]) -> List[dict]:
    """λ 扫描：空间/时间压缩比、无损还原与 λ 违例计数"""
    rows = []
    for lam in lambdas:
        updates = observed = kept_s = kept_t = violations = lossy = 0
        max_error = 0.0
        for traj in ds.test:
            comp = compress_trajectory(traj, ds.spatial_model, ds.tt_model, ds.network, lam)
            rec = decompress_trajectory(comp, ds.spatial_model, ds.tt_model, ds.network)
            if rec.segments != traj.segments:
                lossy += 1
            errs = observed_errors(ds.tt_model, traj, comp.temporal, ds.network)
            violations += int((errs > lam).sum())
            max_error = max(max_error, float(errs.max()) if errs.size else 0.0)
            updates += len(traj)
            observed += len(traj.observed) + (traj.start_time is not None)
            kept_s += len(comp.spatial.kept)
            kept_t += len(comp.temporal.kept)
        rows.append({
            "mode": ds.mode.value,
            "lambda": lam,
            "trajectories": len(ds.test),
            "updates": updates,
            "kept_spatial": kept_s,
            "kept_temporal": kept_t,
            "spatial_ratio": updates / kept_s if kept_s else math.inf,
            "temporal_ratio": observed / kept_t if kept_t else math.inf,
            "max_error": max_error,
            "lambda_violations": violations,
            "lossless_failures": lossy,
        })
    return rows


def phi_recovery(ds: Dataset) -> Dict[str, float]:
    """经过次数 >= 20 的路段上 φ 相对生成均值的最大误差"""
    by_obj = ds.truth.by_object()
    counts = np.zeros(len(ds.network), dtype=np.int64)
    for traj in ds.train:
        np.add.at(counts, np.asarray(by_obj[traj.object].segments), 1)
    mask = counts >= MIN_TRAVERSALS
    means = ds.truth.segment_means
    if not mask.any():
        return {"segments_checked": 0, "max_phi_rel_error": math.nan}
    rel = np.abs(ds.tt_model.phi[mask] - means[mask]) / means[mask]
    return {"segments_checked": int(mask.sum()), "max_phi_rel_error": float(rel.max())}


def training_rows(ds: Dataset) -> List[dict]:
    recovery = phi_recovery(ds)
    rows = []
    for row in ds.report.rows():
        rows.append({"mode": ds.mode.value, **row, **recovery})
    return rows


def entropy_rows(datasets: Sequence[Dataset], config: OntracConfig) -> List[dict]:
    rows = []
    grid = datasets[0].network
    pi = pagerank(grid, config.network.damping, config.network.tol, config.network.max_iter)
    rows.append({"case": "grid", "measure": "network_entropy", "value": network_entropy(grid, pi), "expected": ""})

    cycle = make_cycle_network(50)
    pi = pagerank(cycle, config.network.damping, config.network.tol, config.network.max_iter)
    rows.append({"case": "cycle50", "measure": "network_entropy", "value": network_entropy(cycle, pi), "expected": 0.0})

    n = 10
    complete = make_complete_network(n)
    pi = pagerank(complete, 1.0, config.network.tol, config.network.max_iter)
    rows.append({
        "case": f"complete{n}",
        "measure": "network_entropy",
        "value": network_entropy(complete, pi),
        "expected": 1.0 - 1.0 / n,
    })

    for ds in datasets:
        rows.append({
            "case": ds.mode.value,
            "measure": "empirical_block_entropy",
            "value": empirical_block_entropy(ds.spatial_model, ds.test),
            "expected": "",
        })
    return rows


def ordering_rows(settings: ReproSettings, config: OntracConfig, seed: int, split_seed: int) -> List[dict]:
    """同一 20x20 网格上，α = 1 与 α = 1e-4 的空间压缩比"""
    size = settings.ordering_grid
    net = make_grid_network(size, size, config.synth.segment_length, directed=True)
    rows = []
    for alpha in (1.0, 1e-4):
        sc = synth_config(config, SynthMode.SHORTEST_PATH, settings.ordering_trajectories, 1, seed, alpha)
        stream, _ = generate(net, sc)
        train, test = split_train_test(group_by_object(stream), settings.train_fraction, split_seed)
        model = spatial_training(net, train, config.spatial.order)
        updates = sum(len(t) for t in test)
        kept = sum(len(spatial_compress(model, t).kept) for t in test)
        rows.append({"alpha": alpha, "trajectories": len(test), "updates": updates, "kept": kept,
                     "spatial_ratio": updates / kept})
    gap = rows[0]["spatial_ratio"] / rows[1]["spatial_ratio"]
    for row in rows:
        row["gap"] = gap
    return rows


def query_rows(ds: Dataset, settings: ReproSettings, rng: np.random.Generator) -> List[dict]:
    """局部解压与完整解压的一致性"""
    window_mismatch = answer_mismatch = probes = 0
    for traj in ds.test[:settings.query_trajectories]:
        comp = compress_trajectory(traj, ds.spatial_model, ds.tt_model, ds.network, 60.0)
        rec = decompress_trajectory(comp, ds.spatial_model, ds.tt_model, ds.network)
        lo, hi = rec.start_time, float(rec.exit_times[-1])
        for t in rng.uniform(lo, hi, size=settings.probes_per_trajectory):
            probes += 1
            part = partial_decompress(comp, ds.spatial_model, ds.tt_model, ds.network, float(t))
            window = slice(part.start_position, part.end_position)
            if (
                rec.segments[window] != part.segments
                or not np.array_equal(rec.exit_times[window], part.exit_times)
            ):
                window_mismatch += 1
            a = where_in_partial(part, lo, float(t))
            b = where_in_recovered(rec, float(t))
            if (a.segment, a.position) != (b.segment, b.position):
                answer_mismatch += 1
    return [{
        "mode": ds.mode.value,
        "trajectories": min(len(ds.test), settings.query_trajectories),
        "probes": probes,
        "window_mismatches": window_mismatch,
        "answer_mismatches": answer_mismatch,
    }]


def bench_rows(
    ds: Dataset,
    settings: ReproSettings,
    config: OntracConfig,
    seeds: Dict[str, int],
    root: Path,
    lam: float = 60.0,
) -> List[dict]:
    """FULL 与 COMPRESSED 的写入速率，以及长轨迹上 PARTIAL 与 FULL_RECONSTRUCT 的查询速率"""
    sync = SyncMode(config.store.sync)
    rows = []
    for mode in (StoreMode.FULL, StoreMode.COMPRESSED):
        report = bench_ingest(
            root / f"ingest-{mode.value}", ds.stream, ds.network, mode, ds.spatial_model, ds.tt_model, lam,
            sync, settings.bench_runs, settings.bench_warmup,
        )
        rows.append({"benchmark": "ingest", **report.as_dict()})

    sc = synth_config(config, SynthMode.RANDOM_WALK, settings.long_trajectories, settings.long_length, seeds["long"])
    long_stream, _ = generate(ds.network, sc)
    long_root = root / "long"
    bench_ingest(long_root, long_stream, ds.network, StoreMode.COMPRESSED, ds.spatial_model, ds.tt_model, lam,
                 SyncMode.NONE, runs=1, warmup=False)
    with open_snapshot(long_root) as snap:
        probes = sample_probes(snap, settings.bench_probes, np.random.default_rng(seeds["probes"]))
        oracle = [where_query(snap, obj, t, Decompression.FULL_RECONSTRUCT).segment for obj, t in probes]
        for decompression in (Decompression.FULL_RECONSTRUCT, Decompression.PARTIAL):
            report = bench_query(snap, probes, decompression, oracle, settings.bench_runs, settings.bench_warmup)
            rows.append({"benchmark": "query", **report.as_dict()})
    return rows
