#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
EM 训练通行时间模型

E 步：在当前模型下对每条训练轨迹求解 QP，得到各路段通行时间；
M 步：对经过同一路段的所有推断时间取均值和总体标准差。
"""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConvergenceError, OntracError, QPConvergenceError, ValidationError
from .roadnet import RoadNetwork
from .trajmodel import Trajectory
from .ttqp import GpsBlock, TravelTimeModel, build_qp, log_likelihood, partition_blocks, solve_qp

logger = logging.getLogger(__name__)

PHI_FLOOR = 1e-6
DELTA_FLOOR = 1e-6


@dataclass(frozen=True)
class TrainingConfig:
    iterations: int = 5
    initial_speed: float = 15.0
    initial_omega_fraction: float = 0.5
    omega_floor: float = 1e-3
    parallelism: int = 1
    rel_tol: float = 1e-6
    qp_tol: float = 1e-6
    qp_max_iter: int = 500

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValidationError(f"iterations 必须 >= 1: {self.iterations}", module="ttlearn")
        if not self.initial_speed > 0:
            raise ValidationError(f"initial_speed 必须为正: {self.initial_speed}", module="ttlearn")
        if not 0 < self.initial_omega_fraction <= 1:
            raise ValidationError(
                f"initial_omega_fraction 必须在 (0, 1] 内: {self.initial_omega_fraction}", module="ttlearn"
            )
        if not self.omega_floor > 0:
            raise ValidationError(f"omega_floor 必须为正: {self.omega_floor}", module="ttlearn")


@dataclass
class TrainingReport:
    log_likelihood: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    segments_with_data: int = 0
    segments_defaulted: int = 0
    trajectories_used: int = 0
    trajectories_skipped: int = 0
    # 每轮 QP 未收敛、被排除在该轮之外的轨迹数
    trajectories_failed: List[int] = field(default_factory=list)

    def rows(self) -> List[dict]:
        return [
            {"iteration": i + 1, "log_likelihood": ll, "seconds": s, "trajectories_failed": f}
            for i, (ll, s, f) in enumerate(zip(self.log_likelihood, self.seconds, self.trajectories_failed))
        ]


@dataclass(frozen=True)
class _Problem:
    blocks: Tuple[GpsBlock, ...]
    segments: np.ndarray


def default_model(net: RoadNetwork, config: TrainingConfig, sigma_star: float, delta: float) -> TravelTimeModel:
    phi = net.lengths / config.initial_speed
    omega = np.maximum(config.initial_omega_fraction * phi, config.omega_floor)
    return TravelTimeModel(phi, omega, delta, sigma_star)


def estimate_delta(net: RoadNetwork, train: Sequence[Trajectory]) -> float:
    """
    按匀速插值估计 Δ

    块内每个路段的单位长度耗时取块的平均值，Δ 取相邻路段耗时差的样本标准差。
    """
    diffs: List[float] = []
    lengths = net.lengths
    for traj in train:
        try:
            blocks = partition_blocks(traj, net, 1.0)
        except OntracError:
            continue
        rates = []
        for b in blocks:
            rate = b.observed_gap / float(sum(lengths[s] for s in b.segments))
            rates.extend([rate] * len(b.segments))
        diffs.extend(np.diff(rates))
    if len(diffs) < 2:
        logger.warning("可用于估计 Δ 的样本不足，使用下限 %.1e", DELTA_FLOOR)
        return DELTA_FLOOR
    return max(float(np.std(diffs, ddof=1)), DELTA_FLOOR)


def _infer_chunk(
    model: TravelTimeModel,
    problems: Sequence[_Problem],
    lengths: np.ndarray,
    tol: float,
    max_iter: int,
) -> List[Optional[np.ndarray]]:
    """未收敛的 QP 在对应位置返回 None"""
    out: List[Optional[np.ndarray]] = []
    for p in problems:
        qp = build_qp(model, p.blocks, lengths)
        try:
            out.append(solve_qp(qp, tol=tol, max_iter=max_iter).t_prime)
        except QPConvergenceError as e:
            logger.debug("QP 未收敛: %s", e)
            out.append(None)
    return out


def _resolve_workers(hint: int) -> int:
    return (os.cpu_count() or 1) if hint <= 0 else hint


def _e_step(
    model: TravelTimeModel,
    problems: Sequence[_Problem],
    lengths: np.ndarray,
    config: TrainingConfig,
    workers: int,
) -> List[Optional[np.ndarray]]:
    if workers <= 1 or len(problems) < 2 * workers:
        return _infer_chunk(model, problems, lengths, config.qp_tol, config.qp_max_iter)

    chunk = max(1, math.ceil(len(problems) / (workers * 4)))
    chunks = [problems[i:i + chunk] for i in range(0, len(problems), chunk)]
    results: List[Optional[List[Optional[np.ndarray]]]] = [None] * len(chunks)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {
            executor.submit(_infer_chunk, model, part, lengths, config.qp_tol, config.qp_max_iter): idx
            for idx, part in enumerate(chunks)
        }
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    # 按块序号拼接，保证 M 步的累加顺序固定
    return [x for part in results for x in part]


def _m_step(
    base: TravelTimeModel,
    problems: Sequence[_Problem],
    inferred: Sequence[np.ndarray],
    omega_floor: float,
) -> Tuple[TravelTimeModel, int]:
    n = len(base)
    seg = np.concatenate([p.segments for p in problems])
    x = np.concatenate(inferred)
    counts = np.bincount(seg, minlength=n)
    sums = np.bincount(seg, weights=x, minlength=n)
    seen = counts > 0

    phi = base.phi.copy()
    omega = base.omega.copy()
    mean = np.zeros(n)
    mean[seen] = sums[seen] / counts[seen]
    sq = np.bincount(seg, weights=(x - mean[seg]) ** 2, minlength=n)
    phi[seen] = np.maximum(mean[seen], PHI_FLOOR)
    omega[seen] = np.maximum(np.sqrt(sq[seen] / counts[seen]), omega_floor)
    return TravelTimeModel(phi, omega, base.delta, base.sigma_star), int(seen.sum())


def temporal_training(
    net: RoadNetwork,
    train: Sequence[Trajectory],
    config: TrainingConfig,
    sigma_star: float,
    delta: Optional[float] = None,
    initial: Optional[TravelTimeModel] = None,
    progress: Optional[Callable[[int, float], None]] = None,
) -> Tuple[TravelTimeModel, TrainingReport]:
    """
    EM 训练

    delta 为空时用 estimate_delta 从训练数据估计；initial 为空时按 initial_speed 初始化。
    不满足推断前置条件的轨迹在第一轮前一次性剔除并计数；
    某一轮 QP 未收敛的轨迹只在该轮被排除，计入 trajectories_failed。
    """
    if not train:
        raise ValidationError("训练集为空", module="ttlearn")
    if delta is None:
        delta = estimate_delta(net, train)
        logger.info("估计 Δ = %.6g", delta)

    problems: List[_Problem] = []
    skipped = 0
    for traj in train:
        try:
            blocks = tuple(partition_blocks(traj, net, sigma_star))
        except OntracError as e:
            skipped += 1
            logger.debug("跳过轨迹 %s: %s", traj.object, e)
            continue
        segs = np.fromiter((s for b in blocks for s in b.segments), dtype=np.int64)
        problems.append(_Problem(blocks, segs))
    if skipped:
        logger.warning("%d 条轨迹不满足推断前置条件，已跳过", skipped)
    if not problems:
        raise ValidationError("没有可用的训练轨迹", module="ttlearn")

    if initial is None:
        model = default_model(net, config, sigma_star, delta)
    else:
        model = TravelTimeModel(
            initial.phi, np.maximum(initial.omega, config.omega_floor), delta, sigma_star
        )

    lengths = net.lengths
    workers = _resolve_workers(config.parallelism)
    report = TrainingReport(trajectories_used=len(problems), trajectories_skipped=skipped)

    for iteration in range(1, config.iterations + 1):
        started = time.perf_counter()
        inferred = _e_step(model, problems, lengths, config, workers)
        solved = [(p, x) for p, x in zip(problems, inferred) if x is not None]
        failed = len(problems) - len(solved)
        if failed:
            logger.warning("EM 第 %d 轮: %d 条轨迹的 QP 未收敛，本轮不参与 M 步", iteration, failed)
        if not solved:
            raise ConvergenceError(f"EM 第 {iteration} 轮没有任何轨迹的 QP 收敛", module="ttlearn")
        active = [p for p, _ in solved]
        model, with_data = _m_step(model, active, [x for _, x in solved], config.omega_floor)
        ll = math.fsum(log_likelihood(model, p.blocks, lengths, x) for p, x in solved)
        elapsed = time.perf_counter() - started

        report.log_likelihood.append(ll)
        report.seconds.append(elapsed)
        report.trajectories_failed.append(failed)
        report.segments_with_data = with_data
        report.segments_defaulted = len(net) - with_data
        logger.info("EM 第 %d 轮: 对数似然 %.6f (%.2fs)", iteration, ll, elapsed)
        if progress is not None:
            progress(iteration, ll)

        if iteration > 1:
            prev = report.log_likelihood[-2]
            if abs(ll - prev) <= config.rel_tol * max(abs(prev), 1.0):
                logger.info("相对改进低于 %.1e，提前结束", config.rel_tol)
                break

    return model, report
