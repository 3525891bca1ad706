#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
高斯通行时间模型、最大似然 QP 构造与求解、轨迹时间推断

似然由三部分组成：
  * 每个路段的通行时间  x_i ~ N(φ_i, ω_i²)
  * 相邻路段单位长度耗时的平滑项  x_i/|s_i| − x_{i−1}/|s_{i−1}| ~ N(0, Δ²)（跨 GPS 块也成立）
  * 每个 GPS 块的总时间  Σ_{i∈B_j} x_i ~ N(t̄_j, σ_j²)
负对数似然是 x 的二次函数，½xᵀQx + cᵀx 与之只差一个常数。
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ParseError, QPConvergenceError, QPError, ValidationError
from .roadnet import RoadNetwork
from .trajmodel import Trajectory

logger = logging.getLogger(__name__)

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TravelTimeModel:
    phi: np.ndarray
    omega: np.ndarray
    delta: float
    sigma_star: float

    def __post_init__(self) -> None:
        phi = np.asarray(self.phi, dtype=np.float64)
        omega = np.asarray(self.omega, dtype=np.float64)
        if phi.shape != omega.shape or phi.ndim != 1:
            raise ValidationError("phi 与 omega 必须是等长的一维数组", module="ttqp")
        if not np.all(np.isfinite(phi)) or np.any(phi <= 0):
            raise ValidationError("所有 phi 必须为正", module="ttqp")
        if not np.all(np.isfinite(omega)) or np.any(omega <= 0):
            raise ValidationError("所有 omega 必须为正", module="ttqp")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValidationError(f"delta 必须为正: {self.delta}", module="ttqp")
        if not (self.sigma_star > 0 and math.isfinite(self.sigma_star)):
            raise ValidationError(f"sigma_star 必须为正: {self.sigma_star}", module="ttqp")
        phi.setflags(write=False)
        omega.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "omega", omega)

    def __len__(self) -> int:
        return len(self.phi)


@dataclass(frozen=True)
class GpsBlock:
    """两个相邻观测之间的路段（不含前一个观测所在路段）"""
    segments: Tuple[int, ...]
    observed_gap: float
    sigma_j: float
    positions: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.segments:
            raise QPError("GPS 块至少包含一个路段")
        if not self.observed_gap > 0:
            raise QPError(f"GPS 块观测间隔必须为正: {self.observed_gap}")
        if not self.sigma_j > 0:
            raise QPError(f"GPS 块误差必须为正: {self.sigma_j}")


@dataclass(frozen=True)
class QPInstance:
    Q: np.ndarray
    c: np.ndarray
    variable_map: Tuple[Tuple[int, int, int], ...]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.c @ x)


@dataclass(frozen=True)
class InferredTimes:
    t_prime: np.ndarray
    objective: float
    positions: Tuple[int, ...] = ()
    residual: float = 0.0
    iterations: int = 0

    def exit_times(self, traj: Trajectory) -> np.ndarray:
        """各路段的离开时刻：从轨迹起点累加推断的通行时间"""
        out = np.empty(len(traj))
        origin = traj.origin
        if origin is None:
            raise ValidationError(f"轨迹 {traj.object} 没有起点时刻", module="ttqp")
        durations = np.zeros(len(traj))
        durations[list(self.positions)] = self.t_prime
        np.cumsum(durations, out=out)
        return out + origin


def gps_temporal_error(sigma_star: float, elapsed: float, path_length: float) -> float:
    """σ_k = σ* · 经过时间 / 路径长度"""
    if not (sigma_star > 0 and elapsed > 0 and path_length > 0):
        raise ValidationError(
            f"gps_temporal_error 需要正数输入: sigma_star={sigma_star}, elapsed={elapsed}, path={path_length}",
            module="ttqp",
        )
    return sigma_star * elapsed / path_length


def partition_blocks(traj: Trajectory, net: RoadNetwork, sigma_star: float) -> List[GpsBlock]:
    """
    在观测时间戳处切分 GPS 块

    有 START 时，第一个块从位置 0 开始；否则第一个更新本身就是锚点，
    它所在路段不参与推断。
    """
    if not traj.segments:
        raise ValidationError(f"轨迹 {traj.object} 为空", module="ttqp")
    if traj.timestamps[-1] is None:
        raise ValidationError(f"轨迹 {traj.object} 的最后一个时间戳缺失", module="ttqp")
    if traj.start_time is None and traj.timestamps[0] is None:
        raise ValidationError(f"轨迹 {traj.object} 的第一个时间戳缺失", module="ttqp")
    n = len(net)
    for s in traj.segments:
        if not 0 <= s < n:
            raise ValidationError(f"轨迹 {traj.object} 引用了未知路段 id {s}", module="ttqp")

    lengths = net.lengths
    if traj.start_time is not None:
        prev_pos, prev_time = -1, traj.start_time
    else:
        prev_pos, prev_time = 0, traj.timestamps[0]

    blocks: List[GpsBlock] = []
    for pos in range(prev_pos + 1, len(traj)):
        t = traj.timestamps[pos]
        if t is None:
            continue
        span = range(prev_pos + 1, pos + 1)
        segs = tuple(traj.segments[i] for i in span)
        gap = t - prev_time
        path = float(sum(lengths[s] for s in segs))
        blocks.append(GpsBlock(segs, gap, gps_temporal_error(sigma_star, gap, path), tuple(span)))
        prev_pos, prev_time = pos, t
    if not blocks:
        raise ValidationError(f"轨迹 {traj.object} 至少需要两个观测（或 START 加一个观测）", module="ttqp")
    return blocks


def _flatten(blocks: Sequence[GpsBlock]) -> Tuple[np.ndarray, Tuple[Tuple[int, int, int], ...]]:
    seg = np.fromiter((s for b in blocks for s in b.segments), dtype=np.int64)
    vmap = tuple((j, i, s) for j, b in enumerate(blocks) for i, s in enumerate(b.segments))
    return seg, vmap


def build_qp(model: TravelTimeModel, blocks: Sequence[GpsBlock], lengths: np.ndarray) -> QPInstance:
    """按负对数似然展开构造 Q、c"""
    if not blocks:
        raise QPError("没有 GPS 块")
    seg, vmap = _flatten(blocks)
    n = len(seg)
    L = np.asarray(lengths, dtype=np.float64)[seg]
    phi = model.phi[seg]
    inv_w2 = 1.0 / model.omega[seg] ** 2

    Q = np.diag(inv_w2)
    c = -phi * inv_w2

    if n > 1:
        inv_d2 = 1.0 / model.delta ** 2
        a = inv_d2 / L ** 2
        idx = np.arange(n)
        Q[idx[1:], idx[1:]] += a[1:]
        Q[idx[:-1], idx[:-1]] += a[:-1]
        off = -inv_d2 / (L[1:] * L[:-1])
        Q[idx[1:], idx[:-1]] += off
        Q[idx[:-1], idx[1:]] += off

    start = 0
    for b in blocks:
        end = start + len(b.segments)
        w = 1.0 / b.sigma_j ** 2
        Q[start:end, start:end] += w
        c[start:end] -= b.observed_gap * w
        start = end

    return QPInstance(Q=Q, c=c, variable_map=vmap)


def log_likelihood(model: TravelTimeModel, blocks: Sequence[GpsBlock], lengths: np.ndarray, x: np.ndarray) -> float:
    """
    完整的高斯对数似然（含归一化常数）

    EM 报告的就是这个值在每轮推断结果与更新后模型处的总和。
    """
    seg, _ = _flatten(blocks)
    x = np.asarray(x, dtype=np.float64)
    L = np.asarray(lengths, dtype=np.float64)[seg]
    omega = model.omega[seg]
    ll = -np.sum(0.5 * ((x - model.phi[seg]) / omega) ** 2 + np.log(omega) + LOG_SQRT_2PI)

    if len(x) > 1:
        rate = x / L
        diff = np.diff(rate)
        ll -= np.sum(0.5 * (diff / model.delta) ** 2) + (len(x) - 1) * (math.log(model.delta) + LOG_SQRT_2PI)

    start = 0
    for b in blocks:
        end = start + len(b.segments)
        r = (x[start:end].sum() - b.observed_gap) / b.sigma_j
        ll -= 0.5 * r * r + math.log(b.sigma_j) + LOG_SQRT_2PI
        start = end
    return float(ll)


def kkt_residual(x: np.ndarray, g: np.ndarray) -> float:
    """x_i > 0 时取 |g_i|，x_i = 0 时取 max(0, −g_i)"""
    if len(x) == 0:
        return 0.0
    r = np.where(x > 0, np.abs(g), np.maximum(0.0, -g))
    return float(r.max())


def check_positive_definite(Q: np.ndarray) -> Tuple[np.ndarray, bool]:
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise QPError(f"Q 必须是方阵: {Q.shape}")
    if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(Q).max(initial=0.0)))):
        raise QPError("Q 不对称")
    try:
        return cho_factor(Q, lower=True, check_finite=True)
    except LinAlgError as e:
        raise QPError(f"Q 不是正定矩阵: {e}") from e


def solve_qp(qp: QPInstance, tol: float = 1e-6, max_iter: int = 500) -> InferredTimes:
    """
    min ½xᵀQx + cᵀx  s.t. x >= 0

    从无约束解（Cholesky）出发，在自由变量上做投影牛顿步，Armijo 回溯；
    牛顿步失败时退化为 Jacobi 预条件的投影梯度步。以 KKT 残差判断收敛。
    """
    Q, c = qp.Q, qp.c
    n = len(c)
    if n == 0:
        return InferredTimes(np.zeros(0), 0.0)
    factor = check_positive_definite(Q)

    def f(v: np.ndarray) -> float:
        return float(0.5 * v @ Q @ v + c @ v)

    x = cho_solve(factor, -c)
    if np.all(x >= 0):
        g = Q @ x + c
        res = kkt_residual(x, g)
        if res <= tol:
            return InferredTimes(x, f(x), residual=res, iterations=0)
    x = np.maximum(x, 0.0)

    diag = np.diag(Q).copy()
    best_x, best_res = x.copy(), math.inf
    for iteration in range(1, max_iter + 2):
        g = Q @ x + c
        res = kkt_residual(x, g)
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= tol:
            return InferredTimes(x, f(x), residual=res, iterations=iteration - 1)
        if iteration > max_iter:
            break

        eps = max(1e-12, 1e-9 * float(x.max(initial=0.0)))
        binding = (x <= eps) & (g > 0)
        free = ~binding
        d = np.zeros(n)
        d[binding] = -x[binding]
        if free.any():
            try:
                d[free] = -np.linalg.solve(Q[np.ix_(free, free)], g[free])
            except np.linalg.LinAlgError:
                d[free] = -g[free] / diag[free]

        fx = f(x)
        x_new = _armijo(f, x, g, d, fx)
        if x_new is None:
            x_new = _armijo(f, x, g, -g / diag, fx)
        if x_new is None:
            # 数值上已无法下降
            break
        x = x_new

    raise QPConvergenceError(
        f"QP 在 {max_iter} 次迭代后 KKT 残差仍为 {best_res:.3e} (tol={tol:.1e})", best_x, best_res
    )


def _armijo(f, x: np.ndarray, g: np.ndarray, d: np.ndarray, fx: float) -> Optional[np.ndarray]:
    step = 1.0
    while step > 1e-14:
        cand = np.maximum(x + step * d, 0.0)
        moved = cand - x
        decrease = float(g @ moved)
        if decrease < 0 and f(cand) <= fx + 1e-4 * decrease:
            return cand
        step *= 0.5
    return None


def infer_travel_times(
    model: TravelTimeModel,
    traj: Trajectory,
    net: RoadNetwork,
    tol: float = 1e-6,
    max_iter: int = 500,
) -> InferredTimes:
    """对整条轨迹联合求解各路段通行时间"""
    blocks = partition_blocks(traj, net, model.sigma_star)
    qp = build_qp(model, blocks, net.lengths)
    result = solve_qp(qp, tol=tol, max_iter=max_iter)
    positions = tuple(p for b in blocks for p in b.positions)
    return InferredTimes(result.t_prime, result.objective, positions, result.residual, result.iterations)


# ---------- 序列化 ----------

def dump_travel_time_model(model: TravelTimeModel, net: RoadNetwork) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["delta", repr(float(model.delta)), "sigma_star", repr(float(model.sigma_star))])
    for seg in net.segments:
        writer.writerow([seg.name, repr(float(model.phi[seg.id])), repr(float(model.omega[seg.id]))])
    return buf.getvalue()


def load_travel_time_model(source: str, net: RoadNetwork) -> TravelTimeModel:
    rows = list(csv.reader(io.StringIO(source)))
    if not rows or len(rows[0]) != 4 or rows[0][0] != "delta" or rows[0][2] != "sigma_star":
        raise ParseError("缺少 delta/sigma_star 头", 1, module="ttqp")
    try:
        delta, sigma_star = float(rows[0][1]), float(rows[0][3])
    except ValueError:
        raise ParseError("delta/sigma_star 不是数字", 1, module="ttqp") from None
    phi = np.full(len(net), np.nan)
    omega = np.full(len(net), np.nan)
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"应有 3 个字段，实际 {len(row)} 个", lineno, module="ttqp")
        seg = net.id_of(row[0])
        try:
            phi[seg], omega[seg] = float(row[1]), float(row[2])
        except ValueError:
            raise ParseError("phi/omega 不是数字", lineno, module="ttqp") from None
    if np.isnan(phi).any():
        missing = net.name_of(int(np.flatnonzero(np.isnan(phi))[0]))
        raise ValidationError(f"时间模型缺少路段 {missing}", module="ttqp")
    return TravelTimeModel(phi, omega, delta, sigma_star)


def read_travel_time_model(path: Path, net: RoadNetwork) -> TravelTimeModel:
    return load_travel_time_model(Path(path).read_text(encoding="utf-8"), net)


def write_travel_time_model(model: TravelTimeModel, net: RoadNetwork, path: Path) -> None:
    Path(path).write_text(dump_travel_time_model(model, net), encoding="utf-8")
