#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ontrac 命令行

子命令：synth / train-spatial / train-temporal / compress / decompress /
infer / where / entropy / bench {ingest,query} / repro
"""

import csv
import functools
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from . import __version__
from .codec import compress_trajectory, decompress_trajectory, read_compressed, write_compressed
from .config import OntracConfig, load_config
from .errors import ManifestError, NotFoundError, OntracError, OutOfRangeError
from .query import Decompression, where_query
from .repro import (
    REPRO_SEED,
    ReproSettings,
    bench_rows,
    compression_rows,
    derive_seeds,
    entropy_rows,
    ordering_rows,
    prepare,
    query_rows,
    training_config,
    training_rows,
)
from .roadnet import network_entropy, pagerank, read_network, summarize, write_network
from .spatial import empirical_block_entropy, read_spatial_model, spatial_training, write_spatial_model
from .store import (
    MANIFEST_FILE,
    StoreMode,
    SyncMode,
    bench_ingest,
    bench_query,
    open_snapshot,
    read_probes,
    reset_store,
    sample_probes,
)
from .synth import SynthConfig, SynthMode, generate, make_grid_network
from .trajmodel import Trajectory, group_by_object, read_stream, stream_from_trajectories, write_stream
from .ttlearn import temporal_training
from .ttqp import infer_travel_times, read_travel_time_model, write_travel_time_model

console = Console(stderr=True)
app = typer.Typer(
    name="ontrac",
    help="在线路网轨迹压缩：训练空间/时间模型、压缩、查询与基准测试",
    add_completion=False,
)
bench_app = typer.Typer(help="写入与查询吞吐量基准")
app.add_typer(bench_app, name="bench")

logger = logging.getLogger("ontrac")


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


@dataclass
class RunState:
    config: OntracConfig
    config_path: Optional[Path]
    verbose: bool


@dataclass
class RunManifest:
    """足以复现一次运行的记录（除墙钟时间外）"""
    subcommand: str
    flags: Dict[str, Any]
    seed: Optional[int] = None
    seeds: Dict[str, int] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    config_path: Optional[str] = None
    version: str = __version__
    wall_time_seconds: float = 0.0

    def write(self, path: Path) -> Path:
        path.write_text(json.dumps(asdict(self), indent=2, ensure_ascii=False, default=str) + "\n", encoding="utf-8")
        return path


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_path_for(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def setup_logging(level: str) -> None:
    logger.handlers.clear()
    logger.addHandler(RichHandler(console=console, show_path=False, markup=False))
    logger.setLevel(level.upper())
    logger.propagate = False


def guarded(func: Callable) -> Callable:
    """库错误打印为 [模块] 消息，退出码 1"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except OntracError as e:
            console.print(f"[red]{escape(f'[{e.module}] {e}')}[/red]")
            raise typer.Exit(code=1)
        except OSError as e:
            console.print(f"[red]{escape(f'[io] {e}')}[/red]")
            raise typer.Exit(code=1)

    return wrapper


def rows_to_text(rows: Sequence[dict], fmt: OutputFormat) -> str:
    if fmt is OutputFormat.JSON:
        return json.dumps(list(rows), indent=2, ensure_ascii=False) + "\n"
    fieldnames: List[str] = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def emit_rows(rows: Sequence[dict], fmt: OutputFormat, out: Optional[Path] = None) -> None:
    text = rows_to_text(rows, fmt)
    if out is None:
        typer.echo(text, nl=False)
    else:
        out.write_text(text, encoding="utf-8")


def show_table(title: str, rows: Sequence[dict], max_rows: int) -> None:
    if not rows:
        return
    table = Table(title=title, show_header=True)
    for key in rows[0]:
        table.add_column(str(key), style="cyan" if key == list(rows[0])[0] else "white")
    shown = rows if max_rows <= 0 else rows[:max_rows]
    for row in shown:
        table.add_row(*(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row.values()))
    if len(rows) > len(shown):
        table.add_row(f"... 还有 {len(rows) - len(shown)} 行", *([""] * (len(rows[0]) - 1)))
    console.print(table)


def progress_bar(state: RunState) -> Progress:
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
        disable=not state.config.display.show_progress,
    )


def finish(
    ctx: typer.Context,
    out: Path,
    flags: Dict[str, Any],
    inputs: Sequence[Optional[Path]],
    started: float,
    seed: Optional[int] = None,
    seeds: Optional[Dict[str, int]] = None,
    manifest_path: Optional[Path] = None,
) -> None:
    state: RunState = ctx.obj
    manifest = RunManifest(
        subcommand=ctx.command_path.split(" ", 1)[-1],
        flags=flags,
        seed=seed,
        seeds=seeds or {},
        inputs={str(p): file_sha256(p) for p in inputs if p is not None},
        config_path=str(state.config_path) if state.config_path else None,
        wall_time_seconds=time.perf_counter() - started,
    )
    manifest.write(manifest_path or manifest_path_for(out))


def resolve_workers(state: RunState, workers: Optional[int]) -> int:
    return state.config.performance.max_workers if workers is None else workers


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="配置文件路径（默认使用包内 config.toml）"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="输出 DEBUG 日志"),
):
    """
    ontrac 在线轨迹压缩

    无子命令时打印帮助并以退出码 2 结束
    """
    if ctx.invoked_subcommand is None:
        console.print(ctx.get_help())
        raise typer.Exit(code=2)
    try:
        cfg = load_config(config)
    except OntracError as e:
        console.print(f"[red]{escape(f'[{e.module}] {e}')}[/red]")
        raise typer.Exit(code=1)
    setup_logging("DEBUG" if verbose else cfg.display.log_level)
    ctx.obj = RunState(cfg, config, verbose)


# ---------- 数据与训练 ----------

@app.command("synth")
@guarded
def synth_cmd(
    ctx: typer.Context,
    out: Path = typer.Option(..., "--out", help="输出的流文件"),
    mode: SynthMode = typer.Option(SynthMode.RANDOM_WALK, "--mode", help="walk 随机游走 / sp 最短路"),
    rows: Optional[int] = typer.Option(None, "--rows", help="网格行数"),
    cols: Optional[int] = typer.Option(None, "--cols", help="网格列数"),
    n: Optional[int] = typer.Option(None, "--n", help="轨迹数量"),
    walk_length: Optional[int] = typer.Option(None, "--walk-length", help="随机游走的路段数"),
    alpha: Optional[float] = typer.Option(None, "--alpha", help="目的地流行度衰减系数"),
    gps_interval: Optional[float] = typer.Option(None, "--gps-interval", help="GPS 采样间隔（秒），0 为稠密"),
    undirected: bool = typer.Option(False, "--undirected", help="生成无向网格（每条道路一个路段）"),
    seed: int = typer.Option(0, "--seed", help="随机种子"),
    truth: Optional[Path] = typer.Option(None, "--truth", help="输出真实离开时刻的流文件"),
    network_out: Optional[Path] = typer.Option(None, "--network-out", help="输出路网文件（默认与 --out 同名 .net）"),
):
    """生成网格路网与合成轨迹流"""
    started = time.perf_counter()
    state: RunState = ctx.obj
    d = state.config.synth
    seeds = derive_seeds(seed, ("synth",))
    sc = SynthConfig(
        mode=mode,
        n_trajectories=d.n_trajectories if n is None else n,
        walk_length=d.walk_length if walk_length is None else walk_length,
        speed_mean=d.speed_mean,
        speed_std=d.speed_std,
        alpha=d.alpha if alpha is None else alpha,
        gps_interval=d.gps_interval if gps_interval is None else gps_interval,
        seed=seeds["synth"],
        time_jitter=d.time_jitter,
        start_spread=d.start_spread,
    )
    net = make_grid_network(
        d.rows if rows is None else rows,
        d.cols if cols is None else cols,
        d.segment_length,
        directed=d.directed and not undirected,
    )
    with progress_bar(state) as progress:
        progress.add_task(f"生成 {sc.n_trajectories} 条轨迹 ({mode.value})...", total=None)
        stream, gt = generate(net, sc)

    network_out = network_out or out.with_suffix(".net")
    write_network(net, network_out)
    write_stream(stream, out)
    if truth is not None:
        write_stream(stream_from_trajectories(gt.trajectories, net.names), truth)

    console.print(Panel.fit(
        f"路段数: {len(net)}\n轨迹数: {len(gt.trajectories)}\n更新数: {stream.update_count}\n"
        f"流文件: {out}\n路网文件: {network_out}",
        title="synth",
        border_style="green",
    ))
    finish(ctx, out, dict(asdict(sc), undirected=undirected), [], started, seed, seeds)


@app.command("train-spatial")
@guarded
def train_spatial_cmd(
    ctx: typer.Context,
    network: Path = typer.Option(..., "--network", help="路网文件"),
    stream: Path = typer.Option(..., "--stream", help="训练流文件"),
    out: Path = typer.Option(..., "--out", help="输出的空间模型 (.sp)"),
    order: Optional[int] = typer.Option(None, "--order", help="Markov trie 阶数 k"),
):
    """训练 k 阶 Markov trie"""
    started = time.perf_counter()
    state: RunState = ctx.obj
    k = state.config.spatial.order if order is None else order
    net = read_network(network)
    trajs = group_by_object(read_stream(stream, net))
    model = spatial_training(net, trajs, k)
    write_spatial_model(model, net, out)
    nodes = sum(1 for _ in model.nodes())
    console.print(f"[green]✓ 空间模型已写入 {out}[/green] (k={k}, {nodes} 个节点, {len(trajs)} 条轨迹)")
    finish(ctx, out, {"order": k}, [network, stream], started)


@app.command("train-temporal")
@guarded
def train_temporal_cmd(
    ctx: typer.Context,
    network: Path = typer.Option(..., "--network", help="路网文件"),
    stream: Path = typer.Option(..., "--stream", help="训练流文件"),
    out: Path = typer.Option(..., "--out", help="输出的时间模型 (.tt)"),
    iters: Optional[int] = typer.Option(None, "--iters", help="EM 迭代次数"),
    sigma_star: Optional[float] = typer.Option(None, "--sigma-star", help="GPS 空间误差（米）"),
    delta: Optional[float] = typer.Option(None, "--delta", help="速度平滑度 Δ（默认从数据估计）"),
    workers: Optional[int] = typer.Option(None, "--workers", envvar="ONTRAC_WORKERS", help="E 步并行进程数"),
    fmt: OutputFormat = typer.Option(OutputFormat.CSV, "--format", help="训练报告格式"),
):
    """EM 训练通行时间模型，输出每轮对数似然"""
    started = time.perf_counter()
    state: RunState = ctx.obj
    sigma = state.config.temporal.sigma_star if sigma_star is None else sigma_star
    tc = training_config(state.config, resolve_workers(state, workers))
    if iters is not None:
        tc = replace(tc, iterations=iters)
    net = read_network(network)
    trajs = group_by_object(read_stream(stream, net))

    with progress_bar(state) as progress:
        task = progress.add_task("EM 训练...", total=None)

        def on_iteration(i: int, ll: float) -> None:
            progress.update(task, description=f"EM 第 {i}/{tc.iterations} 轮: 对数似然 {ll:.4f}")

        model, report = temporal_training(net, trajs, tc, sigma, delta, progress=on_iteration)

    write_travel_time_model(model, net, out)
    if report.trajectories_skipped:
        console.print(f"[yellow]跳过 {report.trajectories_skipped} 条不满足推断前置条件的轨迹[/yellow]")
    if any(report.trajectories_failed):
        console.print(f"[yellow]QP 未收敛而被单轮排除的轨迹数（逐轮）: {report.trajectories_failed}[/yellow]")
    console.print(
        f"[green]✓ 时间模型已写入 {out}[/green] (Δ={model.delta:.6g}, "
        f"有数据路段 {report.segments_with_data}, 默认值路段 {report.segments_defaulted})"
    )
    emit_rows(report.rows(), fmt)
    finish(ctx, out, dict(asdict(tc), sigma_star=sigma, delta=delta), [network, stream], started)


# ---------- 压缩 ----------

@app.command("compress")
@guarded
def compress_cmd(
    ctx: typer.Context,
    spatial_model: Path = typer.Option(..., "--spatial-model", help="空间模型 (.sp)"),
    tt_model: Path = typer.Option(..., "--tt-model", help="时间模型 (.tt)"),
    network: Path = typer.Option(..., "--network", help="路网文件"),
    stream: Path = typer.Option(..., "--stream", help="输入流文件"),
    out: Path = typer.Option(..., "--out", help="输出的压缩文件 (.tc)"),
    lam: Optional[float] = typer.Option(None, "--lambda", help="可接受的时间误差 λ（秒）"),
    fmt: OutputFormat = typer.Option(OutputFormat.CSV, "--format", help="汇总格式"),
):
    """压缩整条流，写出 .tc 文件"""
    started = time.perf_counter()
    state: RunState = ctx.obj
    lam = state.config.compression.lam if lam is None else lam
    net = read_network(network)
    sm = read_spatial_model(spatial_model, net)
    tm = read_travel_time_model(tt_model, net)
    trajs = group_by_object(read_stream(stream, net))
    comps = [compress_trajectory(t, sm, tm, net, lam) for t in trajs]
    write_compressed(comps, net, out)

    updates = sum(len(t) for t in trajs)
    # 时间侧的分母是带时刻的更新（含 START）
    observed = sum(len(t.observed) + (t.start_time is not None) for t in trajs)
    kept_s = sum(len(c.spatial.kept) for c in comps)
    kept_t = sum(len(c.temporal.kept) for c in comps)
    rows = [{
        "trajectories": len(comps),
        "updates": updates,
        "observed": observed,
        "kept_spatial": kept_s,
        "kept_temporal": kept_t,
        "spatial_ratio": updates / kept_s if kept_s else float("inf"),
        "temporal_ratio": observed / kept_t if kept_t else float("inf"),
    }]
    show_table("压缩结果", rows, state.config.display.max_table_rows)
    emit_rows(rows, fmt)
    finish(ctx, out, {"lambda": lam}, [spatial_model, tt_model, network, stream], started)


@app.command("decompress")
@guarded
def decompress_cmd(
    ctx: typer.Context,
    comp: Path = typer.Option(..., "--comp", help="压缩文件 (.tc)"),
    spatial_model: Path = typer.Option(..., "--spatial-model", help="空间模型 (.sp)"),
    tt_model: Path = typer.Option(..., "--tt-model", help="时间模型 (.tt)"),
    network: Path = typer.Option(..., "--network", help="路网文件"),
    out: Path = typer.Option(..., "--out", help="输出的还原流文件"),
):
    """完整还原路段序列与离开时刻"""
    started = time.perf_counter()
    net = read_network(network)
    sm = read_spatial_model(spatial_model, net)
    tm = read_travel_time_model(tt_model, net)
    trajs: List[Trajectory] = []
    for c in read_compressed(comp, net):
        rec = decompress_trajectory(c, sm, tm, net)
        exits = tuple(float(t) for t in rec.exit_times)
        start = rec.start_time if c.temporal.kept[0].position == 0 else None
        trajs.append(Trajectory(rec.object, rec.segments, exits, start))
    write_stream(stream_from_trajectories(trajs, net.names), out)
    console.print(f"[green]✓ 已还原 {len(trajs)} 条轨迹到 {out}[/green]")
    finish(ctx, out, {}, [comp, spatial_model, tt_model, network], started)


@app.command("infer")
@guarded
def infer_cmd(
    ctx: typer.Context,
    tt_model: Path = typer.Option(..., "--tt-model", help="时间模型 (.tt)"),
    network: Path = typer.Option(..., "--network", help="路网文件"),
    stream: Path = typer.Option(..., "--stream", help="输入流文件"),
    out: Optional[Path] = typer.Option(None, "--out", help="输出文件（默认标准输出）"),
    fmt: OutputFormat = typer.Option(OutputFormat.CSV, "--format", help="输出格式"),
):
    """推断每个路段的通行时间"""
    started = time.perf_counter()
    state: RunState = ctx.obj
    t = state.config.temporal
    net = read_network(network)
    tm = read_travel_time_model(tt_model, net)
    rows = []
    skipped = 0
    for traj in group_by_object(read_stream(stream, net)):
        try:
            inferred = infer_travel_times(tm, traj, net, t.qp_tol, t.qp_max_iter)
        except OntracError as e:
            if e.module != "ttqp":
                raise
            skipped += 1
            logger.debug("跳过轨迹 %s: %s", traj.object, e)
            continue
        exits = inferred.exit_times(traj)
        for pos, x in zip(inferred.positions, inferred.t_prime):
            rows.append({
                "object": traj.object,
                "position": pos,
                "segment": net.name_of(traj.segments[pos]),
                "travel_time": float(x),
                "exit_time": float(exits[pos]),
            })
    if skipped:
        logger.warning("%d 条轨迹不满足推断前置条件，已跳过", skipped)
    emit_rows(rows, fmt, out)
    if out is not None:
        finish(ctx, out, {}, [tt_model, network, stream], started)


# ---------- 查询与熵 ----------

def _load_oracle(path: Path, names: Sequence[str]) -> List[Optional[int]]:
    ids = {name: i for i, name in enumerate(names)}
    out: List[Optional[int]] = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.reader(f):
            if not row or row[0].startswith("#"):
                continue
            out.append(ids.get(row[2]) if len(row) > 2 and row[2] else None)
    return out


@app.command("where")
@guarded
def where_cmd(
    ctx: typer.Context,
    store: Path = typer.Option(..., "--store", help="存储目录"),
    object_id: Optional[str] = typer.Option(None, "--object", help="对象 id"),
    t: Optional[float] = typer.Option(None, "--time", help="查询时刻（秒）"),
    probes: Optional[Path] = typer.Option(None, "--probes", help="批量查询文件（每行 object,t）"),
    decompression: Decompression = typer.Option(Decompression.PARTIAL, "--decompression", help="partial / full"),
    fmt: OutputFormat = typer.Option(OutputFormat.CSV, "--format", help="输出格式"),
):
    """查询对象在某时刻所在的路段"""
    if probes is None and (object_id is None or t is None):
        console.print("[red]需要 --object 与 --time，或 --probes[/red]")
        raise typer.Exit(code=2)
    with open_snapshot(store) as snap:
        if probes is None:
            r = where_query(snap, object_id, t, decompression)
            emit_rows([{
                "object": object_id,
                "t": t,
                "segment": snap.network.name_of(r.segment),
                "recovered_time": r.recovered_time,
                "exit_time": r.exit_time,
            }], fmt)
            return
        rows = []
        for obj, pt in read_probes(probes):
            row: Dict[str, Any] = {"object": obj, "t": pt, "segment": "", "recovered_time": "", "status": "ok"}
            try:
                r = where_query(snap, obj, pt, decompression)
                row.update(segment=snap.network.name_of(r.segment), recovered_time=r.recovered_time)
            except NotFoundError:
                row["status"] = "unknown"
            except OutOfRangeError:
                row["status"] = "out_of_range"
            rows.append(row)
        emit_rows(rows, fmt)


@app.command("entropy")
@guarded
def entropy_cmd(
    ctx: typer.Context,
    network: Path = typer.Option(..., "--network", help="路网文件"),
    damping: Optional[float] = typer.Option(None, "--damping", help="PageRank 阻尼系数"),
    tol: Optional[float] = typer.Option(None, "--tol", help="幂迭代残差阈值"),
    top: int = typer.Option(5, "--top", help="显示 π 最大的前 N 个路段"),
    spatial_model: Optional[Path] = typer.Option(None, "--spatial-model", help="空间模型（与 --stream 一起计算经验块熵）"),
    stream: Optional[Path] = typer.Option(None, "--stream", help="测试流文件"),
    fmt: OutputFormat = typer.Option(OutputFormat.CSV, "--format", help="输出格式"),
):
    """路网熵 h（以及可选的经验块熵）"""
    state: RunState = ctx.obj
    cfg = state.config.network
    net = read_network(network)
    pi = pagerank(
        net,
        cfg.damping if damping is None else damping,
        cfg.tol if tol is None else tol,
        cfg.max_iter,
    )
    h = network_entropy(net, pi)

    table = Table(title=f"平稳分布 π（{pi.iterations} 次迭代，残差 {pi.residual:.2e}）")
    table.add_column("路段", style="cyan")
    table.add_column("π", justify="right")
    for name, p in summarize(pi, net, top):
        table.add_row(name, f"{p:.6f}")
    console.print(table)
    console.print(f"h = {h:g}")

    rows = [{"measure": "network_entropy", "value": h}]
    if spatial_model is not None and stream is not None:
        sm = read_spatial_model(spatial_model, net)
        hk = empirical_block_entropy(sm, group_by_object(read_stream(stream, net)))
        console.print(f"h_{sm.order} = {hk:g}")
        rows.append({"measure": "empirical_block_entropy", "value": hk})
    emit_rows(rows, fmt)


# ---------- 基准 ----------

@bench_app.command("ingest")
@guarded
def bench_ingest_cmd(
    ctx: typer.Context,
    network: Path = typer.Option(..., "--network", help="路网文件"),
    stream: Path = typer.Option(..., "--stream", help="输入流文件"),
    store: Path = typer.Option(..., "--store", help="存储目录"),
    mode: StoreMode = typer.Option(StoreMode.COMPRESSED, "--mode", help="full / compressed"),
    spatial_model: Optional[Path] = typer.Option(None, "--spatial-model", help="空间模型 (.sp)"),
    tt_model: Optional[Path] = typer.Option(None, "--tt-model", help="时间模型 (.tt)"),
    lam: Optional[float] = typer.Option(None, "--lambda", help="可接受的时间误差 λ（秒）"),
    sync: Optional[SyncMode] = typer.Option(None, "--sync", help="none / flush / fsync"),
    runs: Optional[int] = typer.Option(None, "--runs", help="计时轮数（取中位数）"),
    fresh: bool = typer.Option(False, "--fresh", help="先清空已有存储（回收站）"),
    fmt: OutputFormat = typer.Option(OutputFormat.CSV, "--format", help="报告格式"),
):
    """按流顺序写入存储并测量写入速率"""
    started = time.perf_counter()
    state: RunState = ctx.obj
    cfg = state.config
    if (store / MANIFEST_FILE).exists():
        if not fresh:
            raise ManifestError(f"{store} 已存在存储，使用 --fresh 重新写入")
        reset_store(store, cfg.store.use_recycle_bin)
    net = read_network(network)
    sm = read_spatial_model(spatial_model, net) if spatial_model else None
    tm = read_travel_time_model(tt_model, net) if tt_model else None
    lam = cfg.compression.lam if lam is None else lam
    sync = SyncMode(cfg.store.sync) if sync is None else sync
    runs = cfg.bench.runs if runs is None else runs
    data = read_stream(stream, net)

    with progress_bar(state) as progress:
        progress.add_task(f"写入 {data.update_count} 个更新 ({mode.value}, {runs} 轮)...", total=None)
        report = bench_ingest(store, data, net, mode, sm, tm, lam, sync, runs, cfg.bench.warmup)

    rows = [report.as_dict()]
    show_table("写入基准", rows, cfg.display.max_table_rows)
    emit_rows(rows, fmt)
    finish(ctx, store, {"mode": mode, "lambda": lam, "sync": sync, "runs": runs},
           [network, stream, spatial_model, tt_model], started, manifest_path=store / "bench.manifest.json")


@bench_app.command("query")
@guarded
def bench_query_cmd(
    ctx: typer.Context,
    store: Path = typer.Option(..., "--store", help="存储目录"),
    probes: Optional[Path] = typer.Option(None, "--probes", help="探针文件（每行 object,t）"),
    n: Optional[int] = typer.Option(None, "--n", help="未给出 --probes 时随机生成的探针数"),
    oracle: Optional[Path] = typer.Option(None, "--oracle", help="标准答案文件（每行 object,t,segment）"),
    decompression: Decompression = typer.Option(Decompression.PARTIAL, "--decompression", help="partial / full"),
    runs: Optional[int] = typer.Option(None, "--runs", help="计时轮数（取中位数）"),
    seed: int = typer.Option(0, "--seed", help="随机探针的种子"),
    fmt: OutputFormat = typer.Option(OutputFormat.CSV, "--format", help="报告格式"),
):
    """回答一批 where 查询并测量查询速率"""
    state: RunState = ctx.obj
    cfg = state.config
    runs = cfg.bench.runs if runs is None else runs
    seeds = derive_seeds(seed, ("probes",))
    with open_snapshot(store) as snap:
        if probes is not None:
            probe_list = read_probes(probes)
        else:
            rng = np.random.default_rng(seeds["probes"])
            probe_list = sample_probes(snap, cfg.bench.probes if n is None else n, rng)
        answers = _load_oracle(oracle, snap.network.names) if oracle is not None else None
        with progress_bar(state) as progress:
            progress.add_task(f"{len(probe_list)} 个查询 ({decompression.value}, {runs} 轮)...", total=None)
            report = bench_query(snap, probe_list, decompression, answers, runs, cfg.bench.warmup)
    rows = [report.as_dict()]
    show_table("查询基准", rows, cfg.display.max_table_rows)
    emit_rows(rows, fmt)


# ---------- 复现 ----------

@app.command("repro")
@guarded
def repro_cmd(
    ctx: typer.Context,
    out: Path = typer.Option(Path("repro-out"), "--out", help="输出目录"),
    quick: bool = typer.Option(False, "--quick", help="缩小规模的快速运行"),
    seed: int = typer.Option(REPRO_SEED, "--seed", help="随机种子"),
    workers: Optional[int] = typer.Option(None, "--workers", envvar="ONTRAC_WORKERS", help="E 步并行进程数"),
):
    """端到端复现：合成、训练、λ 扫描、熵、排序、查询与基准"""
    started = time.perf_counter()
    state: RunState = ctx.obj
    cfg = state.config
    settings = ReproSettings.from_config(cfg, quick)
    seeds = derive_seeds(seed)
    n_workers = resolve_workers(state, workers)
    out.mkdir(parents=True, exist_ok=True)

    outputs: Dict[str, List[dict]] = {}
    with progress_bar(state) as progress:
        task = progress.add_task("准备数据...", total=None)
        datasets = []
        for mode in (SynthMode.RANDOM_WALK, SynthMode.SHORTEST_PATH):
            progress.update(task, description=f"合成并训练 ({mode.value})...")
            datasets.append(prepare(mode, settings, cfg, seeds, n_workers))

        progress.update(task, description="λ 扫描...")
        outputs["compression"] = [r for ds in datasets for r in compression_rows(ds, settings.lambdas)]
        outputs["training"] = [r for ds in datasets for r in training_rows(ds)]

        progress.update(task, description="熵...")
        outputs["entropy"] = entropy_rows(datasets, cfg)

        progress.update(task, description="目的地集中度排序...")
        outputs["ordering"] = ordering_rows(settings, cfg, seeds["ordering"], seeds["split"])

        progress.update(task, description="局部解压一致性...")
        rng = np.random.default_rng(seeds["probes"])
        outputs["queries"] = [r for ds in datasets for r in query_rows(ds, settings, rng)]

        progress.update(task, description="吞吐量基准...")
        outputs["bench"] = bench_rows(datasets[0], settings, cfg, seeds, out / "stores")

    for name, rows in outputs.items():
        (out / f"{name}.csv").write_text(rows_to_text(rows, OutputFormat.CSV), encoding="utf-8")

    violations = sum(r["lambda_violations"] for r in outputs["compression"])
    lossy = sum(r["lossless_failures"] for r in outputs["compression"])
    mismatches = sum(r["answer_mismatches"] + r["window_mismatches"] for r in outputs["queries"])
    console.print(Panel.fit(
        f"λ 违例: {violations}\n无损失败: {lossy}\n局部解压不一致: {mismatches}\n"
        f"排序差距: {outputs['ordering'][0]['gap']:.2f}\n输出目录: {out}",
        title="repro" + (" --quick" if quick else ""),
        border_style="green" if violations == lossy == mismatches == 0 else "red",
    ))
    finish(ctx, out, dict(asdict(settings), quick=quick, workers=n_workers), [], started, seed, seeds,
           manifest_path=out / "manifest.json")
