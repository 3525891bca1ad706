#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
配置加载

默认值写在 DEFAULT_CONFIG 里，包目录下的 config.toml 按节覆盖。
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional

from rich.console import Console

from .errors import ConfigError

# 根据 Python 版本导入 tomllib 或 tomli
if sys.version_info >= (3, 11):
    import tomllib
else:
    try:
        import tomli as tomllib
    except ImportError:
        tomllib = None

console = Console(stderr=True)

CONFIG_PATH = Path(__file__).parent / "config.toml"


@dataclass(frozen=True)
class NetworkConfig:
    """PageRank 配置"""
    damping: float = 0.85
    tol: float = 1e-10
    max_iter: int = 10_000


@dataclass(frozen=True)
class SpatialConfig:
    order: int = 2


@dataclass(frozen=True)
class TemporalConfig:
    """EM 训练与 QP 求解配置"""
    iterations: int = 5
    initial_speed: float = 15.0
    initial_omega_fraction: float = 0.5
    omega_floor: float = 1e-3
    sigma_star: float = 5.0
    rel_tol: float = 1e-6
    qp_tol: float = 1e-6
    qp_max_iter: int = 500


@dataclass(frozen=True)
class CompressionConfig:
    lam: float = 60.0


@dataclass(frozen=True)
class SynthDefaults:
    """synth 子命令的默认参数"""
    rows: int = 10
    cols: int = 10
    segment_length: float = 100.0
    directed: bool = True
    n_trajectories: int = 200
    walk_length: int = 20
    speed_mean: float = 15.0
    speed_std: float = 10.0
    alpha: float = 1.0
    gps_interval: float = 30.0
    time_jitter: float = 0.1
    start_spread: float = 3600.0
    seed: int = 0


@dataclass(frozen=True)
class StoreConfig:
    sync: str = "fsync"
    use_recycle_bin: bool = True


@dataclass(frozen=True)
class BenchConfig:
    runs: int = 3
    warmup: bool = True
    probes: int = 1000


@dataclass(frozen=True)
class PerformanceConfig:
    max_workers: int = 1


@dataclass(frozen=True)
class DisplayConfig:
    show_progress: bool = True
    log_level: str = "WARNING"
    max_table_rows: int = 20


@dataclass(frozen=True)
class OntracConfig:
    """ontrac 完整配置"""
    network: NetworkConfig = field(default_factory=NetworkConfig)
    spatial: SpatialConfig = field(default_factory=SpatialConfig)
    temporal: TemporalConfig = field(default_factory=TemporalConfig)
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    synth: SynthDefaults = field(default_factory=SynthDefaults)
    store: StoreConfig = field(default_factory=StoreConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    performance: PerformanceConfig = field(default_factory=PerformanceConfig)
    display: DisplayConfig = field(default_factory=DisplayConfig)


# 默认配置
DEFAULT_CONFIG = OntracConfig()

# toml 键名与字段名不一致的情况
_KEY_ALIASES = {"lambda": "lam"}


def _merge_section(default: Any, section: Dict[str, Any], name: str) -> Any:
    known = {f.name: f for f in fields(default)}
    updates: Dict[str, Any] = {}
    for key, value in section.items():
        attr = _KEY_ALIASES.get(key, key)
        if attr not in known:
            raise ConfigError(f"[{name}] 中有未知配置项: {key}")
        expected = type(getattr(default, attr))
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, expected):
            raise ConfigError(f"[{name}].{key} 应为 {expected.__name__}，实际为 {type(value).__name__}")
        updates[attr] = value
    return replace(default, **updates)


def load_config(config_path: Optional[Path] = None) -> OntracConfig:
    """加载配置文件；文件不存在时使用默认配置"""
    if config_path is None:
        config_path = CONFIG_PATH

    if not config_path.exists():
        console.print(f"[dim]配置文件不存在，使用默认配置: {config_path}[/dim]")
        return DEFAULT_CONFIG

    if tomllib is None:
        console.print("[yellow]警告: 无法导入 tomllib/tomli，使用默认配置[/yellow]")
        return DEFAULT_CONFIG

    try:
        with open(config_path, "rb") as f:
            config_dict = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"无法解析配置文件 {config_path}: {e}") from e

    sections: Dict[str, Any] = {}
    for f in fields(DEFAULT_CONFIG):
        default = getattr(DEFAULT_CONFIG, f.name)
        raw = config_dict.get(f.name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"配置节 [{f.name}] 必须是表")
        sections[f.name] = _merge_section(default, raw, f.name)

    unknown = set(config_dict) - set(sections)
    if unknown:
        raise ConfigError(f"未知配置节: {', '.join(sorted(unknown))}")

    return OntracConfig(**sections)
