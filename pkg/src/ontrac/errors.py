#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ontrac 异常层次

所有库内错误都继承 OntracError，并带一个模块标签，
CLI 据此打印 ``[模块] 消息`` 并以退出码 1 结束。
"""
from __future__ import annotations

from typing import Optional

import numpy as np


class OntracError(Exception):
    """ontrac 所有错误的基类"""

    module: str = "ontrac"

    def __init__(self, message: str, *, module: Optional[str] = None) -> None:
        super().__init__(message)
        self.message = message
        if module is not None:
            self.module = module

    def __str__(self) -> str:
        return self.message


class ParseError(OntracError):
    """输入文件格式错误，带行号"""

    def __init__(self, message: str, line: Optional[int] = None, *, module: Optional[str] = None) -> None:
        self.line = line
        if line is not None:
            message = f"第 {line} 行: {message}"
        super().__init__(message, module=module)


class ValidationError(OntracError):
    """数据违反不变量（引用不存在的路段、时间戳非单调等）"""


class ConfigError(OntracError):
    module = "config"


class ConvergenceError(OntracError):
    """迭代算法未在 max_iter 内收敛"""


class QPError(OntracError):
    module = "ttqp"


class QPConvergenceError(QPError):
    """投影牛顿迭代未达到 KKT 容差；保留最好的迭代点"""

    def __init__(self, message: str, best: np.ndarray, residual: float) -> None:
        super().__init__(message)
        self.best = best
        self.residual = residual


class CorruptionError(OntracError):
    """压缩数据与模型/路网不一致，无法还原"""


class NotFoundError(OntracError):
    module = "query"


class OutOfRangeError(OntracError):
    module = "query"


class ManifestError(OntracError):
    module = "store"


class StoreWriteError(OntracError):
    module = "store"


class SynthError(OntracError):
    module = "synth"
