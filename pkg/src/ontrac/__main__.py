#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""ontrac 入口，仅委托到 cli 模块"""

from .cli import app


def cli():
    """CLI 入口点"""
    app()


if __name__ == "__main__":
    cli()
