"""ontrac - 路网轨迹在线压缩"""

__version__ = "0.1.0"
