# -*- coding: utf-8 -*-
import numpy as np
import pytest

from conftest import constant_model
from ontrac.errors import CorruptionError, ValidationError
from ontrac.trajmodel import Trajectory
from ontrac.ttcomp import (
    Anchor,
    CompressedTemporal,
    TemporalCompressor,
    fuse,
    fused_timeline,
    observed_errors,
    recover_exit_times,
    temporal_compress,
    temporal_recover,
)


def without_start(traj: Trajectory) -> Trajectory:
    return Trajectory(traj.object, traj.segments, traj.timestamps)


def test_fuse():
    assert fuse(10.0, 1.0, 5.0, 0.0) == 5.0
    assert fuse(10.0, 0.0, 5.0, 1.0) == 10.0
    assert fuse(10.0, 1.0, 5.0, 1.0) == 7.5
    with pytest.raises(ValidationError):
        fuse(10.0, 0.0, 5.0, 0.0)
    with pytest.raises(ValidationError):
        fuse(10.0, -1.0, 5.0, 1.0)


def test_o4_keeps_only_first_anchor(running_net, running_trajs):
    """
    s_3,4 不保留锚点：精确融合后的偏差约 4.997，严格小于 λ = 5

    把这个偏差取整为 5 再与 λ 比较，会得到保留 s_3,4 的另一种结果；这里按精确值比较。
    """
    model = constant_model(running_net, phi=10.0, omega=1.0, sigma_star=0.01)
    o4 = without_start(running_trajs["o4"])
    comp = temporal_compress(model, o4, running_net, lam=5.0)
    assert comp.kept == (Anchor(2.0, 10.0, 1),)
    # 融合时刻略大于观测值，与模型预测的偏差始终略小于 5
    errors = observed_errors(model, o4, comp, running_net)
    assert errors.max() < 5.0
    assert errors.max() > 4.9


def test_o4_tight_lambda_keeps_anchors(running_net, running_trajs):
    model = constant_model(running_net, phi=10.0, omega=1.0, sigma_star=0.01)
    o4 = without_start(running_trajs["o4"])
    comp = temporal_compress(model, o4, running_net, lam=4.0)
    # 位置 2 的偏差约 4.997 超过 4；之后模型与观测一致
    assert [a.position for a in comp.kept] == [1, 2]
    assert comp.kept[1].distance == 4.0
    assert comp.kept[1].time == pytest.approx(15.0031, abs=1e-4)


def test_start_gives_initial_anchor(running_net, running_trajs):
    model = constant_model(running_net, phi=5.0, omega=1.0)
    comp = temporal_compress(model, running_trajs["o4"], running_net, lam=100.0)
    assert comp.kept == (Anchor(0.0, 0.0, 0),)


@pytest.mark.parametrize("lam", [1.0, 10.0, 30.0, 120.0])
def test_error_bound_on_observed_boundaries(grid, walk_data, lam):
    _, _, trajs = walk_data
    model = constant_model(grid, phi=100.0 / 15.0, omega=2.0, sigma_star=5.0)
    for traj in trajs:
        comp = temporal_compress(model, traj, grid, lam)
        errors = observed_errors(model, traj, comp, grid)
        assert errors.max() <= lam


def test_larger_lambda_keeps_fewer_anchors(grid, walk_data):
    _, _, trajs = walk_data
    model = constant_model(grid, phi=100.0 / 15.0, omega=2.0, sigma_star=5.0)
    small = sum(len(temporal_compress(model, t, grid, 1.0).kept) for t in trajs)
    large = sum(len(temporal_compress(model, t, grid, 1e6).kept) for t in trajs)
    assert large == len(trajs)
    assert small > large


def test_recovery_hits_anchor_times(grid, walk_data):
    _, _, trajs = walk_data
    model = constant_model(grid, phi=100.0 / 15.0, omega=2.0, sigma_star=5.0)
    for traj in trajs[:20]:
        comp = temporal_compress(model, traj, grid, 5.0)
        origin, exits = recover_exit_times(model, comp, traj.segments, grid)
        boundary = np.concatenate(([origin], exits))
        for a in comp.kept:
            assert boundary[a.position] == a.time
        assert np.all(np.diff(boundary) >= 0)


def test_recovery_clamps_to_next_anchor(running_net):
    model = constant_model(running_net, phi=10.0, omega=1.0)
    segs = [0, 1, 2]
    comp = CompressedTemporal("x", (Anchor(0.0, 0.0, 0), Anchor(4.0, 12.0, 2)))
    _, exits = recover_exit_times(model, comp, segs, running_net)
    np.testing.assert_array_equal(exits, [10.0, 12.0, 22.0])

    comp = CompressedTemporal("x", (Anchor(0.0, 0.0, 0), Anchor(4.0, 5.0, 2)))
    _, exits = recover_exit_times(model, comp, segs, running_net)
    np.testing.assert_array_equal(exits, [5.0, 5.0, 15.0])


def test_temporal_recover_pairs(running_net, running_trajs):
    model = constant_model(running_net, phi=10.0, omega=1.0, sigma_star=0.01)
    o4 = running_trajs["o4"]
    comp = temporal_compress(model, o4, running_net, lam=1000.0)
    pairs = temporal_recover(model, comp, o4.segments, running_net)
    assert pairs == [(s, 10.0 * (i + 1)) for i, s in enumerate(o4.segments)]


def test_recovery_detects_corruption(running_net):
    model = constant_model(running_net, phi=10.0, omega=1.0)
    segs = [0, 1, 2]
    with pytest.raises(CorruptionError):
        recover_exit_times(model, CompressedTemporal("x", (Anchor(0.0, 0.0, 0), Anchor(3.0, 12.0, 2))), segs, running_net)
    with pytest.raises(CorruptionError):
        recover_exit_times(model, CompressedTemporal("x", (Anchor(4.0, 0.0, 2),)), segs, running_net)
    with pytest.raises(CorruptionError):
        recover_exit_times(model, CompressedTemporal("x", (Anchor(0.0, 0.0, 0), Anchor(8.0, 9.0, 4))), segs, running_net)
    with pytest.raises(CorruptionError):
        recover_exit_times(model, CompressedTemporal("x", (Anchor(1.0, 0.0, 1),)), segs, running_net)
    with pytest.raises(CorruptionError):
        CompressedTemporal("x", (Anchor(0.0, 5.0, 0), Anchor(2.0, 5.0, 1)))


def test_fused_timeline(running_net, running_trajs):
    model = constant_model(running_net, phi=10.0, omega=1.0, sigma_star=0.01)
    o4 = running_trajs["o4"]
    timeline = fused_timeline(model, o4, running_net)
    assert len(timeline) == len(o4) + 1
    assert timeline[0] == 0.0
    tc = TemporalCompressor(model, running_net.lengths, float("inf"), o4.object, o4.start_time)
    for seg, t in zip(o4.segments, o4.timestamps):
        tc.push(seg, t)
    for b, t in tc.fused:
        assert timeline[b] == t
    # 缺失边界按 φ 比例落在两侧融合值正中
    assert timeline[3] == pytest.approx((timeline[2] + timeline[4]) / 2)


def test_compressor_rejects_bad_input(running_net):
    model = constant_model(running_net, phi=10.0, omega=1.0)
    with pytest.raises(ValidationError):
        TemporalCompressor(model, running_net.lengths, 0.0)
    tc = TemporalCompressor(model, running_net.lengths, 5.0)
    with pytest.raises(ValidationError):
        tc.push(0, None)
    with pytest.raises(ValidationError):
        TemporalCompressor(model, running_net.lengths, 5.0, start_time=0.0).push(99, 1.0)
