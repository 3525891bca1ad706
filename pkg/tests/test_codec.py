# -*- coding: utf-8 -*-
import numpy as np
import pytest

from conftest import constant_model
from ontrac.codec import (
    TrajectoryCompressor,
    compress_trajectory,
    decompress_trajectory,
    dump_compressed,
    load_compressed,
    read_compressed,
    write_compressed,
)
from ontrac.errors import CorruptionError, ParseError, ValidationError
from ontrac.spatial import spatial_training
from ontrac.ttcomp import observed_errors


@pytest.fixture(scope="module")
def models(grid, walk_data):
    _, _, trajs = walk_data
    spatial = spatial_training(grid, trajs[:60], 2)
    tt = constant_model(grid, phi=100.0 / 15.0, omega=2.0, sigma_star=5.0)
    return spatial, tt


def test_round_trip_is_lossless_in_space_and_bounded_in_time(grid, walk_data, models):
    _, _, trajs = walk_data
    spatial, tt = models
    for traj in trajs[60:]:
        comp = compress_trajectory(traj, spatial, tt, grid, 20.0)
        rec = decompress_trajectory(comp, spatial, tt, grid)
        assert rec.segments == traj.segments
        assert rec.start_time == traj.start_time
        assert len(rec.exit_times) == len(traj)
        assert observed_errors(tt, traj, comp.temporal, grid).max() <= 20.0
        assert comp.kept_count <= len(traj) + len(comp.temporal.kept)


def test_online_compressor_reports_records(example_trie, running_net, running_trajs, ids):
    tt = constant_model(running_net, phi=10.0, omega=1.0, sigma_star=0.01)
    o4 = running_trajs["o4"]
    comp = TrajectoryCompressor("o4", example_trie, tt, running_net, 1000.0, start_time=0.0)
    assert comp.initial_anchor.position == 0
    emitted = [comp.push(s, t) for s, t in zip(o4.segments, o4.timestamps)]
    assert [kept for kept, _ in emitted] == [(0, ids("s_1,2")), (1, ids("s_2,1")), None, None]
    assert all(anchor is None for _, anchor in emitted)
    result = comp.result()
    assert result.length == 4
    assert result.kept_count == 3


def test_text_format_round_trip(grid, walk_data, models, tmp_path):
    _, _, trajs = walk_data
    spatial, tt = models
    comps = [compress_trajectory(t, spatial, tt, grid, 10.0) for t in trajs[60:]]
    path = tmp_path / "walks.tc"
    write_compressed(comps, grid, path)
    assert read_compressed(path, grid) == comps
    assert dump_compressed(load_compressed(path.read_text(encoding="utf-8"), grid), grid) == path.read_text(
        encoding="utf-8"
    )


def test_text_format_layout(example_trie, running_net, running_trajs):
    tt = constant_model(running_net, phi=10.0, omega=1.0, sigma_star=0.01)
    comp = compress_trajectory(running_trajs["o4"], example_trie, tt, running_net, 1000.0)
    lines = dump_compressed([comp], running_net).splitlines()
    assert lines == [
        "o4,T,0.0,0.0,0",
        'o4,S,0,"s_1,2"',
        'o4,S,1,"s_2,1"',
        "o4,END,4",
    ]


def test_loader_errors(running_net):
    with pytest.raises(ParseError):
        load_compressed("o,X,1\n", running_net)
    with pytest.raises(ParseError):
        load_compressed("o,T,abc,1.0,0\no,END,1\n", running_net)
    with pytest.raises(CorruptionError):
        load_compressed("o,T,0.0,0.0,0\n", running_net)
    with pytest.raises(ValidationError):
        load_compressed('o,S,0,"s_9,9"\no,END,1\n', running_net)


def test_decompress_detects_bad_anchor(example_trie, running_net, running_trajs):
    tt = constant_model(running_net, phi=10.0, omega=1.0)
    comp = compress_trajectory(running_trajs["o4"], example_trie, tt, running_net, 1000.0)
    text = dump_compressed([comp], running_net).replace("o4,END,4", "o4,T,3.0,50.0,2\no4,END,4")
    broken = load_compressed(text, running_net)[0]
    with pytest.raises(CorruptionError):
        decompress_trajectory(broken, example_trie, tt, running_net)
    np.testing.assert_array_equal(
        decompress_trajectory(comp, example_trie, tt, running_net).exit_times, [10.0, 20.0, 30.0, 40.0]
    )
