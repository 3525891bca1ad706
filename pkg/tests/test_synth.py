# -*- coding: utf-8 -*-
from collections import Counter

import networkx as nx
import numpy as np
import pytest

from ontrac.errors import SynthError, ValidationError
from ontrac.synth import (
    SynthConfig,
    SynthMode,
    destination_probabilities,
    gen_random_walk,
    generate,
    make_cycle_network,
    make_grid_network,
    segment_graph,
)
from ontrac.trajmodel import EventKind, group_by_object


@pytest.mark.parametrize(
    "rows, cols, directed, expected",
    [(2, 2, False, 12), (1, 1, False, 4), (2, 2, True, 24), (10, 10, True, 440)],
)
def test_grid_segment_counts(rows, cols, directed, expected):
    assert len(make_grid_network(rows, cols, 100.0, directed)) == expected


def test_undirected_grid_matches_example(running_net):
    net = make_grid_network(2, 2, 2.0, directed=False)
    assert net.names == running_net.names
    for seg in range(len(net)):
        assert set(net.adjacency[seg]) == set(running_net.adjacency[running_net.id_of(net.name_of(seg))])


def test_directed_grid_has_no_u_turns():
    net = make_grid_network(3, 3, 50.0)
    for seg, succs in enumerate(net.adjacency):
        name = net.name_of(seg)
        assert 1 <= len(succs) <= 3
        for nxt in succs:
            # 同一道路的反向路段名称相同，只有方向后缀不同
            assert net.name_of(nxt).split(":")[0] != name.split(":")[0]


def test_random_walks_follow_successors(grid):
    config = SynthConfig(n_trajectories=30, walk_length=12, seed=4)
    stream, truth = generate(grid, config)
    assert len(truth.trajectories) == 30
    for traj in truth.trajectories:
        assert len(traj) == 12
        for a, b in zip(traj.segments, traj.segments[1:]):
            assert b in grid.adjacency[a]
        assert np.all(np.diff((traj.start_time,) + traj.timestamps) > 0)


def test_stream_is_well_formed(grid):
    stream, truth = generate(grid, SynthConfig(n_trajectories=20, walk_length=8, gps_interval=25.0, seed=9))
    seen = {}
    for u in stream.updates:
        state = seen.get(u.object)
        if u.kind is EventKind.START:
            assert state is None
            seen[u.object] = "open"
        elif u.kind is EventKind.END:
            assert state == "open"
            seen[u.object] = "closed"
        else:
            assert state == "open"
    assert set(seen.values()) == {"closed"}
    assert stream.update_count == 20 * 8


def test_sparsified_timestamps(grid):
    stream, truth = generate(grid, SynthConfig(n_trajectories=20, walk_length=15, gps_interval=30.0, seed=2))
    emitted = {t.object: t for t in group_by_object(stream)}
    for true in truth.trajectories:
        traj = emitted[true.object]
        assert traj.timestamps[0] == true.timestamps[0]
        assert traj.timestamps[-1] == true.timestamps[-1]
        kept = [t for t in traj.timestamps[:-1] if t is not None]
        assert all(b - a >= 30.0 for a, b in zip(kept, kept[1:]))
        for t, ref in zip(traj.timestamps, true.timestamps):
            assert t is None or t == ref


def test_generation_is_deterministic(grid):
    config = SynthConfig(mode=SynthMode.SHORTEST_PATH, n_trajectories=15, seed=21)
    a, truth_a = generate(grid, config)
    b, truth_b = generate(grid, config)
    assert a.updates == b.updates
    np.testing.assert_array_equal(truth_a.segment_means, truth_b.segment_means)
    c, _ = generate(grid, SynthConfig(mode=SynthMode.SHORTEST_PATH, n_trajectories=15, seed=22))
    assert a.updates != c.updates


def test_shortest_paths_are_shortest(grid):
    _, truth = generate(grid, SynthConfig(mode=SynthMode.SHORTEST_PATH, n_trajectories=25, seed=5))
    g = segment_graph(grid)
    for traj in truth.trajectories:
        segs = traj.segments
        assert len(segs) >= 2
        best = nx.dijkstra_path_length(g, segs[0], segs[-1], weight="weight")
        assert sum(grid.lengths[s] for s in segs[1:]) == pytest.approx(best)


def test_alpha_concentrates_destinations(grid):
    _, truth = generate(grid, SynthConfig(mode=SynthMode.SHORTEST_PATH, n_trajectories=100, alpha=5.0, seed=8))
    dests = Counter(t.segments[-1] for t in truth.trajectories)
    assert dests.most_common(1)[0][1] > 90


def test_destination_probabilities():
    p = destination_probabilities(10, 0.5)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(np.diff(p) < 0)
    assert p[1] / p[0] == pytest.approx(np.exp(-0.5))


def test_constant_speed_means(grid):
    _, truth = generate(grid, SynthConfig(n_trajectories=1, speed_std=0.0, speed_mean=20.0))
    np.testing.assert_allclose(truth.segment_means, grid.lengths / 20.0)


def test_invalid_settings():
    with pytest.raises(ValidationError):
        SynthConfig(alpha=0.0)
    with pytest.raises(ValidationError):
        SynthConfig(walk_length=0)
    with pytest.raises(ValidationError):
        make_grid_network(0, 3, 100.0)
    with pytest.raises(ValidationError):
        make_cycle_network(0)
    with pytest.raises(SynthError):
        gen_random_walk(make_cycle_network(3), SynthConfig(mode=SynthMode.SHORTEST_PATH))
