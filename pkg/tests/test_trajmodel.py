# -*- coding: utf-8 -*-
import pytest

from ontrac.errors import ParseError, ValidationError
from ontrac.trajmodel import (
    EventKind,
    Trajectory,
    group_by_object,
    parse_stream,
    serialize_stream,
    split_train_test,
    stream_from_trajectories,
)


def test_running_example_stream(running_stream, running_trajs, ids):
    assert running_stream.update_count == 13
    o3 = running_trajs["o3"]
    assert o3.segments == (ids("s_3,2"), ids("s_2,3"), ids("s_1,4"))
    assert o3.timestamps == (None, None, 17.0)
    assert o3.start_time == 0.0
    assert o3.observed == [2]
    assert list(running_trajs) == ["o1", "o2", "o3", "o4"]


def test_parse_without_network_interns_names():
    stream = parse_stream("a,x,1\na,y,\na,x,3\n")
    assert stream.names == ("x", "y")
    assert [u.segment for u in stream.updates] == [0, 1, 0]
    assert stream.updates[1].timestamp is None


def test_unknown_segment_with_network(running_net):
    with pytest.raises(ValidationError):
        parse_stream('o,"s_9,9",1\n', running_net)


def test_non_monotone_timestamps_name_the_object():
    with pytest.raises(ValidationError) as exc:
        parse_stream("car7,x,5\ncar7,y,5\n")
    assert "car7" in str(exc.value)


def test_missing_timestamps_do_not_break_monotonicity():
    stream = parse_stream("a,x,1\na,y,\na,z,2\n")
    assert stream.update_count == 3


@pytest.mark.parametrize("text", ["a,x,-1\n", "a,x,inf\n", "a,x,nan\n"])
def test_invalid_timestamp_values(text):
    with pytest.raises(ValidationError):
        parse_stream(text)


@pytest.mark.parametrize(
    "text",
    ["a,x\n", "a,x,1,2\n", "a,x,soon\n", "a,END,4\n", "a,START,\n", ",x,1\n"],
)
def test_malformed_records(text):
    with pytest.raises(ParseError):
        parse_stream(text)


def test_start_must_precede_updates():
    with pytest.raises(ValidationError):
        parse_stream("a,x,1\na,START,0\n")


def test_start_must_be_before_first_timestamp():
    with pytest.raises(ValidationError):
        parse_stream("a,START,5\na,x,5\n")


def test_end_splits_trajectories_of_same_object():
    stream = parse_stream("a,x,1\na,END,\nb,y,2\na,y,10\na,x,11\n")
    trajs = group_by_object(stream)
    assert [(t.object, len(t)) for t in trajs] == [("a", 1), ("b", 1), ("a", 2)]


def test_timestamps_may_restart_after_end():
    stream = parse_stream("a,x,10\na,END,\na,x,1\n")
    assert len(group_by_object(stream)) == 2


def test_serialize_roundtrip(running_stream, running_net):
    again = parse_stream(serialize_stream(running_stream), running_net)
    assert again.updates == running_stream.updates


def test_stream_from_trajectories_roundtrip(running_trajs, running_net):
    trajs = list(running_trajs.values())
    stream = stream_from_trajectories(trajs, running_net.names)
    assert stream.updates[0].kind is EventKind.START
    assert group_by_object(stream) == trajs


def test_trajectory_length_mismatch():
    with pytest.raises(ValidationError):
        Trajectory("a", (1, 2), (None,))


def test_split_is_deterministic_and_disjoint(running_trajs):
    trajs = list(running_trajs.values())
    train, test = split_train_test(trajs, 0.5, seed=3)
    again = split_train_test(trajs, 0.5, seed=3)
    assert (train, test) == again
    assert len(train) == 2 and len(test) == 2
    assert {t.object for t in train}.isdisjoint({t.object for t in test})


def test_split_keeps_both_sides_non_empty(running_trajs):
    train, test = split_train_test(list(running_trajs.values()), 0.99, seed=0)
    assert len(test) == 1


def test_split_rejects_bad_fraction(running_trajs):
    with pytest.raises(ValidationError):
        split_train_test(list(running_trajs.values()), 1.0, seed=0)
