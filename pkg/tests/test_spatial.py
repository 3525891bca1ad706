# -*- coding: utf-8 -*-
import csv
import io

import pytest

from ontrac.errors import CorruptionError, ParseError, ValidationError
from ontrac.spatial import (
    CompressedSpatial,
    SpatialCompressor,
    SpatialModel,
    candidate_predictions,
    compression_ratio,
    dump_spatial_model,
    empirical_block_entropy,
    load_spatial_model,
    predict_next,
    spatial_compress,
    spatial_decompress,
    spatial_training,
)
from ontrac.synth import make_cycle_network
from ontrac.trajmodel import Trajectory


def traj(obj, segs):
    return Trajectory(obj, tuple(segs), (None,) * len(segs))


def test_example_trie_predictions(example_trie, ids):
    m = example_trie
    assert predict_next(m, [ids("s_2,1")]) == ids("s_2,3")
    assert predict_next(m, [ids("s_1,4")]) == ids("s_2,3")
    assert predict_next(m, [ids("s_3,2")]) == ids("s_2,3")
    # s_2,3 之后三个后继各出现一次，平局取 id 最小者
    assert predict_next(m, [ids("s_2,3")]) == ids("s_3,2")
    assert predict_next(m, [ids("s_2,1"), ids("s_2,3")]) == ids("s_3,4")
    assert predict_next(m, [ids("s_1,4"), ids("s_2,3")]) == ids("s_3,2")
    assert predict_next(m, [ids("s_3,2"), ids("s_2,3")]) == ids("s_1,4")


def test_unseen_context_falls_back_to_shorter_suffix(example_trie, ids):
    assert predict_next(example_trie, [ids("s_1,2"), ids("s_2,1")]) == ids("s_2,3")
    assert predict_next(example_trie, [ids("s_1,2")]) is None
    assert predict_next(example_trie, []) is None


def test_example_trie_compresses_o4(example_trie, running_trajs, ids):
    o4 = running_trajs["o4"]
    comp = spatial_compress(example_trie, o4)
    assert comp.kept == ((0, ids("s_1,2")), (1, ids("s_2,1")))
    assert compression_ratio(len(o4), len(comp.kept)) == 2.0
    assert spatial_decompress(example_trie, comp, len(o4)) == list(o4.segments)
    assert empirical_block_entropy(example_trie, [o4]) == pytest.approx(1 / 3)


def test_training_counts_all_depths(example_trie, ids):
    node = example_trie.root.children[ids("s_2,3")]
    assert node.count == {ids("s_3,4"): 1, ids("s_3,2"): 1, ids("s_1,4"): 1}
    assert set(node.children) == {ids("s_2,1"), ids("s_1,4"), ids("s_3,2")}
    assert example_trie.trained_update_count == 6


def test_first_position_always_kept(example_trie, ids):
    comp = spatial_compress(example_trie, traj("x", [ids("s_2,3"), ids("s_3,2")]))
    assert comp.kept[0] == (0, ids("s_2,3"))
    assert len(comp.kept) == 1


def test_online_compressor_matches_batch(example_trie, running_trajs):
    o4 = running_trajs["o4"]
    online = SpatialCompressor(example_trie)
    kept = [e for e in (online.push(s) for s in o4.segments) if e is not None]
    assert tuple(kept) == spatial_compress(example_trie, o4).kept


def test_lossless_on_synthetic_walks(grid, walk_data):
    _, _, trajs = walk_data
    model = spatial_training(grid, trajs[:60], 2)
    for t in trajs[60:]:
        comp = spatial_compress(model, t)
        assert spatial_decompress(model, comp, len(t)) == list(t.segments)


def test_perfect_predictor_has_zero_entropy():
    net = make_cycle_network(6)
    walk = traj("c", [i % 6 for i in range(20)])
    model = spatial_training(net, [walk], 1)
    assert empirical_block_entropy(model, [walk]) == 0.0


def test_empty_model_has_entropy_one(running_net, running_trajs):
    empty = SpatialModel(order=2)
    assert empirical_block_entropy(empty, list(running_trajs.values())) == 1.0


def test_training_rejects_bad_input(running_net, running_trajs):
    with pytest.raises(ValidationError):
        spatial_training(running_net, list(running_trajs.values()), 0)
    with pytest.raises(ValidationError):
        spatial_training(running_net, [], 2)
    with pytest.raises(ValidationError):
        spatial_training(running_net, [traj("bad", [0, 99])], 2)


def test_decompress_detects_unpredictable_gap(example_trie, ids):
    comp = CompressedSpatial("x", ((0, ids("s_1,2")),))
    with pytest.raises(CorruptionError):
        spatial_decompress(example_trie, comp, 2)


def test_decompress_rejects_bad_positions(example_trie, ids):
    with pytest.raises(CorruptionError):
        spatial_decompress(example_trie, CompressedSpatial("x", ((0, 1), (5, 2))), 3)
    with pytest.raises(CorruptionError):
        spatial_decompress(example_trie, CompressedSpatial("x", ((0, 1), (1, 2))), 1)


def test_candidates_single_when_history_known(example_trie, ids):
    assert candidate_predictions(example_trie, [ids("s_2,3")], history_unknown=False) == {ids("s_3,2")}
    # 已知部分已达 k 个路段
    known = [ids("s_2,1"), ids("s_2,3")]
    assert candidate_predictions(example_trie, known, history_unknown=True) == {ids("s_3,4")}


def test_candidates_ambiguous_with_unknown_history(example_trie, ids):
    cands = candidate_predictions(example_trie, [ids("s_2,3")], history_unknown=True)
    assert len(cands) >= 2
    assert ids("s_3,2") in cands


def test_candidates_unique_when_all_deeper_contexts_agree(example_trie, ids):
    # [s_2,1] 之下没有更深的节点
    assert candidate_predictions(example_trie, [ids("s_2,1")], history_unknown=True) == {ids("s_2,3")}


def test_model_serialization_is_byte_stable(example_trie, running_net, running_trajs):
    text = dump_spatial_model(example_trie, running_net)
    assert text.splitlines()[0] == "order,2,6"
    again = load_spatial_model(text, running_net)
    assert dump_spatial_model(again, running_net) == text
    retrained = spatial_training(running_net, [running_trajs[o] for o in ("o1", "o2", "o3")], 2)
    assert dump_spatial_model(retrained, running_net) == text
    o4 = running_trajs["o4"]
    assert spatial_compress(again, o4) == spatial_compress(example_trie, o4)


def test_model_loader_errors(running_net):
    with pytest.raises(ParseError):
        load_spatial_model("", running_net)
    with pytest.raises(ParseError):
        load_spatial_model("depth,2,0\n", running_net)
    with pytest.raises(ParseError):
        load_spatial_model('order,1,0\n"s_1,0;s_3,0","s_1,2=1","s_1,2"\n', running_net)


def _rewrite_pred(text, choose):
    rows = list(csv.reader(io.StringIO(text)))
    for row in rows[1:]:
        counts = [item.rpartition("=")[0] for item in row[1].split(";")] if row[1] else []
        other = choose(row[2], counts)
        if other is not None:
            row[2] = other
            break
    else:
        raise AssertionError("没有可改写的节点")
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


@pytest.mark.parametrize("choose", [
    lambda pred, counts: "" if pred else None,
    lambda pred, counts: next((c for c in counts if c != pred), None),
], ids=["pred_cleared", "pred_not_argmax"])
def test_model_loader_rejects_pred_disagreeing_with_counts(example_trie, running_net, choose):
    text = _rewrite_pred(dump_spatial_model(example_trie, running_net), choose)
    with pytest.raises(ParseError):
        load_spatial_model(text, running_net)
