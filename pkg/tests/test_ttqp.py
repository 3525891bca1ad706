# -*- coding: utf-8 -*-
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np
import pytest
from scipy.optimize import minimize

from conftest import DATA, constant_model
from ontrac.errors import ParseError, QPError, ValidationError
from ontrac.synth import make_cycle_network
from ontrac.trajmodel import Trajectory
from ontrac.ttqp import (
    GpsBlock,
    QPInstance,
    TravelTimeModel,
    build_qp,
    dump_travel_time_model,
    gps_temporal_error,
    infer_travel_times,
    kkt_residual,
    load_travel_time_model,
    log_likelihood,
    partition_blocks,
    solve_qp,
)


def bounded_oracle(qp: QPInstance) -> np.ndarray:
    """用 L-BFGS-B 独立求解非负约束 QP"""
    n = len(qp.c)
    res = minimize(
        qp.objective,
        np.ones(n),
        jac=lambda x: qp.Q @ x + qp.c,
        bounds=[(0.0, None)] * n,
        method="L-BFGS-B",
        options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10_000},
    )
    return res.x


@pytest.fixture(scope="module")
def worked():
    with open(DATA / "worked_qp.toml", "rb") as f:
        return tomllib.load(f)


@pytest.fixture(scope="module")
def worked_case(worked):
    m = worked["model"]
    net = make_cycle_network(3, m["segment_length"])
    model = TravelTimeModel(np.array(m["phi"]), np.array(m["omega"]), m["delta"], 1.0)
    block = GpsBlock((0, 1, 2), m["observed_gap"], m["sigma_block"])
    return net, model, [block]


def test_worked_instance_matrix(worked, worked_case):
    net, model, blocks = worked_case
    qp = build_qp(model, blocks, net.lengths)
    printed = worked["printed"]

    smooth = np.array([[0.04, -0.04, 0.0], [-0.04, 0.08, -0.04], [0.0, -0.04, 0.04]])
    expected_q = np.array(printed["q1"]) + smooth + 1.0 / 9.0
    np.testing.assert_allclose(qp.Q, expected_q, atol=1e-12)

    expected_c = np.array(printed["c1"]) - 17.0 / 9.0
    np.testing.assert_allclose(qp.c, expected_c, atol=1e-12)
    assert qp.variable_map == ((0, 0, 0), (0, 1, 1), (0, 2, 2))


def test_worked_instance_solution(worked_case):
    net, model, blocks = worked_case
    qp = build_qp(model, blocks, net.lengths)
    result = solve_qp(qp)
    np.testing.assert_allclose(result.t_prime, bounded_oracle(qp), atol=1e-5)
    assert result.residual <= 1e-6
    assert result.objective == pytest.approx(qp.objective(result.t_prime))


def test_worked_instance_from_trajectory(running_net, running_trajs, ids):
    phi = np.full(len(running_net), 5.0)
    omega = np.ones(len(running_net))
    for name, p, w in (("s_3,2", 6.0, 1.0), ("s_2,3", 12.0, 2.0), ("s_1,4", 7.0, 2.0)):
        phi[ids(name)], omega[ids(name)] = p, w
    # σ_j = σ* · 17 / 6 = 3
    model = TravelTimeModel(phi, omega, 2.5, 18.0 / 17.0)
    o3 = running_trajs["o3"]

    blocks = partition_blocks(o3, running_net, model.sigma_star)
    assert len(blocks) == 1
    assert blocks[0].sigma_j == pytest.approx(3.0)

    inferred = infer_travel_times(model, o3, running_net)
    qp = build_qp(model, blocks, running_net.lengths)
    np.testing.assert_allclose(inferred.t_prime, bounded_oracle(qp), atol=1e-5)
    assert inferred.positions == (0, 1, 2)
    exits = inferred.exit_times(o3)
    np.testing.assert_allclose(exits, np.cumsum(inferred.t_prime))


def test_objective_matches_negative_log_likelihood():
    rng = np.random.default_rng(3)
    net = make_cycle_network(8, 50.0)
    for _ in range(20):
        model = TravelTimeModel(
            rng.uniform(1, 10, 8), rng.uniform(0.5, 3, 8), rng.uniform(0.1, 2), rng.uniform(0.5, 5)
        )
        blocks = [
            GpsBlock((0, 1), rng.uniform(2, 20), rng.uniform(0.5, 4)),
            GpsBlock((2,), rng.uniform(2, 20), rng.uniform(0.5, 4)),
            GpsBlock((3, 4, 5), rng.uniform(2, 20), rng.uniform(0.5, 4)),
        ]
        qp = build_qp(model, blocks, net.lengths)
        x1, x2 = rng.uniform(0, 10, 6), rng.uniform(0, 10, 6)
        lhs = qp.objective(x1) - qp.objective(x2)
        rhs = log_likelihood(model, blocks, net.lengths, x2) - log_likelihood(model, blocks, net.lengths, x1)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_solver_against_oracle_on_random_instances():
    rng = np.random.default_rng(11)
    net = make_cycle_network(6, 100.0)
    for _ in range(15):
        model = TravelTimeModel(rng.uniform(1, 10, 6), rng.uniform(0.5, 3, 6), rng.uniform(0.01, 1), 1.0)
        blocks = [GpsBlock((0, 1, 2), rng.uniform(0.5, 30), rng.uniform(0.2, 3)),
                  GpsBlock((3, 4), rng.uniform(0.5, 30), rng.uniform(0.2, 3))]
        qp = build_qp(model, blocks, net.lengths)
        result = solve_qp(qp)
        assert np.all(result.t_prime >= 0)
        best = qp.objective(bounded_oracle(qp))
        assert result.objective <= best + 1e-6 * max(1.0, abs(best))


def test_solver_handles_binding_constraints():
    qp = QPInstance(np.array([[2.0, 0.0], [0.0, 2.0]]), np.array([-2.0, 4.0]), ())
    np.testing.assert_allclose(solve_qp(qp).t_prime, [1.0, 0.0], atol=1e-8)

    qp = QPInstance(np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([-1.0, 3.0]), ())
    result = solve_qp(qp)
    np.testing.assert_allclose(result.t_prime, [0.5, 0.0], atol=1e-8)
    assert kkt_residual(result.t_prime, qp.Q @ result.t_prime + qp.c) <= 1e-6


def test_solver_rejects_bad_matrices():
    with pytest.raises(QPError):
        solve_qp(QPInstance(np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros(2), ()))
    with pytest.raises(QPError):
        solve_qp(QPInstance(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2), ()))


def test_kkt_residual():
    assert kkt_residual(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == 0.0
    assert kkt_residual(np.array([1.0, 0.0]), np.array([0.5, -3.0])) == 3.0
    assert kkt_residual(np.zeros(0), np.zeros(0)) == 0.0


def test_gps_temporal_error():
    assert gps_temporal_error(2.0, 10.0, 5.0) == 4.0
    with pytest.raises(ValidationError):
        gps_temporal_error(2.0, 0.0, 5.0)


def test_partition_blocks_with_start(running_net, running_trajs, ids):
    blocks = partition_blocks(running_trajs["o4"], running_net, 1.0)
    assert [b.segments for b in blocks] == [(ids("s_1,2"),), (ids("s_2,1"),), (ids("s_2,3"), ids("s_3,4"))]
    assert [b.observed_gap for b in blocks] == [10.0, 5.0, 20.0]
    assert [b.positions for b in blocks] == [(0,), (1,), (2, 3)]
    assert blocks[2].sigma_j == pytest.approx(20.0 / 4.0)


def test_partition_blocks_without_start(running_net, running_trajs, ids):
    o1 = running_trajs["o1"]
    bare = Trajectory(o1.object, o1.segments, o1.timestamps)
    blocks = partition_blocks(bare, running_net, 1.0)
    assert [b.segments for b in blocks] == [(ids("s_2,3"),), (ids("s_3,4"),)]
    assert [b.observed_gap for b in blocks] == [10.0, 20.0]


def test_partition_blocks_preconditions(running_net, ids):
    seg = ids("s_2,1")
    with pytest.raises(ValidationError):
        partition_blocks(Trajectory("x", (seg, seg), (1.0, None)), running_net, 1.0)
    with pytest.raises(ValidationError):
        partition_blocks(Trajectory("x", (seg,), (5.0,)), running_net, 1.0)
    with pytest.raises(ValidationError):
        partition_blocks(Trajectory("x", (seg, 99), (1.0, 2.0)), running_net, 1.0)


def test_block_validation():
    with pytest.raises(QPError):
        GpsBlock((), 1.0, 1.0)
    with pytest.raises(QPError):
        GpsBlock((0,), 0.0, 1.0)


def test_model_validation():
    with pytest.raises(ValidationError):
        TravelTimeModel(np.array([1.0, 0.0]), np.ones(2), 1.0, 1.0)
    with pytest.raises(ValidationError):
        TravelTimeModel(np.ones(2), np.ones(3), 1.0, 1.0)
    with pytest.raises(ValidationError):
        TravelTimeModel(np.ones(2), np.ones(2), 0.0, 1.0)
    model = TravelTimeModel(np.ones(2), np.ones(2), 1.0, 1.0)
    with pytest.raises(ValueError):
        model.phi[0] = 3.0


def test_model_serialization(running_net):
    rng = np.random.default_rng(5)
    n = len(running_net)
    model = TravelTimeModel(rng.uniform(1, 9, n), rng.uniform(0.1, 2, n), 0.37, 4.5)
    text = dump_travel_time_model(model, running_net)
    again = load_travel_time_model(text, running_net)
    np.testing.assert_array_equal(again.phi, model.phi)
    np.testing.assert_array_equal(again.omega, model.omega)
    assert (again.delta, again.sigma_star) == (0.37, 4.5)
    assert dump_travel_time_model(again, running_net) == text


def test_model_loader_errors(running_net):
    with pytest.raises(ParseError):
        load_travel_time_model("phi,1\n", running_net)
    text = dump_travel_time_model(constant_model(running_net, 2.0, 1.0), running_net)
    with pytest.raises(ValidationError):
        load_travel_time_model("\n".join(text.splitlines()[:-1]) + "\n", running_net)
    with pytest.raises(ParseError):
        load_travel_time_model(text.replace("2.0,1.0", "x,1.0", 1), running_net)
