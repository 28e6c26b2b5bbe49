import math

import numpy as np
import pytest

from satmdp.agents import (
    ReductionOracle,
    SatOracle,
    a_sat,
    cover_radius,
    cover_spacing,
    epsilon_net_search,
    exact_value_dp,
    greedy_action,
    greedy_on_q,
    greedy_policy,
    greedy_reference_learner,
    greedy_rollout_value,
    horizon_split_policy,
    horizon_split_q,
    random_learner,
    rollout,
    select_independent,
    tree_optimal_values,
)
from satmdp.cnf import formula_from_ints, satisfied_count
from satmdp.errors import InvariantViolation, ParameterError, ResourceLimitError
from satmdp.gapsat import PromiseKind, check_gap_promise
from satmdp.instances import random_gap_unsat_formula, random_satisfiable_instance
from satmdp.mdp import (
    GAP_SATISFIED,
    OracleSession,
    build_instance,
    enumerate_reachable,
    initial_state,
    transition,
)
from satmdp.reward import params_for_rounds
from satmdp.toys import ToyLinearMdp


def test_greedy_action_figure_root(figure_formula):
    params = params_for_rounds(v=5, h=2, p=2, q=2)
    inst = build_instance(figure_formula, params,
                          start=(-1, 1, -1, -1, -1))
    s = initial_state(inst)
    # offered clause (a | ~b | c); target (F,T,T,T,T) differs on c only
    assert greedy_action(inst, s, wstar=(-1, 1, 1, 1, 1)) == 2


def test_greedy_action_stage_two_keep(figure_formula):
    params = params_for_rounds(v=5, h=2, p=2, q=2)
    inst = build_instance(figure_formula, params, start=(-1, 1, -1, -1, -1))
    s = initial_state(inst)
    s = transition(inst, s, 2)
    s = transition(inst, s, 2)
    # stage two offers variable a; any target agreeing on a says keep
    wstar = inst.wstar_assignment()
    expected = 1 if wstar[0] != -1 else 0
    assert greedy_action(inst, s) == expected


def test_greedy_action_invariant_violation(figure_formula):
    params = params_for_rounds(v=5, h=2, p=2, q=2)
    inst = build_instance(figure_formula, params, start=(-1, 1, -1, -1, -1))
    s = initial_state(inst)
    # clause (a | ~b | c) is satisfied by (T,F,F,..): feeding a target that
    # leaves it unsatisfied must blow up loudly
    with pytest.raises(InvariantViolation):
        greedy_action(inst, s, wstar=(-1, 1, -1, 1, 1))


def test_greedy_reaches_target_within_one_full_round():
    inst, wstar, _ = random_satisfiable_instance(41, v=6, h=3, epsilon=0.125)
    states, _ = enumerate_reachable(inst, budget=20_000)
    for s in states:
        if s.is_terminal or s.n >= inst.params.h:
            continue
        cur = s
        start_round = cur.n
        while not cur.is_terminal:
            cur = transition(inst, cur, greedy_action(inst, cur))
            if cur.w == inst.wstar:
                break
        if cur.w == inst.wstar:
            assert cur.n <= start_round + 1
        else:
            assert cur.is_terminal


def test_exact_value_dp_matches_bottom_up_and_greedy():
    inst, _, _ = random_satisfiable_instance(43, v=5, h=2, epsilon=0.125)
    states, children = enumerate_reachable(inst, budget=20_000)
    bottom_up = tree_optimal_values(inst, states, children)
    for s, expect in list(zip(states, bottom_up))[:80]:
        assert exact_value_dp(inst, s) == pytest.approx(expect, abs=1e-12)
    for s, expect in zip(states, bottom_up):
        assert greedy_rollout_value(inst, s) == pytest.approx(expect, abs=1e-9)


def test_exact_value_dp_unsat_and_budget(figure_instance):
    from satmdp.gapsat import strictify
    f = strictify(formula_from_ints(1, [[1], [-1]], strict=False))
    params = params_for_rounds(v=f.v, h=1, p=2, q=2, b=8)
    inst = build_instance(f, params)
    assert inst.satisfiable is False
    assert exact_value_dp(inst, initial_state(inst)) == 0.0
    with pytest.raises(ResourceLimitError):
        exact_value_dp(figure_instance, initial_state(figure_instance),
                       node_budget=1)


def test_exact_value_dp_initial_state_formula(figure_formula):
    from satmdp.reward import g
    params = params_for_rounds(v=5, h=2, p=2, q=2)
    inst = build_instance(figure_formula, params)
    wstar = inst.wstar_assignment()
    start = (-1,) * 5
    dist = sum(1 for a, b in zip(start, wstar) if a != b)
    assert exact_value_dp(inst, initial_state(inst)) == pytest.approx(
        g(1, dist, inst.params), abs=1e-12)


def test_rollout_semantics(figure_formula):
    params = params_for_rounds(v=5, h=2, p=2, q=2, epsilon=0.125)
    inst = build_instance(figure_formula, params, start=(-1, 1, -1, -1, -1))
    session = OracleSession(inst, seed=1)
    oracle = SatOracle(session)
    traj = rollout(oracle, greedy_policy(inst))
    assert traj.final_state.is_terminal
    assert traj.terminal_kind == GAP_SATISFIED
    assert 1 < len(traj.records) <= inst.params.H
    assert all(r == 0 for _, _, r in traj.records[:-1])
    with pytest.raises(ParameterError):
        rollout(oracle, [])
    with pytest.raises(ParameterError):
        rollout(oracle, [0])  # exhausted before termination


def test_rollout_explicit_action_list(figure_instance):
    session = OracleSession(figure_instance, seed=1)
    oracle = SatOracle(session)
    ref = rollout(oracle, greedy_policy(figure_instance))
    replay = rollout(oracle, ref.actions())
    assert [a for _, a, _ in replay.records] == ref.actions()


def test_a_sat_yes_on_satisfiable_and_witness_is_verified():
    inst, wstar, _ = random_satisfiable_instance(47, v=6, h=2,
                                                 epsilon=1 / 16, b=8)
    result = a_sat(inst.formula, greedy_reference_learner(wstar), inst.params,
                   seed=3)
    assert result.answer == "YES"
    assert satisfied_count(inst.formula, result.witness) \
        >= inst.gap_threshold_count
    # completeness within one episode: few hundred oracle calls at most
    assert sum(result.queries.values()) <= 2 * inst.params.H + 4


def test_a_sat_no_on_gap_unsatisfiable():
    rng = np.random.default_rng(5)
    f = random_gap_unsat_formula(rng, v=7)
    assert check_gap_promise(f, 1 / 16).kind is PromiseKind.GAP_UNSATISFIABLE
    params = params_for_rounds(v=7, h=2, p=2, q=4, epsilon=1 / 16, b=8)
    result = a_sat(f, random_learner(episodes=4, seed=1), params, seed=1)
    assert result.answer == "NO" and result.witness is None


def test_a_sat_budget_exhaustion_answers_no():
    inst, wstar, _ = random_satisfiable_instance(53, v=6, h=2,
                                                 epsilon=1 / 16, b=8)
    result = a_sat(inst.formula, random_learner(episodes=50, seed=2),
                   inst.params, budget=10, seed=2)
    assert result.answer in ("NO", "YES")
    if result.answer == "NO":
        assert result.note == "budget exhausted" or result.witness is None


def test_reduction_oracle_requires_simulator(figure_instance):
    with pytest.raises(ParameterError):
        ReductionOracle(figure_instance, seed=0, budget=10)


def test_greedy_on_q_ties_and_missing():
    toy = ToyLinearMdp(depth=2, num_actions=3, dim=2, structure_seed=3,
                       reward_seed=4)
    q = {((), 0): 1.0, ((), 1): 1.0, ((), 2): 0.5}
    policy = greedy_on_q(q, toy)
    assert policy(()) == 0  # tie broken toward the lowest action
    with pytest.raises(ParameterError, match="no Q estimate"):
        greedy_on_q({}, toy)(())


def test_greedy_on_q_with_exact_q_is_optimal():
    toy = ToyLinearMdp(depth=3, num_actions=3, dim=2, structure_seed=3,
                       reward_seed=4)
    policy = greedy_on_q(toy.q_star_table(), toy)
    s, actions = (), []
    while not toy.is_terminal(s):
        a = policy(s)
        actions.append(a)
        s = toy.transition(s, a)
    assert toy.policy_value(actions) == pytest.approx(toy.v_star())


def test_perturbed_q_keeps_policy_near_optimal():
    # estimates within eps/(2H) of truth lose at most eps of value
    eps = 0.2
    toy = ToyLinearMdp(depth=4, num_actions=3, dim=2, structure_seed=9,
                       reward_seed=10)
    rng = np.random.default_rng(0)
    bound = eps / (2 * toy.horizon)
    exact = toy.q_star_table()
    for _ in range(100):
        q = {k: val + rng.uniform(-bound, bound) for k, val in exact.items()}
        policy = greedy_on_q(q, toy)
        s, actions = (), []
        while not toy.is_terminal(s):
            a = policy(s)
            actions.append(a)
            s = toy.transition(s, a)
        assert toy.policy_value(actions) >= toy.v_star() - eps - 1e-12


def test_select_independent_spans_and_bounds():
    rng = np.random.default_rng(1)
    vectors = [rng.normal(size=3) for _ in range(10)]
    vectors.append(vectors[0] * 2.0)  # dependent
    kept = select_independent(vectors)
    assert len(kept) == 3
    basis = np.stack([vectors[i] for i in kept])
    for vec in vectors:
        alpha, *_ = np.linalg.lstsq(basis.T, vec, rcond=None)
        assert np.linalg.norm(basis.T @ alpha - vec) <= 1e-9
    assert select_independent([np.zeros(3)]) == []


def test_cover_lattice_covers_unit_sphere():
    eps, H, d = 0.1, 3, 2
    r = cover_radius(eps, H, d)
    spacing = cover_spacing(eps, H, d)
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        theta = rng.normal(size=d)
        theta /= np.linalg.norm(theta)
        nearest = spacing * np.round(theta / spacing)
        assert np.linalg.norm(nearest - theta) <= r
        assert np.linalg.norm(nearest) <= 1.0 + spacing * math.sqrt(d) / 2


def test_epsilon_net_zero_reward_mdp():
    toy = ToyLinearMdp(depth=2, num_actions=2, dim=2, structure_seed=12,
                       reward_seed=13)
    toy._leaf_mean = {k: 0.0 for k in toy._leaf_mean}  # silence every payout
    actions, info = epsilon_net_search(toy, eps=0.2, delta=0.2)
    assert toy.policy_value(actions) == 0.0
    assert info["best_estimate"] == 0.0


def test_epsilon_net_finds_planted_policy():
    toy = ToyLinearMdp(depth=3, num_actions=3, dim=2, structure_seed=5,
                       reward_seed=21)
    actions, info = epsilon_net_search(toy, eps=0.1, delta=0.1)
    assert toy.policy_value(actions) >= toy.v_star() - 0.1
    assert info["unique_policies"] <= 27


def test_epsilon_net_grouping_matches_per_candidate_walk():
    # dual route: the grouped candidate-to-trajectory mapping must agree with
    # walking every cover point individually
    from satmdp.agents import _lattice_ball_chunks
    toy = ToyLinearMdp(depth=3, num_actions=3, dim=2, structure_seed=5,
                       reward_seed=77)
    eps, delta = 0.2, 0.1
    _actions, info = epsilon_net_search(toy, eps=eps, delta=delta)
    spacing = cover_spacing(eps, toy.horizon, toy.dim)
    radius = 1.0 + spacing * math.sqrt(toy.dim) / 2
    brute = {}
    total = 0
    for block in _lattice_ball_chunks(toy.dim, spacing, radius):
        for theta in block:
            total += 1
            s, trail = (), []
            while not toy.is_terminal(s):
                scores = [float(np.dot(theta, toy.features_sa(s, a)))
                          for a in range(toy.num_actions)]
                best = max(range(toy.num_actions), key=lambda a: scores[a])
                # max() returns the first maximum, matching np.argmax
                trail.append(best)
                s = toy.transition(s, best)
            key = tuple(trail)
            brute[key] = brute.get(key, 0) + 1
    assert total == info["cover_points"]
    assert brute == info["trajectory_counts"]


def test_horizon_split_rejects_zero_feature_layers(figure_formula):
    # the SAT construction zeroes features on terminal-entering pairs, so its
    # last decision layer carries no usable basis; fail loudly, not silently
    params = params_for_rounds(v=5, h=1, p=2, q=2, epsilon=0.125)
    inst = build_instance(figure_formula, params, start=(-1, 1, -1, -1, -1))
    # H = 5 is not a perfect square; check the padding refusal first
    with pytest.raises(ParameterError):
        horizon_split_q(SatOracle(OracleSession(inst, seed=0)), 0.2, 0.1)
    f4 = formula_from_ints(4, [[1, 2, 3], [2, 3, 4], [-1, 2, 4], [1, -3, 4],
                               [1, 2, -4]])
    params4 = params_for_rounds(v=4, h=1, p=2, q=2, epsilon=0.125)
    inst4 = build_instance(f4, params4)
    with pytest.raises(InvariantViolation, match="no independent"):
        horizon_split_q(SatOracle(OracleSession(inst4, seed=0)), 0.2, 0.1)


def test_epsilon_net_refuses_oversized_cover():
    toy = ToyLinearMdp(depth=4, num_actions=3, dim=3, structure_seed=5,
                       reward_seed=21)
    with pytest.raises(ResourceLimitError):
        epsilon_net_search(toy, eps=0.01, delta=0.1, cover_budget=10_000)


def test_horizon_split_rejects_non_square_horizon():
    toy = ToyLinearMdp(depth=3, num_actions=2, dim=2, structure_seed=1,
                       reward_seed=1)
    with pytest.raises(ParameterError):
        horizon_split_q(toy, eps=0.2, delta=0.1)


def test_horizon_split_exact_on_deterministic_rewards():
    toy = ToyLinearMdp(depth=4, num_actions=3, dim=2, structure_seed=5,
                       reward_seed=11, bernoulli=False)
    qest, info = horizon_split_q(toy, eps=0.2, delta=0.1, sample_cap=200)
    for a in range(3):
        assert qest[((), a)] == pytest.approx(toy.q_star((), a), abs=1e-10)
    assert all(size <= toy.dim for size in info["basis_sizes"])
    assert info["max_residual"] <= 1e-8


def test_horizon_split_policy_reaches_near_optimal():
    toy = ToyLinearMdp(depth=4, num_actions=3, dim=2, structure_seed=5,
                       reward_seed=31)
    actions, q_all, infos = horizon_split_policy(toy, eps=0.2, delta=0.1,
                                                 sample_cap=20_000)
    assert toy.policy_value(actions) >= toy.v_star() - 0.1
    # greedy over the accumulated table reproduces the same trajectory
    policy = greedy_on_q(q_all, toy)
    s, replay = (), []
    while not toy.is_terminal(s):
        a = policy(s)
        replay.append(a)
        s = toy.transition(s, a)
    assert replay == actions


def test_sat_oracle_exposes_query_counters(figure_instance):
    session = OracleSession(figure_instance, seed=0)
    oracle = SatOracle(session)
    rollout(oracle, greedy_policy(figure_instance))
    counts = session.counters
    assert counts["transition"] >= 1 and counts["reward"] >= 1
    assert sum(counts.values()) == counts["transition"] + counts["reward"] \
        + counts["feature"]
