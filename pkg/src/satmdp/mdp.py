"""The SAT-parameterized hard-instance MDP: deterministic two-stage round
mechanics, termination, Bernoulli terminal rewards, and state features.

States carry assignments as int bitmasks (bit i set = variable i true) plus an
eligible-clause bitmask maintained incrementally: marking a variable used only
ever removes its clauses from eligibility within a round, so each step costs
O(b) and the mask is rebuilt once per round rollover. Rewards are paid on the
transition that terminates; terminal states themselves have zero features and
zero continuation value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cnf import (
    EXHAUSTIVE_LIMIT,
    Formula,
    assignment_from_mask,
    brute_force_sat,
    hamming,
    mask_from_assignment,
    occurrence_bound,
    satisfied_count,
)
from .errors import (
    FormulaError,
    InvariantViolation,
    ParameterError,
    ResourceLimitError,
)
from .polyfeat import feature_dim, greedy_value_poly, to_feature_vector
from .reward import RewardParams, expected_reward

STAGE_ONE = "one"
STAGE_TWO = "two"
TERMINAL = "terminal"

LAST_LEVEL = "last_level"
GAP_SATISFIED = "gap_satisfied"

MODE_FULL = "full"
MODE_SIMULATOR = "simulator"

_STAGE_TAGS = {(STAGE_ONE, None): 1, (STAGE_TWO, None): 2,
               (TERMINAL, LAST_LEVEL): 3, (TERMINAL, GAP_SATISFIED): 4}


@dataclass(frozen=True)
class MdpState:
    """One node of the transition tree; uniquely identified by its canonical
    byte encoding (n, stage, cursor, assignment, free set, round-start
    assignment, inter-round distances, move history).

    Distinct flip orders can reach the same assignment summary, so identity
    includes the episode's move history -- (variable, flipped) per step, stored
    as a parent-linked chain -- keeping the transition structure a genuine
    tree. Stage-two keep-actions 0 and 2 append the same move and therefore
    still land on the same state.
    """

    n: int
    stage: str
    cursor: int | None          # clause index (stage one) / variable (stage two)
    w: int                      # current assignment bitmask
    w_round: int                # assignment at the start of round n
    free: int                   # free-variable bitmask
    round_dists: tuple
    step: int
    terminal_kind: str | None = None
    history: tuple | None = None   # (parent history, var, flipped) chain
    sat_count: int = field(default=0, compare=False, repr=False)
    eligible: int = field(default=0, compare=False, repr=False)

    @property
    def is_terminal(self) -> bool:
        return self.stage == TERMINAL

    def assignment(self, v: int):
        return assignment_from_mask(self.w, v)

    def moves(self):
        """Move history in chronological order as (variable, flipped) pairs."""
        out = []
        node = self.history
        while node is not None:
            out.append((node[1], node[2]))
            node = node[0]
        out.reverse()
        return out


class MdpInstance:
    """Immutable bundle of formula, parameters, optional satisfying assignment,
    and precomputed per-clause bitmasks."""

    __slots__ = ("formula", "params", "mode", "wstar", "satisfiable", "d",
                 "start", "all_mask", "clause_pos", "clause_neg",
                 "clause_vars_sorted", "clause_var_mask", "occ_clause_bits",
                 "gap_threshold_count")

    def __init__(self, formula: Formula, params: RewardParams, mode: str,
                 wstar: int | None, satisfiable: bool | None, start: int):
        self.formula = formula
        self.params = params
        self.mode = mode
        self.wstar = wstar
        self.satisfiable = satisfiable
        self.d = feature_dim(formula.v, params.p)
        self.start = start
        self.all_mask = (1 << formula.v) - 1
        pos, neg, vars_sorted, var_mask = [], [], [], []
        for clause in formula.clauses:
            pm = nm = vm = 0
            for lit in clause.literals:
                bit = 1 << lit.var
                vm |= bit
                if lit.negated:
                    nm |= bit
                else:
                    pm |= bit
            pos.append(pm)
            neg.append(nm)
            var_mask.append(vm)
            vars_sorted.append(tuple(sorted(clause.variables)))
        self.clause_pos = tuple(pos)
        self.clause_neg = tuple(neg)
        self.clause_vars_sorted = tuple(vars_sorted)
        self.clause_var_mask = tuple(var_mask)
        occ_bits = [0] * formula.v
        for var in range(formula.v):
            bits = 0
            for ci in formula.occ[var]:
                bits |= 1 << ci
            occ_bits[var] = bits
        self.occ_clause_bits = tuple(occ_bits)
        # strict "more than (1-eps) fraction satisfied": sat >= floor((1-eps)m)+1
        thresh = (1 - params.epsilon_exact) * formula.m
        self.gap_threshold_count = math.floor(thresh) + 1

    def wstar_assignment(self):
        if self.wstar is None:
            return None
        return assignment_from_mask(self.wstar, self.formula.v)


def build_instance(f: Formula, params: RewardParams, wstar=None,
                   mode: str = MODE_FULL, start=None,
                   exhaustive_limit: int = EXHAUSTIVE_LIMIT) -> MdpInstance:
    """Validate the formula against the construction's requirements and resolve
    the satisfying assignment (brute force at desk scale when not supplied)."""
    if mode not in (MODE_FULL, MODE_SIMULATOR):
        raise ParameterError(f"unknown mode {mode!r}")
    if not f.strict:
        raise FormulaError("MDP construction requires strict 3-distinct-variable clauses")
    if f.m < f.v:
        raise FormulaError(
            f"construction requires at least as many clauses as variables "
            f"(m={f.m} < v={f.v}); padding is not attempted")
    if params.v != f.v:
        raise ParameterError(f"params.v={params.v} does not match formula v={f.v}")
    bound = occurrence_bound(f)
    if bound > params.b:
        raise FormulaError(f"occurrence bound {bound} exceeds b={params.b}")

    satisfiable: bool | None
    if wstar is not None:
        wstar = tuple(wstar)
        if len(wstar) != f.v:
            raise ParameterError("wstar has wrong length")
        if satisfied_count(f, wstar) != f.m:
            raise ParameterError("supplied wstar does not satisfy the formula")
        wstar_mask = mask_from_assignment(wstar)
        satisfiable = True
    elif f.v <= exhaustive_limit:
        sol = brute_force_sat(f, limit=exhaustive_limit)
        if sol is None:
            wstar_mask = None
            satisfiable = False
        else:
            wstar_mask = mask_from_assignment(sol)
            satisfiable = True
    elif mode == MODE_SIMULATOR:
        # The simulator never prices last-level rewards, so it stays usable
        # when satisfiability is undecided.
        wstar_mask = None
        satisfiable = None
    else:
        raise ResourceLimitError(
            f"cannot define rewards: no wstar given and v={f.v} exceeds the "
            f"exhaustive limit {exhaustive_limit}")

    if start is None:
        start_mask = 0
    else:
        start = tuple(start)
        if len(start) != f.v:
            raise ParameterError("start assignment has wrong length")
        start_mask = mask_from_assignment(start)
    return MdpInstance(f, params, mode, wstar_mask, satisfiable, start_mask)


def _clause_satisfied(inst: MdpInstance, ci: int, w: int) -> bool:
    return bool((w & inst.clause_pos[ci]) | (~w & inst.clause_neg[ci]))


def _sat_count(inst: MdpInstance, w: int) -> int:
    return sum(1 for ci in range(inst.formula.m) if _clause_satisfied(inst, ci, w))


def _eligible_mask(inst: MdpInstance, w: int, free: int) -> int:
    bits = 0
    for ci in range(inst.formula.m):
        if (inst.clause_var_mask[ci] & ~free) == 0 and not _clause_satisfied(inst, ci, w):
            bits |= 1 << ci
    return bits


def _stage_fields(inst: MdpInstance, eligible: int, free: int):
    if eligible:
        return STAGE_ONE, (eligible & -eligible).bit_length() - 1
    return STAGE_TWO, (free & -free).bit_length() - 1


def initial_state(inst: MdpInstance) -> MdpState:
    """Round 1 with every variable free; terminates immediately if the start
    assignment already satisfies more than a (1-eps) fraction."""
    w = inst.start
    free = inst.all_mask
    sat = _sat_count(inst, w)
    if sat >= inst.gap_threshold_count:
        return MdpState(n=1, stage=TERMINAL, cursor=None, w=w, w_round=w,
                        free=free, round_dists=(), step=0,
                        terminal_kind=GAP_SATISFIED, sat_count=sat, eligible=0)
    eligible = _eligible_mask(inst, w, free)
    stage, cursor = _stage_fields(inst, eligible, free)
    return MdpState(n=1, stage=stage, cursor=cursor, w=w, w_round=w, free=free,
                    round_dists=(), step=0, sat_count=sat, eligible=eligible)


def transition(inst: MdpInstance, s: MdpState, a: int) -> MdpState:
    """Apply one action: stage one flips the chosen clause variable, stage two
    flips the offered variable iff a == 1 (actions 0 and 2 both keep)."""
    if s.stage == TERMINAL:
        raise ParameterError("cannot act on a terminal state")
    if a not in (0, 1, 2):
        raise ParameterError(f"action {a} outside {{0,1,2}}")
    if s.stage == STAGE_ONE:
        var = inst.clause_vars_sorted[s.cursor][a]
        flip = True
    else:
        var = s.cursor
        flip = a == 1

    bit = 1 << var
    free = s.free & ~bit
    if flip:
        w = s.w ^ bit
        sat = s.sat_count
        for ci in inst.formula.occ[var]:
            sat += _clause_satisfied(inst, ci, w) - _clause_satisfied(inst, ci, s.w)
    else:
        w = s.w
        sat = s.sat_count
    step = s.step + 1
    history = (s.history, var, flip)

    if sat >= inst.gap_threshold_count:
        return MdpState(n=s.n, stage=TERMINAL, cursor=None, w=w,
                        w_round=s.w_round, free=free, round_dists=s.round_dists,
                        step=step, terminal_kind=GAP_SATISFIED, history=history,
                        sat_count=sat, eligible=0)
    if free == 0:
        if s.n == inst.params.h:
            return MdpState(n=s.n, stage=TERMINAL, cursor=None, w=w,
                            w_round=s.w_round, free=free,
                            round_dists=s.round_dists, step=step,
                            terminal_kind=LAST_LEVEL, history=history,
                            sat_count=sat, eligible=0)
        round_dists = s.round_dists + (hamming(s.w_round, w),)
        free = inst.all_mask
        eligible = _eligible_mask(inst, w, free)
        stage, cursor = _stage_fields(inst, eligible, free)
        return MdpState(n=s.n + 1, stage=stage, cursor=cursor, w=w, w_round=w,
                        free=free, round_dists=round_dists, step=step,
                        history=history, sat_count=sat, eligible=eligible)
    # marking var used removes exactly its clauses from eligibility
    eligible = s.eligible & ~inst.occ_clause_bits[var]
    stage, cursor = _stage_fields(inst, eligible, free)
    return MdpState(n=s.n, stage=stage, cursor=cursor, w=w, w_round=s.w_round,
                    free=free, round_dists=s.round_dists, step=step,
                    history=history, sat_count=sat, eligible=eligible)


def _terminal_mean(inst: MdpInstance, s: MdpState) -> float:
    within = hamming(s.w_round, s.w)
    diff = s.w ^ inst.wstar
    free_d = (diff & s.free).bit_count()
    used_d = (diff & inst.all_mask & ~s.free).bit_count()
    return expected_reward(s.round_dists, s.n, within, free_d, used_d, inst.params)


def exact_expected_reward(inst: MdpInstance, s: MdpState) -> float:
    """Mean of the terminal Bernoulli at s, with free coordinates corrected to
    the planted assignment. Full mode with a satisfying assignment only."""
    if not s.is_terminal:
        raise ParameterError("exact_expected_reward needs a terminal state")
    if inst.satisfiable is False:
        raise ParameterError("rewards are identically zero: formula unsatisfiable")
    if inst.mode != MODE_FULL:
        raise ParameterError("exact rewards are defined on the full MDP, not the simulator")
    if inst.wstar is None:
        raise ParameterError("no satisfying assignment available")
    return _terminal_mean(inst, s)


def _sample_mean(inst: MdpInstance, nxt: MdpState) -> float:
    """Bernoulli mean paid on the transition into nxt (0 when non-terminal)."""
    if not nxt.is_terminal:
        return 0.0
    if inst.satisfiable is False:
        return 0.0
    if inst.mode == MODE_SIMULATOR and nxt.terminal_kind == LAST_LEVEL:
        return 0.0
    if inst.wstar is None:
        raise InvariantViolation(
            "cannot price a gap-satisfied terminal without a satisfying assignment")
    return _terminal_mean(inst, nxt)


def features_state(inst: MdpInstance, s: MdpState) -> np.ndarray:
    """Coefficient vector of the greedy value polynomial; zero at terminals."""
    if s.is_terminal:
        return np.zeros(inst.d)
    return to_feature_vector(greedy_value_poly(s, inst.params),
                             inst.formula.v, inst.params.p)


def features_state_action(inst: MdpInstance, s: MdpState, a: int) -> np.ndarray:
    return features_state(inst, transition(inst, s, a))


def stage_one_floor(inst: MdpInstance, round_start) -> int:
    """Guaranteed stage-one length for a round starting at the given assignment
    (or precomputed satisfied count): each used variable disqualifies at most b
    eligible clauses, and an alive round leaves at least an eps fraction
    unsatisfied."""
    if isinstance(round_start, int):
        sat = round_start
    else:
        sat = satisfied_count(inst.formula, tuple(round_start))
    if sat >= inst.gap_threshold_count:
        raise ParameterError(
            "round start already exceeds the satisfaction threshold; the MDP "
            "would have terminated")
    p = inst.params
    return math.ceil(p.epsilon_exact * inst.formula.m / p.b)


def encode_state(inst: MdpInstance, s: MdpState) -> bytes:
    """Fixed-order canonical byte encoding; equal bytes iff equal states."""
    v = inst.formula.v
    nb = (v + 7) // 8
    parts = [
        s.n.to_bytes(4, "big"),
        _STAGE_TAGS[(s.stage, s.terminal_kind)].to_bytes(1, "big"),
        (0xFFFFFFFF if s.cursor is None else s.cursor).to_bytes(4, "big"),
        s.w.to_bytes(nb, "big"),
        s.free.to_bytes(nb, "big"),
        s.w_round.to_bytes(nb, "big"),
        len(s.round_dists).to_bytes(2, "big"),
    ]
    for d in s.round_dists:
        parts.append(d.to_bytes(4, "big"))
    moves = s.moves()
    parts.append(len(moves).to_bytes(4, "big"))
    for var, flipped in moves:
        parts.append((var * 2 + int(flipped)).to_bytes(4, "big"))
    return b"".join(parts)


def state_digest(inst: MdpInstance, s: MdpState) -> str:
    return encode_state(inst, s).hex()


@dataclass(frozen=True)
class Trajectory:
    """Rollout record: (state, action, reward sample) per step plus the final state."""

    records: tuple
    final_state: MdpState

    @property
    def terminal_kind(self):
        return self.final_state.terminal_kind

    def actions(self):
        return [a for _, a, _ in self.records]

    def total_reward(self):
        return sum(r for _, _, r in self.records)


class OracleSession:
    """Single-owner interaction handle: seeded counter-based RNG plus query
    counters for the transition / reward / feature interfaces."""

    def __init__(self, instance: MdpInstance, seed: int):
        self.instance = instance
        self.seed = seed
        self.rng = np.random.Generator(np.random.Philox(key=seed))
        self.counters = {"transition": 0, "reward": 0, "feature": 0}

    def initial_state(self) -> MdpState:
        self.counters["transition"] += 1
        return initial_state(self.instance)

    def transition(self, s: MdpState, a: int) -> MdpState:
        self.counters["transition"] += 1
        return transition(self.instance, s, a)

    def sample_reward(self, s: MdpState, a: int) -> int:
        self.counters["reward"] += 1
        mean = _sample_mean(self.instance, transition(self.instance, s, a))
        if mean == 0.0:
            return 0
        return int(self.rng.random() < mean)

    def sample_reward_batch(self, s: MdpState, a: int, count: int) -> int:
        """Number of ones among `count` independent reward samples at (s, a);
        drawn as one binomial, counted as `count` reward queries."""
        self.counters["reward"] += count
        mean = _sample_mean(self.instance, transition(self.instance, s, a))
        if mean == 0.0:
            return 0
        return int(self.rng.binomial(count, mean))

    def step(self, s: MdpState, a: int):
        """Transition plus reward sample for the same action (two queries)."""
        self.counters["transition"] += 1
        self.counters["reward"] += 1
        nxt = transition(self.instance, s, a)
        mean = _sample_mean(self.instance, nxt)
        reward = 0 if mean == 0.0 else int(self.rng.random() < mean)
        return nxt, reward

    def features(self, s: MdpState) -> np.ndarray:
        self.counters["feature"] += 1
        return features_state(self.instance, s)

    def features_sa(self, s: MdpState, a: int) -> np.ndarray:
        self.counters["feature"] += 1
        return features_state_action(self.instance, s, a)


def distinct_actions(inst: MdpInstance, s: MdpState):
    """Representative actions with distinct successors (stage two aliases 0 and 2)."""
    if s.stage == STAGE_ONE:
        return (0, 1, 2)
    return (0, 1)


def enumerate_reachable(inst: MdpInstance, budget: int = 500_000):
    """Breadth-first enumeration of the whole tree (tiny instances only).

    Returns (states, children) where children[i] lists (action, state index)
    for every action. Raises InvariantViolation if any state is reachable from
    two different parents, which would contradict the tree structure.
    """
    root = initial_state(inst)
    states = [root]
    seen = {encode_state(inst, root): 0}
    children: list[list] = []
    idx = 0
    while idx < len(states):
        s = states[idx]
        edges = []
        if not s.is_terminal:
            local = {}
            for a in (0, 1, 2):
                nxt = transition(inst, s, a)
                key = encode_state(inst, nxt)
                if key in local:
                    edges.append((a, local[key]))
                    continue
                if key in seen:
                    raise InvariantViolation(
                        "state reached from two different parents; transition "
                        "structure is not a tree")
                if len(states) >= budget:
                    raise ResourceLimitError(
                        f"reachable-state enumeration exceeded budget {budget}")
                states.append(nxt)
                j = len(states) - 1
                seen[key] = j
                local[key] = j
                edges.append((a, j))
        children.append(edges)
        idx += 1
    return states, children
