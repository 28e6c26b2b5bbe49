"""Policies and algorithms against deterministic linear-feature MDP oracles:
the distance-greedy reference policy, an exact DP value oracle, the
RL-to-SAT reduction driver, and the two brute-force RL baselines (lattice-cover
policy search and the horizon-split basis algorithm).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .cnf import assignment_from_mask, mask_from_assignment, satisfied_count
from .errors import InvariantViolation, ParameterError, ResourceLimitError
from .mdp import (
    MODE_SIMULATOR,
    STAGE_ONE,
    MdpInstance,
    MdpState,
    OracleSession,
    Trajectory,
    build_instance,
    distinct_actions,
    exact_expected_reward,
    state_digest,
    transition,
)


class LinearRlOracle:
    """Interaction surface the baseline search algorithms are written against:
    deterministic transitions, sampled rewards, per-state(-action) features."""

    num_actions: int
    horizon: int
    dim: int

    def initial_state(self):
        raise NotImplementedError

    def transition(self, s, a):
        raise NotImplementedError

    def sample_reward(self, s, a):
        raise NotImplementedError

    def sample_reward_batch(self, s, a, count: int) -> int:
        return sum(self.sample_reward(s, a) for _ in range(count))

    def features(self, s):
        raise NotImplementedError

    def features_sa(self, s, a):
        raise NotImplementedError

    def is_terminal(self, s) -> bool:
        raise NotImplementedError

    def digest(self, s):
        raise NotImplementedError

    def step(self, s, a):
        return self.transition(s, a), self.sample_reward(s, a)


class SatOracle(LinearRlOracle):
    """Oracle view of a SAT-derived instance through a seeded session."""

    def __init__(self, session: OracleSession):
        self.session = session
        self.instance = session.instance
        self.num_actions = 3
        self.horizon = session.instance.params.H
        self.dim = session.instance.d

    def initial_state(self):
        return self.session.initial_state()

    def transition(self, s, a):
        return self.session.transition(s, a)

    def sample_reward(self, s, a):
        return self.session.sample_reward(s, a)

    def sample_reward_batch(self, s, a, count):
        return self.session.sample_reward_batch(s, a, count)

    def features(self, s):
        return self.session.features(s)

    def features_sa(self, s, a):
        return self.session.features_sa(s, a)

    def is_terminal(self, s):
        return s.is_terminal

    def digest(self, s):
        return state_digest(self.instance, s)

    def step(self, s, a):
        return self.session.step(s, a)


# --- greedy reference policy ------------------------------------------------------


def greedy_action(inst: MdpInstance, s: MdpState, wstar=None) -> int:
    """Stage one: lowest-index offered variable disagreeing with the target;
    stage two: flip iff the offered variable disagrees."""
    if s.is_terminal:
        raise ParameterError("greedy action undefined on a terminal state")
    if wstar is None:
        wstar_mask = inst.wstar
        if wstar_mask is None:
            raise ParameterError("greedy policy needs a satisfying assignment")
    else:
        wstar_mask = mask_from_assignment(tuple(wstar))
    diff = s.w ^ wstar_mask
    if s.stage == STAGE_ONE:
        for a, var in enumerate(inst.clause_vars_sorted[s.cursor]):
            if (diff >> var) & 1:
                return a
        raise InvariantViolation(
            "offered clause admits no distance-decreasing flip; the target "
            "assignment does not satisfy it")
    return 1 if (diff >> s.cursor) & 1 else 0


def greedy_policy(inst: MdpInstance, wstar=None):
    return lambda s: greedy_action(inst, s, wstar)


def greedy_rollout_value(inst: MdpInstance, s: MdpState) -> float:
    """Exact expected future reward of the greedy policy from s (no sampling).

    Terminal states are worth 0: the payout sits on the entering transition,
    which a rollout starting at the terminal never takes.
    """
    if inst.satisfiable is False or s.is_terminal:
        return 0.0
    while not s.is_terminal:
        s = transition(inst, s, greedy_action(inst, s))
    return exact_expected_reward(inst, s)


# --- exact DP oracle --------------------------------------------------------------


def exact_value_dp(inst: MdpInstance, s: MdpState,
                   node_budget: int = 2_000_000) -> float:
    """Optimal value by exhaustive max-over-actions recursion (explicit stack).

    The terminal Bernoulli mean is credited on the transition entering the
    terminal state; terminal states themselves are worth 0.
    """
    if inst.satisfiable is False:
        return 0.0
    if s.is_terminal:
        return 0.0
    visited = 0
    # frames: [state, actions, next action index, best value so far]; rewards
    # are only paid on terminal-entering transitions, so interior edges add 0.
    stack = [[s, distinct_actions(inst, s), 0, 0.0]]
    result = 0.0
    while stack:
        frame = stack[-1]
        if frame[2] == len(frame[1]):
            stack.pop()
            if stack:
                stack[-1][3] = max(stack[-1][3], frame[3])
            else:
                result = frame[3]
            continue
        a = frame[1][frame[2]]
        frame[2] += 1
        nxt = transition(inst, frame[0], a)
        visited += 1
        if visited > node_budget:
            raise ResourceLimitError(
                f"DP subtree exceeded node budget {node_budget}")
        if nxt.is_terminal:
            frame[3] = max(frame[3], exact_expected_reward(inst, nxt))
        else:
            stack.append([nxt, distinct_actions(inst, nxt), 0, 0.0])
    return result


def tree_optimal_values(inst: MdpInstance, states, children):
    """Optimal values for every node of an enumerated tree in one bottom-up
    pass (children indices always exceed the parent's)."""
    if inst.satisfiable is False:
        return [0.0] * len(states)
    values = [0.0] * len(states)
    for i in range(len(states) - 1, -1, -1):
        s = states[i]
        if s.is_terminal:
            continue
        best = -math.inf
        seen = set()
        for _a, j in children[i]:
            if j in seen:
                continue
            seen.add(j)
            child = states[j]
            paid = exact_expected_reward(inst, child) if child.is_terminal else 0.0
            best = max(best, paid + values[j])
        values[i] = best
    return values


# --- rollouts ---------------------------------------------------------------------


def rollout(oracle: LinearRlOracle, policy, start=None) -> Trajectory:
    """Run a policy (callable or explicit action list) to termination."""
    if isinstance(policy, (list, tuple)):
        if not policy:
            raise ParameterError("empty action list is not a policy")
        actions = iter(policy)

        def fn(_s):
            try:
                return next(actions)
            except StopIteration:
                raise ParameterError(
                    "action list exhausted before the episode terminated") from None
    else:
        fn = policy
    s = oracle.initial_state() if start is None else start
    records = []
    while not oracle.is_terminal(s):
        if len(records) >= oracle.horizon:
            raise InvariantViolation("episode exceeded the horizon without terminating")
        a = fn(s)
        nxt, reward = oracle.step(s, a)
        records.append((s, a, reward))
        s = nxt
    return Trajectory(tuple(records), s)


# --- RL-to-SAT reduction ----------------------------------------------------------


class _WitnessFound(Exception):
    def __init__(self, w_mask):
        self.w_mask = w_mask


class _BudgetExhausted(Exception):
    pass


class ReductionOracle(LinearRlOracle):
    """Monitored simulator: every state handed out is screened against the
    satisfaction threshold, and total oracle queries are budgeted."""

    def __init__(self, instance: MdpInstance, seed: int, budget: int):
        if instance.mode != MODE_SIMULATOR:
            raise ParameterError("the reduction runs against the simulator")
        self.session = OracleSession(instance, seed)
        self.instance = instance
        self.budget = budget
        self.num_actions = 3
        self.horizon = instance.params.H
        self.dim = instance.d

    def _spend(self):
        if sum(self.session.counters.values()) >= self.budget:
            raise _BudgetExhausted

    def _screen(self, s: MdpState) -> MdpState:
        if s.sat_count >= self.instance.gap_threshold_count:
            raise _WitnessFound(s.w)
        return s

    def initial_state(self):
        self._spend()
        return self._screen(self.session.initial_state())

    def transition(self, s, a):
        self._spend()
        return self._screen(self.session.transition(s, a))

    def sample_reward(self, s, a):
        self._spend()
        # screen the successor before pricing so a witness always wins
        self._screen(transition(self.instance, s, a))
        return self.session.sample_reward(s, a)

    def sample_reward_batch(self, s, a, count):
        self._spend()
        self._screen(transition(self.instance, s, a))
        return self.session.sample_reward_batch(s, a, count)

    def features(self, s):
        self._spend()
        return self.session.features(s)

    def features_sa(self, s, a):
        self._spend()
        self._screen(transition(self.instance, s, a))
        return self.session.features_sa(s, a)

    def step(self, s, a):
        self._spend()
        nxt = self._screen(self.session.transition(s, a))
        return nxt, self.session.sample_reward(s, a)

    def is_terminal(self, s):
        return s.is_terminal

    def digest(self, s):
        return state_digest(self.instance, s)


@dataclass
class AsatResult:
    answer: str                 # "YES" | "NO"
    witness: tuple | None       # re-verified assignment when YES
    queries: dict
    note: str = ""


def a_sat(f, learner, params, budget: int = 1_000_000, seed: int = 0) -> AsatResult:
    """Decide the gap promise by running an RL learner against the zero-reward
    simulator. YES is answered only for an independently re-verified assignment
    satisfying more than a (1-eps) fraction of clauses; everything else
    (learner completion, budget exhaustion) answers NO."""
    inst = build_instance(f, params, mode=MODE_SIMULATOR)
    oracle = ReductionOracle(inst, seed, budget)
    try:
        policy = learner(oracle)
        if policy:
            # check the path obtained by running the returned policy
            s = oracle.initial_state()
            for a in policy:
                if oracle.is_terminal(s):
                    break
                s = oracle.transition(s, a)
    except _WitnessFound as found:
        witness = assignment_from_mask(found.w_mask, f.v)
        if satisfied_count(f, witness) < inst.gap_threshold_count:
            raise InvariantViolation(
                "witness failed independent re-verification")  # pragma: no cover
        return AsatResult("YES", witness, dict(oracle.session.counters))
    except _BudgetExhausted:
        return AsatResult("NO", None, dict(oracle.session.counters),
                          note="budget exhausted")
    return AsatResult("NO", None, dict(oracle.session.counters))


def greedy_reference_learner(wstar):
    """Completeness driver for tests: knows a satisfying assignment and plays
    one greedy episode. Reads the instance internals, which a real learner
    cannot."""

    def learn(oracle):
        inst = oracle.instance
        s = oracle.initial_state()
        actions = []
        while not oracle.is_terminal(s):
            a = greedy_action(inst, s, wstar)
            actions.append(a)
            s = oracle.transition(s, a)
        return actions

    return learn


def random_learner(episodes: int, seed: int = 0):
    """Plays uniformly random episodes; returns the last action sequence."""

    def learn(oracle):
        rng = np.random.Generator(np.random.Philox(key=seed))
        last = None
        for _ in range(episodes):
            s = oracle.initial_state()
            actions = []
            while not oracle.is_terminal(s):
                a = int(rng.integers(0, oracle.num_actions))
                actions.append(a)
                s = oracle.transition(s, a)
            last = actions
        return last

    return learn


# --- argmax policies from Q estimates ---------------------------------------------


def greedy_on_q(q: dict, oracle: LinearRlOracle):
    """Argmax policy over a {(state digest, action): value} table; ties break
    toward the lowest action index; missing entries raise, naming the state."""

    def policy(s):
        key = oracle.digest(s)
        values = []
        for a in range(oracle.num_actions):
            if (key, a) not in q:
                raise ParameterError(f"no Q estimate for state {key!r} action {a}")
            values.append(q[(key, a)])
        best = 0
        for a in range(1, oracle.num_actions):
            if values[a] > values[best]:
                best = a
        return best

    return policy


# --- lattice-cover policy search --------------------------------------------------


def cover_radius(eps: float, horizon: int, dim: int) -> float:
    return eps / (2 * horizon * math.sqrt(dim))


def cover_spacing(eps: float, horizon: int, dim: int) -> float:
    """Per-coordinate lattice spacing: (cover radius) / sqrt(d), so the farthest
    point of any cell sits within half the radius."""
    return cover_radius(eps, horizon, dim) / math.sqrt(dim)


def _lattice_ball_chunks(dim: int, spacing: float, radius: float,
                         chunk_rows: int = 2_000_000):
    """Yield (n, dim) arrays of lattice points with norm <= radius, slab by slab
    along the first coordinate."""
    reach = int(math.floor(radius / spacing))
    axis = np.arange(-reach, reach + 1, dtype=np.float64) * spacing
    if dim == 1:
        pts = axis[np.abs(axis) <= radius][:, None]
        if len(pts):
            yield pts
        return
    rest = np.stack(np.meshgrid(*([axis] * (dim - 1)), indexing="ij"),
                    axis=-1).reshape(-1, dim - 1)
    rest_sq = np.einsum("ij,ij->i", rest, rest)
    r2 = radius * radius
    buf = []
    buffered = 0
    for x0 in axis:
        keep = rest_sq <= r2 - x0 * x0
        if not keep.any():
            continue
        sub = rest[keep]
        block = np.empty((len(sub), dim))
        block[:, 0] = x0
        block[:, 1:] = sub
        buf.append(block)
        buffered += len(block)
        if buffered >= chunk_rows:
            yield np.concatenate(buf)
            buf, buffered = [], 0
    if buf:
        yield np.concatenate(buf)


def cover_size_estimate(dim: int, spacing: float, radius: float) -> int:
    reach = int(math.floor(radius / spacing))
    return (2 * reach + 1) ** dim


def epsilon_net_search(oracle: LinearRlOracle, eps: float, delta: float,
                       cover_budget: int = 60_000_000,
                       min_rollouts: int = 64):
    """Enumerate a deterministic lattice cover of the unit parameter ball, map
    every candidate to the trajectory its argmax-of-features policy induces,
    and keep the empirically best trajectory.

    Candidates inducing the same action sequence share one estimate (the
    estimate depends only on the trajectory), so rollouts are spent per
    distinct policy, each sampled enough for a delta/|cover| union bound.
    """
    d, H = oracle.dim, oracle.horizon
    spacing = cover_spacing(eps, H, d)
    radius = 1.0 + spacing * math.sqrt(d) / 2  # margin so ball points keep a cover point
    size = cover_size_estimate(d, spacing, radius)
    if size > cover_budget:
        raise ResourceLimitError(
            f"lattice cover needs ~{size} points, over budget {cover_budget}")

    s0 = oracle.initial_state()
    feature_cache: dict = {}

    def sa_features(s):
        key = oracle.digest(s)
        entry = feature_cache.get(key)
        if entry is None:
            entry = np.stack([oracle.features_sa(s, a)
                              for a in range(oracle.num_actions)])
            feature_cache[key] = entry
        return entry

    trajectory_counts: dict = {}
    cover_points = 0
    for block in _lattice_ball_chunks(d, spacing, radius):
        cover_points += len(block)
        groups = [(s0, block, [])]
        while groups:
            s, cands, prefix = groups.pop()
            if oracle.is_terminal(s) or len(prefix) >= H:
                key = tuple(prefix)
                trajectory_counts[key] = trajectory_counts.get(key, 0) + len(cands)
                continue
            scores = cands @ sa_features(s).T
            acts = np.argmax(scores, axis=1)  # first max: lowest action wins ties
            for a in range(oracle.num_actions):
                sel = acts == a
                if not sel.any():
                    continue
                groups.append((oracle.transition(s, a), cands[sel], prefix + [a]))

    n_unique = len(trajectory_counts)
    n_roll = max(min_rollouts,
                 math.ceil(math.log(2 * max(cover_points, 1) / delta)
                           / (2 * eps * eps)))
    best_actions, best_est = None, -math.inf
    for actions in sorted(trajectory_counts):
        s = s0
        total = 0.0
        for a in actions:
            if oracle.is_terminal(s):
                break
            total += oracle.sample_reward_batch(s, a, n_roll) / n_roll
            s = oracle.transition(s, a)
        if total > best_est:
            best_actions, best_est = list(actions), total
    info = {"cover_points": cover_points, "unique_policies": n_unique,
            "rollouts_per_policy": n_roll, "best_estimate": best_est,
            "trajectory_counts": dict(trajectory_counts)}
    return best_actions, info


# --- horizon-split basis algorithm ------------------------------------------------


def select_independent(vectors, tol: float = 1e-10):
    """Indices of a maximal independent subset by elimination with pivoting:
    repeatedly keep the vector with the largest residual against the running
    orthonormal basis, stopping at pivot tolerance `tol`.

    Pivoting matters beyond rank: it keeps the chosen basis well-conditioned so
    downstream least-squares expansion coefficients stay small and sampled
    estimation noise is not amplified."""
    mat = np.array(vectors, dtype=np.float64)
    if mat.size == 0:
        return []
    residuals = mat.copy()
    kept = []
    while True:
        norms = np.linalg.norm(residuals, axis=1)
        pivot = int(np.argmax(norms))
        if norms[pivot] <= tol:
            break
        direction = residuals[pivot] / norms[pivot]
        residuals -= np.outer(residuals @ direction, direction)
        kept.append(pivot)
    return sorted(kept)


def _segment_levels(horizon: int, from_level: int = 0):
    root = math.isqrt(horizon)
    if root * root != horizon:
        raise ParameterError(
            f"horizon {horizon} is not a perfect square; pad the MDP or refuse")
    levels = sorted({lvl for lvl in range(0, horizon, root)
                     if lvl >= from_level} | {from_level, horizon - 1})
    return [lvl for lvl in levels if lvl >= from_level]


@dataclass
class _BasisEntry:
    path: tuple      # action string from the query state
    action: int
    features: np.ndarray


def _walk(oracle, start, path):
    s = start
    for a in path:
        if oracle.is_terminal(s):
            return s
        s = oracle.transition(s, a)
    return s


def _estimate_kappa(oracle, start, path, samples: int) -> float:
    """Mean reward collected along a fixed action path (batched sampling)."""
    total = 0.0
    s = start
    for a in path:
        if oracle.is_terminal(s):
            break
        total += oracle.sample_reward_batch(s, a, samples) / samples
        s = oracle.transition(s, a)
    return total


def horizon_split_q(oracle: LinearRlOracle, eps: float, delta: float,
                    start=None, from_level: int = 0,
                    sample_cap: int = 50_000, kappa_samples: int = 64,
                    residual_tol: float = 1e-8):
    """Q estimates at a state via sqrt(H)-segment feature bases.

    Builds one <= d sized basis of state-action features per segment boundary,
    learns terminal-layer Q by repeated reward sampling, and back-propagates
    through exact basis expansions combined with sampled path rewards. Returns
    ({(digest, action): estimate} at the query state, info).
    """
    s0 = oracle.initial_state() if start is None else start
    k = oracle.num_actions
    levels = _segment_levels(oracle.horizon, from_level)
    root_pairs = [_BasisEntry((), a, np.asarray(oracle.features_sa(s0, a)))
                  for a in range(k)]
    bases: list[list[_BasisEntry]] = []
    kept = select_independent([e.features for e in root_pairs])
    bases.append([root_pairs[i] for i in kept])

    for t in range(1, len(levels)):
        gap = levels[t] - levels[t - 1]
        candidates = []
        for entry in bases[t - 1]:
            for tail in product(range(k), repeat=gap - 1):
                path = entry.path + (entry.action,) + tail
                s = _walk(oracle, s0, path)
                if oracle.is_terminal(s):
                    continue
                for a in range(k):
                    candidates.append(
                        _BasisEntry(path, a, np.asarray(oracle.features_sa(s, a))))
        kept = select_independent([e.features for e in candidates])
        if candidates and not kept:
            # e.g. oracles that zero out features on terminal-entering pairs:
            # their Q values are not linear in the features there, and nothing
            # can be expanded against an empty basis
            raise InvariantViolation(
                f"no independent state-action features at level {levels[t]}; "
                "the estimator needs features that carry the Q values")
        bases.append([candidates[i] for i in kept])

    segments = len(levels) - 1
    total_pairs = sum(len(b) for b in bases) + k
    accuracy = (eps / (2 * oracle.horizon)) * (2 * oracle.dim) ** (-segments)
    theoretical = math.ceil(math.log(2 * total_pairs / delta) / (2 * accuracy ** 2))
    n_term = min(theoretical, sample_cap)

    q_values: list[np.ndarray] = [None] * len(bases)
    q_values[-1] = np.array([
        oracle.sample_reward_batch(_walk(oracle, s0, e.path), e.action, n_term) / n_term
        for e in bases[-1]
    ])
    max_residual = 0.0

    def expand(feat, level_idx):
        nonlocal max_residual
        mat = np.stack([e.features for e in bases[level_idx]], axis=1)
        alpha, *_ = np.linalg.lstsq(mat, feat, rcond=None)
        resid = float(np.linalg.norm(mat @ alpha - feat))
        max_residual = max(max_residual, resid)
        if resid > residual_tol:
            raise InvariantViolation(
                f"feature expansion residual {resid:.3e} exceeds {residual_tol}; "
                "inconsistent basis system")
        return float(alpha @ q_values[level_idx])

    def backward_estimate(entry: _BasisEntry, t: int) -> float:
        gap = levels[t + 1] - levels[t]
        anchor = _walk(oracle, s0, entry.path)
        best = -math.inf
        for tail in product(range(k), repeat=gap - 1):
            inner = (entry.action,) + tail
            s = _walk(oracle, anchor, inner)
            kappa = _estimate_kappa(oracle, anchor, inner, kappa_samples)
            if oracle.is_terminal(s):
                best = max(best, kappa)
                continue
            for a in range(k):
                feat = np.asarray(oracle.features_sa(s, a))
                best = max(best, kappa + expand(feat, t + 1))
        return best

    for t in range(segments - 1, -1, -1):
        q_values[t] = np.array([backward_estimate(e, t) for e in bases[t]])

    qest = {}
    d0 = oracle.digest(s0)
    basis0 = {e.action: i for i, e in enumerate(bases[0])}
    for a in range(k):
        if a in basis0:
            qest[(d0, a)] = float(q_values[0][basis0[a]])
        else:
            qest[(d0, a)] = expand(root_pairs[a].features, 0)
    info = {"basis_sizes": [len(b) for b in bases],
            "max_residual": max_residual,
            "terminal_samples": n_term,
            "theoretical_terminal_samples": theoretical,
            "levels": levels}
    return qest, info


def horizon_split_policy(oracle: LinearRlOracle, eps: float, delta: float,
                         sample_cap: int = 50_000, kappa_samples: int = 64):
    """Iterate the horizon-split estimator along the induced trajectory: at each
    visited state estimate Q, act on the argmax, repeat. Returns the action
    list, the accumulated Q table (covering every visited state), and info."""
    s = oracle.initial_state()
    level = 0
    actions = []
    q_all: dict = {}
    infos = []
    while not oracle.is_terminal(s):
        qest, info = horizon_split_q(oracle, eps, delta, start=s,
                                     from_level=level, sample_cap=sample_cap,
                                     kappa_samples=kappa_samples)
        q_all.update(qest)
        infos.append(info)
        key = oracle.digest(s)
        values = [q_all[(key, a)] for a in range(oracle.num_actions)]
        best = 0
        for a in range(1, oracle.num_actions):
            if values[a] > values[best]:
                best = a
        actions.append(best)
        s = oracle.transition(s, best)
        level += 1
    return actions, q_all, infos
