"""Command-line front end: instance generation, claim verification, rollouts,
the RL-to-SAT reduction, and the bounded-occurrence transform.

Exit codes: 0 success / all checks pass, 1 verification failure, 2 usage
error, 3 resource refusal.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import agents, gapsat, instances, mdp, reporting, reward
from .cnf import brute_force_sat, occurrence_bound, parse_dimacs, to_dimacs
from .errors import (
    FormulaError,
    InvariantViolation,
    ParameterError,
    ParseError,
    ResourceLimitError,
    SatMdpError,
)
from .polyfeat import (
    greedy_value_poly,
    inner_product,
    theta_vector,
    to_feature_vector,
)

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2
EXIT_REFUSED = 3


def _params_from_args(args, v: int) -> reward.RewardParams:
    if getattr(args, "rounds", None) is not None:
        return reward.params_for_rounds(v=v, h=args.rounds, p=args.p, q=args.q,
                                        epsilon=args.epsilon, b=args.b)
    return reward.params_from_alpha(v=v, p=args.p, q=args.q, alpha=args.alpha,
                                    epsilon=args.epsilon, b=args.b)


def _read_formula(path: str, strict: bool = True):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParameterError(f"cannot read {path}: {exc}") from exc
    return parse_dimacs(text, strict=strict)


def _write_report(report: dict, out: str | None):
    payload = reporting.report_to_json(report)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(payload)
    else:
        sys.stdout.write(payload)


def cmd_gen(args) -> int:
    f = _read_formula(args.cnf)
    params = _params_from_args(args, f.v)
    wstar = tuple(1 if c == "1" else -1 for c in args.wstar) if args.wstar else None
    start = tuple(1 if c == "1" else -1 for c in args.start) if args.start else None
    t0 = time.perf_counter()
    inst = mdp.build_instance(f, params, wstar=wstar, mode=args.mode, start=start)
    config = {
        "cnf_path": str(args.cnf),
        "p": params.p, "q": params.q, "alpha": params.alpha, "h": params.h,
        "epsilon": params.epsilon, "b": params.b,
        "mode": args.mode, "seed": args.seed,
        "start_assignment": args.start,
        "wstar": args.wstar,
    }
    metadata = {
        "v": f.v, "m": f.m, "b_achieved": occurrence_bound(f),
        "h": params.h, "H": params.H, "d": inst.d,
        "satisfiable": inst.satisfiable,
        "wstar": None if inst.wstar is None
        else "".join("1" if x == 1 else "0" for x in inst.wstar_assignment()),
    }
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "instance.json").write_text(
        json.dumps({"config": config, "metadata": metadata}, indent=2,
                   sort_keys=True) + "\n")
    report = reporting.make_report("gen", config, args.seed, metadata,
                                   time.perf_counter() - t0)
    _write_report(report, str(out_dir / "report.json"))
    print(f"instance written to {out_dir}/instance.json "
          f"(v={f.v}, m={f.m}, H={params.H}, d={inst.d})")
    return EXIT_OK


def load_instance_bundle(path: str) -> mdp.MdpInstance:
    bundle = json.loads(Path(path).read_text())
    cfg = bundle["config"]
    f = _read_formula(cfg["cnf_path"])
    params = reward.RewardParams(v=f.v, p=cfg["p"], q=cfg["q"], alpha=cfg["alpha"],
                                 h=cfg["h"], epsilon=cfg["epsilon"], b=cfg["b"])
    wstar = (tuple(1 if c == "1" else -1 for c in cfg["wstar"])
             if cfg.get("wstar") else None)
    start = (tuple(1 if c == "1" else -1 for c in cfg["start_assignment"])
             if cfg.get("start_assignment") else None)
    return mdp.build_instance(f, params, wstar=wstar, mode=cfg["mode"], start=start)


def _linearity_suite(seed: int, cases=((4, 2), (5, 2))) -> dict:
    """Max deviation between the feature/theta inner product and the greedy
    value, and between the DP optimum and the greedy value, on tiny instances."""
    max_lin = 0.0
    max_opt = 0.0
    states_checked = 0
    for i, (v, h) in enumerate(cases):
        inst, wstar, _ = instances.random_satisfiable_instance(
            seed + i, v=v, h=h, tree_budget=8_000)
        theta = theta_vector(wstar, v, inst.params.p)
        states, children = mdp.enumerate_reachable(inst, budget=8_000)
        optimal = agents.tree_optimal_values(inst, states, children)
        for s, opt_val in zip(states, optimal):
            greedy_val = agents.greedy_rollout_value(inst, s)
            if s.is_terminal:
                lin = abs(inner_product(mdp.features_state(inst, s), theta))
            else:
                psi = to_feature_vector(greedy_value_poly(s, inst.params),
                                        v, inst.params.p)
                lin = abs(inner_product(psi, theta) - greedy_val)
            max_lin = max(max_lin, lin)
            max_opt = max(max_opt, abs(opt_val - greedy_val))
            states_checked += 1
    return {"states_checked": states_checked,
            "max_linearity_error": max_lin,
            "max_optimality_gap": max_opt,
            "pass": max_lin <= 1e-8 and max_opt <= 1e-9}


def cmd_verify_claims(args) -> int:
    t0 = time.perf_counter()
    v = args.v

    def range_q4():
        return reward.verify_claim_range(
            reward.params_from_alpha(v, p=2, q=4, alpha=args.alpha,
                                     epsilon=args.epsilon, b=args.b))

    def range_q2():
        return reward.verify_claim_range(
            reward.params_from_alpha(v, p=reward.log_degree(v), q=2,
                                     alpha=args.alpha, epsilon=args.epsilon,
                                     b=args.b))

    def monotone():
        return reward.verify_claim_monotone_step(
            reward.params_from_alpha(min(v, 64), p=2, q=4, alpha=args.alpha,
                                     epsilon=args.epsilon, b=args.b),
            v_cap=128)

    def linearity():
        return _linearity_suite(args.seed)

    tasks = {"claim_range_q4": range_q4, "claim_range_q2_logp": range_q2,
             "claim_monotone_step": monotone, "linearity_and_optimality": linearity}
    outcomes = {}
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = {name: pool.submit(fn) for name, fn in tasks.items()}
            results = {name: fut.result() for name, fut in futures.items()}
    else:
        results = {name: fn() for name, fn in tasks.items()}
    all_pass = True
    for name, res in results.items():
        if isinstance(res, reward.ClaimReport):
            outcomes[name] = res.to_dict()
            all_pass &= res.passed
        else:
            outcomes[name] = res
            all_pass &= res["pass"]
    config = {"v": v, "alpha": args.alpha, "epsilon": args.epsilon, "b": args.b,
              "jobs": args.jobs}
    report = reporting.make_report("verify-claims", config, args.seed, outcomes,
                                   time.perf_counter() - t0)
    _write_report(report, args.out)
    print("verify-claims: " + ("all pass" if all_pass else "FAILURES (see report)"))
    return EXIT_OK if all_pass else EXIT_VERIFY_FAIL


def cmd_run(args) -> int:
    t0 = time.perf_counter()
    inst = load_instance_bundle(args.instance)
    session = mdp.OracleSession(inst, args.seed)
    oracle = agents.SatOracle(session)
    if args.agent == "greedy":
        if inst.wstar is None:
            raise ParameterError("greedy agent needs a satisfying assignment")
        policy = agents.greedy_policy(inst)
    else:
        rng = np.random.Generator(np.random.Philox(key=args.seed))

        def policy(_s):
            return int(rng.integers(0, 3))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    totals = []
    kinds = []
    with open(out_dir / "trajectories.jsonl", "w") as fh:
        for _episode in range(args.episodes):
            traj = agents.rollout(oracle, policy)
            for step, (s, a, r) in enumerate(traj.records):
                fh.write(json.dumps({
                    "step": step,
                    "state_digest": mdp.state_digest(inst, s),
                    "action": a,
                    "reward": r,
                }) + "\n")
            totals.append(traj.total_reward())
            kinds.append(traj.terminal_kind)
    config = {"instance": str(args.instance), "agent": args.agent,
              "episodes": args.episodes}
    outcomes = {"episode_rewards": totals, "terminal_kinds": kinds,
                "queries": dict(session.counters)}
    report = reporting.make_report("run", config, args.seed, outcomes,
                                   time.perf_counter() - t0)
    _write_report(report, str(out_dir / "report.json"))
    print(f"{args.episodes} episode(s) done; rewards={totals}")
    return EXIT_OK


def cmd_reduce(args) -> int:
    t0 = time.perf_counter()
    f = _read_formula(args.cnf)
    params = _params_from_args(args, f.v)
    if args.learner == "greedy":
        wstar = brute_force_sat(f)
        if wstar is None:
            raise ParameterError(
                "greedy learner demo needs a satisfiable formula; use --learner random")
        learner = agents.greedy_reference_learner(wstar)
    else:
        learner = agents.random_learner(args.episodes, seed=args.seed)
    result = agents.a_sat(f, learner, params, budget=args.budget, seed=args.seed)
    config = {"cnf": str(args.cnf), "learner": args.learner,
              "budget": args.budget, "p": params.p, "q": params.q,
              "alpha": params.alpha, "epsilon": params.epsilon, "b": params.b}
    outcomes = {"witness": None if result.witness is None
                else "".join("1" if x == 1 else "0" for x in result.witness),
                "queries": result.queries, "note": result.note}
    report = reporting.make_report("reduce", config, args.seed, outcomes,
                                   time.perf_counter() - t0, answer=result.answer)
    _write_report(report, args.out)
    print(result.answer)
    return EXIT_OK


def cmd_transform(args) -> int:
    t0 = time.perf_counter()
    f = _read_formula(args.cnf, strict=not args.lenient)
    psi = gapsat.bounded_occurrence_transform(f, args.b)
    if args.emit:
        Path(args.emit).write_text(to_dimacs(psi))
    outcomes = gapsat.transform_report(f, psi, args.b)
    config = {"cnf": str(args.cnf), "b": args.b}
    report = reporting.make_report("transform", config, None, outcomes,
                                   time.perf_counter() - t0)
    _write_report(report, args.out)
    print(f"transform: m {f.m} -> {psi.m}, occurrence bound "
          f"{occurrence_bound(f)} -> {occurrence_bound(psi)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satmdp",
        description="SAT-parameterized hard MDPs: build, verify, run, reduce.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_params(sp):
        sp.add_argument("--p", type=int, default=2)
        sp.add_argument("--q", type=int, default=4)
        sp.add_argument("--alpha", type=float, default=1 / 16)
        sp.add_argument("--rounds", type=int, default=None,
                        help="pin the round count h directly (overrides --alpha)")
        sp.add_argument("--epsilon", type=float, default=0.25)
        sp.add_argument("--b", type=int, default=6)

    sp = sub.add_parser("gen", help="build an instance bundle from a DIMACS file")
    sp.add_argument("--cnf", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", choices=[mdp.MODE_FULL, mdp.MODE_SIMULATOR],
                    default=mdp.MODE_FULL)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--start", default=None,
                    help="start assignment as a 0/1 string (default all-false)")
    sp.add_argument("--wstar", default=None,
                    help="satisfying assignment as a 0/1 string")
    add_params(sp)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("verify-claims", help="run the structural-claim verifiers")
    sp.add_argument("--v", type=int, default=50)
    sp.add_argument("--alpha", type=float, default=1 / 16)
    sp.add_argument("--epsilon", type=float, default=0.25)
    sp.add_argument("--b", type=int, default=6)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_verify_claims)

    sp = sub.add_parser("run", help="roll out an agent on an instance bundle")
    sp.add_argument("--instance", "--config", dest="instance", required=True)
    sp.add_argument("--agent", choices=["greedy", "random"], default="greedy")
    sp.add_argument("--episodes", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("reduce", help="decide a gap formula via the simulator")
    sp.add_argument("--cnf", required=True)
    sp.add_argument("--learner", choices=["greedy", "random"], default="greedy")
    sp.add_argument("--episodes", type=int, default=8,
                    help="episodes for the random learner")
    sp.add_argument("--budget", type=int, default=1_000_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    add_params(sp)
    sp.set_defaults(func=cmd_reduce)

    sp = sub.add_parser("transform", help="bounded-occurrence rewrite of a formula")
    sp.add_argument("--cnf", required=True)
    sp.add_argument("--b", type=int, default=6)
    sp.add_argument("--emit", default=None, help="path for the transformed DIMACS")
    sp.add_argument("--lenient", action="store_true",
                    help="accept clauses with fewer than 3 literals")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_transform)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ParameterError, FormulaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceLimitError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (InvariantViolation, SatMdpError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_VERIFY_FAIL


if __name__ == "__main__":
    sys.exit(main())
