"""Operator surface: experiment runs, theory checks, and audit tools.

Configuration is a flat text file of dotted keys (one `key=value` per line,
`#` comments), e.g.::

    env.0.kind=gridworld
    env.0.width=5
    env.0.height=5
    env.0.mission_family=empty
    agent.epsilon=0.05
    planner.kind=value_iteration
    seeds=0,1,2
    episodes=5

Every run writes one metrics CSV per (environment, seed), an aggregate CSV
with per-episode means and standard deviations across seeds, and a pool
lineage JSON. All randomness flows from the configured seeds; with the mock
backend two identical invocations produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from codeworld.agent import AgentConfig, LevelSource, RunMetrics, run
from codeworld.core import TransitionRecord, stable_seed
from codeworld.envs import EnvSpec
from codeworld.llm import Cassette, LlmBackend, LlmConfig
from codeworld.objectives import check_fit
from codeworld.planners import Bm25Corpus, PlanConfig, bm25_breakdown, tokenize
from codeworld.runtime.program import CompileError, ProgramSource, compile_program
from codeworld.synthesis import EnumerativeBackend
from codeworld.theory import bundled_instances, theorem_bound_check

ACTOR_BY_KIND = {"sokoban": "Player", "sokoban_teleport": "Player",
                 "gridworld": "Agent", "household": "agent1"}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Flat config files
# ---------------------------------------------------------------------------

def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def serialize_config(cfg: dict[str, str]) -> str:
    return "".join(f"{k}={cfg[k]}\n" for k in sorted(cfg))


@dataclass
class ExperimentConfig:
    envs: list[EnvSpec]
    agent: AgentConfig
    seeds: list[int]
    episodes: int = 5
    output_dir: Path = Path("out")
    backend: str = "mock"
    transfer: bool = True
    cassette_path: Optional[Path] = None
    cassette_mode: str = "replay"
    llm_dialect: str = "external"
    timings: bool = False

    @staticmethod
    def from_flat(flat: dict[str, str]) -> "ExperimentConfig":
        envs = []
        index = 0
        while f"env.{index}.kind" in flat:
            prefix = f"env.{index}."
            envs.append(EnvSpec(
                kind=flat[prefix + "kind"],
                width=int(flat.get(prefix + "width", 7)),
                height=int(flat.get(prefix + "height", 7)),
                n_boxes=int(flat.get(prefix + "n_boxes", 1)),
                mission_family=flat.get(prefix + "mission_family", "empty"),
                seed=int(flat.get(prefix + "seed", 0)),
                max_steps=int(flat.get(prefix + "max_steps", 0))))
            index += 1
        if not envs:
            raise ConfigError("config declares no environments (env.0.kind=...)")
        planner = PlanConfig(
            gamma=float(flat.get("planner.gamma", 0.99)),
            depth=int(flat.get("planner.depth", 20)),
            mcts_budget=int(flat.get("planner.mcts.budget", 2000)),
            mcts_c=float(flat.get("planner.mcts.c", 1.0)),
            heuristic=flat.get("planner.heuristic", "bm25"))
        agent = AgentConfig(
            epsilon=float(flat.get("agent.epsilon", 0.05)),
            min_data_size=int(flat.get("agent.min_data_size", 10)),
            synth_budget=int(flat.get("agent.synth_budget", 50)),
            optimism=flat.get("agent.optimism", "on") == "on",
            planner=planner,
            planner_kind=flat.get("planner.kind", "value_iteration"),
            horizon=int(flat.get("agent.horizon", 50)),
            optimism_scope=flat.get("agent.optimism_scope", "current+solved"))
        seeds = [int(s) for s in flat.get("seeds", "0").split(",") if s != ""]
        if not seeds:
            raise ConfigError("config declares no seeds")
        return ExperimentConfig(
            envs=envs, agent=agent, seeds=seeds,
            episodes=int(flat.get("episodes", 5)),
            output_dir=Path(flat.get("output_dir", "out")),
            backend=flat.get("backend", "mock"),
            transfer=flat.get("agent.transfer", "on") == "on",
            llm_dialect=flat.get("llm.dialect", "external"))

    def to_flat(self) -> dict[str, str]:
        flat: dict[str, str] = {}
        for i, spec in enumerate(self.envs):
            flat[f"env.{i}.kind"] = spec.kind
            flat[f"env.{i}.width"] = str(spec.width)
            flat[f"env.{i}.height"] = str(spec.height)
            flat[f"env.{i}.n_boxes"] = str(spec.n_boxes)
            flat[f"env.{i}.mission_family"] = spec.mission_family
            flat[f"env.{i}.seed"] = str(spec.seed)
            flat[f"env.{i}.max_steps"] = str(spec.max_steps)
        flat["agent.epsilon"] = repr(self.agent.epsilon)
        flat["agent.min_data_size"] = str(self.agent.min_data_size)
        flat["agent.synth_budget"] = str(self.agent.synth_budget)
        flat["agent.optimism"] = "on" if self.agent.optimism else "off"
        flat["agent.horizon"] = str(self.agent.horizon)
        flat["agent.optimism_scope"] = self.agent.optimism_scope
        flat["agent.transfer"] = "on" if self.transfer else "off"
        flat["planner.kind"] = self.agent.planner_kind
        flat["planner.gamma"] = repr(self.agent.planner.gamma)
        flat["planner.depth"] = str(self.agent.planner.depth)
        flat["planner.mcts.budget"] = str(self.agent.planner.mcts_budget)
        flat["planner.mcts.c"] = repr(self.agent.planner.mcts_c)
        flat["planner.heuristic"] = self.agent.planner.heuristic
        flat["seeds"] = ",".join(str(s) for s in self.seeds)
        flat["episodes"] = str(self.episodes)
        flat["output_dir"] = str(self.output_dir)
        flat["backend"] = self.backend
        flat["llm.dialect"] = self.llm_dialect
        return flat


# ---------------------------------------------------------------------------
# Experiment runner
# ---------------------------------------------------------------------------

def _make_backend(cfg: ExperimentConfig, spec: EnvSpec, action_names: list[str]):
    if cfg.backend == "mock":
        return EnumerativeBackend(actor=ACTOR_BY_KIND[spec.kind])
    if cfg.backend == "llm":
        cassette = Cassette(cfg.cassette_path, cfg.cassette_mode)
        llm_cfg = LlmConfig.from_env()
        llm_cfg.dialect = cfg.llm_dialect
        return LlmBackend(cassette, llm_cfg, valid_actions=action_names)
    raise ConfigError(f"unknown backend {cfg.backend!r}")


def run_experiment(cfg: ExperimentConfig) -> int:
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    # Warm starts carry each seed's best program from one curriculum stage
    # to the next.
    warm: dict[int, Optional[ProgramSource]] = {s: None for s in cfg.seeds}
    aggregate_rows: list[str] = []
    for env_index, spec in enumerate(cfg.envs):
        per_seed: list[RunMetrics] = []
        for seed in cfg.seeds:
            agent_cfg = AgentConfig(
                epsilon=cfg.agent.epsilon,
                min_data_size=cfg.agent.min_data_size,
                synth_budget=cfg.agent.synth_budget,
                optimism=cfg.agent.optimism,
                planner=cfg.agent.planner,
                planner_kind=cfg.agent.planner_kind,
                horizon=cfg.agent.horizon,
                optimism_scope=cfg.agent.optimism_scope,
                transfer_source=warm[seed] if cfg.transfer else None)
            sample_level = LevelSource(spec, run_seed=stable_seed(seed, "probe")) \
                .get(0)
            action_names = sorted({a.render() for a in
                                   sample_level.truth.actions(sample_level.initial)})
            backend = _make_backend(cfg, spec, action_names)
            source = LevelSource(spec, run_seed=stable_seed(seed, env_index))
            metrics, pool_json, best_source = _run_with_pool(
                source, agent_cfg, cfg.episodes, seed, backend)
            if best_source is not None:
                warm[seed] = best_source
            per_seed.append(metrics)
            stem = f"{spec.kind}_{env_index}_seed{seed}"
            (out_dir / f"{stem}.csv").write_text(
                metrics.to_csv(include_wallclock=cfg.timings), encoding="utf-8")
            (out_dir / f"{stem}_pool.json").write_text(
                json.dumps(pool_json, indent=2, sort_keys=True) + "\n",
                encoding="utf-8")
        aggregate_rows.extend(_aggregate_rows(env_index, spec.kind, per_seed))
    header = ("env,kind,episode,steps_mean,steps_std,total_reward_mean,"
              "total_reward_std,synth_calls_mean,synth_calls_std")
    (out_dir / "aggregate.csv").write_text(
        "\n".join([header] + aggregate_rows) + "\n", encoding="utf-8")
    return 0


def _run_with_pool(source, agent_cfg, episodes, seed, backend):
    from codeworld.agent import Agent

    agent = Agent(agent_cfg, backend, seed)
    for episode in range(episodes):
        level = source.get(episode)
        agent.metrics.rows.append(agent.run_episode(level, episode))
    agent.metrics.backend_calls = backend.calls
    best = agent.pool.best_compiled()
    best_source = best.source if best is not None else None
    return agent.metrics, agent.pool.to_json(), best_source


def _aggregate_rows(env_index: int, kind: str,
                    per_seed: list[RunMetrics]) -> list[str]:
    episodes = max(len(m.rows) for m in per_seed)
    rows = []
    for ep in range(episodes):
        steps = np.array([m.rows[ep].steps for m in per_seed if ep < len(m.rows)],
                         dtype=float)
        rewards = np.array([m.rows[ep].total_reward for m in per_seed
                            if ep < len(m.rows)])
        calls = np.array([m.rows[ep].synth_calls for m in per_seed
                          if ep < len(m.rows)], dtype=float)
        rows.append(",".join([
            str(env_index), kind, str(ep),
            _fmt(steps.mean()), _fmt(steps.std()),
            _fmt(rewards.mean()), _fmt(rewards.std()),
            _fmt(calls.mean()), _fmt(calls.std())]))
    return rows


def _fmt(x: float) -> str:
    return f"{x:.6f}"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    flat = parse_config(Path(args.config).read_text(encoding="utf-8"))
    cfg = ExperimentConfig.from_flat(flat)
    if args.backend:
        cfg.backend = args.backend
    if args.optimism:
        cfg.agent.optimism = args.optimism == "on"
    if args.cassette:
        cfg.cassette_path = Path(args.cassette)
    if args.cassette_mode:
        cfg.cassette_mode = args.cassette_mode
    if args.out:
        cfg.output_dir = Path(args.out)
    if args.seeds:
        cfg.seeds = [int(s) for s in args.seeds.split(",")]
    cfg.timings = args.timings
    return run_experiment(cfg)


def _cmd_theory(args) -> int:
    instances = bundled_instances()
    if args.instance:
        instances = [i for i in instances if i.name == args.instance]
        if not instances:
            print(f"unknown instance {args.instance!r}", file=sys.stderr)
            return 2
    seeds = list(range(args.seeds))
    reports = [theorem_bound_check(inst, seeds) for inst in instances]
    payload = {"reports": [r.to_json() for r in reports],
               "pass": all(r.all_ok for r in reports)}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0 if payload["pass"] else 1


def _cmd_bm25(args) -> int:
    corpus = Bm25Corpus()
    trajectory = tokenize(args.trajectory)
    mission = tokenize(args.mission)
    for _ in range(max(0, args.warmup)):
        bm25_breakdown(trajectory, mission, corpus)
    rows = bm25_breakdown(trajectory, mission, corpus)
    total = sum(r["contribution"] for r in rows)
    print(f"{'token':<16}{'n_tau':>6}{'n_m':>5}{'idf':>14}{'tf':>14}{'part':>16}")
    for r in rows:
        print(f"{r['token']:<16}{r['n_tau']:>6}{r['n_m']:>5}"
              f"{r['idf']:>14.9f}{r['tf']:>14.9f}{r['contribution']:>16.9f}")
    print(f"score = {total:.9f}")
    print(f"corpus: N={corpus.N} l_D={corpus.l_D:.3f} distinct_tokens={len(corpus.Nt)}")
    return 0


def _cmd_replay_audit(args) -> int:
    source = ProgramSource.from_json(
        json.loads(Path(args.program).read_text(encoding="utf-8")))
    try:
        program = compile_program(source)
    except CompileError as exc:
        print(f"program does not compile: {exc}", file=sys.stderr)
        return 2
    records = []
    with open(args.buffer, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(TransitionRecord.from_json(json.loads(line)))
    report = check_fit(program, records)
    print(f"records: {len(records)}  entailed: "
          f"{sum(1 for v in report.verdicts if v.entails)}  "
          f"satisfied: {report.satisfied}")
    for index, rec, verdict in report.counterexamples:
        why = []
        if not verdict.transition_ok:
            why.append("transition mismatch")
        if not verdict.reward_ok:
            why.append(f"reward mismatch (predicted "
                       f"{verdict.predicted_reward}, {verdict.predicted_done})")
        if verdict.fault is not None:
            why.append(f"fault: {verdict.fault.kind}: {verdict.fault.message}")
        print(f"  #{index}: action {rec.a.render()!r}: {'; '.join(why)}")
    return 0 if report.satisfied else 1


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="codeworld",
        description="World-models-as-programs agent: experiments and audits")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--backend", choices=["mock", "llm"])
    p_run.add_argument("--optimism", choices=["on", "off"])
    p_run.add_argument("--cassette")
    p_run.add_argument("--cassette-mode", choices=["record", "replay", "passthrough"],
                       dest="cassette_mode")
    p_run.add_argument("--out")
    p_run.add_argument("--seeds")
    p_run.add_argument("--timings", action="store_true",
                       help="write real per-episode wallclock (breaks byte "
                            "determinism across runs)")
    p_run.set_defaults(func=_cmd_run)

    p_theory = sub.add_parser("theory", help="run the sample-complexity bound check")
    p_theory.add_argument("--instance", help="run a single named instance")
    p_theory.add_argument("--seeds", type=int, default=100)
    p_theory.add_argument("--out")
    p_theory.set_defaults(func=_cmd_theory)

    p_bm25 = sub.add_parser("bm25", help="score a trajectory against a mission")
    p_bm25.add_argument("--trajectory", required=True)
    p_bm25.add_argument("--mission", required=True)
    p_bm25.add_argument("--warmup", type=int, default=0,
                        help="score this many times first to warm the corpus")
    p_bm25.set_defaults(func=_cmd_bm25)

    p_audit = sub.add_parser("replay-audit",
                             help="re-verify a stored program against a stored buffer")
    p_audit.add_argument("--program", required=True)
    p_audit.add_argument("--buffer", required=True)
    p_audit.set_defaults(func=_cmd_replay_audit)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
