"""Command-line experiment runner and inspection tooling.

Subcommands:
  run             execute a full curriculum from a config file, writing the
                  trace file, a metrics JSONL and a final weights checkpoint
  eval            evaluate a checkpoint on one configured task
  transfer-probe  race a checkpoint against a fresh net on one task and
                  report both arms' budgets
  traces          list or dump trials from a trace file

Exit codes: 0 success, 1 configuration/usage error (the message names the
field), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .config import ConfigError, ExperimentConfig, load_config, with_seed
from .consolidate import retention_check
from .curriculum import run_curriculum
from .evolve import Budget, try_solve_task
from .metrics import MetricsWriter, scrub, validate_event
from .network import init_network, load_checkpoint, save_checkpoint
from .rollout import evaluate_policy
from .traces import StoreDims, TraceFormatError, TraceStore


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skillnet",
        description="Continual-skill training of a single recurrent network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the configured curriculum end to end")
    run_p.add_argument("--config", required=True, help="experiment config JSON")
    run_p.add_argument("--seed", type=int, default=None, help="override master_seed")
    run_p.add_argument("--workers", type=int, default=1,
                       help="max parallel candidate evaluations")

    eval_p = sub.add_parser("eval", help="evaluate a checkpoint on one task")
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--config", required=True)
    eval_p.add_argument("--task", required=True, help="task id from the config")
    eval_p.add_argument("--trials", type=int, default=None,
                        help="evaluation trials (default: the task's criterion K)")
    eval_p.add_argument("--seed", type=int, default=0, help="evaluation seed base")

    probe_p = sub.add_parser("transfer-probe",
                             help="race checkpoint vs fresh weights on a task")
    probe_p.add_argument("--checkpoint", required=True)
    probe_p.add_argument("--config", required=True)
    probe_p.add_argument("--task", required=True, help="task id from the config")
    probe_p.add_argument("--seed", type=int, default=None, help="override master_seed")
    probe_p.add_argument("--workers", type=int, default=1)

    traces_p = sub.add_parser("traces", help="list or dump stored trials")
    traces_p.add_argument("trace_file")
    traces_p.add_argument("--task", default=None, help="filter by task id")
    traces_p.add_argument("--success", action="store_true", help="only successful trials")
    traces_p.add_argument("--failed", action="store_true", help="only failed trials")
    traces_p.add_argument("--relevant", action="store_true", help="only relevant trials")
    traces_p.add_argument("--dump", type=int, default=None, metavar="TRIAL_ID",
                          help="print one trial's full JSON")
    return parser


def _load(config_path: str, seed: int | None) -> ExperimentConfig:
    config = load_config(config_path)
    if seed is not None:
        config = with_seed(config, seed)
    return config


def _find_task(config: ExperimentConfig, task_id: str):
    for task in config.tasks:
        if task.task_id == task_id:
            return task
    raise ConfigError("task", f"unknown task id {task_id!r}; configured: "
                              f"{[t.task_id for t in config.tasks]}")


def _load_checkpoint_or_usage_error(path):
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise ConfigError("checkpoint", f"file not found: {path}") from None


def cmd_run(args) -> int:
    config = _load(args.config, args.seed)
    net_config = config.net
    _, weights = init_network(net_config)
    store = TraceStore(StoreDims.from_net_config(net_config))
    config.paths.checkpoint_dir.mkdir(parents=True, exist_ok=True)
    config.paths.trace_file.parent.mkdir(parents=True, exist_ok=True)
    config.paths.metrics_file.parent.mkdir(parents=True, exist_ok=True)

    with MetricsWriter(config.paths.metrics_file) as writer:
        writer.emit({
            "event": "run_start",
            "master_seed": config.master_seed,
            "task_ids": [t.task_id for t in config.tasks],
            "budget_unit": config.budgets.unit,
            "initial_budget": config.budgets.c0,
        })
        final_weights, report = run_curriculum(
            list(config.tasks), config.budgets.c0, config.budgets.dream_multiplier,
            weights, store,
            net_config=net_config, es_config=config.es,
            consolidation_config=config.consolidation,
            replay_policy=config.replay,
            budget_unit=config.budgets.unit,
            max_total_budget=config.budgets.max_total_budget,
            dream_steps_per_unit=config.budgets.dream_steps_per_unit,
            workers=args.workers,
            seed=config.master_seed,
            on_event=writer.emit,
        )
        solved_tasks = [t for t in config.tasks
                        if t.task_id in {r.task_id for r in report.solved}]
        for task in solved_tasks:
            results = retention_check(final_weights, [task], net_config,
                                      base_seed=config.master_seed)
            res = results[task.task_id]
            writer.emit({
                "event": "retention_check",
                "task_id": task.task_id,
                "pass_number": report.pass_count,
                "passed": bool(res.passed),
                "success_rate": res.success_rate,
                "mean_return": res.mean_return,
                "mean_length": res.mean_length,
            })
        writer.emit({
            "event": "run_end",
            "solved_task_ids": [r.task_id for r in report.solved],
            "unsolved_task_ids": report.unsolved_task_ids,
            "pass_count": report.pass_count,
            "total_search_spent": report.total_search_spent,
            "consolidations": report.consolidations,
        })

    store.save(config.paths.trace_file)
    save_checkpoint(config.paths.checkpoint_dir / "final.ckpt", net_config, final_weights)
    print(f"solved {len(report.solved)}/{len(config.tasks)} tasks; "
          f"traces: {config.paths.trace_file}; metrics: {config.paths.metrics_file}")
    return 0


def cmd_eval(args) -> int:
    config = _load(args.config, None)
    task = _find_task(config, args.task)
    net_config, weights = _load_checkpoint_or_usage_error(args.checkpoint)
    trials = args.trials if args.trials is not None else task.criterion.min_success_trials
    if trials < 1:
        raise ConfigError("trials", "must be >= 1")
    stats = evaluate_policy(weights, net_config, task, trials, base_seed=args.seed)
    print(f"task {task.task_id}: success_rate={stats['success_rate']:.3f} "
          f"mean_return={stats['mean_return']:.4f} mean_length={stats['mean_length']:.1f} "
          f"over {trials} trials")
    return 0


def cmd_transfer_probe(args) -> int:
    config = _load(args.config, args.seed)
    task = _find_task(config, args.task)
    warm_config, warm_weights = _load_checkpoint_or_usage_error(args.checkpoint)
    if warm_config.n_params != config.net.n_params:
        raise ConfigError("checkpoint", "checkpoint topology does not match net config")
    _, fresh_weights = init_network(config.net)
    store = TraceStore(StoreDims.from_net_config(config.net))
    es = replace(config.es, seed=config.master_seed)
    outcome = try_solve_task(
        warm_weights, fresh_weights, task,
        Budget(config.budgets.unit, config.budgets.c0), es, store,
        config=config.net, workers=args.workers,
    )
    event = scrub({
        "event": "transfer_probe",
        "task_id": task.task_id,
        "status": outcome.status,
        "winner": outcome.winner,
        "budget_unit": config.budgets.unit,
        "budget": config.budgets.c0,
        "budget_spent_warm": outcome.budget_spent["warm"],
        "budget_spent_scratch": outcome.budget_spent["scratch"],
        "max_batch_cost": outcome.max_batch_cost,
        "evaluations_warm": outcome.evaluations["warm"],
        "evaluations_scratch": outcome.evaluations["scratch"],
        "relevant_trial_ids": outcome.relevant_trial_ids,
    })
    validate_event(event)
    print(json.dumps(event))
    return 0


def cmd_traces(args) -> int:
    try:
        store = TraceStore.load(args.trace_file)
    except FileNotFoundError:
        raise ConfigError("trace_file", f"file not found: {args.trace_file}") from None
    if args.dump is not None:
        try:
            trial = store.get(args.dump)
        except KeyError:
            print(f"error: no trial with id {args.dump}", file=sys.stderr)
            return 1
        from .traces import trial_to_json

        print(json.dumps(trial_to_json(trial), indent=2))
        return 0
    trials = list(store)
    if args.task is not None:
        trials = [t for t in trials if t.task_id == args.task]
    if args.success:
        trials = [t for t in trials if t.success]
    if args.failed:
        trials = [t for t in trials if not t.success]
    if args.relevant:
        trials = [t for t in trials if t.relevant]
    for t in trials:
        print(f"{t.trial_id}\t{t.task_id}\tsuccess={t.success}\trelevant={t.relevant}"
              f"\tsteps={len(t.timesteps)}\tfinal_cr={t.final_return!r}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": cmd_run,
        "eval": cmd_eval,
        "transfer-probe": cmd_transfer_probe,
        "traces": cmd_traces,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
