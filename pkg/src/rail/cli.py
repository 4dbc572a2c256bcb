"""Command-line front end.

Verbs:
    expert  train an expert on the true reward and record demonstrations
    run     run imitation trials for one configuration
    grid    hyperparameter grid search with the last-10-evaluations score
    plot    aggregate metrics files into a comparison figure + data table

Worker processes for parallel trials come from the RAIL_WORKERS environment
variable (default 1). Exit code is 0 only when everything requested
succeeded.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .demos import record_demos, save_demos, save_policy, train_expert
from .engine import TrialMetrics
from .envs import ENV_REGISTRY
from .harness import (
    GridSpec,
    RunConfig,
    grid_search,
    load_grid_spec,
    load_run_config,
    metrics_filename,
    run_trials,
    write_effective_config,
)
from .presets import ALGO_PRESETS, EXPERT_TARGETS, expert_backbone_config


def _parse_seeds(args) -> list[int]:
    if args.seeds:
        return [int(s) for s in args.seeds.replace(",", " ").split()]
    return [args.seed]


def cmd_expert(args) -> int:
    targets = EXPERT_TARGETS[args.env]
    target = args.target_return if args.target_return is not None else targets["target_return"]
    budget = args.budget if args.budget is not None else targets["step_budget"]
    print(f"training {args.env} expert to return >= {target} (budget {budget} steps)")
    backbone, achieved = train_expert(
        args.env, expert_backbone_config(args.env), target, seed=args.seed, step_budget=budget
    )
    print(f"expert evaluation return: {achieved:.1f}")
    dataset = record_demos(backbone, args.env, args.episodes, args.include_actions, args.seed + 500_000)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_demos(dataset, out)
    kind = "state-action" if args.include_actions else "observation-only"
    print(f"wrote {dataset.n_episodes} {kind} episodes "
          f"(mean return {dataset.expert_mean_return:.1f}) to {out}")
    policy_path = out.with_suffix(".policy")
    save_policy(backbone.policy, args.env, policy_path)
    print(f"wrote expert policy checkpoint to {policy_path}")
    return 0


def cmd_run(args) -> int:
    if args.config:
        run_config = load_run_config(args.config)
        if args.seeds or args.seed != 0:
            run_config.seeds = _parse_seeds(args)
        if args.out:
            run_config.out_dir = args.out
    else:
        if not (args.env and args.demos):
            print("run: need --config, or --env plus --demos", file=sys.stderr)
            return 2
        run_config = RunConfig(
            env_name=args.env,
            demo_path=args.demos,
            preset=args.preset,
            representation=args.representation,
            seeds=_parse_seeds(args),
            out_dir=args.out or "runs",
            total_steps=args.steps,
        )
    out_dir = Path(run_config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_effective_config(run_config, out_dir)
    digest = run_config.digest()
    print(f"config {digest}: {run_config.preset} on {run_config.env_name}, "
          f"seeds {run_config.seeds}")
    all_ok = True
    for metrics in run_trials(run_config, out_dir=out_dir):
        if metrics.failed:
            all_ok = False
            print(f"  seed {metrics.seed}: FAILED ({metrics.error})")
        else:
            last = metrics.records[-1]
            print(f"  seed {metrics.seed}: final eval {last.eval_mean_return:.1f} "
                  f"at {last.env_steps} steps -> {metrics_filename(digest, metrics.seed)}")
    return 0 if all_ok else 1


def cmd_grid(args) -> int:
    spec = load_grid_spec(args.config)
    if args.out:
        spec = GridSpec(spec.base, spec.axes, spec.trials_per_config)
        spec.base.out_dir = args.out
    out_dir = Path(args.out or spec.base.out_dir)
    print(f"grid: {len(spec.configs())} configs x {spec.trials_per_config} trials "
          f"= {spec.total_trials} trials")
    results = grid_search(spec, out_dir=out_dir)
    print(f"{'score':>12}  {'config':<12}  assignment")
    for res in results:
        print(res.row())
    print(f"ranking written to {out_dir / 'ranking.txt'}")
    return 0 if all(r.n_failed == 0 for r in results) else 1


def _collect_metrics(spec: str) -> list[TrialMetrics]:
    path = Path(spec)
    if path.is_dir():
        files = sorted(path.glob("*.jsonl"))
    else:
        files = sorted(path.parent.glob(path.name))
    metrics = [TrialMetrics.from_jsonl(f.read_text()) for f in files]
    if not metrics:
        raise FileNotFoundError(f"no metrics files match {spec!r}")
    return metrics


def cmd_plot(args) -> int:
    from .plots import PlotDataError, emit_plot

    series = {}
    try:
        for item in args.series:
            label, _, spec = item.partition("=")
            if not spec:
                print(f"plot: series must be LABEL=PATH, got {item!r}", file=sys.stderr)
                return 2
            series[label] = _collect_metrics(spec)
        fig_path, table_path = emit_plot(
            series, args.out, expert_return=args.expert_line, title=args.title
        )
    except (FileNotFoundError, PlotDataError) as exc:
        print(f"plot: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {fig_path} and {table_path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rail", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("expert", help="train an expert and record demos")
    p.add_argument("--env", choices=sorted(ENV_REGISTRY), required=True)
    p.add_argument("--out", required=True, help="demo file to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--include-actions", action="store_true",
                   help="keep actions (default records observation-only demos)")
    p.add_argument("--target-return", type=float, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.set_defaults(func=cmd_expert)

    p = sub.add_parser("run", help="run imitation trials")
    p.add_argument("--config", help="run config file")
    p.add_argument("--env", choices=sorted(ENV_REGISTRY))
    p.add_argument("--demos", help="demo file")
    p.add_argument("--preset", choices=sorted(ALGO_PRESETS), default="saifo")
    p.add_argument("--representation", default=None,
                   help="override the preset's discriminator input, e.g. state_skip:3")
    p.add_argument("--steps", type=int, default=12_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="grid search over hyperparameter axes")
    p.add_argument("--config", required=True, help="run config with a [grid] section")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("plot", help="aggregate metrics into a figure")
    p.add_argument("series", nargs="+", metavar="LABEL=PATH",
                   help="metrics dir/glob per labeled series")
    p.add_argument("--out", required=True, help="figure file (.pdf/.svg/.png)")
    p.add_argument("--expert-line", type=float, default=None)
    p.add_argument("--title", default=None)
    p.set_defaults(func=cmd_plot)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
