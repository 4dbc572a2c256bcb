"""Experiment harness: run configs, trial execution, grid-search protocol.

Config files are flat sectioned key=value text (configparser syntax). The
[run] section names the preset, environment, demo file, seeds, and output
directory; optional [backbone], [discriminator], and [schedule] sections
override individual preset fields; a [grid] section declares hyperparameter
axes as ``axis.<section>.<field> = v1, v2, ...``.

Scoring follows the tuned protocol: a trial's score is the average of its
evaluation means over the last 10 evaluations (trials with fewer than 10
records are excluded with a warning), and a configuration's score averages
its trials' scores. Rankings sort by score, ties broken by config digest so
reruns are stable.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .demos import load_demos
from .engine import EngineConfig, RailEngine, TrialMetrics
from .presets import ALGO_PRESETS, build_config

WORKERS_ENV_VAR = "RAIL_WORKERS"
SCORE_WINDOW = 10  # last-N evaluations averaged by the grid-search score


class ConfigError(ValueError):
    """Run configuration file is malformed or inconsistent."""


@dataclass
class RunConfig:
    env_name: str
    demo_path: str
    preset: str = "saifo"
    representation: str | None = None
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "runs"
    total_steps: int = 12_000
    overrides: dict = field(default_factory=dict)  # section -> {field: raw str}

    def engine_config(self) -> EngineConfig:
        cfg = build_config(self.preset, self.env_name, self.total_steps, self.representation)
        for section, values in self.overrides.items():
            target = {
                "backbone": cfg.backbone,
                "discriminator": cfg.disc,
                "schedule": cfg.schedule,
            }.get(section)
            if target is None:
                raise ConfigError(f"unknown override section [{section}]")
            for key, raw in values.items():
                _apply_field(target, key, raw, section)
        # discriminator cadence fields mirror into the schedule unless the
        # [schedule] section pinned them explicitly
        sched_overrides = self.overrides.get("schedule", {})
        if "disc_update_every" not in sched_overrides:
            cfg.schedule.disc_update_every = cfg.disc.update_every
        if "warmup_disc_steps" not in sched_overrides:
            cfg.schedule.warmup_disc_steps = cfg.disc.warmup_steps
        cfg.validate()
        return cfg

    def digest(self) -> str:
        """Stable identifier of the effective engine configuration."""
        cfg = self.engine_config()
        blob = json.dumps(_to_jsonable(cfg), sort_keys=True)
        payload = json.dumps(
            {"engine": blob, "env": self.env_name, "demos": os.path.basename(self.demo_path)},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def with_override(self, section: str, key: str, raw_value: str) -> "RunConfig":
        overrides = {s: dict(v) for s, v in self.overrides.items()}
        overrides.setdefault(section, {})[key] = raw_value
        return replace(self, overrides=overrides)


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    return obj


def _apply_field(target, key: str, raw: str, section: str) -> None:
    matching = [f for f in dataclasses.fields(target) if f.name == key]
    if not matching:
        raise ConfigError(f"[{section}] has no field {key!r}")
    current = getattr(target, key)
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        elif isinstance(current, tuple):
            value = tuple(int(v) for v in raw.split(","))
        else:
            value = raw
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}: {exc}") from None
    setattr(target, key, value)


def load_run_config(path) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if "run" not in parser:
        raise ConfigError("config needs a [run] section")
    run = parser["run"]
    for required in ("env", "demos"):
        if required not in run:
            raise ConfigError(f"[run] needs {required!r}")
    preset = run.get("preset", "saifo")
    if preset not in ALGO_PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; have {sorted(ALGO_PRESETS)}")
    seeds = [int(s) for s in run.get("seeds", "0").replace(",", " ").split()]
    overrides = {}
    for section in ("backbone", "discriminator", "schedule"):
        if section in parser:
            overrides[section] = dict(parser[section])
    cfg = RunConfig(
        env_name=run["env"],
        demo_path=run["demos"],
        preset=preset,
        representation=run.get("representation") or None,
        seeds=seeds,
        out_dir=run.get("out", "runs"),
        total_steps=run.getint("total_steps", 12_000),
        overrides=overrides,
    )
    cfg.engine_config()  # validate before any trial starts
    return cfg


def write_effective_config(run_config: RunConfig, out_dir) -> Path:
    """Render the fully-resolved configuration next to the outputs."""
    cfg = run_config.engine_config()
    parser = configparser.ConfigParser()
    parser["run"] = {
        "env": run_config.env_name,
        "preset": run_config.preset,
        "representation": cfg.segment.tag(),
        "demos": run_config.demo_path,
        "seeds": ",".join(str(s) for s in run_config.seeds),
        "out": str(out_dir),
        "total_steps": str(run_config.total_steps),
        "config_digest": run_config.digest(),
    }
    for section, obj in (
        ("backbone", cfg.backbone),
        ("discriminator", cfg.disc),
        ("schedule", cfg.schedule),
    ):
        parser[section] = {
            f.name: ",".join(str(v) for v in getattr(obj, f.name))
            if isinstance(getattr(obj, f.name), tuple)
            else str(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
        }
    path = Path(out_dir) / "effective_config.ini"
    with open(path, "w") as fh:
        parser.write(fh)
    return path


def metrics_filename(digest: str, seed: int) -> str:
    return f"{digest}_seed{seed}.jsonl"


def run_trial(run_config: RunConfig, seed: int, out_dir=None) -> TrialMetrics:
    """One trial; engine errors become a failed metrics record, not a crash."""
    digest = run_config.digest()
    try:
        demos = load_demos(run_config.demo_path)
        engine = RailEngine(run_config.engine_config(), demos, seed, config_digest=digest)
        metrics = engine.train()
    except Exception as exc:  # noqa: BLE001 - failed trials must not sink the harness
        metrics = TrialMetrics(run_config.env_name, seed, digest, failed=True, error=str(exc))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / metrics_filename(digest, seed)).write_text(metrics.to_jsonl())
    return metrics


def _trial_worker(args) -> str:
    run_config, seed, out_dir = args
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except ImportError:
        pass
    return run_trial(run_config, seed, out_dir).to_jsonl()


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        warnings.warn(f"bad {WORKERS_ENV_VAR}={raw!r}; using 1 worker")
        return 1


def run_trials(run_config: RunConfig, out_dir=None, workers: int | None = None) -> list[TrialMetrics]:
    """All seeds of one config, optionally across processes."""
    workers = worker_count() if workers is None else max(1, workers)
    jobs = [(run_config, seed, out_dir) for seed in run_config.seeds]
    if workers == 1 or len(jobs) == 1:
        return [run_trial(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        texts = list(pool.map(_trial_worker, jobs))
    return [TrialMetrics.from_jsonl(t) for t in texts]


def trial_score(metrics: TrialMetrics) -> float | None:
    """Mean evaluation return over the trial's last SCORE_WINDOW evaluations;
    None when the trial failed or has too few records to qualify."""
    if metrics.failed:
        return None
    if len(metrics.records) < SCORE_WINDOW:
        warnings.warn(
            f"trial seed={metrics.seed} has {len(metrics.records)} < "
            f"{SCORE_WINDOW} evaluations; excluded from scoring"
        )
        return None
    window = metrics.records[-SCORE_WINDOW:]
    return float(np.mean([r.eval_mean_return for r in window]))


def score_config(trials: list[TrialMetrics]) -> float | None:
    """Config score: mean of qualifying trial scores (None if none qualify)."""
    scores = [s for s in (trial_score(m) for m in trials) if s is not None]
    if not scores:
        return None
    return float(np.mean(scores))


@dataclass
class GridSpec:
    base: RunConfig
    axes: dict  # "section.field" -> list of raw value strings
    trials_per_config: int = 10

    def configs(self) -> list[tuple[dict, RunConfig]]:
        """Cartesian product of the axes, applied to the base config."""
        items = sorted(self.axes.items())
        combos: list[tuple[dict, RunConfig]] = [({}, self.base)]
        for key, values in items:
            section, _, fname = key.partition(".")
            if not fname:
                raise ConfigError(f"grid axis {key!r} must be section.field")
            combos = [
                ({**assign, key: raw}, cfg.with_override(section, fname, str(raw)))
                for assign, cfg in combos
                for raw in values
            ]
        return combos

    @property
    def total_trials(self) -> int:
        n = self.trials_per_config
        for values in self.axes.values():
            n *= len(values)
        return n


def load_grid_spec(path) -> GridSpec:
    base = load_run_config(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read(path)
    if "grid" not in parser:
        raise ConfigError("grid search needs a [grid] section")
    grid = parser["grid"]
    trials = int(grid.get("trials_per_config", "10"))
    axes = {}
    for key, raw in grid.items():
        if key == "trials_per_config":
            continue
        if not key.startswith("axis."):
            raise ConfigError(f"[grid] keys must be axis.<section>.<field>, got {key!r}")
        values = [v.strip() for v in raw.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"grid axis {key!r} has no values")
        axes[key[len("axis.") :]] = values
    if not axes:
        raise ConfigError("grid needs at least one axis")
    return GridSpec(base, axes, trials)


@dataclass
class GridResult:
    assignment: dict
    digest: str
    score: float | None
    n_trials: int
    n_failed: int

    def row(self) -> str:
        score = "n/a" if self.score is None else f"{self.score:.3f}"
        flags = f" [{self.n_failed} failed]" if self.n_failed else ""
        assign = ", ".join(f"{k}={v}" for k, v in sorted(self.assignment.items()))
        return f"{score:>12}  {self.digest}  {assign}{flags}"


def grid_search(spec: GridSpec, out_dir=None, workers: int | None = None) -> list[GridResult]:
    """Run every config x seed and rank by score (descending); ties break on
    the config digest so reruns produce identical rankings."""
    workers = worker_count() if workers is None else max(1, workers)
    seeds = list(range(spec.trials_per_config))
    results = []
    jobs = []
    combos = spec.configs()
    for assignment, cfg in combos:
        cfg = replace(cfg, seeds=seeds)
        sub_dir = None if out_dir is None else Path(out_dir) / cfg.digest()
        jobs.append((assignment, cfg, sub_dir))

    all_metrics: dict[str, list[TrialMetrics]] = {}
    flat = [(cfg, seed, sub_dir) for _, cfg, sub_dir in jobs for seed in seeds]
    if workers == 1:
        outputs = [run_trial(*job).to_jsonl() for job in flat]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_trial_worker, flat))
    for (cfg, seed, _), text in zip(flat, outputs):
        all_metrics.setdefault(cfg.digest(), []).append(TrialMetrics.from_jsonl(text))

    for assignment, cfg, _ in jobs:
        trials = all_metrics[cfg.digest()]
        results.append(
            GridResult(
                assignment,
                cfg.digest(),
                score_config(trials),
                len(trials),
                sum(1 for m in trials if m.failed),
            )
        )
    results.sort(key=lambda r: (-(r.score if r.score is not None else -np.inf), r.digest))
    if out_dir is not None:
        table = "\n".join(r.row() for r in results) + "\n"
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "ranking.txt").write_text(table)
    return results
