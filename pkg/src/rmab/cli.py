"""Command-line front end: index tables, experiment runs, and comparisons.

Subcommands: index | run | compare | list-instances. Experiments are
configured by a JSON document (`--config`); individual flags override
config fields. Worker count for trial batches is capped by the
RMAB_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__, instances, policies, sim, whittle
from .mdp import RmabInstance
from .whittle import ConvergenceError, IndexOutsideBoundError, NonIndexableError


class ConfigError(ValueError):
    """Bad experiment configuration (unknown names, invalid ranges)."""


@dataclass
class ExperimentConfig:
    """One experiment: an instance, a policy list, and run parameters."""

    instance_spec: dict
    policy_specs: list[tuple[str, dict]]
    T: int = 1000
    n_trials: int = 30
    base_seed: int = 0
    budget: int | None = None
    out_dir: str = "results"
    window: int = 1

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        known = {"instance", "policies", "T", "n_trials", "base_seed", "budget", "out_dir", "window"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        spec = doc.get("instance")
        if not isinstance(spec, dict) or not ({"generator", "path"} & set(spec)):
            raise ConfigError("config needs an 'instance' object with 'generator' or 'path'")
        policy_specs = [_parse_policy_entry(e) for e in doc.get("policies", [])]
        if not policy_specs:
            raise ConfigError("config needs a non-empty 'policies' list")
        cfg = ExperimentConfig(
            instance_spec=spec,
            policy_specs=policy_specs,
            T=doc.get("T", 1000),
            n_trials=doc.get("n_trials", 30),
            base_seed=doc.get("base_seed", 0),
            budget=doc.get("budget"),
            out_dir=doc.get("out_dir", "results"),
            window=doc.get("window", 1),
        )
        cfg.validate()
        return cfg

    def validate(self):
        if "generator" in self.instance_spec:
            name = self.instance_spec["generator"]
            if name not in instances.GENERATORS:
                raise ConfigError(
                    f"unknown generator {name!r}; available: {', '.join(sorted(instances.GENERATORS))}"
                )
        for name, _ in self.policy_specs:
            if name not in policies.POLICY_NAMES:
                raise ConfigError(
                    f"unknown policy {name!r}; available: {', '.join(policies.POLICY_NAMES)}"
                )
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if self.n_trials < 1:
            raise ConfigError(f"n_trials must be >= 1, got {self.n_trials}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")

    def instance_name(self) -> str:
        if "generator" in self.instance_spec:
            return self.instance_spec["generator"]
        return Path(self.instance_spec["path"]).stem

    def build_instance(self) -> RmabInstance:
        if "generator" in self.instance_spec:
            inst = instances.make(
                self.instance_spec["generator"], **self.instance_spec.get("params", {})
            )
        else:
            inst = instances.load(self.instance_spec["path"])
        if self.budget is not None:
            if not 1 <= self.budget <= inst.n_arms:
                raise ConfigError(f"budget {self.budget} invalid for {inst.n_arms} arms")
            inst = inst.with_budget(self.budget)
        return inst


def _parse_policy_entry(entry) -> tuple[str, dict]:
    if isinstance(entry, str):
        return entry, {}
    if isinstance(entry, dict) and len(entry) == 1:
        name, params = next(iter(entry.items()))
        if not isinstance(params, dict):
            raise ConfigError(f"policy {name!r}: hyperparameters must be an object")
        return name, params
    raise ConfigError(f"policy entries must be a name or {{name: params}}, got {entry!r}")


class PolicyFactory:
    """Picklable per-trial policy builder; precomputes OPT index tables once."""

    def __init__(self, name: str, instance: RmabInstance, params: dict):
        self.name = name
        self.instance = instance
        self.params = dict(params)
        self._opt_tables = None
        if name == "opt":
            probe = policies.build_policy(name, instance, **self.params)
            self._opt_tables = probe.index_tables

    def __call__(self) -> policies.Policy:
        if self.name == "opt":
            return policies.OptIndexPolicy(
                self.instance.n_arms,
                self.instance.budget,
                list(self._opt_tables),
                solver_kwargs=self.params,
            )
        return policies.build_policy(self.name, self.instance, **self.params)


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    cfg = ExperimentConfig.from_dict(doc)
    if getattr(args, "T", None) is not None:
        cfg.T = args.T
    if getattr(args, "trials", None) is not None:
        cfg.n_trials = args.trials
    if getattr(args, "seed", None) is not None:
        cfg.base_seed = args.seed
    if getattr(args, "budget", None) is not None:
        cfg.budget = args.budget
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    cfg.validate()
    return cfg


def cmd_index(args) -> int:
    """Compute and emit the Whittle index table for the configured instance."""
    if args.instance is not None:
        inst = instances.make(args.instance)
        name = args.instance
    else:
        cfg = _load_config(args)
        inst = cfg.build_instance()
        name = cfg.instance_name()
    if args.budget is not None:
        inst = inst.with_budget(args.budget)
    solver_kwargs = {"mode": args.mode, "gamma": args.gamma, "eps": args.eps}

    tables = {}
    for i, arm in enumerate(inst.arms):
        key = arm.transitions.tobytes() + arm.rewards.tobytes()
        if key not in tables:
            report = whittle.check_indexability(arm, mode=args.mode, gamma=args.gamma)
            if not report.indexable:
                print(f"error: arm {i} of {name} is not indexable: {report.message}", file=sys.stderr)
                return 1
            tables[key] = whittle.index_table(arm, **solver_kwargs)

    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("arm", "state", "lambda_star"))
        for i, arm in enumerate(inst.arms):
            key = arm.transitions.tobytes() + arm.rewards.tobytes()
            for z, lam in enumerate(tables[key]):
                w.writerow((i, z, repr(float(lam))))
    finally:
        if args.out:
            out.close()
    return 0


def cmd_run(args) -> int:
    """Run every configured policy, write raw/aggregate CSVs, manifest, figures."""
    cfg = _load_config(args)
    inst = cfg.build_instance()
    name = cfg.instance_name()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = sim.default_workers()

    outputs = []
    series_by_policy = {}
    for policy_name, params in cfg.policy_specs:
        factory = PolicyFactory(policy_name, inst, params)
        logs = sim.run_trials(inst, factory, cfg.T, cfg.n_trials, cfg.base_seed, workers=workers)
        series = sim.aggregate(logs, window=cfg.window)
        raw_path = out_dir / f"{name}_{policy_name}_raw.csv"
        agg_path = out_dir / f"{name}_{policy_name}_agg.csv"
        sim.write_raw_csv(raw_path, name, policy_name, logs)
        sim.write_agg_csv(agg_path, name, policy_name, series)
        outputs.extend([raw_path.name, agg_path.name])
        series_by_policy[policy_name] = series
        print(f"{name}/{policy_name}: {cfg.n_trials} trials x {cfg.T} steps -> {agg_path}")

    if not args.no_plot:
        from . import plotting

        fig_path = out_dir / f"{name}_reward.png"
        plotting.plot_reward_curves(series_by_policy, name, fig_path)
        outputs.append(fig_path.name)
        print(f"{name}: figure -> {fig_path}")

    manifest = {
        "version": __version__,
        "instance": name,
        "config": {
            "instance": cfg.instance_spec,
            "policies": [{n: p} if p else n for n, p in cfg.policy_specs],
            "T": cfg.T,
            "n_trials": cfg.n_trials,
            "base_seed": cfg.base_seed,
            "budget": cfg.budget,
            "window": cfg.window,
        },
        "seeds": list(range(cfg.base_seed, cfg.base_seed + cfg.n_trials)),
        "outputs": outputs,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_compare(args) -> int:
    """Summarize aggregate CSVs over the final window fraction of steps."""
    if not 0.0 < args.window_fraction <= 1.0:
        print("error: --window-fraction must be in (0, 1]", file=sys.stderr)
        return 2
    rows = []
    for path in args.agg_csv:
        data = sim.read_agg_csv(path)
        t = data["mean"].size
        n_last = int(round(args.window_fraction * t))
        if n_last < 1:
            print(f"error: window fraction {args.window_fraction} selects no steps of {path}", file=sys.stderr)
            return 2
        window_mean = float(data["mean"][-n_last:].mean())
        window_stderr = float(data["stderr"][-n_last:].mean())
        rows.append((data["policy"], data["instance"], window_mean, window_stderr, n_last))
    rows.sort(key=lambda r: -r[2])
    print(f"{'policy':<10} {'instance':<20} {'mean':>12} {'stderr':>10} {'steps':>6}")
    for policy_name, instance_name, mean, stderr, n_last in rows:
        print(f"{policy_name:<10} {instance_name:<20} {mean:>12.4f} {stderr:>10.4f} {n_last:>6}")
    return 0


def cmd_list_instances(args) -> int:
    """Print the registered instance generators and their default parameters."""
    for name in sorted(instances.GENERATORS):
        defaults = instances.generator_defaults(name)
        pretty = ", ".join(f"{k}={v}" for k, v in defaults.items())
        print(f"{name}({pretty})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmab",
        description="Restless-bandit experiments: Whittle indices, learning policies, seeded trials.",
    )
    parser.add_argument("--version", action="version", version=f"rmab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="compute Whittle index tables as CSV")
    p_index.add_argument("--config", help="experiment config JSON")
    p_index.add_argument("--instance", help="generator name with default parameters")
    p_index.add_argument("--budget", type=int, help="override activation budget")
    p_index.add_argument("--mode", choices=(whittle.AVERAGE, whittle.DISCOUNTED),
                         default=whittle.AVERAGE, help="optimality criterion")
    p_index.add_argument("--gamma", type=float, default=whittle.DEFAULT_GAMMA,
                         help="discount factor (discounted mode)")
    p_index.add_argument("--eps", type=float, default=whittle.DEFAULT_EPS,
                         help="index search precision")
    p_index.add_argument("--out", help="write CSV here instead of stdout")
    p_index.set_defaults(func=cmd_index)

    p_run = sub.add_parser("run", help="run configured policies and write CSVs plus figures")
    p_run.add_argument("--config", required=True, help="experiment config JSON")
    p_run.add_argument("--T", type=int, help="override steps per trial")
    p_run.add_argument("--trials", type=int, help="override number of trials")
    p_run.add_argument("--seed", type=int, help="override base seed")
    p_run.add_argument("--budget", type=int, help="override activation budget")
    p_run.add_argument("--out", help="override output directory")
    p_run.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="summarize aggregate CSVs over the final steps")
    p_cmp.add_argument("agg_csv", nargs="+", help="aggregate CSV paths from `run`")
    p_cmp.add_argument("--window-fraction", type=float, default=0.2,
                       help="final fraction of steps to average (default 0.2)")
    p_cmp.set_defaults(func=cmd_compare)

    p_list = sub.add_parser("list-instances", help="list instance generators and defaults")
    p_list.set_defaults(func=cmd_list_instances)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, instances.InstanceFormatError, NonIndexableError,
            IndexOutsideBoundError, ConvergenceError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
