"""Command-line entry point: ``safe-mbrl {list,run,all}``."""

import argparse
import ast
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from safe_mbrl.errors import ContractViolation
from safe_mbrl.learner import LearnerGains
from safe_mbrl.sim import Mode, ScenarioConfig, builtin_scenarios, run_scenario

__all__ = ["RunRequest", "parse_args", "load_config", "apply_overrides", "main"]

_GAIN_KEYS = {f.name for f in dataclasses.fields(LearnerGains)}
_CONFIG_KEYS = {f.name for f in dataclasses.fields(ScenarioConfig)} - {"gains"}


@dataclass
class RunRequest:
    command: str
    scenario: Optional[str] = None
    config_path: Optional[Path] = None
    out: Path = Path("results")
    overrides: dict = field(default_factory=dict)
    plot: bool = False
    log_every: int = 10
    jobs: int = 1


def _parse_value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def load_config(path) -> ScenarioConfig:
    """Read a flat ``key = value`` file; ``base = <scenario>`` selects the starting point."""
    entries = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractViolation(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key] = _parse_value(value)
    base_name = entries.pop("base", None)
    if base_name is None:
        if "name" not in entries:
            entries["name"] = Path(path).stem
        gains = {k: entries.pop(k) for k in list(entries) if k in _GAIN_KEYS}
        unknown = set(entries) - _CONFIG_KEYS
        if unknown:
            raise ContractViolation(f"unknown config keys: {sorted(unknown)}")
        return ScenarioConfig(gains=LearnerGains(**gains), **entries)
    scenarios = builtin_scenarios()
    if base_name not in scenarios:
        raise ContractViolation(f"unknown base scenario {base_name!r}; valid: {', '.join(scenarios)}")
    return apply_overrides(scenarios[base_name], entries)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _numeric_nest(v):
    """Tuple-ize a (possibly nested) sequence of numbers, or raise."""
    if _is_number(v):
        return float(v)
    if isinstance(v, (list, tuple)):
        return tuple(_numeric_nest(item) for item in v)
    raise ContractViolation(f"expected numbers, got {v!r}")


def _coerce(key, value, current):
    if key == "mode":
        try:
            return Mode(value)
        except ValueError:
            raise ContractViolation(f"mode must be one of {[m.value for m in Mode]}") from None
    if key == "gamma0" or key == "theta0":
        if value is None and key == "theta0":
            return None
        return _numeric_nest(value)
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ContractViolation(f"{key} must be true or false")
        return value
    if isinstance(current, int):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ContractViolation(f"{key} must be an integer")
        return value
    if isinstance(current, float):
        if not _is_number(value):
            raise ContractViolation(f"{key} must be a number")
        return float(value)
    if isinstance(current, tuple):
        if not isinstance(value, (list, tuple)):
            raise ContractViolation(f"{key} must be a sequence")
        return _numeric_nest(value)
    if isinstance(current, str) and not isinstance(value, str):
        raise ContractViolation(f"{key} must be a string")
    return value


def apply_overrides(config: ScenarioConfig, overrides: dict) -> ScenarioConfig:
    gains = {k: v for k, v in overrides.items() if k in _GAIN_KEYS}
    rest = {k: v for k, v in overrides.items() if k not in _GAIN_KEYS}
    unknown = set(rest) - _CONFIG_KEYS
    if unknown:
        raise ContractViolation(f"unknown config keys: {sorted(unknown)}")
    for key, value in list(rest.items()):
        rest[key] = _coerce(key, value, getattr(config, key))
    if gains:
        rest["gains"] = dataclasses.replace(config.gains, **gains)
    return config.replace(**rest)


def _x0(text):
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"x0 must be comma-separated numbers, got {text!r}") from None
    return values


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--seed", type=_seed)
    common.add_argument("--dt", type=float)
    common.add_argument("--horizon", type=float)
    common.add_argument("--mode", choices=[m.value for m in Mode])
    common.add_argument("--cb", type=float, dest="c_b", help="safeguard gain c_b")
    common.add_argument("--x0", type=_x0, help="initial state, e.g. -3,-1.9")
    common.add_argument("--plot", action="store_true", help="also write SVG figures")
    common.add_argument("--log-every", type=int, default=10, help="CSV decimation factor")

    parser = argparse.ArgumentParser(prog="safe-mbrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="print the builtin scenario names")
    run = sub.add_parser("run", parents=[common], help="run one scenario")
    run.add_argument("scenario", nargs="?")
    run.add_argument("--config", type=Path, dest="config_path")
    batch = sub.add_parser("all", parents=[common], help="run every builtin scenario")
    batch.add_argument("--jobs", type=int, default=1)
    return parser


def parse_args(argv=None) -> RunRequest:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.command == "list":
        return RunRequest(command="list")
    overrides = {k: getattr(ns, k) for k in ("seed", "dt", "horizon", "mode", "c_b", "x0") if getattr(ns, k) is not None}
    if ns.log_every < 1:
        parser.error("--log-every must be at least 1")
    req = RunRequest(command=ns.command, out=ns.out, overrides=overrides, plot=ns.plot, log_every=ns.log_every)
    if ns.command == "all":
        req.jobs = max(1, ns.jobs)
        return req
    valid = list(builtin_scenarios())
    if ns.scenario is None and ns.config_path is None:
        parser.error(f"run needs a scenario name or --config; valid scenarios: {', '.join(valid)}")
    if ns.scenario is not None and ns.scenario not in valid:
        parser.error(f"unknown scenario {ns.scenario!r}; valid scenarios: {', '.join(valid)}")
    req.scenario, req.config_path = ns.scenario, ns.config_path
    return req


def _execute(config: ScenarioConfig, out: Path, plot: bool, log_every: int):
    from safe_mbrl.logio import summarize, write_log, write_summary

    log = run_scenario(config)
    out.mkdir(parents=True, exist_ok=True)
    write_log(log, out / f"{config.name}.csv", every=log_every)
    write_summary(log, out / f"{config.name}.json")
    if plot:
        from safe_mbrl.plots import render_plots

        render_plots(log, config, out)
    return summarize(log)


def _report(summary: dict) -> str:
    line = (
        f"{summary['scenario']}: {summary['status']}  |x(T)|={summary['norm_x_final']:.4g}"
        f"  min h={summary['min_h']:.4g}  ({summary['wall_time_s']:.1f}s)"
    )
    if summary["violation_steps"]:
        line += f"  violations: {summary['violation_steps']} steps from t={summary['first_violation_time']:g}"
    return line


def main(argv=None) -> int:
    req = parse_args(argv)
    scenarios = builtin_scenarios()
    if req.command == "list":
        for name in scenarios:
            print(name)
        return 0
    try:
        if req.command == "run":
            if req.config_path is not None:
                config = load_config(req.config_path)
                if req.scenario is not None:
                    config = config.replace(name=req.scenario)
            else:
                config = scenarios[req.scenario]
            configs = [apply_overrides(config, req.overrides)]
        else:
            configs = [apply_overrides(c, req.overrides) for c in scenarios.values()]
    except (ContractViolation, OSError, TypeError) as exc:
        print(f"safe-mbrl: error: {exc}", file=sys.stderr)
        return 2

    try:
        if req.jobs > 1 and len(configs) > 1:
            with ProcessPoolExecutor(max_workers=req.jobs) as pool:
                futures = [pool.submit(_execute, c, req.out, req.plot, req.log_every) for c in configs]
                summaries = [f.result() for f in futures]
        else:
            summaries = [_execute(c, req.out, req.plot, req.log_every) for c in configs]
    except ContractViolation as exc:
        print(f"safe-mbrl: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"safe-mbrl: I/O error: {exc}", file=sys.stderr)
        return 1

    for summary in summaries:
        print(_report(summary))
    return 0 if all(s["status"] == "completed" for s in summaries) else 1


if __name__ == "__main__":
    sys.exit(main())
