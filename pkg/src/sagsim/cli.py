"""Command-line entry point.

Any config key can be overridden as ``--section.key=value`` (or ``--key=value`` when
the leaf name is unique); values are parsed as JSON when possible, so
``--tasks.size_range_mb=[1,1]`` works.

Exit codes: 0 success, 2 configuration error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pydantic import ValidationError

from .config import POLICIES, ScenarioConfig, load_config, non_paper_defaults
from .engine import SWEEP_AXES, Simulation, SimulationAbort, sweep
from .output import emit

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


class ConfigError(Exception):
    pass


def _leaf_index():
    index = {}
    for name, section in ScenarioConfig():
        for leaf in type(section).model_fields:
            index.setdefault(leaf, []).append(f"{name}.{leaf}")
    return index


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(extra: list[str]) -> dict:
    index = _leaf_index()
    out = {}
    for tok in extra:
        if not tok.startswith("--") or "=" not in tok:
            raise ConfigError(f"unrecognised argument {tok!r}; overrides look like --section.key=value")
        key, value = tok[2:].split("=", 1)
        key = key.replace("-", "_")
        if "." not in key:
            matches = index.get(key, [])
            if len(matches) != 1:
                raise ConfigError(f"unknown or ambiguous config key {key!r}")
            key = matches[0]
        out[key] = _parse_value(value)
    return out


def _config(args, extra) -> ScenarioConfig:
    overrides = parse_overrides(extra)
    if getattr(args, "static_iotds", False):
        overrides["iotd.mobile"] = False
    try:
        return load_config(args.config, overrides)
    except (ValidationError, KeyError, ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_run(args, extra):
    cfg = _config(args, extra)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series = Simulation(cfg).run()
    emit(series, cfg, "csv", out / "metrics.csv")
    emit(series, cfg, "json", out / "summary.json")
    print(json.dumps(series.summary(), indent=2))


def _cmd_sweep(args, extra):
    cfg = _config(args, extra)
    values = [float(v) for v in args.values.split(",")]
    policies = args.policies.split(",") if args.policies else [cfg.scenario.policy]
    bad = [p for p in policies if p not in POLICIES]
    if bad:
        raise ConfigError(f"unknown policies {bad}")
    seeds = range(cfg.scenario.seed, cfg.scenario.seed + args.seeds)
    results = sweep(cfg, args.axis, values, policies, seeds, args.workers)
    table = []
    for p in policies:
        for v in values:
            runs = [results[(p, v, s)] for s in seeds]
            n = len(runs)
            table.append({
                "policy": p, args.axis: v, "seeds": n,
                "time_avg_iotd_cost": sum(r.tic for r in runs) / n,
                "avg_task_latency_s": sum(r.avg_latency for r in runs) / n,
                "time_avg_iotd_energy_j": sum(r.avg_iotd_energy for r in runs) / n,
                "time_avg_uav_energy_j": sum(r.avg_uav_energy for r in runs) / n,
            })
    text = json.dumps({"axis": args.axis, "points": table,
                       "non_paper_defaults": non_paper_defaults(cfg)}, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)


def _cmd_validate(args, extra):
    cfg = _config(args, extra)
    print(json.dumps({"config": cfg.model_dump(mode="json"),
                      "non_paper_defaults": non_paper_defaults(cfg)}, indent=2))


def _cmd_traces(args, extra):
    cfg = _config(args, extra)
    slots = args.slots or cfg.scenario.horizon
    out = Path(args.out)
    sim = Simulation(cfg, capture_sca=True)
    with out.open("w") as fh:
        def hook(s, slot, ctx, profile):
            rec = {
                "slot": slot,
                "profile": profile.tolist(),
                "visible": list(ctx.sat_ids),
                "predicted_rtt": ctx.sat_rtt_pred.tolist(),
                "relay": int(ctx.satellite) if (profile == 2).any() else None,
                "uav_position": s.uav_position.tolist(),
                "queues": [s.queues.q_u1, s.queues.q_u2],
                "sca": [run.tolist() for run in s.last_sca_trace or []],
            }
            fh.write(json.dumps(rec) + "\n")
        sim.on_slot = hook
        while not sim.done and sim.env.slot <= slots:
            sim.step()
    bandit_path = out.with_suffix(".bandit.json")
    bandit_path.write_text(sim.stats.to_json())
    print(f"wrote {out} and {bandit_path}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sagsim", description="Online edge-offloading simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; missing keys take defaults")
        sp.add_argument("--static-iotds", action="store_true", help="disable device mobility")

    r = sub.add_parser("run", help="simulate one scenario and write metrics.csv / summary.json")
    common(r)
    r.add_argument("--out-dir", default=".")

    s = sub.add_parser("sweep", help="paired-seed parameter sweep")
    common(s)
    s.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    s.add_argument("--values", required=True, help="comma-separated (task_size in Mb, uav_compute in GHz)")
    s.add_argument("--policies", help="comma-separated; default: the configured policy")
    s.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="write the JSON table here as well")

    v = sub.add_parser("validate-config", help="print the resolved config")
    common(v)

    t = sub.add_parser("dump-traces", help="per-slot decision and SCA traces as JSON lines")
    common(t)
    t.add_argument("--out", default="traces.jsonl")
    t.add_argument("--slots", type=int, help="stop after this many slots")
    return p


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "validate-config": _cmd_validate,
            "dump-traces": _cmd_traces}


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        COMMANDS[args.command](args, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationAbort as exc:
        print(f"aborted at {exc}", file=sys.stderr)
        print(json.dumps(exc.state, indent=2), file=sys.stderr)
        return EXIT_ABORT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
