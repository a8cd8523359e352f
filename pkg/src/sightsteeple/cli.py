"""Command line entry point."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ScenarioConfig, attack1_config, attack2_config, load
from .report import SUITES, build_report
from .simulation import World, attack2_outcome, enumerate_schedules
from .trace import ReplayError, replay, write_trace

SCENARIOS = Path(__file__).parent / "scenarios"


def resolve_config(arg: str) -> ScenarioConfig:
    p = Path(arg)
    if not p.exists():
        bundled = SCENARIOS / (arg if arg.endswith(".toml") else arg + ".toml")
        if bundled.exists():
            p = bundled
        else:
            raise ConfigError(arg, "no such file or bundled scenario")
    return load(p)


def output_dir(config: ScenarioConfig) -> Path:
    return Path(os.environ.get("SIGHTSTEEPLE_OUT") or config.output)


def _save(report, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{report.name}-seed{report.seed}"
    (out / f"{stem}.report.txt").write_text(report.text())
    (out / f"{stem}.report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    cfg = resolve_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    world = World(cfg).run()
    report = build_report(world, args.check)
    sys.stdout.write(report.text())
    _save(report, output_dir(cfg))
    if args.trace:
        write_trace(args.trace, world, report, args.check)
    return 0 if not report.violations else 1


def cmd_replay(args) -> int:
    try:
        report = replay(args.trace)
    except ReplayError as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(report.text())
    return 0 if not report.violations else 1


def cmd_attack(args) -> int:
    if args.which == "1":
        results = {}
        for leak in (True, False):
            cfg = attack1_config(leak)
            report = build_report(World(cfg).run(), "def2")
            results[leak] = report.check("integrity")
            print(f"{cfg.name}: {results[leak].line()}")
        ok = results[True].status == "fail" and results[False].status == "pass"
        print("attack 1 reproduced: integrity fails only when the key is leaked" if ok
              else "attack 1 NOT reproduced")
        return 0 if ok else 1
    verkey = args.verkey == "on"
    cfg = attack2_config(verkey=verkey)
    world = World(cfg).run()
    out = attack2_outcome(world)
    for k, v in out.items():
        print(f"{k}: {v}")
    first = out["attacker_epochs"][0]
    if verkey:
        ok = out["victim_votes"][first] is False and not out["wrong_key_notarized"][0]
        print("wrong-key block rejected at vote time" if ok else "wrong-key block NOT rejected")
    else:
        ok = out["honest_no"] >= 1 and out["victim_next_notarized"] is False
        print("victim's next proposal drew honest no votes and was not notarized" if ok
              else "attack 2 NOT reproduced")
    return 0 if ok else 1


def cmd_enumerate(args) -> int:
    cfg = resolve_config(args.config)
    try:
        res = enumerate_schedules(cfg, args.limit)
    except ValueError as exc:
        print(f"enumerate: {exc}", file=sys.stderr)
        return 2
    print(f"schedules explored: {res.schedules}")
    print(f"max decision points: {res.max_decisions}")
    print(f"violations: {len(res.violations)}")
    for v in res.violations[:20]:
        print("  " + v)
    return 0 if not res.violations else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sightsteeple", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one seeded scenario")
    r.add_argument("config", help="TOML file or bundled scenario name")
    r.add_argument("--seed", type=int)
    r.add_argument("--trace", help="write the event trace here")
    r.add_argument("--check", choices=sorted(SUITES), default="all")
    r.set_defaults(func=cmd_run)
    p = sub.add_parser("replay", help="re-execute a trace and verify it")
    p.add_argument("trace")
    p.set_defaults(func=cmd_replay)
    a = sub.add_parser("attack", help="reproduce one of the two attacks")
    a.add_argument("which", choices=["1", "2"])
    a.add_argument("--verkey", choices=["on", "off"], default="off")
    a.set_defaults(func=cmd_attack)
    e = sub.add_parser("enumerate", help="explore every delay schedule of a small scenario")
    e.add_argument("config")
    e.add_argument("--limit", type=int, help="stop after this many schedules")
    e.set_defaults(func=cmd_enumerate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
