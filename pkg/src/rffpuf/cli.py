"""Command-line entry point."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from importlib import resources

from . import attacks, stats
from .metrics import format_table
from .netsim import ConfigError, ScriptError, read_json, run_simulation, validate_config
from .vectors import emit_vectors

SEED_ENV = "IOD_SIM_SEED"


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(path, text):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _seed(args, default=None):
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return default


def bundled(name: str) -> str:
    """Path of a bundled scenario config, by file name or stem."""
    stem = name[:-5] if name.endswith(".json") else name
    return str(resources.files("rffpuf") / "scenarios" / f"{stem}.json")


def _resolve(path: str) -> str:
    if os.path.exists(path):
        return path
    alt = bundled(os.path.basename(path))
    if os.path.exists(alt):
        return alt
    raise ConfigError(f"{path}: no such config (bundled: {', '.join(list_bundled())})")


def list_bundled():
    root = resources.files("rffpuf") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _fail(failures, code=1):
    sys.stderr.write(_dump({"verdict": "fail", "failures": failures}))
    return code


def cmd_run(args) -> int:
    raw = read_json(_resolve(args.config))
    if isinstance(raw, dict) and "stats" in raw:
        params = dict(raw["stats"])
        suite = params.pop("suite")
        seed = _seed(args, raw.get("seed", 0))
        rep = {"schema": 1, "name": raw.get("name", ""), **stats.SUITES[suite](seed=seed, **params)}
        rep["verdict"] = "pass" if rep["pass"] else "fail"
        _write(args.report, _dump(rep))
        print(f"{suite}: {'pass' if rep['pass'] else 'FAIL'}")
        return 0 if rep["pass"] else _fail([k for k, ok in rep["checks"].items() if not ok])
    cfg = validate_config(raw)
    if args.continuous_rffi:
        cfg["continuous_rffi"] = True
    rep, transcript = run_simulation(cfg, _seed(args))
    _write(args.report, _dump(rep))
    _write(args.transcript, transcript)
    sys.stdout.write(format_table(rep["metrics"]))
    print(f"verdict: {rep['verdict']}")
    return 0 if rep["verdict"] == "pass" else _fail(rep["failures"])


def cmd_attacks(args) -> int:
    names = attacks.SUITES if args.suite == "all" else (args.suite,)
    res = attacks.run_suites(names, _seed(args))
    _write(args.report, _dump({"schema": 1, "suites": list(names), "attacks": res}))
    for r in res:
        reason = ", ".join(f"{k}×{v}" for k, v in r["reason"].items())
        print(f"{r['scenario']:<14}{r['attack']:<34}{r['result']:<10}"
              f"{r['rejected']}/{r['attempts']}  {reason}")
    bad = [f"{r['scenario']}/{r['attack']}" for r in res if r["result"] != "rejected"]
    return 0 if not bad else _fail(bad)


def cmd_stats(args) -> int:
    params = {}
    if args.config:
        params = dict(read_json(_resolve(args.config)).get("stats", {}))
        if params.pop("suite", args.suite) != args.suite:
            raise ConfigError(f"{args.config} is not a {args.suite} config")
    rep = stats.SUITES[args.suite](seed=_seed(args, 0), **params)
    _write(args.report, _dump(rep))
    sys.stdout.write(_dump(rep))
    return 0 if rep["pass"] else _fail([k for k, ok in rep["checks"].items() if not ok])


def cmd_vectors(args) -> int:
    text = emit_vectors(args.emit)
    print(f"{args.emit}: sha256 {hashlib.sha256(text.encode()).hexdigest()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rffpuf", description="RFF-PUF drone authentication simulator")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("--config", required=True, help="config path or bundled scenario name")
    r.add_argument("--seed", type=int)
    r.add_argument("--report")
    r.add_argument("--transcript")
    r.add_argument("--continuous-rffi", action="store_true")
    r.set_defaults(fn=cmd_run)

    a = sub.add_parser("attacks", help="run canned attack batteries")
    a.add_argument("--suite", required=True, choices=(*attacks.SUITES, "all"))
    a.add_argument("--seed", type=int)
    a.add_argument("--report")
    a.set_defaults(fn=cmd_attacks)

    s = sub.add_parser("stats", help="PUF or RFFI statistics")
    s.add_argument("--suite", required=True, choices=tuple(stats.SUITES))
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--report")
    s.set_defaults(fn=cmd_stats)

    v = sub.add_parser("vectors", help="write reference vectors")
    v.add_argument("--emit", required=True)
    v.set_defaults(fn=cmd_vectors)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ScriptError) as e:
        return _fail([str(e)], 2)


if __name__ == "__main__":
    sys.exit(main())
