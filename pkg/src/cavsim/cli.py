"""Command-line entry point: ``cavsim validate | run | compare``.

Exit codes: 0 success, 1 validation failure, 2 infeasible plan or other
runtime error, 3 I/O failure (including refusing to overwrite output).
"""
from __future__ import annotations

import argparse
import copy
import json
import os
import shutil
import sys
import time
from pathlib import Path

from . import __version__
from .config import ScenarioReadError, config_hash, parse_scenario, read_document, reference_path
from .engine import BASELINE, MODES, OPTIMAL, run, validate_config, write_jsonl, write_trace
from .exceptions import CavsimError, ConfigurationError, InfeasiblePlanError
from .metrics import build_reports, write_reports

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3
OUTPUT_ROOT_ENV = "CAVSIM_OUTPUT_ROOT"


class OutputError(Exception):
    pass


def _load(args, mode=None):
    """Parsed document with command-line overrides applied, and its config."""
    path = Path(args.scenario) if args.scenario else reference_path()
    doc = copy.deepcopy(read_document(path))
    scen = doc.setdefault("scenario", {})
    for key, value in (("mode", mode or getattr(args, "mode", None)), ("seed", args.seed),
                       ("dt", args.dt), ("duration", args.duration)):
        if value is not None:
            scen[key] = value
    config = parse_scenario(doc)
    problems = validate_config(config)
    if problems:
        raise ConfigurationError("\n".join(problems))
    return path, doc, config


def _out_dir(args, config, label: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        out = root / f"{config.name}-{label}-seed{config.seed}"
    if out.exists() and any(out.iterdir()):
        if not args.overwrite:
            raise OutputError(f"{out}: output directory exists and is not empty "
                              "(pass --overwrite to replace it)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run(result, out: Path) -> dict:
    paths = {"trace": out / "trace.csv", "events": out / "events.jsonl",
             "ledger": out / "ledger.jsonl"}
    write_trace(result.trace, paths["trace"])
    write_jsonl(result.events, paths["events"])
    write_jsonl(result.ledger_records(), paths["ledger"])
    return {k: str(v) for k, v in paths.items()}


def _manifest(out: Path, source: Path, doc: dict, config, modes, outputs, started) -> dict:
    shutil.copyfile(source, out / "scenario.toml")
    manifest = {
        "config_hash": config_hash(doc),
        "scenario": str(source),
        "scenario_copy": str(out / "scenario.toml"),
        "overrides": {k: doc["scenario"].get(k) for k in ("mode", "seed", "dt", "duration")},
        "modes": list(modes),
        "seed": config.seed,
        "version": __version__,
        "outputs": outputs,
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def cmd_validate(args) -> int:
    _, doc, config = _load(args)
    print(f"{config.name}: ok ({len(config.network.routes)} routes, "
          f"{len(config.network.zones)} zones, {len(config.fleet)} vehicles, "
          f"hash {config_hash(doc)[:12]})")
    return EXIT_OK


def cmd_run(args) -> int:
    started = time.perf_counter()
    source, doc, config = _load(args)
    out = _out_dir(args, config, config.mode)
    result = run(config)
    outputs = _write_run(result, out)
    _manifest(out, source, doc, config, [config.mode], outputs, started)
    print(f"{config.mode} run written to {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    started = time.perf_counter()
    source, doc, base_cfg = _load(args, BASELINE)
    opt_cfg = base_cfg.with_(mode=OPTIMAL)
    out = _out_dir(args, base_cfg, "compare")
    outputs = {}
    results = {}
    for cfg in (base_cfg, opt_cfg):
        sub = out / cfg.mode
        sub.mkdir()
        results[cfg.mode] = run(cfg)
        outputs[cfg.mode] = _write_run(results[cfg.mode], sub)
    reports = build_reports(results[BASELINE].trace, results[OPTIMAL].trace, opt_cfg,
                            ego_only=args.ego_only)
    outputs["reports"] = write_reports(reports, out)
    doc["scenario"].pop("mode", None)
    _manifest(out, source, doc, base_cfg, [BASELINE, OPTIMAL], outputs, started)
    with open(outputs["reports"]["travel_times"]) as fh:
        sys.stdout.write(fh.read())
    s = reports["summary"]
    print(f"mean loop time: baseline {s['mean_baseline']:.2f} s, optimal {s['mean_optimal']:.2f} s"
          f" ({s['mean_percent']:.1f}% lower)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_mode=False, with_out=True):
        p.add_argument("--scenario", help="scenario TOML file (default: bundled reference)")
        if with_mode:
            p.add_argument("--mode", choices=MODES)
        p.add_argument("--seed", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--duration", type=float)
        if with_out:
            p.add_argument("--out", help=f"output directory (default under ${OUTPUT_ROOT_ENV} or ./runs)")
            p.add_argument("--overwrite", action="store_true")

    p = sub.add_parser("validate", help="check a scenario file")
    common(p, with_mode=True, with_out=False)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("run", help="simulate one mode")
    common(p, with_mode=True)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare", help="simulate both modes and report travel times")
    common(p)
    p.add_argument("--ego-only", action="store_true", help="speed statistics over ego vehicles only")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioReadError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigurationError as exc:
        print(f"invalid scenario:\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    except InfeasiblePlanError as exc:
        print(f"infeasible plan: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OutputError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CavsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
