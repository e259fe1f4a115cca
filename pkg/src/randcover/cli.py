"""``randcover`` command line: list, run, reproduce, verify and manifest.

Exit codes: 0 all checks passed, 1 an acceptance check failed, 2 usage or
configuration error, 3 resource cap exceeded.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dyadic import ResourceCapError
from .experiments import RUNNERS, Outcome

log = logging.getLogger("randcover")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3
OUT_ENV = "RANDCOVER_OUT"


class ConfigError(ValueError):
    """Invalid scenario document; the message lists the offending fields."""


@dataclass
class Scenario:
    name: str
    description: str
    runner: str
    master_seed: int
    seed_count: int
    params: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        problems = []
        if not isinstance(doc, dict):
            raise ConfigError("scenario must be a JSON object")
        for key, typ in (("name", str), ("runner", str), ("params", dict), ("thresholds", dict),
                         ("seeds", dict)):
            if key not in doc:
                problems.append(f"{key}: missing")
            elif not isinstance(doc[key], typ):
                problems.append(f"{key}: expected {typ.__name__}")
        if not problems:
            if doc["runner"] not in RUNNERS:
                problems.append(f"runner: unknown {doc['runner']!r} (known: {', '.join(sorted(RUNNERS))})")
            seeds = doc["seeds"]
            for key in ("master", "count"):
                if not isinstance(seeds.get(key), int) or isinstance(seeds.get(key), bool):
                    problems.append(f"seeds.{key}: expected integer")
            if isinstance(seeds.get("count"), int) and seeds["count"] < 1:
                problems.append("seeds.count: must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))
        return cls(doc["name"], doc.get("description", ""), doc["runner"], doc["seeds"]["master"],
                   doc["seeds"]["count"], doc["params"], doc["thresholds"])

    def to_dict(self) -> dict:
        return {"name": self.name, "description": self.description, "runner": self.runner,
                "seeds": {"master": self.master_seed, "count": self.seed_count},
                "params": self.params, "thresholds": self.thresholds}

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    @property
    def seeds(self) -> tuple[int, list[int]]:
        return self.master_seed, list(range(self.seed_count))


def builtin_names() -> list[str]:
    files = resources.files("randcover") / "scenarios"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_builtin(name: str) -> Scenario:
    path = resources.files("randcover") / "scenarios" / f"{name}.json"
    if not path.is_file():
        raise KeyError(name)
    return Scenario.from_dict(json.loads(path.read_text()))


def load_config(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return Scenario.from_dict(doc)


# -- output ----------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([_cell(v) for v in row])
    return buf.getvalue().encode()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else str(f)
    return v


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def emit_manifest(run_dir: str | Path) -> Path:
    """Write ``manifest.json``: config hash, seeds, versions and file checksums."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"no run directory {run_dir}")
    cfg_path = run_dir / "config.json"
    if not cfg_path.exists():
        raise FileNotFoundError(f"{run_dir} has no config.json; not a completed run")
    sc = Scenario.from_dict(json.loads(cfg_path.read_text()))
    files = sorted(p for p in run_dir.iterdir()
                   if p.is_file() and p.name not in ("manifest.json", "run.log"))
    man = {
        "scenario": sc.name,
        "config_sha256": sc.config_hash(),
        "master_seed": sc.master_seed,
        "seeds": sc.seeds[1],
        "versions": {"randcover": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "files": {p.name: _sha256(p) for p in files},
    }
    out = run_dir / "manifest.json"
    out.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return out


def verify_run(run_dir: str | Path) -> list[str]:
    """Checksum mismatches and missing files relative to the manifest."""
    run_dir = Path(run_dir)
    man_path = run_dir / "manifest.json"
    if not man_path.exists():
        raise FileNotFoundError(f"{run_dir} has no manifest.json")
    man = json.loads(man_path.read_text())
    problems = []
    for name, digest in sorted(man["files"].items()):
        p = run_dir / name
        if not p.exists():
            problems.append(f"{name}: missing")
        elif _sha256(p) != digest:
            problems.append(f"{name}: checksum mismatch")
    cfg = run_dir / "config.json"
    if cfg.exists() and Scenario.from_dict(json.loads(cfg.read_text())).config_hash() != man["config_sha256"]:
        problems.append("config.json: hash differs from manifest")
    return problems


def run_scenario(sc: Scenario, out_root: str | Path, jobs: int = 1) -> tuple[Outcome, Path]:
    """Execute ``sc`` and write config, tables, summary, manifest and a timestamp log."""
    run_dir = Path(out_root) / sc.name
    run_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    outcome = RUNNERS[sc.runner](sc.params, sc.seeds, sc.thresholds, jobs=jobs)
    elapsed = time.time() - started
    (run_dir / "config.json").write_text(json.dumps(sc.to_dict(), indent=2, sort_keys=True) + "\n")
    for name, (header, rows) in outcome.tables.items():
        (run_dir / f"{name}.csv").write_bytes(csv_bytes(header, rows))
    summary = {
        "scenario": sc.name,
        "config_sha256": sc.config_hash(),
        "passed": outcome.passed,
        "estimates": _jsonable(outcome.estimates),
        "checks": _jsonable([c.as_dict() for c in outcome.checks]),
        "tables": sorted(f"{n}.csv" for n in outcome.tables),
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    emit_manifest(run_dir)
    with open(run_dir / "run.log", "a") as fh:
        stamp = time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started))
        fh.write(f"{stamp} scenario={sc.name} jobs={jobs} seconds={elapsed:.3f} "
                 f"passed={outcome.passed} timings={json.dumps(_jsonable(outcome.timings))}\n")
    return outcome, run_dir


# -- command line --------------------------------------------------------------------

def _default_out() -> str:
    return os.environ.get(OUT_ENV, "runs")


def _report(outcome: Outcome, run_dir: Path, as_json: bool) -> int:
    if as_json:
        print((run_dir / "summary.json").read_text(), end="")
    else:
        for c in outcome.checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.6g} {c.op} {c.threshold:g}")
        print(f"results in {run_dir}")
    return EXIT_OK if outcome.passed else EXIT_FAIL


def _apply_overrides(sc: Scenario, args) -> Scenario:
    params = dict(sc.params)
    if getattr(args, "alpha", None) is not None:
        if "alphas" not in params:
            raise ConfigError(f"--alpha does not apply to {sc.name}")
        params["alphas"] = [float(args.alpha)]
    if getattr(args, "ratio", None) is not None:
        if "ratios" not in params:
            raise ConfigError(f"--ratio does not apply to {sc.name}")
        R = int(args.ratio)
        if R < 2 or R & (R - 1):
            raise ConfigError("--ratio must be a power of two >= 2")
        params["ratios"] = [2 ** k for k in range(1, R.bit_length())]
    count = sc.seed_count if getattr(args, "seeds", None) is None else int(args.seeds)
    if count < 1:
        raise ConfigError("--seeds must be >= 1")
    return Scenario(sc.name, sc.description, sc.runner, sc.master_seed, count, params, sc.thresholds)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="randcover", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list", help="list built-in scenarios")
    p.add_argument("--json", action="store_true", help="emit a JSON array")

    def common(p):
        p.add_argument("--seeds", type=int, help="number of trials (overrides the scenario)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
        p.add_argument("--out", default=None, help=f"output root (default ${OUT_ENV} or ./runs)")
        p.add_argument("--json", action="store_true", help="print the JSON summary")

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("--config", required=True)
    common(p)

    p = sub.add_parser("reproduce", help="run a built-in scenario")
    p.add_argument("name")
    p.add_argument("--alpha", type=float)
    p.add_argument("--ratio", type=int)
    common(p)

    p = sub.add_parser("verify", help="check a run directory against its manifest")
    p.add_argument("run_dir")

    p = sub.add_parser("manifest", help="(re)write the manifest of a run directory")
    p.add_argument("run_dir")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list":
            items = [{"name": n, "description": load_builtin(n).description} for n in builtin_names()]
            if args.json:
                print(json.dumps(items, indent=2))
            else:
                width = max(len(i["name"]) for i in items)
                for i in items:
                    print(f"{i['name']:<{width}}  {i['description']}")
            return EXIT_OK
        if args.command in ("run", "reproduce"):
            if args.command == "run":
                sc = _apply_overrides(load_config(args.config), args)
            else:
                try:
                    sc = _apply_overrides(load_builtin(args.name), args)
                except KeyError:
                    print(f"unknown scenario {args.name!r}; known scenarios:", file=sys.stderr)
                    for n in builtin_names():
                        print(f"  {n}", file=sys.stderr)
                    return EXIT_USAGE
            if args.jobs < 1:
                raise ConfigError("--jobs must be >= 1")
            out = args.out or _default_out()
            log.info("running %s into %s", sc.name, out)
            outcome, run_dir = run_scenario(sc, out, jobs=args.jobs)
            return _report(outcome, run_dir, args.json)
        if args.command == "verify":
            problems = verify_run(args.run_dir)
            for msg in problems:
                print(msg)
            if not problems:
                print("ok")
            return EXIT_FAIL if problems else EXIT_OK
        if args.command == "manifest":
            print(emit_manifest(args.run_dir))
            return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
