"""Command line entry point: ``erl <scenario> [--config FILE] [--seed S] [--out DIR] [--json]``.

Exit status is 0 when every check of the scenario passes, 2 when a check
fails and 1 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from importlib import metadata
from pathlib import Path

from .scenarios import SCENARIOS, ScenarioResult

log = logging.getLogger("erl")

TOP_LEVEL_KEYS = {"scenario", "system", "family", "budgets", "tolerances", "seed", "a", "output"}
CSV_COLUMNS = ["family", "n", "quantity", "value", "mu", "rho"]


class ConfigError(ValueError):
    pass


def artifact_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def load_config(path: str) -> dict:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def resolve_config(name: str, doc: dict, overrides: dict) -> dict:
    """Defaults of the scenario, then the file, then command-line overrides."""
    sc = SCENARIOS[name]
    unknown = set(doc) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    if doc.get("scenario", name) != name:
        raise ConfigError(f"config is for scenario {doc['scenario']!r}, not {name!r}")
    cfg = {"scenario": name, "system": {}, "family": {}, "budgets": {}, "tolerances": {}, "seed": 0,
           "output": "."}
    cfg.update(copy.deepcopy(sc.defaults))
    for key in ("budgets", "tolerances"):
        extra = set(doc.get(key, {})) - set(cfg[key]) - ({"expected"} if key == "tolerances" else set())
        if extra:
            raise ConfigError(f"unknown {key} fields for {name}: {sorted(extra)}")
        cfg[key].update(doc.get(key, {}))
    for key in ("system", "family"):
        cfg[key].update(doc.get(key, {}))
    for key in ("seed", "a", "output"):
        if key in doc:
            cfg[key] = doc[key]
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("seed", "output"):
            cfg[key] = value
        elif key == "word":
            cfg["family"] = {"word": value}
        elif key == "point":
            cfg["family"] = {"point": value}
        else:
            if key not in cfg["budgets"]:
                raise ConfigError(f"--{key.replace('_', '-')} does not apply to scenario {name}")
            cfg["budgets"][key] = [value] if isinstance(cfg["budgets"][key], list) else value
    return cfg


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def results_csv(result: ScenarioResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in result.rows:
        w.writerow([_fmt(row.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item"):
        return x.item()
    if isinstance(x, float) and (x != x or x in (float("inf"), float("-inf"))):
        return str(x)
    return x


def run(cfg: dict) -> tuple[int, ScenarioResult]:
    """Run a resolved configuration and write its three artifacts."""
    log.info("running scenario %s", cfg["scenario"])
    t0 = time.perf_counter()
    result = SCENARIOS[cfg["scenario"]].run(cfg)
    out = Path(cfg["output"])
    summary = {"scenario": cfg["scenario"], "passed": result.passed, "checks": result.checks,
               "elapsed_seconds": round(time.perf_counter() - t0, 3), **result.summary}
    manifest = {"artifact_version": artifact_version(), "config": cfg,
                "threads": os.environ.get("ERL_THREADS", "1")}
    _write_atomic(out / "results.csv", results_csv(result))
    _write_atomic(out / "summary.json", json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    _write_atomic(out / "manifest.json", json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return (0 if result.passed else 2), result


def list_scenarios(as_json: bool) -> str:
    cat = [{"name": s.name, "description": s.description, "topic": s.reference} for s in SCENARIOS.values()]
    if as_json:
        return json.dumps(cat, indent=2)
    width = max(len(s["name"]) for s in cat)
    return "\n".join(f"{s['name']:<{width}}  {s['description']} [{s['topic']}]" for s in cat)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="erl", description="Escape rates and cluster statistics for shrinking holes.")
    p.add_argument("scenario", help="scenario name, or 'list'")
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="output")
    p.add_argument("--json", action="store_true", help="print the summary (or catalog) as JSON")
    p.add_argument("--n-min", type=int)
    p.add_argument("--n-max", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--t-max", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--word", help="periodic word for the dichotomy scenario")
    p.add_argument("--point", help="named or digit-string point (e.g. sqrt2-1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["run"]:
        argv = argv[1:]
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.scenario == "list":
            print(list_scenarios(args.json))
            return 0
        if args.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {args.scenario!r}; try 'erl list'")
        doc = load_config(args.config) if args.config else {}
        overrides = {"seed": args.seed, "output": args.output, "n_min": args.n_min, "n_max": args.n_max,
                     "K": args.K, "t_max": args.t_max, "N": args.N, "word": args.word, "point": args.point}
        cfg = resolve_config(args.scenario, doc, overrides)
    except (ConfigError, OSError) as e:
        print(f"erl: error: {e}", file=sys.stderr)
        return 1
    try:
        code, result = run(cfg)
    except (ValueError, KeyError) as e:
        print(f"erl: configuration error: {e}", file=sys.stderr)
        return 1
    summary_path = Path(cfg["output"]) / "summary.json"
    if args.json:
        print(summary_path.read_text(), end="")
    else:
        for name, ok in result.checks.items():
            print(f"{'PASS' if ok else 'FAIL'} {name}")
        print(f"wrote {cfg['output']}/results.csv, summary.json, manifest.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
