"""Command-line front end.

Subcommands::

    rais gen-data  --out DATA [--config bench.yaml]
    rais run       --data DATA --out RESULTS [--config run.yaml] [--preset NAME ...]
    rais ablate    --data DATA --out RESULTS [--config run.yaml]
    rais sweep-k   --data DATA --out RESULTS --k 10,20,30 [--config run.yaml]
    rais compare   --results RESULTS
    rais report    --result RESULTS/rais.json

Config files are flat YAML mappings whose keys are the fields of
``RunConfig`` (or ``BenchmarkConfig`` for gen-data); a ``preset`` key picks a
named method before the other keys are applied. Unknown keys are rejected.

Exit codes: 0 success, 1 configuration error, 2 missing or invalid input data.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, fields
from pathlib import Path
from typing import Dict, List, Optional

import yaml

from .datagen import BenchmarkConfig, benchmark_specs, make_experience, read_dataset, write_dataset
from .harness import PRESETS, RunConfig, preset, run_ablation, run_sequential
from .numcore import ConfigError

log = logging.getLogger("rais")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2
MANIFEST = "manifest.json"


class DataError(Exception):
    """Input data missing or unreadable."""


# ---------------------------------------------------------------------------
# io helpers

def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_yaml_mapping(path: Optional[str]) -> Dict:
    if path is None:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: cannot parse: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat mapping of keys to values")
    for k, v in data.items():
        if isinstance(v, dict):
            raise ConfigError(f"{path}: key {k!r} is nested; the config format is flat")
    return data


def run_config_from(path: Optional[str], preset_name: Optional[str] = None, **overrides) -> RunConfig:
    data = load_yaml_mapping(path)
    name = preset_name or data.pop("preset", None)
    data.pop("preset", None)
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        cfg = preset(name, **data) if name else RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def load_data_dir(path: str):
    root = Path(path)
    manifest = root / MANIFEST
    if not manifest.is_file():
        raise DataError(f"no {MANIFEST} in {root}")
    try:
        meta = json.loads(manifest.read_text())
        return [read_dataset(root / f["file"]) for f in meta["files"]], meta
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise DataError(f"cannot load datasets from {root}: {exc}") from exc


# ---------------------------------------------------------------------------
# tables

def _pct(mean: float, std: float) -> str:
    return f"{100 * mean:.3f} ± {100 * std:.3f}"


def result_rows(report: Dict) -> List[List[str]]:
    agg = report["aggregate"]
    buf = "-" if report["buffer"] is None else str(report["buffer"])
    row = [report["method"], report["sampling"], buf]
    row += [_pct(m, s) for m, s in zip(agg["eer_mean"], agg["eer_std"])]
    row.append(_pct(agg["avg_eer_mean"], agg["avg_eer_std"]))
    return [row]


def results_csv(reports: List[Dict]) -> str:
    n = max(r["n_experiences"] for r in reports)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["method", "sampling", "buffer", *[f"E{j}" for j in range(n)], "avg_eer"])
    for r in reports:
        w.writerows(result_rows(r))
    return out.getvalue()


def write_report(report: Dict, out_dir: Path) -> Path:
    stem = report["method"]
    path = out_dir / f"{stem}.json"
    atomic_write(path, json.dumps(report, indent=2, sort_keys=True) + "\n")
    atomic_write(out_dir / f"{stem}.csv", results_csv([report]))
    return path


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen_data(args) -> int:
    data = load_yaml_mapping(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    known = {f.name for f in fields(BenchmarkConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        cfg = BenchmarkConfig(**data)
        specs = benchmark_specs(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    files = []
    for spec in specs:
        name = f"experience_{spec.index}.txt"
        target = out / name
        out.mkdir(parents=True, exist_ok=True)
        fd, tmpname = tempfile.mkstemp(dir=out, prefix=f".{name}.")
        os.close(fd)
        write_dataset(make_experience(spec), tmpname)
        os.chmod(tmpname, 0o644)
        os.replace(tmpname, target)
        files.append({"file": name, "sha256": hashlib.sha256(target.read_bytes()).hexdigest()})
    cfg_dict = asdict(cfg)
    manifest = {
        "format": "rais-data-manifest/1",
        "seed": cfg.seed,
        "config": cfg_dict,
        "spec_hash": hashlib.sha256(_canonical(cfg_dict).encode()).hexdigest(),
        "files": files,
    }
    atomic_write(out / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(files)} experiences to {out}")
    return EXIT_OK


def _seeds(text: Optional[str]):
    if text is None:
        return None
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad seed list {text!r}") from exc


def cmd_run(args) -> int:
    names = args.preset or [None]
    cfgs = [run_config_from(args.config, n, seeds=_seeds(args.seeds)) for n in names]
    experiences, meta = load_data_dir(args.data)
    out = Path(args.out)
    reports = []
    for cfg in cfgs:
        report = run_sequential(cfg, experiences)
        report["data"] = {"spec_hash": meta.get("spec_hash"), "seed": meta.get("seed")}
        write_report(report, out)
        reports.append(report)
        print(f"{report['method']}: avg EER {_pct(report['aggregate']['avg_eer_mean'], report['aggregate']['avg_eer_std'])} %")
    if len(reports) > 1:
        atomic_write(out / "results.csv", results_csv(reports))
    return EXIT_OK


def cmd_ablate(args) -> int:
    base = run_config_from(args.config, "rais", seeds=_seeds(args.seeds))
    experiences, meta = load_data_dir(args.data)
    out = Path(args.out)
    base_kw = {k: v for k, v in base.to_dict().items()
               if k not in ("name", "disable_aagm", "disable_ais", "disable_diversity_loss")}
    reports = [run_sequential(RunConfig(**base_kw), experiences)]
    for flag in ("disable_aagm", "disable_ais", "disable_diversity_loss"):
        reports.append(run_ablation(RunConfig(**base_kw, **{flag: True}), experiences))
    for r in reports:
        r["data"] = {"spec_hash": meta.get("spec_hash"), "seed": meta.get("seed")}
        write_report(r, out)
    atomic_write(out / "ablation.csv", results_csv(reports))
    print(results_csv(reports), end="")
    return EXIT_OK


def parse_k_list(text: str) -> List[int]:
    try:
        ks = [int(k) for k in text.split(",") if k.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad K list {text!r}") from exc
    if not ks:
        raise ConfigError("empty K list")
    odd = [k for k in ks if k < 2 or k % 2]
    if odd:
        raise ConfigError(f"auxiliary label counts must be even and >= 2: {odd}")
    seen, uniq = set(), []
    for k in ks:
        if k in seen:
            log.warning("duplicate K=%d dropped", k)
            continue
        seen.add(k)
        uniq.append(k)
    return uniq


def cmd_sweep_k(args) -> int:
    ks = parse_k_list(args.k)
    base = run_config_from(args.config, "rais", seeds=_seeds(args.seeds))
    experiences, _ = load_data_dir(args.data)
    kw = {k: v for k, v in base.to_dict().items() if k != "name"}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "avg_eer_mean", "avg_eer_std", "seeds"])
    for k in ks:
        kw["aux_labels"] = k
        report = run_sequential(RunConfig(**kw, name=f"rais_k{k}"), experiences)
        agg = report["aggregate"]
        w.writerow([k, repr(agg["avg_eer_mean"]), repr(agg["avg_eer_std"]), " ".join(map(str, base.seeds))])
        print(f"K={k}: avg EER {_pct(agg['avg_eer_mean'], agg['avg_eer_std'])} %")
    atomic_write(Path(args.out) / "sweep_k.csv", buf.getvalue())
    return EXIT_OK


def load_results(results_dir: str) -> List[Dict]:
    root = Path(results_dir)
    if not root.is_dir():
        raise DataError(f"no results directory {root}")
    reports = []
    for path in sorted(root.glob("*.json")):
        try:
            r = json.loads(path.read_text())
            float(r["aggregate"]["avg_eer_mean"])
            r["method"], r["sampling"], r["n_experiences"]
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("skipping malformed result %s (%s)", path.name, exc)
            continue
        reports.append(r)
    if not reports:
        raise DataError(f"no valid result files in {root}")
    return reports


def rank_reports(reports: List[Dict]) -> List[Dict]:
    """Ascending mean average EER; ties by method name."""
    return sorted(reports, key=lambda r: (r["aggregate"]["avg_eer_mean"], r["method"]))


def cmd_compare(args) -> int:
    ranked = rank_reports(load_results(args.results))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "method", "sampling", "buffer", "avg_eer", "mark"])
    for i, r in enumerate(ranked):
        mark = {0: "best", 1: "second"}.get(i, "")
        w.writerow([i + 1, r["method"], r["sampling"], "-" if r["buffer"] is None else r["buffer"],
                    _pct(r["aggregate"]["avg_eer_mean"], r["aggregate"]["avg_eer_std"]), mark])
    text = buf.getvalue()
    atomic_write(Path(args.results) / "compare.csv", text)
    print(text, end="")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.result)
    try:
        report = json.loads(path.read_text())
        cfg = RunConfig.from_dict(report["config"])
    except FileNotFoundError as exc:
        raise DataError(f"no result file {path}") from exc
    except (ValueError, KeyError) as exc:
        raise DataError(f"{path}: not a result file ({exc})") from exc
    if args.data:
        experiences, _ = load_data_dir(args.data)
        report = run_sequential(cfg, experiences)
    text = results_csv([report])
    if args.out:
        atomic_write(Path(args.out), text)
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rais", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write the synthetic 5-experience benchmark")
    g.add_argument("--config", help="BenchmarkConfig YAML")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("run", help="train sequentially and write results")
    r.add_argument("--config", help="RunConfig YAML")
    r.add_argument("--preset", action="append", choices=PRESETS + ("rais_lr1e5",),
                   help="named method; repeat to run several")
    r.add_argument("--data", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seeds", help="comma-separated seed override")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("ablate", help="full method plus the three ablations")
    a.add_argument("--config")
    a.add_argument("--data", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--seeds")
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("sweep-k", help="average EER versus auxiliary label count")
    s.add_argument("--config")
    s.add_argument("--k", default="10,20,30,40,50,60,70,80,90,100")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seeds")
    s.set_defaults(func=cmd_sweep_k)

    c = sub.add_parser("compare", help="rank result files by average EER")
    c.add_argument("--results", required=True)
    c.set_defaults(func=cmd_compare)

    rp = sub.add_parser("report", help="regenerate the CSV row from a result file")
    rp.add_argument("--result", required=True)
    rp.add_argument("--data", help="re-run the recorded config on this data first")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
