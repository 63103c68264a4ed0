"""Command-line front end: ``chaos-sampler run | sweep | validate``."""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import jsonschema

from chaos_sampler import __version__, experiment, validation
from chaos_sampler.errors import InvalidArgumentError, NumericFailureError

log = logging.getLogger("chaos_sampler")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4
SEED_ENV = "CHAOS_SAMPLER_SEED"
DEFAULT_SEED = 0

_number = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "modes": _pos_int,
        "photons": _pos_int,
        "input_modes": {"type": "array", "items": _pos_int, "minItems": 1},
        "regimes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["label", "lambda_cap"],
                "properties": {"label": {"type": "string", "minLength": 1}, "lambda_cap": _number},
            },
        },
        "times": {"type": "array", "items": _number, "minItems": 1},
        "realizations": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": _pos_int},
        },
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "shots": {"oneOf": [_pos_int, {"type": "null"}]},
        "sff_ensemble_size": _pos_int,
        "sff_k": _pos_int,
        "dense_grid": {"type": "boolean"},
        "dense_grid_spec": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["log", "linear"]},
                "start": _number,
                "stop": _number,
                "num": {"type": "integer", "minimum": 2},
            },
        },
        "reuse_ensemble": {"type": "boolean"},
        "otoc_output_modes": {"type": "array", "items": _pos_int, "minItems": 2, "maxItems": 2},
        "probes": {"type": "array", "items": {"enum": list(experiment.PROBES)}, "uniqueItems": True},
        "output_dir": {"type": "string"},
    },
}


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------


def parse_override(item: str) -> tuple[list[str], object]:
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(doc: dict, overrides) -> dict:
    doc = copy.deepcopy(doc)
    for item in overrides or []:
        path, value = parse_override(item)
        node = doc
        for part in path[:-1]:
            if isinstance(node, list):
                node = node[int(part)]
            else:
                node = node.setdefault(part, {})
        last = path[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return doc


def load_document(path, overrides=None) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    doc = apply_overrides(doc, overrides)
    if "master_seed" not in doc and os.environ.get(SEED_ENV):
        try:
            doc["master_seed"] = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} is not an integer") from exc
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from exc
    return doc


def config_from_document(doc: dict) -> experiment.ExperimentConfig:
    kw = {}
    for key in ("modes", "photons", "shots", "sff_ensemble_size", "sff_k", "reuse_ensemble"):
        if key in doc:
            kw[key] = doc[key]
    kw["master_seed"] = doc.get("master_seed", DEFAULT_SEED)
    for key in ("input_modes", "times", "otoc_output_modes", "probes"):
        if key in doc:
            kw[key] = tuple(doc[key])
    if "regimes" in doc:
        kw["regimes"] = tuple(experiment.Regime(r["label"], float(r["lambda_cap"])) for r in doc["regimes"])
    if "realizations" in doc:
        kw["realizations"] = {k: tuple(v) for k, v in doc["realizations"].items()}
    elif "times" in doc or "regimes" in doc:
        kw["realizations"] = {}
    if doc.get("dense_grid"):
        kw["dense_grid"] = experiment.GridSpec(**doc.get("dense_grid_spec", {}))
    try:
        return experiment.ExperimentConfig(**kw)
    except (InvalidArgumentError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# writers
# --------------------------------------------------------------------------

SERIES_COLUMNS = ["time", "mean", "stderr", "n_realizations", "probe_name"]


def _cell(x) -> str:
    return "" if x is None else repr(float(x))


def write_series_csv(series: experiment.ProbeSeries, path: Path) -> None:
    cols = SERIES_COLUMNS + (["shot_stderr"] if series.shot_stderr is not None else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i, t in enumerate(series.times):
            row = [_cell(t), _cell(series.mean[i]), _cell(series.stderr[i]), str(series.n_realizations[i]), series.probe]
            if series.shot_stderr is not None:
                row.append(_cell(series.shot_stderr[i]))
            w.writerow(row)


def read_series_csv(path) -> experiment.ProbeSeries:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    num = lambda s: None if s == "" else float(s)
    shot = [num(r["shot_stderr"]) for r in rows] if rows and "shot_stderr" in rows[0] else None
    return experiment.ProbeSeries(
        rows[0]["probe_name"] if rows else "",
        [float(r["time"]) for r in rows],
        [num(r["mean"]) for r in rows],
        [num(r["stderr"]) for r in rows],
        [int(r["n_realizations"]) for r in rows],
        shot,
    )


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False, ensure_ascii=False) + "\n"


def write_report(report: experiment.ExperimentReport, out: Path) -> list[str]:
    written = []
    (out / "report.json").write_text(dump_json(report.to_dict()), encoding="utf-8")
    written.append("report.json")
    for block, sub in ((report.series, None), (report.ideal_series, "ideal")):
        for regime, by_probe in block.items():
            for name, s in by_probe.items():
                if name not in report.config.probes:
                    continue
                rel = Path(sub, f"{regime}_{name}.csv") if sub else Path(f"{regime}_{name}.csv")
                (out / rel).parent.mkdir(exist_ok=True)
                write_series_csv(s, out / rel)
                written.append(str(rel))
    return written


def write_summary_csv(rows, labels, path: Path) -> None:
    chars = list(experiment.CHARACTERISTIC)
    header = ["M", "D", "N0", "haar_entropy"]
    for lab in labels:
        header += [f"{lab}_max_entropy", f"{lab}_gap", f"{lab}_relative_gap"] + [f"{lab}_{c}" for c in chars]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            line = [r.modes, r.configs, r.total_configs, _cell(r.haar_entropy)]
            for lab in labels:
                line += [_cell(r.max_entropy.get(lab)), _cell(r.gap(lab)), _cell(r.relative_gap(lab))]
                line += [_cell(r.characteristic_times.get(lab, {}).get(c)) for c in chars]
            w.writerow(line)


class _Staging:
    """Write into a scratch directory, then move everything into place."""

    def __init__(self, out: Path):
        self.out = out

    def __enter__(self) -> Path:
        self.tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                for p in sorted(self.tmp.rglob("*")):
                    if p.is_file():
                        dest = self.out / p.relative_to(self.tmp)
                        dest.parent.mkdir(parents=True, exist_ok=True)
                        os.replace(p, dest)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def _check_output_dir(path: Path) -> None:
    if not path.is_dir():
        raise OSError(f"output directory {path} does not exist")
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")


def _manifest(cfg, started: float, threads: int, files, command: str) -> dict:
    return {
        "command": command,
        "master_seed": cfg.master_seed,
        "threads": threads,
        "version": __version__,
        "wall_time_seconds": round(time.time() - started, 3),
        "files": files,
    }


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _resolve(args):
    doc = load_document(args.config, args.set)
    out = Path(args.output or doc.get("output_dir", "."))
    return doc, out


def cmd_run(args) -> int:
    started = time.time()
    doc, out = _resolve(args)
    cfg = config_from_document(doc)
    _check_output_dir(out)
    log.info("run: M=%d N=%d seed=%d", cfg.modes, cfg.photons, cfg.master_seed)
    report = experiment.run_experiment(cfg, threads=args.threads)
    with _Staging(out) as tmp:
        files = write_report(report, tmp)
        (tmp / "manifest.json").write_text(
            dump_json(_manifest(cfg, started, args.threads, files, "run")), encoding="utf-8"
        )
    log.info("wrote %d files to %s", len(files) + 1, out)
    return EXIT_OK


def parse_modes(text: str) -> list[int]:
    try:
        modes = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--modes expects a comma-separated list of integers, got {text!r}") from exc
    if not modes:
        raise ConfigError("--modes is empty")
    return modes


def cmd_sweep(args) -> int:
    started = time.time()
    doc, out = _resolve(args)
    base = config_from_document(doc)
    modes = parse_modes(args.modes)
    try:
        for M in modes:
            dataclasses.replace(base, modes=M)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    _check_output_dir(out)
    reports = experiment.scaling_sweep(base, modes, threads=args.threads)
    rows = experiment.sweep_summary(reports)
    labels = [r.label for r in base.regimes]
    with _Staging(out) as tmp:
        files = []
        for rep in reports:
            sub = tmp / f"M{rep.config.modes}"
            sub.mkdir()
            files += [f"M{rep.config.modes}/{f}" for f in write_report(rep, sub)]
        write_summary_csv(rows, labels, tmp / "sweep_summary.csv")
        files.append("sweep_summary.csv")
        (tmp / "manifest.json").write_text(
            dump_json(_manifest(base, started, args.threads, files, "sweep")), encoding="utf-8"
        )
    return EXIT_OK


def cmd_validate(args) -> int:
    only = []
    for item in args.only or []:
        only += [x for x in item.split(",") if x]
    try:
        results = validation.run_checks(only or None)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chaos-sampler", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log one line per stage")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--set", action="append", metavar="K=V", help="override a config key (dot path)")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--output", help="output directory (must exist)")

    run = sub.add_parser("run", help="run one experiment")
    common(run)
    run.set_defaults(func=cmd_run)
    sweep = sub.add_parser("sweep", help="repeat the experiment for several mode counts")
    common(sweep)
    sweep.add_argument("--modes", required=True, help="comma-separated mode counts, e.g. 6,8,10")
    sweep.set_defaults(func=cmd_sweep)
    val = sub.add_parser("validate", help="run the built-in oracle checks")
    val.add_argument("--only", action="append", help=f"subset of: {', '.join(validation.CHECKS)}")
    val.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "threads", 1) < 1:
        print("chaos-sampler: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"chaos-sampler: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailureError as exc:
        print(f"chaos-sampler: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"chaos-sampler: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
