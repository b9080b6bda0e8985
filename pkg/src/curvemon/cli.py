"""Command-line front end: generate data, fit, monitor, evaluate, export.

Subcommands: simulate | phase1 | phase2 | evaluate | plotdata. Configuration
files may be TOML or JSON; command-line flags win over file values. Every
invocation writes a manifest next to its output. Exit codes: 0 on success,
2 on validation errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .curves import SampledCurve, load_curves_json, save_curves_json
from .errors import CurvemonError, InvalidInput
from .monitoring import MonitoringResult, far_tdr
from .pipeline import (
    Phase1Artifacts,
    PipelineConfig,
    load_artifacts,
    phase1,
    phase2,
    save_artifacts,
)
from .simgen import GenConfig, draw_ic, draw_oc


def _load_config_file(path) -> dict:
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode())
    return json.loads(text)


def _write_manifest(out_path, command: str, args: argparse.Namespace,
                    inputs: list, outputs: list, started: float) -> None:
    manifest = {
        "command": command,
        "config": getattr(args, "config", None),
        "seed": getattr(args, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "elapsed_seconds": round(time.time() - started, 3),
        "library_version": __version__,
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1))


def _result_to_dict(res: MonitoringResult) -> dict:
    def clean(arr):
        return [None if np.isnan(v) else float(v) for v in arr]

    return {
        "curve_id": res.curve_id,
        "x": res.x.tolist(),
        "t2": clean(res.t2),
        "spe": clean(res.spe),
        "t2_limit": clean(res.t2_limit),
        "spe_limit": [None if np.isinf(v) else float(v) for v in res.spe_limit],
        "monitorable": res.monitorable.tolist(),
        "alarm": res.alarm.tolist(),
        "first_alarm_x": res.first_alarm_x,
        "notes": [[x, msg] for x, msg in res.notes],
    }


def _result_from_dict(d: dict) -> MonitoringResult:
    def arr(values, fill):
        return np.array([fill if v is None else v for v in values], dtype=float)

    return MonitoringResult(
        curve_id=d["curve_id"],
        x=np.asarray(d["x"], dtype=float),
        t2=arr(d["t2"], np.nan),
        spe=arr(d["spe"], np.nan),
        t2_limit=arr(d["t2_limit"], np.nan),
        spe_limit=arr(d["spe_limit"], np.inf),
        monitorable=np.asarray(d["monitorable"], dtype=bool),
        notes=[tuple(n) for n in d.get("notes", [])],
    )


def cmd_simulate(args) -> list[Path]:
    overrides = {}
    if args.config:
        overrides.update(_load_config_file(args.config))
    file_n = overrides.pop("n", None)
    n = args.n if args.n is not None else (100 if file_n is None else int(file_n))
    preset = args.preset or overrides.pop("preset", None) or "S1-M1"
    overrides.pop("preset", None)
    if args.shift:
        overrides["shift"] = args.shift
        overrides["d"] = args.severity
        overrides["x_star_out"] = args.change_fraction
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = GenConfig.from_preset(preset, **overrides)
    if n == 0:
        print("warning: generating an empty batch", file=sys.stderr)
        curves = []
    elif config.shift is None:
        curves = draw_ic(config, n)
    else:
        curves = draw_oc(config, n)
    tag = "oc" if config.shift else "ic"
    batch = [(f"{tag}-{i:04d}", c) for i, c in enumerate(curves)]
    out = Path(args.out)
    save_curves_json(out, batch)
    print(f"wrote {len(batch)} curves to {out}")
    return [out]


def _pipeline_config(args) -> PipelineConfig:
    fields = {}
    if args.config:
        fields.update(_load_config_file(args.config))
    if args.seed is not None:
        fields["seed"] = args.seed
    return PipelineConfig.from_dict(fields)


def cmd_phase1(args) -> list[Path]:
    config = _pipeline_config(args)
    train = [c for _, c in load_curves_json(args.train)]
    tune = [c for _, c in load_curves_json(args.tune)]
    artifacts = phase1(train, tune, config)
    out = Path(args.out)
    save_artifacts(out, artifacts)
    print(f"wrote artifacts to {out} "
          f"(lambda={artifacts.lam:g}, grid={artifacts.scheme.monitoring_grid.size} points, "
          f"{len(artifacts.scheme.model_family)} models)")
    return [out]


def _monitor_one(payload):
    artifact_dict, cid, abscissae, values, pointwise = payload
    artifacts = Phase1Artifacts.from_dict(artifact_dict)
    results, _ = phase2(artifacts, [SampledCurve(np.asarray(abscissae),
                                                 np.asarray(values))],
                        pointwise=pointwise, curve_ids=[cid])
    return _result_to_dict(results[0])


def _load_batch(path) -> list[tuple[str, SampledCurve]]:
    if str(path).endswith((".ndjson", ".jsonl")):
        from .realtime import read_stream

        with open(path) as fh:
            return sorted(read_stream(fh).items())
    return load_curves_json(path)


def cmd_phase2(args) -> list[Path]:
    artifacts = load_artifacts(args.artifacts)
    batch = _load_batch(args.data)
    ids = [cid for cid, _ in batch]
    curves = [c for _, c in batch]
    if args.jobs > 1 and len(curves) > 1:
        from concurrent.futures import ProcessPoolExecutor

        art_dict = artifacts.to_dict()
        payloads = [(art_dict, cid, c.abscissae.tolist(), c.values.tolist(),
                     args.pointwise) for cid, c in batch]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            dicts = list(pool.map(_monitor_one, payloads))
        results = [_result_from_dict(d) for d in dicts]
    else:
        results, _ = phase2(artifacts, curves, pointwise=args.pointwise,
                            curve_ids=ids)
    far, tdr = (far_tdr(results, args.change_point) if results
                else (None, None))
    summary = {"far": far, "tdr": tdr, "n_curves": len(results),
               "change_point_x": args.change_point}

    out_json = Path(args.out).with_suffix(".json")
    out_csv = Path(args.out).with_suffix(".csv")
    out_json.write_text(json.dumps(
        {"summary": summary, "results": [_result_to_dict(r) for r in results]},
        sort_keys=True, separators=(",", ":")))
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["curve_id", "x", "t2", "t2_limit", "spe", "spe_limit",
                         "alarm"])
        for res in results:
            alarm = res.alarm
            for j in range(res.x.size):
                writer.writerow([
                    res.curve_id, repr(float(res.x[j])),
                    repr(float(res.t2[j])), repr(float(res.t2_limit[j])),
                    repr(float(res.spe[j])), repr(float(res.spe_limit[j])),
                    int(alarm[j]),
                ])
    far_text = "n/a" if far is None else f"{far:.4f}"
    tdr_text = "n/a" if tdr is None else f"{tdr:.4f}"
    print(f"monitored {len(results)} curves: FAR={far_text} TDR={tdr_text}")
    return [out_json, out_csv]


def cmd_evaluate(args) -> list[Path]:
    data = json.loads(Path(args.results).read_text())
    results = [_result_from_dict(d) for d in data["results"]]
    if not results:
        raise InvalidInput("results file contains no curves")
    far, tdr = far_tdr(results, args.change_point)
    table = {"far": far, "tdr": tdr, "n_curves": len(results),
             "change_point_x": args.change_point}
    print(f"{'metric':<8}{'value':>10}")
    for key in ("far", "tdr"):
        value = table[key]
        print(f"{key.upper():<8}{'n/a' if value is None else f'{value:>10.4f}'}")
    out = Path(args.out)
    out.write_text(json.dumps(table, sort_keys=True, indent=1))
    return [out]


def cmd_plotdata(args) -> list[Path]:
    data = json.loads(Path(args.results).read_text())
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["curve_id", "x", "t2", "t2_limit", "spe", "spe_limit"])
        for rec in data["results"]:
            for j, x in enumerate(rec["x"]):
                writer.writerow([
                    rec["curve_id"], x,
                    rec["t2"][j], rec["t2_limit"][j],
                    rec["spe"][j], rec["spe_limit"][j],
                ])
    print(f"wrote chart series to {out}")
    return [out]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvemon",
        description="Real-time monitoring of functional quality characteristics")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML or JSON configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out", required=True, help="output path")

    p_sim = sub.add_parser("simulate", help="generate synthetic curves")
    common(p_sim)
    p_sim.add_argument("--preset", default=None,
                       help="scenario-misalignment name, e.g. S1-M1")
    p_sim.add_argument("--n", type=int, default=None)
    p_sim.add_argument("--shift", choices=["A", "B", "C"], default=None)
    p_sim.add_argument("--severity", type=float, default=0.0)
    p_sim.add_argument("--change-fraction", type=float, default=0.3)
    p_sim.set_defaults(func=cmd_simulate)

    p_p1 = sub.add_parser("phase1", help="fit monitoring artifacts")
    common(p_p1)
    p_p1.add_argument("--train", required=True)
    p_p1.add_argument("--tune", required=True)
    p_p1.set_defaults(func=cmd_phase1)

    p_p2 = sub.add_parser("phase2", help="monitor new curves")
    common(p_p2)
    p_p2.add_argument("--artifacts", required=True)
    p_p2.add_argument("--data", required=True)
    p_p2.add_argument("--change-point", type=float, default=None)
    p_p2.add_argument("--pointwise", action="store_true",
                      help="use the trivial pointwise baseline")
    p_p2.set_defaults(func=cmd_phase2)

    p_ev = sub.add_parser("evaluate", help="FAR/TDR table from results")
    common(p_ev)
    p_ev.add_argument("--results", required=True)
    p_ev.add_argument("--change-point", type=float, default=None)
    p_ev.set_defaults(func=cmd_evaluate)

    p_pd = sub.add_parser("plotdata", help="per-curve chart series as CSV")
    common(p_pd)
    p_pd.add_argument("--results", required=True)
    p_pd.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.time()
    try:
        outputs = args.func(args)
    except (InvalidInput, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CurvemonError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    inputs = [getattr(args, name) for name in ("train", "tune", "artifacts",
                                               "data", "results")
              if getattr(args, name, None)]
    _write_manifest(args.out, args.command, args, inputs, outputs, started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
