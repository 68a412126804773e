"""Command-line pipeline: georef, estimate, compare, simulate.

Exit codes: 0 success, 1 internal error, 2 user/input error. Every
command writes a ``manifest.json`` next to its outputs with the inputs,
parameters, and seed needed to reproduce the run; apart from the
wall-clock field, reruns with identical inputs are byte-identical.
All files are written atomically (temp + rename).
"""

from __future__ import annotations

import argparse
import io
import json
import sys
import traceback
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .counting import CountingParams, count_session, estimate_tmc, events_to_csv
from .errors import UserInputError
from .geo import (
    FrameRegistry,
    GeodeticPoint,
    atomic_write_text,
    estimate_transform_from_gcps,
    load_gcp_csv,
    load_registry,
    save_registry,
)
from .ingest import (
    frames_to_ned,
    merge_streams,
    open_detection_log,
    parse_detection_log,
    write_detection_log,
)
from .intersection import load_intersection_config
from .reference import reference_config_path
from .report import compare, load_tmc_csv, render_report, save_tmc_csv
from .simgen import SimConfig, load_script, scenario_by_name, script_to_obj, simulate


def _write_manifest(out_dir: Path, command: str, payload: dict) -> None:
    doc = {
        "tool": "lidartmc",
        "version": __version__,
        "command": command,
        **payload,
        "wall_clock_utc": datetime.now(timezone.utc).isoformat(),
    }
    atomic_write_text(out_dir / "manifest.json", json.dumps(doc, indent=2) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _counting_params(args, base: CountingParams | None) -> CountingParams | None:
    """Flag overrides applied on top of the config file's params."""
    overrides = {
        k: getattr(args, k)
        for k in ("min_headway_right", "min_headway_other", "cluster_gap", "dedup_window")
        if getattr(args, k) is not None
    }
    if not overrides:
        return base
    return replace(base or CountingParams(), **overrides)


def cmd_georef(args) -> int:
    groups = load_gcp_csv(args.gcp_file)
    if args.frame_id is not None:
        if args.frame_id not in groups:
            raise UserInputError(
                f"no GCP rows for frame {args.frame_id!r} in {args.gcp_file}"
            )
        groups = {args.frame_id: groups[args.frame_id]}
    registry_path = Path(args.registry) if args.registry else _out_dir(args) / "registry.json"
    if registry_path.exists():
        registry = load_registry(registry_path)
    else:
        if args.ned_origin is not None:
            lat, lon, alt = (float(v) for v in args.ned_origin.split(","))
            origin = GeodeticPoint(lat, lon, alt)
        elif args.config is not None:
            origin = load_intersection_config(args.config).ned_origin
        else:
            raise UserInputError(
                "creating a new registry needs --ned-origin lat,lon,alt or --config"
            )
        registry = FrameRegistry(origin)
    rmses = {}
    for frame_id in sorted(groups):
        transform, rmse = estimate_transform_from_gcps(groups[frame_id])
        registry.register(frame_id, transform)
        rmses[frame_id] = rmse
        print(f"{frame_id}: {len(groups[frame_id])} GCPs, rmse {rmse:.6g} m")
    save_registry(registry, registry_path)
    _write_manifest(
        registry_path.parent,
        "georef",
        {
            "inputs": {"gcp_file": str(args.gcp_file)},
            "arguments": {"frame_id": args.frame_id},
            "outputs": [registry_path.name],
            "rmse_m": rmses,
        },
    )
    return 0


def cmd_estimate(args) -> int:
    cfg = load_intersection_config(args.config)
    if args.registry is None:
        raise UserInputError("estimate requires --registry (sensor poses)")
    registry = load_registry(args.registry)
    params = _counting_params(args, cfg.params)
    errors: list = []
    streams = []
    for path in args.logs:
        with open_detection_log(path) as fh:
            streams.append(
                list(
                    parse_detection_log(
                        fh, strict=args.strict, error_sink=errors
                    )
                )
            )
    merged = merge_streams(streams, reorder_window=args.reorder_window)
    ned = frames_to_ned(merged, registry)
    events, meta = count_session(ned, cfg, params)
    session = (
        args.session_start if args.session_start is not None else cfg.schedule.session[0],
        args.session_end if args.session_end is not None else cfg.schedule.session[1],
    )
    table = estimate_tmc(events, args.bin_seconds, session, cfg.class_table.n_classes)
    out = _out_dir(args)
    save_tmc_csv(table, out / "tmc.csv")
    atomic_write_text(out / "events.csv", events_to_csv(events))
    _write_manifest(
        out,
        "estimate",
        {
            "inputs": {"logs": [str(p) for p in args.logs], "config": str(args.config),
                       "registry": str(args.registry)},
            "arguments": {
                "bin_seconds": args.bin_seconds,
                "session": list(session),
                "reorder_window": args.reorder_window,
                "strict": args.strict,
                "params": (params or CountingParams()).to_obj(),
            },
            "outputs": ["tmc.csv", "events.csv"],
            "warnings": {"skipped_lines": len(errors)},
            "counting": meta,
        },
    )
    if errors:
        print(f"warning: skipped {len(errors)} malformed line(s)", file=sys.stderr)
    print(f"estimated {len(events)} movement events -> {out / 'tmc.csv'}")
    return 0


def cmd_compare(args) -> int:
    est = load_tmc_csv(args.estimated, args.bin_seconds)
    gt = load_tmc_csv(args.ground_truth, args.bin_seconds)
    group_by = tuple(s.strip() for s in args.group_by.split(",") if s.strip())
    report = compare(est, gt, group_by)
    print(render_report(report, "text"), end="")
    out = _out_dir(args)
    atomic_write_text(out / "report.csv", render_report(report, "csv"))
    _write_manifest(
        out,
        "compare",
        {
            "inputs": {
                "estimated": str(args.estimated),
                "ground_truth": str(args.ground_truth),
            },
            "arguments": {"group_by": list(group_by), "bin_seconds": args.bin_seconds},
            "outputs": ["report.csv"],
        },
    )
    return 0


def cmd_simulate(args) -> int:
    if (args.script is None) == (args.scenario is None):
        raise UserInputError("simulate needs exactly one of --script or --scenario")
    if args.scenario is not None:
        sc = scenario_by_name(args.scenario)
        script, cfg, sim = sc.script, sc.cfg, sc.sim
    else:
        script = load_script(args.script)
        cfg = load_intersection_config(args.config)
        sim = SimConfig(seed=args.seed)
    overrides = {"seed": args.seed}
    if args.frame_rate is not None:
        overrides["frame_rate_hz"] = args.frame_rate
    if args.dropout is not None:
        overrides["dropout"] = args.dropout
    if args.noise_sigma is not None:
        overrides["noise_sigma"] = args.noise_sigma
    sim = SimConfig(**{**sim.__dict__, **overrides})
    session = simulate(script, cfg, sim)
    out = _out_dir(args)
    log_names = []
    for frame_id, frames in session.frames_by_sensor.items():
        name = f"log_{frame_id}.jsonl"
        buf = io.StringIO()
        write_detection_log(frames, buf)
        atomic_write_text(out / name, buf.getvalue())
        log_names.append(name)
    save_tmc_csv(session.ground_truth, out / "gt.csv")
    save_registry(session.registry, out / "registry.json")
    atomic_write_text(
        out / "script.json", json.dumps(script_to_obj(session.script), indent=2) + "\n"
    )
    _write_manifest(
        out,
        "simulate",
        {
            "inputs": {
                "script": str(args.script) if args.script else None,
                "scenario": args.scenario,
                "config": str(args.config) if args.scenario is None else None,
            },
            "arguments": {
                "frame_rate_hz": sim.frame_rate_hz,
                "dropout": sim.dropout,
                "noise_sigma": sim.noise_sigma,
                "session": list(sim.session),
                "bin_seconds": sim.bin_seconds,
            },
            "seed": sim.seed,
            "outputs": sorted(log_names) + ["gt.csv", "registry.json", "script.json"],
        },
    )
    n_frames = sum(len(f) for f in session.frames_by_sensor.values())
    print(f"simulated {len(script)} vehicles, {n_frames} frames -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidartmc",
        description="Turning movement counts from roadside LiDAR detection logs",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("georef", help="estimate a sensor pose from GCP pairs")
    p.add_argument("gcp_file", help="CSV: frame_id,sx,sy,sz,lat,lon,alt")
    p.add_argument("--frame-id", help="only solve this sensor (default: all in file)")
    p.add_argument("--registry", help="registry JSON to create or update")
    p.add_argument("--ned-origin", help="lat,lon,alt for a new registry")
    p.add_argument("--config", help="intersection config supplying the NED origin")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_georef)

    p = sub.add_parser("estimate", help="estimate counts from detection logs")
    p.add_argument("logs", nargs="+", help="JSON-lines detection logs (.jsonl or .gz)")
    p.add_argument("--config", default=reference_config_path())
    p.add_argument("--registry", required=True, help="sensor pose registry JSON")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--strict", action="store_true", help="abort on malformed lines")
    p.add_argument("--bin-seconds", type=float, default=300.0)
    p.add_argument("--session-start", type=float)
    p.add_argument("--session-end", type=float)
    p.add_argument("--reorder-window", type=float, default=1.0)
    p.add_argument("--min-headway-right", type=float)
    p.add_argument("--min-headway-other", type=float)
    p.add_argument("--cluster-gap", type=float)
    p.add_argument("--dedup-window", type=float)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("compare", help="compare an estimate against ground truth")
    p.add_argument("estimated")
    p.add_argument("ground_truth")
    p.add_argument("--group-by", default="approach,movement",
                   help="comma list from: time,approach,movement,class")
    p.add_argument("--bin-seconds", type=float, default=300.0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="generate synthetic logs + ground truth")
    p.add_argument("--script", help="script JSON")
    p.add_argument("--scenario", help="bundled scenario name")
    p.add_argument("--config", default=reference_config_path())
    p.add_argument("--seed", type=int, required=True,
                   help="explicit RNG seed (required for reproducibility)")
    p.add_argument("--frame-rate", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except UserInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # internal error contract
        traceback.print_exc()
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
