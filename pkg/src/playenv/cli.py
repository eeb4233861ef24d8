"""Command-line entry points.

    playenv render   --scene S.json --script A.json --out DIR
    playenv metrics  --log L.jsonl [--ref R.jsonl] --out report.json
    playenv calibrate --landmarks L.json --field F.json --intrinsics I.json
    playenv serve    --port N --scene-dir D

Set PLAYENV_LOG=DEBUG|INFO|WARNING|ERROR to control log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import metrics as metrics_mod
from .calibration import (
    calibrate_from_field,
    interpolate_cameras,
    load_field_model,
    load_intrinsics,
    load_landmark_frames,
    sequence_quality_filter,
)
from .errors import EngineError
from .scene import load_scene
from .session import load_script, run_script
from .trajectory import action_deltas, camera_to_json, detections_per_frame, read_log

logger = logging.getLogger("playenv")


def _setup_logging() -> None:
    level = os.environ.get("PLAYENV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def cmd_render(args) -> int:
    scene = load_scene(args.scene)
    _, camera_json, _ = load_script(args.script)  # validate early for line-numbered errors
    with open(args.script, "r", encoding="utf-8") as fh:
        script = json.load(fh)
    hashes, records = run_script(scene, script, args.out)
    logger.info("rendered %d frames to %s", len(hashes), args.out)
    print(json.dumps({
        "frames": len(hashes),
        "out": args.out,
        "log": os.path.join(args.out, "trajectory.jsonl"),
        "frame_hashes": [f"{h:016x}" for h in hashes],
    }, indent=2))
    return 0


def cmd_metrics(args) -> int:
    records = read_log(args.log)
    all_deltas, all_actions = [], []
    playable = sorted({oid for rec in records for oid in rec.actions})
    for oid in playable:
        d, a = action_deltas(records, oid)
        if len(d):
            all_deltas.append(d)
            all_actions.append(a)
    dm = da = None
    if all_deltas:
        deltas = np.concatenate(all_deltas)
        actions = np.concatenate(all_actions)
        try:
            dm = metrics_mod.delta_mse(deltas, actions)
        except EngineError as exc:
            logger.warning("delta_mse unavailable: %s", exc)
        da = metrics_mod.delta_acc(deltas, actions)

    add_value = mdr_value = None
    if args.ref:
        ref = read_log(args.ref)
        gt = detections_per_frame(ref)
        rec = detections_per_frame(records)
        add_value = metrics_mod.add_metric(gt, rec)
        mdr_value = metrics_mod.mdr(gt, rec)

    report = metrics_mod.metrics_report(dm, da, add_value, mdr_value)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    print(json.dumps(report, indent=2))
    return 0


def cmd_calibrate(args) -> int:
    field = load_field_model(args.field)
    intrinsics = load_intrinsics(args.intrinsics)
    frames = load_landmark_frames(args.landmarks)
    cameras, results = [], []
    for i, landmarks in enumerate(frames):
        try:
            result = calibrate_from_field(landmarks, field, intrinsics)
            cameras.append(result.camera)
            results.append({"frame": i, "rms": result.rms_error, "camera": camera_to_json(result.camera)})
        except EngineError as exc:
            logger.info("frame %d not calibrated: %s", i, exc)
            cameras.append(None)
            results.append({"frame": i, "rms": None, "camera": None})

    if args.interpolate and any(c is not None for c in cameras):
        cameras = interpolate_cameras(cameras)
        for i, cam in enumerate(cameras):
            if results[i]["camera"] is None:
                results[i]["camera"] = camera_to_json(cam)
                results[i]["interpolated"] = True

    accepted = None
    solved = [c for c in cameras if c is not None]
    if args.filter_threshold is not None and len(solved) >= 2:
        accepted = sequence_quality_filter(solved, args.filter_threshold)

    report = {"version": 1, "frames": results, "accepted": accepted}
    out = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out)
    print(out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(scene_dir=args.scene_dir, max_sessions=args.max_sessions,
                     idle_seconds=args.idle_seconds, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="playenv", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="run a scripted session to PNG frames + trajectory log")
    p.add_argument("--scene", required=True)
    p.add_argument("--script", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("metrics", help="compute action-space and detection metrics from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--ref", help="ground-truth log for ADD/MDR")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("calibrate", help="estimate cameras from field landmarks")
    p.add_argument("--landmarks", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out")
    p.add_argument("--interpolate", action="store_true", help="fill frames without landmarks")
    p.add_argument("--filter-threshold", type=float, help="reject if camera-center variance exceeds this")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("serve", help="run the interactive session service")
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--scene-dir", default="scenes")
    p.add_argument("--frontend", default=None, help="directory of static UI files to serve at /")
    p.add_argument("--max-sessions", type=int, default=16)
    p.add_argument("--idle-seconds", type=float, default=600.0)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
