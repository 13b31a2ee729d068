"""Command-line entry point: single presses, batch datasets, coefficient
sweeps, and frame inspection.

Config files are YAML trees mapping 1:1 onto the scenario (see
configs/default.yaml); --set overrides use dotted keys, e.g.
``--set material.E=7.5 --set press.speed=0.2``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from .errors import TactSimError
from .scene import PressScenario, run_press
from .tactile_io import (export_frame, fibonacci_sphere, generate_dataset,
                         read_frame)

ERROR_PREFIX = "error:"

# nested config key -> scenario field
_SCHEMA = {
    ("object", "mesh"): "object_mesh",
    ("object", "spacing"): "object_spacing",
    ("sensor", "H"): "sensor_H",
    ("sensor", "W"): "sensor_W",
    ("sensor", "L"): "sensor_L",
    ("sensor", "spacing"): "sensor_spacing",
    ("sensor", "center"): "sensor_center",
    ("material", "E"): "E",
    ("material", "v"): "v",
    ("grid", "resolution"): "grid_resolution",
    ("grid", "domain"): "domain",
    ("press", "direction"): "press_direction",
    ("press", "speed"): "press_speed",
    ("press", "standoff"): "standoff",
    ("press", "terminal_threshold"): "terminal_threshold",
    ("press", "max_steps"): "max_steps",
    ("press", "record_every"): "record_every",
    ("press", "settle_steps"): "settle_steps",
    ("dt",): "dt",
    ("density",): "density",
    ("deterministic",): "deterministic",
    ("literal_affine",): "literal_affine",
}


def scenario_from_config(tree: dict, config_dir: Path | None = None) -> PressScenario:
    data = {}
    flat_tree = dict(tree)
    for keys, field in _SCHEMA.items():
        node = flat_tree
        ok = True
        for k in keys:
            if not isinstance(node, dict) or k not in node:
                ok = False
                break
            node = node[k]
        if ok and node is not None:
            data[field] = tuple(node) if isinstance(node, list) else node
    sc = PressScenario.from_dict(data)
    if sc.object_mesh is not None and config_dir is not None:
        p = Path(sc.object_mesh)
        if not p.is_absolute() and not p.exists():
            for base in (config_dir, config_dir.parent):
                if (base / p).exists():
                    sc.object_mesh = str(base / p)
                    break
    return sc


def scenario_to_config(sc: PressScenario) -> dict:
    tree: dict = {}
    flat = sc.to_dict()
    for keys, field in _SCHEMA.items():
        node = tree
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = flat[field]
    return tree


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise TactSimError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        value = yaml.safe_load(raw)
        node = tree
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return tree


def _load_scenario(config_path: str, overrides: list[str]) -> tuple[PressScenario, dict]:
    path = Path(config_path)
    try:
        tree = yaml.safe_load(path.read_text()) or {}
    except OSError as exc:
        raise TactSimError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise TactSimError(f"cannot parse config {path}: {exc}") from exc
    apply_overrides(tree, overrides)
    scenario = scenario_from_config(tree, config_dir=path.parent)
    scenario.validate()
    return scenario, scenario_to_config(scenario)


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("EIP_THREADS", "1")))
    except ValueError:
        return 1


def cmd_run(args) -> int:
    scenario, effective = _load_scenario(args.config, args.set or [])
    if args.deterministic:
        scenario.deterministic = True
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    result = run_press(scenario)
    wall = time.perf_counter() - t0

    for frame in result.frames:
        export_frame(frame, out / "frames", formats=("bin", "png"))
    with open(out / "chamfer.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "chamfer"])
        for frame, l in zip(result.frames, result.chamfer_series):
            w.writerow([frame.step, f"{l:.9e}"])
    summary = {
        "steps": result.steps_run,
        "terminated_by": result.terminated_by,
        "wall_time_s": wall,
        "frames": len(result.frames),
        "final_chamfer": result.chamfer_series[-1],
        "scenario_hash": scenario.hash(),
        "config": effective,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"run: {result.steps_run} steps, terminated by {result.terminated_by}, "
          f"final chamfer {result.chamfer_series[-1]:.3e}, wrote {out}")
    return 0


def cmd_batch(args) -> int:
    if args.directions < 1:
        raise TactSimError("--directions must be at least 1")
    scenario, _ = _load_scenario(args.config, args.set or [])
    directions = fibonacci_sphere(args.directions)
    manifest = generate_dataset(scenario, list(-directions),
                                [scenario.terminal_threshold],
                                args.out, workers=args.workers)
    print(f"batch: {len(manifest.entries)}/{args.directions} presses succeeded, "
          f"manifest in {args.out}")
    return 0 if len(manifest.entries) == args.directions else 1


_SWEEP_PARAMS = ("grid", "young", "depth")


def cmd_sweep(args) -> int:
    if args.parameter not in _SWEEP_PARAMS:
        raise TactSimError(
            f"unknown sweep parameter {args.parameter!r}; choose from {_SWEEP_PARAMS}")
    scenario, _ = _load_scenario(args.config, args.set or [])
    values = [float(v) for v in args.values]
    if not values:
        raise TactSimError("sweep needs at least one value")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    runs = []
    for value in values:
        sc = PressScenario.from_dict(scenario.to_dict())
        if args.parameter == "grid":
            sc.grid_resolution = int(value)
        elif args.parameter == "young":
            sc.E = value
        else:
            sc.terminal_threshold = value
        if args.parameter in ("grid", "young"):
            # fixed press displacement: disable the chamfer stop
            sc.terminal_threshold = math.inf
            sc.max_steps = args.steps
        sc.validate()
        result = run_press(sc)
        frame = result.frames[-1]
        stem = f"{args.parameter}_{value:g}"
        export_frame(frame, out / "frames", formats=("bin", "png"), stem=stem)
        runs.append((value, result, frame))

    # deformed area against one normalization shared by the whole sweep,
    # mirroring a fixed color scale across the compared tactile patterns
    shared_max = max(r[2].magnitude().max() for r in runs)
    rows = []
    for value, result, frame in runs:
        mag = frame.magnitude()
        deformed_area = int(np.count_nonzero(mag > 0.1 * shared_max)) if shared_max > 0 else 0
        rows.append([value, result.chamfer_series[-1], deformed_area, result.steps_run])
        print(f"sweep {args.parameter}={value:g}: final chamfer "
              f"{rows[-1][1]:.3e}, deformed area {deformed_area} px")

    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "final_chamfer", "deformed_area_px", "steps"])
        w.writerows(rows)
    return 0


def cmd_inspect(args) -> int:
    frame = read_frame(args.frame)
    mag = frame.magnitude()
    print(f"H={frame.H} W={frame.W} step={frame.step}")
    print(f"chamfer={frame.chamfer:.6e}")
    print(f"displacement magnitude: min={mag.min():.6e} max={mag.max():.6e} "
          f"mean={mag.mean():.6e}")
    if args.png:
        paths = export_frame(frame, Path(args.png).parent, formats=("png",),
                             stem=Path(args.png).stem)
        print(f"wrote {paths[0]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tactsim",
        description="Elastic tactile press simulator and dataset generator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario YAML file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (dotted path)")
        p.add_argument("--workers", type=int, default=_default_workers(),
                       help="worker pool size (default: EIP_THREADS or 1)")
        p.add_argument("--deterministic", action="store_true",
                       help="force the deterministic reduction mode")

    p_run = sub.add_parser("run", help="run a single press")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_batch = sub.add_parser("batch", help="generate a multi-direction dataset")
    common(p_batch)
    p_batch.add_argument("--directions", type=int, required=True,
                         help="number of press directions (Fibonacci sphere)")
    p_batch.set_defaults(func=cmd_batch)

    p_sweep = sub.add_parser("sweep", help="coefficient study over one parameter")
    common(p_sweep)
    p_sweep.add_argument("--parameter", required=True,
                         help="one of: grid, young, depth")
    p_sweep.add_argument("--values", nargs="+", required=True)
    p_sweep.add_argument("--steps", type=int, default=600,
                         help="press steps for fixed-displacement sweeps")
    p_sweep.set_defaults(func=cmd_sweep)

    p_inspect = sub.add_parser("inspect", help="print stats of a frame file")
    p_inspect.add_argument("frame", help="EIPF binary frame file")
    p_inspect.add_argument("--png", help="re-export a PNG preview to this path")
    p_inspect.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TactSimError as exc:
        print(f"{ERROR_PREFIX} {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"{ERROR_PREFIX} {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
