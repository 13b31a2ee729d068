"""Tactile frame extraction, serialization, and batch dataset generation.

Frame files are raw little-endian float32, row-major H x W x 3, behind a
16-byte header: magic "EIPF", u32 H, u32 W, u32 step.  PNG previews are
16-bit grayscale displacement magnitude, normalized by a constant stored in
the sidecar JSON; the binary file is the ground truth.
"""

from __future__ import annotations

import json
import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FrameFormatError
from .geometry import ParticleCloud, SensorLayout, load_mesh, voxelize
from .scene import PressScenario, chamfer_translation_free, run_press

log = logging.getLogger(__name__)

MAGIC = b"EIPF"
_HEADER = struct.Struct("<4sIII")


@dataclass
class TactileFrame:
    """H x W x 3 displacement field of the sensor contact layer."""

    H: int
    W: int
    displacement: np.ndarray  # (H, W, 3)
    chamfer: float
    step: int
    press_direction: np.ndarray
    press_position: np.ndarray

    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.displacement, axis=2)


def extract_tactile_frame(positions, layout: SensorLayout, rest_positions,
                          step: int, press_direction=(0.0, 0.0, -1.0),
                          chamfer: float | None = None) -> TactileFrame:
    """Contact-layer displacement with the rigid hand translation removed by
    mean-centering both current and rest positions."""
    positions = np.asarray(positions, dtype=np.float64)
    rest_positions = np.asarray(rest_positions, dtype=np.float64)
    if len(positions) != layout.count or len(rest_positions) != layout.count:
        raise ValueError("positions do not match the sensor lattice")
    contact = layout.layer_slice(0)
    cur = positions[contact]
    rest = rest_positions[contact]
    disp = (cur - cur.mean(axis=0)) - (rest - rest.mean(axis=0))
    if chamfer is None:
        chamfer = chamfer_translation_free(cur, rest)
    return TactileFrame(
        H=layout.H, W=layout.W,
        displacement=disp.reshape(layout.H, layout.W, 3),
        chamfer=float(chamfer), step=int(step),
        press_direction=np.asarray(press_direction, dtype=np.float64),
        press_position=cur.mean(axis=0))


def export_frame(frame: TactileFrame, out_dir, formats=("bin",),
                 stem: str | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or f"frame_{frame.step:06d}"
    formats = set(formats)
    written: list[Path] = []

    mag = frame.magnitude()
    norm_max = float(mag.max())

    if "bin" in formats:
        path = out_dir / f"{stem}.eipf"
        payload = frame.displacement.astype("<f4").tobytes()
        path.write_bytes(_HEADER.pack(MAGIC, frame.H, frame.W, frame.step) + payload)
        written.append(path)

    if "png" in formats:
        path = out_dir / f"{stem}.png"
        if norm_max > 0:
            pixels = np.round(mag / norm_max * 65535.0).astype(np.uint16)
        else:
            pixels = np.zeros_like(mag, dtype=np.uint16)
        Image.fromarray(pixels).save(path)
        written.append(path)

    if "csv" in formats:
        path = out_dir / f"{stem}.csv"
        rows = frame.displacement.reshape(-1, 3)
        hh, ww = np.divmod(np.arange(rows.shape[0]), frame.W)
        np.savetxt(path, np.column_stack([hh, ww, rows]),
                   fmt=["%d", "%d", "%.9e", "%.9e", "%.9e"],
                   delimiter=",", header="h,w,dx,dy,dz", comments="")
        written.append(path)

    sidecar = out_dir / f"{stem}.json"
    sidecar.write_text(json.dumps({
        "step": frame.step,
        "chamfer": frame.chamfer,
        "press_direction": frame.press_direction.tolist(),
        "press_position": frame.press_position.tolist(),
        "png_normalization": norm_max,
    }, indent=2))
    written.append(sidecar)
    return written


def read_frame(path) -> TactileFrame:
    """Read an EIPF binary (plus sidecar JSON when present)."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise FrameFormatError(f"{path}: file too short for a frame header")
    magic, H, W, step = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FrameFormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + H * W * 3 * 4
    if len(blob) != expected:
        raise FrameFormatError(
            f"{path}: expected {expected} bytes for a {H}x{W} frame, got {len(blob)}")
    disp = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    disp = disp.reshape(H, W, 3)

    chamfer, direction, position = 0.0, np.zeros(3), np.zeros(3)
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        chamfer = float(meta.get("chamfer", 0.0))
        direction = np.asarray(meta.get("press_direction", direction), dtype=np.float64)
        position = np.asarray(meta.get("press_position", position), dtype=np.float64)
    return TactileFrame(H=int(H), W=int(W), displacement=disp, chamfer=chamfer,
                        step=int(step), press_direction=direction,
                        press_position=position)


@dataclass
class DatasetManifest:
    object_name: str
    entries: list

    def save(self, path):
        Path(path).write_text(json.dumps(
            {"object": self.object_name, "entries": self.entries}, indent=2))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        data = json.loads(Path(path).read_text())
        return cls(data["object"], data["entries"])


def fibonacci_sphere(n: int) -> np.ndarray:
    """n roughly uniform unit directions (golden-angle spiral)."""
    if n < 1:
        raise ValueError("need at least one direction")
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta),
                     np.cos(phi)], axis=1)


def _run_entry(args):
    scenario, object_cloud, out_dir, stem = args
    result = run_press(scenario, object_cloud=object_cloud)
    final = result.frames[-1]
    export_frame(final, out_dir, formats=("bin", "png"), stem=stem)
    return {
        "frame": f"{stem}.eipf",
        "press_direction": final.press_direction.tolist(),
        "press_position": final.press_position.tolist(),
        "final_chamfer": final.chamfer,
        "terminated_by": result.terminated_by,
        "steps": result.steps_run,
        "scenario_hash": scenario.hash(),
    }


def generate_dataset(base: PressScenario, directions, depth_thresholds,
                     out_dir, object_name: str | None = None,
                     workers: int = 1) -> DatasetManifest:
    """One press per (direction, threshold) pair, each auto-placed at standoff
    along its press direction; failed presses are logged and skipped."""
    directions = [np.asarray(d, dtype=np.float64) for d in directions]
    thresholds = list(depth_thresholds)
    if not directions or not thresholds:
        raise ValueError("directions and depth thresholds must be non-empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if object_name is None:
        object_name = Path(base.object_mesh).stem if base.object_mesh else "none"

    object_cloud: ParticleCloud | None = None
    if base.object_mesh is not None:
        object_cloud = voxelize(load_mesh(base.object_mesh), base.object_spacing)

    jobs = []
    for di, d in enumerate(directions):
        d = d / np.linalg.norm(d)
        for ti, thr in enumerate(thresholds):
            scenario = replace(base, press_direction=tuple(d),
                               terminal_threshold=float(thr), sensor_center=None)
            jobs.append((scenario, object_cloud, out_dir, f"press_{di:03d}_{ti:02d}"))

    entries = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_entry, job) for job in jobs]
            for job, fut in zip(jobs, futures):
                try:
                    entries.append(fut.result())
                except Exception:
                    log.exception("press %s failed; skipping", job[3])
    else:
        for job in jobs:
            try:
                entries.append(_run_entry(job))
            except Exception:
                log.exception("press %s failed; skipping", job[3])
    manifest = DatasetManifest(object_name, entries)
    manifest.save(out_dir / "manifest.json")
    return manifest
