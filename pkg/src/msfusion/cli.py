"""Command line pipeline over documented file formats.

Five subcommands compose through files in one output directory, so every
stage can be rerun or inspected on its own:

    render     synthetic calibration views and scene frames + ground truth
    calibrate  detect the target in the views, write calibration.json
    register   align scene frames to the rgb grid using the calibration
    fuse       threshold-recolor aligned frames, write fused PNG + PLY
    pipeline   all four in order

Exit codes: 0 success, 2 configuration problems (missing or unreadable
files, bad config values), 3 data problems (too few usable views, frames
that do not match the calibration).
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .calibrate import calibrate_rig
from .detect import detect_grid
from .errors import AmbiguousGrid, DimensionMismatch, InsufficientViews, \
    WrongBlobCount
from .fuse import FusionConfig, fuse_frame
from .register import AlignedFrame, align_frame, alignment_inputs
from .render import patch_footprint, render_scene, render_target_frame
from .rig import (
    MultispectralFrame,
    RigConfig,
    SceneSpec,
    TargetSpec,
    default_rig,
    default_scene,
    default_target_views,
    target_view_pose,
    wide_field_views,
)

CAMERAS = ("rgb", "thermal", "uv")


class _ConfigProblem(Exception):
    """Anything wrong with configuration or input files (exit 2)."""


class _DataProblem(Exception):
    """Inputs readable but unusable: mismatched ids, bad geometry (exit 3)."""


# ---------------------------------------------------------------------------
# configuration


def _load_json(path: Path) -> dict:
    if not path.exists():
        raise _ConfigProblem(f"{path}: no such file")
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise _ConfigProblem(f"{path}: {err}") from None


class Setup:
    """Everything a stage needs, resolved from the config file + flags."""

    def __init__(self, args):
        cfg = {}
        base = Path(".")
        if getattr(args, "config", None):
            cfg_path = Path(args.config)
            cfg = _load_json(cfg_path)
            base = cfg_path.parent

        def spec(key, cls, fallback):
            ref = cfg.get(key)
            if ref is None:
                return fallback()
            try:
                return cls.from_dict(_load_json(base / ref))
            except (KeyError, TypeError, ValueError) as err:
                raise _ConfigProblem(f"{base / ref}: {err}") from None

        self.rig = spec("rig", RigConfig, default_rig)
        self.target = spec("target", TargetSpec, TargetSpec)
        self.scene = spec("scene", SceneSpec, default_scene)
        # Views are (pose, cameras) pairs: a view dict may name the subset
        # of cameras that record it (default all three). The built-in set
        # is the shared ladder plus rgb-only wide-field sweeps.
        if "views" in cfg:
            views = []
            try:
                for params in cfg["views"]:
                    params = dict(params)
                    cams = tuple(params.pop("cameras", CAMERAS))
                    if not cams or any(c not in CAMERAS for c in cams):
                        raise ValueError(
                            f"cameras must be a non-empty subset of "
                            f"{list(CAMERAS)}, got {list(cams)}")
                    views.append((target_view_pose(self.target, **params),
                                  cams))
            except (TypeError, ValueError) as err:
                raise _ConfigProblem(f"views: {err}") from None
            self.views = tuple(views)
        else:
            self.views = tuple(
                [(p, CAMERAS) for p in default_target_views(self.target)]
                + [(p, ("rgb",)) for p in wide_field_views(self.target)])
        self.view_noise = cfg.get("view_noise", {})

        fusion = dict(cfg.get("fusion", {}))
        for key, flag in (("v_thres_uv", "threshold_uv"),
                          ("v_thres_thermal", "threshold_thermal"),
                          ("precedence", "precedence")):
            value = getattr(args, flag, None)
            if value is not None:
                fusion[key] = value
        try:
            self.fusion = FusionConfig.from_dict(fusion)
        except (TypeError, ValueError) as err:
            raise _ConfigProblem(f"fusion config: {err}") from None

        self.seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        out = args.out or cfg.get("out") or "msfusion_out"
        self.out = Path(out)


def _threshold_flag(text):
    try:
        return float(text)
    except ValueError:
        return text


# ---------------------------------------------------------------------------
# raster helpers


def _read_raster(path: Path) -> np.ndarray:
    if not path.exists():
        raise _ConfigProblem(f"{path}: no such file")
    try:
        if path.suffix == ".png":
            return io.read_png(path)
        return io.read_pgm(path)
    except (OSError, ValueError) as err:
        raise _ConfigProblem(f"{path}: unreadable image ({err})") from None


def _write_frame(directory: Path, frame: MultispectralFrame,
                 cameras=CAMERAS) -> None:
    """Write the rasters recorded by ``cameras``; depth rides with rgb."""
    directory.mkdir(parents=True, exist_ok=True)
    if "rgb" in cameras:
        io.write_png(directory / "rgb.png", frame.rgb)
        io.write_pgm(directory / "depth.pgm", frame.depth)
    if "thermal" in cameras:
        io.write_pgm(directory / "thermal.pgm", frame.thermal)
    if "uv" in cameras:
        io.write_pgm(directory / "uv.pgm", frame.uv)


def _read_frame(directory: Path) -> MultispectralFrame:
    return MultispectralFrame(
        rgb=_read_raster(directory / "rgb.png"),
        thermal=_read_raster(directory / "thermal.pgm"),
        uv=_read_raster(directory / "uv.pgm"),
        depth=_read_raster(directory / "depth.pgm"))


def _pose_dict(pose) -> dict:
    return {"rotation": pose.rotation.tolist(),
            "translation_m": pose.translation.tolist()}


# ---------------------------------------------------------------------------
# subcommands


def cmd_render(args) -> int:
    setup = Setup(args)
    rng = np.random.default_rng(setup.seed)
    views_dir = setup.out / "views"
    for i, (board_to_rig, cams) in enumerate(setup.views):
        frame = render_target_frame(setup.rig, setup.target, board_to_rig,
                                    noise_sigma=setup.view_noise, rng=rng,
                                    timestamp=i)
        _write_frame(views_dir / f"v{i:02d}", frame, cams)

    scene_frame = render_scene(setup.rig, setup.scene, rng=rng)
    _write_frame(setup.out / "frames" / "f00", scene_frame)

    truth = {
        "rig": setup.rig.to_dict(),
        "target": setup.target.to_dict(),
        "scene": setup.scene.to_dict(),
        "board_poses": {f"v{i:02d}": _pose_dict(p)
                        for i, (p, _) in enumerate(setup.views)},
        "footprints": {
            spectrum: np.flatnonzero(
                patch_footprint(setup.rig, setup.scene, spectrum)).tolist()
            for spectrum in ("thermal", "uv")},
    }
    io.write_json(setup.out / "ground_truth.json", truth)
    print(f"rendered {len(setup.views)} views and 1 scene frame "
          f"to {setup.out}")
    return 0


def cmd_calibrate(args) -> int:
    setup = Setup(args)
    views_dir = setup.out / "views"
    if not views_dir.is_dir():
        raise _ConfigProblem(f"{views_dir}: no rendered views (run render "
                             f"first)")

    observations = []
    sizes = {}
    files = {"rgb": "rgb.png", "thermal": "thermal.pgm", "uv": "uv.pgm"}
    for view_dir in sorted(p for p in views_dir.iterdir() if p.is_dir()):
        for cam in CAMERAS:
            path = view_dir / files[cam]
            if not path.exists():
                continue  # this camera sat the view out
            raster = _read_raster(path)
            if raster.ndim == 3:
                raster = raster[..., 0]
            sizes[cam] = (raster.shape[1], raster.shape[0])
            try:
                observations.append(
                    detect_grid(raster, setup.target.rows, setup.target.cols,
                                setup.target.pitch_m, camera_id=cam,
                                view_id=view_dir.name))
            except (WrongBlobCount, AmbiguousGrid) as err:
                print(f"rejected {view_dir.name}/{cam}: {err}",
                      file=sys.stderr)

    result = calibrate_rig(observations, sizes)
    io.write_calibration(setup.out / "calibration.json", result)
    for cam in sorted(result.cameras):
        calib = result.cameras[cam]
        print(f"{cam}: rms {calib.rms_px:.6f} px "
              f"({len(calib.view_poses)} views)")
    return 0


def _load_calibration(setup):
    path = setup.out / "calibration.json"
    if not path.exists():
        raise _ConfigProblem(f"{path}: no calibration (run calibrate first)")
    try:
        calib = io.read_calibration(path)
    except (KeyError, TypeError, ValueError) as err:
        raise _ConfigProblem(f"{path}: {err}") from None
    missing = [cam for cam in CAMERAS if cam not in calib.cameras]
    if missing:
        raise _DataProblem(f"calibration lacks camera(s) {missing}; frames "
                           f"need {list(CAMERAS)}")
    return calib


def cmd_register(args) -> int:
    setup = Setup(args)
    calib = _load_calibration(setup)
    frames_dir = setup.out / "frames"
    if not frames_dir.is_dir():
        raise _ConfigProblem(f"{frames_dir}: no frames (run render first)")

    intrinsics, relative = alignment_inputs(calib)
    for frame_dir in sorted(p for p in frames_dir.iterdir() if p.is_dir()):
        frame = _read_frame(frame_dir)
        rasters = {"rgb": frame.rgb, "thermal": frame.thermal,
                   "uv": frame.uv}
        for cam in CAMERAS:
            intr = intrinsics[cam]
            got = rasters[cam].shape[:2]
            if got != (intr.height, intr.width):
                raise _DataProblem(
                    f"{frame_dir.name}/{cam}: raster is {got[1]}x{got[0]} "
                    f"but the calibration says {intr.width}x{intr.height}")
        try:
            aligned = align_frame(frame, intrinsics, relative)
        except DimensionMismatch as err:
            raise _DataProblem(f"{frame_dir.name}: {err}") from None

        out_dir = setup.out / "aligned" / frame_dir.name
        out_dir.mkdir(parents=True, exist_ok=True)
        io.write_png(out_dir / "rgb.png", aligned.rgb)
        io.write_pgm(out_dir / "thermal.pgm",
                     np.clip(np.rint(aligned.thermal), 0, 65535)
                     .astype(np.uint16))
        io.write_pgm(out_dir / "uv.pgm",
                     np.clip(np.rint(aligned.uv), 0, 255).astype(np.uint8))
        io.write_pgm(out_dir / "mask.pgm",
                     aligned.bad_mask.astype(np.uint8) * 255)
        io.write_pgm(out_dir / "depth.pgm", frame.depth)
        print(f"aligned {frame_dir.name}: "
              f"{int(aligned.bad_mask.sum())} bad points")
    return 0


def cmd_fuse(args) -> int:
    setup = Setup(args)
    calib = _load_calibration(setup)
    aligned_dir = setup.out / "aligned"
    if not aligned_dir.is_dir():
        raise _ConfigProblem(f"{aligned_dir}: no aligned frames (run "
                             f"register first)")

    intr_rgb = calib.cameras["rgb"].intrinsics
    fused_dir = setup.out / "fused"
    fused_dir.mkdir(parents=True, exist_ok=True)
    for frame_dir in sorted(p for p in aligned_dir.iterdir() if p.is_dir()):
        aligned = AlignedFrame(
            rgb=_read_raster(frame_dir / "rgb.png"),
            thermal=_read_raster(frame_dir / "thermal.pgm")
            .astype(np.float64),
            uv=_read_raster(frame_dir / "uv.pgm").astype(np.float64),
            bad_mask=_read_raster(frame_dir / "mask.pgm") > 0,
            depth_mm=_read_raster(frame_dir / "depth.pgm"))
        fused = fuse_frame(aligned, setup.fusion, intr_rgb)
        io.write_png(fused_dir / f"{frame_dir.name}.png", fused.rgb)
        io.write_ply(fused_dir / f"{frame_dir.name}.ply", fused.cloud,
                     binary=args.binary_ply)
        print(f"fused {frame_dir.name}: {len(fused.cloud)} points")
    return 0


def cmd_pipeline(args) -> int:
    for step in (cmd_render, cmd_calibrate, cmd_register, cmd_fuse):
        code = step(args)
        if code:
            return code
    return 0


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msfusion",
        description="multispectral calibration, registration, and fusion")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int, default=None,
                        help="rng seed (default 0)")
    common.add_argument("--out", help="output directory "
                                      "(default msfusion_out)")

    fusion_flags = argparse.ArgumentParser(add_help=False)
    fusion_flags.add_argument("--threshold-uv", type=_threshold_flag,
                              default=None,
                              help="absolute value or percentile like p95")
    fusion_flags.add_argument("--threshold-thermal", type=_threshold_flag,
                              default=None)
    fusion_flags.add_argument("--precedence",
                              choices=["thermal_over_uv", "uv_over_thermal"],
                              default=None)
    fusion_flags.add_argument("--binary-ply", action="store_true",
                              help="write binary little-endian PLY")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("render", parents=[common],
                   help="write synthetic views, frames, ground truth") \
        .set_defaults(func=cmd_render)
    sub.add_parser("calibrate", parents=[common],
                   help="calibrate all cameras from rendered views") \
        .set_defaults(func=cmd_calibrate)
    sub.add_parser("register", parents=[common],
                   help="align frames to the rgb grid") \
        .set_defaults(func=cmd_register)
    sub.add_parser("fuse", parents=[common, fusion_flags],
                   help="recolor and export point clouds") \
        .set_defaults(func=cmd_fuse)
    sub.add_parser("pipeline", parents=[common, fusion_flags],
                   help="render, calibrate, register, fuse") \
        .set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _ConfigProblem as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (_DataProblem, InsufficientViews) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
