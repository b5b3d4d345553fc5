"""Command-line surface: render, fit, edit, bench, gradcheck, serve.

Exit codes are stable API: 0 ok, 2 parse/usage error, 3 render error,
4 divergence, 5 invalid edit, 6 unknown benchmark config. Human-readable
progress goes to stderr; machine output (JSON/CSV) goes to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_RENDER = 3
EXIT_DIVERGED = 4
EXIT_BAD_EDIT = 5
EXIT_BAD_CONFIG = 6

ALL_LAYERS = ("silhouette", "instance", "depth", "normal", "pose")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_scene_or_exit(path: str):
    from .scene import SceneFormatError, load_scene

    try:
        return load_scene(path)
    except FileNotFoundError as exc:
        _log(f"error: {exc}")
        raise SystemExit(EXIT_PARSE)
    except (SceneFormatError, ValueError, json.JSONDecodeError) as exc:
        _log(f"error: cannot parse scene {path}: {exc}")
        raise SystemExit(EXIT_PARSE)


def cmd_render(args) -> int:
    from . import formats
    from .raster import SoftRasterConfig
    from .scene import render_scene

    scene = _load_scene_or_exit(args.scene)
    layers = [s.strip() for s in args.layers.split(",") if s.strip()]
    unknown = [l for l in layers if l not in ALL_LAYERS]
    if unknown:
        _log(f"error: unknown layers {unknown}; choose from {ALL_LAYERS}")
        return EXIT_PARSE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        hard, silhouettes = render_scene(scene, SoftRasterConfig(args.sharpness))
    except ValueError as exc:
        _log(f"error: render failed: {exc}")
        return EXIT_RENDER
    if "silhouette" in layers:
        union = np.ones((scene.camera.height, scene.camera.width))
        for sil in silhouettes.values():
            union *= 1.0 - sil.values
        formats.write_png(formats.silhouette_to_u8(1.0 - union), out / "silhouette.png")
        _log(f"silhouette.png: union soft coverage of {len(silhouettes)} objects")
    if "instance" in layers:
        formats.write_png(formats.instance_to_u8(hard.instance), out / "instance.png")
        ids = sorted(int(i) for i in np.unique(hard.instance) if i != 0)
        _log(f"instance.png: visible object ids {ids}")
    if "depth" in layers:
        formats.write_float_plane(hard.depth, out / "depth.d3dr")
        finite = hard.depth[np.isfinite(hard.depth)]
        rng = f"{finite.min():.3g}..{finite.max():.3g}" if finite.size else "empty"
        _log(f"depth.d3dr: ray distances {rng}")
    if "normal" in layers:
        formats.write_float_plane(hard.normal, out / "normal.d3dr")
        _log("normal.d3dr: camera-frame unit normals")
    if "pose" in layers:
        formats.write_png(formats.pose_to_u8(hard.pose_bins), out / "pose.png")
        bins = sorted(int(b) for b in np.unique(hard.pose_bins) if b >= 0)
        _log(f"pose.png: yaw bins {bins}")
    return EXIT_OK


def cmd_fit(args) -> int:
    from . import formats
    from .bench import ProtocolConfig, derender_object
    from .fitting import AblationFlags
    from .raster import SilhouetteImage, SoftRasterConfig
    from .scene import occlusion_masks, save_scene

    scene = _load_scene_or_exit(args.scene)
    masks_dir = Path(args.masks)
    if not masks_dir.is_dir():
        _log(f"error: mask directory {masks_dir} not found")
        return EXIT_PARSE
    targets = {}
    for oid in scene.object_ids():
        candidates = [masks_dir / f"{oid}.png", masks_dir / f"{oid}.pgm"]
        path = next((p for p in candidates if p.exists()), None)
        if path is None:
            _log(f"error: no target mask for object {oid} in {masks_dir}")
            return EXIT_PARSE
        mask = formats.load_mask(path)
        if mask.shape != (scene.camera.height, scene.camera.width):
            _log(f"error: mask {path} has shape {mask.shape}, camera expects "
                 f"{(scene.camera.height, scene.camera.width)}")
            return EXIT_PARSE
        targets[oid] = SilhouetteImage(mask)

    flags = AblationFlags(
        yaw_constraint=not args.no_yaw_constraint,
        normalized_distance=not args.no_normalized_distance,
        multicad_ffd=not args.single_mesh,
    )
    proto = ProtocolConfig(
        learning_rate=args.lr,
        pose_iterations=args.pose_iterations,
        joint_iterations=args.joint_iterations,
        selection_iterations=args.selection_iterations,
        raster=SoftRasterConfig(sharpness_gamma=args.sharpness, tail_sigmas=8.0),
        flags=flags,
    )
    valid = occlusion_masks(scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    fitted_objects = []
    for oid, state in scene.objects:
        res = derender_object(targets[oid], valid[oid], state, scene.mesh_lib,
                              scene.camera, proto)
        if not math.isfinite(res.final_loss):
            _log(f"error: fit diverged for object {oid}")
            return EXIT_DIVERGED
        results[oid] = res
        fitted_objects.append((oid, res.state))
        _log(f"object {oid}: mesh {res.selected_mesh}, loss "
             f"{res.loss_trace[0]:.6f} -> {res.final_loss:.6f} "
             f"({len(res.loss_trace)} iterations)")
    fitted = scene.with_objects(fitted_objects)
    save_scene(fitted, out / "fitted_scene.json")
    record = {
        "objects": {str(oid): res.to_dict() for oid, res in results.items()},
        "protocol": {
            "learning_rate": proto.learning_rate,
            "pose_iterations": proto.pose_iterations,
            "joint_iterations": proto.joint_iterations,
            "selection_iterations": proto.selection_iterations,
            "sharpness_gamma": proto.raster.sharpness_gamma,
            "yaw_constraint": flags.yaw_constraint,
            "normalized_distance": flags.normalized_distance,
            "multicad_ffd": flags.multicad_ffd,
        },
    }
    (out / "fit.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
    _log(f"wrote {out / 'fitted_scene.json'} and {out / 'fit.json'}")
    return EXIT_OK


def cmd_edit(args) -> int:
    from .scene import apply_edit, load_edit_script, save_scene

    scene = _load_scene_or_exit(args.scene)
    try:
        ops = load_edit_script(args.script)
    except FileNotFoundError as exc:
        _log(f"error: {exc}")
        return EXIT_PARSE
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        _log(f"error: cannot parse edit script: {exc}")
        return EXIT_PARSE
    for index, op in enumerate(ops):
        try:
            scene = apply_edit(scene, op)
        except (KeyError, ValueError) as exc:
            _log(f"error: edit {index} invalid: {exc}")
            return EXIT_BAD_EDIT
    save_scene(scene, args.out)
    _log(f"applied {len(ops)} edits -> {args.out}")
    if args.render:
        args_render = argparse.Namespace(scene=args.out, out=args.render,
                                         layers=",".join(ALL_LAYERS), sharpness=1.0)
        return cmd_render(args_render)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import CONFIG_PRESETS, run_benchmark

    configs = [c.strip() for c in args.configs.split(",") if c.strip()]
    unknown = [c for c in configs if c not in CONFIG_PRESETS]
    if unknown:
        _log(f"error: unknown config labels {unknown}; "
             f"choose from {sorted(CONFIG_PRESETS)}")
        return EXIT_BAD_CONFIG
    if "full" not in configs:
        _log("error: configs must include 'full'")
        return EXIT_BAD_CONFIG
    seeds = range(args.seed, args.seed + args.seeds)
    report = run_benchmark(configs, seeds, difficulty=args.difficulty,
                           workers=args.threads)
    csv = report.to_csv()
    sys.stdout.write(csv)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.csv").write_text(csv, encoding="utf-8")
        (out / "bench.json").write_text(report.to_json(), encoding="utf-8")
        _log(f"wrote {out / 'bench.csv'} and {out / 'bench.json'}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    if args.samples < 1:
        _log("error: --samples must be at least 1")
        return EXIT_PARSE
    report = run_gradcheck(
        n_meshes=args.meshes,
        samples_per_mesh=args.samples,
        gamma=args.sharpness,
        seed=args.seed,
        step=args.step,
        tolerance=args.tolerance,
    )
    _log(f"checked {report['checked']} coordinates "
         f"({report['skipped_small']} below the gradient floor)")
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if report["pass_rate"] >= 0.95 else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="derender3d",
        description="De-render, edit, and re-render object-wise 3D scenes.",
    )
    parser.add_argument("--seed", type=int, default=0, help="base random seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap for scene-parallel commands")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="rasterize scene layers to files")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--layers", default=",".join(ALL_LAYERS))
    p.add_argument("--sharpness", type=float, default=1.0)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("fit", help="fit scene objects to target masks")
    p.add_argument("--masks", required=True, help="directory of <id>.png masks")
    p.add_argument("--scene", required=True, help="initial scene JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=0.03)
    p.add_argument("--pose-iterations", type=int, default=40)
    p.add_argument("--joint-iterations", type=int, default=24)
    p.add_argument("--selection-iterations", type=int, default=12)
    p.add_argument("--sharpness", type=float, default=1.0)
    p.add_argument("--single-mesh", action="store_true",
                   help="fix mesh 0 and freeze deformation")
    p.add_argument("--no-yaw-constraint", action="store_true",
                   help="optimize a full quaternion")
    p.add_argument("--no-normalized-distance", action="store_true",
                   help="optimize log distance instead of log normalized distance")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("edit", help="apply an edit script to a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--script", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--render", help="also render the edited scene to this directory")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("bench", help="run the synthetic de-rendering benchmark")
    p.add_argument("--seeds", type=int, default=50, help="number of scenes")
    p.add_argument("--configs", default="full,wo_yaw_constraint,"
                   "wo_normalized_distance,single_mesh")
    p.add_argument("--difficulty", choices=("easy", "hard"), default="hard")
    p.add_argument("--out", help="directory for bench.csv and bench.json")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="verify analytic silhouette gradients")
    p.add_argument("--meshes", type=int, default=20)
    p.add_argument("--samples", type=int, default=10, help="coordinates per mesh")
    p.add_argument("--sharpness", type=float, default=1.0)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--tolerance", type=float, default=1e-2)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("serve", help="run the interactive editing service")
    p.add_argument("--port", type=int, default=8723)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_PARSE


if __name__ == "__main__":
    raise SystemExit(main())
