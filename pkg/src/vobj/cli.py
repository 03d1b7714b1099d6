"""Command-line entry point: synth / map / bench / eval / render.

Every subcommand writes a manifest.json (effective config, seed, library
versions, timings, output paths) so runs can be audited and reproduced.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import cv2
import numpy as np
import scipy
import skimage

import vobj
from vobj import meshing
from vobj.datasets import Dataset
from vobj.synth import SceneSpec, five_object_scene, generate, hemisphere_sphere_scene, mini_scene
from vobj.trainer import (
    TrainConfig,
    apply_config_overrides,
    benchmark,
    load_config_file,
    run_mapping,
    write_bench_csv,
    write_reports_csv,
)
from vobj.trainer import Mapper

_THREAD_LIMIT = None  # keeps the threadpoolctl context alive for the process

_PRESETS = {
    "five_objects": five_object_scene,
    "hemisphere": hemisphere_sphere_scene,
    "mini": mini_scene,
}


def _versions() -> dict[str, str]:
    return {
        "vobj": getattr(vobj, "__version__", "0.1.0"),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "skimage": skimage.__version__,
        "opencv": cv2.__version__,
    }


def _write_manifest(out_dir: Path, command: str, config: dict, seed: int | None,
                    timings: dict[str, float], outputs: dict[str, str],
                    extra: dict | None = None) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.json"
    doc = dict(extra) if extra else {}
    doc.update(
        {
            "command": command,
            "seed": seed,
            "config": config,
            "versions": _versions(),
            "timings_s": {k: round(v, 3) for k, v in timings.items()},
            "outputs": outputs,
        }
    )
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _build_config(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "config", None):
        cfg = load_config_file(args.config, cfg)
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    if overrides:
        cfg = apply_config_overrides(cfg, overrides)
    direct = {}
    if getattr(args, "seed", None) is not None:
        direct["seed"] = str(args.seed)
    if getattr(args, "max_frames", None) is not None:
        direct["max_frames"] = str(args.max_frames)
    if direct:
        cfg = apply_config_overrides(cfg, direct)
    return cfg


def _load_mesh_dir(path: Path) -> dict[str, meshing.Mesh]:
    meshes = {}
    for ply in sorted(path.glob("*.ply")):
        meshes[ply.stem] = meshing.read_ply(ply)
    if not meshes:
        raise FileNotFoundError(f"no .ply meshes under {path}")
    return meshes


def _mesh_metrics_doc(recon: dict, gt: dict, n_samples: int, seed: int) -> dict:
    # Object-level metrics only: a ground-truth room/background mesh would
    # otherwise soak up one of the reconstructed objects in the matching.
    gt = {k: v for k, v in gt.items() if str(k) != "background"}
    recon = {k: v for k, v in recon.items() if str(k) != "background"}
    matches = meshing.match_objects(recon, gt)
    per_object = []
    for gt_key, recon_key, centroid_dist in matches:
        m = meshing.reconstruction_metrics(
            recon[recon_key], gt[gt_key], n_samples=n_samples, seed=seed
        )
        per_object.append(
            {
                "gt": str(gt_key),
                "recon": str(recon_key),
                "centroid_distance_m": centroid_dist,
                "accuracy_cm": 100.0 * m.accuracy,
                "completion_cm": 100.0 * m.completion,
                "completion_ratio_1cm_pct": 100.0 * m.completion_ratio[0.01],
                "completion_ratio_5cm_pct": 100.0 * m.completion_ratio[0.05],
            }
        )
    matched_gt = {p["gt"] for p in per_object}
    matched_recon = {p["recon"] for p in per_object}
    doc = {
        "objects": per_object,
        "unmatched_gt": sorted(str(k) for k in gt if str(k) not in matched_gt),
        "unmatched_recon": sorted(str(k) for k in recon if str(k) not in matched_recon),
    }
    if per_object:
        for key in ("accuracy_cm", "completion_cm", "completion_ratio_1cm_pct",
                    "completion_ratio_5cm_pct"):
            doc[f"mean_{key}"] = float(np.mean([p[key] for p in per_object]))
    return doc


def cmd_synth(args) -> int:
    t0 = time.perf_counter()
    if args.spec:
        spec = SceneSpec.from_dict(json.loads(Path(args.spec).read_text()))
    else:
        maker = _PRESETS[args.preset]
        spec = maker(n_frames=args.frames) if args.frames else maker()
    out = Path(args.out)
    generate(spec, out, seed=args.seed)
    # The generator's manifest carries dataset metadata (mask consistency,
    # ground-truth mesh registry); fold the audit fields in beside it.
    dataset_meta = json.loads((out / "manifest.json").read_text())
    _write_manifest(
        out, "synth", spec.to_dict(), args.seed,
        {"total": time.perf_counter() - t0},
        {"dataset": str(out)},
        extra=dataset_meta,
    )
    print(f"wrote {spec.n_frames} frames to {out}")
    return 0


def cmd_map(args) -> int:
    cfg = _build_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    dataset = Dataset(args.data)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    mapper, reports = run_mapping(dataset, cfg, mode=args.mode, progress=not args.quiet)
    timings["train"] = time.perf_counter() - t0

    ckpt = out / "map.bin"
    mapper.save(ckpt)
    reports_path = out / "reports.csv"
    write_reports_csv(reports_path, reports)
    outputs = {"checkpoint": str(ckpt), "reports": str(reports_path)}

    t0 = time.perf_counter()
    mesh_dir = out / "meshes"
    mesh_dir.mkdir(exist_ok=True)
    meshes = mapper.extract_meshes()
    for oid, mesh in meshes.items():
        meshing.write_ply(mesh_dir / f"object_{oid:03d}.ply", mesh)
    if args.scene_mesh:
        meshing.write_ply(mesh_dir / "scene.ply", mapper.extract_scene_mesh())
    timings["mesh"] = time.perf_counter() - t0
    outputs["meshes"] = str(mesh_dir)

    gt_dir = Path(args.data) / "gt_mesh"
    if gt_dir.is_dir() and not args.no_metrics:
        t0 = time.perf_counter()
        gt = _load_mesh_dir(gt_dir)
        recon = {f"object_{oid:03d}": m for oid, m in meshes.items() if not m.is_empty}
        doc = _mesh_metrics_doc(recon, gt, n_samples=args.samples, seed=cfg.seed)
        metrics_path = out / "metrics.json"
        metrics_path.write_text(json.dumps(doc, indent=2) + "\n")
        timings["metrics"] = time.perf_counter() - t0
        outputs["metrics"] = str(metrics_path)

    _write_manifest(out, "map", asdict(cfg), cfg.seed, timings, outputs)
    if not args.quiet:
        k = reports[-1].k_models if reports else 0
        print(f"mapped {mapper.frames_seen} frames, {k} models, outputs in {out}")
    return 0


def cmd_bench(args) -> int:
    cfg = _build_config(args)
    k_list = [int(x) for x in args.models.split(",")]
    hidden_list = [int(x) for x in args.hidden.split(",")]
    t0 = time.perf_counter()
    rows = benchmark(k_list, hidden_list, cfg, timed_steps=args.steps, warmup_steps=args.warmup)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_bench_csv(out, rows)
    for r in rows:
        print(f"{r.mode:12s} K={r.k:4d} hidden={r.hidden:4d} {r.ms:9.3f} ms")
    _write_manifest(
        out.parent, "bench", asdict(cfg), cfg.seed,
        {"total": time.perf_counter() - t0}, {"bench": str(out)},
    )
    return 0


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    recon = _load_mesh_dir(Path(args.recon))
    gt = _load_mesh_dir(Path(args.gt))
    doc = _mesh_metrics_doc(recon, gt, n_samples=args.samples, seed=args.seed)
    out = Path(args.out) if args.out else Path(args.recon) / "metrics.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2) + "\n")
    _write_manifest(
        out.parent, "eval", {"samples": args.samples}, args.seed,
        {"total": time.perf_counter() - t0}, {"metrics": str(out)},
    )
    print(json.dumps({k: v for k, v in doc.items() if k.startswith("mean_")}, indent=2))
    return 0


def _parse_frame_spec(spec: str, n: int) -> list[int]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"frame range must be start:stop[:step], got {spec!r}")
        start, stop = int(parts[0]), int(parts[1])
        step = int(parts[2]) if len(parts) == 3 else 1
        return list(range(start, min(stop, n), step))
    return [int(x) for x in spec.split(",")]


def cmd_render(args) -> int:
    cfg = _build_config(args)
    dataset = Dataset(args.data)
    mapper = Mapper.restore(args.checkpoint, dataset.intrinsics, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    indices = _parse_frame_spec(args.frames, len(dataset))
    t0 = time.perf_counter()
    written = []
    for i in indices:
        frame = dataset.frame(i)
        view = mapper.render_view(frame.pose)
        rgb_u8 = (np.clip(view.rgb, 0, 1) * 255).round().astype(np.uint8)
        depth_u16 = np.clip(view.depth * dataset.depth_scale, 0, 65535).astype(np.uint16)
        cv2.imwrite(str(out / f"rgb_{i:06d}.png"), rgb_u8[:, :, ::-1])
        cv2.imwrite(str(out / f"depth_{i:06d}.png"), depth_u16)
        cv2.imwrite(str(out / f"instance_{i:06d}.png"), view.instance.astype(np.uint16))
        written.append(i)
        if not args.quiet:
            print(f"rendered frame {i}", flush=True)
    _write_manifest(
        out, "render", asdict(cfg), cfg.seed,
        {"total": time.perf_counter() - t0},
        {"frames": ",".join(str(i) for i in written), "dir": str(out)},
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vobj", description=__doc__)
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/internal thread pools for this process")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic RGB-D dataset")
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--spec", help="scene spec JSON file")
    group.add_argument("--preset", choices=sorted(_PRESETS), help="built-in scene")
    sp.add_argument("--frames", type=int, default=None, help="override preset frame count")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)

    mp = sub.add_parser("map", help="run the mapping pipeline on a dataset")
    mp.add_argument("--data", required=True)
    mp.add_argument("--out", required=True)
    mp.add_argument("--config", default=None, help="key = value config file")
    mp.add_argument("--seed", type=int, default=None)
    mp.add_argument("--max-frames", type=int, default=None)
    mp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a config field (repeatable)")
    mp.add_argument("--mode", choices=("vectorised", "sequential"), default="vectorised")
    mp.add_argument("--scene-mesh", action="store_true", help="also extract the background mesh")
    mp.add_argument("--no-metrics", action="store_true")
    mp.add_argument("--samples", type=int, default=10_000, help="mesh metric sample count")
    mp.add_argument("--quiet", action="store_true")
    mp.set_defaults(func=cmd_map)

    bp = sub.add_parser("bench", help="time vectorised vs sequential training steps")
    bp.add_argument("--models", default="1,40,80,120,160,200", help="comma-separated K values")
    bp.add_argument("--hidden", default="32", help="comma-separated hidden sizes")
    bp.add_argument("--out", required=True, help="output CSV path")
    bp.add_argument("--steps", type=int, default=50)
    bp.add_argument("--warmup", type=int, default=10)
    bp.add_argument("--config", default=None)
    bp.add_argument("--seed", type=int, default=None)
    bp.add_argument("--set", action="append", metavar="KEY=VALUE")
    bp.set_defaults(func=cmd_bench)

    ep = sub.add_parser("eval", help="mesh metrics between two directories of PLYs")
    ep.add_argument("--recon", required=True)
    ep.add_argument("--gt", required=True)
    ep.add_argument("--out", default=None, help="metrics JSON path")
    ep.add_argument("--samples", type=int, default=10_000)
    ep.add_argument("--seed", type=int, default=0)
    ep.set_defaults(func=cmd_eval)

    rp = sub.add_parser("render", help="novel views from a checkpoint along dataset poses")
    rp.add_argument("--checkpoint", required=True)
    rp.add_argument("--data", required=True, help="dataset supplying intrinsics and poses")
    rp.add_argument("--frames", default="0:1000000:20", help="indices: a,b,c or start:stop[:step]")
    rp.add_argument("--out", required=True)
    rp.add_argument("--config", default=None)
    rp.add_argument("--seed", type=int, default=None)
    rp.add_argument("--set", action="append", metavar="KEY=VALUE")
    rp.add_argument("--quiet", action="store_true")
    rp.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        global _THREAD_LIMIT
        from threadpoolctl import threadpool_limits

        _THREAD_LIMIT = threadpool_limits(limits=max(1, args.threads))
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
