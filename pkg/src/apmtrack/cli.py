"""Command-line entry point: ``apmtrack <subcommand> ...``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ATTN_VARIANTS, FUSION_MODES, SPARSIFY_MODES, PipelineConfig, load_config
from .errors import ApmError
from .events import crop_region, read_events, slice_window, voxelize
from .fixtures import gen_fixtures, load_sequence, read_boxes, sequence_config
from .flops import FlopsReport, flops_report
from .fusion import dapa_fuse, patch_embed
from .metrics import compute_metrics
from .pipeline import TrackResult, frame_voxels, track_forward
from .pnm import write_pnm
from .weights import WeightBundle, dapa_weights, init_weights, load_bundle, save_bundle


def _num(v) -> str:
    return repr(float(v))


def _apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    changes = {k: getattr(args, k) for k in ("seed", "fusion", "sparsify", "attn") if getattr(args, k, None) is not None}
    return cfg.replace(**changes) if changes else cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# report writers --------------------------------------------------------------


def trajectory_csv(result: TrackResult) -> str:
    rows = ["frame,x,y,w,h"]
    rows += [f"{f.index}," + ",".join(_num(v) for v in f.bbox) for f in result.frames]
    return "\n".join(rows) + "\n"


def plans_csv(result: TrackResult) -> str:
    rows = ["frame_id,K,variance,variance_norm,indices"]
    for f in result.frames:
        if f.plan is not None:
            idx = " ".join(str(int(i)) for i in f.plan.indices)
            rows.append(f"{f.index},{f.plan.k},{_num(f.plan.variance)},{_num(f.plan.variance_norm)},{idx}")
    return "\n".join(rows) + "\n"


def report_csv(result: TrackResult) -> str:
    rows = ["frame,x,y,w,h,K,backbone_tokens,focal,l1,giou,total"]
    for f in result.frames:
        k = f.plan.k if f.plan is not None else ""
        losses = ["", "", "", ""] if f.losses is None else [
            _num(f.losses.focal), _num(f.losses.l1), _num(f.losses.giou), _num(f.losses.total)
        ]
        rows.append(",".join([str(f.index), *(_num(v) for v in f.bbox), str(k), str(f.backbone_tokens), *losses]))
    return "\n".join(rows) + "\n"


def flops_csv(report: FlopsReport) -> str:
    rows = ["mode,stage,flops"]
    rows += [f"configured,{k},{v}" for k, v in report.stages.items()]
    rows.append(f"configured,total,{report.total}")
    rows += [f"concat_baseline,{k},{v}" for k, v in report.baseline_stages.items()]
    rows.append(f"concat_baseline,total,{report.baseline_total}")
    return "\n".join(rows) + "\n"


def _print_flops(report: FlopsReport) -> None:
    per = report.frames
    print(f"frames: {per}")
    print(f"backbone input tokens per frame: {report.tokens} (concat baseline: {report.baseline_tokens})")
    for k, v in report.stages.items():
        print(f"  {k:<16} {v / per / 1e9:10.3f} GFLOPs/frame")
    print(f"  {'total':<16} {report.total / per / 1e9:10.3f} GFLOPs/frame")
    print(f"  {'concat baseline':<16} {report.baseline_total / per / 1e9:10.3f} GFLOPs/frame")


# subcommands -----------------------------------------------------------------


def cmd_gen_fixtures(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    velocity = (0, 0) if args.static else (6, 2)
    out = gen_fixtures(cfg.seed, args.out, n_frames=args.frames, velocity=velocity, cfg=cfg)
    print(f"wrote fixture sequence to {out}")
    return 0


def cmd_voxelize(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    stream = read_events(args.events, args.width, args.height)
    t0 = args.t0 if args.t0 is not None else int(stream.t[0]) if len(stream) else 0
    t1 = args.t1 if args.t1 is not None else (int(stream.t[-1]) + 1 if len(stream) else t0 + 1)
    bins = args.bins or cfg.bins
    grid = voxelize(slice_window(stream, t0, t1), bins, t0, t1)
    out = _out_dir(args)
    save_bundle(WeightBundle({"voxels": grid.data}), out / "voxels.apmt", dtype="f64")
    for b, plane in enumerate(grid.data):
        peak = max(float(np.abs(plane).max()), 1e-12)
        write_pnm(out / f"bin{b}.pgm", 0.5 + 0.5 * plane / peak)
    print(f"{len(slice_window(stream, t0, t1))} events in [{t0}, {t1}) -> {bins}x{stream.height}x{stream.width} grid")
    return 0


def _weights_for(args, cfg: PipelineConfig, seq_dir: Path | None) -> WeightBundle:
    if args.weights:
        return load_bundle(args.weights)
    if seq_dir is not None and (seq_dir / "weights.apmt").exists():
        return load_bundle(seq_dir / "weights.apmt")
    return init_weights(cfg)


def cmd_fuse(args) -> int:
    seq_dir = Path(args.data)
    cfg = _apply_overrides(sequence_config(seq_dir, args.config), args)
    seq = load_sequence(seq_dir)
    weights = _weights_for(args, cfg, seq_dir)
    bbox = tuple(float(v) for v in args.bbox.split(",")) if args.bbox else tuple(seq.gt[args.frame])
    size, factor = (cfg.search_size, cfg.search_factor) if args.region == "search" else (cfg.template_size, cfg.template_factor)
    voxels = frame_voxels(seq.events, seq.frame_times, args.frame, cfg)
    rgb = crop_region(seq.frames[args.frame], bbox, factor, size, fill="mean")
    evt = crop_region(voxels.transpose(1, 2, 0), bbox, factor, size, fill=0.0)
    fused = dapa_fuse(rgb.pixels, evt.pixels, dapa_weights(weights), cfg.sigma_hp_for(size))
    tokens = patch_embed(fused, weights["embed.fused.proj"], weights["embed.fused.bias"], cfg.patch)
    out = _out_dir(args)
    save_bundle(WeightBundle({"fused": fused, "tokens": tokens.tokens}), out / "fused.apmt", dtype="f64")
    preview = fused.mean(axis=2)
    span = max(float(preview.max() - preview.min()), 1e-12)
    write_pnm(out / "fused_mean.pgm", (preview - preview.min()) / span)
    write_pnm(out / "rgb_crop.ppm", rgb.pixels)
    print(f"fused {args.region} region {fused.shape} -> {len(tokens)} tokens of width {tokens.tokens.shape[1]}")
    return 0


def cmd_track(args) -> int:
    seq_dir = Path(args.data)
    cfg = _apply_overrides(sequence_config(seq_dir, args.config), args)
    seq = load_sequence(seq_dir)
    weights = _weights_for(args, cfg, seq_dir)
    result = track_forward(seq.frames, seq.events, seq.init_bbox, cfg, weights, seq.frame_times, gt=seq.gt)
    out = _out_dir(args)
    (out / "trajectory.csv").write_text(trajectory_csv(result))
    (out / "plans.csv").write_text(plans_csv(result))
    (out / "report.csv").write_text(report_csv(result))
    (out / "flops.csv").write_text(flops_csv(result.flops))
    m = compute_metrics(result.trajectory(), seq.gt)
    print(f"tracked {len(result.frames)} frames -> {out}")
    for k, v in m.summary().items():
        print(f"  {k}: {v:.4f}")
    return 0


def cmd_metrics(args) -> int:
    m = compute_metrics(read_boxes(args.pred), read_boxes(args.gt))
    lines = [f"{k},{_num(v)}" for k, v in m.summary().items()]
    if args.out:
        out = _out_dir(args)
        (out / "metrics.csv").write_text("metric,value\n" + "\n".join(lines) + "\n")
    for k, v in m.summary().items():
        print(f"{k}: {v:.4f}")
    return 0


def cmd_bench_flops(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    ks = [int(k) for k in args.k.split(",")] if args.k else [cfg.kmax]
    report = flops_report(cfg, ks)
    _print_flops(report)
    if args.out:
        (_out_dir(args) / "flops.csv").write_text(flops_csv(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apmtrack", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--fusion", choices=FUSION_MODES)
        p.add_argument("--sparsify", choices=SPARSIFY_MODES)
        p.add_argument("--attn", choices=ATTN_VARIANTS)
        p.add_argument("--out", required=out_required, help="output directory")
        return p

    p = common(sub.add_parser("gen-fixtures", help="write a synthetic sequence"), out_required=True)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--static", action="store_true", help="no motion, hence no events")
    p.set_defaults(func=cmd_gen_fixtures)

    p = common(sub.add_parser("voxelize", help="rasterise an event file"), out_required=True)
    p.add_argument("--events", required=True, help=".csv or .bin (EVT0) file")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--t0", type=int)
    p.add_argument("--t1", type=int)
    p.add_argument("--bins", type=int)
    p.set_defaults(func=cmd_voxelize)

    p = common(sub.add_parser("fuse", help="frequency-domain fusion of one region"), out_required=True)
    p.add_argument("--data", required=True, help="sequence directory")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--region", choices=("search", "template"), default="search")
    p.add_argument("--bbox", help="x,y,w,h (default: ground truth of the frame)")
    p.add_argument("--weights")
    p.set_defaults(func=cmd_fuse)

    p = common(sub.add_parser("track", help="run the tracker over a sequence"), out_required=True)
    p.add_argument("--data", required=True, help="sequence directory")
    p.add_argument("--weights")
    p.set_defaults(func=cmd_track)

    p = common(sub.add_parser("metrics", help="SR / PR / NPR of a trajectory"))
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_metrics)

    p = common(sub.add_parser("bench-flops", help="analytic FLOPs and token counts"))
    p.add_argument("--k", help="comma-separated K per frame (default K_max)")
    p.set_defaults(func=cmd_bench_flops)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ApmError, ValueError, OSError) as exc:
        print(f"apmtrack: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
