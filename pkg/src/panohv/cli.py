"""``panohv`` command line: extract, segment, evaluate, analyze, render.

Exit codes: 0 success, 1 internal failure, 2 bad input.
"""
from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import io as pio
from . import plotting
from .metrics import evaluate
from .panogeom import ImageGrid
from .pipeline import extract_planes, segment
from .pixelclass import angle_histogram, cc_cleanup, classify_pixels, coverage_summary
from .segment import pixel_orientation
from .synth import SceneSpec, perturb_depth, render_depth

log = logging.getLogger("panohv")

ENCODING_FLAGS = {"png16mm": "png16mm", "pfm": "pfm", "raw": "raw"}


class BadInput(Exception):
    pass


def _load_depth(path, encoding):
    p = Path(path)
    if not p.is_file():
        raise BadInput(f"no such file: {p}")
    try:
        return pio.load_depth(p, encoding)
    except (pio.FormatError, ValueError) as e:
        raise BadInput(str(e)) from None


def _outdir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_table(base: Path, row: dict, fmt: str) -> Path:
    path = base.parent / f"{base.name}.{fmt}"
    if fmt == "json":
        path.write_text(json.dumps(row, indent=2, sort_keys=True) + "\n")
        return path
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(row))
    w.writerow([row[k] for k in row])
    path.write_text(buf.getvalue())
    return path


# ---------------------------------------------------------------- subcommands

def _extract_one(path, args) -> str:
    depth = _load_depth(path, args.encoding)
    res = extract_planes(depth, seed=args.seed, ransac_iters=args.ransac_iters, min_cc=args.min_cc)
    out = _outdir(args)
    stem = Path(path).stem
    pio.save_labels(res.labels, out / f"{stem}.planes.png", meta=res.meta)
    if args.ply:
        pio.export_ply(res.labels, out / f"{stem}.planes.ply")
    n = len(res.labels.ids)
    return f"{stem}: {n} planes ({res.n_h} H, {res.n_v} V), coverage {100 * res.coverage:.2f}%"


def _segment_one(path, args) -> str:
    depth = _load_depth(path, args.encoding)
    feats = None
    if args.features:
        try:
            feats = pio.load_feature_map(args.features, depth.grid)
        except (pio.FormatError, FileNotFoundError) as e:
            raise BadInput(str(e)) from None
    labels, groups, pcm, meta = segment(depth, args.seed, args.bandwidth_h, args.bandwidth_v, args.min_cc, feats)
    out = _outdir(args)
    stem = Path(path).stem
    meta["groups"] = {str(k): [g.kind.value, g.orientation] for k, g in sorted(groups.table.items())}
    pio.save_labels(labels, out / f"{stem}.segment.png", meta=meta)
    n_v = sum(1 for i in labels.ids if labels.table[i].kind.value == "V")
    return f"{stem}: {len(labels.ids)} instances ({len(labels.ids) - n_v} H, {n_v} V) in {len(groups.table)} orientation groups"


def _run_batch(fn, args) -> int:
    inputs = args.input
    if args.threads > 1 and len(inputs) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as ex:
            futures = [ex.submit(fn, p, args) for p in inputs]
            lines = [f.result() for f in futures]
    else:
        lines = [fn(p, args) for p in inputs]
    for line in lines:
        print(line)
    return 0


def cmd_extract(args) -> int:
    return _run_batch(_extract_one, args)


def cmd_segment(args) -> int:
    return _run_batch(_segment_one, args)


def cmd_evaluate(args) -> int:
    if len(args.input) != 1:
        raise BadInput("evaluate takes exactly one ground-truth label file")
    try:
        gt = pio.load_labels(args.input[0])
        pred = pio.load_labels(args.pred)
    except (pio.FormatError, FileNotFoundError) as e:
        raise BadInput(str(e)) from None
    if gt.labels.shape != pred.labels.shape:
        raise BadInput("ground truth and prediction differ in size")
    ref = None
    if args.depth:
        ref = _load_depth(args.depth, args.encoding).values
    try:
        report = evaluate(gt, pred, ref)
    except ValueError as e:
        raise BadInput(str(e)) from None
    row = report.to_dict()
    text = json.dumps(row, indent=2)
    print(text)
    out = _outdir(args)
    stem = Path(args.pred).name.split(".")[0]
    _write_table(out / f"{stem}.metrics", row, args.format)
    plotting.recall_figure(report.recall.thresholds, report.recall.per_plane, report.recall.per_pixel,
                           out / f"{stem}.recall.png")
    return 0


def _analyze_one(path, args) -> str:
    depth = _load_depth(path, args.encoding)
    hist = angle_histogram(depth)
    min_cc = args.min_cc if args.min_cc is not None else depth.grid.scaled_min_cc()
    pcm = cc_cleanup(classify_pixels(depth), min_cc)
    res = extract_planes(depth, seed=args.seed, ransac_iters=args.ransac_iters, min_cc=args.min_cc)
    out = _outdir(args)
    stem = Path(path).stem

    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["degree_lo", "degree_hi", "count", "fraction"])
    total = max(hist.total, 1)
    for b, c in enumerate(hist.counts):
        w.writerow([b, b + 1, int(c), f"{c / total:.6f}"])
    (out / f"{stem}.angles.csv").write_text(buf.getvalue())

    summary = {
        "pairs": hist.total,
        "horizontal_0_10": hist.fraction(0, 10),
        "vertical_80_90": hist.fraction(80, 90),
        "planes": len(res.labels.ids),
        "h_planes": res.n_h,
        "v_planes": res.n_v,
        "coverage_5cm": res.coverage,
        **coverage_summary(pcm),
    }
    _write_table(out / f"{stem}.summary", summary, args.format)
    plotting.angle_histogram_figure(hist.counts, out / f"{stem}.angles.png")
    plotting.class_map_figure(pcm.labels, out / f"{stem}.classes.png")
    plotting.label_map_figure(res.labels.labels, out / f"{stem}.planes_fig.png",
                              title=f"{len(res.labels.ids)} H&V planes, coverage {100 * res.coverage:.1f}%")
    tp, _ = pixel_orientation(depth)
    plotting.orientation_figure(tp, pcm.v_mask, out / f"{stem}.theta_prime.png")
    return (f"{stem}: {100 * summary['horizontal_0_10']:.1f}% pairs in [0,10) deg, "
            f"{100 * summary['vertical_80_90']:.1f}% in [80,90] deg; "
            f"{summary['planes']} planes cover {100 * res.coverage:.2f}%")


def cmd_analyze(args) -> int:
    return _run_batch(_analyze_one, args)


def cmd_render(args) -> int:
    if len(args.input) != 1:
        raise BadInput("render takes exactly one scene file")
    try:
        spec = SceneSpec.loads(Path(args.input[0]).read_text())
        spec.validate()
    except FileNotFoundError:
        raise BadInput(f"no such file: {args.input[0]}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise BadInput(f"bad scene file: {e}") from None
    depth, gt = render_depth(spec, ImageGrid(args.height, 2 * args.height))
    if args.noise > 0:
        depth = perturb_depth(depth, args.noise, args.seed)
    out = _outdir(args)
    stem = Path(args.input[0]).stem
    ext = {"png16mm": "png", "pfm": "pfm", "raw": "f32"}[args.encoding]
    pio.save_depth(depth, out / f"{stem}.depth.{ext}", args.encoding)
    pio.save_labels(gt, out / f"{stem}.gt.png", meta={"scene": spec.to_dict()})
    print(f"{stem}: rendered {args.height}x{2 * args.height}, {len(gt.ids)} visible surfaces")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="panohv", description="H&V plane reconstruction from depth panoramas")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, multi=True):
        sp.add_argument("--input", "-i", nargs="+" if multi else 1, required=True)
        sp.add_argument("--output", "-o", default=".")
        sp.add_argument("--encoding", choices=list(ENCODING_FLAGS), default="png16mm")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--min-cc", type=int, default=None, help="default: 1000 px scaled to image area")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--format", choices=["json", "csv"], default="json")

    sp = sub.add_parser("extract", help="ground-truth style H&V plane extraction")
    common(sp)
    sp.add_argument("--ransac-iters", type=int, default=500)
    sp.add_argument("--ply", action="store_true", help="also write a coloured PLY mesh")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("segment", help="divide-and-conquer instance segmentation")
    common(sp)
    sp.add_argument("--bandwidth-h", type=float, default=0.05)
    sp.add_argument("--bandwidth-v", type=float, default=0.05)
    sp.add_argument("--features", help="optional (D,H,W) feature map to cluster instead of plane offsets")
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("evaluate", help="score predicted labels against ground truth")
    common(sp)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--depth", help="reference depth; default renders it from the ground-truth planes")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("analyze", help="angle histogram and H&V coverage statistics")
    common(sp)
    sp.add_argument("--ransac-iters", type=int, default=500)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("render", help="render a synthetic scene description to depth + labels")
    common(sp)
    sp.add_argument("--height", type=int, default=512)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.set_defaults(func=cmd_render)
    return p


def _validate(args):
    for name in ("ransac_iters", "threads"):
        if getattr(args, name, 1) < 1:
            raise BadInput(f"--{name.replace('_', '-')} must be >= 1")
    if getattr(args, "min_cc", None) is not None and args.min_cc < 1:
        raise BadInput("--min-cc must be >= 1")
    for name in ("bandwidth_h", "bandwidth_v"):
        if getattr(args, name, 1.0) <= 0:
            raise BadInput(f"--{name.replace('_', '-')} must be positive")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _validate(args)
        return args.func(args)
    except BadInput as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        log.debug("internal failure", exc_info=True)
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
