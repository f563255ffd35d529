"""Command line front end: ``segment``, ``detect``, ``synth`` and ``eval``.

Exit codes: 0 success, 1 I/O or format error, 2 ran but left clusters
unresolved.  Reports are JSON with sorted keys and floats rounded to six
significant digits, so the same input and flags give the same bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .cutline import SeparatorConfig, VamdConfig, separate_all
from .detect import DetectConfig, detect_clusters
from .raster import (BinaryImage, GrayImage, NetpbmError, decode_image,
                     decode_label_map, encode_label_map, encode_pbm, extract_regions,
                     label_components, otsu_threshold)
from .synth import SceneTruth, aggregate, evaluate, evaluate_label_map, gen_scene

EXIT_OK, EXIT_ERROR, EXIT_UNRESOLVED = 0, 1, 2

SCENARIOS = ("singles", "touch", "partial_overlap", "end_touch", "cross", "chain3",
             "chain4", "mixed", "benchmark")


class CliError(Exception):
    pass


# -- report helpers -------------------------------------------------------

def _round(x):
    """Six significant digits; integers and non-floats pass through."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        return float(f"{x:.6g}")
    if isinstance(x, dict):
        return {str(k): _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    return x


def dump_json(doc) -> str:
    return json.dumps(_round(doc), indent=1, sort_keys=True) + "\n"


def _offsets(text: str) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad offsets {text!r}, expected e.g. 4,5")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("offsets must be positive integers")
    return vals


def _auto_or_float(text: str):
    return "auto" if text == "auto" else float(text)


def _auto_or_int(text: str):
    return None if text == "auto" else int(text)


def build_configs(args):
    """DetectConfig and SeparatorConfig from parsed flags."""
    try:
        detect_cfg = DetectConfig(ellipse_threshold=args.ellipse_threshold,
                                  hull_threshold=args.hull_threshold,
                                  endpoint_limit=args.endpoint_limit)
        vamd = VamdConfig(estimator=args.estimator, offsets=args.offsets, lambda1=args.lambda1)
        sep_cfg = SeparatorConfig(lam=args.lam, min_arc_sep=args.min_arc_sep,
                                  max_cuts=args.max_cuts, min_cut_depth=args.min_cut_depth,
                                  min_concavity=args.min_concavity,
                                  max_cut_factor=args.max_cut_factor,
                                  min_part_fraction=args.min_part_fraction,
                                  align_points=not args.no_align, vamd=vamd)
    except ValueError as exc:
        raise CliError(str(exc))
    return detect_cfg, sep_cfg


def config_snapshot(args) -> dict:
    return {
        "lambda": args.lam,
        "lambda1": args.lambda1,
        "offsets": list(args.offsets),
        "estimator": args.estimator,
        "ellipse_threshold": args.ellipse_threshold,
        "hull_threshold": args.hull_threshold,
        "endpoint_limit": args.endpoint_limit,
        "min_arc_sep": "auto" if args.min_arc_sep is None else args.min_arc_sep,
        "max_cuts": args.max_cuts,
        "min_cut_depth": args.min_cut_depth,
        "min_concavity": args.min_concavity,
        "max_cut_factor": args.max_cut_factor,
        "min_part_fraction": args.min_part_fraction,
        "align_points": not args.no_align,
        "connectivity": args.connectivity,
        "polarity": args.polarity,
    }


# -- pipeline -------------------------------------------------------------

def load_binary(path: Path, polarity: str):
    """Read a PBM/PGM and return ``(BinaryImage, raw bytes, kind)``."""
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}")
    try:
        img = decode_image(data)
    except NetpbmError as exc:
        raise CliError(f"{path}: {exc}")
    if isinstance(img, GrayImage):
        try:
            return otsu_threshold(img, polarity), data, "gray"
        except ValueError as exc:
            raise CliError(f"{path}: {exc}")
    return img, data, "binary"


def _tree_summary(tree, first_label: int) -> dict:
    nodes = []

    def walk(node, path):
        entry = {"path": path, "pixels": node.region.size, "status": node.status}
        if node.status == "split":
            entry["cut"] = [list(node.cut[0]), list(node.cut[1])]
            entry["costs"] = list(node.costs)
            entry["fragmented"] = node.fragmented
        if node.status == "unresolved":
            entry["stage"] = node.stage
            entry["error"] = node.error
        nodes.append(entry)
        for i, child in enumerate(node.children):
            walk(child, path + str(i))

    walk(tree.root, "")
    n_leaves = len(tree.leaves)
    return {
        "label": tree.label,
        "status": "resolved" if tree.resolved else "unresolved",
        "cuts": tree.n_cuts,
        "leaves": n_leaves,
        "depth": tree.root.depth(),
        "output_labels": list(range(first_label, first_label + n_leaves)),
        "nodes": nodes,
    }


def _region_entry(rep) -> dict:
    return {
        "label": rep.label,
        "ellipse_ratio": rep.ellipse_ratio,
        "hull_ratio": rep.hull_ratio,
        "endpoint_count": rep.endpoint_count,
        "is_cluster": rep.is_cluster,
        "eliminated_by": rep.eliminated_by,
    }


def run_pipeline(path: Path, args, separate: bool = True):
    """Run one image through the pipeline; returns ``(report, label map or None, code)``."""
    detect_cfg, sep_cfg = build_configs(args)
    timing = {}
    t = time.perf_counter()
    img, data, kind = load_binary(path, args.polarity)
    timing["read"] = time.perf_counter() - t

    t = time.perf_counter()
    components = label_components(img, connectivity=args.connectivity)
    regions = extract_regions(components)
    timing["label"] = time.perf_counter() - t

    t = time.perf_counter()
    reports, thresholds = detect_clusters(regions, detect_cfg, return_thresholds=True)
    timing["detect"] = time.perf_counter() - t

    report = {
        "format": "chromoseg-report",
        "version": 1,
        "tool_version": __version__,
        "input": {"path": str(path), "sha256": hashlib.sha256(data).hexdigest(),
                  "kind": kind, "width": img.width, "height": img.height},
        "config": config_snapshot(args),
        "thresholds": {"hull": thresholds.hull, "ellipse": thresholds.ellipse,
                       "source": thresholds.source},
        "regions": [_region_entry(r) for r in reports],
    }
    flagged = sum(r.is_cluster for r in reports)
    totals = {"regions": len(regions), "clusters_flagged": flagged}

    label_map, code = None, EXIT_OK
    if separate:
        t = time.perf_counter()
        result = separate_all(regions, detect_cfg, sep_cfg, shape=(img.height, img.width),
                              reports=reports, thresholds=thresholds)
        timing["separate"] = time.perf_counter() - t
        label_map = result.label_map
        clusters, next_label = [], 1
        for tree in result.forest:
            if tree.flagged:
                clusters.append(_tree_summary(tree, next_label))
            next_label += len(tree.leaves)
        resolved = sum(c["status"] == "resolved" for c in clusters)
        report["clusters"] = clusters
        totals.update(clusters_resolved=resolved, clusters_unresolved=flagged - resolved,
                      cuts=sum(c["cuts"] for c in clusters), output_labels=label_map.count)
        if resolved < flagged:
            code = EXIT_UNRESOLVED
    report["totals"] = totals
    if getattr(args, "timing", False):
        report["timing"] = timing
    return report, label_map, code


# -- subcommands ----------------------------------------------------------

def _outputs(args, path: Path, many: bool, suffix: str, explicit):
    if explicit is not None and not many:
        return Path(explicit)
    base = Path(args.out_dir) if getattr(args, "out_dir", None) else path.parent
    return base / (path.stem + suffix)


def _segment_one(path: Path, args, many: bool) -> int:
    report, label_map, code = run_pipeline(path, args, separate=True)
    out = _outputs(args, path, many, ".labels.pgm", args.output)
    rep = _outputs(args, path, many, ".report.json", args.report)
    try:
        payload = encode_label_map(label_map, plain=args.plain)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}")
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(payload)
        rep.parent.mkdir(parents=True, exist_ok=True)
        rep.write_text(dump_json(report))
    except OSError as exc:
        raise CliError(f"cannot write output: {exc}")
    t = report["totals"]
    print(f"{path}: {t['regions']} regions, {t['clusters_flagged']} flagged, "
          f"{t['clusters_resolved']} resolved, {t['output_labels']} labels -> {out}")
    return code


def _detect_one(path: Path, args, many: bool) -> int:
    report, _, _ = run_pipeline(path, args, separate=False)
    text = dump_json(report)
    if args.report is None and not getattr(args, "out_dir", None):
        sys.stdout.write(text)
        return EXIT_OK
    rep = _outputs(args, path, many, ".detect.json", args.report)
    try:
        rep.parent.mkdir(parents=True, exist_ok=True)
        rep.write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write output: {exc}")
    return EXIT_OK


def _guarded(fn, path, args, many):
    try:
        return fn(path, args, many), None
    except CliError as exc:
        return EXIT_ERROR, str(exc)


def _combine(codes) -> int:
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_UNRESOLVED if EXIT_UNRESOLVED in codes else EXIT_OK


def _run_files(fn, args) -> int:
    paths = [Path(p) for p in args.inputs]
    many = len(paths) > 1
    if many and (getattr(args, "output", None) or args.report):
        print("error: --output/--report need a single input; use --out-dir", file=sys.stderr)
        return EXIT_ERROR
    if args.jobs > 1 and many:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_guarded, [fn] * len(paths), paths,
                                    [args] * len(paths), [many] * len(paths)))
    else:
        results = [_guarded(fn, p, args, many) for p in paths]
    for _, err in results:
        if err:
            print(f"error: {err}", file=sys.stderr)
    return _combine([c for c, _ in results])


def cmd_segment(args) -> int:
    return _run_files(_segment_one, args)


def cmd_detect(args) -> int:
    return _run_files(_detect_one, args)


def _scene_specs(scenario: str, rng: np.random.Generator, singles: int):
    if scenario == "singles":
        return singles, []
    if scenario in ("touch", "partial_overlap", "end_touch", "cross"):
        return singles, [scenario]
    if scenario.startswith("chain"):
        return singles, [("chain", int(scenario[5:]))]
    if scenario == "benchmark":
        return 36, ["touch"] * 4 + ["partial_overlap"] * 3 + ["end_touch"] * 2 + ["cross"]
    # mixed: 40-46 objects with 2-5 clusters
    k = int(rng.integers(2, 6))
    kinds = [str(v) for v in rng.choice(("touch", "partial_overlap", "end_touch", "cross", "chain3"), k)]
    return int(rng.integers(40, 47)) - k, kinds


def make_scene(scenario: str, seed: int, singles: int) -> SceneTruth:
    rng = np.random.default_rng(seed)
    n_singles, specs = _scene_specs(scenario, rng, singles)
    return gen_scene(seed, n_singles, specs)


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for i in range(args.count):
            seed = args.seed + i
            truth = make_scene(args.scenario, seed, args.singles)
            stem = f"{args.scenario}_{seed:06d}"
            (out / f"{stem}.pbm").write_bytes(encode_pbm(truth.image, plain=args.plain))
            (out / f"{stem}.truth.json").write_text(truth.to_json())
    except OSError as exc:
        print(f"error: cannot write to {out}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"wrote {args.count} scene(s) to {out}")
    return EXIT_OK


def _truth_pairs(truth_dir: Path, other_dir: Path, suffix: str):
    truths = sorted(truth_dir.glob("*.truth.json"))
    if not truths:
        raise CliError("no scenes")
    pairs = []
    for t in truths:
        stem = t.name[: -len(".truth.json")]
        other = other_dir / (stem + suffix)
        if not other.exists():
            raise CliError(f"no {suffix} file for scene {stem}")
        pairs.append((stem, t, other))
    return pairs


def _eval_one(stem, truth_path, other, args):
    truth_text = truth_path.read_text()
    if args.predictions:
        labels = decode_label_map(other.read_bytes())
        truth = SceneTruth.from_json(truth_text)
        if labels.labels.shape != truth.image.pixels.shape:
            raise CliError(f"{stem}: prediction size does not match truth")
        flagged = None
        rep_path = other.with_name(stem + ".report.json")
        if rep_path.exists():
            doc = json.loads(rep_path.read_text())
            flagged = [r["label"] for r in doc.get("regions", []) if r["is_cluster"]]
        return evaluate_label_map(labels, truth, args.iou, flagged)
    img, _, _ = load_binary(other, args.polarity)
    truth = SceneTruth.from_json(truth_text, image=img if isinstance(img, BinaryImage) else None)
    if img.pixels.shape != truth.image.pixels.shape or not np.array_equal(img.pixels, truth.image.pixels):
        raise CliError(f"{stem}: image does not match its truth file")
    detect_cfg, sep_cfg = build_configs(args)
    regions = extract_regions(label_components(img, connectivity=args.connectivity))
    result = separate_all(regions, detect_cfg, sep_cfg, shape=img.pixels.shape)
    return evaluate(result, truth, args.iou)


def cmd_eval(args) -> int:
    truth_dir = Path(args.truth_dir)
    if args.predictions:
        other_dir, suffix = Path(args.predictions), ".labels.pgm"
    else:
        other_dir, suffix = Path(args.images or args.truth_dir), ".pbm"
    try:
        pairs = _truth_pairs(truth_dir, other_dir, suffix)
        results = []
        for stem, t, o in pairs:
            try:
                r = _eval_one(stem, t, o, args)
            except (NetpbmError, ValueError, KeyError) as exc:
                raise CliError(f"{stem}: {exc}")
            results.append((stem, r))
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    agg = aggregate(r for _, r in results)
    print(f"scenes: {len(results)}  clusters: {agg.n_clusters}")
    print(f"detection precision: {agg.precision:.4f}  recall: {agg.recall:.4f}")
    print(f"separation success: {agg.n_success}/{agg.n_clusters} = {agg.success_rate:.4f}")
    if args.out:
        doc = {"format": "chromoseg-eval", "version": 1, "config": config_snapshot(args),
               "summary": {k: v for k, v in agg.as_dict().items() if k != "matches"},
               "scenes": [{"scene": s, **r.as_dict()} for s, r in results]}
        try:
            Path(args.out).write_text(dump_json(doc))
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc.strerror or exc}", file=sys.stderr)
            return EXIT_ERROR
    return EXIT_OK


# -- argument parsing -------------------------------------------------------

def _add_pipeline_flags(p):
    g = p.add_argument_group("pipeline")
    g.add_argument("--lambda", dest="lam", type=float, default=1000.0,
                   help="weight of the direction change in the cross-point cost (default 1000)")
    g.add_argument("--lambda1", type=float, default=1.0,
                   help="candidate filter: keep direction change >= lambda1 * mean (default 1.0)")
    g.add_argument("--offsets", type=_offsets, default=(4, 5),
                   help="forward chord offsets of the direction estimate (default 4,5)")
    g.add_argument("--estimator", choices=("fixed_offsets", "weighted"), default="fixed_offsets")
    g.add_argument("--ellipse-threshold", type=_auto_or_float, default="auto")
    g.add_argument("--hull-threshold", type=_auto_or_float, default="auto")
    g.add_argument("--endpoint-limit", type=int, default=2)
    g.add_argument("--min-arc-sep", type=_auto_or_int, default=None,
                   help="minimum boundary steps between cut endpoints (default auto: max(5, n/20))")
    g.add_argument("--max-cuts", type=int, default=10)
    g.add_argument("--min-cut-depth", type=float, default=2.0)
    g.add_argument("--min-concavity", type=float, default=0.5)
    g.add_argument("--max-cut-factor", type=float, default=1.5)
    g.add_argument("--min-part-fraction", type=float, default=0.04)
    g.add_argument("--no-align", action="store_true",
                   help="cut at the candidate pixel itself instead of where its turning is measured")
    g.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    g.add_argument("--polarity", choices=("auto", "bright", "dark"), default="auto",
                   help="foreground polarity when thresholding grayscale input")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chromoseg",
                                     description="Detect and separate touching chromosomes in binary images.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="detect clusters, cut them, write a label map and report")
    p.add_argument("inputs", nargs="+", help="PBM or PGM images")
    p.add_argument("-o", "--output", help="label map path (single input)")
    p.add_argument("--report", help="report path (single input)")
    p.add_argument("--out-dir", help="directory for <stem>.labels.pgm and <stem>.report.json")
    p.add_argument("--plain", action="store_true", help="write ASCII P2 instead of P5")
    p.add_argument("--timing", action="store_true", help="add per-stage timing to the report")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="accepted for symmetry; the pipeline is deterministic")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("detect", help="run the detection criteria only and print the report")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--report", help="report path (single input); default stdout")
    p.add_argument("--out-dir")
    p.add_argument("--timing", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="write synthetic scenes with ground truth")
    p.add_argument("--scenario", choices=SCENARIOS, default="touch")
    p.add_argument("--seed", type=int, default=0, help="seed of the first scene; scene i uses seed + i")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--singles", type=int, default=20, help="single chromosomes per scene")
    p.add_argument("--plain", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score segmentations against truth files")
    p.add_argument("--truth-dir", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--predictions", help="directory of <stem>.labels.pgm files")
    src.add_argument("--rerun", action="store_true", help="segment the scene images again")
    p.add_argument("--images", help="directory of <stem>.pbm files for --rerun (default: truth dir)")
    p.add_argument("--iou", type=float, default=0.7)
    p.add_argument("--out", help="write the full evaluation as JSON")
    p.add_argument("--seed", type=int, default=0)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    if hasattr(args, "lam"):
        try:
            build_configs(args)
        except CliError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
