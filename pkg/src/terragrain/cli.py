"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import clustering, encoder, mapping, metrics, segmentation, synthgen, trainer
from .config import ConfigError, RunConfig, load_config, parse_config
from .dataset_io import PALETTE, Dataset, read_pnm, write_image
from .errors import DataError, NumericError

log = logging.getLogger("terragrain")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --------------------------------------------------------------------------
# artifact locations


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _labels_dir(cfg: RunConfig) -> Path:
    d = _out(cfg) / "labels"
    d.mkdir(exist_ok=True)
    return d


def _label_path(directory: Path, frame_id: int, ext: str = "pgm") -> Path:
    return directory / f"label_{frame_id:05d}.{ext}"


def _train_dataset(cfg: RunConfig) -> Dataset:
    if not cfg.train_manifest:
        raise DataError("no training manifest (set train_manifest or pass --manifest)")
    return Dataset.open(cfg.train_manifest)


# --------------------------------------------------------------------------
# stages


def stage_train(cfg: RunConfig, model_path: Path | None = None):
    data = _train_dataset(cfg)
    tc = cfg.train_config()
    log.info("training on %s: %d frames, %d steps", data.name, len(data.training_frames()), tc.steps)
    params, report = trainer.train(
        data, tc, progress=lambda s, l: log.info("step %d  loss %.4f", s, l))
    out = _out(cfg)
    encoder.save_params(params, model_path or out / "model.txt")
    report.write_csv(out / "loss.csv")
    return params


def stage_cluster(cfg: RunConfig, params, centroids_path: Path | None = None):
    data = _train_dataset(cfg)
    z = trainer.embed_training_anchors(params, data, cfg.train_config())
    model = clustering.fit_kmeans(z, cfg.K, seed=cfg.seed, max_iters=cfg.kmeans_max_iters)
    log.info("k-means K=%d on %d anchors: inertia %.6g after %d iterations",
             cfg.K, len(z), model.inertia, len(model.history))
    clustering.save_clusters(model, centroids_path or _out(cfg) / "centroids.txt")
    return model


def stage_segment(cfg: RunConfig, params, clusters, frame_ids=None) -> list[int]:
    data = _train_dataset(cfg)
    ids = [f.frame_id for f in data.manifest.frames] if frame_ids is None else frame_ids
    sc = cfg.segmentation_config()
    target = _labels_dir(cfg)
    for fid in ids:
        lm = segmentation.segment_frame(data.image(fid), params, clusters, sc)
        write_image(lm, _label_path(target, fid, "pgm"))
        write_image(lm, _label_path(target, fid, "ppm"), palette=PALETTE)
        log.info("segmented frame %d", fid)
    return ids


def stage_map(cfg: RunConfig, labels_dir: Path | None = None, num_labels: int | None = None):
    data = _train_dataset(cfg)
    src = labels_dir or _out(cfg) / "labels"
    grid = mapping.SemanticGrid(cfg.grid_spec(), num_labels or cfg.K)
    camera = cfg.camera()
    used = 0
    for rec in data.manifest.frames:
        path = _label_path(src, rec.frame_id)
        if not path.is_file():
            continue
        labels = read_pnm(path)
        if labels.ndim != 2:
            raise DataError(f"{path}: expected a P5 label map")
        mapping.integrate_frame(grid, labels, camera, data.pose(rec.frame_id), cfg.range_gate)
        used += 1
    if not used:
        raise DataError(f"no label maps found in {src}")
    summary = mapping.finalize(grid)
    out = _out(cfg)
    mapping.write_grid_csv(summary, out / "grid.csv")
    lab_img, conf_img = mapping.render_grid(summary, grid.spec)
    write_image(lab_img, out / "grid_labels.ppm", palette=PALETTE)
    write_image(conf_img, out / "grid_confidence.pgm")
    log.info("grid: %d frames, %d cells, %d votes (%d dropped)",
             used, len(summary.labels), grid.projected, grid.dropped)
    return summary


def stage_eval(cfg: RunConfig, params):
    train_set = _train_dataset(cfg)
    tests = [Dataset.open(p) for p in cfg.test_manifests] or [train_set]
    report = metrics.cross_scene_eval(train_set, tests, cfg.train_config(), cfg.k_values(),
                                      params=params)
    report.write_csv(_out(cfg) / "eval.csv")
    for row in report.rows:
        log.info("%s -> %s  K=%d  mean R %.4f over %d frames",
                 row.train_subset, row.test_subset, row.k, row.mean_r, row.frames_evaluated)
    return report


# --------------------------------------------------------------------------
# argument handling


def _config_from(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.set:
        cfg = parse_config("\n".join(args.set), "--set", base=cfg)
    if getattr(args, "manifest", None):
        cfg.train_manifest = args.manifest
    if getattr(args, "test", None):
        cfg.test_manifests = list(args.test)
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    return cfg


def _model(args, cfg: RunConfig):
    return encoder.load_params(args.model or Path(cfg.output_dir) / "model.txt")


def _clusters(args, cfg: RunConfig):
    return clustering.load_clusters(args.centroids or Path(cfg.output_dir) / "centroids.txt")


def cmd_synth(args) -> None:
    spec = synthgen.SceneSpec(seed=args.seed, width=args.width, height=args.height,
                              num_region_types=args.types, frames=args.frames, layout=args.layout,
                              illumination=args.illumination, bands_per_type=args.bands_per_type)
    path = synthgen.write_dataset(args.out, spec, args.name or f"{args.layout}{args.seed}",
                                  anchors_per_frame=args.anchors_per_frame,
                                  patch_size=args.patch_size, train_count=args.train_count)
    print(path)


def cmd_print_config(args) -> None:
    sys.stdout.write(_config_from(args).render())


def cmd_train(args) -> None:
    stage_train(_config_from(args), Path(args.model) if args.model else None)


def cmd_cluster(args) -> None:
    cfg = _config_from(args)
    stage_cluster(cfg, _model(args, cfg), Path(args.centroids_out) if args.centroids_out else None)


def cmd_segment(args) -> None:
    cfg = _config_from(args)
    ids = [int(t) for t in args.frames.split(",")] if args.frames else None
    stage_segment(cfg, _model(args, cfg), _clusters(args, cfg), ids)


def cmd_map(args) -> None:
    cfg = _config_from(args)
    stage_map(cfg, Path(args.labels) if args.labels else None)


def cmd_eval(args) -> None:
    cfg = _config_from(args)
    stage_eval(cfg, _model(args, cfg))


def cmd_pipeline(args) -> None:
    cfg = _config_from(args)
    params = stage_train(cfg)
    clusters = stage_cluster(cfg, params)
    stage_segment(cfg, params, clusters)
    stage_map(cfg, num_labels=clusters.k)
    stage_eval(cfg, params)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="terragrain", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def stage(name, func, help, manifest=True):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        if manifest:
            sp.add_argument("--manifest", help="training dataset manifest")
        sp.set_defaults(func=func)
        return sp

    sp = sub.add_parser("synth", help="write a synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--layout", choices=("bands", "voronoi"), default="bands")
    sp.add_argument("--types", type=int, default=4)
    sp.add_argument("--frames", type=int, default=30)
    sp.add_argument("--width", type=int, default=640)
    sp.add_argument("--height", type=int, default=480)
    sp.add_argument("--illumination", type=float, default=0.0)
    sp.add_argument("--bands-per-type", type=int, default=1)
    sp.add_argument("--anchors-per-frame", type=int, default=20)
    sp.add_argument("--patch-size", type=int, default=64)
    sp.add_argument("--train-count", type=int, default=10)
    sp.add_argument("--name")
    sp.set_defaults(func=cmd_synth)

    stage("print-config", cmd_print_config, "print the effective configuration", manifest=False)
    sp = stage("train", cmd_train, "train the encoder")
    sp.add_argument("--model", help="model output path")
    sp = stage("cluster", cmd_cluster, "fit prototypes on training-anchor embeddings")
    sp.add_argument("--model")
    sp.add_argument("--centroids-out")
    sp = stage("segment", cmd_segment, "segment frames into label maps")
    sp.add_argument("--model")
    sp.add_argument("--centroids")
    sp.add_argument("--frames", help="comma-separated frame ids (default: all)")
    sp = stage("map", cmd_map, "fuse label maps into a semantic grid")
    sp.add_argument("--labels", help="directory of label_NNNNN.pgm files")
    sp = stage("eval", cmd_eval, "anchor accuracy on held-out frames")
    sp.add_argument("--model")
    sp.add_argument("--test", action="append", help="test manifest (repeatable)")
    sp = stage("pipeline", cmd_pipeline, "train, cluster, segment, map and evaluate")
    sp.add_argument("--test", action="append", help="test manifest (repeatable)")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("terragrain: error: missing subcommand")
    except UsageError as exc:
        if "missing subcommand" in str(exc):
            parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())
