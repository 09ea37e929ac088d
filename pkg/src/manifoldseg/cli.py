"""Command-line interface.

Subcommands: fit-maps, embed, cluster, pipeline, phantom, eval. Exit codes:
0 success, 1 input error, 2 numeric failure (for example a disconnected
neighbor graph when bridging is disabled). Diagnostics go to stderr.
MANIFOLD_SEG_THREADS caps worker threads (0 = auto).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import consensus as cc
from . import evalstats as es
from . import io_formats as iof
from . import manifest as mn
from . import manifold as mf
from . import param_maps as pm
from . import pipeline as pl
from .errors import (
    DegenerateFit,
    DisconnectedGraph,
    ManifoldSegError,
    NoClusters,
    SigmaNonPositive,
    ZeroVariance,
)
from .volume import AcquisitionSeries, LabelMap, ParametricVolume, TissueClass

NUMERIC_ERRORS = (DisconnectedGraph, DegenerateFit, ZeroVariance,
                  SigmaNonPositive, NoClusters)


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="manifoldseg", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("fit-maps", help="fit ADC or T2 maps from a frame series")
    p.add_argument("--series", required=True, help="CSV manifest with path,control rows")
    p.add_argument("--kind", required=True, choices=("adc", "t2"))
    p.add_argument("--mask", default=None, help="MPV mask volume (nonzero = inside)")
    p.add_argument("-o", "--output", required=True, help="output MPV path")

    p = sub.add_parser("embed", help="embed an MPV study into low dimensions")
    p.add_argument("--input", required=True, help="multi-channel MPV of parameter maps")
    p.add_argument("--mask", default=None)
    p.add_argument("--method", default="isomap", choices=("isomap", "lle", "diffusion"))
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--sigma", type=float, default=80.0)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--m", type=int, default=2000, help="landmark count")
    p.add_argument("--normalize", default="zscore", choices=("zscore", "minmax", "none"))
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--largest-component", action="store_true")
    p.add_argument("-o", "--outdir", required=True)

    p = sub.add_parser("cluster", help="consensus-cluster an embedding CSV")
    p.add_argument("--embedding", required=True)
    p.add_argument("--k1", type=int, default=3)
    p.add_argument("--k2", type=int, default=13)
    p.add_argument("--h", type=int, default=10)
    p.add_argument("--t", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("-o", "--output", required=True, help="labels CSV path")

    p = sub.add_parser("pipeline", help="full segmentation from a study manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--force", action="store_true", help="skip parameter range checks")
    p.add_argument("--largest-component", action="store_true",
                   help="on a disconnected graph keep the largest component "
                        "instead of bridging")
    p.add_argument("--seed", type=int, default=None, help="override manifest seed")
    p.add_argument("-o", "--outdir", required=True)

    p = sub.add_parser("phantom", help="write a synthetic study with ground truth")
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("-o", "--outdir", required=True)

    p = sub.add_parser("eval", help="correlations or label-map agreement")
    p.add_argument("--table", default=None, help="lesion CSV path, or 'table1'/'table2'")
    p.add_argument("--group", default=None)
    p.add_argument("--x", dest="col_x", default=None)
    p.add_argument("--y", dest="col_y", default=None)
    p.add_argument("--method", default="pearson", choices=("pearson", "spearman"))
    p.add_argument("--pred", default=None, help="predicted labels CSV")
    p.add_argument("--truth", default=None, help="ground-truth labels CSV")
    return parser


def _read_series(path) -> AcquisitionSeries:
    frames, controls = [], []
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["path", "control"]:
            raise ManifoldSegError(f"{path}: expected header path,control")
        base = os.path.dirname(os.path.abspath(path))
        for rec in reader:
            if not rec or not rec[0]:
                continue
            vols = iof.read_mpv(os.path.join(base, rec[0]))
            frames.append(vols[0])
            controls.append(float(rec[1]))
    return AcquisitionSeries(frames=frames, control_values=controls)


def _read_mask(path) -> LabelMap | None:
    if path is None:
        return None
    vol = iof.read_mpv(path)[0]
    return LabelMap.from_mask(vol.values != 0, spacing=vol.spacing)


def _cmd_fit_maps(args) -> int:
    series = _read_series(args.series)
    mask = _read_mask(args.mask)
    fit = pm.compute_adc_map if args.kind == "adc" else pm.compute_t2_map
    iof.write_mpv(args.output, [fit(series, mask)])
    print(f"wrote {args.output}")
    return 0


def _cmd_embed(args) -> int:
    volumes = iof.read_mpv(args.input)
    names = [v.name.split("[")[0] for v in volumes]
    study_channels = dict(zip(names, volumes))
    mask = _read_mask(args.mask)
    if mask is not None:
        inside = mask.inside()
    else:
        first = volumes[0]
        inside = np.ones((first.height, first.width), dtype=bool)
    ys, xs = np.nonzero(inside)
    features = mf.FeatureMatrix(
        data=np.stack([v.values[ys, xs] for v in volumes], axis=1),
        voxel_index=np.stack([xs, ys], axis=1),
        channel_names=names,
    )
    config = pl.PipelineConfig(
        method=args.method, k=args.k, sigma=args.sigma, d=args.d,
        landmarks=args.m, normalize=args.normalize, seed=args.seed,
        on_disconnected="largest" if args.largest_component else "bridge",
    )
    normed, _ = pl.normalize_features(features, config.normalize)
    emb = pl.run_embedding(normed, config)
    os.makedirs(args.outdir, exist_ok=True)
    iof.write_embedding_csv(os.path.join(args.outdir, "embedding.csv"),
                            emb, features.voxel_index)
    first = volumes[0]
    img = pl.render_embedded_image(emb, features.voxel_index,
                                   (first.width, first.height))
    iof.write_ppm(os.path.join(args.outdir, "embedded.ppm"), img)
    print(f"wrote {args.outdir}/embedding.csv and embedded.ppm")
    return 0


def _cmd_cluster(args) -> int:
    voxel_index, coords = iof.read_embedding_csv(args.embedding)
    result = cc.consensus_cluster(coords, k1=args.k1, k2=args.k2,
                                  H=args.h, t=args.t, seed=args.seed)
    lines = ["x,y,label"]
    for (x, y), label in zip(voxel_index, result.labels):
        lines.append(f"{x},{y},{label}")
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.output} ({result.cluster_count} clusters)")
    return 0


def _cmd_pipeline(args) -> int:
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = mn.parse_manifest(fh.read(), force=args.force)
    base = os.path.dirname(os.path.abspath(args.manifest))
    study = mn.load_study(manifest, base_dir=base)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = manifest.to_config(**overrides)
    if args.largest_component:
        config.on_disconnected = "largest"
    result = pl.run_pipeline(study, config)

    os.makedirs(args.outdir, exist_ok=True)
    iof.write_labels_csv(os.path.join(args.outdir, "labels.csv"), result.labelmap)
    iof.write_report_csv(os.path.join(args.outdir, "report.csv"),
                         result.report, study.channel_names)
    img = pl.render_embedded_image(
        result.embedding, result.features.voxel_index,
        (study.width, study.height),
    )
    iof.write_ppm(os.path.join(args.outdir, "embedded.ppm"), img)

    xs = result.features.voxel_index[:, 0]
    ys = result.features.voxel_index[:, 1]
    labels = result.labelmap.labels[ys, xs]
    tissue = result.labelmap.tissue_class[ys, xs]
    records, raster = pl.export_scattergram(result.embedding, labels, tissue)
    iof.write_scattergram_csv(os.path.join(args.outdir, "scattergram.csv"), records)
    iof.write_ppm(os.path.join(args.outdir, "scattergram.ppm"), raster)

    for entry in result.report.classes:
        print(f"{entry.tissue.label}: {entry.voxel_count} voxels, "
              f"{entry.area_mm2:.2f} mm^2")
    print(f"wrote labels.csv, report.csv, embedded.ppm, scattergram.csv, "
          f"scattergram.ppm in {args.outdir}")
    return 0


def _cmd_phantom(args) -> int:
    spec = es.PhantomSpec(dims=(args.size, args.size), noise=args.noise)
    study, truth = es.generate_phantom(spec, seed=args.seed)
    os.makedirs(args.outdir, exist_ok=True)
    iof.write_mpv(os.path.join(args.outdir, "study.mpv"),
                  [study.volumes[n] for n in study.channel_names])
    mask_vol = study.mask
    mask_values = (mask_vol.labels >= 0).astype(float)
    iof.write_mpv(os.path.join(args.outdir, "mask.mpv"), [
        ParametricVolume(name="mask", width=truth.width, height=truth.height,
                         spacing=truth.spacing, values=mask_values)
    ])
    iof.write_labels_csv(os.path.join(args.outdir, "truth.csv"), truth)
    manifest = mn.StudyManifest(
        channels={n: "study.mpv" for n in study.channel_names},
        mask="mask.mpv",
        perfusion_polarity="cbf",
        params={name: spec_def[1] for name, spec_def in mn._RANGES.items()},
    )
    with open(os.path.join(args.outdir, "manifest.json"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(mn.serialize_manifest(manifest))
    print(f"wrote study.mpv, mask.mpv, truth.csv, manifest.json in {args.outdir}")
    return 0


def _cmd_eval(args) -> int:
    if args.table is not None:
        if not (args.group and args.col_x and args.col_y):
            raise ManifoldSegError("eval --table needs --group, --x and --y")
        table = es.load_lesion_table(args.table)
        r, n = es.table_correlations(table, args.group, args.col_x,
                                     args.col_y, args.method)
        print("group,x,y,method,r,n")
        print(f"{args.group},{args.col_x},{args.col_y},{args.method},"
              f"{r:.6f},{n}")
        return 0
    if args.pred is not None and args.truth is not None:
        truth = iof.read_labels_csv(args.truth)
        pred = iof.read_labels_csv(args.pred, width=truth.width,
                                   height=truth.height)
        print("metric,class,value")
        for tissue in (TissueClass.NORMAL, TissueClass.AT_RISK,
                       TissueClass.INFARCTED):
            d = es.dice(pred.class_mask(tissue), truth.class_mask(tissue))
            print(f"dice,{tissue.label},{d:.6f}")
        both = truth.inside() & pred.inside()
        a = es.adjusted_rand_index(pred.labels[both], truth.labels[both])
        print(f"ari,all,{a:.6f}")
        return 0
    raise ManifoldSegError("eval needs either --table or --pred/--truth")


_COMMANDS = {
    "fit-maps": _cmd_fit_maps,
    "embed": _cmd_embed,
    "cluster": _cmd_cluster,
    "pipeline": _cmd_pipeline,
    "phantom": _cmd_phantom,
    "eval": _cmd_eval,
}


def run_command(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (ManifoldSegError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
