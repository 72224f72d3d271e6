"""Command-line interface for the full pipeline.

Exit codes: 0 success, 1 usage error, 2 data/geometry error, 3 numeric
divergence (or gradient-check failure). Every command is deterministic
given ``--seed``; when the flag is omitted the seed comes from the
config file (training commands), then the ``CURVY_SEED`` environment
variable, then 0.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .curvygan import GanConfig, reconstruct, train_gan
from .errors import CurvyError, DivergenceError
from .geometry import (Contour, Plane, load_mesh, normalize_mesh,
                       sample_planes, sample_surface, slice_mesh, write_ply)
from .graphrep import build_graph
from .metrics import ShapeSample, section_set_from_mesh, sweep_cross_sections
from .pointae import AEConfig, train_ae
from .splitfit import (CrossSectionSet, adaptive_split, fit_cross_section,
                       max_fit_residual, upsample_midpoints)
from .tensornn import run_gradient_suite

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _k_value(text):
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError("k must be at least 2")
    return value


def _count_list(text):
    try:
        counts = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError("counts must be comma-separated integers") from exc
    if not counts or any(c < 1 for c in counts):
        raise argparse.ArgumentTypeError("counts must be positive integers")
    return counts


def _resolve_seed(flag_value, config=None):
    if flag_value is not None:
        return flag_value
    if config and "seed" in config:
        return int(config["seed"])
    env = os.environ.get("CURVY_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CurvyError(f"CURVY_SEED is not an integer: {env!r}")
    return 0


def _derived_seed(*entropy):
    return int(np.random.SeedSequence(entropy=entropy).generate_state(1)[0])


def _load_config(path):
    if path is None:
        return {}
    cfg = dataio.read_json(path)
    if not isinstance(cfg, dict):
        raise CurvyError(f"config {path} must contain a JSON object")
    return cfg


def _emit_text(text, out_path):
    if out_path is None:
        sys.stdout.write(text)
    else:
        Path(out_path).write_text(text, encoding="utf-8")


def _emit_json(payload, out_path):
    _emit_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", out_path)


# -- commands ----------------------------------------------------------------

def cmd_slice(args):
    mesh = load_mesh(args.mesh)
    seed = _resolve_seed(args.seed)
    groups = []
    for plane in sample_planes(mesh, args.planes, strategy=args.strategy,
                               axis=args.axis, seed=seed):
        contours = slice_mesh(mesh, plane)
        groups.append({
            "plane": {"normal": plane.normal.tolist(), "offset": plane.offset},
            "contours": [c.points.tolist() for c in contours],
        })
    payload = {"mesh": str(args.mesh), "strategy": args.strategy,
               "axis": args.axis, "seed": seed, "planes": groups}
    _emit_json(payload, args.out)
    return 0


def cmd_fit(args):
    data = dataio.read_json(args.contours)
    sections = []
    for i, group in enumerate(data["planes"]):
        if not group["contours"]:
            print(f"plane {i}: no contours, skipped", file=sys.stderr)
            continue
        plane = Plane(np.asarray(group["plane"]["normal"], dtype=np.float64),
                      float(group["plane"]["offset"]))
        candidates = [Contour(np.asarray(pts, dtype=np.float64), closed=True)
                      for pts in group["contours"]]
        contour = max(candidates, key=lambda c: c.length)
        if len(contour.points) < args.k + 1:
            print(f"plane {i}: contour upsampled by midpoint insertion to "
                  f"support k={args.k}", file=sys.stderr)
            contour = upsample_midpoints(contour, args.k + 1)
        splits = adaptive_split(contour, args.k)
        section = fit_cross_section(contour, splits, plane=plane)
        residual = max_fit_residual(contour, splits, section)
        print(f"plane {i}: max fit residual {residual:.6e}", file=sys.stderr)
        sections.append(section)
    if not sections:
        raise CurvyError("no usable contours in input")
    block = {"k": args.k,
             "cross_sections": [dataio.cross_section_to_dict(s)
                                for s in CrossSectionSet(sections).sections]}
    _emit_json(block, args.out)
    return 0


def _shape_class(path, mesh_dir):
    if path.parent != mesh_dir:
        return path.parent.name
    stem = path.stem
    return stem.split("_")[0] if "_" in stem else stem


def cmd_dataset(args):
    mesh_dir = Path(args.mesh_dir)
    if not mesh_dir.is_dir():
        raise CurvyError(f"mesh directory not found: {mesh_dir}")
    paths = sorted(mesh_dir.rglob("*.obj"))
    if not paths:
        raise CurvyError(f"no .obj meshes under {mesh_dir}")
    wanted = set(args.classes.split(",")) if args.classes else None
    seed = _resolve_seed(args.seed)
    entries = []
    seen = set()
    for index, path in enumerate(paths):
        label = _shape_class(path, mesh_dir)
        if wanted is not None and label not in wanted:
            continue
        shape_id = path.stem
        if shape_id in seen:
            raise CurvyError(f"duplicate shape id {shape_id!r} in mesh directory")
        seen.add(shape_id)
        mesh = normalize_mesh(load_mesh(path))
        cloud = sample_surface(mesh, args.points,
                               seed=_derived_seed(seed, index, 1))
        sections = section_set_from_mesh(mesh, args.planes_per_shape, k=args.k,
                                         seed=_derived_seed(seed, index, 2))
        entries.append({"shape_id": shape_id, "class_label": label,
                        "sections": sections, "cloud": cloud, "mesh": mesh})
    if not entries:
        raise CurvyError("no meshes matched the requested classes")
    meta = {
        "seed": seed,
        "k": args.k,
        "planes_per_shape": args.planes_per_shape,
        "points": args.points,
        "rho": args.rho,
        "classes": sorted({e["class_label"] for e in entries}),
    }
    dataio.save_dataset(args.out_dir, entries, meta)
    print(f"wrote {len(entries)} records to {args.out_dir}")
    return 0


def cmd_train_ae(args):
    config = _load_config(args.config)
    seed = _resolve_seed(args.seed, config)
    epochs = args.epochs if args.epochs is not None else int(config.get("epochs", 500))
    lr = args.lr if args.lr is not None else float(config.get("lr", 1e-3))
    entries, _ = dataio.load_dataset(args.dataset)
    clouds = [e.cloud for e in entries]
    cfg = AEConfig(
        num_points=int(config.get("num_points", len(clouds[0]))),
        embedding_dim=(args.embedding_dim if args.embedding_dim is not None
                       else int(config.get("embedding_dim", 128))),
        encoder_widths=tuple(config.get("encoder_widths", (64, 128))),
        decoder_widths=tuple(config.get("decoder_widths", (256, 512))),
    )
    ae, curve = train_ae(clouds, cfg, epochs=epochs, lr=lr, seed=seed)
    dataio.save_ae(args.out_weights, ae, seed=seed,
                   extra_config={"epochs": epochs, "lr": lr})
    final = curve[-1] if curve else float("nan")
    print(f"trained {epochs} epochs on {len(clouds)} clouds; "
          f"final mean chamfer {final:.6g}; weights at {args.out_weights}")
    return 0


def _gan_config_from(config, ae):
    cfg = {k: v for k, v in config.items()
           if k in {f.name for f in GanConfig.__dataclass_fields__.values()}}
    cfg_emb = cfg.get("embedding_dim")
    if cfg_emb is not None and int(cfg_emb) != ae.cfg.embedding_dim:
        raise CurvyError(f"config embedding_dim {cfg_emb} does not match "
                         f"autoencoder embedding {ae.cfg.embedding_dim}")
    cfg["embedding_dim"] = ae.cfg.embedding_dim
    return GanConfig(**cfg)


def cmd_train_gan(args):
    config = _load_config(args.config)
    seed = _resolve_seed(args.seed, config)
    epochs = args.epochs if args.epochs is not None else int(config.get("epochs", 200))
    lr_g = float(config.get("lr_g", 1e-3))
    lr_d = float(config.get("lr_d", 1e-3))
    ae, _ = dataio.load_ae(args.ae_weights)
    entries, _ = dataio.load_dataset(args.dataset)
    samples = [(build_graph(e.sections), e.cloud) for e in entries]
    cfg = _gan_config_from(config, ae)
    gen, disc, history = train_gan(samples, ae, cfg, epochs=epochs,
                                   lr_g=lr_g, lr_d=lr_d, seed=seed)
    dataio.save_gan(args.out_weights, gen, disc, seed=seed,
                    extra_config={"epochs": epochs, "lr_g": lr_g, "lr_d": lr_d})
    curve_path = Path(args.out_weights).with_suffix(".curve.csv")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "l_g", "l_d", "l_ch", "l_mse"])
    for epoch, row in enumerate(history):
        writer.writerow([epoch, repr(row.l_g), repr(row.l_d),
                         repr(row.l_ch), repr(row.l_mse)])
    curve_path.write_text(buf.getvalue(), encoding="utf-8")
    last = history[-1].l_g if history else float("nan")
    print(f"trained {epochs} epochs on {len(samples)} shapes; "
          f"final generator loss {last:.6g}; weights at {args.out_weights}")
    return 0


def cmd_reconstruct(args):
    gen, _, _ = dataio.load_gan(args.weights)
    ae, _ = dataio.load_ae(args.ae_weights)
    record = dataio.read_json(args.record)
    sections = dataio.section_set_from_record(record)
    seed = _resolve_seed(args.seed)
    cloud = reconstruct(gen, ae, sections, seed=seed)
    write_ply(cloud, args.out_ply,
              comments=(f"seed {seed}",
                        f"record {record.get('shape_id', Path(args.record).stem)}"))
    print(f"wrote {len(cloud)} points to {args.out_ply}")
    return 0


def cmd_eval(args):
    gen, _, _ = dataio.load_gan(args.weights)
    ae, _ = dataio.load_ae(args.ae_weights)
    entries, manifest = dataio.load_dataset(args.dataset)
    shapes = []
    for e in entries:
        if e.mesh_path is None:
            raise CurvyError(f"record {e.shape_id} has no mesh file; "
                             "re-slicing needs meshes in the dataset")
        shapes.append(ShapeSample(e.shape_id, e.class_label,
                                  load_mesh(e.mesh_path), e.cloud))
    seed = _resolve_seed(args.seed)
    k = args.k if args.k is not None else int(manifest.get("k", 8))
    report = sweep_cross_sections(gen, ae, shapes, counts=args.counts, k=k,
                                  seed=seed)
    for note in report.notes:
        print(f"note: {note}", file=sys.stderr)
    if args.out_report is None:
        sys.stdout.write(report.to_csv())
    elif str(args.out_report).endswith(".json"):
        _emit_text(report.to_json() + "\n", args.out_report)
    else:
        _emit_text(report.to_csv(), args.out_report)
    return 0


def cmd_gradcheck(args):
    worst = {}
    for repeat in range(args.repeats):
        results = run_gradient_suite(seed=args.seed_base + repeat)
        for name, err in results.items():
            worst[name] = max(worst.get(name, 0.0), err)
    failed = False
    for name in sorted(worst):
        status = "ok" if worst[name] <= args.tol else "FAIL"
        print(f"{name:24s} max rel err {worst[name]:.3e}  {status}")
        failed = failed or status == "FAIL"
    if failed:
        print(f"gradient checks exceeded tolerance {args.tol}", file=sys.stderr)
        return 3
    print(f"all {len(worst)} gradient checks within {args.tol} "
          f"({args.repeats} random instances each)")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="curvy",
                     description="Cross-section slicing, parametric fitting, "
                                 "and GAN-based point-cloud reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("slice", help="slice a mesh into planar contours")
    p.add_argument("--mesh", required=True)
    p.add_argument("--planes", type=_positive_int, required=True)
    p.add_argument("--strategy", choices=("axis", "random"), default="axis")
    p.add_argument("--axis", choices=("x", "y", "z"), default="z")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("fit", help="fit parametric pieces to sliced contours")
    p.add_argument("--contours", required=True)
    p.add_argument("--k", type=_k_value, default=8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("dataset", help="build a dataset from a mesh directory")
    p.add_argument("--mesh-dir", required=True)
    p.add_argument("--classes")
    p.add_argument("--planes-per-shape", type=_positive_int, default=10)
    p.add_argument("--k", type=_k_value, default=8)
    p.add_argument("--rho", type=float, default=64.0)
    p.add_argument("--points", type=_positive_int, default=2048)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train-ae", help="train the point-cloud autoencoder")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config")
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--lr", type=float)
    p.add_argument("--embedding-dim", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-weights", required=True)
    p.set_defaults(func=cmd_train_ae)

    p = sub.add_parser("train-gan", help="train the graph-conditioned GAN")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ae-weights", required=True)
    p.add_argument("--config")
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-weights", required=True)
    p.set_defaults(func=cmd_train_gan)

    p = sub.add_parser("reconstruct", help="reconstruct a cloud from a record")
    p.add_argument("--weights", required=True)
    p.add_argument("--ae-weights", required=True)
    p.add_argument("--record", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-ply", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="sweep cross-section counts and report")
    p.add_argument("--weights", required=True)
    p.add_argument("--ae-weights", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--counts", type=_count_list,
                   default=[2, 5, 10, 11, 15, 20, 25])
    p.add_argument("--k", type=_k_value)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="run the full gradient-check suite")
    p.add_argument("--repeats", type=_positive_int, default=3)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--seed-base", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}" + (f" (epoch {exc.epoch})" if exc.epoch is not None else ""),
              file=sys.stderr)
        return 3
    except (CurvyError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
