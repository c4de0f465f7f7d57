"""Command-line surface: PD computation, vectorization, dataset generation,
training, evaluation, and SVG plotting.

Every command prints its resolved configuration and is byte-reproducible
given identical inputs, flags, and seed (no timestamps in any artifact).
Exit codes: 0 success, 1 per-file failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import diagram as dg
from . import grid as gridmod
from . import model as modelmod
from . import pipeline, vectorize
from .cubical import grid_persistence

THREADS_ENV = "TOPOGATE_THREADS"


def _print_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print("config:", json.dumps(resolved, default=str, sort_keys=True))


def _load_image(path: str) -> np.ndarray:
    if path.endswith(".csv"):
        return gridmod.load_csv_grid(path)
    return gridmod.load_pgm(path)


# -------------------------------------------------------------------- compute


def _compute_one(task) -> tuple[str, str | None]:
    in_path, out_path, min_pers, finitize_at = task
    try:
        diag = pipeline.preprocess_diagram(
            grid_persistence(_load_image(in_path)), finitize_at, min_pers
        )
        dg.write_diagram(out_path, diag)
        return in_path, None
    except Exception as e:  # per-file isolation: report, don't abort the batch
        return in_path, str(e)


def cmd_compute(args) -> int:
    if os.path.isdir(args.input):
        names = sorted(
            n
            for n in os.listdir(args.input)
            if n.endswith((".pgm", ".csv")) and n != "labels.csv"
        )
        inputs = [os.path.join(args.input, n) for n in names]
    else:
        inputs = [args.input]
    os.makedirs(args.out, exist_ok=True)
    tasks = [
        (
            p,
            os.path.join(args.out, os.path.splitext(os.path.basename(p))[0] + ".json"),
            args.min_pers,
            args.finitize,
        )
        for p in inputs
    ]
    workers = int(os.environ.get(THREADS_ENV, "1"))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_compute_one, tasks))
    else:
        results = [_compute_one(t) for t in tasks]
    failures = [(p, err) for p, err in results if err is not None]
    for p, err in failures:
        print(f"error: {p}: {err}", file=sys.stderr)
    print(f"computed {len(results) - len(failures)}/{len(results)} diagrams -> {args.out}")
    return 1 if failures else 0


# ------------------------------------------------------------------ vectorize


def _write_curve_csv(path, header: list[str], t_grid, columns: list[np.ndarray]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i, t in enumerate(t_grid):
            writer.writerow([repr(float(t))] + [repr(float(c[i])) for c in columns])


def cmd_vectorize(args) -> int:
    diag = dg.read_diagram(args.diagram)
    t_grid = vectorize.default_t_grid(args.samples, args.t_min, args.t_max)
    if args.method == "betti":
        cols = [betti := vectorize.betti_curve(diag, t_grid)]
        _write_curve_csv(args.out, ["t", "betti"], t_grid, cols)
    elif args.method == "landscape":
        cols = [vectorize.landscape(diag, k, t_grid) for k in range(1, args.levels + 1)]
        header = ["t"] + [f"landscape_k{k}" for k in range(1, args.levels + 1)]
        _write_curve_csv(args.out, header, t_grid, cols)
    elif args.method == "silhouette":
        cols = [vectorize.silhouette(diag, args.power, t_grid)]
        _write_curve_csv(args.out, ["t", f"silhouette_p{args.power:g}"], t_grid, cols)
    elif args.method == "pimage":
        lo = min([args.t_min] + [float(b) for b in diag.births])
        hi = max([args.t_max] + [float(d) for d in diag.deaths if np.isfinite(d)])
        spec = vectorize.ImageGridSpec(
            args.resolution, args.resolution, (lo, hi), (0.0, hi - lo), args.sigma
        )
        img = vectorize.persistence_image(diag, spec)
        with open(args.out, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                [f"pimage_res{args.resolution}_sigma{args.sigma:g}_col{c}" for c in range(spec.cols)]
            )
            for row in img:
                writer.writerow([repr(float(v)) for v in row])
    else:
        raise ValueError(f"unknown method {args.method}")
    print(f"wrote {args.method} vectorization -> {args.out}")
    return 0


# ------------------------------------------------------------------------ gen


def _dataset_hash(directory: str, names: list[str]) -> str:
    digest = hashlib.sha256()
    for name in names:
        with open(os.path.join(directory, name), "rb") as f:
            digest.update(name.encode())
            digest.update(f.read())
    return digest.hexdigest()


def cmd_gen(args) -> int:
    samples = gridmod.generate_shapes(args.seed, args.n, args.size, noise=args.noise)
    os.makedirs(args.out, exist_ok=True)
    names = []
    with open(os.path.join(args.out, "labels.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["file", "label"])
        for i, s in enumerate(samples):
            name = f"sample_{i:05d}.pgm"
            gridmod.save_pgm(os.path.join(args.out, name), s.image)
            writer.writerow([name, s.label])
            names.append(name)
    manifest = {
        "seed": args.seed,
        "n": args.n,
        "size": args.size,
        "noise": args.noise,
        "classes": list(gridmod.SHAPE_CLASSES),
        "dataset_hash": _dataset_hash(args.out, names + ["labels.csv"]),
    }
    with open(os.path.join(args.out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    print(f"generated {args.n} samples -> {args.out} (hash {manifest['dataset_hash'][:12]})")
    return 0


def _load_dataset(directory: str):
    with open(os.path.join(directory, "labels.csv"), newline="") as f:
        rows = list(csv.DictReader(f))
    samples = [
        gridmod.SyntheticSample(
            image=gridmod.load_pgm(os.path.join(directory, r["file"])),
            label=int(r["label"]),
        )
        for r in rows
    ]
    return samples


# ----------------------------------------------------------------- train/eval


def cmd_train(args) -> int:
    samples = _load_dataset(args.data)
    config = modelmod.TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        alpha=args.alpha,
        batch_size=args.batch_size,
        seed=args.seed,
        n_per_group=args.n_per_group,
        ratio=args.ratio,
        share_encoder=args.share_encoder,
        mode=args.mode,
        use_phg=args.mode == "full",
        n_classes=len(set(s.label for s in samples)),
    )
    dataset, stats = pipeline.build_feature_dataset(samples, n_per_group=config.n_per_group)
    model, history = modelmod.train(dataset, config)
    os.makedirs(args.out, exist_ok=True)
    modelmod.save_checkpoint(args.out, model, config, stats)
    with open(os.path.join(args.out, "history.json"), "w") as f:
        json.dump(history, f, indent=1, sort_keys=True)
        f.write("\n")
    print(f"trained {config.mode} model for {config.epochs} epochs -> {args.out}")
    print(f"final train loss {history[-1]['train_loss']:.4f}")
    return 0


def cmd_eval(args) -> int:
    if not os.path.exists(os.path.join(args.checkpoint, "manifest.json")):
        print(f"error: no checkpoint manifest in {args.checkpoint}", file=sys.stderr)
        return 1
    model, config, stats = modelmod.load_checkpoint(args.checkpoint)
    samples = _load_dataset(args.data)
    dataset, _ = pipeline.build_feature_dataset(
        samples, stats=stats, n_per_group=config.n_per_group
    )
    metrics = modelmod.evaluate(model, dataset, config.mode)
    print(f"{'metric':<14}{'value':>8}")
    for key in ("accuracy", "auc", "sensitivity", "specificity"):
        print(f"{key:<14}{metrics[key]:>8.4f}")
    return 0


# ----------------------------------------------------------------------- plot


def _svg_header(width: int, height: int) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]


def _plot_diagram_svg(diag: dg.Diagram, path: str, size: int = 360) -> None:
    pad = 40
    finite = [float(d) for d in diag.deaths if np.isfinite(d)]
    hi = max([1.0] + [float(b) for b in diag.births] + finite)
    scale = (size - 2 * pad) / hi

    def sx(v):
        return pad + v * scale

    def sy(v):
        return size - pad - v * scale

    lines = _svg_header(size, size)
    lines.append(
        f'<line x1="{sx(0):.2f}" y1="{sy(0):.2f}" x2="{sx(hi):.2f}" y2="{sy(hi):.2f}" '
        'stroke="gray" stroke-dasharray="4 3"/>'
    )
    lines.append(
        f'<line x1="{pad}" y1="{size-pad}" x2="{size-pad}" y2="{size-pad}" stroke="black"/>'
    )
    lines.append(f'<line x1="{pad}" y1="{size-pad}" x2="{pad}" y2="{pad}" stroke="black"/>')
    colors = {0: "blue", 1: "orange"}
    d = diag.canonical()
    for b, dd, k, e in zip(d.births, d.deaths, d.dims, d.essential):
        y = hi if e else float(dd)
        marker = "square" if e else "circle"
        if marker == "circle":
            lines.append(
                f'<circle cx="{sx(float(b)):.2f}" cy="{sy(y):.2f}" r="3" fill="{colors[int(k)]}"/>'
            )
        else:
            lines.append(
                f'<rect x="{sx(float(b))-3:.2f}" y="{sy(y)-3:.2f}" width="6" height="6" '
                f'fill="{colors[int(k)]}"/>'
            )
    lines.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _plot_curves_svg(t, columns: dict[str, np.ndarray], path: str, size: int = 360) -> None:
    pad = 40
    hi = max(1e-12, max(float(np.max(c)) for c in columns.values()))
    t = np.asarray(t, dtype=np.float64)
    t0, t1 = float(t[0]), float(t[-1])
    xs = pad + (t - t0) / max(t1 - t0, 1e-12) * (size - 2 * pad)
    palette = ["blue", "orange", "green", "red", "purple", "brown"]
    lines = _svg_header(size, size)
    lines.append(
        f'<line x1="{pad}" y1="{size-pad}" x2="{size-pad}" y2="{size-pad}" stroke="black"/>'
    )
    lines.append(f'<line x1="{pad}" y1="{size-pad}" x2="{pad}" y2="{pad}" stroke="black"/>')
    for i, (name, col) in enumerate(columns.items()):
        ys = size - pad - np.asarray(col) / hi * (size - 2 * pad)
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        lines.append(
            f'<polyline points="{pts}" fill="none" stroke="{palette[i % len(palette)]}">'
            f"<title>{name}</title></polyline>"
        )
    lines.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _plot_heatmap_svg(values: np.ndarray, path: str, cell: int = 12) -> None:
    rows, cols = values.shape
    hi = max(1e-12, float(values.max()))
    lines = _svg_header(cols * cell, rows * cell)
    for r in range(rows):
        for c in range(cols):
            v = values[rows - 1 - r, c] / hi  # persistence axis upward
            shade = int(round(255 * (1 - v)))
            lines.append(
                f'<rect x="{c*cell}" y="{r*cell}" width="{cell}" height="{cell}" '
                f'fill="rgb({shade},{shade},255)"/>'
            )
    lines.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def cmd_plot(args) -> int:
    if args.diagram:
        _plot_diagram_svg(dg.read_diagram(args.diagram), args.out)
    elif args.curve:
        with open(args.curve, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            data = np.array([[float(v) for v in row] for row in reader])
        if header[0] == "t":
            cols = {name: data[:, i + 1] for i, name in enumerate(header[1:])}
            _plot_curves_svg(data[:, 0], cols, args.out)
        else:
            _plot_heatmap_svg(data, args.out)
    elif args.history:
        with open(args.history) as f:
            history = json.load(f)
        epochs = np.array([h["epoch"] for h in history], dtype=np.float64)
        losses = np.array([h["train_loss"] for h in history])
        _plot_curves_svg(epochs, {"train_loss": losses}, args.out)
    else:
        print("error: one of --diagram/--curve/--history is required", file=sys.stderr)
        return 2
    print(f"wrote plot -> {args.out}")
    return 0


# ----------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topogate",
        description="Topological feature engine: cubical persistence with gated fusion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="compute persistence diagrams for images")
    p.add_argument("--input", required=True, help="PGM/CSV image or directory")
    p.add_argument("--out", required=True, help="output directory for diagram JSON")
    p.add_argument("--min-pers", type=float, default=10.0, dest="min_pers")
    p.add_argument("--finitize", type=float, default=255.0)
    p.set_defaults(func=cmd_compute)

    p = sub.add_parser("vectorize", help="vectorize a diagram to CSV")
    p.add_argument("--diagram", required=True)
    p.add_argument("--method", required=True, choices=["betti", "landscape", "silhouette", "pimage"])
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--t-min", type=float, default=0.0, dest="t_min")
    p.add_argument("--t-max", type=float, default=255.0, dest="t_max")
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--power", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=10.0)
    p.add_argument("--resolution", type=int, default=20)
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("gen", help="generate a synthetic shape dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--noise", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["full", "vision_only", "pd_only"], default="full")
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=16, dest="batch_size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-group", type=int, default=150, dest="n_per_group")
    p.add_argument("--ratio", type=int, default=8)
    p.add_argument("--share-encoder", action=argparse.BooleanOptionalAction, default=True, dest="share_encoder")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render diagrams, curves, or loss histories as SVG")
    p.add_argument("--diagram")
    p.add_argument("--curve")
    p.add_argument("--history")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _print_config(args)
    try:
        return args.func(args)
    except (gridmod.FormatError, dg.DiagramFormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
