"""Command-line entry point: ``qknn features|classify|evaluate|demo-paper``."""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import qknn
from .config import QknnConfig
from .features import RawDescriptor, write_feature_csv
from .pipeline import (
    DatasetError,
    StageError,
    classify,
    descriptors,
    evaluate,
    fit_training,
    load_dataset,
)

log = logging.getLogger("quantum_knn")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _config(args) -> QknnConfig:
    cfg = QknnConfig.load(args.config) if args.config else QknnConfig()
    if getattr(args, "c", None) is not None:
        cfg = cfg.with_(c=args.c)
    return cfg


def cmd_features(args) -> int:
    ds = load_dataset(args.dir, args.exclude_class)
    vectors, scaler = fit_training(descriptors(ds.items))
    write_feature_csv(vectors, args.out, scaler)
    print(f"wrote {len(vectors)} feature vectors to {args.out}")
    return 0


def cmd_classify(args) -> int:
    label, row, result = classify(args.image, args.train, args.k, args.mode, args.seed, _config(args))
    print(f"label: {label}")
    print(f"nearest indexes: {' '.join(map(str, row.indexes))}")
    print(f"grover iterations: {row.grover_iterations} / budget {row.budget}")
    print(f"classical knn: {row.classical}")
    if args.trace:
        Path(args.trace).write_text("\n".join(result.trace) + "\n")
    return 0


def cmd_evaluate(args) -> int:
    ds = load_dataset(args.data, args.exclude_class)
    report = evaluate(ds, args.k, args.ratio, args.trials, args.seed, args.mode, _config(args))
    paths = report.write(args.report, figures=not args.no_figures)
    sys.stdout.write(report.summary())
    for p in paths:
        print(f"wrote {p}")
    return 0


def demo_fixture_dir() -> Path:
    return Path(str(resources.files("quantum_knn") / "data" / "demo"))


def run_demo(k: int = 3, mode: str = "full", seed: int = 0, config: QknnConfig | None = None,
             fixture: Path | None = None) -> dict:
    """Ten training images, one test image: distances, k-minimum search, vote."""
    root = fixture or demo_fixture_dir()
    config = config or QknnConfig()
    raw = descriptors(load_dataset(root / "train").items)
    vectors, scaler = fit_training(raw)
    test_path = root / "test" / "test_image.png"
    v0 = RawDescriptor.from_image(test_path, None, str(test_path)).finalize(scaler)
    rng = np.random.default_rng(seed)
    sigma, estimates = qknn.build_sigma(v0, vectors, config, rng, mode)
    exact = qknn.distance_table(v0, vectors, config.b).exact
    result = qknn.durr_k_min(sigma, k, rng, config.c)
    labels = [v.label for v in vectors]
    names = [Path(v.source_id).stem for v in vectors]
    return {
        "names": names,
        "labels": labels,
        "test": v0,
        "training": vectors,
        "exact": exact,
        "estimates": estimates,
        "result": result,
        "label": qknn.majority_vote(result.indexes, labels),
        "width": qknn.index_width(len(vectors)),
    }


def cmd_demo(args) -> int:
    out = run_demo(args.k, args.mode, args.seed, _config(args))
    names, exact, est, result = out["names"], out["exact"], out["estimates"], out["result"]
    cols = [0, 1, 23, 77]
    print("Representative feature components")
    print(f"{'image':<14}{'#':>3}" + "".join(f"{'v*' + str(c + 1):>12}" for c in cols))
    print(f"{'test image':<14}{0:>3}" + "".join(f"{out['test'].components[c]:>12.8f}" for c in cols))
    for j, v in enumerate(out["training"], start=1):
        print(f"{names[j - 1]:<14}{j:>3}" + "".join(f"{v.components[c]:>12.8f}" for c in cols))
    print()
    rank = np.empty(len(exact), dtype=int)
    rank[np.argsort(exact, kind="stable")] = np.arange(1, len(exact) + 1)
    print("Distances to the test image")
    print(f"{'image':<14}{'ranking':>8}{'d (exact)':>20}{'d (loaded)':>14}")
    for j in range(len(exact)):
        print(f"{names[j]:<14}{rank[j]:>8}{exact[j]:>20.15f}{est[j]:>14.6f}")
    print()
    w = out["width"]
    print(f"search: {result.grover_iterations} Grover iterations, budget {result.budget}")
    for line in result.trace:
        print("  " + line)
    print("measured: " + " ".join(format(j, f"0{w}b") for j in result.indexes)
          + "  -> " + ", ".join(f"{j} ({names[j - 1]})" for j in result.indexes))
    print(f"test image classified as: {out['label']}")
    if args.figures:
        from . import plotting

        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        print(f"wrote {plotting.plot_distances(names, exact, set(result.indexes), fig_dir / 'demo_distances.png')}")
        print(f"wrote {plotting.plot_search_cost(fig_dir / 'search_cost.png')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qknn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value file with b, t, c, qubit_cap")
        sp.add_argument("--c", type=float, default=None, help="Grover budget multiplier (overrides config)")

    sp = sub.add_parser("features", help="extract feature vectors of a class-per-directory tree")
    sp.add_argument("dir")
    sp.add_argument("--out", required=True)
    sp.add_argument("--exclude-class", action="append", default=[])
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("classify", help="classify one image")
    sp.add_argument("image")
    sp.add_argument("--train", required=True, help="training directory or feature CSV")
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--mode", choices=("full", "oracle"), default="oracle")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trace", help="write the search trace here")
    common(sp)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("evaluate", help="accuracy sweep over k and training ratio")
    sp.add_argument("--data", required=True)
    sp.add_argument("--k", type=_int_list, default=[3, 5, 7, 9])
    sp.add_argument("--ratio", type=_float_list, default=[0.5, 0.7, 0.9])
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mode", choices=("full", "oracle"), default="oracle")
    sp.add_argument("--report", required=True, help="output stem; .csv, _cells.csv, .txt and figures")
    sp.add_argument("--no-figures", action="store_true")
    sp.add_argument("--exclude-class", action="append", default=[])
    common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("demo-paper", help="ten-image airplanes/leopards walkthrough")
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--mode", choices=("full", "oracle"), default="full")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--figures", help="directory for the distance and search-cost figures")
    common(sp)
    sp.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DatasetError, StageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
