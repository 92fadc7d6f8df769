"""Dataset handling, the classical KNN reference, and train/test evaluation."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np
from PIL import Image

from . import qknn
from .config import QknnConfig
from .features import FeatureError, FeatureVector, RawDescriptor, TextureScaler, read_feature_csv

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
MODES = ("oracle", "full")


class DatasetError(ValueError):
    pass


class StageError(RuntimeError):
    """A classification stage failed; `stage` names which one."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Dataset:
    items: list[tuple[Path, str]]
    train: list[int] | None = None
    test: list[int] | None = None
    seed: int | None = None
    ratio: float | None = None

    @property
    def labels(self) -> list[str]:
        seen = dict.fromkeys(label for _, label in self.items)
        return list(seen)

    def subset(self, which: str) -> list[tuple[Path, str]]:
        idx = getattr(self, which)
        if idx is None:
            raise DatasetError("dataset has not been split")
        return [self.items[i] for i in idx]


def _sort_key(p: Path):
    return (p.name.casefold(), p.name)


def load_dataset(root, exclude_classes: Sequence[str] = ()) -> Dataset:
    """One subdirectory per class, images inside; order is sorted and stable."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root} is not a directory")
    excluded = {c.casefold() for c in exclude_classes}
    items, empty, unreadable = [], [], []
    for cls_dir in sorted((d for d in root.iterdir() if d.is_dir()), key=_sort_key):
        if cls_dir.name.casefold() in excluded:
            continue
        found = 0
        for f in sorted((f for f in cls_dir.rglob("*") if f.is_file()), key=lambda p: _sort_key(p.relative_to(cls_dir))):
            if f.suffix.lower() not in IMAGE_SUFFIXES:
                log.warning("ignoring non-image file %s", f)
                continue
            try:
                with Image.open(f) as im:
                    im.verify()
            except Exception:
                unreadable.append(str(f))
                continue
            items.append((f, cls_dir.name))
            found += 1
        if found == 0:
            empty.append(cls_dir.name)
    if unreadable:
        raise DatasetError("unreadable images: " + ", ".join(unreadable))
    if empty:
        raise DatasetError(f"class directories without images under {root}: {', '.join(empty)}")
    if not items:
        raise DatasetError(f"no class directories with images under {root}")
    return Dataset(items)


def split(dataset: Dataset, ratio: float, seed: int) -> Dataset:
    """Stratified random split of round(ratio * n) training items.

    Per-class training counts start at floor(ratio * n_c), at least 1; the
    remaining slots go to the classes with the largest fractional parts.
    Top-up leaves every class a test item when it can, and only then takes a
    class's last one (5 + 5 items at 0.9 gives 9/1).  The test set is never
    empty.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    by_class: dict[str, list[int]] = defaultdict(list)
    for i, (_, label) in enumerate(dataset.items):
        by_class[label].append(i)
    small = [c for c, idx in by_class.items() if len(idx) < 2]
    if small:
        raise DatasetError(f"classes with fewer than 2 items cannot be split: {small}")
    classes = list(by_class)
    quota = {c: ratio * len(by_class[c]) for c in classes}
    n_train = {c: min(max(int(math.floor(quota[c])), 1), len(by_class[c]) - 1) for c in classes}
    n = len(dataset.items)
    target = min(int(math.floor(ratio * n + 0.5)), n - 1)
    order = sorted(classes, key=lambda c: (-(quota[c] - math.floor(quota[c])), classes.index(c)))
    for spare in (1, 0):
        for c in order:
            if sum(n_train.values()) >= target:
                break
            if n_train[c] < len(by_class[c]) - spare:
                n_train[c] += 1
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in classes:
        perm = rng.permutation(by_class[c])
        train.extend(int(i) for i in perm[:n_train[c]])
        test.extend(int(i) for i in perm[n_train[c]:])
    return replace(dataset, train=sorted(train), test=sorted(test), seed=seed, ratio=ratio)


def classical_knn(v0, training: Sequence, k: int, labels: Sequence[Hashable] | None = None) -> Hashable:
    """Exact KNN with d = (1 - <v0, v>^2) / 2, stable index tie-breaking and a
    first-occurrence majority rule."""
    if labels is None:
        labels = [v.label for v in training]
    if not 1 <= k <= len(training):
        raise ValueError(f"k must lie in 1..{len(training)}, got {k}")
    x = np.asarray(getattr(v0, "components", v0), dtype=float)
    d = []
    for v in training:
        y = np.asarray(getattr(v, "components", v), dtype=float)
        ip = float(np.dot(x, y))
        d.append(0.5 - 0.5 * ip * ip)
    order = sorted(range(len(d)), key=lambda j: (d[j], j))[:k]
    votes = [labels[j] for j in order]
    counts = Counter(votes)
    top = max(counts.values())
    return next(v for v in votes if counts[v] == top)


@dataclass
class ClassificationRow:
    source_id: str
    true_label: str | None
    predicted: str
    indexes: tuple[int, ...]
    grover_iterations: int
    budget: int
    oracle_calls: int
    search_success: bool
    classical: str | None = None
    k: int | None = None
    ratio: float | None = None
    trial: int | None = None

    @property
    def correct(self) -> bool:
        return self.predicted == self.true_label


class QknnClassifier:
    """Holds the training vectors; classifies feature vectors through the
    similarity state, the k-minimum search and the vote."""

    def __init__(self, training: Sequence[FeatureVector], config: QknnConfig | None = None, mode: str = "oracle"):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        if not training:
            raise ValueError("empty training set")
        self.training = list(training)
        self.labels = [v.label for v in self.training]
        self.config = config or QknnConfig()
        self.mode = mode

    def search(self, v0, k: int, rng: np.random.Generator, exact: bool = False) -> qknn.SearchResult:
        cfg = self.config
        if exact:
            try:
                table = qknn.distance_table(v0, self.training, cfg.b)
            except Exception as exc:
                raise StageError("distance computation", exc) from exc
            source = table
        else:
            try:
                source, _ = qknn.build_sigma(v0, self.training, cfg, rng, self.mode)
            except Exception as exc:
                raise StageError("similarity state", exc) from exc
        try:
            return qknn.durr_k_min(source, k, rng, cfg.c, use_exact=exact)
        except Exception as exc:
            raise StageError("minimum search", exc) from exc

    def classify_vector(self, v0: FeatureVector, k: int, rng: np.random.Generator,
                        exact: bool = False) -> tuple[str, ClassificationRow]:
        result = self.search(v0, k, rng, exact)
        label = qknn.majority_vote(result.indexes, self.labels)
        row = ClassificationRow(
            source_id=getattr(v0, "source_id", ""),
            true_label=getattr(v0, "label", None),
            predicted=label,
            indexes=result.indexes,
            grover_iterations=result.grover_iterations,
            budget=result.budget,
            oracle_calls=result.oracle_calls,
            search_success=result.success,
            classical=classical_knn(v0, self.training, k, self.labels),
            k=k,
        )
        return label, row


def descriptors(items: Sequence[tuple[Path, str]]) -> list[RawDescriptor]:
    out = []
    for path, label in items:
        try:
            out.append(RawDescriptor.from_image(path, label, str(path)))
        except FeatureError as exc:
            raise StageError("feature extraction", exc) from exc
    return out


def fit_training(raw: Sequence[RawDescriptor]) -> tuple[list[FeatureVector], TextureScaler]:
    scaler = TextureScaler.fit([r.texture for r in raw])
    return [r.finalize(scaler) for r in raw], scaler


def load_training(train) -> tuple[list[FeatureVector], TextureScaler]:
    """Training vectors from a class-per-directory tree or a feature CSV
    (whose texture bounds sidecar must exist)."""
    train = Path(train)
    if train.is_dir():
        return fit_training(descriptors(load_dataset(train).items))
    vectors, scaler = read_feature_csv(train)
    if scaler is None:
        raise DatasetError(f"{train} has no texture bounds sidecar; regenerate it with the features command")
    return vectors, scaler


def classify(image, train, k: int, mode: str = "oracle", seed: int = 0,
             config: QknnConfig | None = None) -> tuple[str, ClassificationRow, qknn.SearchResult]:
    """Classify one image file against a training directory or feature CSV."""
    vectors, scaler = train if isinstance(train, tuple) else load_training(train)
    try:
        v0 = RawDescriptor.from_image(image, None, str(image)).finalize(scaler)
    except FeatureError as exc:
        raise StageError("feature extraction", exc) from exc
    clf = QknnClassifier(vectors, config, mode)
    rng = np.random.default_rng(seed)
    result = clf.search(v0, k, rng)
    label = qknn.majority_vote(result.indexes, clf.labels)
    row = ClassificationRow(str(image), None, label, result.indexes, result.grover_iterations,
                            result.budget, result.oracle_calls, result.success,
                            classical_knn(v0, vectors, k), k)
    return label, row, result


# --------------------------------------------------------------------------
# evaluation


@dataclass
class CellSummary:
    k: int
    ratio: float
    trials: int
    accuracy: float
    classical_accuracy: float
    per_class: dict[str, float]
    correct: int
    total: int


@dataclass
class EvalReport:
    rows: list[ClassificationRow]
    ks: list[int]
    ratios: list[float]
    trials: int
    seed: int
    mode: str
    labels: list[str] = field(default_factory=list)

    def cell_rows(self, k: int, ratio: float) -> list[ClassificationRow]:
        return [r for r in self.rows if r.k == k and r.ratio == ratio]

    def cell(self, k: int, ratio: float) -> CellSummary:
        rows = self.cell_rows(k, ratio)
        per_trial = defaultdict(list)
        for r in rows:
            per_trial[r.trial].append(r)
        acc = float(np.mean([np.mean([r.correct for r in rs]) for rs in per_trial.values()]))
        cacc = float(np.mean([np.mean([r.classical == r.true_label for r in rs]) for rs in per_trial.values()]))
        per_class = {}
        for label in self.labels:
            lr = [r for r in rows if r.true_label == label]
            if lr:
                per_class[label] = sum(r.correct for r in lr) / len(lr)
        return CellSummary(k, ratio, len(per_trial), acc, cacc, per_class,
                           sum(r.correct for r in rows), len(rows))

    def cells(self) -> list[CellSummary]:
        return [self.cell(k, ratio) for ratio in self.ratios for k in self.ks]

    @property
    def overall_accuracy(self) -> float:
        return sum(r.correct for r in self.rows) / len(self.rows)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "ratio", "trial", "source_id", "true_label", "predicted", "classical",
                        "indexes", "grover_iterations", "budget", "oracle_calls", "search_success"])
            for r in self.rows:
                w.writerow([r.k, r.ratio, r.trial, r.source_id, r.true_label, r.predicted, r.classical,
                            " ".join(map(str, r.indexes)), r.grover_iterations, r.budget, r.oracle_calls,
                            int(r.search_success)])

    def write_cells_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "ratio", "trials", "accuracy", "classical_accuracy", "correct", "total"]
                       + [f"acc_{c}" for c in self.labels])
            for c in self.cells():
                w.writerow([c.k, c.ratio, c.trials, f"{c.accuracy:.6f}", f"{c.classical_accuracy:.6f}",
                            c.correct, c.total] + [f"{c.per_class.get(l, float('nan')):.6f}" for l in self.labels])

    def summary(self) -> str:
        lines = [
            f"mode={self.mode} trials={self.trials} seed={self.seed} classes={','.join(self.labels)}",
            f"test classifications: {len(self.rows)}, overall accuracy {self.overall_accuracy:.4f}",
            "",
            f"{'k':>3} {'ratio':>6} {'quantum':>8} {'classical':>9}  per-class",
        ]
        for c in self.cells():
            pc = "  ".join(f"{l}={a:.3f}" for l, a in c.per_class.items())
            lines.append(f"{c.k:>3} {c.ratio:>6.2f} {c.accuracy:>8.4f} {c.classical_accuracy:>9.4f}  {pc}")
        worst = max((r.grover_iterations / r.budget for r in self.rows), default=0.0)
        lines += ["", f"max Grover iterations / budget: {worst:.3f}",
                  f"search returned the true k nearest in {np.mean([r.search_success for r in self.rows]):.3f} of runs"]
        return "\n".join(lines) + "\n"

    def write(self, stem, figures: bool = True) -> list[Path]:
        """CSV rows, per-cell CSV, text summary and (optionally) figures next to `stem`."""
        stem = Path(stem)
        if stem.suffix in (".csv", ".txt"):
            stem = stem.with_suffix("")
        stem.parent.mkdir(parents=True, exist_ok=True)
        paths = [stem.with_suffix(".csv"), stem.with_name(stem.name + "_cells.csv"), stem.with_suffix(".txt")]
        self.write_csv(paths[0])
        self.write_cells_csv(paths[1])
        paths[2].write_text(self.summary())
        if figures:
            from . import plotting

            paths.append(plotting.plot_accuracy(self, stem.with_name(stem.name + "_accuracy.png")))
            paths.append(plotting.plot_iterations(self, stem.with_name(stem.name + "_iterations.png")))
        return paths


def evaluate(dataset: Dataset, ks: Sequence[int] = (3, 5, 7, 9), ratios: Sequence[float] = (0.5, 0.7, 0.9),
             trials: int = 1, seed: int = 0, mode: str = "oracle", config: QknnConfig | None = None,
             raw: Sequence[RawDescriptor] | None = None) -> EvalReport:
    """Sweep k and training ratio; trial t of each cell uses split seed `seed + t`.

    Texture bounds are refit on each training split.  Every test image gets
    its own RNG stream keyed on (seed, trial, k, image index).
    """
    if not ks or not ratios:
        raise ValueError("k and ratio grids must be nonempty")
    raw = list(raw) if raw is not None else descriptors(dataset.items)
    rows = []
    for ratio in ratios:
        for trial in range(trials):
            ds = split(dataset, ratio, seed + trial)
            train_vecs, scaler = fit_training([raw[i] for i in ds.train])
            clf = QknnClassifier(train_vecs, config, mode)
            tests = [(i, raw[i].finalize(scaler)) for i in ds.test]
            for k in ks:
                if k > len(train_vecs):
                    raise ValueError(f"k={k} exceeds the {len(train_vecs)} training images at ratio {ratio}")
                for i, v0 in tests:
                    rng = np.random.default_rng([seed, trial, k, i])
                    _, row = clf.classify_vector(v0, k, rng)
                    rows.append(replace(row, ratio=ratio, trial=trial))
    return EvalReport(rows, list(ks), list(ratios), trials, seed, mode, dataset.labels)
