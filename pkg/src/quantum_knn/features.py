"""Color + texture descriptor of an image: a 72-bin quantized HSB histogram
followed by 8 GLCM texture statistics, 80 components in all."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

N_COLOR = 72
N_TEXTURE = 8
N_FEATURES = N_COLOR + N_TEXTURE
GRAY_LEVELS = 16
HUE_WEIGHT = 9
SAT_WEIGHT = 3

# (row, col) pixel offsets of the neighbour in each co-occurrence direction
DIRECTIONS = ((0, 1), (-1, 1), (-1, 0), (-1, -1))
STAT_NAMES = ("contrast", "correlation", "energy", "entropy")

# upper bound (inclusive) of each hue level, first match wins
_HUE_UPPER = (20, 40, 75, 155, 190, 270, 295, 315)


class FeatureError(ValueError):
    """Bad image input; the message names the offending image."""


@dataclass(frozen=True)
class HsbPixel:
    H: int
    S: float
    B: float


@dataclass(frozen=True)
class QuantizedHsb:
    h: int
    s: int
    b: int


@dataclass
class FeatureVector:
    components: np.ndarray
    label: str | None = None
    source_id: str = ""

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        if self.components.shape != (N_FEATURES,):
            raise ValueError(f"feature vector needs {N_FEATURES} components, got {self.components.shape}")


@dataclass
class GlcmStats:
    per_direction: np.ndarray  # shape (4 directions, 4 statistics)
    mean: np.ndarray = field(init=False)
    variance: np.ndarray = field(init=False)

    def __post_init__(self):
        self.per_direction = np.asarray(self.per_direction, dtype=float)
        self.mean = self.per_direction.mean(axis=0)
        self.variance = self.per_direction.var(axis=0)

    def vector(self) -> np.ndarray:
        """Raw texture vector: the four means, then the four variances."""
        return np.concatenate([self.mean, self.variance])


# --------------------------------------------------------------------------
# color


def rgb_to_hsb(pixel: Sequence[int]) -> HsbPixel:
    """Hexcone RGB -> HSB with hue rounded to whole degrees (360 wraps to 0)."""
    arr = np.asarray(pixel, dtype=np.uint8).reshape(1, 1, 3)
    H, S, B = rgb_to_hsb_array(arr)
    return HsbPixel(int(H[0, 0]), float(S[0, 0]), float(B[0, 0]))


def rgb_to_hsb_array(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized `rgb_to_hsb` over an (..., 3) array of 8-bit channels."""
    rgb = np.asarray(rgb, dtype=float) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.select(
        [delta == 0, mx == r, mx == g],
        [0.0, ((g - b) / safe) % 6.0, (b - r) / safe + 2.0],
        default=(r - g) / safe + 4.0,
    ) * 60.0
    hue = np.rint(hue).astype(int) % 360
    sat = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return hue, sat, mx


def _level3(x):
    return np.where(x < 0.2, 0, np.where(x < 0.7, 1, 2))


def quantize_hsb(p: HsbPixel) -> QuantizedHsb:
    h, s, b = quantize_hsb_array(np.array([p.H]), np.array([p.S]), np.array([p.B]))
    return QuantizedHsb(int(h[0]), int(s[0]), int(b[0]))


def quantize_hsb_array(H, S, B):
    H = np.asarray(H)
    # hue 316..359 falls past the last bound and wraps back to level 0
    h = np.searchsorted(np.array(_HUE_UPPER), H, side="left") % 8
    return h, _level3(np.asarray(S)), _level3(np.asarray(B))


def color_index(q: QuantizedHsb) -> int:
    return q.h * HUE_WEIGHT + q.s * SAT_WEIGHT + q.b


def color_histogram(image: np.ndarray) -> np.ndarray:
    """L1-normalized histogram of the 72 quantized colors."""
    image = _as_rgb(image)
    if image.shape[0] * image.shape[1] == 0:
        raise FeatureError("empty image")
    h, s, b = quantize_hsb_array(*rgb_to_hsb_array(image))
    G = h * HUE_WEIGHT + s * SAT_WEIGHT + b
    counts = np.bincount(G.ravel(), minlength=N_COLOR).astype(float)
    return counts / counts.sum()


# --------------------------------------------------------------------------
# texture


def to_gray(image: np.ndarray) -> np.ndarray:
    """Integer Rec.601 luma, 0..255."""
    image = _as_rgb(image).astype(float)
    y = 0.299 * image[..., 0] + 0.587 * image[..., 1] + 0.114 * image[..., 2]
    return np.clip(np.rint(y), 0, 255).astype(np.int64)


def quantize_gray(gray: np.ndarray, levels: int = GRAY_LEVELS) -> np.ndarray:
    return (np.asarray(gray, dtype=np.int64) * levels) // 256


def glcm(levels_image: np.ndarray, direction: tuple[int, int], levels: int = GRAY_LEVELS) -> np.ndarray:
    """Symmetric, normalized co-occurrence matrix of one pixel offset."""
    img = np.asarray(levels_image, dtype=np.int64)
    if img.ndim != 2 or img.shape[0] < 2 or img.shape[1] < 2:
        raise FeatureError(f"co-occurrence needs an image of at least 2x2, got {img.shape}")
    if tuple(direction) not in DIRECTIONS:
        raise ValueError(f"direction {direction} is not one of {DIRECTIONS}")
    dr, dc = direction
    rows, cols = img.shape
    r0, r1 = max(0, -dr), rows - max(0, dr)
    c0, c1 = max(0, -dc), cols - max(0, dc)
    a = img[r0:r1, c0:c1]
    b = img[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
    counts = np.bincount((a * levels + b).ravel(), minlength=levels * levels).reshape(levels, levels)
    counts = counts + counts.T
    return counts / counts.sum()


def glcm_stats(m: np.ndarray) -> tuple[float, float, float, float]:
    """(contrast, correlation, energy, entropy) of a normalized co-occurrence matrix.

    Energy is the angular second moment (sum of squares).  Correlation is 0
    when either marginal has zero variance.
    """
    m = np.asarray(m, dtype=float)
    i, j = np.indices(m.shape)
    contrast = float(np.sum(m * (i - j) ** 2))
    mu_i = np.sum(i * m)
    mu_j = np.sum(j * m)
    sd_i = np.sqrt(np.sum(m * (i - mu_i) ** 2))
    sd_j = np.sqrt(np.sum(m * (j - mu_j) ** 2))
    if sd_i < 1e-12 or sd_j < 1e-12:
        correlation = 0.0
    else:
        correlation = float(np.sum(m * (i - mu_i) * (j - mu_j)) / (sd_i * sd_j))
    energy = float(np.sum(m ** 2))
    nz = m[m > 0]
    entropy = float(-np.sum(nz * np.log2(nz)))
    return contrast, correlation, energy, entropy


def texture_stats(image: np.ndarray) -> GlcmStats:
    levels_image = quantize_gray(to_gray(image))
    return GlcmStats(np.array([glcm_stats(glcm(levels_image, d)) for d in DIRECTIONS]))


def raw_texture_vector(image: np.ndarray) -> np.ndarray:
    return texture_stats(image).vector()


@dataclass
class TextureScaler:
    """Per-component min-max bounds frozen from a training set."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def fit(cls, raw_vectors: Iterable[np.ndarray]) -> "TextureScaler":
        raw = np.atleast_2d(np.asarray(list(raw_vectors), dtype=float))
        if raw.size == 0:
            raise ValueError("cannot fit texture bounds on an empty set")
        return cls(raw.min(axis=0), raw.max(axis=0))

    def transform(self, raw: np.ndarray) -> np.ndarray:
        span = self.upper - self.lower
        degenerate = span <= 1e-15
        scaled = (np.asarray(raw, dtype=float) - self.lower) / np.where(degenerate, 1.0, span)
        return np.where(degenerate, 0.0, np.clip(scaled, 0.0, 1.0))

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TextureScaler":
        return cls(np.asarray(d["lower"], dtype=float), np.asarray(d["upper"], dtype=float))


def texture_vector(image: np.ndarray, scaler: TextureScaler) -> np.ndarray:
    return scaler.transform(raw_texture_vector(image))


# --------------------------------------------------------------------------
# combined descriptor


def combine(color: np.ndarray, texture: np.ndarray) -> np.ndarray:
    v = np.concatenate([color, texture])
    norm = np.linalg.norm(v)
    if norm == 0:
        raise FeatureError("all-zero descriptor cannot be normalized")
    return v / norm


def extract_features(image, scaler: TextureScaler, label: str | None = None,
                     source_id: str = "") -> FeatureVector:
    """Full 80-component unit-norm descriptor of one image.

    `image` is an RGB array or a path; decode failures raise FeatureError
    naming the source.
    """
    if not isinstance(image, np.ndarray):
        source_id = source_id or str(image)
        image = load_image(image)
    return FeatureVector(combine(color_histogram(image), texture_vector(image, scaler)), label, source_id)


@dataclass
class RawDescriptor:
    """Color histogram and unscaled texture of one image, cached so that
    texture bounds can be refit per split without re-reading pixels."""

    color: np.ndarray
    texture: np.ndarray
    label: str | None = None
    source_id: str = ""

    @classmethod
    def from_image(cls, image, label=None, source_id="") -> "RawDescriptor":
        if not isinstance(image, np.ndarray):
            source_id = source_id or str(image)
            image = load_image(image)
        return cls(color_histogram(image), raw_texture_vector(image), label, source_id)

    def finalize(self, scaler: TextureScaler) -> FeatureVector:
        return FeatureVector(combine(self.color, scaler.transform(self.texture)), self.label, self.source_id)


# --------------------------------------------------------------------------
# io


def _as_rgb(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 2:
        image = np.stack([image] * 3, axis=-1)
    if image.ndim != 3 or image.shape[-1] != 3:
        raise FeatureError(f"expected an RGB image, got shape {image.shape}")
    return image


def load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as exc:  # PIL raises a zoo of types on bad files
        raise FeatureError(f"cannot decode image {path}: {exc}") from exc


def write_feature_csv(vectors: Sequence[FeatureVector], path, scaler: TextureScaler | None = None) -> None:
    """One row per image: source_id, label, 80 components at full precision.

    Texture bounds, when given, go to a `<path>.bounds.json` sidecar so a
    later test image can be scaled consistently.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source_id", "label"] + [f"v{i}" for i in range(1, N_FEATURES + 1)])
        for v in vectors:
            w.writerow([v.source_id, v.label or ""] + [repr(float(c)) for c in v.components])
    if scaler is not None:
        bounds_path(path).write_text(json.dumps(scaler.to_dict(), indent=2))


def read_feature_csv(path) -> tuple[list[FeatureVector], TextureScaler | None]:
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        if header[:2] != ["source_id", "label"] or len(header) != N_FEATURES + 2:
            raise ValueError(f"{path} is not a feature-vector file")
        for row in rows:
            out.append(FeatureVector(np.array([float(c) for c in row[2:]]), row[1] or None, row[0]))
    bp = bounds_path(path)
    scaler = TextureScaler.from_dict(json.loads(bp.read_text())) if bp.exists() else None
    return out, scaler


def bounds_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.name + ".bounds.json")
