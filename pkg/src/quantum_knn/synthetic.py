"""Procedural stand-ins for the airplane / leopard photographs.

Airplanes: a pale sky gradient with a light fuselage and wings.
Leopards: a tawny coat covered in dark rosettes.
`hard=True` places either object, at a random size, on a background drawn
from a pool shared by both classes (sky, dusk, grass, dry scrub, snow), so a
two-class set is not perfectly separable.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

WIDTH, HEIGHT = 96, 64


def _noise(rng, shape, scale):
    return rng.normal(0.0, scale, size=shape)


def _gradient(top, bottom, yy):
    frac = (yy / (HEIGHT - 1))[..., None]
    return top * (1 - frac) + bottom * frac


def _clutter(rng, yy, xx) -> np.ndarray:
    """One of five background scenes, independent of the object class."""
    kind = int(rng.integers(0, 5))
    jitter = rng.integers(-20, 20, 3)
    if kind == 0:
        return _gradient(np.array([70, 130, 200]) + jitter, np.array([180, 210, 240]), yy)
    if kind == 1:
        return _gradient(np.array([200, 120, 80]) + jitter, np.array([250, 190, 120]), yy)
    if kind == 4:
        return _gradient(np.array([190, 200, 215]) + jitter, np.array([235, 240, 245]), yy)
    base = (np.array([90, 140, 60]) if kind == 2 else np.array([185, 150, 95])) + jitter
    img = np.broadcast_to(base, (HEIGHT, WIDTH, 3)).astype(float).copy()
    for _ in range(int(rng.integers(10, 30))):
        sx, sy, r = rng.uniform(0, WIDTH), rng.uniform(0, HEIGHT), rng.uniform(3, 8)
        img[np.hypot(xx - sx, yy - sy) <= r] *= rng.uniform(0.6, 0.9)
    return img


def _plane_mask(rng, yy, xx, scale=1.0):
    cx, cy = rng.uniform(30, 66), rng.uniform(22, 42)
    length, thick = rng.uniform(24, 36) * scale, rng.uniform(3, 5) * scale
    ang = rng.uniform(-0.3, 0.3)
    u = (xx - cx) * np.cos(ang) + (yy - cy) * np.sin(ang)
    v = -(xx - cx) * np.sin(ang) + (yy - cy) * np.cos(ang)
    body = (u / length) ** 2 + (v / thick) ** 2 <= 1
    wing = (np.abs(u + 2 * scale) <= 4 * scale) & (np.abs(v) <= length * 0.6)
    tail = (np.abs(u + length * 0.85) <= 3 * scale) & (np.abs(v) <= length * 0.25)
    return body | wing | tail


def _rosettes(rng, img, yy, xx, count, inside=None):
    for _ in range(count):
        sx, sy = rng.uniform(0, WIDTH), rng.uniform(0, HEIGHT)
        r = rng.uniform(2, 4.5)
        d = np.hypot(xx - sx, yy - sy)
        ring, core = (d <= r) & (d >= r * 0.45), d < r * 0.45
        if inside is not None:
            ring, core = ring & inside, core & inside
        img[ring] = [40, 28, 15]
        img[core] *= 0.8


def airplane(rng: np.random.Generator, hard: bool = False) -> np.ndarray:
    yy, xx = np.mgrid[0:HEIGHT, 0:WIDTH]
    if hard:
        img = _clutter(rng, yy, xx)
        mask = _plane_mask(rng, yy, xx, rng.uniform(0.35, 1.0))
    else:
        top = np.array([70, 130, 200]) + rng.integers(-20, 20, 3)
        bottom = np.array([180, 210, 240]) + rng.integers(-15, 15, 3)
        img = _gradient(top, bottom, yy)
        mask = _plane_mask(rng, yy, xx)
    shade = rng.uniform(170, 235)
    img[mask] = [shade, shade, shade + 5]
    img += _noise(rng, img.shape, 4.0)
    return np.clip(img, 0, 255).astype(np.uint8)


def leopard(rng: np.random.Generator, hard: bool = False) -> np.ndarray:
    yy, xx = np.mgrid[0:HEIGHT, 0:WIDTH]
    base = np.array([200, 150, 70]) + rng.integers(-20, 20, 3)
    coat = np.broadcast_to(base, (HEIGHT, WIDTH, 3)).astype(float).copy()
    coat *= (0.85 + 0.15 * np.sin(xx / rng.uniform(6, 12)))[..., None]
    if hard:
        # the animal fills an ellipse of random size; the rest is scenery
        scale = rng.uniform(0.35, 1.0)
        cx, cy = rng.uniform(0.3, 0.7) * WIDTH, rng.uniform(0.3, 0.7) * HEIGHT
        inside = ((xx - cx) / (scale * WIDTH / 1.6)) ** 2 + ((yy - cy) / (scale * HEIGHT / 1.6)) ** 2 <= 1
        img = _clutter(rng, yy, xx)
        img[inside] = coat[inside]
        _rosettes(rng, img, yy, xx, int(rng.integers(40, 70)), inside)
    else:
        img = coat
        _rosettes(rng, img, yy, xx, int(rng.integers(40, 70)))
    img += _noise(rng, img.shape, 10.0)
    return np.clip(img, 0, 255).astype(np.uint8)


GENERATORS = {"airplanes": airplane, "Leopards": leopard}


def make_dataset(root, per_class: int = 50, seed: int = 0, hard: bool = True,
                 classes=("airplanes", "Leopards")) -> Path:
    """Write `per_class` PNGs per class under root/<class>/."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for cls in classes:
        (root / cls).mkdir(parents=True, exist_ok=True)
        for i in range(1, per_class + 1):
            Image.fromarray(GENERATORS[cls](rng, hard)).save(root / cls / f"{cls}_{i:03d}.png")
    return root


def make_demo_fixture(root, seed: int = 2019) -> Path:
    """Five airplanes and five leopards for training plus one airplane test image."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for cls in ("airplanes", "Leopards"):
        (root / "train" / cls).mkdir(parents=True, exist_ok=True)
        for i in range(1, 6):
            Image.fromarray(GENERATORS[cls](rng)).save(root / "train" / cls / f"{cls}_{i}.png")
    (root / "test").mkdir(parents=True, exist_ok=True)
    Image.fromarray(airplane(rng)).save(root / "test" / "test_image.png")
    return root
