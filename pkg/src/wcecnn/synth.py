"""Procedural six-class image generator standing in for capsule-endoscopy frames.

Every image is a pure function of ``(label, seed, side)``. Wrinkles and
ClearBlob darken the same wall palette by the same factor range, over the
same area range, with the same edge profile, around the same centre, so
their colour statistics match; only the shape of the dark region (star vs
ellipse) differs.
"""

from __future__ import annotations

import colorsys
import enum

import numpy as np

from .channels import _bilinear

GENERATOR_VERSION = 2
MIN_SIDE = 64


class ClassLabel(enum.IntEnum):
    WALL = 0
    WRINKLES = 1
    BUBBLES = 2
    TURBID = 3
    CLEAR_BLOB = 4
    UNDEFINED = 5

    @property
    def display(self):
        return _DISPLAY[self]


_DISPLAY = {
    ClassLabel.WALL: "Wall",
    ClassLabel.WRINKLES: "Wrinkles",
    ClassLabel.BUBBLES: "Bubbles",
    ClassLabel.TURBID: "Turbid",
    ClassLabel.CLEAR_BLOB: "Clear Blob",
    ClassLabel.UNDEFINED: "Undefined",
}
CLASS_NAMES = tuple(_DISPLAY[c] for c in ClassLabel)

WALL_HUE = (22.0, 33.0)
TURBID_HUE = (78.0, 102.0)
DARK_FRACTION = (0.08, 0.30)
DARK_FACTOR = (0.15, 0.35)
RAMP = 0.5
CENTER_JITTER = 0.05
STAR_REACH = 0.42
NOISE_STD = 0.02


def _rng(label, seed):
    return np.random.default_rng([GENERATOR_VERSION, int(label), seed])


def _hue_rgb(hue_deg, sat):
    return np.array(colorsys.hsv_to_rgb(hue_deg / 360.0, sat, 1.0))


def _smooth_field(rng, side, cells, amplitude):
    grid = rng.uniform(-amplitude, amplitude, size=(cells, cells))
    return _bilinear(grid, side, side)


def _coords(side):
    y, x = np.mgrid[0:side, 0:side].astype(np.float64)
    return y + 0.5, x + 0.5


def _wall(rng, side):
    color = _hue_rgb(rng.uniform(*WALL_HUE), rng.uniform(0.65, 0.85))
    value = rng.uniform(0.65, 0.85) + _smooth_field(rng, side, 4, 0.08)
    return color[None, None, :] * value[..., None]


def _green(rng, side):
    color = _hue_rgb(rng.uniform(*TURBID_HUE), rng.uniform(0.55, 0.8))
    value = rng.uniform(0.55, 0.8) + _smooth_field(rng, side, 4, 0.06)
    return color[None, None, :] * value[..., None]


def _darken(img, mask, rng):
    factor = rng.uniform(*DARK_FACTOR)
    return img * (1.0 - (1.0 - factor) * mask)[..., None]


def _profile(t):
    """Darkness of a pixel at normalized depth ``t``: 1 in the core, 1/2 at t=1, 0 past the ramp."""
    return np.clip(0.5 + (1.0 - t) / RAMP, 0.0, 1.0)


def _center(rng, side):
    return side * (0.5 + rng.uniform(-CENTER_JITTER, CENTER_JITTER, size=2))


# Both dark shapes are parametrized by a depth t that is uniform over their
# area (angle within a wedge, squared radius within an ellipse), so the same
# profile gives both the same mix of core and ramp pixels.

def _wrinkles(rng, side):
    img = _wall(rng, side)
    y, x = _coords(side)
    cy, cx = _center(rng, side)
    k = int(rng.integers(5, 10))
    area = rng.uniform(*DARK_FRACTION) * side * side
    reach = STAR_REACH * side
    half = area / (k * reach * reach)
    base = rng.uniform(0, 2 * np.pi)
    angles = base + 2 * np.pi * np.arange(k) / k + rng.uniform(-0.25, 0.25, size=k) * np.pi / k
    inside = np.hypot(y - cy, x - cx) <= reach
    theta = np.arctan2(y - cy, x - cx)
    mask = np.zeros((side, side))
    for a in angles:
        d = np.abs((theta - a + np.pi) % (2 * np.pi) - np.pi)
        mask = np.maximum(mask, _profile(d / half))
    return _darken(img, mask * inside, rng)


def _clear_blob(rng, side):
    img = _wall(rng, side)
    y, x = _coords(side)
    cy, cx = _center(rng, side)
    frac = rng.uniform(*DARK_FRACTION)
    ratio = rng.uniform(0.6, 1.0)
    a = np.sqrt(frac * side * side / (np.pi * ratio))
    b = ratio * a
    phi = rng.uniform(0, np.pi)
    u = (x - cx) * np.cos(phi) + (y - cy) * np.sin(phi)
    v = -(x - cx) * np.sin(phi) + (y - cy) * np.cos(phi)
    return _darken(img, _profile((u / a) ** 2 + (v / b) ** 2), rng)


def _bubbles(rng, side):
    img = _wall(rng, side) if rng.random() < 0.5 else _green(rng, side)
    y, x = _coords(side)
    tint = np.array([1.0, 1.0, rng.uniform(0.6, 1.0)])
    for _ in range(int(rng.integers(15, 61))):
        radius = rng.uniform(0.03, 0.12) * side
        cy, cx = rng.uniform(0, side, size=2)
        d = np.hypot(y - cy, x - cx)
        inside = d <= radius
        rim = inside & (d > radius - max(1.5, 0.18 * radius))
        lift = rng.uniform(0.35, 0.65)
        core = inside & ~rim
        img[core] = img[core] + (tint - img[core]) * lift
        img[rim] = img[rim] * 0.45
    return img


def _turbid(rng, side):
    img = _green(rng, side)
    y, x = _coords(side)
    for _ in range(int(rng.integers(3, 8))):
        cy, cx = rng.uniform(0, side, size=2)
        s = rng.uniform(0.08, 0.2) * side
        blob = np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2 * s * s))
        img = img * (1.0 + rng.uniform(-0.25, 0.25) * blob)[..., None]
    return img


_RECIPES = {
    ClassLabel.WALL: _wall,
    ClassLabel.WRINKLES: _wrinkles,
    ClassLabel.BUBBLES: _bubbles,
    ClassLabel.TURBID: _turbid,
    ClassLabel.CLEAR_BLOB: _clear_blob,
}


def _undefined(rng, side):
    first, second = rng.choice(len(_RECIPES), size=2, replace=False)
    weight = rng.uniform(0.35, 0.65)
    a = _RECIPES[ClassLabel(int(first))](rng, side)
    b = _RECIPES[ClassLabel(int(second))](rng, side)
    return weight * a + (1.0 - weight) * b


def generate(label, seed, side=256):
    """Render one ``(side, side, 3)`` uint8 image of class ``label``."""
    if side < MIN_SIDE:
        raise ValueError(f"side must be >= {MIN_SIDE}, got {side}")
    label = ClassLabel(label)
    rng = _rng(label, seed)
    recipe = _undefined if label is ClassLabel.UNDEFINED else _RECIPES[label]
    img = recipe(rng, side)
    img = img + rng.normal(0.0, NOISE_STD, size=img.shape)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
