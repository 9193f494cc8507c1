"""Dataset container, on-disk layout and the stratified train/test split.

On disk a dataset is a directory holding ``manifest.csv``
(``relative_path,label_code,label_name``), ``dataset.json`` with generation
metadata, and the images as binary PPM files under ``images/``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from PIL import Image

from .synth import CLASS_NAMES, GENERATOR_VERSION, ClassLabel, generate

MANIFEST = "manifest.csv"
METADATA = "dataset.json"
MAX_PER_CLASS = 100_000


class DatasetError(Exception):
    """Missing or malformed dataset files."""


@dataclass
class Sample:
    id: str
    label: int
    image: Optional[np.ndarray] = None
    path: Optional[str] = None

    def load(self):
        if self.image is None:
            self.image = read_ppm(self.path)
        return self.image


@dataclass
class Dataset:
    samples: List[Sample]
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self):
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def counts(self):
        return np.bincount(self.labels, minlength=len(ClassLabel)).tolist()

    def images(self):
        return [s.load() for s in self.samples]

    def subset(self, indices, **meta):
        return Dataset([self.samples[i] for i in indices], {**self.meta, **meta})


def read_ppm(path):
    try:
        with Image.open(path) as im:
            if im.format != "PPM" or im.mode != "RGB":
                raise DatasetError(f"{path}: not an RGB binary PPM")
            return np.asarray(im, dtype=np.uint8).copy()
    except FileNotFoundError:
        raise DatasetError(f"missing image file {path}") from None
    except (OSError, SyntaxError) as exc:
        raise DatasetError(f"{path}: unreadable PPM ({exc})") from None


def write_ppm(path, img):
    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8), "RGB").save(path, format="PPM")


def sample_seed(seed, label, index):
    if index >= MAX_PER_CLASS:
        raise ValueError(f"at most {MAX_PER_CLASS} samples per class")
    return seed * len(ClassLabel) * MAX_PER_CLASS + int(label) * MAX_PER_CLASS + index


def make_dataset(n_per_class, seed, side=256):
    """``n_per_class`` generated images of every class, ordered by class then index."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    samples = []
    for label in ClassLabel:
        for i in range(n_per_class):
            s = sample_seed(seed, label, i)
            samples.append(Sample(f"{int(label)}-{s}", int(label), generate(label, s, side)))
    meta = {"seed": seed, "side": side, "generator_version": GENERATOR_VERSION,
            "counts": [n_per_class] * len(ClassLabel)}
    return Dataset(samples, meta)


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def stratified_split(ds: Dataset, test_fraction, seed):
    """Per class, ``round(count * test_fraction)`` shuffled samples go to the test set."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    labels = ds.labels
    train_idx, test_idx = [], []
    for label in ClassLabel:
        members = np.flatnonzero(labels == label)
        if len(members) == 0:
            continue
        if len(members) < 2:
            raise ValueError(f"class {label.display} has {len(members)} sample; need >= 2 to split")
        rng = np.random.default_rng([seed, int(label)])
        members = rng.permutation(members)
        n_test = _round_half_up(len(members) * test_fraction)
        test_idx.extend(members[:n_test].tolist())
        train_idx.extend(members[n_test:].tolist())
    rng = np.random.default_rng([seed, 99])
    train_idx = rng.permutation(train_idx).tolist()
    test_idx = rng.permutation(test_idx).tolist()
    train = ds.subset(train_idx, split="train", split_seed=seed)
    test = ds.subset(test_idx, split="test", split_seed=seed)
    for part in (train, test):
        part.meta["counts"] = part.counts()
    return train, test


def save_dataset(ds: Dataset, directory):
    os.makedirs(os.path.join(directory, "images"), exist_ok=True)
    rows = []
    for i, sample in enumerate(ds.samples):
        rel = f"images/{i:06d}.ppm"
        write_ppm(os.path.join(directory, rel), sample.load())
        rows.append((rel, sample.label, CLASS_NAMES[sample.label]))
    with open(os.path.join(directory, MANIFEST), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["relative_path", "label_code", "label_name"])
        writer.writerows(rows)
    meta = {**ds.meta, "counts": ds.counts(), "ids": [s.id for s in ds.samples]}
    with open(os.path.join(directory, METADATA), "w") as fh:
        json.dump(meta, fh, indent=1)


def load_dataset(directory, lazy=False):
    manifest = os.path.join(directory, MANIFEST)
    if not os.path.isfile(manifest):
        raise DatasetError(f"no {MANIFEST} in {directory}")
    meta = {}
    meta_path = os.path.join(directory, METADATA)
    if os.path.isfile(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
    ids = meta.pop("ids", None)
    samples = []
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["relative_path", "label_code", "label_name"]:
            raise DatasetError(f"{manifest}: unexpected header {reader.fieldnames}")
        for n, row in enumerate(reader):
            try:
                label = int(row["label_code"])
                ClassLabel(label)
            except ValueError:
                raise DatasetError(f"{manifest} line {n + 2}: bad label code "
                                   f"{row['label_code']!r}") from None
            path = os.path.join(directory, row["relative_path"])
            sid = ids[n] if ids and n < len(ids) else row["relative_path"]
            sample = Sample(sid, label, path=path)
            if not lazy:
                sample.load()
            samples.append(sample)
    if not lazy and ids is not None and len(ids) != len(samples):
        raise DatasetError(f"{directory}: metadata lists {len(ids)} ids for {len(samples)} rows")
    return Dataset(samples, meta)


def image_digest(img):
    return hashlib.sha256(np.ascontiguousarray(img).tobytes()).hexdigest()
