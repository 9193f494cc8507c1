"""Colour-words baseline: k-means RGB codebook, word histograms, linear SVM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import CROP_SIDE, RESIZE_SIDE, center_crop, resize_bilinear

CODEBOOK_SIZE = 128
CODEBOOK_PIXELS = 100_000


@dataclass(frozen=True, eq=False)
class Codebook:
    centroids: np.ndarray  # (k, 3) in [0, 255]

    def __len__(self):
        return len(self.centroids)


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray  # (classes, features)
    bias: np.ndarray     # (classes,)

    def scores(self, features):
        return np.atleast_2d(features) @ self.weights.T + self.bias


def _sq_distances(pixels, centroids):
    # ||c||^2 - 2 x.c ranks centroids exactly as the full squared distance does
    return (centroids * centroids).sum(axis=1)[None, :] - 2.0 * (pixels @ centroids.T)


def assign(pixels, centroids, chunk=65536):
    """Index of the nearest centroid per pixel; ties go to the lowest index."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    out = np.empty(len(pixels), dtype=np.int64)
    for start in range(0, len(pixels), chunk):
        block = pixels[start:start + chunk]
        out[start:start + chunk] = _sq_distances(block, centroids).argmin(axis=1)
    return out


def quantization_error(pixels, centroids):
    idx = assign(pixels, centroids)
    return float(((pixels - centroids[idx]) ** 2).sum(axis=1).mean())


def _seed_centroids(distinct, k, rng):
    """k-means++ seeding: each new centroid is a distinct pixel drawn with
    probability proportional to its squared distance from the chosen ones."""
    chosen = [int(rng.integers(len(distinct)))]
    d2 = ((distinct - distinct[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        nxt = int(rng.choice(len(distinct), p=d2 / d2.sum()))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((distinct - distinct[nxt]) ** 2).sum(axis=1))
    return distinct[chosen].copy()


def learn_codebook(pixels, k=CODEBOOK_SIZE, iters=20, seed=0, history=None):
    """Lloyd's k-means started from ``k`` distinct pixels picked by seeded k-means++.

    A cluster that loses all its members is re-seeded with the pixel farthest
    from its current centroid. If ``history`` is a list, the quantization error
    after every iteration is appended to it.
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    distinct = np.unique(pixels, axis=0)
    if len(distinct) < k:
        raise ValueError(f"need at least {k} distinct pixels, got {len(distinct)}")
    centroids = _seed_centroids(distinct, k, np.random.default_rng(seed))
    for _ in range(iters):
        idx = assign(pixels, centroids)
        counts = np.bincount(idx, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, idx, pixels)
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, None]
        empty = np.flatnonzero(~filled)
        if len(empty):
            dist = ((pixels - centroids[idx]) ** 2).sum(axis=1)
            for j in empty:
                far = int(dist.argmax())
                centroids[j] = pixels[far]
                dist[far] = 0.0
        if history is not None:
            history.append(quantization_error(pixels, centroids))
    return Codebook(centroids)


def color_histogram(img, codebook):
    """Normalized counts of nearest colour words over every pixel of ``img``."""
    idx = assign(np.asarray(img).reshape(-1, 3), codebook.centroids)
    counts = np.bincount(idx, minlength=len(codebook)).astype(np.float64)
    return counts / counts.sum()


def baseline_view(img):
    """The resized, centre-cropped RGB region the CNN also sees."""
    return center_crop(resize_bilinear(img, RESIZE_SIDE), CROP_SIDE)


def sample_pixels(images, n=CODEBOOK_PIXELS, seed=0):
    rng = np.random.default_rng([seed, 7])
    which = rng.integers(0, len(images), size=n)
    out = np.empty((n, 3), dtype=np.float64)
    for i, img in enumerate(images):
        rows = np.flatnonzero(which == i)
        if len(rows):
            flat = np.asarray(img).reshape(-1, 3)
            out[rows] = flat[rng.integers(0, len(flat), size=len(rows))]
    return out


def svm_train(features, labels, num_classes=6, lam=1e-4, epochs=50, seed=0, eta0=0.1):
    """One-vs-rest linear SVM, L2-regularized hinge loss, stochastic subgradient.

    Features are standardized internally; the scaling is folded back into the
    returned weights and biases.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if len(np.unique(y)) < 2:
        raise ValueError("SVM training needs at least two distinct classes")
    if y.min() < 0 or y.max() >= num_classes:
        raise ValueError(f"labels must lie in 0..{num_classes - 1}")
    mu = x.mean(axis=0)
    sd = np.maximum(x.std(axis=0), 1e-12)
    z = (x - mu) / sd
    signs = np.where(y[:, None] == np.arange(num_classes)[None, :], 1.0, -1.0)
    w = np.zeros((num_classes, x.shape[1]))
    b = np.zeros(num_classes)
    rng = np.random.default_rng(seed)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(len(z)):
            eta = eta0 / (1.0 + lam * eta0 * t)
            t += 1
            margin = signs[i] * (w @ z[i] + b)
            w *= 1.0 - eta * lam
            active = margin < 1.0
            if active.any():
                step = eta * signs[i, active]
                w[active] += step[:, None] * z[i]
                b[active] += step
    weights = w / sd
    return LinearModel(weights, b - weights @ mu)


def svm_predict(model, features):
    """Arg-max class over the per-class scores, lowest index on ties."""
    scores = model.scores(features)
    pred = scores.argmax(axis=1)
    return int(pred[0]) if np.ndim(features) == 1 else pred


@dataclass(frozen=True, eq=False)
class ColorBaseline:
    codebook: Codebook
    model: LinearModel

    def features(self, images):
        return np.stack([color_histogram(baseline_view(img), self.codebook) for img in images])

    def predict(self, images):
        return svm_predict(self.model, self.features(images))


def train_baseline(images, labels, seed=0, k=CODEBOOK_SIZE, kmeans_iters=20,
                   lam=1e-4, epochs=50):
    views = [baseline_view(img) for img in images]
    codebook = learn_codebook(sample_pixels(views, seed=seed), k=k, iters=kmeans_iters, seed=seed)
    feats = np.stack([color_histogram(v, codebook) for v in views])
    model = svm_train(feats, labels, lam=lam, epochs=epochs, seed=seed)
    return ColorBaseline(codebook, model)
