"""Glue between datasets, preprocessing, training and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import arch, checkpoint
from .baseline import Codebook, ColorBaseline, LinearModel, train_baseline
from .channels import DEFAULT_SIGMA, ChannelStats, compute_stats, raw_bands
from .evaluate import confusion_matrix, report_from
from .network import Network, network_forward, penultimate_features, predict
from .optim import TrainConfig, train

log = logging.getLogger(__name__)

BASELINE_ID = "color-svm"


def bands_for(ds, sigma=DEFAULT_SIGMA):
    """Unstandardized ``(N, 5, 100, 100)`` float32 bands for every sample of ``ds``."""
    out = np.empty((len(ds), 5, 100, 100), dtype=np.float32)
    for i, sample in enumerate(ds.samples):
        out[i] = raw_bands(sample.load(), sigma)
    return out


def network_inputs(bands, spec, stats: Optional[ChannelStats]):
    """Standardize (if ``stats``) and select the bands ``spec`` consumes."""
    x = bands[:, list(spec.source_bands)]
    if stats is not None:
        idx = list(spec.source_bands)
        x -= stats.mean[idx].reshape(-1, 1, 1)
        x /= stats.std[idx].reshape(-1, 1, 1)
    return np.ascontiguousarray(x, dtype=np.float32)


@dataclass
class CnnModel:
    net: Network
    stats: Optional[ChannelStats]
    sigma: float = DEFAULT_SIGMA

    def inputs(self, bands):
        return network_inputs(bands, self.net.spec, self.stats)

    def predict_bands(self, bands):
        return predict(self.net, self.inputs(bands))

    def logits_bands(self, bands, batch_size=64):
        x = self.inputs(bands)
        return np.concatenate([network_forward(self.net, x[i:i + batch_size], keep_cache=False).logits
                               for i in range(0, len(x), batch_size)])

    def features_bands(self, bands):
        return penultimate_features(self.net, self.inputs(bands))

    def save(self, path, meta=None):
        arch.save_checkpoint(self.net, self.stats, path, {**(meta or {}), "sigma": self.sigma})

    @classmethod
    def load(cls, path):
        net, stats, meta = arch.load_checkpoint(path)
        return cls(net, stats, float(meta.get("sigma", DEFAULT_SIGMA))), meta


def train_cnn(kind, train_bands, train_labels, config: TrainConfig, standardize=True,
              sigma=DEFAULT_SIGMA, eval_bands=None, eval_labels=None):
    """Fit stats on the training bands, then train ``kind`` with SGD."""
    spec = arch.build(kind)
    stats = compute_stats(train_bands) if standardize else None
    x = network_inputs(train_bands, spec, stats)
    evaluate = None
    if eval_bands is not None:
        xe = network_inputs(eval_bands, spec, stats)

        def evaluate(net):
            return report_from(confusion_matrix(eval_labels, predict(net, xe))).mean

    net, trainlog = train(spec, x, train_labels, config, evaluate=evaluate)
    return CnnModel(net, stats, sigma), trainlog


def fit_color_baseline(images, labels, seed=0, lam=1e-4, epochs=50):
    model = train_baseline(images, labels, seed=seed, lam=lam, epochs=epochs)
    # stored as float32 so a saved baseline reproduces the in-memory one exactly
    return ColorBaseline(Codebook(model.codebook.centroids.astype(np.float32)),
                         LinearModel(model.model.weights.astype(np.float32),
                                     model.model.bias.astype(np.float32)))


def save_baseline(model: ColorBaseline, path, meta=None):
    tensors = {"codebook": model.codebook.centroids, "svm.w": model.model.weights,
               "svm.b": model.model.bias}
    checkpoint.save(path, BASELINE_ID, tensors, None, meta)


def load_baseline(path):
    arch_id, tensors, _, meta = checkpoint.load(path)
    if arch_id != BASELINE_ID:
        raise checkpoint.CheckpointError(f"{path}: holds {arch_id!r}, not a colour baseline")
    try:
        model = ColorBaseline(Codebook(tensors["codebook"]),
                              LinearModel(tensors["svm.w"], tensors["svm.b"]))
    except KeyError as exc:
        raise checkpoint.CheckpointError(f"{path}: missing tensor {exc}") from None
    return model, meta
