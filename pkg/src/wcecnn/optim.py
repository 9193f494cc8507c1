"""Initialization, step learning-rate schedule, plain SGD and the training loop."""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .network import Network, network_backward, network_forward

log = logging.getLogger(__name__)

PAPER_GAUSSIAN = "paper-gaussian"
SCALED_GAUSSIAN = "scaled-gaussian"


@dataclass
class TrainConfig:
    base_lr: float = 0.1
    step_iters: int = 100_000
    decay_factor: float = 0.1
    max_iters: int = 400_000
    batch_size: int = 128
    init: str = PAPER_GAUSSIAN
    init_std: float = 1.0
    seed: int = 0
    log_every: int = 1000
    precision: str = "float32"

    def __post_init__(self):
        for name in ("base_lr", "step_iters", "max_iters", "batch_size", "init_std", "log_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.decay_factor < 1:
            raise ValueError(f"decay_factor must lie in (0, 1), got {self.decay_factor}")
        if self.init not in (PAPER_GAUSSIAN, SCALED_GAUSSIAN):
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, got {self.precision!r}")

    @property
    def dtype(self):
        return np.dtype(self.precision)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def paper_config(**overrides) -> TrainConfig:
    """The published recipe: lr 0.1 decayed 10x every 100k iterations, 400k total."""
    return TrainConfig(**overrides)


def desk_config(**overrides) -> TrainConfig:
    """Settings sized for one laptop core: 300 batches of 32, lr 0.03 cut 10x after 210."""
    values = dict(base_lr=0.03, step_iters=210, decay_factor=0.1, max_iters=300,
                  batch_size=32, init=SCALED_GAUSSIAN, log_every=25)
    values.update(overrides)
    return TrainConfig(**values)


@dataclass
class LogRecord:
    iteration: int
    lr: float
    loss: float
    accuracy: Optional[float] = None


@dataclass
class TrainLog:
    records: List[LogRecord] = field(default_factory=list)

    def append(self, record):
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("log iterations must be strictly increasing")
        self.records.append(record)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "lr", "loss", "accuracy"])
            for r in self.records:
                acc = "" if r.accuracy is None else f"{r.accuracy:.6f}"
                writer.writerow([r.iteration, f"{r.lr:.8g}", f"{r.loss:.8f}", acc])


def init_params(spec, config: TrainConfig):
    """Draw weights from N(0, std^2) and zero the biases.

    ``paper-gaussian`` uses ``config.init_std`` for every weight tensor;
    ``scaled-gaussian`` uses ``1/sqrt(fan_in)``.
    """
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=config.dtype)
            continue
        fan_in = int(np.prod(shape[1:]))
        std = config.init_std if config.init == PAPER_GAUSSIAN else 1.0 / np.sqrt(fan_in)
        params[name] = (rng.standard_normal(shape) * std).astype(config.dtype)
    return params


def lr_at(iteration, config: TrainConfig):
    if iteration < 0 or iteration >= config.max_iters:
        raise ValueError(f"iteration {iteration} outside [0, {config.max_iters})")
    return config.base_lr * config.decay_factor ** (iteration // config.step_iters)


def sgd_step(params, grads, lr):
    """Return new parameters ``p - lr * g``; inputs are left untouched."""
    if params.keys() != grads.keys():
        raise ValueError("parameter and gradient names differ")
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {p.shape}")
        out[name] = (p - lr * g).astype(p.dtype, copy=False)
    return out


def batch_order(n, config: TrainConfig):
    """Yield index batches forever, reshuffling (seeded) at every epoch."""
    rng = np.random.default_rng([config.seed, 1])
    bs = min(config.batch_size, n)
    while True:
        perm = rng.permutation(n)
        for start in range(0, n - bs + 1, bs):
            yield perm[start:start + bs]


def train(spec, samples, labels, config: TrainConfig,
          evaluate: Optional[Callable[[Network], float]] = None,
          params=None):
    """Mini-batch SGD for ``config.max_iters`` iterations.

    ``samples`` holds the network input bands, shape ``(N,) + spec.input_shape``.
    Returns the trained :class:`Network` and its :class:`TrainLog`. When
    ``evaluate`` is given it is called on the current network at every log
    point and its result recorded as held-out accuracy.
    """
    labels = np.asarray(labels)
    if len(samples) == 0:
        raise ValueError("cannot train on an empty dataset")
    if len(samples) != len(labels):
        raise ValueError(f"{len(samples)} samples but {len(labels)} labels")
    if params is None:
        params = init_params(spec, config)
    net = Network(spec, params)
    trainlog = TrainLog()
    batches = batch_order(len(samples), config)
    window = []
    for it in range(config.max_iters):
        idx = next(batches)
        x = np.asarray(samples[idx], dtype=config.dtype)
        trace = network_forward(net, x, labels[idx])
        grads = network_backward(trace, net)
        lr = lr_at(it, config)
        net = Network(spec, sgd_step(net.params, grads, lr))
        window.append(trace.loss)
        if not np.isfinite(trace.loss):
            raise FloatingPointError(f"training diverged at iteration {it} (loss={trace.loss})")
        if (it + 1) % config.log_every == 0 or it + 1 == config.max_iters:
            acc = evaluate(net) if evaluate is not None else None
            trainlog.append(LogRecord(it, lr, float(np.mean(window)), acc))
            log.info("iter %d lr %.3g loss %.4f%s", it, lr, np.mean(window),
                     "" if acc is None else f" acc {acc:.4f}")
            window = []
    return net, trainlog
