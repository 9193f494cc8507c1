"""Builders for the four network architectures and their parameter accounting."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List

import numpy as np

from . import checkpoint
from .network import (FC, LRN, NUM_CLASSES, Conv, MaxPool, Network, NetworkSpec, ReLU, Stream,
                      _layer_shape)

RGB_BANDS = (0, 1, 2)
ALL_BANDS = (0, 1, 2, 3, 4)


class ArchKind(str, enum.Enum):
    BASIC_RGB = "basic-rgb"
    EARLY_FUSION = "early"
    LATE_FUSION = "late"
    VGG_STYLE = "vgg"


def _lrn_block(filters, size, first_pool):
    pool = MaxPool(4, 4) if first_pool else MaxPool(2, 2, ceil=True)
    return (Conv(filters, size, size), ReLU(), LRN(5), pool)


def _three_conv_stream(name, bands, filters):
    return Stream(name, bands,
                  _lrn_block(filters, 25, True)
                  + _lrn_block(filters, 5, False)
                  + _lrn_block(filters, 3, False))


def _vgg_stream():
    layers = []
    for i, filters in enumerate((16, 32, 64, 128)):
        layers += [Conv(filters, 3, 3), ReLU(), Conv(filters, 3, 3), ReLU()]
        layers.append(MaxPool(2, 2, ceil=i > 0))
    return Stream("vgg", (0, 1, 2, 3, 4), tuple(layers))


def _head():
    return (FC(512), ReLU(), FC(512), ReLU(), FC(NUM_CLASSES))


def build(kind, input_size=100):
    """Return the :class:`NetworkSpec` for ``kind``.

    ``input_size`` shrinks the spatial geometry (used for fast gradient
    checks); the paper networks use 100.
    """
    kind = ArchKind(kind)
    size = (input_size, input_size)
    if kind is ArchKind.BASIC_RGB:
        streams = (_three_conv_stream("rgb", (0, 1, 2), 64),)
        return NetworkSpec(kind.value, RGB_BANDS, size, streams, _head())
    if kind is ArchKind.EARLY_FUSION:
        streams = (_three_conv_stream("rgbhl", (0, 1, 2, 3, 4), 64),)
        return NetworkSpec(kind.value, ALL_BANDS, size, streams, _head())
    if kind is ArchKind.LATE_FUSION:
        # concat order follows the table: RGB, H, L
        streams = (_three_conv_stream("rgb", (0, 1, 2), 32),
                   _three_conv_stream("h", (3,), 16),
                   _three_conv_stream("l", (4,), 16))
        return NetworkSpec(kind.value, ALL_BANDS, size, streams, _head())
    return NetworkSpec(kind.value, ALL_BANDS, size, (_vgg_stream(),), _head())


@dataclass(frozen=True)
class ParamRow:
    layer: str
    shape: tuple
    weights: int
    biases: int
    formula: str


def _fmt_shape(shape):
    if len(shape) == 1:
        return f"[1x1x{shape[0]}]"
    c, h, w = shape
    return f"[{h}x{w}x{c}]"


def param_rows(spec: NetworkSpec) -> List[ParamRow]:
    """One row per layer that produces a table line (conv, pool, concat, FC)."""
    rows = []
    multi = len(spec.streams) > 1
    for stream in spec.streams:
        shape = (len(stream.bands),) + tuple(spec.input_size)
        prefix = f"{stream.name.upper()} " if multi else ""
        for layer in stream.layers:
            in_shape = shape
            shape = _next_shape(layer, shape)
            if isinstance(layer, Conv):
                c = in_shape[0]
                n = layer.height * layer.width * c * layer.filters
                rows.append(ParamRow(f"{prefix}CONV{layer.height}-{layer.filters}", shape, n,
                                     layer.filters,
                                     f"({layer.height}*{layer.width}*{c})*{layer.filters}"))
            elif isinstance(layer, MaxPool):
                rows.append(ParamRow(f"{prefix}POOL{layer.window}-{shape[0]}", shape, 0, 0, ""))
    ends = [_stream_output(spec, s) for s in spec.streams]
    shape = (sum(e[0] for e in ends),) + ends[0][1:]
    if multi:
        rows.append(ParamRow("CONCAT", shape, 0, 0, ""))
    for layer in spec.head:
        if isinstance(layer, FC):
            fan_in = int(np.prod(shape))
            formula = (f"{shape[1]}*{shape[2]}*{shape[0]}*{layer.outputs}" if len(shape) == 3
                       else f"{fan_in}*{layer.outputs}")
            shape = (layer.outputs,)
            rows.append(ParamRow("FC", shape, fan_in * layer.outputs, layer.outputs, formula))
    return rows


def _next_shape(layer, shape):
    return _layer_shape(layer, shape, None, "")


def _stream_output(spec, stream):
    shape = (len(stream.bands),) + tuple(spec.input_size)
    for layer in stream.layers:
        shape = _next_shape(layer, shape)
    return shape


def param_count(spec: NetworkSpec):
    """``(rows, total_weights, total_biases)``; the total counts weights only."""
    rows = param_rows(spec)
    return rows, sum(r.weights for r in rows), sum(r.biases for r in rows)


def format_param_table(spec: NetworkSpec) -> str:
    rows, total, biases = param_count(spec)
    lines = [f"{'Layer':<16}{'Size':<16}# Parameters"]
    for band_name, shape in _input_rows(spec):
        lines.append(f"{band_name:<16}{_fmt_shape(shape):<16}")
    for r in rows:
        count = f"{r.formula} = {r.weights:,}" if r.weights else ""
        lines.append(f"{r.layer:<16}{_fmt_shape(r.shape):<16}{count}")
    lines.append(f"Total Number of Parameters: {total:,}")
    lines.append(f"Biases (not counted above): {biases:,}")
    return "\n".join(lines)


def _input_rows(spec):
    names = {RGB_BANDS: "INPUT_RGB", ALL_BANDS: "INPUT_RGBHL", (3,): "INPUT_H", (4,): "INPUT_L"}
    if len(spec.streams) == 1:
        shape = (len(spec.source_bands),) + tuple(spec.input_size)
        return [(names.get(spec.source_bands, "INPUT"), shape)]
    return [(names.get(s.bands, "INPUT"), (len(s.bands),) + tuple(spec.input_size))
            for s in spec.streams]


def save_checkpoint(net, stats, path, meta=None):
    """Write ``net`` (weights as float32) and its preprocessing stats to ``path``."""
    arch_id = f"{net.spec.name}:{net.spec.input_size[0]}"
    checkpoint.save(path, arch_id, net.params, stats, meta)


def load_checkpoint(path):
    """Return ``(Network, ChannelStats or None, meta)``."""
    arch_id, tensors, stats, meta = checkpoint.load(path)
    name, _, size = arch_id.partition(":")
    try:
        spec = build(name, int(size) if size else 100)
    except ValueError:
        raise checkpoint.CheckpointError(f"{path}: unknown architecture {arch_id!r}") from None
    expected = spec.param_shapes()
    got = {k: v.shape for k, v in tensors.items()}
    if got != expected:
        raise checkpoint.CheckpointError(f"{path}: tensors do not match architecture {arch_id}")
    return Network(spec, {k: tensors[k] for k in expected}), stats, meta
