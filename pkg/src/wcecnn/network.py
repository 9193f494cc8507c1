"""Layer specs, network graphs and the forward/backward passes.

A network is one or more convolutional streams, each reading a subset of the
input bands. Stream outputs are concatenated along the channel axis and fed
to a head of fully-connected layers that ends in softmax logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from . import layers as L

NUM_CLASSES = 6


@dataclass(frozen=True)
class Conv:
    filters: int
    height: int
    width: int
    padding: str = L.SAME
    kind = "Conv"


@dataclass(frozen=True)
class LRN:
    size: int = 5
    kind = "LRN"


@dataclass(frozen=True)
class MaxPool:
    window: int
    stride: int
    ceil: bool = False
    kind = "MaxPool"


@dataclass(frozen=True)
class FC:
    outputs: int
    kind = "FC"


@dataclass(frozen=True)
class ReLU:
    kind = "ReLU"


@dataclass(frozen=True)
class Sigmoid:
    kind = "Sigmoid"


LayerSpec = Union[Conv, LRN, MaxPool, FC, ReLU, Sigmoid]


@dataclass(frozen=True)
class Stream:
    name: str
    bands: Tuple[int, ...]
    layers: Tuple[LayerSpec, ...]


@dataclass(frozen=True)
class NetworkSpec:
    """Declared input geometry plus the layer graph.

    ``source_bands`` index into the 5-band (R, G, B, H, L) sample; each
    stream's ``bands`` index into the network input itself.
    """

    name: str
    source_bands: Tuple[int, ...]
    input_size: Tuple[int, int]
    streams: Tuple[Stream, ...]
    head: Tuple[LayerSpec, ...]

    @property
    def input_shape(self):
        return (len(self.source_bands),) + tuple(self.input_size)

    def param_shapes(self):
        """Ordered ``{name: shape}`` for every weight and bias tensor."""
        shapes = {}
        widths = []
        for stream in self.streams:
            c = len(stream.bands)
            h, w = self.input_size
            for i, layer in enumerate(stream.layers):
                c, h, w = _layer_shape(layer, (c, h, w), shapes, f"{stream.name}.{i}")
            widths.append((c, h, w))
        c = sum(s[0] for s in widths)
        shape = (c,) + widths[0][1:]
        for i, layer in enumerate(self.head):
            shape = _layer_shape(layer, shape, shapes, f"head.{i}")
        return shapes

    def activation_shapes(self):
        """Per-stream and head output shapes as ``[(label, (C, H, W) or (D,)), ...]``."""
        out = []
        ends = []
        for stream in self.streams:
            shape = (len(stream.bands),) + tuple(self.input_size)
            for i, layer in enumerate(stream.layers):
                shape = _layer_shape(layer, shape, None, "")
                out.append((f"{stream.name}.{i}.{layer.kind}", shape))
            ends.append(shape)
        shape = (sum(e[0] for e in ends),) + ends[0][1:]
        out.append(("concat", shape))
        for i, layer in enumerate(self.head):
            shape = _layer_shape(layer, shape, None, "")
            out.append((f"head.{i}.{layer.kind}", shape))
        return out


def _layer_shape(layer, shape, shapes, prefix):
    if isinstance(layer, Conv):
        c, h, w = shape
        if shapes is not None:
            shapes[prefix + ".w"] = (layer.filters, c, layer.height, layer.width)
            shapes[prefix + ".b"] = (layer.filters,)
        return (layer.filters,) + L.conv_output_size(h, w, layer.height, layer.width, layer.padding)
    if isinstance(layer, MaxPool):
        c, h, w = shape
        return (c, L.pool_output_size(h, layer.window, layer.stride, layer.ceil),
                L.pool_output_size(w, layer.window, layer.stride, layer.ceil))
    if isinstance(layer, FC):
        if shapes is not None:
            shapes[prefix + ".w"] = (layer.outputs, int(np.prod(shape)))
            shapes[prefix + ".b"] = (layer.outputs,)
        return (layer.outputs,)
    return shape


@dataclass
class Network:
    spec: NetworkSpec
    params: Dict[str, np.ndarray]

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def astype(self, dtype):
        return Network(self.spec, {k: v.astype(dtype) for k, v in self.params.items()})


@dataclass
class ForwardTrace:
    """Everything the backward pass needs, plus the outputs."""

    logits: np.ndarray
    probs: np.ndarray
    loss: Optional[float] = None
    labels: Optional[np.ndarray] = None
    stream_caches: List[list] = field(default_factory=list)
    head_cache: list = field(default_factory=list)
    stream_widths: List[int] = field(default_factory=list)
    # activation after every head layer
    head_outputs: List[np.ndarray] = field(default_factory=list)


def _forward_layer(layer, x, params, prefix, need_cache):
    if isinstance(layer, Conv):
        y, cache = L.conv2d_forward_cached(x, params[prefix + ".w"], params[prefix + ".b"],
                                           layer.padding)
        if not need_cache:
            cache = None
        return y, ("conv", cache)
    if isinstance(layer, LRN):
        y, cache = L.lrn_forward_cached(x, layer.size)
        return y, ("lrn", cache)
    if isinstance(layer, MaxPool):
        y, cache = L.maxpool_forward_cached(x, layer.window, layer.stride, layer.ceil)
        return y, ("pool", cache)
    if isinstance(layer, FC):
        y = L.fc_forward(x, params[prefix + ".w"], params[prefix + ".b"])
        return y, ("fc", x)
    if isinstance(layer, ReLU):
        return L.relu(x), ("relu", x)
    if isinstance(layer, Sigmoid):
        y = L.sigmoid(x)
        return y, ("sigmoid", y)
    raise TypeError(f"unsupported layer {layer!r}")


def _backward_layer(layer, grad, entry, params, prefix, grads, need_input_grad=True):
    tag, cache = entry
    if tag == "conv":
        dx, dw, db = L.conv2d_backward(grad, cache, need_input_grad)
        grads[prefix + ".w"] = dw
        grads[prefix + ".b"] = db
        return dx
    if tag == "lrn":
        return L.lrn_backward(grad, cache)
    if tag == "pool":
        return L.maxpool_backward(grad, cache)
    if tag == "fc":
        dx, dw, db = L.fc_backward(grad, cache, params[prefix + ".w"])
        grads[prefix + ".w"] = dw
        grads[prefix + ".b"] = db
        return dx
    if tag == "relu":
        return L.relu_backward(grad, cache)
    if tag == "sigmoid":
        return L.sigmoid_backward(grad, cache)
    raise TypeError(f"unsupported cache tag {tag!r}")


def network_forward(net, x, labels=None, keep_cache=True):
    """Run ``net`` on a sample ``(C, H, W)`` or batch ``(N, C, H, W)``.

    When ``labels`` are given the trace also carries the mean softmax loss and
    can be passed to :func:`network_backward`.
    """
    spec = net.spec
    x4 = x[None] if x.ndim == 3 else x
    if x4.shape[1:] != spec.input_shape:
        raise L.ShapeError(f"{spec.name} expects input {spec.input_shape}, got {x4.shape[1:]}")
    trace = ForwardTrace(logits=None, probs=None)
    outs = []
    for stream in spec.streams:
        h = x4[:, list(stream.bands)]
        caches = []
        for i, layer in enumerate(stream.layers):
            h, entry = _forward_layer(layer, h, net.params, f"{stream.name}.{i}", keep_cache)
            caches.append(entry if keep_cache else None)
        outs.append(h)
        trace.stream_caches.append(caches)
        trace.stream_widths.append(h.shape[1])
    h = L.concat_channels(outs)
    for i, layer in enumerate(spec.head):
        h, entry = _forward_layer(layer, h, net.params, f"head.{i}", keep_cache)
        trace.head_cache.append(entry if keep_cache else None)
        trace.head_outputs.append(h)
    trace.logits = h
    if labels is not None:
        labels = np.atleast_1d(np.asarray(labels))
        trace.loss, trace.probs = L.softmax_loss(h, labels)
        trace.labels = labels
    else:
        trace.probs = L.softmax(h)
    if x.ndim == 3:
        trace.logits, trace.probs = trace.logits[0], trace.probs[0]
    return trace


def network_backward(trace, net):
    """Gradients of the trace's mean loss for every parameter tensor."""
    if trace.labels is None:
        raise ValueError("trace was produced without labels; nothing to differentiate")
    if not trace.head_cache or trace.head_cache[0] is None:
        raise ValueError("trace was produced without caches")
    spec = net.spec
    probs = trace.probs if trace.probs.ndim == 2 else trace.probs[None]
    grad = L.softmax_loss_backward(probs, trace.labels)
    grads = {}
    for i in reversed(range(len(spec.head))):
        grad = _backward_layer(spec.head[i], grad, trace.head_cache[i], net.params,
                               f"head.{i}", grads)
    parts = L.concat_backward(grad, trace.stream_widths)
    for stream, caches, g in zip(spec.streams, trace.stream_caches, parts):
        for i in reversed(range(len(stream.layers))):
            # the raw input needs no gradient
            g = _backward_layer(stream.layers[i], g, caches[i], net.params,
                                f"{stream.name}.{i}", grads, need_input_grad=(i > 0))
    return {name: grads[name] for name in net.params}


def predict(net, x, batch_size=64):
    """Arg-max class per sample (lowest index on ties)."""
    out = []
    for start in range(0, len(x), batch_size):
        trace = network_forward(net, x[start:start + batch_size], keep_cache=False)
        out.append(trace.logits.argmax(axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def penultimate_features(net, x, batch_size=64):
    """Activations of the last hidden layer before the output FC."""
    fc_idx = [i for i, layer in enumerate(net.spec.head) if isinstance(layer, FC)]
    if len(fc_idx) < 2:
        raise ValueError(f"{net.spec.name} has no hidden fully-connected layer")
    last_hidden = fc_idx[-1] - 1
    out = []
    for start in range(0, len(x), batch_size):
        trace = network_forward(net, x[start:start + batch_size], keep_cache=False)
        out.append(trace.head_outputs[last_hidden])
    return np.concatenate(out)
