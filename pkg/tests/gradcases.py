"""Finite-difference gradient cases shared by the unit and acceptance suites.

Each case returns the worst relative error between the analytic gradient and
central differences (float64, eps=1e-5).
"""

import numpy as np

from oracles import numeric_grad, rel_error
from wcecnn import arch, layers as L, optim
from wcecnn.network import Network, network_backward, network_forward

EPS = 1e-5
# below this magnitude a gradient is compared absolutely rather than relatively
FLOOR = 1e-6


def _worst(analytic, numeric):
    return float(rel_error(analytic, numeric, FLOOR).max())


def _probe(f, arrays, analytic):
    return max(_worst(g.ravel(), numeric_grad(f, a, EPS)) for a, g in zip(arrays, analytic))


def conv_case(rng, method, padding=L.SAME):
    x = rng.standard_normal((2, 2, 6, 7))
    w = rng.standard_normal((3, 2, 3, 3)) if method == "direct" else rng.standard_normal((2, 2, 5, 5))
    b = rng.standard_normal(w.shape[0])
    y, cache = L.conv2d_forward_cached(x, w, b, padding, method)
    r = rng.standard_normal(y.shape)
    dx, dw, db = L.conv2d_backward(r, cache)
    f = lambda: float((L.conv2d_forward(x, w, b, padding, method) * r).sum())  # noqa: E731
    return _probe(f, [x, w, b], [dx, dw, db])


def lrn_case(rng, size=5):
    x = rng.standard_normal((2, 7, 3, 3)) * 1.5
    y, cache = L.lrn_forward_cached(x, size)
    r = rng.standard_normal(y.shape)
    dx = L.lrn_backward(r, cache)
    return _probe(lambda: float((L.lrn_forward(x, size) * r).sum()), [x], [dx])


def pool_case(rng, window, stride, ceil):
    x = rng.standard_normal((2, 2, 9, 8))
    y, cache = L.maxpool_forward_cached(x, window, stride, ceil)
    r = rng.standard_normal(y.shape)
    dx = L.maxpool_backward(r, cache)
    f = lambda: float((L.maxpool_forward(x, window, stride, ceil) * r).sum())  # noqa: E731
    return _probe(f, [x], [dx])


def fc_case(rng):
    x = rng.standard_normal((3, 2, 2, 2))
    w = rng.standard_normal((4, 8))
    b = rng.standard_normal(4)
    r = rng.standard_normal((3, 4))
    dx, dw, db = L.fc_backward(r, x, w)
    return _probe(lambda: float((L.fc_forward(x, w, b) * r).sum()), [x, w, b], [dx, dw, db])


def activation_case(rng, kind):
    # keep ReLU inputs away from the kink
    x = rng.standard_normal((3, 8))
    x += np.sign(x) * 0.1
    r = rng.standard_normal(x.shape)
    if kind == "relu":
        dx = L.relu_backward(r, x)
    else:
        dx = L.sigmoid_backward(r, L.sigmoid(x))
    return _probe(lambda: float((L.activation_forward(x, kind) * r).sum()), [x], [dx])


def concat_case(rng):
    a, b = rng.standard_normal((2, 2, 3, 3)), rng.standard_normal((2, 3, 3, 3))
    r = rng.standard_normal((2, 5, 3, 3))
    ga, gb = L.concat_backward(r, [2, 3])
    return _probe(lambda: float((L.concat_channels([a, b]) * r).sum()), [a, b], [ga, gb])


def softmax_case(rng):
    z = rng.standard_normal((4, 6)) * 3
    labels = np.array([0, 5, 2, 2])
    _, probs = L.softmax_loss(z, labels)
    g = L.softmax_loss_backward(probs, labels)
    return _probe(lambda: L.softmax_loss(z, labels)[0], [z], [g])


LAYER_CASES = {
    "conv-direct": lambda rng: conv_case(rng, "direct"),
    "conv-direct-valid": lambda rng: conv_case(rng, "direct", L.VALID),
    "conv-fft": lambda rng: conv_case(rng, "fft"),
    "lrn": lrn_case,
    "lrn-n2": lambda rng: lrn_case(rng, 2),
    "maxpool-2x2": lambda rng: pool_case(rng, 2, 2, False),
    "maxpool-ceil": lambda rng: pool_case(rng, 2, 2, True),
    "maxpool-overlap": lambda rng: pool_case(rng, 3, 2, True),
    "fc": fc_case,
    "relu": lambda rng: activation_case(rng, "relu"),
    "sigmoid": lambda rng: activation_case(rng, "sigmoid"),
    "concat": concat_case,
    "softmax-loss": softmax_case,
}


def _pattern(trace):
    """Bytes identifying every ReLU on/off state and pool arg-max choice."""
    parts = []
    for entry in [e for caches in trace.stream_caches for e in caches] + trace.head_cache:
        tag, cache = entry
        if tag == "relu":
            parts.append(np.packbits(cache > 0).tobytes())
        elif tag == "pool":
            parts.append(cache["arg"].tobytes())
    return b"".join(parts)


def network_case(kind, seed=0, probes=4):
    """End-to-end check on a 16x16 version of ``kind``; returns (worst error, skipped).

    Per parameter tensor we probe ``probes`` random entries plus the
    ``probes`` entries with the largest analytic gradient. A probe whose
    +/-eps evaluations land on different ReLU or max-pool branches straddles
    a kink, where no derivative exists; it is skipped and counted.
    """
    rng = np.random.default_rng(seed)
    spec = arch.build(kind, input_size=16)
    config = optim.TrainConfig(init=optim.SCALED_GAUSSIAN, precision="float64", seed=seed)
    params = optim.init_params(spec, config)
    for name in params:
        if name.endswith(".b"):
            params[name] = rng.standard_normal(params[name].shape) * 0.1
    net = Network(spec, params)
    x = rng.standard_normal((2,) + spec.input_shape)
    labels = np.array([1, 4])
    grads = network_backward(network_forward(net, x, labels), net)
    worst, skipped = 0.0, 0
    for name, p in params.items():
        g = grads[name].ravel()
        flat = p.reshape(-1)
        coords = set(rng.choice(g.size, size=min(probes, g.size), replace=False).tolist())
        coords |= set(np.argsort(-np.abs(g))[:probes].tolist())
        for i in sorted(coords):
            old = flat[i]
            flat[i] = old + EPS
            up = network_forward(net, x, labels)
            flat[i] = old - EPS
            down = network_forward(net, x, labels)
            flat[i] = old
            if _pattern(up) != _pattern(down):
                skipped += 1
                continue
            numeric = (up.loss - down.loss) / (2 * EPS)
            worst = max(worst, _worst(g[i:i + 1], np.array([numeric])))
    return worst, skipped
