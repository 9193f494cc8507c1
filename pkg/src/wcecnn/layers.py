"""Forward and backward kernels for the CNN layer types.

Tensors are plain numpy arrays in row-major order. Spatial ops accept a
single sample ``(C, H, W)`` or a batch ``(N, C, H, W)`` and return the same
rank they were given. Backward functions take the cache returned by the
matching ``*_forward_cached`` call.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

VALID = "valid"
SAME = "same"

# Kernels at least this large (m * n) go through the FFT path.
FFT_MIN_TAPS = 100


class ShapeError(ValueError):
    """Raised when tensor shapes are inconsistent for an op."""


def _batched(x):
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected a (C,H,W) or (N,C,H,W) tensor, got ndim={x.ndim}")


def _same_pads(m):
    top = (m - 1) // 2
    return top, m - 1 - top


# -- convolution -------------------------------------------------------------

def conv_output_size(h, w, m, n, padding=VALID):
    if padding == SAME:
        return h, w
    if padding != VALID:
        raise ValueError(f"unknown padding mode {padding!r}")
    return h - m + 1, w - n + 1


def _pad_input(x, m, n, padding):
    if padding == SAME:
        (t, b), (l, r) = _same_pads(m), _same_pads(n)
        return np.pad(x, ((0, 0), (0, 0), (t, b), (l, r)))
    return x


def _check_conv(x, weights, bias, padding):
    _, c, h, w = x.shape
    if weights.ndim != 4:
        raise ShapeError(f"weights must be (k,C,m,n), got shape {weights.shape}")
    k, wc, m, n = weights.shape
    if wc != c:
        raise ShapeError(f"channel axis mismatch: input has {c}, filters expect {wc}")
    if bias.shape != (k,):
        raise ShapeError(f"bias axis mismatch: expected ({k},), got {bias.shape}")
    if padding == VALID:
        if m > h:
            raise ShapeError(f"height axis: filter height {m} exceeds input height {h}")
        if n > w:
            raise ShapeError(f"width axis: filter width {n} exceeds input width {w}")
    elif padding != SAME:
        raise ValueError(f"unknown padding mode {padding!r}")


def _use_fft(weights, method):
    if method == "auto":
        return weights.shape[2] * weights.shape[3] >= FFT_MIN_TAPS
    if method not in ("fft", "direct"):
        raise ValueError(f"unknown conv method {method!r}")
    return method == "fft"


# which operand axes to transpose so each contraction is a per-frequency matmul
_CONTRACTIONS = {
    "ncf,kcf->nkf": (False, True),
    "nkf,ncf->kcf": (True, False),
    "nkf,kcf->ncf": (False, False),
}


def _spectral_contract(a, b, subscripts):
    """Contract the leading two axes of complex spectra, one small matmul per frequency."""
    ta, tb = _CONTRACTIONS[subscripts]
    fa = np.moveaxis(a.reshape(a.shape[0], a.shape[1], -1), 2, 0)
    fb = np.moveaxis(b.reshape(b.shape[0], b.shape[1], -1), 2, 0)
    if ta:
        fa = fa.transpose(0, 2, 1)
    if tb:
        fb = fb.transpose(0, 2, 1)
    out = np.matmul(np.ascontiguousarray(fa), np.ascontiguousarray(fb))
    return np.moveaxis(out, 0, 2).reshape(out.shape[1:] + a.shape[2:])


def conv2d_forward_cached(x, weights, bias, padding=VALID, method="auto"):
    x4, squeeze = _batched(x)
    _check_conv(x4, weights, bias, padding)
    k, c, m, n = weights.shape
    xp = _pad_input(x4, m, n, padding)
    nb, _, hp, wp = xp.shape
    ho, wo = hp - m + 1, wp - n + 1
    cache = {"xshape": x4.shape, "padding": padding, "weights": weights,
             "squeeze": squeeze}
    if _use_fft(weights, method):
        shape = (sfft.next_fast_len(hp, real=True), sfft.next_fast_len(wp, real=True))
        xf = sfft.rfft2(xp, s=shape)
        wf = sfft.rfft2(weights, s=shape)
        yf = _spectral_contract(xf, np.conj(wf), "ncf,kcf->nkf")
        y = sfft.irfft2(yf, s=shape)[:, :, :ho, :wo]
        cache.update(mode="fft", xf=xf, wf=wf, fshape=shape)
    else:
        # column matrix laid out (C, m, n, N, H', W') so every copy is a slab
        cols = np.empty((c, m, n, nb, ho, wo), dtype=xp.dtype)
        xt = xp.transpose(1, 0, 2, 3)
        for u in range(m):
            for v in range(n):
                cols[:, u, v] = xt[:, :, u:u + ho, v:v + wo]
        cols = cols.reshape(c * m * n, nb * ho * wo)
        y = (weights.reshape(k, -1) @ cols).reshape(k, nb, ho, wo).transpose(1, 0, 2, 3)
        cache.update(mode="direct", cols=cols)
    y = y + bias[None, :, None, None]
    y = np.ascontiguousarray(y, dtype=np.result_type(x4, weights))
    return (y[0] if squeeze else y), cache


def conv2d_forward(x, weights, bias, padding=VALID, method="auto"):
    """Cross-correlate ``x`` with ``k`` filters of shape ``(C, m, n)`` and add a bias.

    Valid padding gives ``(H-m+1, W-n+1)`` maps; same padding zero-pads so the
    output keeps the input's spatial size.
    """
    return conv2d_forward_cached(x, weights, bias, padding, method)[0]


def conv2d_backward(grad_out, cache, need_input_grad=True):
    """Return ``(dx, dweights, dbias)``; ``dx`` is None when not requested."""
    weights = cache["weights"]
    k, c, m, n = weights.shape
    g = grad_out[None] if cache["squeeze"] else grad_out
    nb, _, ho, wo = g.shape
    _, _, h, w = cache["xshape"]
    dtype = np.result_type(g, weights)
    db = g.sum(axis=(0, 2, 3))
    dx = None
    if cache["mode"] == "fft":
        shape = cache["fshape"]
        gf = sfft.rfft2(g, s=shape)
        dwf = _spectral_contract(np.conj(gf), cache["xf"], "nkf,ncf->kcf")
        dw = sfft.irfft2(dwf, s=shape)[:, :, :m, :n]
        if need_input_grad:
            dxf = _spectral_contract(gf, cache["wf"], "nkf,kcf->ncf")
            hp, wp = ho + m - 1, wo + n - 1
            dxp = sfft.irfft2(dxf, s=shape)[:, :, :hp, :wp]
            dx = _unpad(dxp, m, n, cache["padding"], h, w)
    else:
        gk = g.transpose(1, 0, 2, 3).reshape(k, nb * ho * wo)
        dw = (gk @ cache["cols"].T).reshape(k, c, m, n)
        if need_input_grad:
            dcols = (weights.reshape(k, -1).T @ gk).reshape(c, m, n, nb, ho, wo)
            dxt = np.zeros((c, nb, ho + m - 1, wo + n - 1), dtype=dtype)
            for u in range(m):
                for v in range(n):
                    dxt[:, :, u:u + ho, v:v + wo] += dcols[:, u, v]
            dx = _unpad(dxt.transpose(1, 0, 2, 3), m, n, cache["padding"], h, w)
    if dx is not None:
        dx = np.ascontiguousarray(dx, dtype=dtype)
        if cache["squeeze"]:
            dx = dx[0]
    return dx, np.ascontiguousarray(dw, dtype=dtype), db.astype(dtype)


def _unpad(xp, m, n, padding, h, w):
    if padding == SAME:
        t, l = _same_pads(m)[0], _same_pads(n)[0]
        return xp[:, :, t:t + h, l:l + w]
    return xp


# -- local response normalization ---------------------------------------------

def _window_offsets(size):
    before = (size - 1) // 2
    return before, size - 1 - before


def _channel_window_sum(a, before, after):
    """out[c] = sum of a[c-before .. c+after] along axis 1, truncated at the ends."""
    nc = a.shape[1]
    out = a.copy()
    for off in range(-before, after + 1):
        lo, hi = max(0, -off), min(nc, nc - off)
        if off and lo < hi:
            out[:, lo:hi] += a[:, lo + off:hi + off]
    return out


def lrn_forward_cached(x, size=5):
    if size < 1:
        raise ValueError(f"LRN region size must be >= 1, got {size}")
    x4, squeeze = _batched(x)
    before, after = _window_offsets(size)
    denom = _channel_window_sum(x4 * x4, before, after)
    denom /= size
    denom += 1.0
    y = x4 / denom
    cache = {"x": x4, "denom": denom, "size": size, "squeeze": squeeze}
    return (y[0] if squeeze else y), cache


def lrn_forward(x, size=5):
    """Divide each value by ``1 + (1/n) * sum(x_i**2)`` over ``n`` neighbouring channels."""
    return lrn_forward_cached(x, size)[0]


def lrn_backward(grad_out, cache):
    g = grad_out[None] if cache["squeeze"] else grad_out
    x, denom, size = cache["x"], cache["denom"], cache["size"]
    before, after = _window_offsets(size)
    dx = g / denom
    inner = dx * x
    inner /= denom
    # channel j feeds the denominators of channels j-after .. j+before
    spread = _channel_window_sum(inner, after, before)
    spread *= x
    spread *= 2.0 / size
    dx -= spread
    return dx[0] if cache["squeeze"] else dx


# -- max pooling -------------------------------------------------------------

def pool_output_size(size, window, stride, ceil=False):
    span = size - window
    if ceil:
        out = -(-span // stride) + 1
        # the last window must start inside the input
        if out > 1 and (out - 1) * stride >= size:
            out -= 1
    else:
        out = span // stride + 1
    return out


def maxpool_forward_cached(x, window, stride, ceil=False):
    if window < 1 or stride < 1:
        raise ValueError(f"pool window and stride must be >= 1, got {window}, {stride}")
    x4, squeeze = _batched(x)
    nb, c, h, w = x4.shape
    ho = pool_output_size(h, window, stride, ceil)
    wo = pool_output_size(w, window, stride, ceil)
    if ho < 1 or wo < 1:
        raise ShapeError(f"pool window {window} does not fit a {h}x{w} input")
    ph = max((ho - 1) * stride + window, h)
    pw = max((wo - 1) * stride + window, w)
    if (ph, pw) != (h, w):
        xp = np.full((nb, c, ph, pw), -np.inf, dtype=x4.dtype)
        xp[:, :, :h, :w] = x4
    else:
        xp = x4
    # floor mode may leave trailing rows/columns that no window covers
    xp = xp[:, :, :(ho - 1) * stride + window, :(wo - 1) * stride + window]
    if stride == window:
        blocks = xp.reshape(nb, c, ho, window, wo, window).transpose(0, 1, 2, 4, 3, 5)
        blocks = blocks.reshape(nb, c, ho, wo, window * window)
        arg = blocks.argmax(axis=-1)
        y = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    else:
        y = None
        arg = np.zeros((nb, c, ho, wo), dtype=np.intp)
        # scan offsets in row-major order; strict '>' keeps the first maximum
        for u in range(window):
            for v in range(window):
                cand = xp[:, :, u:u + (ho - 1) * stride + 1:stride,
                          v:v + (wo - 1) * stride + 1:stride]
                if y is None:
                    y = cand.copy()
                    continue
                better = cand > y
                np.copyto(y, cand, where=better)
                arg[better] = u * window + v
    cache = {"xshape": x4.shape, "arg": arg, "window": window, "stride": stride,
             "pshape": (ph, pw), "squeeze": squeeze}
    return (y[0] if squeeze else y), cache


def maxpool_forward(x, window, stride, ceil=False):
    """Max over ``window x window`` blocks taken every ``stride`` pixels.

    With ``ceil`` set, partial windows at the bottom/right edge are kept and
    clipped to the image.
    """
    return maxpool_forward_cached(x, window, stride, ceil)[0]


def maxpool_backward(grad_out, cache):
    g = grad_out[None] if cache["squeeze"] else grad_out
    nb, c, h, w = cache["xshape"]
    window, stride = cache["window"], cache["stride"]
    ph, pw = cache["pshape"]
    arg = cache["arg"]
    ho, wo = arg.shape[2:]
    rows = np.arange(ho)[:, None] * stride + arg // window
    cols = np.arange(wo)[None, :] * stride + arg % window
    flat_idx = (rows * pw + cols).reshape(nb, c, -1)
    dxp = np.zeros((nb, c, ph * pw), dtype=g.dtype)
    gflat = g.reshape(nb, c, -1)
    if stride >= window:
        # non-overlapping windows: every arg-max slot is hit at most once
        np.put_along_axis(dxp, flat_idx, gflat, axis=-1)
    else:
        bi, ci = np.indices((nb, c))
        np.add.at(dxp, (bi[..., None], ci[..., None], flat_idx), gflat)
    dx = dxp.reshape(nb, c, ph, pw)[:, :, :h, :w]
    dx = np.ascontiguousarray(dx)
    return dx[0] if cache["squeeze"] else dx


# -- fully connected ---------------------------------------------------------

def fc_forward(x, weights, bias):
    """``weights @ x + bias`` on flattened input; a leading batch axis is kept."""
    if x.ndim == 1:
        return fc_forward(x[None], weights, bias)[0]
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != weights.shape[1]:
        raise ShapeError(
            f"input length {flat.shape[1]} does not match weight in-dimension {weights.shape[1]}")
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} does not match {weights.shape[0]} outputs")
    return flat @ weights.T + bias


def fc_backward(grad_out, x, weights):
    """Gradients for a batched FC layer; ``dx`` takes the shape of ``x``."""
    flat = x.reshape(x.shape[0], -1)
    dw = grad_out.T @ flat
    db = grad_out.sum(axis=0)
    dx = (grad_out @ weights).reshape(x.shape)
    return dx, dw, db


# -- activations -------------------------------------------------------------

def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    return grad_out * (x > 0)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(grad_out, y):
    return grad_out * y * (1.0 - y)


def activation_forward(x, kind):
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


# -- concat ------------------------------------------------------------------

def concat_channels(inputs):
    """Concatenate feature maps along the channel axis, in argument order."""
    if not inputs:
        raise ShapeError("concat needs at least one input")
    spatial = {t.shape[-2:] for t in inputs}
    if len(spatial) != 1:
        raise ShapeError(f"concat inputs disagree on spatial shape: {sorted(spatial)}")
    if len(inputs) == 1:
        return inputs[0]
    return np.concatenate(inputs, axis=-3)


def concat_backward(grad_out, widths):
    splits = np.cumsum(widths)[:-1]
    return np.split(grad_out, splits, axis=-3)


# -- classification head -----------------------------------------------------

def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_loss(logits, label):
    """Multinomial logistic loss.

    For a single logit vector returns ``(loss, probs)``. For a batch
    ``(N, K)`` with ``N`` labels, the loss is the batch mean.
    """
    logits = np.asarray(logits)
    labels = np.atleast_1d(np.asarray(label))
    batch = logits if logits.ndim == 2 else logits[None]
    if labels.shape != (batch.shape[0],):
        raise ShapeError(f"expected {batch.shape[0]} labels, got {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integer class indices")
    k = batch.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label out of range 0..{k - 1}: {labels.tolist()}")
    z = batch - batch.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    nll = logsum - z[np.arange(batch.shape[0]), labels]
    probs = softmax(batch)
    loss = float(nll.mean())
    return loss, (probs if logits.ndim == 2 else probs[0])


def softmax_loss_backward(probs, label):
    """Gradient of the mean loss: ``(probs - onehot) / N``."""
    labels = np.atleast_1d(np.asarray(label))
    batch = probs if probs.ndim == 2 else probs[None]
    g = batch.copy()
    g[np.arange(batch.shape[0]), labels] -= 1.0
    g /= batch.shape[0]
    return g if probs.ndim == 2 else g[0]
