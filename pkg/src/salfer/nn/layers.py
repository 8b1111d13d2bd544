"""Forward/backward pairs for the reference network's layers (float64, NCHW)."""
import numpy as np

from .. import kernels


def conv_forward(x, w, b, stride, pad):
    n, _, h, wd = x.shape
    f, c, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    cols = kernels.im2col(np.ascontiguousarray(x), kh, kw, stride, pad)
    out = cols @ w.reshape(f, -1).T + b
    out = out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (cols, x.shape, stride, pad)


def conv_backward(dout, cache, w, need_dx=True):
    cols, x_shape, stride, pad = cache
    f, c, kh, kw = w.shape
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    dx = None
    if need_dx:
        dx = kernels.col2im(d2 @ w.reshape(f, -1), x_shape, kh, kw, stride, pad)
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(dout, out):
    return dout * (out > 0.0)


def maxpool_forward(x):
    return kernels.maxpool2_forward(np.ascontiguousarray(x))


def maxpool_backward(dout, idx, x_shape):
    return kernels.maxpool2_backward(np.ascontiguousarray(dout), idx, x_shape)


def affine_forward(x, w, b):
    return x @ w + b


def affine_backward(dout, x, w):
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def softmax(logits):
    """Row-wise softmax with max subtraction; accepts a vector or a batch."""
    z = np.asarray(logits, dtype=np.float64)
    if np.isnan(z).any():
        raise ValueError("NaN in logits")
    if not np.isfinite(z).all():
        raise ValueError("non-finite logits")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, labels, floor=1e-12):
    """-ln p[label], with p floored at 1e-12. Vector input gives a scalar, batch input an array."""
    p = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if p.ndim == 1:
        return float(-np.log(max(p[int(labels)], floor)))
    picked = p[np.arange(p.shape[0]), labels.astype(np.intp)]
    return -np.log(np.maximum(picked, floor))
