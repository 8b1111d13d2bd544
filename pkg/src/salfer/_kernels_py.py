"""Pure numpy implementations of the hot kernels.

Same signatures and bit-identical results as the compiled ``_kernels``
module; used when the extension is not built or ``SALFER_PURE_PYTHON`` is set.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw, stride, pad):
    """(N, C, H, W) -> (N*OH*OW, C*kh*kw) patch matrix."""
    n, c, h, w = x.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]
    # (N, C, OH, OW, kh, kw) -> (N, OH, OW, C, kh, kw)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, c * kh * kw)


def col2im(cols, x_shape, kh, kw, stride, pad):
    """Adjoint of :func:`im2col`: scatter-add patch gradients back to (N, C, H, W)."""
    n, c, h, w = x_shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    cols = cols.reshape(n, oh, ow, c, kh, kw)
    dx = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    if pad:
        dx = dx[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(dx)


def maxpool2_forward(x):
    """2x2/stride-2 max pooling. Returns (out, argmax in 0..3); ties go to the first cell."""
    n, c, h, w = x.shape
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(blocks, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2_backward(dout, idx, x_shape):
    n, c, h, w = x_shape
    onehot = np.zeros(dout.shape + (4,), dtype=np.float64)
    np.put_along_axis(onehot, idx[..., None].astype(np.intp), dout[..., None], axis=-1)
    dx = onehot.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dx.reshape(n, c, h, w))


def cascade_scan(ii, sq, step, win_w, win_h, stage_thr, stage_first, stage_count,
                 weak_node, weak_leaf, node_left, node_right, node_feat, node_thr,
                 leaves, rects, weights):
    """Run a boosted Haar cascade over every window of one pyramid level.

    ``ii``/``sq`` are (H+1, W+1) integral images of the pixels and their squares.
    Returns an (K, 2) int array of accepted window origins (x, y).
    """
    h = ii.shape[0] - 1
    w = ii.shape[1] - 1
    ys, xs = np.mgrid[0 : h - win_h + 1 : step, 0 : w - win_w + 1 : step]
    xs = xs.ravel()
    ys = ys.ravel()
    if xs.size == 0:
        return np.zeros((0, 2), dtype=np.int64)

    def box(table, rx, ry, rw, rh):
        x0 = xs + rx
        y0 = ys + ry
        return table[y0 + rh, x0 + rw] - table[y0, x0 + rw] - table[y0 + rh, x0] + table[y0, x0]

    area = float((win_w - 2) * (win_h - 2))
    s = box(ii, 1, 1, win_w - 2, win_h - 2)
    q = box(sq, 1, 1, win_w - 2, win_h - 2)
    nf = area * q - s * s
    nf = np.where(nf > 0.0, np.sqrt(np.maximum(nf, 0.0)), 1.0)
    inv = 1.0 / nf

    for st in range(stage_thr.shape[0]):
        total = np.zeros(xs.shape[0], dtype=np.float64)
        for k in range(stage_first[st], stage_first[st] + stage_count[st]):
            base = weak_node[k]
            idx = np.zeros(xs.shape[0], dtype=np.int64)
            live = np.ones(xs.shape[0], dtype=bool)
            while live.any():
                nodes = base + idx[live]
                vals = np.zeros(nodes.shape[0], dtype=np.float64)
                sel_x, sel_y = xs[live], ys[live]
                for f in np.unique(node_feat[nodes]):
                    m = node_feat[nodes] == f
                    acc = np.zeros(int(m.sum()), dtype=np.float64)
                    for r in range(3):
                        wt = weights[f, r]
                        if wt == 0.0:
                            continue
                        rx, ry, rw, rh = rects[f, r]
                        x0 = sel_x[m] + rx
                        y0 = sel_y[m] + ry
                        acc = acc + wt * (ii[y0 + rh, x0 + rw] - ii[y0, x0 + rw]
                                          - ii[y0 + rh, x0] + ii[y0, x0])
                    vals[m] = acc
                vals = vals * inv[live]
                nxt = np.where(vals < node_thr[nodes], node_left[nodes], node_right[nodes])
                idx[live] = nxt
                live = idx > 0
            total += leaves[weak_leaf[k] - idx]
        keep = total >= stage_thr[st]
        if not keep.all():
            xs, ys, inv = xs[keep], ys[keep], inv[keep]
            if xs.size == 0:
                return np.zeros((0, 2), dtype=np.int64)
    return np.stack([xs, ys], axis=1).astype(np.int64)
