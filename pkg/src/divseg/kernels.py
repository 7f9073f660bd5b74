"""Raw array kernels for the 3D network layers.

Everything here works on plain float64 ndarrays; the tape wiring lives in
tensor.py. Convolution is im2col + BLAS matmul so that desk-scale training
stays fast on one CPU core. The gradient kernels are the adjoints of the
forward kernels and are what the finite-difference harness certifies.
"""

import numpy as np

from .errors import ShapeError


def im2col(x, k, stride, padding):
    """Unfold [C,D,H,W] into [C*k^3, D_out*H_out*W_out] patch columns.

    One slice copy per kernel offset keeps the inner axis contiguous, which
    is far cheaper than a strided gather at these sizes.
    """
    c = x.shape[0]
    if k == 1 and stride == 1 and padding == 0:
        # patches are the voxels themselves; reuse the (immutable) input
        return x.reshape(c, -1), x.shape[1:]
    xp = np.pad(x, ((0, 0),) + ((padding, padding),) * 3)
    d_o, h_o, w_o = ((s + 2 * padding - k) // stride + 1 for s in x.shape[1:])
    cols = np.empty((c, k * k * k, d_o, h_o, w_o))
    o = 0
    for kd in range(k):
        for kh in range(k):
            for kw in range(k):
                cols[:, o] = xp[
                    :,
                    kd : kd + stride * d_o : stride,
                    kh : kh + stride * h_o : stride,
                    kw : kw + stride * w_o : stride,
                ]
                o += 1
    return cols.reshape(c * k * k * k, d_o * h_o * w_o), (d_o, h_o, w_o)


def conv3d_forward(x, w, stride, padding, want_cols=False):
    """Cross-correlation of x[C_in,D,H,W] with w[C_out,C_in,k,k,k]."""
    c_out, c_in, k = w.shape[0], w.shape[1], w.shape[2]
    if x.shape[0] != c_in:
        raise ShapeError(
            f"conv3d: input has {x.shape[0]} channels, kernel expects {c_in}"
        )
    cols, out_sp = im2col(x, k, stride, padding)
    out = (w.reshape(c_out, -1) @ cols).reshape((c_out,) + out_sp)
    return (out, cols) if want_cols else (out, None)


def conv3d_grad_w(grad_out, cols, w_shape):
    c_out = w_shape[0]
    return (grad_out.reshape(c_out, -1) @ cols.T).reshape(w_shape)


def conv3d_grad_x(grad_out, w, x_shape, stride, padding):
    """Scatter the column gradient back onto the (padded) input."""
    c_out, c_in, k = w.shape[0], w.shape[1], w.shape[2]
    d_o, h_o, w_o = grad_out.shape[1:]
    col_grad = w.reshape(c_out, -1).T @ grad_out.reshape(c_out, -1)
    if k == 1 and stride == 1 and padding == 0:
        return col_grad.reshape((c_in,) + tuple(x_shape[1:]))
    col_grad = col_grad.reshape(c_in, k, k, k, d_o, h_o, w_o)
    gxp = np.zeros((c_in,) + tuple(s + 2 * padding for s in x_shape[1:]))
    for kd in range(k):
        for kh in range(k):
            for kw in range(k):
                gxp[
                    :,
                    kd : kd + stride * d_o : stride,
                    kh : kh + stride * h_o : stride,
                    kw : kw + stride * w_o : stride,
                ] += col_grad[:, kd, kh, kw]
    if padding:
        gxp = gxp[:, padding:-padding, padding:-padding, padding:-padding]
    return gxp


def avgpool2_forward(x):
    c, d, h, w = x.shape
    return x.reshape(c, d // 2, 2, h // 2, 2, w // 2, 2).mean(axis=(2, 4, 6))


def _tile2(x):
    """Duplicate each voxel into a 2x2x2 block (one pass, no temporaries)."""
    c, d, h, w = x.shape
    src = np.broadcast_to(
        x[:, :, None, :, None, :, None], (c, d, 2, h, 2, w, 2)
    )
    return src.reshape(c, 2 * d, 2 * h, 2 * w)


def avgpool2_grad(grad_out):
    return _tile2(grad_out / 8.0)


def upsample2_forward(x):
    return _tile2(x)


def upsample2_grad(grad_out):
    c, d, h, w = grad_out.shape
    return grad_out.reshape(c, d // 2, 2, h // 2, 2, w // 2, 2).sum(axis=(2, 4, 6))
