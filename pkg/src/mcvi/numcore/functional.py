"""Network-level ops: activations, linear, convolutions, batch norm, pooling.

Each op computes its forward value with vectorized numpy and registers an
analytic backward closure. All of them are covered by finite-difference
checks in the test suite.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


# -- activations -------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)

    def backward_fn(g, x=x):
        x.accumulate_grad(g * (x.data > 0.0))

    return Tensor._from_op(out_data, (x,), backward_fn, "relu")


def sigmoid(x: Tensor) -> Tensor:
    z = x.data
    # split by sign so exp() never overflows
    out_data = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                        np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))

    def backward_fn(g, x=x, out_data=out_data):
        x.accumulate_grad(g * out_data * (1.0 - out_data))

    return Tensor._from_op(out_data, (x,), backward_fn, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def backward_fn(g, x=x, out_data=out_data):
        x.accumulate_grad(g * (1.0 - out_data * out_data))

    return Tensor._from_op(out_data, (x,), backward_fn, "tanh")


def _softplus(z: np.ndarray) -> np.ndarray:
    # for z > 20 the linear tail is exact to < 1e-9 and avoids exp overflow
    return np.where(z > 20.0, z, np.log1p(np.exp(np.minimum(z, 20.0))))


def mish(x: Tensor) -> Tensor:
    """z * tanh(softplus(z)); smooth and non-truncating for negative inputs."""
    z = x.data
    sp = _softplus(z)
    t = np.tanh(sp)
    out_data = z * t

    def backward_fn(g, x=x, t=t):
        z = x.data
        sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                       np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
        x.accumulate_grad(g * (t + z * (1.0 - t * t) * sig))

    return Tensor._from_op(out_data, (x,), backward_fn, "mish")


def activation(kind: str, x: Tensor) -> Tensor:
    table = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh, "mish": mish}
    if kind not in table:
        raise ValueError(f"unknown activation '{kind}'")
    return table[kind](x)


# -- linear -------------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x[N, in] @ weight[out, in].T (+ bias[out])."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear shape mismatch: x{x.shape} w{weight.shape}")
    out_data = x.data @ weight.data.T
    if bias is not None:
        out_data = out_data + bias.data

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(g, x=x, weight=weight, bias=bias):
        if x.requires_grad:
            x.accumulate_grad(g @ weight.data)
        if weight.requires_grad:
            weight.accumulate_grad(g.T @ x.data)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=0))

    return Tensor._from_op(out_data, parents, backward_fn, "linear")


# -- convolutions ---------------------------------------------------------------

def _im2col(xp: np.ndarray, k: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """[N, C, Hp, Wp] -> [N*out_h*out_w, C*k*k] patch matrix."""
    n, c, _, _ = xp.shape
    s0, s1, s2, s3 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, (n, out_h, out_w, c, k, k), (s0, s2 * stride, s3 * stride, s1, s2, s3))
    return windows.reshape(n * out_h * out_w, c * k * k)


def _col2im(gcols: np.ndarray, x_shape, k: int, stride: int, padding: int,
            out_h: int, out_w: int) -> np.ndarray:
    """Scatter-add patch gradients back onto the (padded) input."""
    n, c, h, w = x_shape
    gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    gwin = gcols.reshape(n, out_h, out_w, c, k, k)
    for i in range(k):
        for j in range(k):
            gxp[:, :, i:i + out_h * stride:stride, j:j + out_w * stride:stride] += \
                gwin[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if padding:
        return gxp[:, :, padding:-padding, padding:-padding]
    return gxp


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of x[N,C,H,W] with weight[C',C,k,k]."""
    n, c, h, w = x.shape
    c_out, c_in, k, k2 = weight.shape
    if k != k2:
        raise ValueError("only square kernels are supported")
    if c_in != c:
        raise ValueError(f"conv2d channel mismatch: input {c}, weight {c_in}")
    out_h = (h + 2 * padding - k) // stride + 1
    out_w = (w + 2 * padding - k) // stride + 1
    if out_h <= 0 or out_w <= 0:
        raise ValueError("conv2d output would be empty")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) \
        if padding else x.data
    cols = _im2col(xp, k, stride, out_h, out_w)
    wmat = weight.data.reshape(c_out, c * k * k)
    out = cols @ wmat.T                       # [N*out_h*out_w, C']
    if bias is not None:
        out += bias.data
    # contiguous output: downstream elementwise ops pay for strided views
    out_data = np.ascontiguousarray(out.reshape(n, out_h, out_w, c_out).transpose(0, 3, 1, 2))

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(g, x=x, weight=weight, bias=bias, cols=cols,
                    stride=stride, padding=padding, out_h=out_h, out_w=out_w, k=k):
        c_out = weight.shape[0]
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, c_out)   # [N*L, C']
        if weight.requires_grad:
            weight.accumulate_grad((gmat.T @ cols).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(gmat.sum(axis=0))
        if x.requires_grad:
            gcols = gmat @ weight.data.reshape(c_out, -1)
            x.accumulate_grad(_col2im(gcols, x.shape, k, stride, padding, out_h, out_w))

    return Tensor._from_op(out_data, parents, backward_fn, "conv2d")


def _dw_windows(xp: np.ndarray, k: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Strided view [N, C, out_h, out_w, k, k] over the padded input."""
    n, c, _, _ = xp.shape
    s0, s1, s2, s3 = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, (n, c, out_h, out_w, k, k), (s0, s1, s2 * stride, s3 * stride, s2, s3))


def depthwise_conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 1, padding: int = 1) -> Tensor:
    """Per-channel convolution: weight[C,1,k,k], no cross-channel mixing."""
    n, c, h, w = x.shape
    cw, one, k, k2 = weight.shape
    if cw != c or one != 1 or k != k2:
        raise ValueError(f"depthwise weight must be [C,1,k,k] with C={c}, got {weight.shape}")
    out_h = (h + 2 * padding - k) // stride + 1
    out_w = (w + 2 * padding - k) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) \
        if padding else x.data
    windows = _dw_windows(xp, k, stride, out_h, out_w)
    # per-channel batched matmul: [C, N*L, k*k] @ [C, k*k, 1]
    wt = windows.transpose(1, 0, 2, 3, 4, 5).reshape(c, n * out_h * out_w, k * k)
    out = np.matmul(wt, weight.data.reshape(c, k * k, 1))
    out_data = np.ascontiguousarray(
        out.reshape(c, n, out_h, out_w).transpose(1, 0, 2, 3))
    if bias is not None:
        out_data += bias.data[None, :, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(g, x=x, weight=weight, bias=bias, xp=xp, windows=windows,
                    stride=stride, padding=padding, out_h=out_h, out_w=out_w, k=k):
        if weight.requires_grad:
            gw = np.empty_like(weight.data)
            for i in range(k):
                hs = slice(i, i + out_h * stride, stride)
                for j in range(k):
                    ws_ = slice(j, j + out_w * stride, stride)
                    gw[:, 0, i, j] = np.einsum("nchw,nchw->c", g, xp[:, :, hs, ws_])
            weight.accumulate_grad(gw)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            # scatter back: overlapping windows force the k*k loop
            gxp = np.zeros_like(xp)
            tmp = np.empty_like(g)
            for i in range(k):
                for j in range(k):
                    np.multiply(weight.data[:, 0, i, j][None, :, None, None], g, out=tmp)
                    gxp[:, :, i:i + out_h * stride:stride, j:j + out_w * stride:stride] += tmp
            if padding:
                gxp = gxp[:, :, padding:-padding, padding:-padding]
            x.accumulate_grad(gxp)

    return Tensor._from_op(out_data, parents, backward_fn, "depthwise_conv2d")


# -- batch norm --------------------------------------------------------------

def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch normalization over [N, C] or [N, C, H, W].

    Train mode normalizes by batch statistics and updates the running
    buffers in place (population variance, exponential moving average with
    update fraction ``momentum``). Eval mode normalizes by the buffers.
    """
    if x.ndim == 2:
        axes, view = (0,), (1, -1)
    elif x.ndim == 4:
        axes, view = (0, 2, 3), (1, -1, 1, 1)
    else:
        raise ValueError(f"batch_norm expects 2-D or 4-D input, got {x.ndim}-D")

    def vshape(a):
        return a.reshape(view)

    m = x.data.size // x.shape[1]  # elements per channel
    spec = "nc->c" if x.ndim == 2 else "nchw->c"
    sqspec = "nc,nc->c" if x.ndim == 2 else "nchw,nchw->c"

    if training:
        if x.shape[0] < 2:
            raise ValueError("batch_norm in train mode needs a batch of at least 2")
        mean = np.einsum(spec, x.data) / m
        var = np.einsum(sqspec, x.data, x.data) / m - mean * mean
        np.maximum(var, 0.0, out=var)  # guard fused-form rounding
        running_mean *= (1.0 - momentum)
        running_mean += momentum * mean
        running_var *= (1.0 - momentum)
        running_var += momentum * var
    else:
        mean = running_mean
        var = running_var

    ivar = 1.0 / np.sqrt(var + eps)
    xhat = x.data - vshape(mean)
    xhat *= vshape(ivar)
    out_data = vshape(gamma.data) * xhat
    out_data += vshape(beta.data)

    def backward_fn(g, x=x, gamma=gamma, beta=beta, xhat=xhat, ivar=ivar,
                    axes=axes, training=training, m=m, sqspec=sqspec, spec=spec):
        if gamma.requires_grad:
            gamma.accumulate_grad(np.einsum(sqspec, g, xhat))
        if beta.requires_grad:
            beta.accumulate_grad(np.einsum(spec, g))
        if not x.requires_grad:
            return
        gxhat = g * vshape(gamma.data)
        if training:
            s1 = vshape(np.einsum(spec, gxhat) / m)
            s2 = vshape(np.einsum(sqspec, gxhat, xhat) / m)
            gx = gxhat - s1
            gx -= xhat * s2
            gx *= vshape(ivar)
        else:
            gx = gxhat
            gx *= vshape(ivar)
        x.accumulate_grad(gx)

    return Tensor._from_op(out_data, (x, gamma, beta), backward_fn, "batch_norm")


# -- pooling ---------------------------------------------------------------

def global_avg_pool(x: Tensor) -> Tensor:
    """[N, C, H, W] -> [N, C] spatial mean."""
    if x.ndim != 4:
        raise ValueError("global_avg_pool expects a 4-D tensor")
    n, c, h, w = x.shape
    out_data = x.data.mean(axis=(2, 3))

    def backward_fn(g, x=x, h=h, w=w):
        x.accumulate_grad(np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy())

    return Tensor._from_op(out_data, (x,), backward_fn, "global_avg_pool")


def adaptive_avg_pool_1x1(x: Tensor) -> Tensor:
    """[N, C, H, W] -> [N, C, 1, 1] spatial mean, dims kept."""
    return global_avg_pool(x).reshape(x.shape[0], x.shape[1], 1, 1)
