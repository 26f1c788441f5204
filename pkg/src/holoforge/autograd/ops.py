"""Differentiable operations. Each builds its output with `record`, attaching
a closure that maps the upstream gradient to one gradient per input.

Only what the hologram network needs is here: conv2d, batchnorm2d, a fixed
x2 bilinear upsample, LeakyReLU, sigmoid, elementwise arithmetic, channel
concat, reductions, the two losses, and a differentiable SSIM built out of
the other ops. No general broadcasting: shapes must line up exactly.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from holoforge.autograd.tensor import Tensor, record


def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ValueError(f"{op}: operand shapes differ, {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# convolution

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlate x (n,c,h,w) with weight (f,c,kh,kw), plus bias.

    Implemented as im2col + one matmul so the forward is a single BLAS call.
    Output spatial size is floor((h + 2*pad - kh)/stride) + 1.
    """
    x, weight = _tensor(x), _tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d: need 4-d input and weight, got {x.ndim}-d and {weight.ndim}-d")
    n, c, h, w = x.shape
    f, c_in, kh, kw = weight.shape
    if c != c_in:
        raise ValueError(f"conv2d: input has {c} channels but weight expects {c_in}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d: kernel must be odd-sized, got {kh}x{kw}")
    if stride < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got {stride}")
    if pad < 0:
        raise ValueError(f"conv2d: pad must be >= 0, got {pad}")
    if bias is not None:
        bias = _tensor(bias)
        if bias.shape != (f,):
            raise ValueError(f"conv2d: bias shape {bias.shape} does not match {f} filters")
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ValueError(f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)
    wmat = weight.data.reshape(f, c * kh * kw)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, f)
        gx = gw = gb = None
        if x.requires_grad:
            dwin = (gmat @ wmat).reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + (ho - 1) * stride + 1:stride,
                        j:j + (wo - 1) * stride + 1:stride] += dwin[:, :, :, :, i, j]
            gx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
        if weight.requires_grad:
            gw = (gmat.T @ cols).reshape(f, c, kh, kw)
        if bias is not None and bias.requires_grad:
            gb = gmat.sum(axis=0)
        return (gx, gw) if bias is None else (gx, gw, gb)

    return record(np.ascontiguousarray(out), parents, backward_fn, "conv2d")


# ---------------------------------------------------------------------------
# batch normalization

def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor,
                running_mean: np.ndarray, running_var: np.ndarray,
                training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over (n, h, w), then gamma * xhat + beta.

    Train mode uses batch statistics (biased variance) and folds them into
    the running arrays in place with an exponential moving average; eval
    mode reads the running arrays and never writes them. The same biased
    variance feeds both the normalization and the running update, so the
    two modes agree on a distribution they have both seen.
    """
    x, gamma, beta = _tensor(x), _tensor(gamma), _tensor(beta)
    if x.ndim != 4:
        raise ValueError(f"batchnorm2d: need a 4-d input, got {x.ndim}-d")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"batchnorm2d: gamma/beta shapes {gamma.shape}/{beta.shape} do not match {c} channels")
    if eps <= 0:
        raise ValueError(f"batchnorm2d: eps must be positive, got {eps}")
    if n * h * w == 0:
        raise ValueError("batchnorm2d: zero-size batch")

    if training:
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean.astype(x.dtype, copy=False)
        var = running_var.astype(x.dtype, copy=False)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[:, None, None]) * inv_std[:, None, None]
    out = gamma.data[:, None, None] * xhat + beta.data[:, None, None]

    def backward_fn(g):
        gx = ggamma = gbeta = None
        if gamma.requires_grad:
            ggamma = (g * xhat).sum(axis=(0, 2, 3))
        if beta.requires_grad:
            gbeta = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            gxhat = g * gamma.data[:, None, None]
            if training:
                m = n * h * w
                sum_gxhat = gxhat.sum(axis=(0, 2, 3))
                sum_gxhat_xhat = (gxhat * xhat).sum(axis=(0, 2, 3))
                gx = (inv_std[:, None, None] / m) * (
                    m * gxhat
                    - sum_gxhat[:, None, None]
                    - xhat * sum_gxhat_xhat[:, None, None]
                )
            else:
                gx = gxhat * inv_std[:, None, None]
        return gx, ggamma, gbeta

    return record(out, (x, gamma, beta), backward_fn, "batchnorm2d")


# ---------------------------------------------------------------------------
# resampling

def _upsample_matrix(size: int, dtype) -> np.ndarray:
    """Corner-aligned interpolation matrix mapping `size` samples to 2*size."""
    out = np.zeros((2 * size, size), dtype=dtype)
    if size == 1:
        out[:, 0] = 1.0
        return out
    src = np.arange(2 * size, dtype=np.float64) * (size - 1) / (2 * size - 1)
    lo = np.floor(src).astype(int)
    lo = np.minimum(lo, size - 2)
    frac = src - lo
    rows = np.arange(2 * size)
    out[rows, lo] = (1.0 - frac).astype(dtype)
    out[rows, lo + 1] = frac.astype(dtype)
    return out


def bilinear_upsample2x(x: Tensor) -> Tensor:
    """Double both spatial dimensions with corner-aligned bilinear weights.

    Separable: out = A_h @ x @ A_w^T per image, so the backward pass is the
    same pair of matrices transposed.
    """
    x = _tensor(x)
    if x.ndim != 4:
        raise ValueError(f"bilinear_upsample2x: need a 4-d input, got {x.ndim}-d")
    h, w = x.shape[2], x.shape[3]
    if h < 1 or w < 1:
        raise ValueError("bilinear_upsample2x: empty spatial extent")
    a_h = _upsample_matrix(h, x.dtype.type)
    a_w = _upsample_matrix(w, x.dtype.type)
    out = np.matmul(np.matmul(a_h, x.data), a_w.T)

    def backward_fn(g):
        if not x.requires_grad:
            return (None,)
        return (np.matmul(np.matmul(a_h.T, g), a_w),)

    return record(out, (x,), backward_fn, "bilinear_upsample2x")


# ---------------------------------------------------------------------------
# pointwise nonlinearities

def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu: slope must be in (0, 1), got {slope}")
    x = _tensor(x)
    keep = x.data >= 0
    out = np.where(keep, x.data, x.dtype.type(slope) * x.data)

    def backward_fn(g):
        return (np.where(keep, g, x.dtype.type(slope) * g),)

    return record(out, (x,), backward_fn, "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic: never exponentiates a positive argument."""
    x = _tensor(x)
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward_fn(g):
        return (g * out * (1.0 - out),)

    return record(out, (x,), backward_fn, "sigmoid")


# ---------------------------------------------------------------------------
# elementwise arithmetic (exact shape match, no broadcasting)

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    _same_shape(a, b, "add")

    def backward_fn(g):
        return g, g

    return record(a.data + b.data, (a, b), backward_fn, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    _same_shape(a, b, "sub")

    def backward_fn(g):
        return g, -g

    return record(a.data - b.data, (a, b), backward_fn, "sub")


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    _same_shape(a, b, "elementwise_mul")

    def backward_fn(g):
        ga = g * b.data if a.requires_grad else None
        gb = g * a.data if b.requires_grad else None
        return ga, gb

    return record(a.data * b.data, (a, b), backward_fn, "elementwise_mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    _same_shape(a, b, "div")
    out = a.data / b.data

    def backward_fn(g):
        ga = g / b.data if a.requires_grad else None
        gb = -g * out / b.data if b.requires_grad else None
        return ga, gb

    return record(out, (a, b), backward_fn, "div")


def scale(x: Tensor, s: float) -> Tensor:
    """Multiply by a python scalar (not a tensor, so no gradient for s)."""
    x = _tensor(x)
    s = x.dtype.type(s)

    def backward_fn(g):
        return (g * s,)

    return record(x.data * s, (x,), backward_fn, "scale")


def offset(x: Tensor, c: float) -> Tensor:
    """Add a python scalar."""
    x = _tensor(x)

    def backward_fn(g):
        return (g,)

    return record(x.data + x.dtype.type(c), (x,), backward_fn, "offset")


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack along the channel axis, a's channels first."""
    a, b = _tensor(a), _tensor(b)
    if a.ndim != 4 or b.ndim != 4:
        raise ValueError("concat_channels: need 4-d inputs")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"concat_channels: non-channel dims differ, {a.shape} vs {b.shape}")
    ca = a.shape[1]

    def backward_fn(g):
        return g[:, :ca], g[:, ca:]

    return record(np.concatenate([a.data, b.data], axis=1), (a, b), backward_fn, "concat_channels")


# ---------------------------------------------------------------------------
# reductions and losses

def sum_all(x: Tensor) -> Tensor:
    x = _tensor(x)

    def backward_fn(g):
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=False),)

    return record(np.asarray(x.data.sum(), dtype=x.dtype), (x,), backward_fn, "sum_all")


def mean_all(x: Tensor) -> Tensor:
    x = _tensor(x)
    count = x.dtype.type(x.size)

    def backward_fn(g):
        return (np.broadcast_to(g / count, x.shape).astype(x.dtype, copy=False),)

    return record(np.asarray(x.data.mean(), dtype=x.dtype), (x,), backward_fn, "mean_all")


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared difference over all elements; gradient flows to both sides."""
    pred, target = _tensor(pred), _tensor(target)
    _same_shape(pred, target, "mse_loss")
    diff = pred.data - target.data
    count = pred.dtype.type(pred.size)

    def backward_fn(g):
        common = (2.0 * g / count) * diff
        gp = common if pred.requires_grad else None
        gt = -common if target.requires_grad else None
        return gp, gt

    return record(np.asarray(np.mean(diff * diff), dtype=pred.dtype), (pred, target), backward_fn, "mse_loss")


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference; sign(0) taken as 0."""
    pred, target = _tensor(pred), _tensor(target)
    _same_shape(pred, target, "l1_loss")
    diff = pred.data - target.data
    count = pred.dtype.type(pred.size)

    def backward_fn(g):
        common = (g / count) * np.sign(diff)
        gp = common if pred.requires_grad else None
        gt = -common if target.requires_grad else None
        return gp, gt

    return record(np.asarray(np.mean(np.abs(diff)), dtype=pred.dtype), (pred, target), backward_fn, "l1_loss")


# ---------------------------------------------------------------------------
# structural similarity

def gaussian_window(window: int, sigma: float, dtype=np.float32) -> np.ndarray:
    """Normalized 2-d Gaussian as a (1, 1, window, window) conv filter."""
    half = (window - 1) / 2.0
    t = np.arange(window, dtype=np.float64) - half
    g1 = np.exp(-(t * t) / (2.0 * sigma * sigma))
    g1 /= g1.sum()
    g2 = np.outer(g1, g1)
    return g2.reshape(1, 1, window, window).astype(dtype)


def ssim(pred: Tensor, target: Tensor, window: int = 11, sigma: float = 1.5,
         data_range: float = 1.0) -> Tensor:
    """Mean local structural similarity over valid (unpadded) windows.

    Composed entirely from the differentiable ops above, so its backward
    pass needs no rule of its own. Inputs must be single-channel (n,1,h,w)
    with values on a scale of `data_range`.
    """
    pred, target = _tensor(pred), _tensor(target)
    _same_shape(pred, target, "ssim")
    if pred.ndim != 4 or pred.shape[1] != 1:
        raise ValueError(f"ssim: need single-channel (n,1,h,w) inputs, got {pred.shape}")
    if window % 2 == 0:
        raise ValueError(f"ssim: window must be odd, got {window}")
    h, w = pred.shape[2], pred.shape[3]
    if window > min(h, w):
        raise ValueError(f"ssim: window {window} exceeds image extent {h}x{w}")

    kern = Tensor(gaussian_window(window, sigma, pred.dtype.type))
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    mu_p = conv2d(pred, kern)
    mu_t = conv2d(target, kern)
    mu_pp = elementwise_mul(mu_p, mu_p)
    mu_tt = elementwise_mul(mu_t, mu_t)
    mu_pt = elementwise_mul(mu_p, mu_t)

    var_p = sub(conv2d(elementwise_mul(pred, pred), kern), mu_pp)
    var_t = sub(conv2d(elementwise_mul(target, target), kern), mu_tt)
    cov = sub(conv2d(elementwise_mul(pred, target), kern), mu_pt)

    lum = div(offset(scale(mu_pt, 2.0), c1), offset(add(mu_pp, mu_tt), c1))
    con = div(offset(scale(cov, 2.0), c2), offset(add(var_p, var_t), c2))
    return mean_all(elementwise_mul(lum, con))
