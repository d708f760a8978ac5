"""Taped neural-network ops on NCHW tensors (here N, C, F, T)."""
import numpy as np

from core.exceptions import ShapeError
from core.tensor import make_result

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def pair(value):
    return (value, value) if isinstance(value, int) else tuple(value)


def conv_output_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def _tap_forward(xs, w_tap, groups):
    n, c, oh, ow = xs.shape
    o = w_tap.shape[0]
    if groups == 1:
        return np.einsum("ncyx,oc->noyx", xs, w_tap, optimize=True)
    xg = xs.reshape(n, groups, c // groups, oh, ow)
    wg = w_tap.reshape(groups, o // groups, c // groups)
    return np.einsum("ngcyx,goc->ngoyx", xg, wg, optimize=True).reshape(n, o, oh, ow)


def _tap_weight_grad(g, xs, groups):
    n, c, oh, ow = xs.shape
    o = g.shape[1]
    if groups == 1:
        return np.einsum("noyx,ncyx->oc", g, xs, optimize=True)
    gg = g.reshape(n, groups, o // groups, oh, ow)
    xg = xs.reshape(n, groups, c // groups, oh, ow)
    return np.einsum("ngoyx,ngcyx->goc", gg, xg, optimize=True).reshape(o, c // groups)


def _tap_input_grad(g, w_tap, groups, c):
    n, o, oh, ow = g.shape
    if groups == 1:
        return np.einsum("noyx,oc->ncyx", g, w_tap, optimize=True)
    gg = g.reshape(n, groups, o // groups, oh, ow)
    wg = w_tap.reshape(groups, o // groups, c // groups)
    return np.einsum("ngoyx,goc->ngcyx", gg, wg, optimize=True).reshape(n, c, oh, ow)


def conv2d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """Cross-correlation of x[N,C,F,T] with weight[O,C/groups,kF,kT].

    The kernel is applied one tap at a time so no im2col buffer is built;
    each tap is a channel contraction over a strided view of the padded input.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {list(x.shape)} and {list(weight.shape)}")
    sf, st = pair(stride)
    pf, pt = pair(padding)
    n, c, h, w = x.shape
    o, cg, kh, kw = weight.shape
    if groups < 1 or c % groups or o % groups:
        raise ShapeError(f"conv2d: channels in={c} out={o} not divisible by groups={groups}")
    if cg != c // groups:
        raise ShapeError(f"conv2d: weight expects {cg} input channels per group, input has {c // groups}")
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {list(bias.shape)} does not match {o} output channels")
    oh = conv_output_size(h, kh, sf, pf)
    ow = conv_output_size(w, kw, st, pt)
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"conv2d: input {h}x{w} too small for kernel {kh}x{kw} (padding {pf},{pt})")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pf, pf), (pt, pt)))
    wd = weight.data
    out = np.zeros((n, o, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, :, i:i + sf * oh:sf, j:j + st * ow:st]
            out += _tap_forward(xs, wd[:, :, i, j], groups)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward(g):
        gx = np.zeros_like(xp) if x.requires_grad else None
        gw = np.zeros_like(wd) if weight.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                xs = xp[:, :, i:i + sf * oh:sf, j:j + st * ow:st]
                if gw is not None:
                    gw[:, :, i, j] = _tap_weight_grad(g, xs, groups)
                if gx is not None:
                    gx[:, :, i:i + sf * oh:sf, j:j + st * ow:st] += _tap_input_grad(g, wd[:, :, i, j], groups, c)
        if gx is not None:
            gx = gx[:, :, pf:pf + h, pt:pt + w]
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return make_result("conv2d", out, inputs, backward)


def batch_norm(x, gamma, beta, running_mean=None, running_var=None, training=True,
               momentum=BN_MOMENTUM, eps=BN_EPS):
    """Per-channel normalisation over (N, F, T).

    Running statistics are plain arrays updated in place by exponential
    moving average while training.
    """
    if x.ndim != 4:
        raise ShapeError(f"batch_norm expects [N,C,F,T], got {list(x.shape)}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batch_norm: {c} channels but gamma {list(gamma.shape)}, beta {list(beta.shape)}")
    axes = (0, 2, 3)
    m = x.shape[0] * x.shape[2] * x.shape[3]
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running_mean is not None:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu
        if running_var is not None:
            unbiased = var * (m / (m - 1)) if m > 1 else var
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
    else:
        if running_mean is None or running_var is None:
            raise ShapeError("batch_norm in eval mode needs running statistics")
        mu, var = running_mean, running_var
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu[None, :, None, None].astype(x.dtype)) * inv[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        dxhat = g * gamma.data[None, :, None, None]
        if training:
            gx = (inv[None, :, None, None] / m) * (
                m * dxhat
                - dxhat.sum(axis=axes, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            gx = dxhat * inv[None, :, None, None]
        return gx, ggamma, gbeta

    return make_result("batch_norm", out.astype(x.dtype, copy=False), (x, gamma, beta), backward)


def relu(x):
    mask = x.data > 0
    return make_result("relu", np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def linear(x, weight, bias=None):
    """x[N,in] @ weight[out,in]^T + bias[out]."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input {list(x.shape)} incompatible with weight {list(weight.shape)}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias {list(bias.shape)} does not match {weight.shape[0]} outputs")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        grads = (g @ weight.data, g.T @ x.data)
        return grads + (g.sum(axis=0),) if bias is not None else grads

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return make_result("linear", out, inputs, backward)


def global_avg_pool(x):
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects [N,C,F,T], got {list(x.shape)}")
    area = x.shape[2] * x.shape[3]

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / area, x.shape).astype(x.dtype),)

    return make_result("global_avg_pool", x.data.mean(axis=(2, 3)), (x,), backward)


def _check_tau(tau):
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")


def softmax_array(z, tau=1.0):
    _check_tau(tau)
    z = z / z.dtype.type(tau)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_array(z, tau=1.0):
    _check_tau(tau)
    z = z / z.dtype.type(tau)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_t(logits, tau=1.0):
    """Temperature softmax over the last axis, max-subtracted."""
    s = softmax_array(logits.data, tau)
    inv_tau = logits.dtype.type(1.0 / tau)

    def backward(g):
        return ((g - (g * s).sum(axis=-1, keepdims=True)) * s * inv_tau,)

    return make_result("softmax_t", s, (logits,), backward)


def log_softmax_t(logits, tau=1.0):
    out = log_softmax_array(logits.data, tau)
    s = np.exp(out)
    inv_tau = logits.dtype.type(1.0 / tau)

    def backward(g):
        return ((g - s * g.sum(axis=-1, keepdims=True)) * inv_tau,)

    return make_result("log_softmax_t", out, (logits,), backward)
