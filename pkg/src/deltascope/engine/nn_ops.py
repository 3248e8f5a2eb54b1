"""Layer primitives over the autodiff tensor.

All spatial operations use channels-last layout (batch, height, width,
channels). Convolutions use cross-correlation semantics with zero padding;
the forward/backward pair is what the gradient checks enforce. Accumulation
loops run in a fixed kernel-offset order so per-element summation order is
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from deltascope.errors import ConfigError, DimensionError, StateError, UsageError
from deltascope.engine.tensor import Tensor


def _require_ndim(name: str, arr: np.ndarray, ndim: int) -> None:
    if arr.ndim != ndim:
        raise DimensionError(f"{name}: expected a {ndim}-d array, got shape {arr.shape}")


def _out_extent(extent: int, kernel: int, stride: int, padding: str) -> tuple[int, int, int]:
    """Output extent and (low, high) zero padding for one spatial axis."""
    if padding == "same":
        out = -(-extent // stride)
        total = max((out - 1) * stride + kernel - extent, 0)
        low = total // 2
        return out, low, total - low
    if padding == "valid":
        if extent < kernel:
            raise DimensionError(f"valid padding needs extent >= kernel, got {extent} < {kernel}")
        return (extent - kernel) // stride + 1, 0, 0
    raise ConfigError(f"unknown padding {padding!r}, expected 'same' or 'valid'")


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1,
           padding: str = "same") -> Tensor:
    """Cross-correlate `x` (B,H,W,Cin) with `kernels` (Kh,Kw,Cin,Cout).

    With same padding and stride 1 the spatial extents are preserved for any
    odd kernel size.
    """
    xd, kd, bd = x.data, kernels.data, bias.data
    _require_ndim("conv2d input", xd, 4)
    _require_ndim("conv2d kernels", kd, 4)
    batch, height, width, cin = xd.shape
    kh, kw, kcin, cout = kd.shape
    if cin != kcin:
        raise DimensionError(
            f"conv2d: input channel axis has {cin} channels but kernels expect {kcin}")
    if bd.shape != (cout,):
        raise DimensionError(f"conv2d: bias shape {bd.shape} does not match {cout} kernels")
    if not isinstance(stride, int) or stride < 1:
        raise ConfigError(f"conv2d: stride must be a positive integer, got {stride!r}")

    oh, pt, pb = _out_extent(height, kh, stride, padding)
    ow, pl, pr = _out_extent(width, kw, stride, padding)
    xp = np.pad(xd, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else xd

    out = np.zeros((batch, oh, ow, cout))
    for k in range(kh):
        for l in range(kw):
            out += xp[:, k:k + stride * oh:stride, l:l + stride * ow:stride, :] @ kd[k, l]
    out += bd

    need_dx = x.requires_grad
    hp, wp = xp.shape[1], xp.shape[2]

    def backward(g):
        dk = np.empty_like(kd)
        for k in range(kh):
            for l in range(kw):
                xs = xp[:, k:k + stride * oh:stride, l:l + stride * ow:stride, :]
                dk[k, l] = np.tensordot(xs, g, axes=([0, 1, 2], [0, 1, 2]))
        db = g.sum(axis=(0, 1, 2))
        dx = None
        if need_dx:
            dxp = np.zeros((batch, hp, wp, cin))
            for k in range(kh):
                for l in range(kw):
                    dxp[:, k:k + stride * oh:stride, l:l + stride * ow:stride, :] += g @ kd[k, l].T
            dx = dxp[:, pt:pt + height, pl:pl + width, :]
        return dx, dk, db

    return Tensor(out, op="conv2d", parents=(x, kernels, bias), backward=backward)


def transpose_conv2d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 2) -> Tensor:
    """Spatially double `x` (B,H,W,Cin) with a 2x2 kernel at stride 2.

    The output is exactly (B,2H,2W,Cout); the input gradient is the
    corresponding stride-2 forward convolution of the output gradient.
    """
    if stride != 2:
        raise ConfigError(f"transpose_conv2d: only stride 2 is supported, got {stride!r}")
    xd, kd, bd = x.data, kernels.data, bias.data
    _require_ndim("transpose_conv2d input", xd, 4)
    _require_ndim("transpose_conv2d kernels", kd, 4)
    kh, kw, kcin, cout = kd.shape
    if (kh, kw) != (2, 2):
        raise ConfigError(
            f"transpose_conv2d: kernel must be 2x2 for exact doubling, got {kh}x{kw}")
    batch, height, width, cin = xd.shape
    if cin != kcin:
        raise DimensionError(
            f"transpose_conv2d: input channel axis has {cin} channels but kernels expect {kcin}")
    if bd.shape != (cout,):
        raise DimensionError(f"transpose_conv2d: bias shape {bd.shape} does not match {cout}")

    out = np.einsum("bijc,klco->bikjlo", xd, kd).reshape(batch, 2 * height, 2 * width, cout)
    out = out + bd
    need_dx = x.requires_grad

    def backward(g):
        g6 = g.reshape(batch, height, 2, width, 2, cout)
        dk = np.einsum("bijc,bikjlo->klco", xd, g6)
        dx = np.einsum("bikjlo,klco->bijc", g6, kd) if need_dx else None
        db = g.sum(axis=(0, 1, 2))
        return dx, dk, db

    return Tensor(out, op="transpose_conv2d", parents=(x, kernels, bias), backward=backward)


def max_pool2d(x: Tensor, window: int = 2) -> Tensor:
    """Halve spatial extents, keeping the max of each 2x2 block.

    The gradient routes to the argmax position; ties go to the first element
    in row-major scan order of the block.
    """
    if window != 2:
        raise ConfigError(f"max_pool2d: only window 2 is supported, got {window!r}")
    xd = x.data
    _require_ndim("max_pool2d input", xd, 4)
    batch, height, width, channels = xd.shape
    if height % 2 or width % 2:
        raise DimensionError(f"max_pool2d: extents {height}x{width} not divisible by 2")
    h2, w2 = height // 2, width // 2

    blocks = (xd.reshape(batch, h2, 2, w2, 2, channels)
              .transpose(0, 1, 3, 5, 2, 4)
              .reshape(batch, h2, w2, channels, 4))
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        buf = np.zeros((batch, h2, w2, channels, 4))
        np.put_along_axis(buf, arg[..., None], g[..., None], axis=-1)
        dx = (buf.reshape(batch, h2, w2, channels, 2, 2)
              .transpose(0, 1, 4, 2, 5, 3)
              .reshape(batch, height, width, channels))
        return (dx,)

    return Tensor(out, op="max_pool2d", parents=(x,), backward=backward)


@dataclass
class BatchNormState:
    """Running statistics of a batch-normalization layer.

    Updated only in train mode; infer mode requires at least one update.
    """

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    epsilon: float = 1e-5
    n_updates: int = 0

    def __post_init__(self):
        self.running_mean = np.asarray(self.running_mean, dtype=np.float64)
        self.running_var = np.asarray(self.running_var, dtype=np.float64)
        if not 0.0 < self.momentum < 1.0:
            raise ConfigError(f"batch-norm momentum must lie in (0,1), got {self.momentum}")
        if self.epsilon < 0.0:
            raise ConfigError(f"batch-norm epsilon must be non-negative, got {self.epsilon}")
        if not np.all(self.running_var > 0.0):
            raise ConfigError("batch-norm running variance must be strictly positive")

    @classmethod
    def for_channels(cls, channels: int, momentum: float = 0.9,
                     epsilon: float = 1e-5) -> "BatchNormState":
        return cls(np.zeros(channels), np.ones(channels), momentum, epsilon)

    def update(self, batch_mean: np.ndarray, batch_var: np.ndarray) -> None:
        m = self.momentum
        self.running_mean = m * self.running_mean + (1.0 - m) * batch_mean
        self.running_var = m * self.running_var + (1.0 - m) * batch_var
        self.n_updates += 1


def _norm_axes(xd: np.ndarray) -> tuple[tuple[int, ...], int]:
    if xd.ndim == 4:
        return (0, 1, 2), xd.shape[3]
    if xd.ndim == 2:
        return (0,), xd.shape[1]
    raise DimensionError(f"batch_norm: expected a 2-d or 4-d array, got shape {xd.shape}")


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
               mode: str) -> Tensor:
    """Normalize per channel over batch (and spatial) axes, then scale/shift.

    Train mode uses batch statistics and updates `state`; infer mode uses the
    running statistics only.
    """
    _check_mode("batch_norm", mode)
    xd = x.data
    axes, channels = _norm_axes(xd)
    for name, t in (("gamma", gamma), ("beta", beta)):
        if t.data.shape != (channels,):
            raise DimensionError(
                f"batch_norm: {name} shape {t.data.shape} does not match {channels} channels")
    if state.running_mean.shape != (channels,):
        raise DimensionError(
            f"batch_norm: state holds {state.running_mean.shape[0]} channels, input has {channels}")

    gd, bd = gamma.data, beta.data
    if mode == "train":
        mean = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        inv = 1.0 / np.sqrt(var + state.epsilon)
        xhat = (xd - mean) * inv
        state.update(mean, var)
        n_red = xd.size // channels

        def backward(g):
            dbeta = g.sum(axis=axes)
            dgamma = (g * xhat).sum(axis=axes)
            dx = (gd * inv / n_red) * (n_red * g - dbeta - xhat * dgamma)
            return dx, dgamma, dbeta

    else:
        if state.n_updates == 0:
            raise StateError("batch_norm: infer mode requested before any statistics exist")
        inv = 1.0 / np.sqrt(state.running_var + state.epsilon)
        xhat = (xd - state.running_mean) * inv

        def backward(g):
            return g * gd * inv, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    out = gd * xhat + bd
    return Tensor(out, op="batch_norm", parents=(x, gamma, beta), backward=backward)


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map of `x` (B,F) by `weights` (F,G) plus `bias` (G,)."""
    xd, wd, bd = x.data, weights.data, bias.data
    _require_ndim("dense input", xd, 2)
    _require_ndim("dense weights", wd, 2)
    if xd.shape[1] != wd.shape[0]:
        raise DimensionError(
            f"dense: input features {xd.shape[1]} do not match weight rows {wd.shape[0]}")
    if bd.shape != (wd.shape[1],):
        raise DimensionError(f"dense: bias shape {bd.shape} does not match {wd.shape[1]} units")
    out = xd @ wd + bd
    need_dx = x.requires_grad

    def backward(g):
        dx = g @ wd.T if need_dx else None
        return dx, xd.T @ g, g.sum(axis=0)

    return Tensor(out, op="dense", parents=(x, weights, bias), backward=backward)


def relu(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor(np.maximum(xd, 0.0), op="relu", parents=(x,),
                  backward=lambda g: (g * (xd > 0.0),))


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    # numerically stable split on sign
    y = np.where(xd >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(xd))),
                 np.exp(-np.abs(xd)) / (1.0 + np.exp(-np.abs(xd))))
    return Tensor(y, op="sigmoid", parents=(x,), backward=lambda g: (g * y * (1.0 - y),))


def softmax_channels(x: Tensor) -> Tensor:
    """Normalize the last (channel) axis to a probability vector per pixel."""
    xd = x.data
    if xd.ndim < 2 or xd.shape[-1] < 2:
        raise DimensionError(
            f"softmax_channels: need a channel axis of extent >= 2, got shape {xd.shape}")
    shifted = xd - xd.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Tensor(y, op="softmax", parents=(x,), backward=backward)


def activate(x: Tensor, kind: str) -> Tensor:
    """Dispatch on activation name: relu, sigmoid, or softmax_channels."""
    try:
        fn = {"relu": relu, "sigmoid": sigmoid, "softmax_channels": softmax_channels}[kind]
    except KeyError:
        raise ConfigError(f"unknown activation {kind!r}") from None
    return fn(x)


def dropout(x: Tensor, rate: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).

    Infer mode (and rate 0) passes the input through bit-identically.
    """
    _check_mode("dropout", mode)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0,1), got {rate}")
    if mode == "infer" or rate == 0.0:
        return Tensor(x.data, op="dropout", parents=(x,), backward=lambda g: (g,))
    if rng is None:
        raise UsageError("train-mode dropout requires a seeded generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return Tensor(x.data * mask, op="dropout", parents=(x,),
                  backward=lambda g: (g * mask,))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last (channel) axis; channels of `a` come first."""
    ad, bd = a.data, b.data
    if ad.ndim != bd.ndim or ad.shape[:-1] != bd.shape[:-1]:
        raise DimensionError(
            f"concat_channels: leading extents differ, {ad.shape} vs {bd.shape}")
    ca = ad.shape[-1]
    out = np.concatenate([ad, bd], axis=-1)
    return Tensor(out, op="concat", parents=(a, b),
                  backward=lambda g: (g[..., :ca], g[..., ca:]))


def _check_mode(op: str, mode: str) -> None:
    if mode not in ("train", "infer"):
        raise ConfigError(f"{op}: mode must be 'train' or 'infer', got {mode!r}")
