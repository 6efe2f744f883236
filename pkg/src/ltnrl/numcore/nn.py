"""Layers built on :mod:`ltnrl.numcore.tensor`.

Images are channels-last: ``(batch, height, width, channels)``. Convolution
weights are stored as ``(kernel_h, kernel_w, in_channels, out_channels)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as _tensor
from .tensor import DTYPE, ShapeError, Tensor, as_tensor, parameter

KINDS = ("dense", "conv2d", "relu", "tanh", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_features: int = 0
    out_features: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel_h: int = 0
    kernel_w: int = 0
    stride: int = 1
    padding: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "dense" and (self.in_features <= 0 or self.out_features <= 0):
            raise ValueError("dense layer widths must be positive")
        if self.kind == "conv2d":
            sizes = (self.in_channels, self.out_channels, self.kernel_h, self.kernel_w, self.stride)
            if min(sizes) <= 0:
                raise ValueError("conv2d channels, kernel and stride must be positive")

    @property
    def pad(self) -> tuple[int, int]:
        if not self.padding:
            return (0, 0)
        return ((self.kernel_h - 1) // 2, (self.kernel_w - 1) // 2)

    def output_hw(self, height: int, width: int) -> tuple[int, int]:
        ph, pw = self.pad
        return (
            conv_output_size(height, self.kernel_h, self.stride, ph),
            conv_output_size(width, self.kernel_w, self.stride, pw),
        )


def dense(in_features: int, out_features: int) -> LayerSpec:
    return LayerSpec("dense", in_features=in_features, out_features=out_features)


def conv2d(in_channels: int, out_channels: int, kernel: int | tuple[int, int], stride: int = 1,
           padding: bool = False) -> LayerSpec:
    kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
    return LayerSpec("conv2d", in_channels=in_channels, out_channels=out_channels,
                     kernel_h=kh, kernel_w=kw, stride=stride, padding=padding)


def activation(kind: str) -> LayerSpec:
    return LayerSpec(kind)


def conv_output_size(size: int, kernel: int, stride: int, pad: int = 0) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def init_params(spec: LayerSpec, rng: np.random.Generator) -> dict[str, Tensor]:
    """Glorot-uniform weights, zero biases."""
    if spec.kind == "dense":
        fan_in, fan_out = spec.in_features, spec.out_features
        shape = (spec.in_features, spec.out_features)
        bias = spec.out_features
    elif spec.kind == "conv2d":
        area = spec.kernel_h * spec.kernel_w
        fan_in, fan_out = spec.in_channels * area, spec.out_channels * area
        shape = (spec.kernel_h, spec.kernel_w, spec.in_channels, spec.out_channels)
        bias = spec.out_channels
    else:
        return {}
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return {
        "weight": parameter(rng.uniform(-limit, limit, size=shape)),
        "bias": parameter(np.zeros(bias, dtype=DTYPE)),
    }


def forward(spec: LayerSpec, params: dict[str, Tensor], x: Tensor) -> Tensor:
    x = as_tensor(x)
    if spec.kind == "dense":
        if x.ndim != 2:
            raise ShapeError(f"dense input must be (batch, features), got {x.shape}")
        if x.shape[1] != spec.in_features:
            raise ShapeError(f"dense input feature dimension is {x.shape[1]}, layer expects {spec.in_features}")
        return x @ params["weight"] + params["bias"]
    if spec.kind == "conv2d":
        return conv2d_op(x, params["weight"], params["bias"], spec.stride, spec.pad)
    if spec.kind == "relu":
        return x.relu()
    if spec.kind == "tanh":
        return x.tanh()
    return x.sigmoid()


def _grad_enabled() -> bool:
    return _tensor._grad_enabled


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Patch matrix of shape (n, ho, wo, kh, kw, c)."""
    n, _, _, c = xp.shape
    if stride == kh == kw and xp.shape[1] == ho * kh and xp.shape[2] == wo * kw:
        return xp.reshape(n, ho, kh, wo, kw, c).transpose(0, 1, 3, 2, 4, 5)
    view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    # view: (n, H-kh+1, W-kw+1, c, kh, kw)
    view = view[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    return view.transpose(0, 1, 2, 4, 5, 3)


def conv2d_op(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, pad: tuple[int, int] = (0, 0)) -> Tensor:
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be (batch, height, width, channels), got {x.shape}")
    kh, kw, cin, cout = weight.shape
    n, h, w, c = x.shape
    if c != cin:
        raise ShapeError(f"conv2d input channel dimension is {c}, layer expects {cin}")
    ph, pw = pad
    ho, wo = conv_output_size(h, kh, stride, ph), conv_output_size(w, kw, stride, pw)
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d kernel {kh}x{kw} does not fit input height/width {h}x{w}")

    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if (ph or pw) else x.data
    tiled = stride == kh == kw and xp.shape[1] == ho * kh and xp.shape[2] == wo * kw
    if tiled and not (_grad_enabled() and (x.requires_grad or weight.requires_grad or bias.requires_grad)):
        # non-overlapping windows: contract one kernel row at a time, no patch copy
        rows = xp.reshape(n, ho, kh, wo, kw * cin)
        wrows = weight.data.reshape(kh, kw * cin, cout)
        out = np.zeros((n, ho, wo, cout))
        for i in range(kh):
            out += rows[:, :, i] @ wrows[i]
        return Tensor(out + bias.data)
    cols = _windows(xp, kh, kw, stride, ho, wo).reshape(n * ho * wo, kh * kw * cin)
    wmat = weight.data.reshape(kh * kw * cin, cout)
    out = (cols @ wmat + bias.data).reshape(n, ho, wo, cout)
    padded_shape = xp.shape

    def backward(g):
        g2 = g.reshape(n * ho * wo, cout)
        gw = (cols.T @ g2).reshape(kh, kw, cin, cout)
        gb = g2.sum(axis=0)
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat.T).reshape(n, ho, wo, kh, kw, cin)
            gxp = np.zeros(padded_shape, dtype=DTYPE)
            if tiled:
                gxp[:] = gcols.transpose(0, 1, 3, 2, 4, 5).reshape(padded_shape)
            else:
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :] += gcols[:, :, :, i, j, :]
            gx = gxp[:, ph : ph + h, pw : pw + w, :]
        return gx, gw, gb

    return Tensor._make(out, (x, weight, bias), backward)


class Sequential:
    """A stack of layer specs with owned parameters."""

    def __init__(self, specs: Sequence[LayerSpec], rng: np.random.Generator):
        self.specs = list(specs)
        self.params = [init_params(s, rng) for s in self.specs]

    def __call__(self, x: Tensor) -> Tensor:
        for spec, params in zip(self.specs, self.params):
            x = forward(spec, params, x)
        return x

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{i}.{key}", t) for i, p in enumerate(self.params) for key, t in p.items()]

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()
