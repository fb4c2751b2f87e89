"""Differentiable building blocks: conv+BN+LeakyReLU, pooling, linear.

Each layer caches what its backward pass needs during forward and stores
parameter gradients in `self.grads`. Arrays are (batch, channels, length)
for feature maps and (batch, features) for the dense head.
"""

import numpy as np

from .. import kernels
from ..errors import ShapeError


def conv_output_length(length: int, kernel: int, stride: int, padding: int) -> int:
    return (length + 2 * padding - kernel) // stride + 1


class ConvBlock:
    """1-D cross-correlation, batch normalization, LeakyReLU."""

    def __init__(self, in_channels, out_channels, kernel_size, stride, padding,
                 *, leaky_slope=0.01, bn_eps=1e-5, bn_momentum=0.1,
                 rng=None, dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.leaky_slope = leaky_slope
        self.bn_eps = bn_eps
        self.bn_momentum = bn_momentum
        self.dtype = dtype

        rng = rng or np.random.default_rng(0)
        limit = 1.0 / np.sqrt(in_channels * kernel_size)
        self.weight = rng.uniform(
            -limit, limit, (out_channels, in_channels, kernel_size)
        ).astype(dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.bn_gamma = np.ones(out_channels, dtype=dtype)
        self.bn_beta = np.zeros(out_channels, dtype=dtype)
        self.bn_running_mean = np.zeros(out_channels, dtype=dtype)
        self.bn_running_var = np.ones(out_channels, dtype=dtype)
        self.grads = {}
        self._cache = None

    def params(self):
        return {
            "weight": self.weight, "bias": self.bias,
            "bn_gamma": self.bn_gamma, "bn_beta": self.bn_beta,
        }

    def buffers(self):
        return {
            "bn_running_mean": self.bn_running_mean,
            "bn_running_var": self.bn_running_var,
        }

    def forward(self, x, training, update_stats=True):
        if x.shape[1] != self.in_channels:
            raise ShapeError(
                f"conv expects {self.in_channels} channels, got {x.shape[1]}"
            )
        if x.shape[2] + 2 * self.padding < self.kernel_size:
            raise ShapeError("padded input shorter than the kernel")
        if self.padding:
            xp = np.zeros(
                (x.shape[0], x.shape[1], x.shape[2] + 2 * self.padding),
                dtype=x.dtype,
            )
            xp[:, :, self.padding : self.padding + x.shape[2]] = x
        else:
            xp = np.ascontiguousarray(x)
        z = kernels.conv1d_fwd(xp, self.weight, self.bias, self.stride)

        if training:
            mu = z.mean(axis=(0, 2))
            var = z.var(axis=(0, 2))
            if update_stats:
                mom = self.bn_momentum
                self.bn_running_mean = (
                    (1 - mom) * self.bn_running_mean + mom * mu
                ).astype(self.dtype)
                self.bn_running_var = (
                    (1 - mom) * self.bn_running_var + mom * var
                ).astype(self.dtype)
        else:
            mu = self.bn_running_mean
            var = self.bn_running_var
        inv_std = 1.0 / np.sqrt(var + self.bn_eps)
        xhat = (z - mu[None, :, None]) * inv_std[None, :, None]
        pre = self.bn_gamma[None, :, None] * xhat + self.bn_beta[None, :, None]
        out = np.where(pre >= 0, pre, self.leaky_slope * pre)

        self._cache = (xp, xhat, inv_std, pre >= 0, training)
        return out

    def backward(self, gy):
        xp, xhat, inv_std, positive, training = self._cache
        gpre = np.where(positive, gy, self.leaky_slope * gy)

        self.grads["bn_gamma"] = (gpre * xhat).sum(axis=(0, 2)).astype(self.dtype)
        self.grads["bn_beta"] = gpre.sum(axis=(0, 2)).astype(self.dtype)

        if training:
            # Batch-statistics BN backward.
            count = gpre.shape[0] * gpre.shape[2]
            gxhat = gpre * self.bn_gamma[None, :, None]
            sum_gxhat = gxhat.sum(axis=(0, 2))
            sum_gxhat_xhat = (gxhat * xhat).sum(axis=(0, 2))
            gz = (
                gxhat
                - sum_gxhat[None, :, None] / count
                - xhat * sum_gxhat_xhat[None, :, None] / count
            ) * inv_std[None, :, None]
        else:
            gz = gpre * (self.bn_gamma * inv_std)[None, :, None]

        gz = np.ascontiguousarray(gz)
        dw, db = kernels.conv1d_bwd_w(gz, xp, self.kernel_size, self.stride)
        self.grads["weight"] = dw
        self.grads["bias"] = db
        dxp = kernels.conv1d_bwd_x(gz, self.weight, self.stride, xp.shape[2])
        if self.padding:
            return dxp[:, :, self.padding : dxp.shape[2] - self.padding]
        return dxp


class AvgPool:
    """Strided mean pooling."""

    def __init__(self, kernel, stride):
        self.kernel = kernel
        self.stride = stride
        self._cache = None

    def params(self):
        return {}

    def forward(self, x, training=False, update_stats=True):
        length = x.shape[2]
        if self.kernel > length:
            raise ShapeError("pool kernel larger than input length")
        lout = (length - self.kernel) // self.stride + 1
        win = np.lib.stride_tricks.sliding_window_view(x, self.kernel, axis=2)
        out = win[:, :, :: self.stride].mean(axis=3)[:, :, :lout]
        self._cache = (x.shape, lout)
        return out

    def backward(self, gy):
        shape, lout = self._cache
        gx = np.zeros(shape, dtype=gy.dtype)
        for k in range(self.kernel):
            gx[:, :, k : k + self.stride * lout : self.stride] += gy / self.kernel
        return gx


class AdaptiveAvgPool:
    """Mean pooling to a fixed output length; bin i covers input indices
    [floor(i*L/out), ceil((i+1)*L/out))."""

    def __init__(self, out_length):
        self.out_length = out_length
        self._cache = None

    def params(self):
        return {}

    def _bins(self, length):
        starts = (np.arange(self.out_length) * length) // self.out_length
        ends = -(-(np.arange(1, self.out_length + 1) * length) // self.out_length)
        return starts, ends

    def forward(self, x, training=False, update_stats=True):
        length = x.shape[2]
        starts, ends = self._bins(length)
        out = np.empty((x.shape[0], x.shape[1], self.out_length), dtype=x.dtype)
        for i in range(self.out_length):
            out[:, :, i] = x[:, :, starts[i] : ends[i]].mean(axis=2)
        self._cache = (x.shape, starts, ends)
        return out

    def backward(self, gy):
        shape, starts, ends = self._cache
        gx = np.zeros(shape, dtype=gy.dtype)
        for i in range(self.out_length):
            width = ends[i] - starts[i]
            gx[:, :, starts[i] : ends[i]] += gy[:, :, i : i + 1] / width
        return gx


class Linear:
    """Dense layer with optional LeakyReLU activation."""

    def __init__(self, in_features, out_features, *, activation=None,
                 leaky_slope=0.01, rng=None, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        self.activation = activation
        self.leaky_slope = leaky_slope
        rng = rng or np.random.default_rng(0)
        limit = 1.0 / np.sqrt(in_features)
        self.weight = rng.uniform(-limit, limit, (out_features, in_features)).astype(dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.grads = {}
        self._cache = None

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False, update_stats=True):
        if x.shape[1] != self.in_features:
            raise ShapeError(
                f"linear expects {self.in_features} features, got {x.shape[1]}"
            )
        z = x @ self.weight.T + self.bias
        if self.activation == "leaky_relu":
            out = np.where(z >= 0, z, self.leaky_slope * z)
            self._cache = (x, z >= 0)
        else:
            out = z
            self._cache = (x, None)
        return out

    def backward(self, gy):
        x, positive = self._cache
        if positive is not None:
            gy = np.where(positive, gy, self.leaky_slope * gy)
        self.grads["weight"] = gy.T @ x
        self.grads["bias"] = gy.sum(axis=0)
        return gy @ self.weight
