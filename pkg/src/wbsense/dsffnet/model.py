"""The dual-stream feature-fusion network.

Two structurally identical convolutional streams (one per spectrum
representation) are fused by elementwise sum after the last conv layer,
adaptively pooled to a fixed length, flattened, and passed through a
two-layer dense head ending in per-subband sigmoids.
"""

import copy
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .layers import AdaptiveAvgPool, AvgPool, ConvBlock, Linear

GAMMA_CLIP = 1e-7
DB_FLOOR = 1e-12
VAR_FLOOR = 1e-12

# (kind, args): conv -> (in, out, kernel, stride, padding); pool -> (kernel, stride)
REFERENCE_CONV_SPECS = (
    ("conv", (1, 4, 7, 1, 3)),
    ("conv", (4, 4, 5, 1, 2)),
    ("conv", (4, 8, 3, 1, 1)),
    ("conv", (8, 32, 5, 2, 0)),
    ("pool", (2, 2)),
    ("conv", (32, 64, 1, 1, 0)),
    ("conv", (64, 64, 5, 2, 0)),
    ("pool", (2, 2)),
    ("conv", (64, 32, 1, 1, 0)),
)

MINIATURE_CONV_SPECS = (
    ("conv", (1, 2, 3, 1, 1)),
    ("conv", (2, 4, 3, 2, 0)),
)


@dataclass
class ModelConfig:
    num_subbands: int = 16
    conv_specs: tuple = REFERENCE_CONV_SPECS
    adaptive_out: int = 256
    fc_hidden: int = 64
    leaky_slope: float = 0.01
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    reference_length: int = 32768
    init_seed: int = 0

    def to_dict(self):
        return {
            "num_subbands": self.num_subbands,
            "conv_specs": [[kind, list(args)] for kind, args in self.conv_specs],
            "adaptive_out": self.adaptive_out,
            "fc_hidden": self.fc_hidden,
            "leaky_slope": self.leaky_slope,
            "bn_eps": self.bn_eps,
            "bn_momentum": self.bn_momentum,
            "reference_length": self.reference_length,
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["conv_specs"] = tuple(
            (kind, tuple(args)) for kind, args in d["conv_specs"]
        )
        return cls(**d)


def miniature_config(num_subbands=4, adaptive_out=8, seed=0) -> ModelConfig:
    """Small topology used for gradient checks and fast tests."""
    return ModelConfig(
        num_subbands=num_subbands,
        conv_specs=MINIATURE_CONV_SPECS,
        adaptive_out=adaptive_out,
        fc_hidden=8,
        reference_length=64,
        init_seed=seed,
    )


def normalize_input(psd: np.ndarray) -> np.ndarray:
    """dB conversion then per-sample standardization; scale invariant."""
    psd = np.asarray(psd, dtype=np.float64)
    x = 10.0 * np.log10(psd + DB_FLOOR)
    x = x - x.mean(axis=-1, keepdims=True)
    var = np.maximum((x**2).mean(axis=-1, keepdims=True), VAR_FLOOR)
    return x / np.sqrt(var)


class DsffModel:
    """Dual-stream fusion network with hand-written backprop."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(config.init_seed)

        def build_stream():
            layers = []
            for kind, args in config.conv_specs:
                if kind == "conv":
                    cin, cout, k, s, p = args
                    layers.append(
                        ConvBlock(
                            cin, cout, k, s, p,
                            leaky_slope=config.leaky_slope,
                            bn_eps=config.bn_eps,
                            bn_momentum=config.bn_momentum,
                            rng=rng, dtype=dtype,
                        )
                    )
                elif kind == "pool":
                    layers.append(AvgPool(*args))
                else:
                    raise ShapeError(f"unknown layer kind {kind!r}")
            return layers

        self.stream_mtm = build_stream()
        self.stream_pg = build_stream()
        self.fusion_channels = next(
            args[1] for kind, args in reversed(config.conv_specs) if kind == "conv"
        )
        self.adaptive_pool = AdaptiveAvgPool(config.adaptive_out)
        flat = self.fusion_channels * config.adaptive_out
        self.fc1 = Linear(
            flat, config.fc_hidden, activation="leaky_relu",
            leaky_slope=config.leaky_slope, rng=rng, dtype=dtype,
        )
        self.fc2 = Linear(config.fc_hidden, config.num_subbands, rng=rng, dtype=dtype)
        self._cache = None
        self.last_stream_lengths = None

    # ------------------------------------------------------------- plumbing

    def _conv_blocks(self):
        for name, stream in (("stream_mtm", self.stream_mtm),
                             ("stream_pg", self.stream_pg)):
            for i, layer in enumerate(stream):
                if isinstance(layer, ConvBlock):
                    yield f"{name}.{i}", layer

    def parameters(self):
        """Ordered (name, array) pairs of all trainable parameters."""
        out = []
        for prefix, layer in self._conv_blocks():
            for pname, arr in layer.params().items():
                out.append((f"{prefix}.{pname}", arr))
        for fname, fc in (("fc1", self.fc1), ("fc2", self.fc2)):
            for pname, arr in fc.params().items():
                out.append((f"{fname}.{pname}", arr))
        return out

    def gradients(self):
        out = []
        for prefix, layer in self._conv_blocks():
            for pname in layer.params():
                out.append((f"{prefix}.{pname}", layer.grads[pname]))
        for fname, fc in (("fc1", self.fc1), ("fc2", self.fc2)):
            for pname in fc.params():
                out.append((f"{fname}.{pname}", fc.grads[pname]))
        return out

    def set_parameters(self, named):
        lookup = dict(named)
        for prefix, layer in self._conv_blocks():
            for pname in layer.params():
                setattr(layer, pname, lookup[f"{prefix}.{pname}"].copy())
        for fname, fc in (("fc1", self.fc1), ("fc2", self.fc2)):
            for pname in fc.params():
                setattr(fc, pname, lookup[f"{fname}.{pname}"].copy())

    def state_copy(self):
        """Deep copy of parameters and BN running statistics."""
        state = {name: arr.copy() for name, arr in self.parameters()}
        for prefix, layer in self._conv_blocks():
            for bname, arr in layer.buffers().items():
                state[f"{prefix}.{bname}"] = arr.copy()
        return state

    def load_state(self, state):
        self.set_parameters(
            [(k, v) for k, v in state.items() if "bn_running" not in k]
        )
        for prefix, layer in self._conv_blocks():
            for bname in layer.buffers():
                setattr(layer, bname, state[f"{prefix}.{bname}"].copy())

    def clone(self):
        model = DsffModel(copy.deepcopy(self.config), dtype=self.dtype)
        model.load_state(self.state_copy())
        return model

    # -------------------------------------------------------------- forward

    def forward(self, x_mtm: np.ndarray, x_pg: np.ndarray, training: bool,
                update_stats: bool = True) -> np.ndarray:
        """Normalized inputs of shape (batch, M) -> decision statistics (batch, N)."""
        if x_mtm.shape != x_pg.shape:
            raise ShapeError("the two representations must have equal shape")
        a = np.ascontiguousarray(x_mtm, dtype=self.dtype)[:, None, :]
        b = np.ascontiguousarray(x_pg, dtype=self.dtype)[:, None, :]
        lengths = [a.shape[2]]
        for layer in self.stream_mtm:
            a = layer.forward(a, training, update_stats)
            lengths.append(a.shape[2])
        for layer in self.stream_pg:
            b = layer.forward(b, training, update_stats)
        fused = a + b
        pooled = self.adaptive_pool.forward(fused)
        lengths.append(pooled.shape[2])
        self.last_stream_lengths = lengths
        flat = pooled.reshape(pooled.shape[0], -1)
        h = self.fc1.forward(flat)
        logits = self.fc2.forward(h)
        gamma = 1.0 / (1.0 + np.exp(-logits))
        self._cache = (pooled.shape, gamma)
        return gamma

    def backward(self, dgamma: np.ndarray) -> None:
        """Populate parameter gradients from d(loss)/d(gamma)."""
        pooled_shape, gamma = self._cache
        dlogits = dgamma * gamma * (1.0 - gamma)
        dh = self.fc2.backward(dlogits.astype(self.dtype))
        dflat = self.fc1.backward(dh)
        dpooled = dflat.reshape(pooled_shape)
        dfused = self.adaptive_pool.backward(dpooled)
        da = dfused
        db = dfused.copy()
        for layer in reversed(self.stream_mtm):
            da = layer.backward(da)
        for layer in reversed(self.stream_pg):
            db = layer.backward(db)


def bce_loss(gamma: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy over all samples and subbands."""
    if gamma.shape != labels.shape:
        raise ShapeError("gamma and labels shapes differ")
    g = np.clip(gamma, GAMMA_CLIP, 1.0 - GAMMA_CLIP)
    z = labels.astype(np.float64)
    return float(-np.mean(z * np.log(g) + (1.0 - z) * np.log(1.0 - g)))


def bce_grad(gamma: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(bce_loss)/d(gamma); zero where the clip is active."""
    g = np.clip(gamma, GAMMA_CLIP, 1.0 - GAMMA_CLIP)
    z = labels.astype(np.float64)
    grad = -(z / g - (1.0 - z) / (1.0 - g)) / gamma.size
    grad[(gamma < GAMMA_CLIP) | (gamma > 1.0 - GAMMA_CLIP)] = 0.0
    return grad


class Adam:
    """Standard Adam with bias correction."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, named_params, named_grads):
        self.t += 1
        grads = dict(named_grads)
        for name, param in named_params:
            g = grads[name].astype(np.float64)
            m = self.m.get(name, np.zeros_like(g))
            v = self.v.get(name, np.zeros_like(g))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name] = m
            self.v[name] = v
            mhat = m / (1.0 - self.beta1**self.t)
            vhat = v / (1.0 - self.beta2**self.t)
            param -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(param.dtype)
