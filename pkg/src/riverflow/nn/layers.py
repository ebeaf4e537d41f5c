"""Neural-network layers with exact reverse-mode gradients.

Every layer caches what its backward pass needs during a training-mode
forward. Activations are float64 (B, features) or (B, C, H, W) arrays.
Weight initialization is symmetric uniform with bound sqrt(6/(fan_in +
fan_out)); biases start at zero.
"""

from __future__ import annotations

import numpy as np

from . import kernels

LOG_VAR_CLAMP = 30.0


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    """Base layer: parameter dicts plus forward/backward."""

    #: parameter names subject to L2 weight decay
    decay_params: tuple = ()

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grads(self):
        # zero in place: optimizers hold references to these arrays
        for key, val in self.params.items():
            if key in self.grads and self.grads[key].shape == val.shape:
                self.grads[key][...] = 0.0
            else:
                self.grads[key] = np.zeros_like(val)


class Dense(Layer):
    decay_params = ("w",)

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.params["w"] = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.params["b"] = np.zeros(n_out)
        self.zero_grads()
        self._x = None

    def forward(self, x, train):
        if x.shape[1] != self.n_in:
            raise ValueError(f"dense expected width {self.n_in}, got {x.shape[1]}")
        if train:
            self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dy):
        if self._x is None:
            raise RuntimeError("backward called without a cached forward")
        self.grads["w"] += self._x.T @ dy
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.params["w"].T


class Activation(Layer):
    KINDS = ("tanh", "relu", "sigmoid", "linear")

    def __init__(self, kind: str):
        super().__init__()
        if kind not in self.KINDS:
            raise ValueError(f"unknown activation {kind!r}")
        self.kind = kind
        self._cache = None

    def forward(self, x, train):
        if self.kind == "tanh":
            y = np.tanh(x)
        elif self.kind == "relu":
            y = np.maximum(x, 0.0)
        elif self.kind == "sigmoid":
            y = 1.0 / (1.0 + np.exp(-x))
        else:
            y = x
        if train:
            self._cache = y if self.kind != "relu" else x
        return y

    def backward(self, dy):
        if self.kind == "tanh":
            return dy * (1.0 - self._cache**2)
        if self.kind == "relu":
            return dy * (self._cache > 0)
        if self.kind == "sigmoid":
            return dy * self._cache * (1.0 - self._cache)
        return dy


class Flatten(Layer):
    def __init__(self):
        super().__init__()
        self._shape = None

    def forward(self, x, train):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Reshape(Layer):
    def __init__(self, shape: tuple):
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x, train):
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, dy):
        return dy.reshape(dy.shape[0], -1)


class Conv2D(Layer):
    """'Same'-padded strided correlation."""

    decay_params = ("w",)

    def __init__(self, c_in: int, c_out: int, k: int, stride: int, rng):
        super().__init__()
        self.c_in, self.c_out, self.k, self.stride = c_in, c_out, k, stride
        fan_in, fan_out = c_in * k * k, c_out * k * k
        self.params["w"] = glorot_uniform(rng, (c_out, c_in, k, k), fan_in, fan_out)
        self.params["b"] = np.zeros(c_out)
        self.zero_grads()
        self._x_pad = None

    def forward(self, x, train):
        x_pad, (pt, _), (pl, _) = kernels.pad_input(x, self.k, self.stride)
        y = kernels.conv2d_forward(x_pad, self.params["w"], self.stride)
        y += self.params["b"][None, :, None, None]
        if train:
            self._x_pad, self._pads, self._in_hw = x_pad, (pt, pl), x.shape[2:]
        return y

    def backward(self, dy):
        dy = np.ascontiguousarray(dy)
        self.grads["w"] += kernels.conv2d_backward_weights(
            self._x_pad, dy, self.k, self.k, self.stride
        )
        self.grads["b"] += dy.sum(axis=(0, 2, 3))
        dx_pad = kernels.conv2d_backward_data(
            dy, self.params["w"], self._x_pad.shape, self.stride
        )
        pt, pl = self._pads
        h, w = self._in_hw
        return dx_pad[:, :, pt:pt + h, pl:pl + w]


class ConvTranspose2D(Layer):
    """Adjoint of a 'same'-padded strided conv, with an explicit output size.

    Maps (B, c_in, h, w) to (B, c_out, H, W) where (h, w) is what a
    matching Conv2D would produce from (H, W); this lets a decoder invert
    encoder shapes exactly on odd grid dimensions.
    """

    decay_params = ("w",)

    def __init__(self, c_in: int, c_out: int, k: int, stride: int, out_hw: tuple, rng):
        super().__init__()
        self.c_in, self.c_out, self.k, self.stride = c_in, c_out, k, stride
        self.out_hw = tuple(out_hw)
        fan_in, fan_out = c_in * k * k, c_out * k * k
        # stored in conv orientation: a (c_out -> c_in) conv whose adjoint we apply
        self.params["w"] = glorot_uniform(rng, (c_in, c_out, k, k), fan_in, fan_out)
        self.params["b"] = np.zeros(c_out)
        self.zero_grads()
        h_in, pt, pb = kernels.same_padding(self.out_hw[0], k, stride)
        w_in, pl, pr = kernels.same_padding(self.out_hw[1], k, stride)
        self._expect_hw = (h_in, w_in)
        self._pads = (pt, pb, pl, pr)
        self._x = None

    def forward(self, x, train):
        if x.shape[2:] != self._expect_hw:
            raise ValueError(
                f"transposed conv expected input {self._expect_hw}, got {x.shape[2:]}"
            )
        pt, pb, pl, pr = self._pads
        h, w = self.out_hw
        pad_shape = (x.shape[0], self.c_out, h + pt + pb, w + pl + pr)
        x = np.ascontiguousarray(x)
        y_pad = kernels.conv2d_backward_data(x, self.params["w"], pad_shape, self.stride)
        y = y_pad[:, :, pt:pt + h, pl:pl + w] + self.params["b"][None, :, None, None]
        if train:
            self._x = x
        return np.ascontiguousarray(y)

    def backward(self, dy):
        pt, pb, pl, pr = self._pads
        dy_pad = np.pad(dy, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
        dy_pad = np.ascontiguousarray(dy_pad)
        self.grads["w"] += kernels.conv2d_backward_weights(
            dy_pad, self._x, self.k, self.k, self.stride
        )
        self.grads["b"] += dy.sum(axis=(0, 2, 3))
        return kernels.conv2d_forward(dy_pad, self.params["w"], self.stride)


class BatchNorm(Layer):
    """Batch normalization over the batch axis (and space, for conv input).

    Training mode normalizes with batch statistics and updates running
    statistics; eval mode is a frozen affine map using the running values.
    """

    def __init__(self, n_features: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.n_features, self.momentum, self.eps = n_features, momentum, eps
        self.params["gamma"] = np.ones(n_features)
        self.params["beta"] = np.zeros(n_features)
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)
        self.zero_grads()
        self._cache = None

    def _axes(self, x):
        if x.ndim == 2:
            return (0,), (1, self.n_features)
        if x.ndim == 4:
            return (0, 2, 3), (1, self.n_features, 1, 1)
        raise ValueError("batchnorm supports 2D or 4D inputs")

    def forward(self, x, train):
        axes, bshape = self._axes(x)
        gamma = self.params["gamma"].reshape(bshape)
        beta = self.params["beta"].reshape(bshape)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
            inv_std = 1.0 / np.sqrt(var.reshape(bshape) + self.eps)
            x_hat = (x - mean.reshape(bshape)) * inv_std
            self._cache = (x_hat, inv_std, axes, bshape)
            return gamma * x_hat + beta
        inv_std = 1.0 / np.sqrt(self.running_var.reshape(bshape) + self.eps)
        return gamma * (x - self.running_mean.reshape(bshape)) * inv_std + beta

    def backward(self, dy):
        x_hat, inv_std, axes, bshape = self._cache
        m = dy.size / self.n_features
        self.grads["gamma"] += (dy * x_hat).sum(axis=axes)
        self.grads["beta"] += dy.sum(axis=axes)
        gamma = self.params["gamma"].reshape(bshape)
        dxhat = dy * gamma
        term = (dxhat - dxhat.mean(axis=axes).reshape(bshape)
                - x_hat * (dxhat * x_hat).mean(axis=axes).reshape(bshape))
        return inv_std * term


class ReparamGaussian:
    """Reparameterized Gaussian bottleneck: z = mu + exp(0.5 logvar) * eps.

    ``freeze_noise`` reuses the last drawn noise so finite-difference
    gradient checks see a deterministic function.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.freeze_noise = False
        self._eps = None
        self._cache = None

    def forward(self, mu: np.ndarray, log_var: np.ndarray) -> np.ndarray:
        log_var = np.clip(log_var, -LOG_VAR_CLAMP, LOG_VAR_CLAMP)
        if not (self.freeze_noise and self._eps is not None and self._eps.shape == mu.shape):
            self._eps = self.rng.standard_normal(mu.shape)
        std = np.exp(0.5 * log_var)
        self._cache = (std, self._eps)
        return mu + std * self._eps

    def backward(self, dz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        std, eps = self._cache
        return dz, dz * eps * 0.5 * std


def gaussian_reparam_sample(mu: np.ndarray, log_var: np.ndarray, seed: int) -> np.ndarray:
    """One-shot reparameterized draw with a seeded generator."""
    from ..seeding import make_rng

    sampler = ReparamGaussian(make_rng(seed))
    return sampler.forward(np.asarray(mu, dtype=np.float64),
                           np.asarray(log_var, dtype=np.float64))


class Sequential:
    """Plain layer chain with shared forward/backward plumbing."""

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def forward(self, x, train: bool):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def param_items(self):
        """Deterministic (layer_index, name, array) iteration."""
        for idx, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield idx, name, layer.params[name]
