from __future__ import annotations

import numpy as np

from . import tape as T
from .tape import Tensor

ACTIVATIONS = ("relu", "sigmoid", "linear")


class Layer:
    """Base class. Subclasses override ``forward`` and may own parameters."""

    trainable: bool = True

    def parameters(self) -> list[Tensor]:
        return []

    def state_arrays(self) -> list[np.ndarray]:
        """Arrays persisted in a weight blob, in declaration order."""
        return [p.value for p in self.parameters()]

    def load_state_arrays(self, arrays: list[np.ndarray]) -> None:
        for p, a in zip(self.parameters(), arrays):
            p.value = np.array(a, dtype=np.float64)

    def forward(self, x: Tensor, training: bool) -> Tensor:
        raise NotImplementedError

    def output_dim(self, input_dim: int) -> int:
        return input_dim


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, activation: str = "linear", rng=None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.weights = Tensor(np.zeros((in_dim, out_dim)), requires_grad=True)
        self.bias = Tensor(np.zeros((1, out_dim)), requires_grad=True)
        if rng is not None:
            self.initialize(rng)

    def initialize(self, rng: np.random.Generator) -> None:
        # Glorot-uniform weights, zero bias
        limit = np.sqrt(6.0 / (self.in_dim + self.out_dim))
        self.weights.value = rng.uniform(-limit, limit, size=(self.in_dim, self.out_dim))
        self.bias.value = np.zeros((1, self.out_dim))

    def parameters(self) -> list[Tensor]:
        return [self.weights, self.bias]

    def forward(self, x: Tensor, training: bool) -> Tensor:
        if x.shape[1] != self.in_dim:
            raise ValueError(f"Dense expects {self.in_dim} inputs, got {x.shape[1]}")
        z = T.affine(x, self.weights, self.bias)
        if self.activation == "relu":
            return T.relu(z)
        if self.activation == "sigmoid":
            return T.sigmoid(z)
        return z

    def output_dim(self, input_dim: int) -> int:
        return self.out_dim

    def __repr__(self) -> str:
        return f"Dense({self.in_dim}, {self.out_dim}, {self.activation!r})"


class BatchNorm(Layer):
    """Batch normalization over the batch axis.

    Training mode normalizes with the batch mean and (biased) variance and
    updates the running statistics unless ``frozen``; eval mode uses the
    running statistics only.
    """

    def __init__(self, dim: int, momentum: float = 0.99, epsilon: float = 1e-3):
        if not 0.0 < momentum < 1.0:
            raise ValueError("momentum must lie in (0, 1)")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.dim = dim
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = Tensor(np.ones((1, dim)), requires_grad=True)
        self.beta = Tensor(np.zeros((1, dim)), requires_grad=True)
        self.running_mean = np.zeros((1, dim))
        self.running_var = np.ones((1, dim))
        self.frozen = False

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta]

    def state_arrays(self) -> list[np.ndarray]:
        return [self.gamma.value, self.beta.value, self.running_mean, self.running_var]

    def load_state_arrays(self, arrays: list[np.ndarray]) -> None:
        g, b, m, v = (np.array(a, dtype=np.float64) for a in arrays)
        self.gamma.value, self.beta.value = g, b
        self.running_mean, self.running_var = m, v

    def normalize(self, x: Tensor, training: bool) -> Tensor:
        if x.shape[1] != self.dim:
            raise ValueError(f"BatchNorm expects {self.dim} inputs, got {x.shape[1]}")
        if training:
            mu = T.mean(x, axis=0, keepdims=True)
            centered = T.sub(x, mu)
            var = T.mean(T.mul(centered, centered), axis=0, keepdims=True)
            if not self.frozen:
                m = self.momentum
                self.running_mean = m * self.running_mean + (1 - m) * mu.value
                self.running_var = m * self.running_var + (1 - m) * var.value
            return T.mul(centered, T.power(T.add(var, self.epsilon), -0.5))
        inv = 1.0 / np.sqrt(self.running_var + self.epsilon)
        return T.mul(T.sub(x, self.running_mean), inv)

    def forward(self, x: Tensor, training: bool) -> Tensor:
        return T.add(T.mul(self.normalize(x, training), self.gamma), self.beta)

    def __repr__(self) -> str:
        return f"BatchNorm({self.dim})"


class GaussianNoise(Layer):
    """Adds N(0, stddev^2) noise in training mode; identity otherwise.

    ``active_in_eval`` keeps the noise on in eval mode as well.
    """

    def __init__(self, stddev: float = 0.01, rng: np.random.Generator | None = None):
        if stddev < 0:
            raise ValueError("stddev must be >= 0")
        self.stddev = stddev
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.active_in_eval = False

    def forward(self, x: Tensor, training: bool) -> Tensor:
        if not (training or self.active_in_eval) or self.stddev == 0:
            return x
        return T.add(x, self.rng.normal(0.0, self.stddev, size=x.shape))

    def __repr__(self) -> str:
        return f"GaussianNoise({self.stddev})"
