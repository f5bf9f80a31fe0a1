"""First-order optimizers operating in place on parameter tensors."""

from __future__ import annotations

import math

import numpy as np

from .tape import NonFiniteError, Tensor


class Optimizer:
    def __init__(self, learning_rate: float):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.learning_rate = learning_rate
        self.state: list[dict[str, np.ndarray]] | None = None
        self.iterations = 0

    def _init_state(self, params: list[Tensor]) -> list[dict[str, np.ndarray]]:
        raise NotImplementedError

    def _update(self, value: np.ndarray, grad: np.ndarray, state: dict) -> None:
        raise NotImplementedError

    def step(self, params: list[Tensor], grads) -> None:
        if len(params) != len(grads):
            raise ValueError("params and grads differ in length")
        grads = [g.value if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64) for g in grads]
        for p, g in zip(params, grads):
            if p.value.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.value.shape}")
            if not math.isfinite(np.add.reduce(g, axis=None)):
                raise NonFiniteError("non-finite gradient")
        if self.state is None:
            self.state = self._init_state(params)
        elif len(self.state) != len(params):
            raise ValueError("optimizer was initialized for a different parameter list")
        self.iterations += 1
        for p, g, st in zip(params, grads, self.state):
            self._update(p.value, g, st)


class SGD(Optimizer):
    """Momentum SGD in the ``v <- mu*v - lr*g; w <- w + v`` form."""

    def __init__(self, learning_rate: float = 0.01, momentum: float = 0.0):
        super().__init__(learning_rate)
        self.momentum = momentum

    def _init_state(self, params):
        return [{"velocity": np.zeros_like(p.value)} for p in params]

    def _update(self, value, grad, state):
        v = state["velocity"]
        v *= self.momentum
        v -= self.learning_rate * grad
        value += v


class Adam(Optimizer):
    def __init__(self, learning_rate: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-7):
        super().__init__(learning_rate)
        self.beta1, self.beta2, self.epsilon = beta1, beta2, epsilon

    def _init_state(self, params):
        return [{"m": np.zeros_like(p.value), "v": np.zeros_like(p.value), "buf": np.empty_like(p.value)} for p in params]

    def _update(self, value, grad, state):
        # in place through a scratch buffer: w -= lr * m_hat / (sqrt(v_hat) + eps)
        t = self.iterations
        m, v, buf = state["m"], state["v"], state["buf"]
        np.multiply(grad, 1 - self.beta1, out=buf)
        m *= self.beta1
        m += buf
        np.square(grad, out=buf)
        buf *= 1 - self.beta2
        v *= self.beta2
        v += buf
        np.divide(v, 1 - self.beta2**t, out=buf)
        np.sqrt(buf, out=buf)
        buf += self.epsilon
        np.divide(m, buf, out=buf)
        buf *= self.learning_rate / (1 - self.beta1**t)
        value -= buf


class RMSprop(Optimizer):
    def __init__(self, learning_rate: float = 0.001, rho: float = 0.9, epsilon: float = 1e-7):
        super().__init__(learning_rate)
        self.rho, self.epsilon = rho, epsilon

    def _init_state(self, params):
        return [{"v": np.zeros_like(p.value), "buf": np.empty_like(p.value)} for p in params]

    def _update(self, value, grad, state):
        v, buf = state["v"], state["buf"]
        np.square(grad, out=buf)
        buf *= 1 - self.rho
        v *= self.rho
        v += buf
        np.sqrt(v, out=buf)
        buf += self.epsilon
        np.divide(grad, buf, out=buf)
        buf *= self.learning_rate
        value -= buf


def make_optimizer(kind: str, **kwargs) -> Optimizer:
    kinds = {"sgd_momentum": SGD, "sgd": SGD, "adam": Adam, "rmsprop": RMSprop}
    try:
        return kinds[kind](**kwargs)
    except KeyError:
        raise ValueError(f"unknown optimizer {kind!r}") from None
