"""Central finite-difference oracles shared by the gradient tests."""

from __future__ import annotations

import numpy as np

from fedimb.augment.gan import gradient_penalty_t
from fedimb.diffnet import Dense, Network, Tape, bce_loss, mlp, no_record
from fedimb.diffnet import tape as T

H = 1e-5
DENOM_FLOOR = 1e-5


def random_net(rng, hidden: str, batchnorm: bool, out_act: str, in_dim=None) -> Network:
    """At most 4 dense layers of at most 16 units, with non-trivial biases."""
    in_dim = int(rng.integers(1, 6)) if in_dim is None else in_dim
    spec: list = []
    for i in range(int(rng.integers(1, 4))):
        spec.append((int(rng.integers(2, 17)), hidden))
        if batchnorm and i == 0:
            spec.append("batchnorm")
    spec.append((1, out_act))
    net = mlp(in_dim, spec, rng)
    for p in net.parameters():
        p.value = p.value + rng.normal(0.0, 0.2, size=p.value.shape)
    return net


def loss_fn(kind: str, y: np.ndarray):
    """bce on sigmoid outputs, or a signed mean (critic-style objective)."""
    if kind == "bce":
        return lambda out: bce_loss(out, y)
    signs = np.where(y > 0.5, 1.0, -1.0).reshape(-1, 1)
    return lambda out: T.mean(T.mul(out, signs))


def relu_masks(net: Network, x: np.ndarray) -> list[np.ndarray]:
    masks = []
    with no_record():
        h = T.Tensor(x)
        for layer in net.layers:
            if isinstance(layer, Dense) and layer.activation == "relu":
                masks.append(T.add(T.matmul(h, layer.weights), layer.bias).value > 0)
            h = layer.forward(h, net.training)
    return masks


def rel_error(a: np.ndarray, n: np.ndarray) -> float:
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), DENOM_FLOOR))


def _coords(rng, size: int, per_tensor: int) -> np.ndarray:
    return np.arange(size) if size <= per_tensor else rng.choice(size, per_tensor, replace=False)


def check_gradients(net: Network, value_fn, grads: list[np.ndarray], rng, x=None, per_tensor: int = 6):
    """Worst per-tensor relative error, or None when a probe crossed a relu kink.

    ``value_fn()`` evaluates the scalar objective at the current weights.
    """
    base = relu_masks(net, x) if x is not None else None
    worst = 0.0
    for p, g in zip(net.parameters(), grads):
        flat = p.value.reshape(-1)
        idx = _coords(rng, flat.size, per_tensor)
        num = np.empty(idx.size)
        for k, i in enumerate(idx):
            old = flat[i]
            vals = []
            for step in (H, -H):
                flat[i] = old + step
                if base is not None and any((m != b).any() for m, b in zip(relu_masks(net, x), base)):
                    flat[i] = old
                    return None
                vals.append(value_fn())
            flat[i] = old
            num[k] = (vals[0] - vals[1]) / (2 * H)
        worst = max(worst, rel_error(g.reshape(-1)[idx], num))
    return worst


def backprop_case(rng, hidden: str, batchnorm: bool, loss_kind: str):
    """Build a random net/batch and return (net, objective, analytic grads, batch)."""
    out_act = "sigmoid" if loss_kind == "bce" else "linear"
    net = random_net(rng, hidden, batchnorm, out_act)
    x = rng.normal(size=(int(rng.integers(4, 9)), net.input_dim))
    y = rng.integers(0, 2, size=x.shape[0]).astype(float)
    loss = loss_fn(loss_kind, y)
    with Tape() as tape:
        value = loss(net(x))
    grads = [g.value for g in tape.gradient(value, net.parameters())]

    def objective():
        with no_record():
            return float(loss(net(x)).value)

    return net, objective, grads, x


def penalty_case(rng, hidden: str):
    """Random relu/linear critic and interpolates; returns analytic d gp / d theta."""
    net = random_net(rng, hidden, False, "linear")
    x_hat = rng.uniform(0.0, 1.0, size=(int(rng.integers(2, 9)), net.input_dim))
    with Tape() as tape:
        gp = gradient_penalty_t(net, x_hat)
    grads = [g.value for g in tape.gradient(gp, net.parameters())]

    def objective():
        return float(gradient_penalty_t(net, x_hat).value)

    return net, objective, grads, x_hat
