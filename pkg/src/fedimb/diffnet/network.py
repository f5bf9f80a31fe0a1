from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import tape as T
from .layers import BatchNorm, Dense, GaussianNoise, Layer
from .tape import Tape, TapeError, Tensor


@dataclass
class _Recorded:
    tape: Tape
    inputs: Tensor
    output: Tensor


class Network:
    """An ordered stack of layers sharing one training/eval mode."""

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)
        self.training = True
        self._last: _Recorded | None = None
        self._check_chain()

    def _check_chain(self) -> None:
        dim = None
        for layer in self.layers:
            if isinstance(layer, Dense):
                if dim is not None and layer.in_dim != dim:
                    raise ValueError(f"layer {layer!r} expects {layer.in_dim} inputs, previous gives {dim}")
                dim = layer.out_dim
            elif isinstance(layer, BatchNorm):
                if dim is not None and layer.dim != dim:
                    raise ValueError(f"layer {layer!r} expects {layer.dim} inputs, previous gives {dim}")
                dim = layer.dim

    @property
    def input_dim(self) -> int:
        for layer in self.layers:
            if isinstance(layer, Dense):
                return layer.in_dim
            if isinstance(layer, BatchNorm):
                return layer.dim
        raise ValueError("network has no sized layer")

    @property
    def output_dim(self) -> int:
        dim = self.input_dim
        for layer in self.layers:
            dim = layer.output_dim(dim)
        return dim

    def train(self) -> "Network":
        self.training = True
        return self

    def eval(self) -> "Network":
        self.training = False
        return self

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def n_parameters(self) -> int:
        return int(np.sum([p.value.size for p in self.parameters()]))

    def __call__(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.value.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"batch of shape {x.shape} does not match input dim {self.input_dim}")
        for layer in self.layers:
            x = layer.forward(x, self.training)
        return x

    def forward(self, batch) -> Tensor:
        """Forward pass recorded for a later :meth:`backward`.

        Records on the caller's tape if one is active, otherwise on a
        private tape owned by the network.
        """
        active = T._active_tape()
        tape = active if active is not None else Tape()
        x = batch if isinstance(batch, Tensor) else Tensor(batch)
        if active is None:
            with tape:
                tape.watch(x)
                out = self(x)
        else:
            out = self(x)
        self._last = _Recorded(tape, x, out)
        return out

    def backward(self, loss_grad) -> list[np.ndarray]:
        """Parameter gradients given dLoss/dOutput of the last recorded forward."""
        if self._last is None:
            raise TapeError("no recorded forward pass")
        rec = self._last
        grads = rec.tape.gradient(rec.output, self.parameters(), output_grad=loss_grad)
        return [g.value for g in grads]

    def predict(self, batch) -> np.ndarray:
        """Untaped forward pass returning a plain array."""
        with T.no_record():
            return self(Tensor(np.asarray(batch, dtype=np.float64))).value

    def input_gradient(self, batch) -> Tensor:
        """Per-row gradient of the scalar output w.r.t. the input row.

        The result is recorded on the active tape (or a private one), so it
        can be differentiated again w.r.t. the parameters.
        """
        if self.output_dim != 1:
            raise ValueError("input_gradient needs a network with a single output")
        active = T._active_tape()
        tape = active if active is not None else Tape()
        x = batch if isinstance(batch, Tensor) else Tensor(batch)
        with tape:
            tape.watch(x)
            out = self(x)
            (gx,) = tape.gradient(out, [x], create_graph=True)
        self._last = _Recorded(tape, x, out)
        return gx

    @contextmanager
    def frozen(self, weights: bool = False):
        """Batch-norm layers keep their running statistics while inside.

        With ``weights`` the parameters also stop requiring gradients, so a
        tape skips their gradient work (the generator step of a GAN).
        """
        bns = [layer for layer in self.layers if isinstance(layer, BatchNorm)]
        params = self.parameters() if weights else []
        saved = [bn.frozen for bn in bns]
        saved_grad = [p.requires_grad for p in params]
        for bn in bns:
            bn.frozen = True
        for p in params:
            p.requires_grad = False
        try:
            yield self
        finally:
            for bn, f in zip(bns, saved):
                bn.frozen = f
            for p, r in zip(params, saved_grad):
                p.requires_grad = r

    def clip_weights(self, c: float) -> None:
        if c <= 0:
            raise ValueError("clip value must be positive")
        for p in self.parameters():
            np.clip(p.value, -c, c, out=p.value)

    def __repr__(self) -> str:
        return "Network([" + ", ".join(map(repr, self.layers)) + "])"


def mlp(
    input_dim: int,
    spec: list,
    rng: np.random.Generator,
    noise_rng: np.random.Generator | None = None,
) -> Network:
    """Build a network from a compact layer spec.

    ``spec`` items are ``(width, activation)`` tuples for dense layers,
    ``"batchnorm"``, or ``("noise", stddev)``.  Noise layers draw from
    ``noise_rng`` so adding one never shifts the weight initialization stream.
    """
    layers: list[Layer] = []
    dim = input_dim
    for item in spec:
        if item == "batchnorm":
            layers.append(BatchNorm(dim))
        elif isinstance(item, tuple) and item[0] == "noise":
            layers.append(GaussianNoise(item[1], rng=noise_rng))
        else:
            width, act = item
            layers.append(Dense(dim, width, act, rng=rng))
            dim = width
    return Network(layers)
