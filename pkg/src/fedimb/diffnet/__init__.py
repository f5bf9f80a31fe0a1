"""Small dense-network engine with taped reverse-mode differentiation."""

from .layers import BatchNorm, Dense, GaussianNoise
from .losses import bce_loss
from .network import Network, mlp
from .optim import SGD, Adam, Optimizer, RMSprop, make_optimizer
from .serialize import BlobError, WeightBlob, deserialize_weights, serialize_weights
from .tape import NonFiniteError, Tape, TapeError, Tensor, no_record

__all__ = [
    "Adam",
    "BatchNorm",
    "BlobError",
    "Dense",
    "GaussianNoise",
    "Network",
    "NonFiniteError",
    "Optimizer",
    "RMSprop",
    "SGD",
    "Tape",
    "TapeError",
    "Tensor",
    "WeightBlob",
    "bce_loss",
    "deserialize_weights",
    "make_optimizer",
    "mlp",
    "no_record",
    "serialize_weights",
]
