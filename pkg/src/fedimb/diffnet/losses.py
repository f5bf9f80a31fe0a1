from __future__ import annotations

import numpy as np

from . import tape as T
from .tape import Tensor

EPSILON = 1e-7


def bce_loss(predictions, targets, eps: float = EPSILON) -> Tensor:
    """Mean binary cross-entropy with predictions clamped to [eps, 1 - eps]."""
    p = T.as_tensor(predictions)
    t = np.asarray(targets.value if isinstance(targets, Tensor) else targets, dtype=np.float64)
    if t.shape != p.shape:
        if t.size == p.value.size:
            t = t.reshape(p.shape)
        else:
            raise ValueError(f"predictions {p.shape} and targets {t.shape} differ")
    p = T.clip(p, eps, 1.0 - eps)
    terms = T.add(T.mul(t, T.log(p)), T.mul(1.0 - t, T.log(T.sub(1.0, p))))
    return T.neg(T.mean(terms))
