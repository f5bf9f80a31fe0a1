"""Federated learning on imbalanced tabular data with synthetic minority augmentation."""

__version__ = "0.1.0"

from .seeding import derive_seed, rng_for  # noqa: E402

__all__ = ["__version__", "derive_seed", "rng_for"]
