from .balance import METHODS, AugmentConfig, BalanceOutcome, balance, balance_with_details
from .gan import (
    DivergenceError,
    GanConfig,
    TrainedGenerator,
    critic_loss_gp,
    discriminator_loss,
    generator_loss,
    gradient_penalty,
    minimax_value,
    train_cgan,
    train_gan,
    train_wgan_gp,
)
from .smote import SmoteConfig, smote, smote_points

__all__ = [
    "AugmentConfig",
    "BalanceOutcome",
    "DivergenceError",
    "GanConfig",
    "METHODS",
    "SmoteConfig",
    "TrainedGenerator",
    "balance",
    "balance_with_details",
    "critic_loss_gp",
    "discriminator_loss",
    "generator_loss",
    "gradient_penalty",
    "minimax_value",
    "smote",
    "smote_points",
    "train_cgan",
    "train_gan",
    "train_wgan_gp",
]
