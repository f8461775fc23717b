"""Reset-free task learning and skill discovery through an adversarial
reset game, with a Double-DQN hierarchy over the learned skills."""

__version__ = "0.1.0"
