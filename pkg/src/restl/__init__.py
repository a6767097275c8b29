"""Natural-language-to-STL toolkit: STL monitoring, multi-aspect rewards,
preference-trained reward models, curricula and KL-regularized PPO."""

__version__ = "0.1.0"
