"""Multi-agent broad reinforcement learning for traffic signal control."""

__version__ = "0.1.0"
