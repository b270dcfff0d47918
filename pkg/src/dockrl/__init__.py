"""Simulated vision-guided docking for a robotic mower, trained with Double DQN."""

__version__ = "0.1.0"
