"""Robustness toolkit for cyber-physical systems: costed transition systems,
contractive simulation relations, grid abstractions, safety-game synthesis,
controller refinement and trace monitoring."""

__version__ = "0.1.0"
