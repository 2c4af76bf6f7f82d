"""Probabilistic available delivery capability for three-phase feeders.

Submodules: feeder (model + admittance), stochastic (input models),
powerflow (Newton kernel), continuation (margin tracing), chaos (polynomial
chaos machinery), assessment/report (pipelines and outputs), cli.
"""

__version__ = "0.1.0"
