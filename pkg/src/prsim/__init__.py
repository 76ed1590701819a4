"""Predictive relay selection simulator.

Rayleigh fading generation, a numpy recurrent network library, a channel
magnitude predictor, dual-hop relay selection Monte-Carlo, timer-based
relay contention, complexity accounting and a reproducible experiment
harness.
"""

__version__ = "0.1.0"
