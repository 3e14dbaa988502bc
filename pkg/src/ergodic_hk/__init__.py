"""Han-Kobayashi sum-rates for two-user ergodic fading Gaussian interference channels.

Modules
-------
channel
    Fading laws, validation, classification, sampling and serialization.
rates
    Rate and sum-rate bounds of the HK region.
optimize
    Waterfilling, joint and separable sum-rate maximization, grid oracle.
schemes
    Sub-class capacity results and joint-vs-separable comparison.
cli
    Experiment runner (``ergodic-hk``).
"""

__version__ = "0.1.0"
