"""MIMO symbiotic radio with many passive backscatter devices.

Exact and large-J rates for the primary link and the BD multiple-access
channel, and rate-constrained transmit covariance optimization.
"""

__version__ = "0.1.0"
