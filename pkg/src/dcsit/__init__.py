"""Capacity tools for two-transmitter channels with distributed causal CSIT.

Two solver families live here: exact common-message capacity of finite
state-dependent multiple-access channels via Shannon strategies and
Blahut-Arimoto (channel/strategies/ba), and rate regions of cooperative
Gaussian MIMO fading channels with quantized feedback via distributed
precoding (psdopt/precoding/region).
"""

from . import ba, channel, errors, linalg, precoding, psdopt, region, strategies

__all__ = [
    "ba",
    "channel",
    "errors",
    "linalg",
    "precoding",
    "psdopt",
    "region",
    "strategies",
]

__version__ = "0.1.0"
