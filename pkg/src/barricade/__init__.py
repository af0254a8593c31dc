"""barricade: simulation-guided barrier-certificate synthesis and interval
checking for feedforward neural-network controlled systems, demonstrated on
Dubins-car path following.
"""

from ._version import __version__

from . import symexpr, network, plant, simulate, lpgen, dsat, certify, train

__all__ = [
    "__version__", "symexpr", "network", "plant", "simulate", "lpgen",
    "dsat", "certify", "train",
]
