"""Center-guided adversarial training for hashing-based retrieval.

Trains a small differentiable hashing network, computes optimal center
codes in closed form, attacks the network with PGD against those centers,
and measures robustness with standard retrieval metrics (MAP, PR, P@N).
"""

from cgat.estimators import BaselineHashingEncoder, CenterGuidedHashingEncoder

__all__ = ["BaselineHashingEncoder", "CenterGuidedHashingEncoder"]
__version__ = "0.1.0"
