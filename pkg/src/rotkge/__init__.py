"""Lightweight rotation-based knowledge graph embedding toolkit.

Implements four scoring models over a shared Poincare-ball / Euclidean
kernel: RotE, RotH, and the flexible-addition models RotL and Rot2L,
with full training, filtered link-prediction evaluation, and a per-epoch
timing benchmark.
"""

from .models import RotE, RotH, RotL, Rot2L, create_model  # noqa: F401

__version__ = "0.1.0"
