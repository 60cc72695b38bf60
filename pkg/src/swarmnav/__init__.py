"""Deterministic 2D multi-robot navigation suite.

Low-level safety-filtered control (per-agent QP over barrier constraints),
spectral connectivity checks, deadlock detection with leader-follower
reconfiguration, and pluggable high-level planners evaluated by a batch
experiment harness.
"""

__version__ = "0.1.0"
