"""Hierarchical spatio-temporal graph models for skeleton-based video anomaly detection.

Per-person pose graphs (low level) and per-frame crowd graphs (high level) feed
small graph-convolution predictors; three prediction-error branches are mixed
with scene-group weights into a frame anomaly score.
"""

__version__ = "0.1.0"
