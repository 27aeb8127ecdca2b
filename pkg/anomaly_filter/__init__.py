"""Selective-filter diffusion for unsupervised time-series anomaly detection."""
from __future__ import annotations

__version__ = "0.1.0"
