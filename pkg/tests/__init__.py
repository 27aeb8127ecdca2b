"""Tests for the anomaly_filter package."""
