"""Probabilistic solar irradiance forecasting: data ingest, natural-gradient
boosting, reference forecasters, recalibration and verification."""

__version__ = "0.1.0"
