"""Alarm-log anomaly detection from supervised entity embeddings, PCA and GMM clustering."""

__version__ = "0.1.0"
