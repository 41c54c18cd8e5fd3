"""Log-sequence anomaly detection with an encoder, a projector and a prompted decoder."""

__version__ = "0.1.0"
