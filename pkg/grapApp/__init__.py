"""Online loss-weight tuning for multi-loss pretraining by downstream gradient alignment."""

__version__ = "0.1.0"
