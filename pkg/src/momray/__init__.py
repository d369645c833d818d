"""Momentum ray transforms of symmetric tensor fields: forward evaluation,
spectral calculus on the sphere bundle, reconstruction and H^s_t norm identities."""

__version__ = "0.1.0"
