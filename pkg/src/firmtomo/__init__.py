"""Federated multimodal tomographic reconstruction."""

__version__ = "0.1.0"
