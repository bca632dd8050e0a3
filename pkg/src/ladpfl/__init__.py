"""Simulator for federated learning with layer-wise adaptive local differential privacy."""

from . import dp_mechanism, model_engine, privacy_accountant, tensor_core
from .errors import LadpError

__version__ = "0.1.0"

__all__ = ["LadpError", "dp_mechanism", "model_engine", "privacy_accountant", "tensor_core", "__version__"]
