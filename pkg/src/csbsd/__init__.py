"""Compressive sensing via Bayesian support detection."""

from .model import PriorParams, SparseSignal, generate_signal, sense
from .reconstruct import CsBsdConfig, ReconResult, cs_bsd, oracle_mmse
from .sensing import SensingGraph

__all__ = ["PriorParams", "SparseSignal", "generate_signal", "sense", "CsBsdConfig",
           "ReconResult", "cs_bsd", "oracle_mmse", "SensingGraph"]
__version__ = "0.1.0"
