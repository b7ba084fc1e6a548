"""Divide-and-conquer causal structure learning.

Markov blankets from a thresholded precision matrix, local score-based
learning on each blanket, and reconciliation of the local results through an
exact 0/1 linear program.
"""
from .graph import CausalGraph, MetricsReport, dagness, is_dag, metrics
from .markov import MarkovBlankets, select_lambda1
from .pipeline import RunConfig, RunReport, compare_naive, run_benchmark, run_dcilp

__all__ = [
    "CausalGraph", "MetricsReport", "dagness", "is_dag", "metrics",
    "MarkovBlankets", "select_lambda1",
    "RunConfig", "RunReport", "compare_naive", "run_benchmark", "run_dcilp",
]
__version__ = "0.1.0"
