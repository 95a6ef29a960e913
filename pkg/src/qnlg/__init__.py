"""Quantum-classifier-guided sentence generation.

Sentences are typed with a pregroup lexicon, compiled to IQP circuits,
classified by topic on an exact statevector simulator, and generated by
fast simulated annealing (or random guessing) against the classifier.
"""

from .compiler import ParameterStore, QubitBudget, contract_oracle, eval_probs
from .generate import AnnealConfig, anneal, benchmark, rgt
from .grammar import generate_dataset, is_grammatical, parse_lexicon, reduce
from .train import SpsaConfig, fit, predict

__all__ = [
    "AnnealConfig",
    "ParameterStore",
    "QubitBudget",
    "SpsaConfig",
    "anneal",
    "benchmark",
    "contract_oracle",
    "eval_probs",
    "fit",
    "generate_dataset",
    "is_grammatical",
    "parse_lexicon",
    "predict",
    "reduce",
    "rgt",
]
