"""Inference for probabilistic dependency graphs via exponential conic programs."""

from .model import (
    PDG,
    GammaSpec,
    Hyperarc,
    JointDistribution,
    PdgError,
    Variable,
    oinc,
    score_gamma,
    sinc,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "PDG",
    "GammaSpec",
    "Hyperarc",
    "JointDistribution",
    "PdgError",
    "Variable",
    "oinc",
    "score_gamma",
    "sinc",
    "validate",
    "__version__",
]
