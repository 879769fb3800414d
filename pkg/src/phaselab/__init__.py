"""Desk-scale laboratory for real phase retrieval from random quadratic measurements."""

__version__ = "0.1.0"

from .ensemble import Ensemble, EnsembleKind
from .signal_set import BlockSparse, Finite, FullSphere, PairSample, SignalSet, Sparse
from .forward import NoiseSpec, ProblemInstance, generate_instance, phi
from .recovery import RecoveryResult, SolverSpec, recover, sign_error

__all__ = [
    "BlockSparse",
    "Ensemble",
    "EnsembleKind",
    "Finite",
    "FullSphere",
    "NoiseSpec",
    "PairSample",
    "ProblemInstance",
    "RecoveryResult",
    "SignalSet",
    "SolverSpec",
    "Sparse",
    "generate_instance",
    "phi",
    "recover",
    "sign_error",
]
