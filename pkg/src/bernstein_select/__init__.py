"""Penalized least-squares model selection under Bernstein-type noise."""

from . import bounds, linalg, models, noise, selection, simulate
from .bounds import KAPPA
from .linalg import Subspace, lambda2, lambda_inf, orthonormalize, project
from .models import IntervalPartition, ModelCollection
from .noise import NoiseSpec
from .selection import penalty, select

__version__ = "0.1.0"

__all__ = [
    "KAPPA", "IntervalPartition", "ModelCollection", "NoiseSpec", "Subspace",
    "bounds", "lambda2", "lambda_inf", "linalg", "models", "noise", "orthonormalize",
    "penalty", "project", "select", "selection", "simulate",
]
