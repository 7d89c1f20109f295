"""Taxonomy completion with probabilistic box embeddings."""

from .boxes import Box, Smoothing, center, cond_prob, intersection, volume
from .taxonomy import ABSENT, CandidatePosition, Taxonomy

__all__ = [
    "Box", "Smoothing", "center", "cond_prob", "intersection", "volume",
    "ABSENT", "CandidatePosition", "Taxonomy",
]

__version__ = "0.1.0"
