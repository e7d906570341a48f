"""Procrustes-based measures and embeddings for manifold learning.

The measures score how well an embedding ``Y`` preserves the local geometry
of a sample ``X`` by fitting each neighborhood with a Procrustes rotation.
Two embedding algorithms minimize them: greedy Procrustes (GP) and
Procrustes subspaces alignment (PSA). An iterative refinement step improves
any embedding.
"""
from .embed_gp import EmbeddingResult, embed_gp
from .embed_psa import SaSchedule, embed_psa
from .kernels import BACKEND
from .measures import (MeasureReport, lower_bound_N, measure_R, measure_RC, measure_report,
                       measure_RN, measure_RPCA)
from .neighborhoods import NeighborhoodGraph, eps_graph, knn_graph
from .procrustes import ProcrustesFit, fit, fit_conformal, statistic
from .refine import RefineTrace, refine

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "EmbeddingResult", "MeasureReport", "NeighborhoodGraph", "ProcrustesFit",
    "RefineTrace", "SaSchedule", "embed_gp", "embed_psa", "eps_graph", "fit", "fit_conformal",
    "knn_graph", "lower_bound_N", "measure_R", "measure_RC", "measure_RN", "measure_RPCA",
    "measure_report", "refine", "statistic",
]
