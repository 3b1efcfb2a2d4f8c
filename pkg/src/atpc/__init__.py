"""Pronunciation-distance matrices between text symbols, learned from aligned
speech embeddings, and their use for hotword biasing of ASR output."""
from .errors import AtpcError, ParseError
from .distance import VectorMetric, DtwResult, vector_distance, dtw, dtw_cost_only
from .matrix import (AtpcMatrix, EmbeddingSet, build_embedding_set, build_matrix, load_matrix,
                     normalize, pair_distance, save_matrix)

__version__ = "0.1.0"
