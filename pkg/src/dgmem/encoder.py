"""Frozen feature encoder and semantic score for tile patches.

A seeded random projection of the one-hot patch stands in for a pretrained
visual backbone; the semantic score simply sums per-landmark confidences,
filtering featureless views.
"""
from __future__ import annotations

import numpy as np

from . import gridworld


class PatchEncoder:
    """Frozen random projection of one-hot tile patches to unit-norm vectors.

    The projection matrix is sampled once from a seeded Gaussian and never
    updated; instances are read-only after construction.
    """

    def __init__(self, feature_dim: int = 128, patch_size: int = 5,
                 n_tile_kinds: int = gridworld.N_TILE_KINDS, seed: int = 0):
        self.feature_dim = int(feature_dim)
        self.patch_size = int(patch_size)
        self.n_tile_kinds = int(n_tile_kinds)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        n_in = patch_size * patch_size * n_tile_kinds
        proj = rng.standard_normal((n_in, feature_dim)) / np.sqrt(n_in)
        # Indexed as [cell position, tile kind, feature] so encoding is a gather.
        self._proj = proj.reshape(patch_size * patch_size, n_tile_kinds,
                                  feature_dim)
        self._proj.setflags(write=False)

    def encode(self, patch: np.ndarray) -> np.ndarray:
        patch = np.asarray(patch)
        if patch.shape != (self.patch_size, self.patch_size):
            raise ValueError(
                f"patch shape {patch.shape} != "
                f"({self.patch_size}, {self.patch_size})")
        flat = patch.reshape(-1).astype(np.intp)
        vec = self._proj[np.arange(flat.size), flat].sum(axis=0)
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            raise ValueError("degenerate patch encoding")
        return vec / norm


def semantic_score(patch: np.ndarray, confidence: float = 1.0) -> float:
    """Sum of per-landmark confidences over landmark tiles in the patch."""
    patch = np.asarray(patch)
    return float(np.count_nonzero(patch >= gridworld.FIRST_LANDMARK) * confidence)
