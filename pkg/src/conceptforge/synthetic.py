"""Deterministic synthetic ontologies and embeddings for scale testing.

The generator reproduces the production hierarchy's level counts (default
30 superordinates / 590 concepts / 1172 parts / 686 affordances) with
locality structure: a concept draws its affordances from a sliding window
around its own index, so nearby concepts overlap functionally and the
pairwise proximity scores spread over a wide range instead of collapsing.
"""

from __future__ import annotations

import numpy as np

from .embeddings import EmbeddingStore
from .ontology import Ontology, ontology_from_dict

PAPER_SCALE = {"n_super": 30, "n_concepts": 590, "n_parts": 1172, "n_affordances": 686}


def synthetic_ontology(
    n_super: int = 30,
    n_concepts: int = 590,
    n_parts: int = 1172,
    n_affordances: int = 686,
    seed: int = 0,
) -> Ontology:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 11])))
    supers = [{"id": f"super-{i:03d}", "name": f"superordinate {i:03d}"} for i in range(n_super)]
    affs = [{"id": f"aff-{i:04d}", "name": f"affordance {i:04d}"} for i in range(n_affordances)]

    def window_pick(center: int, k: int) -> list[int]:
        span = max(4, n_affordances // 40)
        lo = max(0, center - span)
        hi = min(n_affordances, center + span + 1)
        pool = np.arange(lo, hi)
        k = min(k, pool.size)
        return sorted(int(i) for i in rng.choice(pool, size=k, replace=False))

    parts = []
    for i in range(n_parts):
        center = int(round(i * (n_affordances - 1) / max(1, n_parts - 1)))
        # cover every affordance at least once via the leading slots
        chosen = {i} if i < n_affordances else set()
        chosen.update(window_pick(center, int(rng.integers(2, 5))))
        parts.append(
            {
                "id": f"part-{i:04d}",
                "name": f"part {i:04d}",
                "affordances": [f"aff-{j:04d}" for j in sorted(chosen)],
            }
        )

    concepts = []
    for i in range(n_concepts):
        center = int(round(i * (n_affordances - 1) / max(1, n_concepts - 1)))
        own = window_pick(center, int(rng.integers(3, 7)))
        # every part must be referenced by >= 1 concept; extra picks stay
        # local so neighboring concepts share part-level affordances too
        part_ids = {j for j in range(n_parts) if j % n_concepts == i}
        part_center = int(round(i * (n_parts - 1) / max(1, n_concepts - 1)))
        span = max(4, n_parts // 40)
        extra = int(rng.integers(1, 4))
        lo, hi = max(0, part_center - span), min(n_parts, part_center + span + 1)
        part_ids.update(int(j) for j in rng.integers(lo, hi, size=extra))
        concepts.append(
            {
                "id": f"concept-{i:04d}",
                "name": f"concept {i:04d}",
                "superordinate": f"super-{i % n_super:03d}",
                "parts": [f"part-{j:04d}" for j in sorted(part_ids)],
                "affordances": [f"aff-{j:04d}" for j in own],
            }
        )

    return ontology_from_dict(
        {
            "version": f"synthetic-{seed}",
            "superordinates": supers,
            "affordances": affs,
            "parts": parts,
            "concepts": concepts,
        }
    )


def synthetic_embeddings(names: list[str], dim: int = 32, seed: int = 0) -> EmbeddingStore:
    """Unit vectors with an index gradient, so name similarity also spreads."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 13])))
    n = len(names)
    base = rng.standard_normal(dim)
    drift = rng.standard_normal(dim)
    vectors = {}
    for i, name in enumerate(names):
        frac = i / max(1, n - 1)
        v = base + 2.0 * frac * drift + 0.8 * rng.standard_normal(dim)
        vectors[name] = v / np.linalg.norm(v)
    return EmbeddingStore(dim=dim, vectors=vectors)
