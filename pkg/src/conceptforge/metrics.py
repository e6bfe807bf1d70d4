"""Concept and affordance proximity over the ontology plus an embedding store.

Concept proximity combines functional relatedness (Jaccard overlap of the
concept-level and part-level affordance sets) with semantic similarity of
the concept-name embeddings:

    prox(ci, cj) = alpha * (J(A_ci, A_cj) + J(AP_ci, AP_cj)) + beta * Sim(e_ci, e_cj)

Affordance proximity averages concept proximity over the cross product of
the two affordances' associated concept sets. Both formulas grow with
similarity, so the quantity is named *proximity* throughout: higher means
closer, and "distant pair" downstream always means low proximity.

``build_proximity_matrix`` amortizes the all-pairs computation by building
the concept x concept matrix once and reducing it with membership-indicator
matrix products; the result is bit-identical for any worker count because
the work is split into fixed-size row chunks regardless of parallelism.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingStore
from .errors import CacheMismatch, EmptyConceptSet, MissingEmbedding, UnknownAffordance
from .ontology import Ontology

_ROW_CHUNK = 256  # fixed so results never depend on the worker count


def jaccard(x, y) -> float:
    """|x n y| / |x u y|; 0 when both sets are empty."""
    xs, ys = set(x), set(y)
    union = xs | ys
    if not union:
        return 0.0
    return len(xs & ys) / len(union)


@dataclass(frozen=True)
class DistanceConfig:
    alpha: float = 0.7
    beta: float = 0.3
    clamp_negative_sim: bool = True
    normalize: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ValueError("need alpha >= 0, beta >= 0, alpha + beta > 0")

    @property
    def max_score(self) -> float:
        """Upper bound of concept proximity when similarity is clamped to [0,1]."""
        return 2 * self.alpha + self.beta

    def hash(self) -> str:
        payload = json.dumps(
            {
                "alpha": self.alpha,
                "beta": self.beta,
                "clamp_negative_sim": self.clamp_negative_sim,
                "normalize": self.normalize,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _similarity(cfg: DistanceConfig, cos: float) -> float:
    if cfg.clamp_negative_sim:
        return min(1.0, max(0.0, cos))
    return cos


def concept_proximity(
    o: Ontology, store: EmbeddingStore, cfg: DistanceConfig, ci: str, cj: str
) -> float:
    """Pairwise concept proximity; symmetric in (ci, cj)."""
    a_i, a_j = o.concept_affordances(ci), o.concept_affordances(cj)
    p_i, p_j = o.part_affordance_union(ci), o.part_affordance_union(cj)
    sim = _similarity(cfg, store.cosine(o.concepts[ci].name, o.concepts[cj].name))
    score = cfg.alpha * (jaccard(a_i, a_j) + jaccard(p_i, p_j)) + cfg.beta * sim
    if cfg.normalize:
        score /= cfg.max_score
    return score


def affordance_proximity(
    o: Ontology, store: EmbeddingStore, cfg: DistanceConfig, ai: str, aj: str
) -> float:
    """Mean concept proximity over C_ai x C_aj (the full cross product)."""
    if ai == aj:
        raise ValueError("affordance pairs are unordered and distinct; got ai == aj")
    c_i = o.concepts_with_affordance(ai)
    c_j = o.concepts_with_affordance(aj)
    if not c_i:
        raise EmptyConceptSet(f"affordance {ai!r} has no associated concepts")
    if not c_j:
        raise EmptyConceptSet(f"affordance {aj!r} has no associated concepts")
    total = 0.0
    for cp in c_i:
        for cq in c_j:
            total += concept_proximity(o, store, cfg, cp, cq)
    return total / (len(c_i) * len(c_j))


@dataclass
class ProximityMatrix:
    """All-pairs affordance proximity, plus the affordances it had to skip."""

    affordance_ids: list[str]
    scores: np.ndarray  # dense symmetric, diagonal unused
    config_hash: str
    excluded: list[str]  # affordances with empty concept sets

    def __post_init__(self):
        n = len(self.affordance_ids)
        if self.scores.shape != (n, n):
            raise ValueError(f"scores shape {self.scores.shape} != ({n}, {n})")
        self._index = {a: i for i, a in enumerate(self.affordance_ids)}

    @property
    def pair_count(self) -> int:
        n = len(self.affordance_ids)
        return n * (n - 1) // 2

    def score(self, ai: str, aj: str) -> float:
        if ai == aj:
            raise ValueError("diagonal is undefined: pairs are distinct affordances")
        for a in (ai, aj):
            if a not in self._index:
                raise UnknownAffordance(f"{a!r} not in matrix (excluded or unknown)")
        return float(self.scores[self._index[ai], self._index[aj]])

    def entries(self) -> list[tuple[str, str, float]]:
        """Every unordered pair as (a, b, score) with a < b, in id order."""
        order = sorted(range(len(self.affordance_ids)), key=lambda i: self.affordance_ids[i])
        out = []
        for pos, i in enumerate(order):
            for j in order[pos + 1 :]:
                out.append(
                    (self.affordance_ids[i], self.affordance_ids[j], float(self.scores[i, j]))
                )
        return out

    def values(self) -> np.ndarray:
        """Upper-triangle scores as a flat array (matrix order)."""
        iu = np.triu_indices(len(self.affordance_ids), k=1)
        return self.scores[iu]


def build_proximity_matrix(
    o: Ontology,
    store: EmbeddingStore,
    cfg: DistanceConfig,
    parallelism: int = 1,
) -> ProximityMatrix:
    """Score every unordered affordance pair.

    Precomputes the concept x concept proximity matrix once, then reduces it
    per affordance pair as mean over the membership cross product. Raises
    MissingEmbedding if any concept name lacks a vector. Affordances with no
    associated concept are excluded from the matrix and listed in
    ``excluded`` rather than failing the build.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    concept_ids = sorted(o.concepts)
    names = [o.concepts[c].name for c in concept_ids]
    missing = store.missing_terms(names)
    if missing:
        raise MissingEmbedding(f"embedding store lacks terms: {missing[:5]}")

    m = concept_matrix(o, store, cfg, concept_ids, parallelism)

    all_affs = sorted(o.affordances)
    membership = np.zeros((len(all_affs), len(concept_ids)), dtype=np.float64)
    aff_index = {a: k for k, a in enumerate(all_affs)}
    for col, cid in enumerate(concept_ids):
        for aid in o.all_affordances_of(cid):
            membership[aff_index[aid], col] = 1.0

    counts = membership.sum(axis=1)
    included = [a for a in all_affs if counts[aff_index[a]] > 0]
    excluded = [a for a in all_affs if counts[aff_index[a]] == 0]
    b = membership[[aff_index[a] for a in included], :]
    cnt = counts[[aff_index[a] for a in included]]

    bm = _chunked_matmul(b, m, parallelism)
    s = _chunked_matmul(bm, b.T, parallelism)
    scores = s / np.outer(cnt, cnt)
    # float summation order differs between (i,j) and (j,i); mirror the upper
    # triangle so symmetry holds exactly
    upper = np.triu(scores, k=1)
    scores = upper + upper.T
    np.fill_diagonal(scores, 0.0)
    return ProximityMatrix(
        affordance_ids=included,
        scores=scores,
        config_hash=cfg.hash(),
        excluded=excluded,
    )


def concept_matrix(
    o: Ontology,
    store: EmbeddingStore,
    cfg: DistanceConfig,
    concept_ids: Sequence[str] | None = None,
    parallelism: int = 1,
) -> np.ndarray:
    """Dense concept x concept proximity matrix (diagonal included)."""
    if concept_ids is None:
        concept_ids = sorted(o.concepts)
    all_affs = sorted(o.affordances)
    aff_index = {a: k for k, a in enumerate(all_affs)}
    n_c, n_a = len(concept_ids), len(all_affs)

    xc = np.zeros((n_c, n_a), dtype=np.float64)
    xp = np.zeros((n_c, n_a), dtype=np.float64)
    for row, cid in enumerate(concept_ids):
        for aid in o.concept_affordances(cid):
            xc[row, aff_index[aid]] = 1.0
        for aid in o.part_affordance_union(cid):
            xp[row, aff_index[aid]] = 1.0

    emb = np.stack([store.get(o.concepts[c].name) for c in concept_ids])

    jc = _jaccard_matrix(xc, parallelism)
    jp = _jaccard_matrix(xp, parallelism)
    cos = _chunked_matmul(emb, emb.T, parallelism)
    if cfg.clamp_negative_sim:
        np.clip(cos, 0.0, 1.0, out=cos)
    m = cfg.alpha * (jc + jp) + cfg.beta * cos
    if cfg.normalize:
        m /= cfg.max_score
    return m


def _jaccard_matrix(x: np.ndarray, parallelism: int) -> np.ndarray:
    sizes = x.sum(axis=1)
    inter = _chunked_matmul(x, x.T, parallelism)
    union = sizes[:, None] + sizes[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        j = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return j


def _chunked_matmul(a: np.ndarray, b: np.ndarray, parallelism: int) -> np.ndarray:
    """a @ b over fixed-size row chunks; scheduling cannot change the result."""
    out = np.empty((a.shape[0], b.shape[1]), dtype=np.float64)
    chunks = [(lo, min(lo + _ROW_CHUNK, a.shape[0])) for lo in range(0, a.shape[0], _ROW_CHUNK)]

    def fill(span):
        lo, hi = span
        out[lo:hi] = a[lo:hi] @ b

    if parallelism == 1 or len(chunks) <= 1:
        for span in chunks:
            fill(span)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(fill, chunks))
    return out


# ---------------------------------------------------------------------------
# cache file
# ---------------------------------------------------------------------------

def save_matrix(m: ProximityMatrix, path) -> None:
    """Persist ids + packed upper-triangular scores + config hash."""
    iu = np.triu_indices(len(m.affordance_ids), k=1)
    np.savez_compressed(
        path,
        affordance_ids=np.asarray(m.affordance_ids, dtype=np.str_),
        tri=m.scores[iu],
        config_hash=np.asarray(m.config_hash),
        excluded=np.asarray(m.excluded, dtype=np.str_),
    )


def load_matrix(path, cfg: DistanceConfig) -> ProximityMatrix:
    """Load a cache, refusing one built under a different DistanceConfig."""
    with np.load(path, allow_pickle=False) as data:
        stored_hash = str(data["config_hash"])
        if stored_hash != cfg.hash():
            raise CacheMismatch(
                f"cache built with config {stored_hash[:12]}..., active is {cfg.hash()[:12]}..."
            )
        ids = [str(a) for a in data["affordance_ids"]]
        tri = data["tri"]
        excluded = [str(a) for a in data["excluded"]]
    n = len(ids)
    scores = np.zeros((n, n), dtype=np.float64)
    iu = np.triu_indices(n, k=1)
    scores[iu] = tri
    scores.T[iu] = tri
    return ProximityMatrix(
        affordance_ids=ids, scores=scores, config_hash=stored_hash, excluded=excluded
    )


def distribution_summary(m: ProximityMatrix) -> dict:
    """Min/max/deciles of the pairwise scores (for reports and diagnostics)."""
    vals = m.values()
    if vals.size == 0:
        return {"pairs": 0}
    deciles = {f"p{q}": float(np.percentile(vals, q)) for q in range(0, 101, 10)}
    return {
        "pairs": int(m.pair_count),
        "min": float(vals.min()),
        "max": float(vals.max()),
        "mean": float(vals.mean()),
        "deciles": deciles,
        "excluded": list(m.excluded),
    }
