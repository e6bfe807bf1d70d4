"""Spectrum-uniform pair sampling, train/test splitting, curriculum staging.

Pairs are drawn uniformly across the observed proximity range: the range is
cut into equal-width bins and each bin contributes an equal share of the
draw. The three curriculum stages then partition the training pairs by
proximity rank: stage 1 holds the closest (highest-proximity) tertile and
stage 3 the most distant.

Every draw is a pure function of (inputs, seed). The generator is pinned —
PCG64 seeded through a SeedSequence of (seed, bin index), with selection by
partial Fisher-Yates over integer draws — and its name is recorded in the
sampling metadata so manifests replay across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientPairs
from .metrics import ProximityMatrix

GENERATOR_NAME = "pcg64-seedseq-fisher-yates"


@dataclass(frozen=True, order=True)
class AffordancePair:
    a: str
    b: str
    proximity: float = field(compare=False)

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"pair must be canonical (a < b), got ({self.a!r}, {self.b!r})")
        if not math.isfinite(self.proximity):
            raise ValueError(f"proximity must be finite, got {self.proximity}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.a, self.b)


def make_pair(a: str, b: str, proximity: float) -> AffordancePair:
    """Canonicalize id order before constructing the pair."""
    if a == b:
        raise ValueError("a pair needs two distinct affordances")
    lo, hi = sorted((a, b))
    return AffordancePair(lo, hi, proximity)


@dataclass(frozen=True)
class SamplePlan:
    n_train: int = 600
    n_test: int = 500
    n_bins: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_train < 0 or self.n_test < 0:
            raise ValueError("n_train and n_test must be >= 0")
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")


@dataclass
class CurriculumStage:
    index: int  # 1 = closest pairs, 3 = most distant
    pairs: list[AffordancePair]
    proximity_band: tuple[float, float]


def matrix_pairs(m: ProximityMatrix) -> list[AffordancePair]:
    """All scored pairs of a matrix in canonical (a, b) order."""
    return [AffordancePair(a, b, s) for a, b, s in m.entries()]


# ---------------------------------------------------------------------------
# seeded draws
# ---------------------------------------------------------------------------

def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def _seeded_permutation(items: Sequence, rng: np.random.Generator) -> list:
    """Fisher-Yates over rng.integers; avoids Generator.shuffle so the draw
    depends only on the PCG64 integer stream."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        out[i], out[j] = out[j], out[i]
    return out


def _binned_draw(
    candidates: Sequence[AffordancePair], n: int, n_bins: int, seed: int
) -> tuple[list[AffordancePair], dict]:
    """Equal-width binning over the observed range, equal per-bin quotas.

    Bins short of their quota borrow from the nearest non-empty bins; an
    oversubscribed draw is trimmed round-robin from the fullest bins. Raises
    InsufficientPairs only when the global candidate pool is too small.
    """
    pool = sorted(candidates)
    if len(pool) < n:
        raise InsufficientPairs(f"need {n} pairs, only {len(pool)} candidates")
    meta: dict = {"generator": GENERATOR_NAME, "bins": n_bins, "seed": seed, "fallbacks": []}
    if n == 0:
        meta["bin_counts"] = [0] * n_bins
        return [], meta

    lo = min(p.proximity for p in pool)
    hi = max(p.proximity for p in pool)
    width = (hi - lo) / n_bins
    meta["range"] = [lo, hi]

    bins: list[list[AffordancePair]] = [[] for _ in range(n_bins)]
    for p in pool:
        if width == 0.0:
            idx = 0
        else:
            idx = min(n_bins - 1, int((p.proximity - lo) / width))
        bins[idx].append(p)

    # Full seeded permutation per bin; a bin's draw is a prefix of it.
    perms = [_seeded_permutation(b, _rng(seed, i)) for i, b in enumerate(bins)]
    quota = math.ceil(n / n_bins)
    take = [min(quota, len(perm)) for perm in perms]

    # Borrow for bins that could not fill their quota.
    for i in range(n_bins):
        deficit = quota - take[i]
        while deficit > 0 and sum(take) < n:
            donors = [j for j in range(n_bins) if take[j] < len(perms[j])]
            if not donors:
                break
            j = min(donors, key=lambda j: (abs(j - i), take[j] - len(perms[j]), j))
            take[j] += 1
            deficit -= 1
            meta["fallbacks"].append({"for_bin": i, "from_bin": j})

    # Trim overdraw round-robin from the fullest bins.
    while sum(take) > n:
        j = max(range(n_bins), key=lambda j: (take[j], len(perms[j]), -j))
        take[j] -= 1

    if sum(take) < n:
        raise InsufficientPairs(f"could only draw {sum(take)} of {n} requested pairs")

    meta["bin_counts"] = list(take)
    drawn: list[AffordancePair] = []
    for perm, k in zip(perms, take):
        drawn.extend(perm[:k])
    return drawn, meta


def sample_uniform_spectrum(
    m: ProximityMatrix, plan: SamplePlan
) -> tuple[list[AffordancePair], dict]:
    """Draw plan.n_train pairs uniformly across the proximity spectrum."""
    return _binned_draw(matrix_pairs(m), plan.n_train, plan.n_bins, plan.seed)


def select_test(
    m: ProximityMatrix,
    exclude: Iterable[AffordancePair],
    plan: SamplePlan,
    random_mode: bool = False,
) -> tuple[list[AffordancePair], dict]:
    """Draw plan.n_test pairs disjoint from ``exclude``.

    Spectrum-uniform by default; ``random_mode`` draws uniformly over the
    remaining pairs instead (no binning).
    """
    excluded_keys = {p.key for p in exclude}
    candidates = [p for p in matrix_pairs(m) if p.key not in excluded_keys]
    if random_mode:
        if len(candidates) < plan.n_test:
            raise InsufficientPairs(
                f"need {plan.n_test} pairs, only {len(candidates)} candidates"
            )
        perm = _seeded_permutation(sorted(candidates), _rng(plan.seed, 0))
        meta = {"generator": GENERATOR_NAME, "bins": 0, "seed": plan.seed, "fallbacks": []}
        return perm[: plan.n_test], meta
    return _binned_draw(candidates, plan.n_test, plan.n_bins, plan.seed)


def split_curriculum(pairs: Sequence[AffordancePair]) -> list[CurriculumStage]:
    """Partition pairs into three stages by proximity rank.

    Sorted by proximity descending (ties by canonical pair id); boundaries
    at ranks ceil(n/3) and ceil(2n/3). Stage 1 is the closest tertile,
    stage 3 the most distant.
    """
    if not pairs:
        raise ValueError("pairs must be non-empty")
    ordered = sorted(pairs, key=lambda p: (-p.proximity, p.a, p.b))
    n = len(ordered)
    b1 = math.ceil(n / 3)
    b2 = math.ceil(2 * n / 3)
    chunks = [ordered[:b1], ordered[b1:b2], ordered[b2:]]
    stages = []
    for i, chunk in enumerate(chunks, start=1):
        if chunk:
            band = (min(p.proximity for p in chunk), max(p.proximity for p in chunk))
        else:
            band = (math.nan, math.nan)
        stages.append(CurriculumStage(index=i, pairs=chunk, proximity_band=band))
    return stages


def extremes(
    candidates: Sequence[AffordancePair], k: int
) -> tuple[list[AffordancePair], list[AffordancePair]]:
    """Top-k closest (highest proximity) and top-k most distant pairs."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if len(candidates) < k:
        raise InsufficientPairs(f"need {k} pairs, only {len(candidates)} candidates")
    closest = sorted(candidates, key=lambda p: (-p.proximity, p.a, p.b))[:k]
    farthest = sorted(candidates, key=lambda p: (p.proximity, p.a, p.b))[:k]
    return closest, farthest


# ---------------------------------------------------------------------------
# manifest records
# ---------------------------------------------------------------------------

def pair_records(
    pairs: Sequence[AffordancePair],
    split: str,
    plan: SamplePlan,
    stage_of: dict[tuple[str, str], int] | None = None,
) -> list[dict]:
    """Render pairs to the manifest record shape."""
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    records = []
    for p in pairs:
        records.append(
            {
                "a": p.a,
                "b": p.b,
                "proximity": p.proximity,
                "split": split,
                "stage": (stage_of or {}).get(p.key),
                "seed": plan.seed,
                "bins": plan.n_bins,
            }
        )
    return records


def pairs_from_records(records: Iterable[dict]) -> list[AffordancePair]:
    return [AffordancePair(r["a"], r["b"], float(r["proximity"])) for r in records]
